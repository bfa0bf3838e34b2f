//! Three-body reduction: Jacobi coordinates, projection to the shape
//! sphere, syzygy extraction, reduced states, and the connection graph.
//!
//! Conventions (they fix the axes of the sphere and are recorded in output
//! metadata):
//!
//! * Jacobi map: Z1 = sqrt(m1 m2 / (m1 + m2)) (q2 - q1),
//!   Z2 = sqrt(m3 (m1 + m2) / M) (q3 - cm12). This makes q -> (Z1, Z2) a
//!   mass-metric isometry onto C^2 with the standard Hermitian metric.
//! * Projection: w = (2 Re(Z1 conj Z2), 2 Im(Z1 conj Z2), |Z1|^2 - |Z2|^2)
//!   normalized by |Z1|^2 + |Z2|^2; invariant under the diagonal rotation
//!   (Z1, Z2) -> (u Z1, u Z2).
//! * Collinear shapes land on the great circle {w2 = 0}: on unit-size shapes
//!   w2 = -2 sqrt(mu1 mu2) * collinearity(q) exactly, with mu1, mu2 the two
//!   Jacobi reduced masses. Positively oriented triangles have w2 < 0.

use crate::algebra::{self, C64};
use crate::central::{self, CcTag, Orientation};
use crate::error::{Error, Result};
use crate::newton::{Configuration, MassSystem};
#[cfg(test)]
use crate::newton::Velocity;
use crate::ode::{EventDirection, EventSpec, Trajectory};
use crate::{blowup, flows};

/// Event label used for collinearity crossings.
pub const SYZYGY_EVENT_LABEL: &str = "syzygy";
/// A trajectory step on which |collinearity|/r^2 stays below this bound is
/// treated as identically collinear.
pub const COLLINEARITY_TOL: f64 = 1e-9;

/// Complex Jacobi coordinates of a centered three-body configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JacobiCoordinates {
    pub z1: C64,
    pub z2: C64,
}

/// A point of the shape sphere (unit vector in R^3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapePoint {
    pub w: [f64; 3],
}

impl ShapePoint {
    pub fn dist(&self, other: &ShapePoint) -> f64 {
        let d: f64 = self
            .w
            .iter()
            .zip(&other.w)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        d.sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.w.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// One collinearity crossing: when, which body sat in the middle (1-based),
/// and the crossing direction of the collinearity function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyzygyEvent {
    pub t: f64,
    pub symbol: usize,
    pub sign: i8,
}

/// Either a transversal syzygy list or the degenerate marker for orbits that
/// never leave the collinear locus (e.g. collinear homothetic motions).
#[derive(Clone, Debug, PartialEq)]
pub enum SyzygyOutcome {
    Events(Vec<SyzygyEvent>),
    IdenticallyCollinear,
}

/// Rotation-reduced state of a blown-up point: size, shape-sphere point and
/// tangent velocity, plus the pair (nu, J~) coordinatizing the remaining
/// plane. K_sh equals |shape_velocity|^2 / 8 (the projection doubles
/// horizontal lengths onto the unit sphere).
#[derive(Clone, Debug)]
pub struct ReducedState {
    pub r: f64,
    pub shape: ShapePoint,
    pub shape_velocity: [f64; 3],
    pub nu: f64,
    pub j_tilde: f64,
}

fn jacobi_scales(sys: &MassSystem) -> (f64, f64) {
    let m = sys.masses();
    let m12 = m[0] + m[1];
    let mu1 = (m[0] * m[1] / m12).sqrt();
    let mu2 = (m[2] * m12 / sys.total_mass()).sqrt();
    (mu1, mu2)
}

/// The raw linear map behind `jacobi_coordinates`; also valid on velocity
/// vectors in the center-of-mass space.
pub(crate) fn jacobi_linear(sys: &MassSystem, v: &[C64]) -> JacobiCoordinates {
    let m = sys.masses();
    let (mu1, mu2) = jacobi_scales(sys);
    let cm12 = (m[0] * v[0] + m[1] * v[1]) / (m[0] + m[1]);
    JacobiCoordinates { z1: mu1 * (v[1] - v[0]), z2: mu2 * (v[2] - cm12) }
}

/// Mass-metric isometry onto C^2 for centered three-body configurations.
pub fn jacobi_coordinates(sys: &MassSystem, q: &Configuration) -> Result<JacobiCoordinates> {
    if sys.n() != 3 || q.n() != 3 {
        return Err(Error::Unsupported(format!(
            "Jacobi coordinates need exactly 3 bodies, got {}",
            q.n()
        )));
    }
    let offset = sys.center_offset(&q.points);
    if offset > 1e-10 {
        return Err(Error::NotCentered { offset });
    }
    Ok(jacobi_linear(sys, &q.points))
}

/// Reconstruct the centered configuration from its Jacobi coordinates.
pub fn jacobi_inverse(sys: &MassSystem, jc: &JacobiCoordinates) -> Result<Configuration> {
    if sys.n() != 3 {
        return Err(Error::Unsupported("Jacobi inverse needs 3 bodies".into()));
    }
    let m = sys.masses();
    let m12 = m[0] + m[1];
    let (mu1, mu2) = jacobi_scales(sys);
    let q3 = (m12 / sys.total_mass()) * jc.z2 / mu2;
    let cm12 = -m[2] * q3 / m12;
    let diff = jc.z1 / mu1;
    // Solve m1 q1 + m2 q2 = m12 cm12 with q2 - q1 = diff.
    let q1 = cm12 - m[1] / m12 * diff;
    let q2 = cm12 + m[0] / m12 * diff;
    Ok(Configuration::new(vec![q1, q2, q3]))
}

/// Project Jacobi coordinates to the shape sphere.
pub fn hopf_project(jc: &JacobiCoordinates) -> Result<ShapePoint> {
    let n = jc.z1.norm_sqr() + jc.z2.norm_sqr();
    if n <= 0.0 || !n.is_finite() {
        return Err(Error::DegenerateSize);
    }
    let a = jc.z1 * jc.z2.conj();
    Ok(ShapePoint {
        w: [2.0 * a.re / n, 2.0 * a.im / n, (jc.z1.norm_sqr() - jc.z2.norm_sqr()) / n],
    })
}

/// Shape-sphere point of a centered configuration.
pub fn shape_of(sys: &MassSystem, q: &Configuration) -> Result<ShapePoint> {
    hopf_project(&jacobi_coordinates(sys, q)?)
}

/// Differential of the projection at `z` applied to `zdot`.
fn hopf_differential(z: &JacobiCoordinates, zdot: &JacobiCoordinates) -> [f64; 3] {
    let n = z.z1.norm_sqr() + z.z2.norm_sqr();
    let a = z.z1 * z.z2.conj();
    let da = zdot.z1 * z.z2.conj() + z.z1 * zdot.z2.conj();
    let d1 = 2.0 * (z.z1.conj() * zdot.z1).re;
    let d2 = 2.0 * (z.z2.conj() * zdot.z2).re;
    let dn = d1 + d2;
    let p = [2.0 * a.re, 2.0 * a.im, z.z1.norm_sqr() - z.z2.norm_sqr()];
    let dp = [2.0 * da.re, 2.0 * da.im, d1 - d2];
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = dp[i] / n - p[i] * dn / (n * n);
    }
    out
}

/// Signed double area (q2 - q1) ^ (q3 - q1): zero exactly on collinear
/// triangles, sign giving the orientation.
pub fn collinearity(q: &Configuration) -> f64 {
    assert_eq!(q.n(), 3, "collinearity is defined for three bodies");
    let d1 = q.points[1] - q.points[0];
    let d2 = q.points[2] - q.points[0];
    (d1.conj() * d2).im
}

/// Scale-invariant collinearity: the signed double area divided by the
/// squared mass-metric size. Zero at total collision by convention.
pub fn normalized_collinearity(sys: &MassSystem, q: &Configuration) -> f64 {
    let r2 = sys.inner(&q.points, &q.points);
    if r2 <= 0.0 {
        return 0.0;
    }
    collinearity(q) / r2
}

/// Collinearity event for Newtonian trajectories (non-terminal, both
/// directions), on the scale-invariant collinearity.
pub fn syzygy_event(sys: &MassSystem) -> EventSpec {
    let sys = sys.clone();
    EventSpec::new(SYZYGY_EVENT_LABEL, EventDirection::Any, false, move |_t, state: &[f64]| {
        let (q, _) = flows::unpack_newtonian(state);
        normalized_collinearity(&sys, &q)
    })
}

/// Extract the syzygy sequence from a Newtonian three-body trajectory whose
/// integration registered [`syzygy_event`]. Each crossing is labeled by the
/// body in the middle, found by projecting onto the principal axis of the
/// configuration and taking the median.
pub fn syzygy_sequence(sys: &MassSystem, traj: &Trajectory) -> Result<SyzygyOutcome> {
    if sys.n() != 3 {
        return Err(Error::Unsupported("syzygy extraction needs 3 bodies".into()));
    }
    // A whole step inside the collinear locus means the orbit is collinear,
    // and crossings are meaningless.
    for seg in &traj.segments {
        let degenerate = [0.0, 0.5, 1.0].iter().all(|&theta| {
            let (q, _) = flows::unpack_newtonian(&seg.eval(theta));
            normalized_collinearity(sys, &q).abs() < COLLINEARITY_TOL
        });
        if degenerate {
            return Ok(SyzygyOutcome::IdenticallyCollinear);
        }
    }
    let mut events = Vec::new();
    for rec in &traj.events {
        if rec.label != SYZYGY_EVENT_LABEL {
            continue;
        }
        let (q, _) = flows::unpack_newtonian(&rec.state);
        events.push(SyzygyEvent {
            t: rec.t,
            symbol: central::middle_body(sys, &q.points),
            sign: if rec.increasing { 1 } else { -1 },
        });
    }
    Ok(SyzygyOutcome::Events(events))
}

/// Rotation-reduced form of a blown-up state.
pub fn reduced_state(sys: &MassSystem, state: &blowup::BlownUpState) -> Result<ReducedState> {
    if sys.n() != 3 {
        return Err(Error::Unsupported("reduction needs 3 bodies".into()));
    }
    let inv = blowup::scale_invariants(sys, state, crate::newton::DEFAULT_EPS_COLL)?;
    let z = jacobi_coordinates(sys, &state.s)?;
    let shape = hopf_project(&z)?;
    let zdot = jacobi_linear(sys, &inv.y_hor.vectors);
    let shape_velocity = hopf_differential(&z, &zdot);
    Ok(ReducedState { r: state.r, shape, shape_velocity, nu: inv.nu, j_tilde: inv.j_tilde })
}

/// One edge of the connection graph: the arc of an isosceles great circle
/// from a Lagrange vertex to its Euler point.
#[derive(Clone, Debug)]
pub struct GraphEdge {
    pub lagrange: Orientation,
    /// 1-based index of the Euler point the arc ends at.
    pub euler_middle: usize,
    pub samples: Vec<[f64; 3]>,
}

/// The five marked vertices and six arcs on the shape sphere.
#[derive(Clone, Debug)]
pub struct ConnectionGraph {
    pub l_plus: ShapePoint,
    pub l_minus: ShapePoint,
    pub euler: [ShapePoint; 3],
    pub edges: Vec<GraphEdge>,
}

/// Shapes with body `mid0` (0-based) equidistant from the other two, at
/// family parameter phi: the two outer bodies sit at (-+ sin phi, 0) and the
/// apex at (0, cos phi). phi = pi/6 and 5 pi/6 are the equilateral members,
/// phi = pi/2 the collinear one.
fn isosceles_shape(sys: &MassSystem, mid0: usize, phi: f64) -> Result<Configuration> {
    let outer: Vec<usize> = (0..3).filter(|&i| i != mid0).collect();
    let mut pts = vec![algebra::ZERO; 3];
    pts[outer[0]] = C64::new(-phi.sin(), 0.0);
    pts[outer[1]] = C64::new(phi.sin(), 0.0);
    pts[mid0] = C64::new(0.0, phi.cos());
    let centered = crate::newton::center_configuration(sys, &Configuration::new(pts))?;
    let norm = sys.norm(&centered.points);
    Ok(centered.scaled(1.0 / norm))
}

/// Build the concrete connection graph for three equal masses: vertices
/// L+, L-, E1, E2, E3 and, for each Euler point, the two arcs joining it to
/// the Lagrange vertices along its isosceles great circle.
pub fn connection_graph(sys: &MassSystem) -> Result<ConnectionGraph> {
    if sys.n() != 3 {
        return Err(Error::Unsupported("the connection graph needs 3 bodies".into()));
    }
    if !sys.is_equal_mass() {
        return Err(Error::Unsupported(
            "isosceles circles are invariant only for equal masses".into(),
        ));
    }
    let l_plus_cc = central::lagrange_configuration(sys, Orientation::Positive)?;
    let l_minus_cc = central::lagrange_configuration(sys, Orientation::Negative)?;
    let l_plus = shape_of(sys, &l_plus_cc.s_cc)?;
    let l_minus = shape_of(sys, &l_minus_cc.s_cc)?;
    let mut euler = [ShapePoint { w: [0.0; 3] }; 3];
    for mid in 1..=3 {
        let cc = central::euler_configuration(sys, mid)?;
        match cc.tag {
            CcTag::Euler { middle } if middle == mid => {}
            other => {
                return Err(Error::NumericalFailure(format!(
                    "expected E{mid}, classified {other:?}"
                )))
            }
        }
        euler[mid - 1] = shape_of(sys, &cc.s_cc)?;
    }

    let n_arc = 65;
    let (phi_lo, phi_mid, phi_hi) =
        (std::f64::consts::FRAC_PI_6, std::f64::consts::FRAC_PI_2, 5.0 * std::f64::consts::FRAC_PI_6);
    let mut edges = Vec::with_capacity(6);
    for mid in 1..=3 {
        for (phi_l, _dir) in [(phi_lo, 1.0), (phi_hi, -1.0)] {
            let mut samples = Vec::with_capacity(n_arc);
            for k in 0..n_arc {
                let phi = phi_l + (phi_mid - phi_l) * k as f64 / (n_arc - 1) as f64;
                let s = isosceles_shape(sys, mid - 1, phi)?;
                samples.push(shape_of(sys, &s)?.w);
            }
            let start = ShapePoint { w: samples[0] };
            let lagrange = if start.dist(&l_plus) <= 1e-8 {
                Orientation::Positive
            } else if start.dist(&l_minus) <= 1e-8 {
                Orientation::Negative
            } else {
                return Err(Error::NumericalFailure(format!(
                    "arc endpoint is {:.2e} from L+ and {:.2e} from L-",
                    start.dist(&l_plus),
                    start.dist(&l_minus)
                )));
            };
            edges.push(GraphEdge { lagrange, euler_middle: mid, samples });
        }
    }
    Ok(ConnectionGraph { l_plus, l_minus, euler, edges })
}

/// Nearest sampled edge point to an arbitrary sphere point: (edge index,
/// point, Euclidean distance). Total away from nothing; the three binary
/// collision points simply project like any other point.
pub fn nearest_edge_point(graph: &ConnectionGraph, w: &[f64; 3]) -> (usize, [f64; 3], f64) {
    let mut best = (0usize, graph.edges[0].samples[0], f64::INFINITY);
    for (ei, edge) in graph.edges.iter().enumerate() {
        for p in &edge.samples {
            let d: f64 = p
                .iter()
                .zip(w)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if d < best.2 {
                best = (ei, *p, d);
            }
        }
    }
    best
}
