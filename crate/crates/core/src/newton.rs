//! Mass-metric geometry of the planar N-body problem.
//!
//! Positions and velocities hold one complex number per body, identifying the
//! plane with the complex line. The masses define the inner product
//! `<a, b> = sum m_a a_a . b_a`, and the gradient is taken in that metric,
//! `(grad f)_a = (1/m_a) df/dq_a`, so Newton's equations read `q'' = grad U(q)`
//! with `U = sum_{a<b} m_a m_b / r_ab` (G = 1 throughout).

use serde::Serialize;

use crate::algebra::{self, C64};
use crate::error::{Error, Result};

/// Default cutoff below which a pairwise separation counts as a collision
/// singularity (length units).
pub const DEFAULT_EPS_COLL: f64 = 1e-8;

/// Relative tolerance of the center-of-mass check: a configuration is
/// centered when |sum m_a q_a| <= 1e-12 * (sum m_a) * max |q_a|.
pub const CENTERED_REL_TOL: f64 = 1e-12;

/// Body count and positive masses, G = 1.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MassSystem {
    masses: Vec<f64>,
}

impl MassSystem {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.len() < 2 {
            return Err(Error::TooFewBodies(masses.len()));
        }
        for (i, &m) in masses.iter().enumerate() {
            if !m.is_finite() || m <= 0.0 {
                return Err(Error::NonPositiveMass { index: i + 1, value: m });
            }
        }
        Ok(Self { masses })
    }

    /// n equal unit masses.
    pub fn equal(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    pub fn n(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// True when all masses agree to one part in 1e-12.
    pub fn is_equal_mass(&self) -> bool {
        let m0 = self.masses[0];
        self.masses.iter().all(|m| (m - m0).abs() <= 1e-12 * m0)
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got == self.n() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.n(), got })
        }
    }

    /// Mass inner product of two configuration-space vectors.
    pub fn mass_inner(&self, a: &[C64], b: &[C64]) -> Result<f64> {
        self.check_dim(a.len())?;
        self.check_dim(b.len())?;
        Ok(algebra::mass_dot(&self.masses, a, b))
    }

    /// Mass-metric norm. Dimensions are the caller's responsibility.
    pub fn norm(&self, a: &[C64]) -> f64 {
        debug_assert_eq!(a.len(), self.n());
        algebra::mass_norm(&self.masses, a)
    }

    pub(crate) fn inner(&self, a: &[C64], b: &[C64]) -> f64 {
        algebra::mass_dot(&self.masses, a, b)
    }

    pub(crate) fn wedge(&self, a: &[C64], b: &[C64]) -> f64 {
        algebra::mass_wedge(&self.masses, a, b)
    }

    /// Mass-weighted mean of a set of planar points.
    pub fn barycenter(&self, points: &[C64]) -> C64 {
        let s: C64 = self
            .masses
            .iter()
            .zip(points)
            .map(|(m, q)| m * q)
            .sum();
        s / self.total_mass()
    }

    /// |sum m_a q_a| relative to (sum m_a) * max |q_a|; zero for the origin.
    pub fn center_offset(&self, points: &[C64]) -> f64 {
        let s: C64 = self.masses.iter().zip(points).map(|(m, q)| m * q).sum();
        let scale = self.total_mass() * points.iter().map(|q| q.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            0.0
        } else {
            s.norm() / scale
        }
    }

    pub fn is_centered(&self, points: &[C64]) -> bool {
        self.center_offset(points) <= CENTERED_REL_TOL
    }
}

/// Positions of the bodies: one planar point per body.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    pub points: Vec<C64>,
}

impl Configuration {
    pub fn new(points: Vec<C64>) -> Self {
        Self { points }
    }

    pub fn from_xy(rows: &[[f64; 2]]) -> Self {
        Self { points: rows.iter().map(|r| C64::new(r[0], r[1])).collect() }
    }

    pub fn zeros(n: usize) -> Self {
        Self { points: vec![algebra::ZERO; n] }
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { points: algebra::scale(c, &self.points) }
    }

    /// Rotate every body by the unit complex number `u`.
    pub fn rotated(&self, u: C64) -> Self {
        Self { points: algebra::rotate(u, &self.points) }
    }
}

/// Velocities (and velocity-shaped vectors such as metric gradients).
#[derive(Clone, Debug, PartialEq)]
pub struct Velocity {
    pub vectors: Vec<C64>,
}

impl Velocity {
    pub fn new(vectors: Vec<C64>) -> Self {
        Self { vectors }
    }

    pub fn from_xy(rows: &[[f64; 2]]) -> Self {
        Self { vectors: rows.iter().map(|r| C64::new(r[0], r[1])).collect() }
    }

    pub fn zeros(n: usize) -> Self {
        Self { vectors: vec![algebra::ZERO; n] }
    }

    pub fn n(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_finite(&self) -> bool {
        self.vectors.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { vectors: algebra::scale(c, &self.vectors) }
    }

    pub fn rotated(&self, u: C64) -> Self {
        Self { vectors: algebra::rotate(u, &self.vectors) }
    }
}

/// Energies and momenta of a state: H = K - U, P = sum m_a v_a,
/// J = sum m_a q_a ^ v_a (scalar wedge; the problem is planar).
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyMomenta {
    pub kinetic: f64,
    pub potential: f64,
    pub total: f64,
    pub linear_momentum: C64,
    pub angular_momentum: f64,
}

/// Shift positions and velocities into the center-of-mass frame.
/// Idempotent; translation-invariant in q and Galilei-invariant in v.
pub fn to_center_of_mass(
    sys: &MassSystem,
    q: &Configuration,
    v: &Velocity,
) -> Result<(Configuration, Velocity)> {
    sys.check_dim(q.n())?;
    sys.check_dim(v.n())?;
    let qc = sys.barycenter(&q.points);
    let vc = sys.barycenter(&v.vectors);
    Ok((
        Configuration::new(q.points.iter().map(|p| p - qc).collect()),
        Velocity::new(v.vectors.iter().map(|p| p - vc).collect()),
    ))
}

/// Center positions only.
pub fn center_configuration(sys: &MassSystem, q: &Configuration) -> Result<Configuration> {
    sys.check_dim(q.n())?;
    let qc = sys.barycenter(&q.points);
    Ok(Configuration::new(q.points.iter().map(|p| p - qc).collect()))
}

/// Size r = sqrt(<q, q>) of a centered configuration; r = 0 is total
/// collision. Errs when the input is not in the center-of-mass frame.
pub fn size(sys: &MassSystem, q: &Configuration) -> Result<f64> {
    sys.check_dim(q.n())?;
    let offset = sys.center_offset(&q.points);
    if offset > CENTERED_REL_TOL {
        return Err(Error::NotCentered { offset });
    }
    Ok(sys.norm(&q.points))
}

/// U(q) = sum_{a<b} m_a m_b / r_ab together with its mass-metric gradient,
/// (grad U)_a = sum_{b != a} m_b (q_b - q_a) / r_ab^3.
pub fn potential_and_gradient(
    sys: &MassSystem,
    q: &Configuration,
    eps_coll: f64,
) -> Result<(f64, Velocity)> {
    sys.check_dim(q.n())?;
    let m = sys.masses();
    let pts = &q.points;
    let n = pts.len();
    let mut u = 0.0;
    let mut grad = vec![algebra::ZERO; n];
    for a in 0..n {
        for b in a + 1..n {
            let d = pts[b] - pts[a];
            let r = d.norm();
            if r <= eps_coll {
                return Err(Error::CollisionSingularity { a: a + 1, b: b + 1, separation: r });
            }
            u += m[a] * m[b] / r;
            let f = d / (r * r * r);
            grad[a] += m[b] * f;
            grad[b] -= m[a] * f;
        }
    }
    Ok((u, Velocity::new(grad)))
}

/// U(q) alone.
pub fn potential(sys: &MassSystem, q: &Configuration, eps_coll: f64) -> Result<f64> {
    sys.check_dim(q.n())?;
    let m = sys.masses();
    let pts = &q.points;
    let mut u = 0.0;
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            let r = (pts[b] - pts[a]).norm();
            if r <= eps_coll {
                return Err(Error::CollisionSingularity { a: a + 1, b: b + 1, separation: r });
            }
            u += m[a] * m[b] / r;
        }
    }
    Ok(u)
}

/// Kinetic and potential energies, total energy, and both momenta.
pub fn energy_and_momenta(
    sys: &MassSystem,
    q: &Configuration,
    v: &Velocity,
    eps_coll: f64,
) -> Result<EnergyMomenta> {
    sys.check_dim(v.n())?;
    let u = potential(sys, q, eps_coll)?;
    let k = 0.5 * sys.inner(&v.vectors, &v.vectors);
    let p: C64 = sys.masses().iter().zip(&v.vectors).map(|(m, w)| m * w).sum();
    let j = sys.wedge(&q.points, &v.vectors);
    Ok(EnergyMomenta {
        kinetic: k,
        potential: u,
        total: k - u,
        linear_momentum: p,
        angular_momentum: j,
    })
}

/// First-order Newtonian vector field: d/dt (q, v) = (v, grad U(q)).
pub fn newton_field(
    sys: &MassSystem,
    q: &Configuration,
    v: &Velocity,
    eps_coll: f64,
) -> Result<(Velocity, Velocity)> {
    sys.check_dim(v.n())?;
    let (_, grad) = potential_and_gradient(sys, q, eps_coll)?;
    Ok((Velocity::new(v.vectors.clone()), grad))
}
