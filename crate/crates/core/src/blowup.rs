//! McGehee blow-up of total collision.
//!
//! The change of variables q = r s, v = r^{-1/2} y, dt = r^{3/2} d tau turns
//! Newton's equations into
//!
//! ```text
//!     r'  = r nu
//!     s'  = y - nu s          nu = <s, y>
//!     y'  = grad U(s) + nu y / 2
//! ```
//!
//! which extend analytically to r = 0. The locus r = 0 carries its own
//! non-trivial flow; partial collisions of the shape s remain singular.
//!
//! The diagonal circle action is (r, s, y) -> (r, u s, u y) for unit complex
//! u; "i s" below is the 90-degree rotation of every planar component of s,
//! the generator of that action.

use crate::algebra::{self, C64};
use crate::error::{Error, Result};
use crate::newton::{self, Configuration, MassSystem, Velocity};

/// Default tolerance for stratum classification.
pub const DEFAULT_STRATUM_TOL: f64 = 1e-8;

/// Tolerances enforced on construction of a [`BlownUpState`].
const UNIT_SPHERE_TOL: f64 = 1e-10;
const CENTERED_ABS_TOL: f64 = 1e-10;

/// A point (r, s, y) of the blown-up phase space: size r >= 0, shape s on
/// the mass-metric unit sphere (centered), and scaled velocity y.
///
/// nu = <s, y> is always derived, never stored, so the two representations
/// cannot drift apart.
#[derive(Clone, Debug, PartialEq)]
pub struct BlownUpState {
    pub r: f64,
    pub s: Configuration,
    pub y: Velocity,
}

impl BlownUpState {
    /// Validates r >= 0, |<s,s> - 1| <= 1e-10, and |sum m_a s_a| <= 1e-10.
    pub fn new(sys: &MassSystem, r: f64, s: Configuration, y: Velocity) -> Result<Self> {
        if s.n() != sys.n() || y.n() != sys.n() {
            return Err(Error::DimensionMismatch { expected: sys.n(), got: s.n().max(y.n()) });
        }
        if !r.is_finite() || r < 0.0 {
            return Err(Error::InvalidInput(format!("size r must be finite and >= 0, got {r}")));
        }
        if !s.is_finite() || !y.is_finite() {
            return Err(Error::InvalidInput("non-finite entries in (s, y)".into()));
        }
        let norm2 = sys.inner(&s.points, &s.points);
        if (norm2 - 1.0).abs() > UNIT_SPHERE_TOL {
            return Err(Error::InvalidInput(format!(
                "shape is off the unit sphere: <s,s> = {norm2:.17}"
            )));
        }
        let moment: C64 = sys
            .masses()
            .iter()
            .zip(&s.points)
            .map(|(m, p)| m * p)
            .sum();
        if moment.norm() > CENTERED_ABS_TOL {
            return Err(Error::InvalidInput(format!(
                "shape is not centered: |sum m_a s_a| = {:.3e}",
                moment.norm()
            )));
        }
        Ok(Self { r, s, y })
    }

    pub(crate) fn new_unchecked(r: f64, s: Configuration, y: Velocity) -> Self {
        Self { r, s, y }
    }

    /// nu = <s, y>, the scale-invariant rate of change of size.
    pub fn nu(&self, sys: &MassSystem) -> f64 {
        sys.inner(&self.s.points, &self.y.vectors)
    }
}

/// Scale-invariant quantities of a blown-up state, including the orthogonal
/// (Saari) split y = nu s + J~ i s + y_hor into scaling, rotation, and
/// shape-changing parts. K~ - nu^2/2 = K_sh + J~^2/2.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleInvariants {
    pub nu: f64,
    /// H~ = K~ - U(s) = r H on honest states.
    pub h_tilde: f64,
    /// J~ = <i s, y> = r^{-1/2} J on honest states.
    pub j_tilde: f64,
    /// K~ = <y, y> / 2.
    pub k_tilde: f64,
    /// Shape kinetic energy |y_hor|^2 / 2 >= 0.
    pub k_shape: f64,
    pub y_hor: Velocity,
}

/// Nested strata of the blown-up phase space at a classification tolerance:
/// Equilibrium within StandardCollision {r = H~ = J~ = 0} within
/// FullCollision {r = H~ = 0}. `Interior` is everything else, in particular
/// every honest state r > tol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stratum {
    Interior,
    FullCollision,
    StandardCollision,
    Equilibrium,
}

impl std::fmt::Display for Stratum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stratum::Interior => "Interior",
            Stratum::FullCollision => "FullCollision",
            Stratum::StandardCollision => "StandardCollision",
            Stratum::Equilibrium => "Equilibrium",
        };
        f.write_str(s)
    }
}

/// Forward transform (q, v) -> (r, s, y): r = |q|, s = q/r, y = sqrt(r) v.
/// Requires q centered with r > 0.
pub fn blow_up(sys: &MassSystem, q: &Configuration, v: &Velocity) -> Result<BlownUpState> {
    let r = newton::size(sys, q)?;
    if r == 0.0 {
        return Err(Error::DegenerateSize);
    }
    let s = q.scaled(1.0 / r);
    let y = v.scaled(r.sqrt());
    BlownUpState::new(sys, r, s, y)
}

/// Inverse transform: q = r s, v = r^{-1/2} y. The velocity is undefined at
/// total collision, so r must be positive.
pub fn blow_down(sys: &MassSystem, state: &BlownUpState) -> Result<(Configuration, Velocity)> {
    let _ = sys;
    if state.r <= 0.0 {
        return Err(Error::DegenerateSize);
    }
    Ok((state.s.scaled(state.r), state.y.scaled(state.r.powf(-0.5))))
}

fn guard_shape(s: &[C64], eps_coll: f64) -> Result<()> {
    if let Some((a, b, d)) = algebra::min_pairwise(s) {
        if d <= eps_coll {
            return Err(Error::PartialCollision { a: a + 1, b: b + 1, separation: d });
        }
    }
    Ok(())
}

pub(crate) fn blown_up_field_raw(
    sys: &MassSystem,
    r: f64,
    s: &[C64],
    y: &[C64],
    eps_coll: f64,
) -> Result<(f64, Vec<C64>, Vec<C64>)> {
    guard_shape(s, eps_coll)?;
    let shape = Configuration::new(s.to_vec());
    let (_, grad) = newton::potential_and_gradient(sys, &shape, eps_coll)?;
    let nu = sys.inner(s, y);
    let r_dot = r * nu;
    let s_dot = algebra::axpy(-nu, s, y);
    let y_dot = algebra::axpy(0.5 * nu, y, &grad.vectors);
    Ok((r_dot, s_dot, y_dot))
}

/// The blown-up vector field (r', s', y'). Defined for all r >= 0, away from
/// partial collisions of the shape.
pub fn blown_up_field(
    sys: &MassSystem,
    state: &BlownUpState,
    eps_coll: f64,
) -> Result<(f64, Velocity, Velocity)> {
    let (r_dot, s_dot, y_dot) =
        blown_up_field_raw(sys, state.r, &state.s.points, &state.y.vectors, eps_coll)?;
    Ok((r_dot, Velocity::new(s_dot), Velocity::new(y_dot)))
}

/// Mass-metric norm of the full field vector, sqrt(r'^2 + |s'|^2 + |y'|^2).
pub fn field_norm(sys: &MassSystem, state: &BlownUpState, eps_coll: f64) -> Result<f64> {
    let (r_dot, s_dot, y_dot) = blown_up_field(sys, state, eps_coll)?;
    let s2 = sys.inner(&s_dot.vectors, &s_dot.vectors);
    let y2 = sys.inner(&y_dot.vectors, &y_dot.vectors);
    Ok((r_dot * r_dot + s2 + y2).sqrt())
}

/// All scale-invariant quantities of a state.
pub fn scale_invariants(
    sys: &MassSystem,
    state: &BlownUpState,
    eps_coll: f64,
) -> Result<ScaleInvariants> {
    guard_shape(&state.s.points, eps_coll)?;
    let s = &state.s.points;
    let y = &state.y.vectors;
    let u = newton::potential(sys, &state.s, eps_coll)?;
    let nu = sys.inner(s, y);
    let k_tilde = 0.5 * sys.inner(y, y);
    let is = algebra::rot90(s);
    let j_tilde = sys.inner(&is, y);
    let mut y_hor = algebra::axpy(-nu, s, y);
    y_hor = algebra::axpy(-j_tilde, &is, &y_hor);
    let k_shape = 0.5 * sys.inner(&y_hor, &y_hor);
    Ok(ScaleInvariants {
        nu,
        h_tilde: k_tilde - u,
        j_tilde,
        k_tilde,
        k_shape,
        y_hor: Velocity::new(y_hor),
    })
}

/// Total classification of a state into the stratum hierarchy. States with
/// r <= tol but |H~| > tol lie on no collision stratum and report `Interior`.
pub fn classify_stratum(sys: &MassSystem, state: &BlownUpState, tol: f64) -> Stratum {
    if state.r > tol {
        return Stratum::Interior;
    }
    let inv = match scale_invariants(sys, state, 0.0) {
        Ok(inv) => inv,
        // A shape at partial collision has U = infinity, hence H~ = -inf.
        Err(_) => return Stratum::Interior,
    };
    if !(inv.h_tilde.abs() <= tol) {
        return Stratum::Interior;
    }
    if inv.j_tilde.abs() > tol {
        return Stratum::FullCollision;
    }
    match field_norm(sys, state, 0.0) {
        Ok(norm) if norm <= tol => Stratum::Equilibrium,
        _ => Stratum::StandardCollision,
    }
}

/// Accumulated Newtonian time t(tau) = integral of r^{3/2} d tau on an
/// aligned grid, with t(tau_0) = 0.
///
/// Each interval integrates the parabola fitted through the three nearest
/// grid samples of r^{3/2} (both fits averaged for interior intervals),
/// which matches the accuracy of the integrator's dense output. Increments
/// are clamped at zero so t is monotone non-decreasing.
pub fn physical_time(tau: &[f64], r: &[f64]) -> Vec<f64> {
    assert_eq!(tau.len(), r.len(), "tau and r grids must be aligned");
    let n = tau.len();
    let f: Vec<f64> = r.iter().map(|v| v.max(0.0).powf(1.5)).collect();
    let mut t = Vec::with_capacity(n);
    t.push(0.0);
    if n < 2 {
        return t;
    }
    for i in 0..n - 1 {
        let (a, b) = (tau[i], tau[i + 1]);
        let mut acc = 0.0;
        let mut fits = 0.0;
        if i >= 1 {
            acc += quad_integral(tau[i - 1], tau[i], tau[i + 1], f[i - 1], f[i], f[i + 1], a, b);
            fits += 1.0;
        }
        if i + 2 < n {
            acc += quad_integral(tau[i], tau[i + 1], tau[i + 2], f[i], f[i + 1], f[i + 2], a, b);
            fits += 1.0;
        }
        let inc = if fits > 0.0 {
            acc / fits
        } else {
            0.5 * (f[i] + f[i + 1]) * (b - a)
        };
        t.push(t[i] + inc.max(0.0));
    }
    t
}

/// Integral over [a, b] of the parabola through (x0,f0), (x1,f1), (x2,f2).
/// In Newton form P = f0 + c1 (x - x0) + c2 (x - x0)(x - x1); with u = x - x0
/// the last factor integrates to u^3/3 + (x0 - x1) u^2/2.
fn quad_integral(x0: f64, x1: f64, x2: f64, f0: f64, f1: f64, f2: f64, a: f64, b: f64) -> f64 {
    let c1 = (f1 - f0) / (x1 - x0);
    let c2 = ((f2 - f1) / (x2 - x1) - c1) / (x2 - x0);
    let term = |x: f64| {
        let u = x - x0;
        f0 * u + 0.5 * c1 * u * u + c2 * (u * u * u / 3.0 + 0.5 * (x0 - x1) * u * u)
    };
    term(b) - term(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newton::{
        center_configuration, energy_and_momenta, newton_field, potential, size, DEFAULT_EPS_COLL,
    };
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64, y: f64) -> C64 {
        C64::new(x, y)
    }

    fn equal3() -> MassSystem {
        MassSystem::equal(3).unwrap()
    }

    /// Unit equilateral shape for equal masses, centered.
    fn equilateral_shape(sys: &MassSystem) -> Configuration {
        let raw = Configuration::from_xy(&[[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]]);
        let ctr = center_configuration(sys, &raw).unwrap();
        let r = size(sys, &ctr).unwrap();
        ctr.scaled(1.0 / r)
    }

    fn random_shape(sys: &MassSystem, rng: &mut ChaCha8Rng) -> Configuration {
        loop {
            let pts: Vec<C64> = (0..sys.n())
                .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let q = center_configuration(sys, &Configuration::new(pts)).unwrap();
            let r = sys.norm(&q.points);
            if r < 1e-3 {
                continue;
            }
            let s = q.scaled(1.0 / r);
            if algebra::min_pairwise(&s.points).unwrap().2 > 0.15 {
                return s;
            }
        }
    }

    fn random_y(sys: &MassSystem, rng: &mut ChaCha8Rng) -> Velocity {
        let raw = Velocity::new(
            (0..sys.n())
                .map(|_| c(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)))
                .collect(),
        );
        // Keep y in the center-of-mass frame like any physical velocity.
        let shift = sys.barycenter(&raw.vectors);
        Velocity::new(raw.vectors.iter().map(|w| w - shift).collect())
    }

    fn random_state(sys: &MassSystem, rng: &mut ChaCha8Rng, r: f64) -> BlownUpState {
        BlownUpState::new(sys, r, random_shape(sys, rng), random_y(sys, rng)).unwrap()
    }

    #[test]
    fn blow_up_examples() {
        let sys = equal3();
        let mut rng = ChaCha8Rng::seed_from_u64(11);

        // Size-1 input is fixed by the transform.
        let s = random_shape(&sys, &mut rng);
        let v = random_y(&sys, &mut rng);
        let st = blow_up(&sys, &s, &v).unwrap();
        assert!((st.r - 1.0).abs() < 1e-12);
        for (a, b) in st.s.points.iter().zip(&s.points) {
            assert!((a - b).norm() < 1e-12);
        }
        for (a, b) in st.y.vectors.iter().zip(&v.vectors) {
            assert!((a - b).norm() < 1e-12);
        }

        // Scale equivariance: (lambda q, lambda^{-1/2} v) keeps (s, y).
        let lam: f64 = 3.7;
        let st2 = blow_up(&sys, &s.scaled(lam), &v.scaled(lam.powf(-0.5))).unwrap();
        assert!((st2.r - lam).abs() < 1e-12);
        for (a, b) in st2.s.points.iter().zip(&st.s.points) {
            assert!((a - b).norm() < 1e-12);
        }
        for (a, b) in st2.y.vectors.iter().zip(&st.y.vectors) {
            assert!((a - b).norm() < 1e-12);
        }

        // Equilateral of side 2 at rest: r = 2 by Lagrange's formula.
        let q = equilateral_shape(&sys).scaled(2.0);
        let st3 = blow_up(&sys, &q, &Velocity::zeros(3)).unwrap();
        assert!((st3.r - 2.0).abs() < 1e-12);
        assert!((sys.norm(&st3.s.points) - 1.0).abs() < 1e-12);
        assert!(st3.y.vectors.iter().all(|w| w.norm() == 0.0));

        // Zero size cannot be normalized.
        assert!(matches!(
            blow_up(&sys, &Configuration::zeros(3), &Velocity::zeros(3)),
            Err(Error::DegenerateSize)
        ));
    }

    #[test]
    fn blow_down_round_trip() {
        let sys = MassSystem::new(vec![1.0, 2.0, 3.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let r = rng.gen_range(0.1..5.0);
            let st = random_state(&sys, &mut rng, r);
            let (q, v) = blow_down(&sys, &st).unwrap();
            let back = blow_up(&sys, &q, &v).unwrap();
            assert!((back.r - st.r).abs() <= 1e-12 * st.r);
            for (a, b) in back.s.points.iter().zip(&st.s.points) {
                assert!((a - b).norm() < 1e-12);
            }
            for (a, b) in back.y.vectors.iter().zip(&st.y.vectors) {
                assert!((a - b).norm() < 1e-12);
            }
        }

        // r = 4 at rest: v = 0 and q = 4 s.
        let st = random_state(&sys, &mut rng, 4.0);
        let st = BlownUpState::new(&sys, 4.0, st.s.clone(), Velocity::zeros(3)).unwrap();
        let (q, v) = blow_down(&sys, &st).unwrap();
        assert!(v.vectors.iter().all(|w| w.norm() == 0.0));
        for (a, b) in q.points.iter().zip(&st.s.points) {
            assert!((a - 4.0 * b).norm() < 1e-12);
        }

        let st0 = BlownUpState::new(&sys, 0.0, st.s.clone(), st.y.clone()).unwrap();
        assert!(matches!(blow_down(&sys, &st0), Err(Error::DegenerateSize)));
    }

    #[test]
    fn field_vanishes_at_equilibria() {
        let sys = equal3();
        let s = equilateral_shape(&sys);
        let u = potential(&sys, &s, DEFAULT_EPS_COLL).unwrap();
        for sign in [1.0, -1.0] {
            let nu = sign * (2.0 * u).sqrt();
            let y = Velocity::new(algebra::scale(nu, &s.points));
            let st = BlownUpState::new(&sys, 0.0, s.clone(), y).unwrap();
            assert!(field_norm(&sys, &st, DEFAULT_EPS_COLL).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn collision_manifold_is_invariant() {
        let sys = equal3();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let st = random_state(&sys, &mut rng, 0.0);
            let (r_dot, _, _) = blown_up_field(&sys, &st, DEFAULT_EPS_COLL).unwrap();
            assert_eq!(r_dot, 0.0);
        }
    }

    #[test]
    fn honest_states_reproduce_newton() {
        // Chain-rule oracle: transform (v, a) = newton_field(q, v) into
        // blown-up derivatives and compare against the blown-up field.
        let sys = MassSystem::new(vec![1.0, 2.0, 3.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..50 {
            let r = rng.gen_range(0.3..3.0);
            let st = random_state(&sys, &mut rng, r);
            let (q, v) = blow_down(&sys, &st).unwrap();
            let (qdot, vdot) = newton_field(&sys, &q, &v, DEFAULT_EPS_COLL).unwrap();
            let r = st.r;
            let dr_dt = sys.inner(&q.points, &qdot.vectors) / r;
            let expected_r = r.powf(1.5) * dr_dt;
            let ds_dt: Vec<C64> = q
                .points
                .iter()
                .zip(&qdot.vectors)
                .map(|(qa, va)| (va - qa * (dr_dt / r)) / r)
                .collect();
            let expected_s = algebra::scale(r.powf(1.5), &ds_dt);
            let dy_dt: Vec<C64> = v
                .vectors
                .iter()
                .zip(&vdot.vectors)
                .map(|(va, aa)| 0.5 * r.powf(-0.5) * dr_dt * va + r.sqrt() * aa)
                .collect();
            let expected_y = algebra::scale(r.powf(1.5), &dy_dt);

            let (r_dot, s_dot, y_dot) = blown_up_field(&sys, &st, DEFAULT_EPS_COLL).unwrap();
            assert!((r_dot - expected_r).abs() < 1e-9);
            for (a, b) in s_dot.vectors.iter().zip(&expected_s) {
                assert!((a - b).norm() < 1e-9);
            }
            for (a, b) in y_dot.vectors.iter().zip(&expected_y) {
                assert!((a - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn partial_collision_is_guarded() {
        let sys = equal3();
        // Bodies 1 and 2 nearly coincident on the unit sphere.
        let raw = Configuration::from_xy(&[[0.5, 0.0], [0.5 + 1e-12, 0.0], [-1.0, 0.0]]);
        let ctr = center_configuration(&sys, &raw).unwrap();
        let r = sys.norm(&ctr.points);
        let s = ctr.scaled(1.0 / r);
        let st = BlownUpState::new(&sys, 0.0, s, Velocity::zeros(3)).unwrap();
        assert!(matches!(
            blown_up_field(&sys, &st, DEFAULT_EPS_COLL),
            Err(Error::PartialCollision { a: 1, b: 2, .. })
        ));
    }

    #[test]
    fn scale_invariants_examples() {
        let sys = equal3();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let s = random_shape(&sys, &mut rng);

        // Pure radial motion: y = nu s.
        let nu = 1.3;
        let st = BlownUpState::new(&sys, 1.0, s.clone(), Velocity::new(algebra::scale(nu, &s.points)))
            .unwrap();
        let inv = scale_invariants(&sys, &st, DEFAULT_EPS_COLL).unwrap();
        assert!((inv.nu - nu).abs() < 1e-12);
        assert!(inv.j_tilde.abs() < 1e-12);
        assert!(inv.k_shape.abs() < 1e-12);
        assert!((inv.k_tilde - 0.5 * nu * nu).abs() < 1e-12);

        // Pure rotation: y = i s.
        let st = BlownUpState::new(&sys, 1.0, s.clone(), Velocity::new(algebra::rot90(&s.points)))
            .unwrap();
        let inv = scale_invariants(&sys, &st, DEFAULT_EPS_COLL).unwrap();
        assert!(inv.nu.abs() < 1e-12);
        assert!((inv.j_tilde - 1.0).abs() < 1e-12);
        assert!(inv.k_shape.abs() < 1e-12);
    }

    #[test]
    fn saari_decomposition_random() {
        let sys = MassSystem::new(vec![1.0, 2.0, 3.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..200 {
            let r = rng.gen_range(0.0..2.0);
            let st = random_state(&sys, &mut rng, r);
            let inv = scale_invariants(&sys, &st, DEFAULT_EPS_COLL).unwrap();
            let gap = inv.k_tilde - 0.5 * inv.nu * inv.nu - inv.k_shape - 0.5 * inv.j_tilde * inv.j_tilde;
            assert!(gap.abs() <= 1e-10, "Saari gap {gap}");
            // y_hor is orthogonal to both s and i s.
            assert!(sys.inner(&inv.y_hor.vectors, &st.s.points).abs() < 1e-12);
            assert!(
                sys.inner(&inv.y_hor.vectors, &algebra::rot90(&st.s.points)).abs() < 1e-12
            );
        }
    }

    #[test]
    fn invariants_match_newton_on_honest_states() {
        let sys = equal3();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let r = rng.gen_range(0.2..4.0);
            let st = random_state(&sys, &mut rng, r);
            let inv = scale_invariants(&sys, &st, DEFAULT_EPS_COLL).unwrap();
            let (q, v) = blow_down(&sys, &st).unwrap();
            let em = energy_and_momenta(&sys, &q, &v, DEFAULT_EPS_COLL).unwrap();
            assert!((inv.h_tilde - st.r * em.total).abs() <= 1e-10 * (1.0 + inv.h_tilde.abs()));
            assert!(
                (inv.j_tilde - em.angular_momentum / st.r.sqrt()).abs()
                    <= 1e-10 * (1.0 + inv.j_tilde.abs())
            );
        }
    }

    #[test]
    fn evolution_identities_hold_along_field() {
        // d/dtau H~ = nu H~, d/dtau J~ = -nu J~ / 2, and
        // nu' = K~ - nu^2/2 + H~, via chain-rule directional derivatives.
        let sys = MassSystem::new(vec![1.0, 2.0, 3.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for i in 0..300 {
            let r = if i % 2 == 0 { 0.0 } else { rng.gen_range(0.1..2.0) };
            let st = random_state(&sys, &mut rng, r);
            let inv = scale_invariants(&sys, &st, DEFAULT_EPS_COLL).unwrap();
            let (_, s_dot, y_dot) = blown_up_field(&sys, &st, DEFAULT_EPS_COLL).unwrap();
            let s = &st.s.points;
            let y = &st.y.vectors;
            let (_, grad) = newton::potential_and_gradient(&sys, &st.s, DEFAULT_EPS_COLL).unwrap();

            // H~ = <y,y>/2 - U(s).
            let dh = sys.inner(y, &y_dot.vectors) - sys.inner(&grad.vectors, &s_dot.vectors);
            assert!((dh - inv.nu * inv.h_tilde).abs() <= 1e-9);

            // J~ = <i s, y>.
            let dj = sys.inner(&algebra::rot90(&s_dot.vectors), y)
                + sys.inner(&algebra::rot90(s), &y_dot.vectors);
            assert!((dj + 0.5 * inv.nu * inv.j_tilde).abs() <= 1e-9);

            // nu = <s, y>.
            let dnu = sys.inner(&s_dot.vectors, y) + sys.inner(s, &y_dot.vectors);
            let rhs = inv.k_tilde - 0.5 * inv.nu * inv.nu + inv.h_tilde;
            assert!((dnu - rhs).abs() <= 1e-9);
        }
    }

    #[test]
    fn evolution_identity_by_finite_differences() {
        // Second, independent route: step the state a tiny amount along the
        // field and difference H~ directly.
        let sys = equal3();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let eps = 1e-6;
        for _ in 0..20 {
            let st = random_state(&sys, &mut rng, 0.7);
            let inv = scale_invariants(&sys, &st, DEFAULT_EPS_COLL).unwrap();
            let (_, s_dot, y_dot) = blown_up_field(&sys, &st, DEFAULT_EPS_COLL).unwrap();
            let mut h = [0.0; 2];
            for (k, sign) in [-1.0f64, 1.0].iter().enumerate() {
                // The field is tangent to the sphere, so the ambient formula
                // for H~ is valid to O(eps^2) along the displaced points.
                let s2 = Configuration::new(algebra::axpy(sign * eps, &s_dot.vectors, &st.s.points));
                let y2 = Velocity::new(algebra::axpy(sign * eps, &y_dot.vectors, &st.y.vectors));
                h[k] = 0.5 * sys.inner(&y2.vectors, &y2.vectors)
                    - potential(&sys, &s2, DEFAULT_EPS_COLL).unwrap();
            }
            let fd = (h[1] - h[0]) / (2.0 * eps);
            assert!(
                (fd - inv.nu * inv.h_tilde).abs() <= 1e-6,
                "fd {fd} vs {}",
                inv.nu * inv.h_tilde
            );
        }
    }

    #[test]
    fn gradient_like_on_full_collision_manifold() {
        // On M0 = {r = 0, H~ = 0}: nu' = K_sh + J~^2/2 >= 0.
        let sys = equal3();
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..1000 {
            let s = random_shape(&sys, &mut rng);
            let u = potential(&sys, &s, DEFAULT_EPS_COLL).unwrap();
            let mut y = random_y(&sys, &mut rng);
            let norm = sys.norm(&y.vectors);
            if norm < 1e-6 {
                continue;
            }
            y = y.scaled((2.0 * u).sqrt() / norm);
            let st = BlownUpState::new(&sys, 0.0, s, y).unwrap();
            let inv = scale_invariants(&sys, &st, DEFAULT_EPS_COLL).unwrap();
            assert!(inv.h_tilde.abs() < 1e-9);
            let nu_prime = inv.k_tilde - 0.5 * inv.nu * inv.nu + inv.h_tilde;
            assert!(nu_prime >= -1e-12, "nu' = {nu_prime}");
        }
    }

    #[test]
    fn rotation_equivariance() {
        let sys = MassSystem::new(vec![2.0, 1.0, 3.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let r = rng.gen_range(0.0..2.0);
            let st = random_state(&sys, &mut rng, r);
            let u = C64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU));
            let st_rot = BlownUpState::new(&sys, st.r, st.s.rotated(u), st.y.rotated(u)).unwrap();
            let a = scale_invariants(&sys, &st, DEFAULT_EPS_COLL).unwrap();
            let b = scale_invariants(&sys, &st_rot, DEFAULT_EPS_COLL).unwrap();
            assert!((a.nu - b.nu).abs() <= 1e-12);
            assert!((a.h_tilde - b.h_tilde).abs() <= 1e-12 * (1.0 + a.h_tilde.abs()));
            assert!((a.j_tilde - b.j_tilde).abs() <= 1e-12);
            assert!((a.k_tilde - b.k_tilde).abs() <= 1e-12 * (1.0 + a.k_tilde));
            assert!((a.k_shape - b.k_shape).abs() <= 1e-12 * (1.0 + a.k_shape));
        }
    }

    #[test]
    fn sphere_tangency() {
        let sys = equal3();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..100 {
            let st = random_state(&sys, &mut rng, 1.0);
            let (_, s_dot, _) = blown_up_field(&sys, &st, DEFAULT_EPS_COLL).unwrap();
            assert!(sys.inner(&st.s.points, &s_dot.vectors).abs() <= 1e-12);
        }
    }

    #[test]
    fn stratum_classification() {
        let sys = equal3();
        let s = equilateral_shape(&sys);
        let u = potential(&sys, &s, DEFAULT_EPS_COLL).unwrap();
        let tol = DEFAULT_STRATUM_TOL;

        let st = BlownUpState::new(&sys, 0.5, s.clone(), Velocity::zeros(3)).unwrap();
        assert_eq!(classify_stratum(&sys, &st, tol), Stratum::Interior);

        // Equilibrium point.
        let nu = (2.0 * u).sqrt();
        let y = Velocity::new(algebra::scale(nu, &s.points));
        let st = BlownUpState::new(&sys, 0.0, s.clone(), y).unwrap();
        assert_eq!(classify_stratum(&sys, &st, tol), Stratum::Equilibrium);

        // Rotational state on M0 with J~ = sqrt(2 U) != 0.
        let y = Velocity::new(algebra::scale(nu, &algebra::rot90(&s.points)));
        let st = BlownUpState::new(&sys, 0.0, s.clone(), y).unwrap();
        let inv = scale_invariants(&sys, &st, DEFAULT_EPS_COLL).unwrap();
        assert!((inv.j_tilde - nu).abs() < 1e-12);
        assert_eq!(classify_stratum(&sys, &st, tol), Stratum::FullCollision);

        // r = 0 with H~ != 0 sits on no collision stratum.
        let st = BlownUpState::new(&sys, 0.0, s.clone(), Velocity::zeros(3)).unwrap();
        assert_eq!(classify_stratum(&sys, &st, tol), Stratum::Interior);

        // Radial but off-root nu: standard collision locus, not equilibrium.
        let nu_off = nu * 1.001;
        // Adjust H~ = 0 by keeping |y| = sqrt(2U) but tilting off s:
        // instead take y = nu s + w with w horizontal sized to restore K~ = U.
        let is = algebra::rot90(&s.points);
        let k_target = u;
        let w2 = 2.0 * (k_target - 0.5 * nu_off * nu_off);
        if w2 > 0.0 {
            let y = Velocity::new(algebra::axpy(w2.sqrt(), &is, &algebra::scale(nu_off, &s.points)));
            let st = BlownUpState::new(&sys, 0.0, s.clone(), y).unwrap();
            assert_eq!(classify_stratum(&sys, &st, tol), Stratum::FullCollision);
        }
        // J~ = 0 and H~ = 0 but not an equilibrium: impossible with y
        // parallel to s (those are exactly the equilibria), so build one with
        // a horizontal component: K~ = U, J~ = 0, K_sh > 0.
        let y_hor = horizontal_direction(&sys, &s);
        let nu_part = (2.0 * u - 1.0).sqrt(); // leaves |y_hor|^2 = 1
        let y = Velocity::new(algebra::axpy(nu_part, &s.points, &y_hor.vectors));
        let st = BlownUpState::new(&sys, 0.0, s, y).unwrap();
        let inv = scale_invariants(&sys, &st, DEFAULT_EPS_COLL).unwrap();
        assert!(inv.h_tilde.abs() < 1e-10 && inv.j_tilde.abs() < 1e-10);
        assert_eq!(classify_stratum(&sys, &st, tol), Stratum::StandardCollision);
    }

    /// A unit mass-norm vector orthogonal to s, i s, and translations.
    fn horizontal_direction(sys: &MassSystem, s: &Configuration) -> Velocity {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut w: Vec<C64> = (0..sys.n()).map(|_| c(rng.gen(), rng.gen())).collect();
        let shift = sys.barycenter(&w);
        for z in w.iter_mut() {
            *z -= shift;
        }
        let is = algebra::rot90(&s.points);
        let a = sys.inner(&w, &s.points);
        w = algebra::axpy(-a, &s.points, &w);
        let b = sys.inner(&w, &is);
        w = algebra::axpy(-b, &is, &w);
        let norm = algebra::mass_norm(sys.masses(), &w);
        Velocity::new(algebra::scale(1.0 / norm, &w))
    }

    #[test]
    fn physical_time_examples() {
        let tau: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();

        let t = physical_time(&tau, &vec![1.0; 11]);
        for (ti, taui) in t.iter().zip(&tau) {
            assert!((ti - taui).abs() < 1e-14);
        }

        let t = physical_time(&tau, &vec![0.0; 11]);
        assert!(t.iter().all(|&v| v == 0.0));

        let t = physical_time(&tau, &vec![4.0; 11]);
        assert!((t.last().unwrap() - 8.0).abs() < 1e-12);

        // Quadratic integrand r = tau integrates r^{3/2} beyond trapezoid
        // accuracy: compare to the closed form (2/5) tau^{5/2}.
        let tau: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let r: Vec<f64> = tau.clone();
        let t = physical_time(&tau, &r);
        let exact = 0.4f64;
        assert!(
            (t.last().unwrap() - exact).abs() < 1e-5,
            "got {}",
            t.last().unwrap()
        );

        // Monotone non-decreasing by construction.
        for w in t.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }
}
