//! Homographic solutions q(t) = lambda(t) s_cc and the reduced-coordinate
//! family curves.
//!
//! With s_cc a central configuration and lambda a complex scalar solving the
//! Kepler problem lambda'' = -mu lambda / |lambda|^3, mu = U(s_cc), every
//! body traces a conic of fixed shape. For fixed energy h < 0 the family is
//! parameterized by the angular momentum J; in the (nu, r) plane its members
//! are ovals collapsing, as J -> 0, onto the ejection-collision arch plus
//! the r = 0 floor (the rest cycle).

use crate::algebra::{self, C64};
use crate::central::CentralConfiguration;
use crate::error::{Error, Result};
use crate::flows::KeplerFlow;
use crate::newton::MassSystem;
use crate::ode::{
    invariant_drift, DriftReport, EventDirection, EventSpec, IntegrationSpec, Integrator,
    Termination, Trajectory,
};

/// |lambda| at which a Kepler run stops with a collision event. The
/// remaining fall time is recovered by quadrature of the radial energy
/// integral.
pub const KEPLER_COLLISION_RADIUS: f64 = 1e-6;
const KEPLER_COLLISION_LABEL: &str = "KeplerCollision";
/// Nodes with |lambda| below this are skipped by the Newtonian residual
/// check of a mapped homographic orbit: the residual of the central
/// configuration is amplified by 1/|lambda|^2 toward total collision.
const RESIDUAL_WINDOW: f64 = 0.05;

/// State of the complex Kepler problem: lambda, lambda', and the strength
/// mu = U(s_cc) of the associated configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeplerState {
    pub lambda: C64,
    pub lambda_dot: C64,
    pub mu: f64,
}

impl KeplerState {
    pub fn new(lambda: C64, lambda_dot: C64, mu: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::InvalidInput(format!("mu must be positive, got {mu}")));
        }
        if lambda.norm() == 0.0 {
            return Err(Error::DegenerateSize);
        }
        Ok(Self { lambda, lambda_dot, mu })
    }

    /// Energy of the scalar Kepler problem, |lambda'|^2/2 - mu/|lambda|.
    /// Equals the N-body energy H of the associated homographic orbit.
    pub fn energy(&self) -> f64 {
        0.5 * self.lambda_dot.norm_sqr() - self.mu / self.lambda.norm()
    }

    /// lambda ^ lambda', equal to the N-body angular momentum J.
    pub fn angular_momentum(&self) -> f64 {
        (self.lambda.conj() * self.lambda_dot).im
    }

    /// Circular motion of given radius: lambda' = i sqrt(mu / radius).
    pub fn circular(mu: f64, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidInput("radius must be positive".into()));
        }
        Self::new(C64::new(radius, 0.0), C64::new(0.0, (mu / radius).sqrt()), mu)
    }

    /// Bound orbit of energy h < 0 and angular momentum j, started at
    /// perihelion (or at the rest apex for j = 0).
    pub fn from_energy_momentum(mu: f64, h: f64, j: f64) -> Result<Self> {
        if !(h < 0.0) {
            return Err(Error::InvalidInput("bound members need h < 0".into()));
        }
        let a = -mu / (2.0 * h);
        let ecc_sq = 1.0 - j * j / (mu * a);
        if ecc_sq < -1e-12 {
            return Err(Error::EmptyFamily { j_critical: (mu * a).sqrt() });
        }
        let ecc = ecc_sq.max(0.0).sqrt();
        if j == 0.0 {
            // Drop from rest at the apex r0 = 2a (degenerate ellipse).
            return Self::new(C64::new(2.0 * a, 0.0), C64::new(0.0, 0.0), mu);
        }
        let r_p = a * (1.0 - ecc);
        Self::new(C64::new(r_p, 0.0), C64::new(0.0, j / r_p), mu)
    }
}

/// A located total-collision end of a Kepler run.
#[derive(Clone, Copy, Debug)]
pub struct CollisionReached {
    /// Time at which |lambda| hit the cutoff radius.
    pub t_stop: f64,
    pub radius_at_stop: f64,
    /// t_stop plus the radial fall time from the cutoff, by quadrature of
    /// dt = dx / sqrt(2E + 2 mu / x). Meaningful for (near-)radial motion,
    /// which is the only kind that reaches the cutoff.
    pub t_collision: f64,
}

/// Result of a Kepler integration: the (lambda, lambda') trajectory, drift
/// of the two conserved quantities, and the collision record if the run
/// ended at the cutoff radius.
#[derive(Debug)]
pub struct KeplerRun {
    pub trajectory: Trajectory,
    pub drift: DriftReport,
    pub collision: Option<CollisionReached>,
}

impl KeplerRun {
    pub fn lambda_at(&self, t: f64) -> Option<(C64, C64)> {
        let y = self.trajectory.sample(t)?;
        Some((C64::new(y[0], y[1]), C64::new(y[2], y[3])))
    }
}

/// Remaining fall time from radius `r0` with energy `e`, by composite
/// Simpson on the substitution x = u^2 (the integrand 2u^2 /
/// sqrt(2 e u^2 + 2 mu) is smooth through u = 0).
fn radial_fall_time(mu: f64, e: f64, r0: f64) -> f64 {
    let b = r0.sqrt();
    let n = 2000;
    let f = |u: f64| {
        let denom = 2.0 * e * u * u + 2.0 * mu;
        if denom <= 0.0 {
            0.0
        } else {
            2.0 * u * u / denom.sqrt()
        }
    };
    let h = b / n as f64;
    let mut acc = f(0.0) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    acc * h / 3.0
}

/// Integrate the complex Kepler problem with the shared engine, stopping at
/// the collision cutoff if |lambda| falls that far.
pub fn kepler_solve(state0: &KeplerState, t_span: (f64, f64), tol: f64) -> Result<KeplerRun> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    if state0.lambda.norm() == 0.0 {
        return Err(Error::DegenerateSize);
    }
    let spec = IntegrationSpec::with_tol(tol, tol * 1e-3);
    let flow = KeplerFlow { mu: state0.mu };
    let y0 = [
        state0.lambda.re,
        state0.lambda.im,
        state0.lambda_dot.re,
        state0.lambda_dot.im,
    ];
    let collision = EventSpec::new(
        KEPLER_COLLISION_LABEL,
        EventDirection::Negative,
        true,
        |_t, y: &[f64]| (y[0] * y[0] + y[1] * y[1]).sqrt() - KEPLER_COLLISION_RADIUS,
    );
    let trajectory = Integrator::new(spec)
        .with_event(collision)
        .run(&flow, &y0, t_span)
        .map_err(|failure| Error::NumericalFailure(failure.to_string()))?;

    let mu = state0.mu;
    let energy = move |_t: f64, y: &[f64]| {
        let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
        0.5 * (y[2] * y[2] + y[3] * y[3]) - mu / r
    };
    let momentum = |_t: f64, y: &[f64]| y[0] * y[3] - y[1] * y[2];
    let drift = invariant_drift(&trajectory, &[("E", &energy), ("L", &momentum)]);

    let collision = match &trajectory.termination {
        Termination::TerminalEvent { label, t } if label == KEPLER_COLLISION_LABEL => {
            let yf = trajectory.final_state();
            let r_stop = (yf[0] * yf[0] + yf[1] * yf[1]).sqrt();
            let e = energy(*t, yf);
            Some(CollisionReached {
                t_stop: *t,
                radius_at_stop: r_stop,
                t_collision: t + radial_fall_time(mu, e, r_stop),
            })
        }
        _ => None,
    };
    Ok(KeplerRun { trajectory, drift, collision })
}

/// A homographic N-body orbit: the Kepler trajectory pushed through the
/// linear map q = lambda s_cc, v = lambda' s_cc, in Newtonian state layout.
#[derive(Debug)]
pub struct HomographicOrbit {
    pub trajectory: Trajectory,
    pub kepler: KeplerRun,
    /// Largest |dv/dt - grad U(q)| over grid nodes with |lambda| >= 0.05;
    /// toward total collision the certified configuration residual is
    /// amplified like 1/|lambda|^2.
    pub max_residual: f64,
}

/// Generate the homographic orbit of a certified configuration from a
/// Kepler initial state with matching strength mu = U(s_cc).
pub fn homographic_orbit(
    sys: &MassSystem,
    cc: &CentralConfiguration,
    state0: &KeplerState,
    t_span: (f64, f64),
    tol: f64,
) -> Result<HomographicOrbit> {
    if (state0.mu - cc.u_value).abs() > 1e-10 * cc.u_value.max(1.0) {
        return Err(Error::InvalidInput(format!(
            "Kepler strength mu = {} does not match U(s_cc) = {}",
            state0.mu, cc.u_value
        )));
    }
    let kepler = kepler_solve(state0, t_span, tol)?;
    let s = cc.s_cc.points.clone();
    let map = move |st: &[f64]| -> Vec<f64> {
        let lambda = C64::new(st[0], st[1]);
        let lambda_dot = C64::new(st[2], st[3]);
        let mut out = Vec::with_capacity(4 * s.len());
        for body in &s {
            let q = lambda * body;
            out.push(q.re);
            out.push(q.im);
        }
        for body in &s {
            let v = lambda_dot * body;
            out.push(v.re);
            out.push(v.im);
        }
        out
    };
    let trajectory = kepler.trajectory.map_linear(map);

    let mut max_residual: f64 = 0.0;
    let half = 2 * sys.n();
    let mut check = |deriv: Vec<f64>, state: &[f64], lam: &[f64]| -> Result<()> {
        if (lam[0] * lam[0] + lam[1] * lam[1]).sqrt() < RESIDUAL_WINDOW {
            return Ok(());
        }
        let q = crate::newton::Configuration::new(algebra::from_flat(&state[..half]));
        let (_, grad) = crate::newton::potential_and_gradient(sys, &q, 0.0)?;
        let acc = algebra::from_flat(&deriv[half..]);
        let diff = algebra::sub(&acc, &grad.vectors);
        max_residual = max_residual.max(sys.norm(&diff));
        Ok(())
    };
    if let (Some(seg), Some(kseg)) = (trajectory.segments.first(), kepler.trajectory.segments.first())
    {
        check(seg.eval_derivative(0.0), &trajectory.states[0], &kseg.eval(0.0))?;
    }
    for (i, (seg, kseg)) in trajectory
        .segments
        .iter()
        .zip(&kepler.trajectory.segments)
        .enumerate()
    {
        check(seg.eval_derivative(1.0), &trajectory.states[i + 1], &kseg.eval(1.0))?;
    }
    Ok(HomographicOrbit { trajectory, kepler, max_residual })
}

/// The (nu, r) locus of a central-configuration family member at energy h
/// and angular momentum j: r h = nu^2/2 + j^2/(2r) - U(s_cc).
#[derive(Clone, Debug)]
pub struct RestCycleCurve {
    pub h: f64,
    pub j: f64,
    pub u_cc: f64,
    /// (nu, r) samples tracing the closed curve.
    pub samples: Vec<(f64, f64)>,
    /// The equilibrium values (+sqrt(2U), -sqrt(2U)).
    pub arch_endpoints: (f64, f64),
}

/// |J| above which the (nu, r) locus of energy h is empty; at the critical
/// value the locus is the single circular-solution point.
pub fn critical_angular_momentum(u_cc: f64, h: f64) -> f64 {
    u_cc / (-2.0 * h).sqrt()
}

impl RestCycleCurve {
    /// Largest size on the curve, recomputed from the energy relation by
    /// bisection of h r + U - j^2 / (2 r) (its positive root).
    pub fn r_max(&self) -> f64 {
        let phi = |r: f64| self.h * r + self.u_cc - self.j * self.j / (2.0 * r);
        let mut lo = if self.j == 0.0 {
            1e-300
        } else {
            // Peak of phi; the curve exists, so phi is positive here.
            self.j.abs() / (-2.0 * self.h).sqrt()
        };
        let mut hi = 2.0 * self.u_cc / (-self.h) + lo;
        debug_assert!(phi(hi) < 0.0);
        for _ in 0..200 {
            if (hi - lo) <= 1e-15 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if phi(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Solve the energy relation for the (nu, r) locus. For j = 0 the curve is
/// the ejection-collision arch from (+sqrt(2U), 0) to (-sqrt(2U), 0) closed
/// by the floor r = 0; for 0 < |j| < j_critical it is an oval.
pub fn rest_cycle_curve(
    cc: &CentralConfiguration,
    h: f64,
    j: f64,
    n_samples: usize,
) -> Result<RestCycleCurve> {
    if !(h < 0.0) {
        return Err(Error::InvalidInput(format!("the bounded family needs h < 0, got {h}")));
    }
    if n_samples < 2 {
        return Err(Error::InvalidInput("n_samples must be at least 2".into()));
    }
    let u = cc.u_value;
    let nu_star = cc.nu_star;
    let j_critical = critical_angular_momentum(u, h);
    if j.abs() > j_critical * (1.0 + 1e-14) {
        return Err(Error::EmptyFamily { j_critical });
    }

    let mut samples = Vec::new();
    if j == 0.0 {
        // Arch sampled uniformly in nu (odd count, so nu = 0 and the
        // maximum size are hit exactly), then the floor back.
        let k = (n_samples | 1).max(3);
        for i in 0..k {
            let nu = nu_star * (1.0 - 2.0 * i as f64 / (k - 1) as f64);
            let r = (u - 0.5 * nu * nu) / (-h);
            samples.push((nu, r.max(0.0)));
        }
        for i in 1..k {
            let nu = -nu_star + 2.0 * nu_star * i as f64 / (k - 1) as f64;
            samples.push((nu, 0.0));
        }
    } else {
        // Oval between the two positive roots of 2 h r^2 + 2 U r - j^2.
        let disc = (u * u + 2.0 * h * j * j).max(0.0).sqrt();
        let r_lo = (disc - u) / (2.0 * h);
        let r_hi = -(u + disc) / (2.0 * h);
        let k = (n_samples / 2).max(2);
        let nu_at = |r: f64| (2.0 * h * r - j * j / r + 2.0 * u).max(0.0).sqrt();
        for i in 0..k {
            let r = r_lo + (r_hi - r_lo) * i as f64 / (k - 1) as f64;
            samples.push((nu_at(r), r));
        }
        for i in (1..k - 1).rev() {
            let r = r_lo + (r_hi - r_lo) * i as f64 / (k - 1) as f64;
            samples.push((-nu_at(r), r));
        }
    }
    Ok(RestCycleCurve { h, j, u_cc: u, samples, arch_endpoints: (nu_star, -nu_star) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::central::{lagrange_configuration, Orientation};
    use crate::flows::unpack_newtonian;
    use crate::newton::energy_and_momenta;
    use crate::shape::shape_of;

    fn equal3() -> MassSystem {
        MassSystem::equal(3).unwrap()
    }

    #[test]
    fn circular_kepler_orbit() {
        let st = KeplerState::circular(1.0, 1.0).unwrap();
        let run = kepler_solve(&st, (0.0, std::f64::consts::TAU), 1e-10).unwrap();
        assert!(run.collision.is_none());
        // |lambda| stays on the unit circle to tolerance.
        for state in &run.trajectory.states {
            let r = (state[0] * state[0] + state[1] * state[1]).sqrt();
            assert!((r - 1.0).abs() <= 1e-8);
        }
        // And lambda(t) = e^{it}.
        let (l, _) = run.lambda_at(1.0).unwrap();
        assert!((l - C64::from_polar(1.0, 1.0)).norm() < 1e-8);
        assert!(run.drift.max_abs("E").unwrap() <= 1e-10);
        assert!(run.drift.max_abs("L").unwrap() <= 1e-10);
    }

    #[test]
    fn radial_drop_collision_time() {
        // mu = 3, lambda0 = 1, at rest: the fall time is
        // pi / (2 sqrt(2 mu)), derived from the energy integral
        // t_c = integral_0^1 dx / sqrt(2 mu (1/x - 1)).
        let mu = 3.0;
        let st = KeplerState::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), mu).unwrap();
        let run = kepler_solve(&st, (0.0, 2.0), 1e-11).unwrap();
        let collision = run.collision.expect("must reach the cutoff");

        // Quadrature oracle via x = sin^2(theta): t_c = int 2 sin^2 / sqrt(2mu).
        let n = 200_000;
        let mut oracle = 0.0;
        for i in 0..n {
            let theta = std::f64::consts::FRAC_PI_2 * (i as f64 + 0.5) / n as f64;
            oracle += 2.0 * theta.sin().powi(2);
        }
        oracle *= std::f64::consts::FRAC_PI_2 / n as f64 / (2.0 * mu).sqrt();

        let closed_form = std::f64::consts::PI / (2.0 * (2.0 * mu).sqrt());
        assert!((oracle - closed_form).abs() < 1e-10);
        assert!(
            (collision.t_collision - closed_form).abs() < 1e-8,
            "estimate {} vs {}",
            collision.t_collision,
            closed_form
        );
        assert!(collision.radius_at_stop <= KEPLER_COLLISION_RADIUS * 1.01);
    }

    #[test]
    fn time_reversal() {
        let st = KeplerState::new(C64::new(1.2, 0.0), C64::new(0.1, 0.8), 2.0).unwrap();
        let fwd = kepler_solve(&st, (0.0, 3.0), 1e-11).unwrap();
        let yf = fwd.trajectory.final_state();
        let back_state =
            KeplerState::new(C64::new(yf[0], yf[1]), C64::new(-yf[2], -yf[3]), 2.0).unwrap();
        let back = kepler_solve(&back_state, (0.0, 3.0), 1e-11).unwrap();
        let y0 = back.trajectory.final_state();
        assert!((y0[0] - 1.2).abs() < 1e-8);
        assert!(y0[1].abs() < 1e-8);
        assert!((y0[2] + 0.1).abs() < 1e-8);
        assert!((y0[3] + 0.8).abs() < 1e-8);
    }

    #[test]
    fn circular_homographic_orbit_keeps_shape() {
        let sys = equal3();
        let cc = lagrange_configuration(&sys, Orientation::Positive).unwrap();
        let st = KeplerState::circular(cc.u_value, 1.0).unwrap();
        let period = std::f64::consts::TAU / cc.u_value.sqrt();
        let orbit = homographic_orbit(&sys, &cc, &st, (0.0, period), 1e-9).unwrap();
        assert!(orbit.max_residual <= 1e-8, "residual {}", orbit.max_residual);

        // The shape-sphere point never moves.
        let pole = shape_of(&sys, &cc.s_cc).unwrap();
        for state in orbit.trajectory.states.iter().step_by(5) {
            let (q, _) = unpack_newtonian(state);
            let centered = crate::newton::center_configuration(&sys, &q).unwrap();
            let w = shape_of(&sys, &centered).unwrap();
            assert!(w.dist(&pole) <= 1e-10);
        }
    }

    #[test]
    fn homothetic_member_has_zero_j() {
        let sys = equal3();
        let cc = lagrange_configuration(&sys, Orientation::Positive).unwrap();
        let st = KeplerState::from_energy_momentum(cc.u_value, -1.0, 0.0).unwrap();
        assert_eq!(st.lambda_dot, C64::new(0.0, 0.0));
        let orbit = homographic_orbit(&sys, &cc, &st, (0.0, 20.0), 1e-10).unwrap();
        assert!(orbit.kepler.collision.is_some(), "homothetic drop must collide");
        for state in orbit.trajectory.states.iter().step_by(7) {
            let (q, v) = unpack_newtonian(state);
            let em = energy_and_momenta(&sys, &q, &v, 0.0).unwrap();
            assert!(em.angular_momentum.abs() <= 1e-10);
        }
    }

    #[test]
    fn elliptic_member_conserves_h_and_j() {
        let sys = equal3();
        let cc = lagrange_configuration(&sys, Orientation::Positive).unwrap();
        let (h, j) = (-1.0, 1.0);
        let st = KeplerState::from_energy_momentum(cc.u_value, h, j).unwrap();
        assert!((st.energy() - h).abs() < 1e-12);
        assert!((st.angular_momentum() - j).abs() < 1e-12);

        let orbit = homographic_orbit(&sys, &cc, &st, (0.0, 12.0), 1e-9).unwrap();
        assert!(orbit.max_residual <= 1e-8, "residual {}", orbit.max_residual);
        let mut h_worst: f64 = 0.0;
        let mut j_worst: f64 = 0.0;
        for state in &orbit.trajectory.states {
            let (q, v) = unpack_newtonian(state);
            let em = energy_and_momenta(&sys, &q, &v, 0.0).unwrap();
            h_worst = h_worst.max((em.total - h).abs());
            j_worst = j_worst.max((em.angular_momentum - j).abs());
        }
        assert!(h_worst <= 1e-7, "H drift {h_worst}");
        assert!(j_worst <= 1e-7, "J drift {j_worst}");

        // N-body energy equals the Kepler energy along the run.
        for (state, kstate) in orbit
            .trajectory
            .states
            .iter()
            .zip(&orbit.kepler.trajectory.states)
            .step_by(3)
        {
            let (q, v) = unpack_newtonian(state);
            let em = energy_and_momenta(&sys, &q, &v, 0.0).unwrap();
            let r = (kstate[0] * kstate[0] + kstate[1] * kstate[1]).sqrt();
            let e_kep =
                0.5 * (kstate[2] * kstate[2] + kstate[3] * kstate[3]) - cc.u_value / r;
            assert!((em.total - e_kep).abs() <= 1e-10);
        }
    }

    #[test]
    fn mu_mismatch_is_rejected() {
        let sys = equal3();
        let cc = lagrange_configuration(&sys, Orientation::Positive).unwrap();
        let st = KeplerState::circular(cc.u_value * 1.01, 1.0).unwrap();
        assert!(matches!(
            homographic_orbit(&sys, &cc, &st, (0.0, 1.0), 1e-9),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn rest_cycle_arch() {
        let sys = equal3();
        let cc = lagrange_configuration(&sys, Orientation::Positive).unwrap();
        let curve = rest_cycle_curve(&cc, -1.0, 0.0, 201).unwrap();

        // Arch maximum at nu = 0 is U / (-h) = 3, recomputed from the
        // energy relation.
        assert!((curve.r_max() - 3.0).abs() <= 1e-10);
        let sampled_max = curve.samples.iter().map(|s| s.1).fold(0.0f64, f64::max);
        assert!((sampled_max - 3.0).abs() <= 1e-12);

        // Endpoints at the equilibrium values.
        assert!((curve.arch_endpoints.0 - 6f64.sqrt()).abs() < 1e-12);
        assert!((curve.arch_endpoints.1 + 6f64.sqrt()).abs() < 1e-12);
        let first = curve.samples.first().unwrap();
        assert!((first.0 - 6f64.sqrt()).abs() < 1e-12 && first.1.abs() < 1e-12);

        // Every positive-size sample satisfies the energy relation.
        for (nu, r) in &curve.samples {
            if *r > 0.0 {
                let gap = r * curve.h - 0.5 * nu * nu + curve.u_cc;
                assert!(gap.abs() <= 1e-10, "gap {gap}");
            }
        }
    }

    #[test]
    fn rest_cycle_oval_and_critical_j() {
        let sys = equal3();
        let cc = lagrange_configuration(&sys, Orientation::Positive).unwrap();
        let j_crit = critical_angular_momentum(cc.u_value, -1.0);
        assert!((j_crit - 3.0 / 2f64.sqrt()).abs() < 1e-12);

        // Oval members satisfy the relation with the j^2/(2r) term.
        let curve = rest_cycle_curve(&cc, -1.0, 1.0, 100).unwrap();
        for (nu, r) in &curve.samples {
            assert!(*r > 0.0);
            let gap = r * curve.h - 0.5 * nu * nu - 0.5 * curve.j * curve.j / r + curve.u_cc;
            assert!(gap.abs() <= 1e-10);
        }

        // Beyond the critical value the locus is empty.
        match rest_cycle_curve(&cc, -1.0, j_crit * 1.01, 100) {
            Err(Error::EmptyFamily { j_critical }) => {
                assert!((j_critical - j_crit).abs() < 1e-12)
            }
            other => panic!("expected EmptyFamily, got {other:?}"),
        }

        // At the critical value the oval degenerates to the circular point
        // with nu = 0.
        let curve = rest_cycle_curve(&cc, -1.0, j_crit, 50).unwrap();
        for (nu, r) in &curve.samples {
            assert!(nu.abs() <= 1e-6);
            assert!((r - curve.r_max()).abs() <= 1e-6);
        }
    }

    #[test]
    fn oval_family_converges_to_rest_cycle() {
        let sys = equal3();
        let cc = lagrange_configuration(&sys, Orientation::Positive).unwrap();
        let (u, h) = (cc.u_value, -1.0f64);
        // Match the arch branch r_J(nu) (larger quadratic root) against the
        // J = 0 arch at fixed nu values.
        let arch_r = |nu: f64, j: f64| -> f64 {
            let a = 0.5 * nu * nu - u;
            let disc = (a * a + 2.0 * h * j * j).max(0.0).sqrt();
            // h < 0: the arch branch is (a - disc) / (2h).
            (a - disc) / (2.0 * h)
        };
        let nu_max = 0.9 * (2.0 * u).sqrt();
        let mut prev_sup = f64::INFINITY;
        for j in [1e-2, 1e-3, 1e-4] {
            let mut sup: f64 = 0.0;
            for i in 0..=100 {
                let nu = -nu_max + 2.0 * nu_max * i as f64 / 100.0;
                let r0 = (u - 0.5 * nu * nu) / (-h);
                sup = sup.max((arch_r(nu, j) - r0).abs());
            }
            assert!(sup < prev_sup, "sup distance not decreasing: {sup} vs {prev_sup}");
            prev_sup = sup;
        }
        assert!(prev_sup <= 1e-8, "J = 1e-4 still {prev_sup} away");
    }

}
