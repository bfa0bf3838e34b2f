//! The concrete vector fields packed for the integrator, and trajectory
//! post-processing that needs the field structure.
//!
//! State layouts (flat f64 vectors):
//! * Newtonian: `[q1x, q1y, ..., qnx, qny, v1x, v1y, ..., vnx, vny]`
//! * Blown-up:  `[r, s..., y...]` with s and y laid out like q above
//! * Kepler:    `[lx, ly, vx, vy]` for complex lambda and its derivative

use crate::algebra::{self, C64};
use crate::blowup::{self, BlownUpState};
use crate::central::CentralConfiguration;
use crate::error::{Error, Result};
use crate::newton::{self, Configuration, MassSystem, Velocity};
use crate::ode::{
    EventDirection, EventSpec, Field, IntegrationSpec, Integrator, OdeFailure, Trajectory,
};

/// Newtonian runs hard-stop below this pairwise distance with a
/// CollisionApproach event; the blown-up chart is the tool past this point.
pub const DEFAULT_COLLISION_STOP: f64 = 1e-6;
pub const COLLISION_APPROACH_LABEL: &str = "CollisionApproach";
/// Blown-up time budget for runs that approach equilibria, which is only an
/// asymptotic limit.
pub const DEFAULT_TAU_BUDGET: f64 = 1e3;

pub fn pack_newtonian(q: &Configuration, v: &Velocity) -> Vec<f64> {
    let mut out = algebra::to_flat(&q.points);
    out.extend(algebra::to_flat(&v.vectors));
    out
}

pub fn unpack_newtonian(state: &[f64]) -> (Configuration, Velocity) {
    let half = state.len() / 2;
    (
        Configuration::new(algebra::from_flat(&state[..half])),
        Velocity::new(algebra::from_flat(&state[half..])),
    )
}

pub fn pack_blownup(state: &BlownUpState) -> Vec<f64> {
    let mut out = Vec::with_capacity(1 + 4 * state.s.n());
    out.push(state.r);
    out.extend(algebra::to_flat(&state.s.points));
    out.extend(algebra::to_flat(&state.y.vectors));
    out
}

pub(crate) fn split_blownup(state: &[f64]) -> (f64, Vec<C64>, Vec<C64>) {
    let half = (state.len() - 1) / 2;
    (
        state[0],
        algebra::from_flat(&state[1..1 + half]),
        algebra::from_flat(&state[1 + half..]),
    )
}

/// Validated unpacking of an integrated row back into a blown-up state.
pub fn unpack_blownup(sys: &MassSystem, state: &[f64]) -> Result<BlownUpState> {
    let (r, s, y) = split_blownup(state);
    BlownUpState::new(sys, r.max(0.0), Configuration::new(s), Velocity::new(y))
}

/// d/dt (q, v) = (v, grad U(q)).
pub struct NewtonianFlow<'a> {
    pub sys: &'a MassSystem,
    pub eps_coll: f64,
}

impl Field for NewtonianFlow<'_> {
    fn dim(&self) -> usize {
        4 * self.sys.n()
    }

    fn eval(&self, _t: f64, y: &[f64], dydt: &mut [f64]) -> Result<()> {
        let half = y.len() / 2;
        dydt[..half].copy_from_slice(&y[half..]);
        let q = Configuration::new(algebra::from_flat(&y[..half]));
        let (_, grad) = newton::potential_and_gradient(self.sys, &q, self.eps_coll)?;
        for (slot, g) in dydt[half..].chunks_exact_mut(2).zip(&grad.vectors) {
            slot[0] = g.re;
            slot[1] = g.im;
        }
        Ok(())
    }
}

/// The blown-up field (r', s', y'), defined also at r = 0.
pub struct BlownUpFlow<'a> {
    pub sys: &'a MassSystem,
    pub eps_coll: f64,
}

impl Field for BlownUpFlow<'_> {
    fn dim(&self) -> usize {
        1 + 4 * self.sys.n()
    }

    fn eval(&self, _t: f64, y: &[f64], dydt: &mut [f64]) -> Result<()> {
        let (r, s, yv) = split_blownup(y);
        let (r_dot, s_dot, y_dot) = blowup::blown_up_field_raw(self.sys, r, &s, &yv, self.eps_coll)?;
        dydt[0] = r_dot;
        let half = s.len() * 2;
        for (slot, g) in dydt[1..1 + half].chunks_exact_mut(2).zip(&s_dot) {
            slot[0] = g.re;
            slot[1] = g.im;
        }
        for (slot, g) in dydt[1 + half..].chunks_exact_mut(2).zip(&y_dot) {
            slot[0] = g.re;
            slot[1] = g.im;
        }
        Ok(())
    }
}

/// Complex Kepler field: lambda'' = -mu lambda / |lambda|^3.
pub struct KeplerFlow {
    pub mu: f64,
}

impl Field for KeplerFlow {
    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, _t: f64, y: &[f64], dydt: &mut [f64]) -> Result<()> {
        let lambda = C64::new(y[0], y[1]);
        let r = lambda.norm();
        if r < 1e-13 {
            return Err(Error::DegenerateSize);
        }
        let acc = -self.mu * lambda / (r * r * r);
        dydt[0] = y[2];
        dydt[1] = y[3];
        dydt[2] = acc.re;
        dydt[3] = acc.im;
        Ok(())
    }
}

/// Terminal event that fires when the smallest pairwise distance drops to
/// `stop_dist`, routing the run toward the blown-up chart.
pub fn collision_stop_event(n_bodies: usize, stop_dist: f64) -> EventSpec {
    EventSpec::new(
        COLLISION_APPROACH_LABEL,
        EventDirection::Negative,
        true,
        move |_t, state: &[f64]| {
            let q = algebra::from_flat(&state[..2 * n_bodies]);
            match algebra::min_pairwise(&q) {
                Some((_, _, d)) => d - stop_dist,
                None => 1.0,
            }
        },
    )
}

/// Integrate the Newtonian flow with the collision hard-stop installed.
pub fn integrate_newtonian(
    sys: &MassSystem,
    q0: &Configuration,
    v0: &Velocity,
    span: (f64, f64),
    spec: &IntegrationSpec,
    extra_events: Vec<EventSpec>,
    collision_stop: f64,
) -> std::result::Result<Trajectory, OdeFailure> {
    let flow = NewtonianFlow { sys, eps_coll: newton::DEFAULT_EPS_COLL };
    let y0 = pack_newtonian(q0, v0);
    Integrator::new(spec.clone())
        .with_event(collision_stop_event(sys.n(), collision_stop))
        .with_events(extra_events)
        .run(&flow, &y0, span)
}

/// Rescale the shape block of a blown-up state to unit mass-norm, returning
/// |norm - 1|. Installed after each accepted step when
/// `spec.renormalize_shape` is set.
pub fn shape_renormalizer(sys: &MassSystem) -> impl Fn(&mut [f64]) -> f64 + '_ {
    let n = sys.n();
    move |state: &mut [f64]| {
        let s = algebra::from_flat(&state[1..1 + 2 * n]);
        let norm = sys.norm(&s);
        if norm > 0.0 {
            for v in state[1..1 + 2 * n].iter_mut() {
                *v /= norm;
            }
        }
        (norm - 1.0).abs()
    }
}

/// Integrate the blown-up flow in the rescaled time tau.
pub fn integrate_blownup(
    sys: &MassSystem,
    state0: &BlownUpState,
    span: (f64, f64),
    spec: &IntegrationSpec,
    extra_events: Vec<EventSpec>,
) -> std::result::Result<Trajectory, OdeFailure> {
    let flow = BlownUpFlow { sys, eps_coll: newton::DEFAULT_EPS_COLL };
    let y0 = pack_blownup(state0);
    let mut runner = Integrator::new(spec.clone()).with_events(extra_events);
    if spec.renormalize_shape {
        runner = runner.with_renormalizer(shape_renormalizer(sys));
    }
    runner.run(&flow, &y0, span)
}

/// Largest mass-metric residual |dv/dt - grad U(q)| over the grid nodes of a
/// Newtonian-layout trajectory, with dv/dt taken from the dense output. At
/// the nodes the interpolant's derivative reproduces the integrator's field
/// evaluations, so this certifies that the stored trajectory actually obeys
/// the equations of motion.
pub fn newtonian_residual_at_nodes(
    sys: &MassSystem,
    traj: &Trajectory,
    eps_coll: f64,
) -> Result<f64> {
    let half = 2 * sys.n();
    let mut worst: f64 = 0.0;
    let mut check = |deriv: Vec<f64>, state: &[f64]| -> Result<()> {
        let q = Configuration::new(algebra::from_flat(&state[..half]));
        let (_, grad) = newton::potential_and_gradient(sys, &q, eps_coll)?;
        let acc = algebra::from_flat(&deriv[half..]);
        let diff = algebra::sub(&acc, &grad.vectors);
        worst = worst.max(sys.norm(&diff));
        Ok(())
    };
    if let Some(first) = traj.segments.first() {
        check(first.eval_derivative(0.0), &traj.states[0])?;
    }
    for (i, seg) in traj.segments.iter().enumerate() {
        check(seg.eval_derivative(1.0), &traj.states[i + 1])?;
    }
    Ok(worst)
}

/// Outcome of driving the blown-up flow down a collision arch toward the
/// corresponding equilibrium.
#[derive(Clone, Debug)]
pub struct CollapseReport {
    pub converged: bool,
    pub final_distance: f64,
    pub final_nu: f64,
    pub nu_target: f64,
    pub nu_monotone: bool,
    pub tau_end: f64,
}

/// Distance of a packed blown-up row to the equilibrium
/// (0, s_cc, nu_target s_cc).
fn equilibrium_distance(
    sys: &MassSystem,
    state: &[f64],
    cc: &CentralConfiguration,
    nu_target: f64,
) -> f64 {
    let (r, s, y) = split_blownup(state);
    let ds = algebra::sub(&s, &cc.s_cc.points);
    let y_target = algebra::scale(nu_target, &cc.s_cc.points);
    let dy = algebra::sub(&y, &y_target);
    (r * r + sys.inner(&ds, &ds) + sys.inner(&dy, &dy)).sqrt()
}

const EQUILIBRIUM_REACHED_LABEL: &str = "EquilibriumReached";
/// Terminal radius of the equilibrium neighborhood. Convergence is only
/// asymptotic, and the fixed point is hyperbolic: integrating much past the
/// approach lets roundoff feed the unstable modes, so the run stops here.
const EQUILIBRIUM_CAPTURE: f64 = 1e-7;

fn equilibrium_capture_event(
    sys: &MassSystem,
    cc: &CentralConfiguration,
    nu_target: f64,
) -> EventSpec {
    let sys = sys.clone();
    let cc = cc.clone();
    EventSpec::new(
        EQUILIBRIUM_REACHED_LABEL,
        EventDirection::Negative,
        true,
        move |_t, state: &[f64]| {
            equilibrium_distance(&sys, state, &cc, nu_target) - EQUILIBRIUM_CAPTURE
        },
    )
}

/// Start on the J = 0 arch of energy -1 at small size with nu < 0 and follow
/// the blown-up flow: an honest homothetic collapse. It must fall into the
/// capture neighborhood of the nu = -sqrt(2 U) equilibrium within the tau
/// budget, with nu decreasing monotonically (nu' = r h < 0 on the arch).
/// Non-convergence is reported, not fatal.
pub fn homothetic_collapse_check(
    sys: &MassSystem,
    cc: &CentralConfiguration,
    spec: &IntegrationSpec,
) -> Result<CollapseReport> {
    let h_energy = -1.0;
    let r0 = 0.1f64.min(0.25 * cc.u_value);
    let nu0_sq = 2.0 * (cc.u_value + h_energy * r0);
    if nu0_sq <= 0.0 {
        return Err(Error::InvalidInput(
            "starting size exceeds the arch of the energy level".into(),
        ));
    }
    let nu0 = -nu0_sq.sqrt();
    let y0 = Velocity::new(algebra::scale(nu0, &cc.s_cc.points));
    let state0 = BlownUpState::new(sys, r0, cc.s_cc.clone(), y0)?;

    let mut spec = spec.clone();
    spec.renormalize_shape = true;
    let nu_target = -cc.nu_star;
    let capture = equilibrium_capture_event(sys, cc, nu_target);
    let traj = match integrate_blownup(sys, &state0, (0.0, DEFAULT_TAU_BUDGET), &spec, vec![capture])
    {
        Ok(t) => t,
        Err(failure) => failure.partial,
    };

    let mut nu_monotone = true;
    let mut prev = f64::INFINITY;
    for state in &traj.states {
        let (_, s, y) = split_blownup(state);
        let nu = sys.inner(&s, &y);
        if nu > prev + 1e-10 {
            nu_monotone = false;
        }
        prev = nu;
    }
    let final_state = traj.states.last().expect("trajectory has at least the start");
    let final_distance = equilibrium_distance(sys, final_state, cc, nu_target);
    let (_, s, y) = split_blownup(final_state);
    let final_nu = sys.inner(&s, &y);
    Ok(CollapseReport {
        converged: final_distance <= 1e-6,
        final_distance,
        final_nu,
        nu_target,
        nu_monotone,
        tau_end: traj.end_time(),
    })
}

/// Ejection is the time-reversed collapse: integrate the reversed field from
/// an arch point with nu > 0 and small r; it must approach the
/// nu = +sqrt(2 U) equilibrium as tau -> -infinity.
pub fn homothetic_ejection_check(
    sys: &MassSystem,
    cc: &CentralConfiguration,
    spec: &IntegrationSpec,
) -> Result<CollapseReport> {
    let h_energy = -1.0;
    let r0 = 0.1f64.min(0.25 * cc.u_value);
    let nu0 = (2.0 * (cc.u_value + h_energy * r0)).sqrt();
    let y0 = Velocity::new(algebra::scale(nu0, &cc.s_cc.points));
    let state0 = BlownUpState::new(sys, r0, cc.s_cc.clone(), y0)?;

    let mut spec = spec.clone();
    spec.renormalize_shape = true;
    let nu_target = cc.nu_star;
    let flow = crate::ode::Reversed(BlownUpFlow { sys, eps_coll: newton::DEFAULT_EPS_COLL });
    let y0 = pack_blownup(&state0);
    let runner = Integrator::new(spec.clone())
        .with_event(equilibrium_capture_event(sys, cc, nu_target))
        .with_renormalizer(shape_renormalizer(sys));
    let traj = match runner.run(&flow, &y0, (0.0, DEFAULT_TAU_BUDGET)) {
        Ok(t) => t,
        Err(failure) => failure.partial,
    };
    let final_state = traj.states.last().expect("trajectory has at least the start");
    let final_distance = equilibrium_distance(sys, final_state, cc, nu_target);
    let (_, s, y) = split_blownup(final_state);
    Ok(CollapseReport {
        converged: final_distance <= 1e-6,
        final_distance,
        final_nu: sys.inner(&s, &y),
        nu_target,
        nu_monotone: true,
        tau_end: traj.end_time(),
    })
}

/// Convenience wrapper for conservation tests: integrate one Newtonian run
/// and report the drift of H and J.
pub fn conservation_drift(
    sys: &MassSystem,
    traj: &Trajectory,
) -> crate::ode::DriftReport {
    let sys_h = sys.clone();
    let sys_j = sys.clone();
    let energy = move |_t: f64, state: &[f64]| {
        let (q, v) = unpack_newtonian(state);
        newton::energy_and_momenta(&sys_h, &q, &v, 0.0)
            .map(|em| em.total)
            .unwrap_or(f64::NAN)
    };
    let angular = move |_t: f64, state: &[f64]| {
        let (q, v) = unpack_newtonian(state);
        newton::energy_and_momenta(&sys_j, &q, &v, 0.0)
            .map(|em| em.angular_momentum)
            .unwrap_or(f64::NAN)
    };
    crate::ode::invariant_drift(traj, &[("H", &energy), ("J", &angular)])
}
