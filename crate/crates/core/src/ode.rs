//! Adaptive explicit Runge-Kutta integration shared by the Newtonian,
//! blown-up, and Kepler flows.
//!
//! The stepper is the Dormand-Prince 5(4) embedded pair with its standard
//! fourth-order continuous extension. Events are located on the dense output
//! by sign-change bracketing and bisection. An optional post-step projection
//! hook renormalizes the shape part of blown-up states and reports the size
//! of each adjustment.

use serde::Serialize;

use crate::error::Error;

/// A first-order ODE right-hand side on flat state vectors. Evaluation may
/// fail (e.g. near a collision); failures abort the integration and are
/// returned together with the partial trajectory.
pub trait Field {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<(), Error>;
}

/// Reverse an autonomous field: integrating `Reversed(f)` forward traces the
/// original flow backward in time.
pub struct Reversed<F>(pub F);

impl<F: Field> Field for Reversed<F> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<(), Error> {
        self.0.eval(t, y, dydt)?;
        for v in dydt.iter_mut() {
            *v = -*v;
        }
        Ok(())
    }
}

/// Step-size and budget controls.
#[derive(Clone, Debug, Serialize)]
pub struct IntegrationSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on the step size; 0 means unrestricted.
    pub max_step: f64,
    /// Starting step size; 0 selects one automatically.
    pub initial_step: f64,
    pub max_steps: usize,
    /// Rescale the shape block to unit mass-norm after each accepted step.
    /// Only meaningful for blown-up flows; the flow driver installs the
    /// actual projection.
    pub renormalize_shape: bool,
}

impl Default for IntegrationSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: 0.0,
            initial_step: 0.0,
            max_steps: 1_000_000,
            renormalize_shape: false,
        }
    }
}

impl IntegrationSpec {
    pub fn with_tol(rel_tol: f64, abs_tol: f64) -> Self {
        Self { rel_tol, abs_tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidInput("max_steps must be positive".into()));
        }
        if self.max_step < 0.0 || self.initial_step < 0.0 {
            return Err(Error::InvalidInput("step bounds must be non-negative".into()));
        }
        Ok(())
    }
}

/// Which way an event function must cross zero to count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EventDirection {
    Positive,
    Negative,
    Any,
}

/// A scalar event function with a direction filter. Terminal events stop the
/// integration at the located root.
pub struct EventSpec {
    pub label: String,
    pub direction: EventDirection,
    pub terminal: bool,
    g: Box<dyn Fn(f64, &[f64]) -> f64>,
}

impl EventSpec {
    pub fn new(
        label: impl Into<String>,
        direction: EventDirection,
        terminal: bool,
        g: impl Fn(f64, &[f64]) -> f64 + 'static,
    ) -> Self {
        Self { label: label.into(), direction, terminal, g: Box::new(g) }
    }

    pub fn value(&self, t: f64, y: &[f64]) -> f64 {
        (self.g)(t, y)
    }
}

/// A located event occurrence.
#[derive(Clone, Debug, PartialEq)]
pub struct EventRecord {
    pub label: String,
    pub t: f64,
    pub state: Vec<f64>,
    /// True when the event function crossed from negative to positive.
    pub increasing: bool,
}

/// Why an integration stopped.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum Termination {
    SpanEnd,
    TerminalEvent { label: String, t: f64 },
}

/// Dense-output coefficients of one accepted step, a quartic interpolant
/// that matches the states and derivatives at both endpoints.
#[derive(Clone, Debug)]
pub struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    rcont: [Vec<f64>; 5],
}

impl DenseSegment {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// State at t0 + theta * h, theta in [0, 1].
    pub fn eval(&self, theta: f64) -> Vec<f64> {
        let th1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        r1.iter()
            .zip(r2.iter().zip(r3.iter().zip(r4.iter().zip(r5.iter()))))
            .map(|(a, (b, (c, (d, e))))| a + theta * (b + th1 * (c + theta * (d + th1 * e))))
            .collect()
    }

    /// Time derivative of the interpolant at t0 + theta * h.
    pub fn eval_derivative(&self, theta: f64) -> Vec<f64> {
        let [_, r2, r3, r4, r5] = &self.rcont;
        let c3 = 1.0 - 2.0 * theta;
        let c4 = theta * (2.0 - 3.0 * theta);
        let c5 = theta * (2.0 - 6.0 * theta + 4.0 * theta * theta);
        r2.iter()
            .zip(r3.iter().zip(r4.iter().zip(r5.iter())))
            .map(|(b, (c, (d, e)))| (b + c3 * c + c4 * d + c5 * e) / self.h)
            .collect()
    }
}

/// Result of an integration: the accepted grid, per-step dense output,
/// located events, and how the run ended.
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub segments: Vec<DenseSegment>,
    pub events: Vec<EventRecord>,
    pub termination: Termination,
    /// |norm - 1| of the projected block before each post-step rescale;
    /// empty when no projection hook was installed.
    pub renorm_magnitudes: Vec<f64>,
    pub spec: IntegrationSpec,
    pub n_accepted: usize,
    pub n_rejected: usize,
    pub n_field_evals: usize,
}

impl std::fmt::Debug for Trajectory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trajectory")
            .field("span", &(self.start_time(), self.end_time()))
            .field("points", &self.t.len())
            .field("events", &self.events.len())
            .field("termination", &self.termination)
            .field("n_accepted", &self.n_accepted)
            .field("n_rejected", &self.n_rejected)
            .finish_non_exhaustive()
    }
}

impl Trajectory {
    pub fn start_time(&self) -> f64 {
        self.t[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.t.last().unwrap()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    fn locate_segment(&self, t: f64) -> Option<&DenseSegment> {
        if self.segments.is_empty() {
            return None;
        }
        let first = self.segments.first().unwrap();
        let last = self.segments.last().unwrap();
        let slack = 1e-12 * (1.0 + t.abs());
        if t < first.t0 - slack || t > last.t1() + slack {
            return None;
        }
        let idx = self
            .segments
            .partition_point(|seg| seg.t1() < t)
            .min(self.segments.len() - 1);
        Some(&self.segments[idx])
    }

    /// Dense-output state at any time inside the covered span.
    pub fn sample(&self, t: f64) -> Option<Vec<f64>> {
        if self.segments.is_empty() {
            if !self.t.is_empty() && (t - self.t[0]).abs() <= 1e-12 * (1.0 + t.abs()) {
                return Some(self.states[0].clone());
            }
            return None;
        }
        let seg = self.locate_segment(t)?;
        let theta = ((t - seg.t0) / seg.h).clamp(0.0, 1.0);
        Some(seg.eval(theta))
    }

    /// Dense-output time derivative at any time inside the covered span.
    pub fn sample_derivative(&self, t: f64) -> Option<Vec<f64>> {
        let seg = self.locate_segment(t)?;
        let theta = ((t - seg.t0) / seg.h).clamp(0.0, 1.0);
        Some(seg.eval_derivative(theta))
    }

    /// Apply a linear map to every stored state and dense coefficient.
    /// The map must be linear for the interpolants to stay valid.
    pub fn map_linear(&self, map: impl Fn(&[f64]) -> Vec<f64>) -> Trajectory {
        Trajectory {
            t: self.t.clone(),
            states: self.states.iter().map(|s| map(s)).collect(),
            segments: self
                .segments
                .iter()
                .map(|seg| DenseSegment {
                    t0: seg.t0,
                    h: seg.h,
                    rcont: [
                        map(&seg.rcont[0]),
                        map(&seg.rcont[1]),
                        map(&seg.rcont[2]),
                        map(&seg.rcont[3]),
                        map(&seg.rcont[4]),
                    ],
                })
                .collect(),
            events: self
                .events
                .iter()
                .map(|e| EventRecord {
                    label: e.label.clone(),
                    t: e.t,
                    state: map(&e.state),
                    increasing: e.increasing,
                })
                .collect(),
            termination: self.termination.clone(),
            renorm_magnitudes: self.renorm_magnitudes.clone(),
            spec: self.spec.clone(),
            n_accepted: self.n_accepted,
            n_rejected: self.n_rejected,
            n_field_evals: self.n_field_evals,
        }
    }
}

/// Failure modes of `integrate`; the trajectory computed so far rides along.
#[derive(Debug)]
pub struct OdeFailure {
    pub kind: OdeFailureKind,
    pub partial: Trajectory,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OdeFailureKind {
    #[error("step size underflow at t = {t:.6e} (h = {h:.3e}); the problem looks stiff or singular here")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget of {limit} exceeded at t = {t:.6e}")]
    Budget { limit: usize, t: f64 },
    #[error("field evaluation failed at t = {t:.6e}: {source}")]
    FieldError { t: f64, source: Error },
}

impl std::fmt::Display for OdeFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.kind)
    }
}

impl std::error::Error for OdeFailure {}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [0.2];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const A7: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
// Difference between the 5th and 4th order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Weights of the quartic dense-output term.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
/// Bisection width target for event location in the independent variable.
const EVENT_T_TOL: f64 = 1e-13;
/// Sub-nodes scanned for sign changes inside one accepted step.
const EVENT_SUBDIV: usize = 8;

/// Integration driver. Holds the events and the optional post-step
/// projection so the generic stepper stays ignorant of state layout.
pub struct Integrator<'a> {
    spec: IntegrationSpec,
    events: Vec<EventSpec>,
    renormalizer: Option<Box<dyn Fn(&mut [f64]) -> f64 + 'a>>,
}

impl<'a> Integrator<'a> {
    pub fn new(spec: IntegrationSpec) -> Self {
        Self { spec, events: Vec::new(), renormalizer: None }
    }

    pub fn with_event(mut self, event: EventSpec) -> Self {
        self.events.push(event);
        self
    }

    pub fn with_events(mut self, events: Vec<EventSpec>) -> Self {
        self.events.extend(events);
        self
    }

    /// Install a post-step projection; it adjusts the state in place and
    /// returns the magnitude of the adjustment.
    pub fn with_renormalizer(mut self, f: impl Fn(&mut [f64]) -> f64 + 'a) -> Self {
        self.renormalizer = Some(Box::new(f));
        self
    }

    pub fn run(
        &self,
        field: &dyn Field,
        y0: &[f64],
        span: (f64, f64),
    ) -> Result<Trajectory, OdeFailure> {
        integrate_inner(field, y0, span, &self.spec, &self.events, self.renormalizer.as_deref())
    }
}

/// One-call form without events or projection.
pub fn integrate(
    field: &dyn Field,
    y0: &[f64],
    span: (f64, f64),
    spec: &IntegrationSpec,
) -> Result<Trajectory, OdeFailure> {
    integrate_inner(field, y0, span, spec, &[], None)
}

fn empty_trajectory(t0: f64, y0: &[f64], spec: &IntegrationSpec) -> Trajectory {
    Trajectory {
        t: vec![t0],
        states: vec![y0.to_vec()],
        segments: Vec::new(),
        events: Vec::new(),
        termination: Termination::SpanEnd,
        renorm_magnitudes: Vec::new(),
        spec: spec.clone(),
        n_accepted: 0,
        n_rejected: 0,
        n_field_evals: 0,
    }
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], rel: f64, abs: f64) -> f64 {
    let n = err.len() as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = abs + rel * a.abs().max(b.abs());
            let q = e / sc;
            q * q
        })
        .sum();
    (sum / n).sqrt()
}

/// Starting step size from the local derivative scale (skipped when the
/// probe evaluation fails; a conservative fallback is used instead).
fn initial_step_guess(
    field: &dyn Field,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    span: f64,
    rel: f64,
    abs: f64,
    evals: &mut usize,
) -> f64 {
    let dim = y0.len() as f64;
    let sc = |y: &f64| abs + rel * y.abs();
    let d0 = (y0.iter().map(|v| (v / sc(v)).powi(2)).sum::<f64>() / dim).sqrt();
    let d1 = (f0
        .iter()
        .zip(y0)
        .map(|(f, y)| (f / sc(y)).powi(2))
        .sum::<f64>()
        / dim)
        .sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    *evals += 1;
    if field.eval(t0 + h0, &y1, &mut f1).is_err() {
        return (h0 * 1e-2).max(1e-10);
    }
    let d2 = (f1
        .iter()
        .zip(f0.iter().zip(y0))
        .map(|(a, (b, y))| ((a - b) / sc(y)).powi(2))
        .sum::<f64>()
        / dim)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

fn integrate_inner(
    field: &dyn Field,
    y0: &[f64],
    span: (f64, f64),
    spec: &IntegrationSpec,
    events: &[EventSpec],
    renormalizer: Option<&(dyn Fn(&mut [f64]) -> f64 + '_)>,
) -> Result<Trajectory, OdeFailure> {
    let (t0, t_end) = span;
    if let Err(e) = spec.validate() {
        return Err(OdeFailure { kind: OdeFailureKind::FieldError { t: t0, source: e }, partial: empty_trajectory(t0, y0, spec) });
    }
    if !(t_end > t0) {
        return Err(OdeFailure {
            kind: OdeFailureKind::FieldError {
                t: t0,
                source: Error::InvalidInput(format!("degenerate span [{t0}, {t_end}]")),
            },
            partial: empty_trajectory(t0, y0, spec),
        });
    }
    let dim = field.dim();
    assert_eq!(y0.len(), dim, "state dimension mismatch");

    let mut traj = empty_trajectory(t0, y0, spec);
    let max_step = if spec.max_step > 0.0 { spec.max_step } else { f64::INFINITY };

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];

    traj.n_field_evals += 1;
    if let Err(e) = field.eval(t, &y, &mut k[0]) {
        return Err(OdeFailure { kind: OdeFailureKind::FieldError { t, source: e }, partial: traj });
    }

    let mut h = if spec.initial_step > 0.0 {
        spec.initial_step
    } else {
        initial_step_guess(
            field,
            t,
            &y,
            &k[0],
            t_end - t0,
            spec.rel_tol,
            spec.abs_tol,
            &mut traj.n_field_evals,
        )
    };
    h = h.min(max_step).min(t_end - t0);

    let mut g_prev: Vec<f64> = events.iter().map(|ev| ev.value(t, &y)).collect();
    let mut rejected_last = false;
    let mut y_next = vec![0.0; dim];
    let mut y_stage = vec![0.0; dim];
    let mut err_vec = vec![0.0; dim];

    loop {
        let span_left = t_end - t;
        if span_left <= 1e-14 * (1.0 + t.abs()) {
            traj.termination = Termination::SpanEnd;
            return Ok(traj);
        }
        if traj.n_accepted + traj.n_rejected >= spec.max_steps {
            return Err(OdeFailure {
                kind: OdeFailureKind::Budget { limit: spec.max_steps, t },
                partial: traj,
            });
        }
        h = h.min(max_step).min(span_left);
        if h < 1e-14 * (1.0 + t.abs()) {
            return Err(OdeFailure { kind: OdeFailureKind::StepUnderflow { t, h }, partial: traj });
        }

        // Stages 2..7 (k1 carries over: first-same-as-last).
        let a_rows: [&[f64]; 6] = [&A2, &A3, &A4, &A5, &A6, &A7];
        let mut stage_failed = None;
        for (stage, a_row) in a_rows.iter().enumerate() {
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, aij) in a_row.iter().enumerate() {
                    acc += aij * k[j][i];
                }
                y_stage[i] = y[i] + h * acc;
            }
            traj.n_field_evals += 1;
            if let Err(e) = field.eval(t + C[stage + 1] * h, &y_stage, &mut k[stage + 1]) {
                stage_failed = Some(e);
                break;
            }
        }
        if let Some(e) = stage_failed {
            return Err(OdeFailure { kind: OdeFailureKind::FieldError { t, source: e }, partial: traj });
        }
        // The 7th stage already evaluated the order-5 solution.
        y_next.copy_from_slice(&y_stage);

        for i in 0..dim {
            let mut acc = 0.0;
            for (j, ej) in E.iter().enumerate() {
                acc += ej * k[j][i];
            }
            err_vec[i] = h * acc;
        }
        let err = error_norm(&err_vec, &y, &y_next, spec.rel_tol, spec.abs_tol);

        if !(err <= 1.0) || !y_next.iter().all(|v| v.is_finite()) {
            traj.n_rejected += 1;
            rejected_last = true;
            let fac = if err.is_finite() && err > 0.0 {
                (SAFETY * err.powf(-0.2)).max(FAC_MIN)
            } else {
                FAC_MIN
            };
            h *= fac.min(1.0);
            continue;
        }

        // Accepted. Optionally project, then finish the dense output with
        // the derivative at the (projected) endpoint.
        let t_new = t + h;
        let mut renorm_mag = None;
        if let Some(project) = renormalizer {
            let mag = project(&mut y_next);
            renorm_mag = Some(mag);
            traj.n_field_evals += 1;
            if let Err(e) = field.eval(t_new, &y_next, &mut k[6]) {
                return Err(OdeFailure { kind: OdeFailureKind::FieldError { t: t_new, source: e }, partial: traj });
            }
        }

        let mut rcont = [
            y.clone(),
            vec![0.0; dim],
            vec![0.0; dim],
            vec![0.0; dim],
            vec![0.0; dim],
        ];
        for i in 0..dim {
            let ydiff = y_next[i] - y[i];
            let bspl = h * k[0][i] - ydiff;
            rcont[1][i] = ydiff;
            rcont[2][i] = bspl;
            rcont[3][i] = ydiff - h * k[6][i] - bspl;
            let mut acc = 0.0;
            for (j, dj) in D.iter().enumerate() {
                acc += dj * k[j][i];
            }
            rcont[4][i] = h * acc;
        }
        let segment = DenseSegment { t0: t, h, rcont };

        // Locate events on this step.
        let mut step_records: Vec<(f64, usize, EventRecord)> = Vec::new();
        for (ei, ev) in events.iter().enumerate() {
            let g_end = ev.value(t_new, &y_next);
            scan_events(ev, ei, &segment, g_prev[ei], g_end, &mut step_records);
            g_prev[ei] = g_end;
        }
        step_records.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        let mut terminal: Option<(f64, EventRecord)> = None;
        for (te, ei, rec) in step_records {
            if events[ei].terminal {
                terminal = Some((te, rec));
                break;
            }
            traj.events.push(rec);
        }

        traj.segments.push(segment);
        if let Some(mag) = renorm_mag {
            traj.renorm_magnitudes.push(mag);
        }
        traj.n_accepted += 1;

        if let Some((te, rec)) = terminal {
            traj.t.push(te);
            traj.states.push(rec.state.clone());
            traj.termination = Termination::TerminalEvent { label: rec.label.clone(), t: te };
            traj.events.push(rec);
            return Ok(traj);
        }

        traj.t.push(t_new);
        traj.states.push(y_next.clone());
        t = t_new;
        std::mem::swap(&mut y, &mut y_next);
        let k6_copy = k[6].clone();
        k[0].copy_from_slice(&k6_copy);

        let fac = if err > 0.0 {
            (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
        } else {
            FAC_MAX
        };
        h *= if rejected_last { fac.min(1.0) } else { fac };
        rejected_last = false;
    }
}

/// Scan one accepted step for sign changes of an event function on the dense
/// output and bisect each bracket down to `EVENT_T_TOL`.
fn scan_events(
    ev: &EventSpec,
    ev_index: usize,
    seg: &DenseSegment,
    g_start: f64,
    g_end: f64,
    out: &mut Vec<(f64, usize, EventRecord)>,
) {
    let g_at = |theta: f64| -> f64 {
        if theta <= 0.0 {
            g_start
        } else if theta >= 1.0 {
            g_end
        } else {
            let y = seg.eval(theta);
            ev.value(seg.t0 + theta * seg.h, &y)
        }
    };
    let mut theta_a = 0.0;
    let mut g_a = g_start;
    for i in 1..=EVENT_SUBDIV {
        let theta_b = i as f64 / EVENT_SUBDIV as f64;
        let g_b = g_at(theta_b);
        let crossing = (g_a < 0.0 && g_b >= 0.0) || (g_a > 0.0 && g_b <= 0.0);
        if crossing {
            let increasing = g_a < 0.0;
            let wanted = match ev.direction {
                EventDirection::Positive => increasing,
                EventDirection::Negative => !increasing,
                EventDirection::Any => true,
            };
            if wanted {
                let (mut lo, mut hi, mut g_lo) = (theta_a, theta_b, g_a);
                while (hi - lo) * seg.h.abs() > EVENT_T_TOL {
                    let mid = 0.5 * (lo + hi);
                    let g_mid = g_at(mid);
                    if (g_lo < 0.0) == (g_mid < 0.0) && g_mid != 0.0 {
                        lo = mid;
                        g_lo = g_mid;
                    } else {
                        hi = mid;
                    }
                }
                let theta_e = 0.5 * (lo + hi);
                let te = seg.t0 + theta_e * seg.h;
                out.push((
                    te,
                    ev_index,
                    EventRecord {
                        label: ev.label.clone(),
                        t: te,
                        state: seg.eval(theta_e),
                        increasing,
                    },
                ));
            }
        }
        theta_a = theta_b;
        g_a = g_b;
    }
}

/// Per-invariant drift of scalar functions along a trajectory.
#[derive(Clone, Debug, Serialize)]
pub struct DriftEntry {
    pub label: String,
    pub initial: f64,
    pub max_abs_drift: f64,
    pub max_rel_drift: f64,
    /// Set when the drift exceeds 100x the integration tolerance.
    pub flagged: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct DriftReport {
    pub entries: Vec<DriftEntry>,
}

impl DriftReport {
    pub fn flagged(&self) -> bool {
        self.entries.iter().any(|e| e.flagged)
    }

    pub fn max_abs(&self, label: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.label == label).map(|e| e.max_abs_drift)
    }
}

/// Evaluate each invariant on every grid state and report the largest
/// departure from its initial value.
pub fn invariant_drift(
    traj: &Trajectory,
    invariants: &[(&str, &dyn Fn(f64, &[f64]) -> f64)],
) -> DriftReport {
    let mut entries = Vec::with_capacity(invariants.len());
    let tol = 100.0 * (traj.spec.rel_tol + traj.spec.abs_tol);
    for (label, f) in invariants {
        let initial = f(traj.t[0], &traj.states[0]);
        let mut max_abs: f64 = 0.0;
        for (t, y) in traj.t.iter().zip(&traj.states) {
            max_abs = max_abs.max((f(*t, y) - initial).abs());
        }
        let scale = initial.abs().max(1e-300);
        entries.push(DriftEntry {
            label: (*label).to_string(),
            initial,
            max_abs_drift: max_abs,
            max_rel_drift: max_abs / scale,
            flagged: max_abs > tol * initial.abs().max(1.0),
        });
    }
    DriftReport { entries }
}
