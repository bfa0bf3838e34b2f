//! Central configurations and their blown-up equilibria.
//!
//! A central configuration is a critical point of U restricted to the unit
//! sphere of the center-of-mass space, equivalently a zero of the residual
//! `R(s) = grad U(s) + U(s) s` (the multiplier is forced to U(s) by Euler's
//! identity for the degree -1 homogeneous U). Each certified shape yields the
//! two fixed points (0, s_cc, +/- sqrt(2 U(s_cc)) s_cc) of the blown-up flow.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::{self, C64};
use crate::blowup::BlownUpState;
use crate::error::{Error, Result};
use crate::newton::{
    center_configuration, potential_and_gradient, Configuration, MassSystem, Velocity,
    DEFAULT_EPS_COLL,
};
use crate::shape;

/// Default residual tolerance for certified configurations.
pub const DEFAULT_REFINE_TOL: f64 = 1e-12;
/// Shape-space distance below which two configurations count as the same
/// class (rotations quotiented, reflections kept).
pub const DEFAULT_DEDUP_TOL: f64 = 1e-6;
/// Refinement aborts when the shape drifts this close to a binary collision.
const COLLISION_GUARD: f64 = 1e-3;
/// Finite-difference step for the projected Jacobian.
const FD_STEP: f64 = 1e-7;

/// Triangle orientation by the sign of the signed area in body order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Orientation {
    Positive,
    Negative,
}

/// Classification of a certified configuration. `middle` is a 1-based body
/// index, matching syzygy symbols.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CcTag {
    LagrangePlus,
    LagrangeMinus,
    Euler { middle: usize },
    Other,
}

impl CcTag {
    fn rank(&self) -> usize {
        match self {
            CcTag::LagrangePlus => 0,
            CcTag::LagrangeMinus => 1,
            CcTag::Euler { middle } => 2 + middle,
            CcTag::Other => 9,
        }
    }
}

impl std::fmt::Display for CcTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CcTag::LagrangePlus => write!(f, "L+"),
            CcTag::LagrangeMinus => write!(f, "L-"),
            CcTag::Euler { middle } => write!(f, "E{middle}"),
            CcTag::Other => write!(f, "?"),
        }
    }
}

/// A certified central configuration: unit-size centered shape, its
/// potential value, nu* = sqrt(2 U), and the certified residual.
#[derive(Clone, Debug)]
pub struct CentralConfiguration {
    pub s_cc: Configuration,
    pub u_value: f64,
    pub nu_star: f64,
    pub residual: f64,
    pub tag: CcTag,
}

/// A fixed point of the blown-up flow over a central configuration:
/// (r, s, y) = (0, s_cc, sign * sqrt(2 U) * s_cc).
#[derive(Clone, Debug)]
pub struct Equilibrium {
    pub state: BlownUpState,
    pub sign: f64,
}

/// R(s) = grad U(s) + U(s) s and U(s), for unit-size centered shapes.
fn residual_parts(sys: &MassSystem, s: &[C64]) -> Result<(f64, Vec<C64>)> {
    let shape = Configuration::new(s.to_vec());
    let (u, grad) = potential_and_gradient(sys, &shape, DEFAULT_EPS_COLL)?;
    Ok((u, algebra::axpy(u, s, &grad.vectors)))
}

/// Mass-metric norm of the shape-equation residual at `s` (U recomputed
/// from scratch). The certification route used by every finder.
pub fn cc_residual(sys: &MassSystem, s: &Configuration) -> Result<f64> {
    let (_, r) = residual_parts(sys, &s.points)?;
    Ok(algebra::mass_norm(sys.masses(), &r))
}

/// Center and rescale onto the unit sphere of the center-of-mass space.
fn retract(sys: &MassSystem, pts: &[C64]) -> Result<Vec<C64>> {
    let centered = center_configuration(sys, &Configuration::new(pts.to_vec()))?;
    let norm = sys.norm(&centered.points);
    if norm < 1e-12 {
        return Err(Error::DegenerateSize);
    }
    Ok(algebra::scale(1.0 / norm, &centered.points))
}

/// Rotate so the first body of appreciable radius sits on the positive
/// horizontal axis. Fixes the rotational gauge for deduplication and output.
fn canonicalize_rotation(pts: &[C64]) -> Vec<C64> {
    for p in pts {
        if p.norm() > 1e-9 {
            let u = p.conj() / p.norm();
            return algebra::rotate(u, pts);
        }
    }
    pts.to_vec()
}

/// Median body along the best-fit (principal) axis of a near-collinear
/// shape; 1-based. Robust near the collinearity threshold.
pub(crate) fn middle_body(sys: &MassSystem, pts: &[C64]) -> usize {
    let m = sys.masses();
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (mi, p) in m.iter().zip(pts) {
        sxx += mi * p.re * p.re;
        sxy += mi * p.re * p.im;
        syy += mi * p.im * p.im;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let axis = C64::from_polar(1.0, theta);
    let mut proj: Vec<(usize, f64)> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| (i, (axis.conj() * p).re))
        .collect();
    proj.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    proj[pts.len() / 2].0 + 1
}

fn classify(sys: &MassSystem, s: &Configuration) -> CcTag {
    if sys.n() != 3 {
        return CcTag::Other;
    }
    let coll = shape::collinearity(s);
    if coll.abs() <= 1e-8 {
        return CcTag::Euler { middle: middle_body(sys, &s.points) };
    }
    let d01 = (s.points[1] - s.points[0]).norm();
    let d12 = (s.points[2] - s.points[1]).norm();
    let d02 = (s.points[2] - s.points[0]).norm();
    let spread = (d01 - d12).abs().max((d12 - d02).abs()).max((d01 - d02).abs());
    if spread <= 1e-6 * d01 {
        if coll > 0.0 {
            CcTag::LagrangePlus
        } else {
            CcTag::LagrangeMinus
        }
    } else {
        CcTag::Other
    }
}

/// Certify a candidate shape: recompute U and the residual from scratch,
/// check the tolerance, and classify.
fn certify(sys: &MassSystem, pts: Vec<C64>, tol: f64) -> Result<CentralConfiguration> {
    let pts = canonicalize_rotation(&pts);
    let (u, rvec) = residual_parts(sys, &pts)?;
    let residual = algebra::mass_norm(sys.masses(), &rvec);
    if residual > tol {
        return Err(Error::NumericalFailure(format!(
            "candidate is not a central configuration: residual {residual:.3e} > {tol:.3e}"
        )));
    }
    let s_cc = Configuration::new(pts);
    let tag = classify(sys, &s_cc);
    Ok(CentralConfiguration { s_cc, u_value: u, nu_star: (2.0 * u).sqrt(), residual, tag })
}

/// The equilateral (Lagrange) configuration for any three masses, at unit
/// size with the requested orientation.
pub fn lagrange_configuration(
    sys: &MassSystem,
    orientation: Orientation,
) -> Result<CentralConfiguration> {
    if sys.n() != 3 {
        return Err(Error::Unsupported(format!(
            "the equilateral configuration needs exactly 3 bodies, got {}",
            sys.n()
        )));
    }
    let height = match orientation {
        Orientation::Positive => 3f64.sqrt() / 2.0,
        Orientation::Negative => -(3f64.sqrt()) / 2.0,
    };
    let raw = vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.5, height)];
    let s = retract(sys, &raw)?;
    certify(sys, s, 1e-12)
}

/// Scalar residual of the collinear ansatz (left, middle, right) at gap
/// ratio `rho` = right gap / left gap: the left-body component of R(s).
/// R is confined by symmetry to a one-dimensional space whose left-body
/// component never vanishes, so its zeros are exactly the collinear
/// critical points.
fn collinear_residual(
    sys: &MassSystem,
    left: usize,
    mid: usize,
    right: usize,
    rho: f64,
) -> Result<f64> {
    let mut pts = vec![C64::new(0.0, 0.0); 3];
    pts[left] = C64::new(0.0, 0.0);
    pts[mid] = C64::new(1.0, 0.0);
    pts[right] = C64::new(1.0 + rho, 0.0);
    let s = retract(sys, &pts)?;
    let (_, rvec) = residual_parts(sys, &s)?;
    Ok(rvec[left].re)
}

/// The collinear (Euler) configuration with the chosen body in the middle
/// (1-based index). The gap ratio is found by sign-change bracketing of the
/// one-dimensional residual over a log-spaced scan of (1e-3, 1e3), then
/// bisection to 1e-14.
pub fn euler_configuration(sys: &MassSystem, middle: usize) -> Result<CentralConfiguration> {
    if sys.n() != 3 {
        return Err(Error::Unsupported(format!(
            "the collinear configuration needs exactly 3 bodies, got {}",
            sys.n()
        )));
    }
    if !(1..=3).contains(&middle) {
        return Err(Error::InvalidInput(format!("middle body must be 1..=3, got {middle}")));
    }
    let mid = middle - 1;
    let outer: Vec<usize> = (0..3).filter(|&i| i != mid).collect();
    let (left, right) = (outer[0], outer[1]);

    let n_scan = 241;
    let (lo_exp, hi_exp) = (-3.0f64, 3.0f64);
    let rho_at = |i: usize| 10f64.powf(lo_exp + (hi_exp - lo_exp) * i as f64 / (n_scan - 1) as f64);
    let mut bracket = None;
    let mut g_prev = collinear_residual(sys, left, mid, right, rho_at(0))?;
    for i in 1..n_scan {
        let g = collinear_residual(sys, left, mid, right, rho_at(i))?;
        if g_prev == 0.0 || (g_prev < 0.0) != (g < 0.0) {
            bracket = Some((rho_at(i - 1), rho_at(i), g_prev));
            break;
        }
        g_prev = g;
    }
    let (mut a, mut b, mut ga) = bracket.ok_or_else(|| {
        Error::NumericalFailure(format!(
            "no sign change of the collinear residual over ratio in [1e{lo_exp}, 1e{hi_exp}] \
             (masses {:?}, middle {middle})",
            sys.masses()
        ))
    })?;
    while b - a > 1e-14 * b.max(1.0) {
        let m = 0.5 * (a + b);
        let gm = collinear_residual(sys, left, mid, right, m)?;
        if gm == 0.0 {
            a = m;
            b = m;
            break;
        }
        if (ga < 0.0) == (gm < 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    let rho = 0.5 * (a + b);
    let mut pts = vec![C64::new(0.0, 0.0); 3];
    pts[mid] = C64::new(1.0, 0.0);
    pts[right] = C64::new(1.0 + rho, 0.0);
    let s = retract(sys, &pts)?;

    // Polish to the residual floor; the bisected ratio is already within
    // ~1e-13 of the critical point.
    let seed = Configuration::new(s);
    let cc = refine_central_configuration(sys, &seed, 50, DEFAULT_REFINE_TOL)?;
    match cc.tag {
        CcTag::Euler { middle: got } if got == middle => Ok(cc),
        other => Err(Error::NumericalFailure(format!(
            "collinear refinement drifted to {other:?} instead of E{middle}"
        ))),
    }
}

/// A mass-orthonormal basis of the directions tangent to the constraint set
/// (centered, unit sphere) and orthogonal to the rotation direction i s.
/// R(s) lives in the same subspace, so the projected Newton system is square.
fn tangent_basis(sys: &MassSystem, s: &[C64]) -> Vec<Vec<C64>> {
    let n = sys.n();
    let mut fixed: Vec<Vec<C64>> = Vec::new();
    let push_orthonormal = |v: Vec<C64>, store: &mut Vec<Vec<C64>>| -> bool {
        let mut w = v;
        for f in store.iter() {
            let c = algebra::mass_dot(sys.masses(), f, &w);
            w = algebra::axpy(-c, f, &w);
        }
        let norm = algebra::mass_norm(sys.masses(), &w);
        if norm > 1e-8 {
            store.push(algebra::scale(1.0 / norm, &w));
            true
        } else {
            false
        }
    };
    // Translations, the radial direction, and the rotation direction.
    push_orthonormal(vec![C64::new(1.0, 0.0); n], &mut fixed);
    push_orthonormal(vec![C64::new(0.0, 1.0); n], &mut fixed);
    push_orthonormal(s.to_vec(), &mut fixed);
    push_orthonormal(algebra::rot90(s), &mut fixed);

    let mut basis: Vec<Vec<C64>> = Vec::new();
    let target = 2 * n - 4;
    'outer: for body in 0..n {
        for comp in 0..2 {
            let mut e = vec![algebra::ZERO; n];
            e[body] = if comp == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 1.0) };
            let mut w = e;
            for f in fixed.iter().chain(basis.iter()) {
                let c = algebra::mass_dot(sys.masses(), f, &w);
                w = algebra::axpy(-c, f, &w);
            }
            let norm = algebra::mass_norm(sys.masses(), &w);
            if norm > 1e-8 {
                basis.push(algebra::scale(1.0 / norm, &w));
                if basis.len() == target {
                    break 'outer;
                }
            }
        }
    }
    basis
}

fn guard_separation(pts: &[C64]) -> Result<()> {
    if let Some((a, b, d)) = algebra::min_pairwise(pts) {
        if d <= COLLISION_GUARD {
            return Err(Error::PartialCollision { a: a + 1, b: b + 1, separation: d });
        }
    }
    Ok(())
}

/// Projected Newton iteration on the constraint set, driving
/// `|grad U(s) + U(s) s|` below `tol`. The Jacobian is a central
/// finite-difference of the residual along the tangent basis; steps are
/// backtracked until the residual decreases.
pub fn refine_central_configuration(
    sys: &MassSystem,
    seed: &Configuration,
    max_iter: usize,
    tol: f64,
) -> Result<CentralConfiguration> {
    if seed.n() != sys.n() {
        return Err(Error::DimensionMismatch { expected: sys.n(), got: seed.n() });
    }
    let mut s = retract(sys, &seed.points)?;
    let mut rho = f64::INFINITY;
    for _ in 0..max_iter {
        guard_separation(&s)?;
        let (_, rvec) = residual_parts(sys, &s)?;
        rho = algebra::mass_norm(sys.masses(), &rvec);
        if rho <= tol {
            return certify(sys, s, tol);
        }
        let basis = tangent_basis(sys, &s);
        let k = basis.len();
        let rproj: Vec<f64> = basis.iter().map(|b| sys.inner(b, &rvec)).collect();

        let mut jac = vec![vec![0.0; k]; k];
        for (q, bq) in basis.iter().enumerate() {
            let sp = retract(sys, &algebra::axpy(FD_STEP, bq, &s))?;
            let sm = retract(sys, &algebra::axpy(-FD_STEP, bq, &s))?;
            let (_, rp) = residual_parts(sys, &sp)?;
            let (_, rm) = residual_parts(sys, &sm)?;
            for (p, bp) in basis.iter().enumerate() {
                jac[p][q] = (sys.inner(bp, &rp) - sys.inner(bp, &rm)) / (2.0 * FD_STEP);
            }
        }
        let newton = algebra::solve_linear(jac, rproj.iter().map(|v| -v).collect());
        let direction: Vec<f64> = match newton {
            Some(dx) => dx,
            None => rproj.iter().map(|v| -v).collect(),
        };
        let mut step = vec![algebra::ZERO; sys.n()];
        for (dq, bq) in direction.iter().zip(&basis) {
            step = algebra::axpy(*dq, bq, &step);
        }

        let mut alpha = 1.0;
        let mut advanced = false;
        for _ in 0..30 {
            let cand = retract(sys, &algebra::axpy(alpha, &step, &s))?;
            if guard_separation(&cand).is_ok() {
                if let Ok((_, rc)) = residual_parts(sys, &cand) {
                    if algebra::mass_norm(sys.masses(), &rc) < rho {
                        s = cand;
                        advanced = true;
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        if !advanced {
            return Err(Error::NumericalFailure(format!(
                "line search stalled at residual {rho:.3e}"
            )));
        }
    }
    Err(Error::NumericalFailure(format!(
        "no convergence within {max_iter} iterations; residual {rho:.3e}"
    )))
}

/// Distance between shape classes modulo rotation: the chordal distance
/// sqrt(1 - |<a, b>|^2) of the projective classes under the mass-Hermitian
/// inner product. For three bodies this is half the chordal distance of the
/// Hopf images.
pub fn projective_distance(sys: &MassSystem, a: &Configuration, b: &Configuration) -> f64 {
    let na = algebra::mass_norm(sys.masses(), &a.points);
    let nb = algebra::mass_norm(sys.masses(), &b.points);
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    let herm: C64 = sys
        .masses()
        .iter()
        .zip(a.points.iter().zip(&b.points))
        .map(|(m, (x, y))| m * x.conj() * y)
        .sum();
    let u = (herm.norm() / (na * nb)).min(1.0);
    (1.0 - u * u).max(0.0).sqrt()
}

fn random_seed_shape(sys: &MassSystem, rng: &mut ChaCha8Rng) -> Result<Configuration> {
    for _ in 0..1000 {
        let pts: Vec<C64> = (0..sys.n())
            .map(|_| {
                C64::new(
                    rng.sample::<f64, _>(rand_distr_standard()),
                    rng.sample::<f64, _>(rand_distr_standard()),
                )
            })
            .collect();
        let Ok(s) = retract(sys, &pts) else { continue };
        if let Some((_, _, d)) = algebra::min_pairwise(&s) {
            if d > 1e-2 {
                return Ok(Configuration::new(s));
            }
        }
    }
    Err(Error::NumericalFailure("could not sample a collision-free seed shape".into()))
}

// Standard normal via Box-Muller on the uniform generator keeps the crate's
// RNG dependencies down to `rand` + `rand_chacha`.
struct BoxMuller;

fn rand_distr_standard() -> BoxMuller {
    BoxMuller
}

impl rand::distributions::Distribution<f64> for BoxMuller {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        (-2.0 * u1.ln()).sqrt() * u2.cos()
    }
}

/// Multistart search with the spec'd defaults.
pub fn enumerate_central_configurations(
    sys: &MassSystem,
    n_seeds: usize,
    rng_seed: u64,
) -> Result<Vec<CentralConfiguration>> {
    enumerate_with(sys, n_seeds, rng_seed, 120, DEFAULT_REFINE_TOL, DEFAULT_DEDUP_TOL)
}

/// Multistart refinement from random shapes, deduplicated modulo rotation
/// and sorted by potential value. Completeness (5 classes) holds for n = 3.
pub fn enumerate_with(
    sys: &MassSystem,
    n_seeds: usize,
    rng_seed: u64,
    max_iter: usize,
    refine_tol: f64,
    dedup_tol: f64,
) -> Result<Vec<CentralConfiguration>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut classes: Vec<CentralConfiguration> = Vec::new();
    let mut last_error: Option<Error> = None;
    let mut any_converged = false;
    for _ in 0..n_seeds {
        let seed = random_seed_shape(sys, &mut rng)?;
        match refine_central_configuration(sys, &seed, max_iter, refine_tol) {
            Ok(cc) => {
                any_converged = true;
                let dup = classes
                    .iter()
                    .any(|c| projective_distance(sys, &c.s_cc, &cc.s_cc) <= dedup_tol);
                if !dup {
                    classes.push(cc);
                }
            }
            Err(e) => last_error = Some(e),
        }
    }
    if !any_converged {
        return Err(last_error
            .unwrap_or_else(|| Error::NumericalFailure("no multistart seed converged".into())));
    }
    // U values of distinct classes can agree exactly (L+ and L-), so ties
    // within roundoff are broken by the tag order.
    classes.sort_by(|a, b| {
        let scale = 1e-9 * a.u_value.abs().max(1.0);
        if (a.u_value - b.u_value).abs() <= scale {
            a.tag.rank().cmp(&b.tag.rank())
        } else {
            a.u_value.partial_cmp(&b.u_value).unwrap()
        }
    });
    Ok(classes)
}

/// The two blown-up equilibria over a certified configuration.
pub fn equilibria_from_cc(
    sys: &MassSystem,
    cc: &CentralConfiguration,
) -> Result<(Equilibrium, Equilibrium)> {
    let build = |sign: f64| -> Result<Equilibrium> {
        let y = Velocity::new(algebra::scale(sign * cc.nu_star, &cc.s_cc.points));
        Ok(Equilibrium { state: BlownUpState::new(sys, 0.0, cc.s_cc.clone(), y)?, sign })
    };
    Ok((build(1.0)?, build(-1.0)?))
}
