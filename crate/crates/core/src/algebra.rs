//! Complex-vector helpers shared across the crate.
//!
//! Planar vectors are complex numbers, (x, y) <-> x + iy, so a point of
//! configuration space is one `Complex64` per body. Multiplying by `i`
//! rotates every body by 90 degrees; for complex a, b the real part of
//! conj(a) * b is the planar dot product and the imaginary part is the
//! wedge a_x b_y - a_y b_x.

use num_complex::Complex64;

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);

/// Mass-weighted dot product: sum of m_a * (a_a . b_a).
pub(crate) fn mass_dot(masses: &[f64], a: &[C64], b: &[C64]) -> f64 {
    masses
        .iter()
        .zip(a.iter().zip(b))
        .map(|(m, (x, y))| m * (x.conj() * y).re)
        .sum()
}

/// Mass-weighted wedge: sum of m_a * (a_a ^ b_a).
pub(crate) fn mass_wedge(masses: &[f64], a: &[C64], b: &[C64]) -> f64 {
    masses
        .iter()
        .zip(a.iter().zip(b))
        .map(|(m, (x, y))| m * (x.conj() * y).im)
        .sum()
}

pub(crate) fn mass_norm(masses: &[f64], a: &[C64]) -> f64 {
    mass_dot(masses, a, a).max(0.0).sqrt()
}

/// 90-degree rotation of every component: a -> i * a.
pub(crate) fn rot90(a: &[C64]) -> Vec<C64> {
    a.iter().map(|z| C64::new(-z.im, z.re)).collect()
}

pub(crate) fn scale(c: f64, a: &[C64]) -> Vec<C64> {
    a.iter().map(|z| c * z).collect()
}

pub(crate) fn rotate(u: C64, a: &[C64]) -> Vec<C64> {
    a.iter().map(|z| u * z).collect()
}

pub(crate) fn add(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub(crate) fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// y + alpha * x.
pub(crate) fn axpy(alpha: f64, x: &[C64], y: &[C64]) -> Vec<C64> {
    x.iter().zip(y).map(|(xi, yi)| yi + alpha * xi).collect()
}

/// Smallest pairwise separation and the (0-based) pair achieving it.
pub(crate) fn min_pairwise(points: &[C64]) -> Option<(usize, usize, f64)> {
    let n = points.len();
    let mut best: Option<(usize, usize, f64)> = None;
    for a in 0..n {
        for b in a + 1..n {
            let d = (points[b] - points[a]).norm();
            if best.map_or(true, |(_, _, m)| d < m) {
                best = Some((a, b, d));
            }
        }
    }
    best
}

/// Flatten to [x1, y1, x2, y2, ...].
pub(crate) fn to_flat(a: &[C64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * a.len());
    for z in a {
        out.push(z.re);
        out.push(z.im);
    }
    out
}

pub(crate) fn from_flat(a: &[f64]) -> Vec<C64> {
    debug_assert!(a.len() % 2 == 0);
    a.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect()
}

/// Dense Gaussian elimination with partial pivoting. Returns `None` for a
/// (numerically) singular matrix. `a` is row-major, consumed in place.
pub(crate) fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert!(a.len() == n && a.iter().all(|r| r.len() == n));
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}
