//! Small numerical kernels shared by the modules: deterministic summation,
//! Gauss–Legendre rules and central finite differences.

use gauss_quad::legendre::GaussLegendre;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::num::NonZeroUsize;

const LEAF: usize = 8;

/// Pairwise sum with a topology fixed by the slice length alone.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= LEAF {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

pub fn pairwise_sum_c(v: &[Complex64]) -> Complex64 {
    if v.len() <= LEAF {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum_c(&v[..mid]) + pairwise_sum_c(&v[mid..])
}

/// Gauss–Legendre nodes and weights on [-1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let n = NonZeroUsize::new(n.max(1)).unwrap();
    let mut rule: Vec<(f64, f64)> = GaussLegendre::new(n).as_node_weight_pairs().to_vec();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

/// Rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gauss_legendre(n)
        .into_iter()
        .map(|(x, w)| (mid + half * x, half * w))
        .collect()
}

pub fn gl_integrate(n: usize, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let terms: Vec<f64> = gauss_legendre_on(n, a, b)
        .into_iter()
        .map(|(x, w)| w * f(x))
        .collect();
    pairwise_sum(&terms)
}

pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let fp = f(&y);
            y[i] = x[i] - h;
            let fm = f(&y);
            y[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Jacobian of a vector map, `out[i][j] = d f_i / d x_j`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> DMatrix<f64> {
    let mut y = x.to_vec();
    let mut cols = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        y[j] = x[j] + h;
        let fp = f(&y);
        y[j] = x[j] - h;
        let fm = f(&y);
        y[j] = x[j];
        cols.push(DVector::from_iterator(
            fp.len(),
            fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)),
        ));
    }
    DMatrix::from_columns(&cols)
}

pub fn fd_hessian(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut m = DMatrix::zeros(n, n);
    let mut y = x.to_vec();
    let f0 = f(x);
    for i in 0..n {
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        y[i] = x[i];
        m[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let mut s = 0.0;
            for (di, dj, sign) in [(h, h, 1.0), (h, -h, -1.0), (-h, h, -1.0), (-h, -h, 1.0)] {
                y[i] = x[i] + di;
                y[j] = x[j] + dj;
                s += sign * f(&y);
            }
            y[i] = x[i];
            y[j] = x[j];
            let v = s / (4.0 * h * h);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Orthonormal basis of the orthogonal complement of the column span of `frame`
/// in R^n. `frame` may have zero columns.
pub fn orthogonal_complement(frame: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let p = frame.ncols();
    if p == 0 {
        return DMatrix::identity(n, n);
    }
    let mut full = DMatrix::zeros(n, p + n);
    full.view_mut((0, 0), (n, p)).copy_from(frame);
    full.view_mut((0, p), (n, n)).copy_from(&DMatrix::<f64>::identity(n, n));
    // Modified Gram–Schmidt over [frame | I], keeping the vectors produced after
    // the frame has been exhausted.
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut normal = Vec::new();
    for j in 0..p + n {
        let mut v = full.column(j).into_owned();
        for b in &basis {
            let c = b.dot(&v);
            v -= b * c;
        }
        for b in &basis {
            let c = b.dot(&v);
            v -= b * c;
        }
        let nv = v.norm();
        if nv > 1e-8 {
            let u = v / nv;
            if j >= p {
                normal.push(u.clone());
            }
            basis.push(u);
        }
        if basis.len() == n {
            break;
        }
    }
    DMatrix::from_columns(&normal)
}

pub fn wrap_angle(t: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = t.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Smooth compactly supported bump on (-1, 1), equal to 1 at 0.
pub fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

/// Smooth step: 0 for t <= 0, 1 for t >= 1.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// Ordinary least squares slope and intercept of y on x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
