//! Brute-force quadrature of oscillatory integrals
//! I = ∫ exp(i k psi(x)) a(x) dx over a box, with k = mu (large-parameter
//! convention) or k = 1/mu (small-parameter convention), and least-squares
//! fitting of asymptotic models.
//!
//! Up to three dimensions the integral is iterated axis by axis. Panels are
//! laid out by marching along each axis with a width bounded by both a fixed
//! fraction of the axis and a fraction of the local wavelength. In higher
//! dimensions the two most oscillatory axes get the same treatment and the
//! remaining axes use a rank-1 lattice rule.

use crate::error::{Error, Result};
use crate::numerics::{gauss_legendre, pairwise_sum, pairwise_sum_c};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::io::{Read, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    GaussLegendrePanels,
    TanhSinh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MuConvention {
    /// exp(i mu psi), mu -> infinity.
    Large,
    /// exp(i psi / mu), mu -> 0.
    Small,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rule: Rule,
    pub panels_per_wavelength: usize,
    /// Gauss nodes per panel.
    pub nodes_per_panel: usize,
    /// Minimum number of panels per axis.
    pub min_panels: usize,
    pub mu: f64,
    pub convention: MuConvention,
    pub node_budget: f64,
    pub rel_tolerance: f64,
    pub abs_tolerance: f64,
    /// Refinement level of the coarser of the two Richardson levels.
    pub refinement: u32,
    /// Points of the lattice rule used on non-oscillatory axes (dim > 3).
    pub lattice_points: usize,
}

impl QuadratureSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, mu: f64, convention: MuConvention) -> Self {
        QuadratureSpec {
            lower,
            upper,
            rule: Rule::GaussLegendrePanels,
            panels_per_wavelength: 6,
            nodes_per_panel: 3,
            min_panels: 64,
            mu,
            convention,
            node_budget: 1e9,
            rel_tolerance: 1e-6,
            abs_tolerance: 1e-12,
            refinement: 0,
            lattice_points: 127,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Frequency multiplying the phase.
    pub fn frequency(&self) -> f64 {
        match self.convention {
            MuConvention::Large => self.mu,
            MuConvention::Small => 1.0 / self.mu,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::Config("integration box must have matching nonempty bounds".into()));
        }
        if self.lower.iter().zip(&self.upper).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::Config("integration box must be finite with lower < upper".into()));
        }
        if self.panels_per_wavelength < 6 {
            return Err(Error::Config("panels_per_wavelength must be at least 6".into()));
        }
        if self.nodes_per_panel == 0 || self.min_panels == 0 {
            return Err(Error::Config("nodes_per_panel and min_panels must be positive".into()));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(Error::Config(format!("mu must be positive and finite, got {}", self.mu)));
        }
        if self.dim() > 3 && self.lattice_points < 2 {
            return Err(Error::Config("lattice_points must be at least 2".into()));
        }
        Ok(())
    }

    fn richardson_factor(&self) -> f64 {
        match self.rule {
            Rule::GaussLegendrePanels => 2f64.powi(2 * self.nodes_per_panel as i32) - 1.0,
            Rule::TanhSinh => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: Complex64,
    pub error_estimate: f64,
    /// Integrand evaluations over both refinement levels.
    pub nodes: u64,
    pub coarse_value: Complex64,
    /// Axes integrated with the panel rule.
    pub oscillatory_axes: Vec<usize>,
    /// Description of the rule on the remaining axes, if any. Its error is not
    /// part of `error_estimate`.
    pub smooth_rule: Option<String>,
}

/// Oscillatory integral over the box of `spec`.
pub fn integrate<P, A>(phase: &P, amplitude: &A, spec: &QuadratureSpec) -> Result<QuadResult>
where
    P: Fn(&[f64]) -> f64 + Sync,
    A: Fn(&[f64]) -> f64 + Sync,
{
    let (layout, coarse, fine) = integrate_levels(phase, amplitude, spec)?;
    let est = (fine.0 - coarse.0).norm() / spec.richardson_factor();
    let value = fine.0;
    if !value.re.is_finite() || !value.im.is_finite() {
        return Err(Error::NonFinite("oscillatory integral".into()));
    }
    if est > spec.rel_tolerance * value.norm() + spec.abs_tolerance {
        return Err(Error::Accuracy { estimate: est, tolerance: spec.rel_tolerance * value.norm() + spec.abs_tolerance });
    }
    Ok(QuadResult {
        value,
        error_estimate: est,
        nodes: coarse.1 + fine.1,
        coarse_value: coarse.0,
        oscillatory_axes: layout.oscillatory.clone(),
        smooth_rule: layout.smooth_description(spec),
    })
}

/// Integral at one refinement level, without error control.
pub fn integrate_at_level<P, A>(phase: &P, amplitude: &A, spec: &QuadratureSpec, level: u32) -> Result<(Complex64, u64)>
where
    P: Fn(&[f64]) -> f64 + Sync,
    A: Fn(&[f64]) -> f64 + Sync,
{
    spec.validate()?;
    let layout = Layout::new(phase, spec);
    let needed = layout.estimate_nodes(phase, spec, level);
    if needed > spec.node_budget {
        return Err(Error::NodeBudget { needed: needed as u64, budget: spec.node_budget as u64 });
    }
    Ok(layout.run(phase, amplitude, spec, level))
}

fn integrate_levels<P, A>(phase: &P, amplitude: &A, spec: &QuadratureSpec) -> Result<(Layout, (Complex64, u64), (Complex64, u64))>
where
    P: Fn(&[f64]) -> f64 + Sync,
    A: Fn(&[f64]) -> f64 + Sync,
{
    spec.validate()?;
    let layout = Layout::new(phase, spec);
    let needed = layout.estimate_nodes(phase, spec, spec.refinement) + layout.estimate_nodes(phase, spec, spec.refinement + 1);
    if needed > spec.node_budget {
        return Err(Error::NodeBudget { needed: needed as u64, budget: spec.node_budget as u64 });
    }
    let coarse = layout.run(phase, amplitude, spec, spec.refinement);
    let fine = layout.run(phase, amplitude, spec, spec.refinement + 1);
    Ok((layout, coarse, fine))
}

/// Estimated integrand evaluations for both Richardson levels.
pub fn estimate_nodes<P>(phase: &P, spec: &QuadratureSpec) -> Result<f64>
where
    P: Fn(&[f64]) -> f64 + Sync,
{
    spec.validate()?;
    let layout = Layout::new(phase, spec);
    Ok(layout.estimate_nodes(phase, spec, spec.refinement) + layout.estimate_nodes(phase, spec, spec.refinement + 1))
}

struct Layout {
    /// Iterated axes, outermost first.
    oscillatory: Vec<usize>,
    smooth: Vec<usize>,
    lattice: Vec<Vec<f64>>,
}

const COARSE_SAMPLES: usize = 5;

impl Layout {
    fn new<P: Fn(&[f64]) -> f64>(phase: &P, spec: &QuadratureSpec) -> Layout {
        let d = spec.dim();
        if d <= 3 {
            return Layout { oscillatory: (0..d).collect(), smooth: vec![], lattice: vec![] };
        }
        // rank axes by mean |d psi| over a deterministic point set
        let probe = korobov_lattice(64, d);
        let mut score = vec![0.0; d];
        for u in &probe {
            let x: Vec<f64> = (0..d).map(|i| spec.lower[i] + u[i] * (spec.upper[i] - spec.lower[i])).collect();
            for (i, s) in score.iter_mut().enumerate() {
                *s += derivatives(phase, &x, i, spec).0.abs();
            }
        }
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|a, b| score[*b].total_cmp(&score[*a]).then(a.cmp(b)));
        let mut oscillatory = order[..2].to_vec();
        oscillatory.sort();
        let mut smooth = order[2..].to_vec();
        smooth.sort();
        let lattice = korobov_lattice(spec.lattice_points, smooth.len());
        Layout { oscillatory, smooth, lattice }
    }

    fn smooth_description(&self, spec: &QuadratureSpec) -> Option<String> {
        if self.smooth.is_empty() {
            None
        } else {
            Some(format!(
                "rank-1 lattice, {} points, sine-periodized, on axes {:?}",
                spec.lattice_points, self.smooth
            ))
        }
    }

    fn estimate_nodes<P: Fn(&[f64]) -> f64>(&self, phase: &P, spec: &QuadratureSpec, level: u32) -> f64 {
        let k = spec.frequency();
        let mut total = 1.0;
        let probe = korobov_lattice(32, spec.dim());
        for &axis in &self.oscillatory {
            let len = spec.upper[axis] - spec.lower[axis];
            let mean_omega = probe
                .iter()
                .map(|u| {
                    let x: Vec<f64> = (0..spec.dim())
                        .map(|i| spec.lower[i] + u[i] * (spec.upper[i] - spec.lower[i]))
                        .collect();
                    omega_from(derivatives(phase, &x, axis, spec), k)
                })
                .sum::<f64>()
                / probe.len() as f64;
            let panels = (spec.min_panels as f64).max(len * spec.panels_per_wavelength as f64 * mean_omega / TAU);
            total *= panels * nodes_per_panel(spec, level) as f64;
        }
        total * self.lattice.len().max(1) as f64
    }

    fn run<P, A>(&self, phase: &P, amplitude: &A, spec: &QuadratureSpec, level: u32) -> (Complex64, u64)
    where
        P: Fn(&[f64]) -> f64 + Sync,
        A: Fn(&[f64]) -> f64 + Sync,
    {
        let iter = Iterated { phase, amplitude, spec, axes: &self.oscillatory, k: spec.frequency(), rule: rule_nodes(spec, level) };
        if self.smooth.is_empty() {
            let mut x = spec.lower.clone();
            return iter.outer(&mut x);
        }
        let vol: f64 = self.smooth.iter().map(|&i| spec.upper[i] - spec.lower[i]).product();
        let parts: Vec<(Complex64, u64)> = self
            .lattice
            .par_iter()
            .map(|u| {
                let mut x = spec.lower.clone();
                let mut jac = 1.0;
                for (j, &axis) in self.smooth.iter().enumerate() {
                    // sine periodization: t = u - sin(2 pi u) / 2 pi
                    let t = u[j] - (TAU * u[j]).sin() / TAU;
                    jac *= 1.0 - (TAU * u[j]).cos();
                    x[axis] = spec.lower[axis] + t * (spec.upper[axis] - spec.lower[axis]);
                }
                let (v, n) = iter.inner(0, &mut x);
                (v * jac, n)
            })
            .collect();
        let values: Vec<Complex64> = parts.iter().map(|p| p.0).collect();
        let n = parts.iter().map(|p| p.1).sum();
        (pairwise_sum_c(&values) * (vol / self.lattice.len() as f64), n)
    }
}

fn nodes_per_panel(spec: &QuadratureSpec, level: u32) -> usize {
    match spec.rule {
        Rule::GaussLegendrePanels => spec.nodes_per_panel << level,
        Rule::TanhSinh => tanh_sinh_rule(level).len(),
    }
}

/// Node/weight pairs on [-1, 1] used for one panel at the given level.
fn rule_nodes(spec: &QuadratureSpec, level: u32) -> Vec<(f64, f64)> {
    match spec.rule {
        Rule::GaussLegendrePanels => {
            let base = gauss_legendre(spec.nodes_per_panel);
            let parts = 1usize << level;
            let w = 2.0 / parts as f64;
            let mut out = Vec::with_capacity(base.len() * parts);
            for p in 0..parts {
                let a = -1.0 + p as f64 * w;
                for (x, wt) in &base {
                    out.push((a + 0.5 * w * (x + 1.0), 0.5 * w * wt));
                }
            }
            out
        }
        Rule::TanhSinh => tanh_sinh_rule(level),
    }
}

/// Tanh-sinh nodes on [-1, 1] with step 2^-(level+1).
pub fn tanh_sinh_rule(level: u32) -> Vec<(f64, f64)> {
    let h = 0.5 / f64::from(1u32 << level);
    let kmax = (3.2 / h).ceil() as i64;
    let mut out = Vec::new();
    for j in -kmax..=kmax {
        let t = j as f64 * h;
        let u = 0.5 * PI * t.sinh();
        let x = u.tanh();
        let w = h * 0.5 * PI * t.cosh() / u.cosh().powi(2);
        if x.abs() < 1.0 && w > 0.0 {
            out.push((x, w));
        }
    }
    out
}

fn derivatives<P: Fn(&[f64]) -> f64>(phase: &P, x: &[f64], axis: usize, spec: &QuadratureSpec) -> (f64, f64) {
    let h = 1e-4 * (spec.upper[axis] - spec.lower[axis]);
    let mut y = x.to_vec();
    let f0 = phase(&y);
    y[axis] = x[axis] + h;
    let fp = phase(&y);
    y[axis] = x[axis] - h;
    let fm = phase(&y);
    ((fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / (h * h))
}

/// Local angular frequency: k |psi'| plus the stationary-point scale sqrt(k |psi''|).
fn omega_from((d1, d2): (f64, f64), k: f64) -> f64 {
    k * d1.abs() + (k * d2.abs()).sqrt()
}

struct Iterated<'a, P, A> {
    phase: &'a P,
    amplitude: &'a A,
    spec: &'a QuadratureSpec,
    axes: &'a [usize],
    k: f64,
    rule: Vec<(f64, f64)>,
}

impl<'a, P, A> Iterated<'a, P, A>
where
    P: Fn(&[f64]) -> f64 + Sync,
    A: Fn(&[f64]) -> f64 + Sync,
{
    /// Angular frequency along `axes[depth]` at `x`; maximized over a coarse
    /// sample of the axes integrated further in.
    fn omega(&self, depth: usize, x: &mut [f64]) -> f64 {
        let axis = self.axes[depth];
        let inner = &self.axes[depth + 1..];
        if inner.is_empty() {
            return omega_from(derivatives(self.phase, x, axis, self.spec), self.k);
        }
        let saved: Vec<f64> = inner.iter().map(|&i| x[i]).collect();
        let combos = COARSE_SAMPLES.pow(inner.len() as u32);
        let mut best: f64 = 0.0;
        for c in 0..combos {
            let mut r = c;
            for &i in inner {
                let j = r % COARSE_SAMPLES;
                r /= COARSE_SAMPLES;
                let t = j as f64 / (COARSE_SAMPLES - 1) as f64;
                x[i] = self.spec.lower[i] + t * (self.spec.upper[i] - self.spec.lower[i]);
            }
            best = best.max(omega_from(derivatives(self.phase, x, axis, self.spec), self.k));
        }
        for (&i, v) in inner.iter().zip(saved) {
            x[i] = v;
        }
        best
    }

    fn panels(&self, depth: usize, x: &mut [f64]) -> Vec<(f64, f64)> {
        let axis = self.axes[depth];
        let (a, b) = (self.spec.lower[axis], self.spec.upper[axis]);
        let hmax = (b - a) / self.spec.min_panels as f64;
        let ppw = self.spec.panels_per_wavelength as f64;
        let width = |w: f64| if w > 0.0 { hmax.min(TAU / (ppw * w)) } else { hmax };
        let saved = x[axis];
        let mut out = Vec::new();
        let mut s = a;
        while s < b {
            x[axis] = s;
            let mut h = width(self.omega(depth, x));
            x[axis] = (s + h).min(b);
            h = h.min(width(self.omega(depth, x)));
            let e = if s + h >= b - 1e-12 * (b - a) { b } else { s + h };
            out.push((s, e));
            s = e;
        }
        x[axis] = saved;
        out
    }

    fn nodes(&self, depth: usize, x: &mut [f64]) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for (a, b) in self.panels(depth, x) {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (t, w) in &self.rule {
                out.push((mid + half * t, half * w));
            }
        }
        out
    }

    fn outer(&self, x: &mut [f64]) -> (Complex64, u64) {
        if self.axes.len() == 1 {
            return self.inner(0, x);
        }
        let axis = self.axes[0];
        let nodes = self.nodes(0, x);
        let base = x.to_vec();
        let parts: Vec<(Complex64, u64)> = nodes
            .par_iter()
            .map(|(t, w)| {
                let mut y = base.clone();
                y[axis] = *t;
                let (v, n) = self.inner(1, &mut y);
                (v * *w, n)
            })
            .collect();
        let values: Vec<Complex64> = parts.iter().map(|p| p.0).collect();
        (pairwise_sum_c(&values), parts.iter().map(|p| p.1).sum())
    }

    fn inner(&self, depth: usize, x: &mut [f64]) -> (Complex64, u64) {
        let axis = self.axes[depth];
        let nodes = self.nodes(depth, x);
        let mut values = Vec::with_capacity(nodes.len());
        let mut count = 0;
        if depth + 1 == self.axes.len() {
            for (t, w) in nodes {
                x[axis] = t;
                count += 1;
                let a = (self.amplitude)(x);
                if a == 0.0 {
                    continue;
                }
                let (s, c) = (self.k * (self.phase)(x)).sin_cos();
                values.push(Complex64::new(c, s) * (a * w));
            }
        } else {
            for (t, w) in nodes {
                x[axis] = t;
                let (v, n) = self.inner(depth + 1, x);
                count += n;
                values.push(v * w);
            }
        }
        (pairwise_sum_c(&values), count)
    }
}

/// Korobov rank-1 lattice in [0,1)^s with generator chosen to minimize the
/// P_2 criterion.
pub fn korobov_lattice(n: usize, s: usize) -> Vec<Vec<f64>> {
    if s == 0 {
        return vec![vec![]];
    }
    let b2 = |x: f64| x * x - x + 1.0 / 6.0;
    let gen = |a: usize| -> Vec<usize> {
        let mut z = vec![1usize; s];
        for j in 1..s {
            z[j] = (z[j - 1] * a) % n;
        }
        z
    };
    let p2 = |z: &[usize]| -> f64 {
        let terms: Vec<f64> = (0..n)
            .map(|k| {
                z.iter()
                    .map(|zj| 1.0 + 2.0 * PI * PI * b2(((k * zj) % n) as f64 / n as f64))
                    .product::<f64>()
            })
            .collect();
        pairwise_sum(&terms) / n as f64 - 1.0
    };
    let mut best = (f64::INFINITY, 1usize);
    for a in 1..n {
        let v = p2(&gen(a));
        if v < best.0 - 1e-15 {
            best = (v, a);
        }
    }
    let z = gen(best.1);
    (0..n)
        .map(|k| z.iter().map(|zj| ((k * zj) % n) as f64 / n as f64 + 0.5 / n as f64).collect())
        .collect()
}

/// Term mu^alpha (log 1/mu)^k of an asymptotic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub alpha: f64,
    pub log_power: u32,
}

impl Term {
    pub fn new(alpha: f64, log_power: u32) -> Self {
        Term { alpha, log_power }
    }

    pub fn eval(&self, h: f64) -> f64 {
        h.powf(self.alpha) * (1.0 / h).ln().powi(self.log_power as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticFit {
    pub terms: Vec<Term>,
    pub coefficients: Vec<Complex64>,
    /// One-sigma errors of the real and imaginary parts, combined in quadrature.
    pub standard_errors: Vec<f64>,
    pub residual_norm: f64,
    pub condition_number: f64,
}

pub const MAX_CONDITION: f64 = 1e8;

/// Weighted least squares of `value ≈ Σ c_j h^alpha_j (log 1/h)^k_j` over
/// samples (h, value). Rows are scaled by h^(-min alpha) so every sample
/// carries comparable weight.
pub fn fit_asymptotics(samples: &[(f64, Complex64)], terms: &[Term]) -> Result<AsymptoticFit> {
    if terms.is_empty() {
        return Err(Error::Config("model needs at least one term".into()));
    }
    if samples.len() < 2 * terms.len() {
        return Err(Error::Config(format!(
            "{} samples for {} unknowns, need at least two per unknown",
            samples.len(),
            terms.len()
        )));
    }
    if samples.iter().any(|(h, v)| !(*h > 0.0) || !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite("fit samples must have positive abscissae and finite values".into()));
    }
    let m = samples.len();
    let p = terms.len();
    let amin = terms.iter().map(|t| t.alpha).fold(f64::INFINITY, f64::min);
    let mut a = DMatrix::zeros(m, p);
    let mut yr = DVector::zeros(m);
    let mut yi = DVector::zeros(m);
    for (r, (h, v)) in samples.iter().enumerate() {
        let w = h.powf(-amin);
        for (c, t) in terms.iter().enumerate() {
            a[(r, c)] = w * t.eval(*h);
        }
        yr[r] = w * v.re;
        yi[r] = w * v.im;
    }
    let scale: Vec<f64> = (0..p).map(|c| a.column(c).norm()).collect();
    if scale.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::IllConditioned(f64::INFINITY));
    }
    let mut an = a.clone();
    for (c, s) in scale.iter().enumerate() {
        an.column_mut(c).scale_mut(1.0 / s);
    }
    let svd = an.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond > MAX_CONDITION {
        return Err(Error::IllConditioned(cond));
    }
    let solve = |y: &DVector<f64>| -> DVector<f64> {
        let z = svd.solve(y, 0.0).expect("svd has both factors");
        DVector::from_iterator(p, z.iter().zip(&scale).map(|(v, s)| v / s))
    };
    let cr = solve(&yr);
    let ci = solve(&yi);
    let rr = &yr - &a * &cr;
    let ri = &yi - &a * &ci;
    let rss = rr.norm_squared() + ri.norm_squared();
    let dof = (m - p).max(1) as f64;
    // covariance of the normalized coefficients is V S^-2 V^T
    let v = svd.v_t.as_ref().expect("svd has v").transpose();
    let sigma2 = rss / (2.0 * dof);
    let standard_errors = (0..p)
        .map(|c| {
            let var: f64 = (0..p).map(|j| (v[(c, j)] / svd.singular_values[j]).powi(2)).sum();
            (2.0 * sigma2 * var).sqrt() / scale[c]
        })
        .collect();
    Ok(AsymptoticFit {
        terms: terms.to_vec(),
        coefficients: cr.iter().zip(ci.iter()).map(|(r, i)| Complex64::new(*r, *i)).collect(),
        standard_errors,
        residual_norm: rss.sqrt(),
        condition_number: cond,
    })
}

/// Geometric grid of `n` points from `a` to `b` inclusive.
pub fn geometric_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let r = (b / a).ln() / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { b } else { a * (r * i as f64).exp() }).collect()
}

pub fn write_samples_csv(samples: &[(f64, Complex64)], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out);
    w.write_record(["mu", "re", "im"])?;
    for (mu, v) in samples {
        w.write_record([format!("{mu:e}"), format!("{:e}", v.re), format!("{:e}", v.im)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv(input: impl Read) -> Result<Vec<(f64, Complex64)>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::Config("sample row needs three columns".into()))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad number in samples: {e}")))
        };
        out.push((parse(0)?, Complex64::new(parse(1)?, parse(2)?)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::bump;
    use proptest::prelude::*;

    fn flat_bump(x: f64) -> f64 {
        // identically 1 on [-0.2, 0.2], zero outside [-1, 1]
        crate::numerics::smooth_step((1.0 - x.abs()) / 0.8)
    }

    #[test]
    fn fresnel_against_closed_form() {
        let spec = QuadratureSpec::new(vec![-1.0], vec![1.0], 200.0, MuConvention::Large);
        let r = integrate(&|x: &[f64]| 0.5 * x[0] * x[0], &|x: &[f64]| flat_bump(x[0]), &spec).unwrap();
        let expect = (TAU / 200.0).sqrt() * Complex64::from_polar(1.0, PI / 4.0);
        assert!(((r.value - expect) / expect).norm() < 1e-3, "{}", r.value);
    }

    #[test]
    fn zero_amplitude_is_exactly_zero() {
        let spec = QuadratureSpec::new(vec![-1.0, -1.0], vec![1.0, 1.0], 50.0, MuConvention::Large);
        let r = integrate(&|x: &[f64]| x[0] * x[1], &|_: &[f64]| 0.0, &spec).unwrap();
        assert_eq!(r.value, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn non_oscillatory_polynomial_is_exact() {
        let spec = QuadratureSpec::new(vec![0.0, 0.0], vec![1.0, 2.0], 1.0, MuConvention::Large);
        let r = integrate(&|_: &[f64]| 0.0, &|x: &[f64]| x[0] * x[0] * x[1], &spec).unwrap();
        assert!((r.value.re - 2.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn node_budget_refusal() {
        let mut spec = QuadratureSpec::new(vec![-1.0, -1.0, -1.0], vec![1.0, 1.0, 1.0], 1e7, MuConvention::Large);
        spec.node_budget = 1e8;
        let e = integrate(&|x: &[f64]| x[0] + x[1] + x[2], &|_: &[f64]| 1.0, &spec).unwrap_err();
        assert!(matches!(e, Error::NodeBudget { .. }));
    }

    #[test]
    fn config_validation() {
        let mut spec = QuadratureSpec::new(vec![0.0], vec![1.0], 1.0, MuConvention::Large);
        spec.panels_per_wavelength = 4;
        assert!(matches!(integrate(&|_: &[f64]| 0.0, &|_: &[f64]| 1.0, &spec), Err(Error::Config(_))));
        let spec = QuadratureSpec::new(vec![1.0], vec![0.0], 1.0, MuConvention::Large);
        assert!(matches!(integrate(&|_: &[f64]| 0.0, &|_: &[f64]| 1.0, &spec), Err(Error::Config(_))));
    }

    #[test]
    fn accuracy_refusal() {
        let mut spec = QuadratureSpec::new(vec![-1.0], vec![1.0], 30.0, MuConvention::Large);
        spec.rel_tolerance = 1e-30;
        spec.abs_tolerance = 0.0;
        spec.nodes_per_panel = 1;
        spec.min_panels = 4;
        let e = integrate(&|x: &[f64]| x[0] * x[0], &|x: &[f64]| bump(x[0]), &spec).unwrap_err();
        assert!(matches!(e, Error::Accuracy { .. }));
    }

    #[test]
    fn richardson_estimate_drops_by_sixteen_per_halving() {
        let mut spec = QuadratureSpec::new(vec![-1.0], vec![1.0], 40.0, MuConvention::Large);
        spec.min_panels = 8;
        spec.rel_tolerance = 1.0;
        let phase = |x: &[f64]| x[0] * x[0] + 0.3 * x[0];
        let amp = |x: &[f64]| (-x[0] * x[0]).exp();
        let est = |level: u32| {
            let mut s = spec.clone();
            s.refinement = level;
            integrate(&phase, &amp, &s).unwrap().error_estimate
        };
        let (e0, e1, e2) = (est(0), est(1), est(2));
        assert!(e0 / e1 >= 16.0, "{}", e0 / e1);
        assert!(e1 / e2 >= 16.0, "{}", e1 / e2);
        assert!(e2 > 0.0);
    }

    #[test]
    fn tanh_sinh_matches_gauss() {
        let mut spec = QuadratureSpec::new(vec![-1.0, -1.0], vec![1.0, 1.0], 20.0, MuConvention::Large);
        let phase = |x: &[f64]| x[0] * x[0] - 0.5 * x[1] * x[1] + 0.1 * x[0] * x[1];
        let amp = |x: &[f64]| bump(x[0]) * bump(x[1]);
        let g = integrate(&phase, &amp, &spec).unwrap();
        spec.rule = Rule::TanhSinh;
        spec.min_panels = 16;
        spec.rel_tolerance = 1e-4;
        let t = integrate(&phase, &amp, &spec).unwrap();
        assert!((g.value - t.value).norm() < 1e-6 * g.value.norm().max(1e-3));
    }

    #[test]
    fn three_dimensional_gaussian() {
        // ∫ exp(i r^2 / 2) exp(-r^2) over R^3 = (pi / (1 - i/2))^{3/2}
        let spec = QuadratureSpec::new(vec![-6.0; 3], vec![6.0; 3], 1.0, MuConvention::Large);
        let r = integrate(
            &|x: &[f64]| 0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]),
            &|x: &[f64]| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp(),
            &spec,
        )
        .unwrap();
        let one = Complex64::new(1.0, -0.5);
        let expect = (Complex64::new(PI, 0.0) / one).powf(1.5);
        assert!((r.value - expect).norm() < 1e-8 * expect.norm());
    }

    #[test]
    fn high_dimension_uses_lattice_on_smooth_axes() {
        // separable: exp(i k x0 x1) bump(x0) bump(x1) times a smooth periodic factor
        let spec = QuadratureSpec::new(
            vec![-1.0, -1.0, 0.0, 0.0],
            vec![1.0, 1.0, TAU, TAU],
            10.0,
            MuConvention::Large,
        );
        let amp = |x: &[f64]| bump(x[0]) * bump(x[1]) * (1.0 + 0.3 * x[2].cos()) * (2.0 + x[3].sin());
        let r = integrate(&|x: &[f64]| x[0] * x[1], &amp, &spec).unwrap();
        assert_eq!(r.oscillatory_axes, vec![0, 1]);
        assert!(r.smooth_rule.is_some());
        let spec2 = QuadratureSpec::new(vec![-1.0, -1.0], vec![1.0, 1.0], 10.0, MuConvention::Large);
        let core = integrate(&|x: &[f64]| x[0] * x[1], &|x: &[f64]| bump(x[0]) * bump(x[1]), &spec2).unwrap();
        let expect = core.value * (TAU * 2.0 * TAU);
        assert!((r.value - expect).norm() < 1e-6 * expect.norm(), "{} {}", r.value, expect);
    }

    #[test]
    fn korobov_lattice_integrates_trig_polynomials() {
        let pts = korobov_lattice(127, 3);
        let v: f64 = pts.iter().map(|u| (TAU * u[0]).cos() * (TAU * u[1]).cos() + 1.0).sum::<f64>() / 127.0;
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn convention_bridge_is_exact() {
        let phase = |x: &[f64]| x[0] * x[0] * x[1] * x[1];
        let amp = |x: &[f64]| bump(2.0 * x[0]) * bump(2.0 * x[1]);
        for mu in [64.0, 256.0, 1000.0] {
            assert_eq!(1.0 / (1.0 / mu), mu);
            let a = QuadratureSpec::new(vec![-0.5; 2], vec![0.5; 2], mu, MuConvention::Large);
            let b = QuadratureSpec::new(vec![-0.5; 2], vec![0.5; 2], 1.0 / mu, MuConvention::Small);
            let ra = integrate(&phase, &amp, &a).unwrap();
            let rb = integrate(&phase, &amp, &b).unwrap();
            assert_eq!(ra.value, rb.value);
            assert_eq!(ra.nodes, rb.nodes);
        }
    }

    #[test]
    fn fit_recovers_exact_model() {
        let samples: Vec<(f64, Complex64)> = geometric_grid(1e-4, 1e-2, 12)
            .into_iter()
            .map(|h| (h, Complex64::new(3.0 * h.sqrt() * (1.0 / h).ln() + 5.0 * h.sqrt(), 0.0)))
            .collect();
        let f = fit_asymptotics(&samples, &[Term::new(0.5, 1), Term::new(0.5, 0)]).unwrap();
        assert!((f.coefficients[0].re - 3.0).abs() < 1e-8);
        assert!((f.coefficients[1].re - 5.0).abs() < 1e-8);
        assert!(f.condition_number < 1e3);
    }

    #[test]
    fn spurious_log_term_vanishes() {
        let samples: Vec<(f64, Complex64)> = geometric_grid(1e-4, 1e-2, 12)
            .into_iter()
            .map(|h| (h, Complex64::new(0.0, 2.0 * h.sqrt())))
            .collect();
        let f = fit_asymptotics(&samples, &[Term::new(0.5, 1), Term::new(0.5, 0)]).unwrap();
        assert!(f.coefficients[0].norm() < 1e-6 * f.coefficients[1].norm());
    }

    #[test]
    fn fit_rejects_too_few_samples_and_bad_conditioning() {
        let s = vec![(0.1, Complex64::new(1.0, 0.0)); 3];
        assert!(matches!(fit_asymptotics(&s, &[Term::new(0.5, 0), Term::new(1.0, 0)]), Err(Error::Config(_))));
        let s: Vec<(f64, Complex64)> = geometric_grid(0.5, 0.5 + 1e-11, 6).into_iter().map(|h| (h, Complex64::new(h, 0.0))).collect();
        assert!(matches!(
            fit_asymptotics(&s, &[Term::new(0.5, 0), Term::new(1.0, 0)]),
            Err(Error::IllConditioned(_))
        ));
    }

    #[test]
    fn samples_csv_round_trip() {
        let s = vec![(1e-2, Complex64::new(0.25, -1.5)), (1e-3, Complex64::new(1e-17, 3.0))];
        let mut buf = Vec::new();
        write_samples_csv(&s, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("mu,re,im\r\n"));
        assert_eq!(read_samples_csv(buf.as_slice()).unwrap(), s);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn conjugation_symmetry(a in -1.0f64..1.0, b in -1.0f64..1.0, mu in 1.0f64..60.0) {
            let spec = QuadratureSpec::new(vec![-1.0, -1.0], vec![1.0, 1.0], mu, MuConvention::Large);
            let amp = |x: &[f64]| bump(x[0]) * bump(x[1]) * (1.0 + 0.2 * x[0]);
            let phase = move |x: &[f64]| x[0] * x[0] + a * x[0] * x[1] + b * x[1];
            let neg = move |x: &[f64]| -(x[0] * x[0] + a * x[0] * x[1] + b * x[1]);
            let mut s = spec.clone();
            s.rel_tolerance = 1.0;
            s.abs_tolerance = 1.0;
            let p = integrate(&phase, &amp, &s).unwrap().value;
            let q = integrate(&neg, &amp, &s).unwrap().value;
            prop_assert!((p.conj() - q).norm() <= 1e-12 * p.norm().max(1.0));
        }

        #[test]
        fn linear_in_amplitude(c in -3.0f64..3.0, mu in 1.0f64..50.0) {
            let mut s = QuadratureSpec::new(vec![-1.0], vec![1.0], mu, MuConvention::Large);
            s.rel_tolerance = 1.0;
            s.abs_tolerance = 1.0;
            let phase = |x: &[f64]| x[0] * x[0];
            let f = |x: &[f64]| bump(x[0]);
            let g = |x: &[f64]| x[0] * bump(x[0]);
            let h = move |x: &[f64]| bump(x[0]) + c * x[0] * bump(x[0]);
            let lhs = integrate(&phase, &h, &s).unwrap().value;
            let rhs = integrate(&phase, &f, &s).unwrap().value + c * integrate(&phase, &g, &s).unwrap().value;
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
