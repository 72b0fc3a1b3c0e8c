//! Monoidal transformations along coordinate-subspace centers, total and weak
//! transforms of phases, the iterated quadratic substitution δ, and the
//! leading-term pipeline for non-clean phases.
//!
//! Conventions follow the small-parameter form I(h) = ∫ e^{iψ/h} a with
//! predicted terms c·h^α (log 1/h)^k.

use crate::error::{Error, Result};
use crate::numerics::{bump, fd_gradient, fd_hessian, gauss_legendre_on, norm, orthogonal_complement, pairwise_sum_c, smooth_step};
use crate::oscquad::{integrate, MuConvention, QuadratureSpec, Term};
use crate::statphase::{q0_with_nodes, CriticalManifold, PhaseProblem, ScalarFn, VectorFn};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

/// Step of the divided-difference extension of Φ^{wk} onto the divisor.
pub const EXTENSION_STEP: f64 = 1e-4;

/// One chart of the blow-up of R^n along {x_i = 0, i ∈ center}.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlowupChart {
    pub ambient_dim: usize,
    pub center: Vec<usize>,
    /// Coordinate kept as the exceptional coordinate y_ρ.
    pub rho: usize,
}

impl BlowupChart {
    pub fn new(ambient_dim: usize, center: Vec<usize>, rho: usize) -> Result<Self> {
        let mut sorted = center.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != center.len() || center.is_empty() || center.iter().any(|&i| i >= ambient_dim) {
            return Err(Error::Config(format!("invalid center {center:?} in R^{ambient_dim}")));
        }
        if !center.contains(&rho) {
            return Err(Error::Config(format!("chart index {rho} is not a center coordinate")));
        }
        Ok(BlowupChart { ambient_dim, center, rho })
    }

    /// Power of |y_ρ| in the pulled-back density.
    pub fn jacobian_exponent(&self) -> u32 {
        self.center.len() as u32 - 1
    }

    /// x_i = y_i y_ρ for i in the center other than ρ; other coordinates fixed.
    pub fn map(&self, y: &[f64]) -> Vec<f64> {
        let mut x = y.to_vec();
        for &i in &self.center {
            if i != self.rho {
                x[i] = y[i] * y[self.rho];
            }
        }
        x
    }

    /// Inverse off the exceptional locus.
    pub fn inverse(&self, x: &[f64]) -> Option<Vec<f64>> {
        let s = x[self.rho];
        if s == 0.0 {
            return None;
        }
        let mut y = x.to_vec();
        for &i in &self.center {
            if i != self.rho {
                y[i] = x[i] / s;
            }
        }
        Some(y)
    }

    pub fn jacobian_abs(&self, y: &[f64]) -> f64 {
        y[self.rho].abs().powi(self.jacobian_exponent() as i32)
    }
}

/// Phase pulled back along a chain of blow-up charts, Φ∘Z = Π σ_j^{l_j} Φ^{wk}.
#[derive(Clone, Debug)]
pub struct TransformedPhase {
    pub base: PhaseProblem,
    pub chain: Vec<BlowupChart>,
    pub exponents: Vec<u32>,
    pub extension_step: f64,
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

impl TransformedPhase {
    /// Z: final chart coordinates to ambient coordinates.
    pub fn map(&self, y: &[f64]) -> Vec<f64> {
        self.chain.iter().rev().fold(y.to_vec(), |acc, c| c.map(&acc))
    }

    /// Exceptional coordinates σ_j of every step, in final coordinates.
    pub fn sigmas(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.chain.len()];
        let mut cur = y.to_vec();
        for (j, c) in self.chain.iter().enumerate().rev() {
            out[j] = cur[c.rho];
            cur = c.map(&cur);
        }
        out
    }

    pub fn total(&self, y: &[f64]) -> f64 {
        (self.base.phase)(&self.map(y))
    }

    /// |det DZ| as a product of exceptional-coordinate powers.
    pub fn jacobian_abs(&self, y: &[f64]) -> f64 {
        let mut cur = y.to_vec();
        let mut j = 1.0;
        for c in self.chain.iter().rev() {
            j *= c.jacobian_abs(&cur);
            cur = c.map(&cur);
        }
        j
    }

    fn last(&self) -> &BlowupChart {
        self.chain.last().expect("transformed phase has at least one chart")
    }

    /// Φ^{tot} divided by the earlier steps' factors, as a function of the
    /// last exceptional coordinate.
    fn reduced_total(&self, y: &[f64]) -> f64 {
        let s = self.sigmas(y);
        let earlier: f64 = s[..s.len() - 1].iter().zip(&self.exponents).map(|(v, &l)| v.powi(l as i32)).product();
        self.total(y) / earlier
    }

    fn weak_at_zero(&self, y: &[f64]) -> f64 {
        let m = *self.exponents.last().unwrap();
        let rho = self.last().rho;
        let h = self.extension_step;
        let mut z = y.to_vec();
        // central m-th difference at y_ρ = 0
        let mut acc = 0.0;
        for k in 0..=m {
            z[rho] = (m as f64 / 2.0 - k as f64) * h;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * binomial(m, k) * self.reduced_total(&z);
        }
        acc / (h.powi(m as i32) * factorial(m))
    }

    /// Weak transform, extended across {σ = 0} by the divided difference and
    /// linearly interpolated for 0 < |σ| < step.
    pub fn weak(&self, y: &[f64]) -> f64 {
        let m = *self.exponents.last().unwrap();
        let rho = self.last().rho;
        let s = y[rho];
        let h = self.extension_step;
        if s.abs() >= h {
            return self.reduced_total(y) / s.powi(m as i32);
        }
        let w0 = self.weak_at_zero(y);
        if s == 0.0 {
            return w0;
        }
        let mut z = y.to_vec();
        z[rho] = h * s.signum();
        let wh = self.reduced_total(&z) / z[rho].powi(m as i32);
        w0 + (s.abs() / h) * (wh - w0)
    }

    /// |Φ∘Z - Π σ^l Φ^{wk}| / max(|Φ∘Z|, tiny) at y.
    pub fn factorization_residual(&self, y: &[f64]) -> f64 {
        let tot = self.total(y);
        let s = self.sigmas(y);
        let prod: f64 = s.iter().zip(&self.exponents).map(|(v, &l)| v.powi(l as i32)).product();
        let rhs = prod * self.weak(y);
        (tot - rhs).abs() / tot.abs().max(f64::MIN_POSITIVE)
    }

    /// Weak phase as a phase problem on `chart_box`.
    pub fn weak_problem(&self, chart_box: Vec<(f64, f64)>, amplitude: ScalarFn) -> PhaseProblem {
        let tp = self.clone();
        PhaseProblem::new(format!("{}-weak", self.base.name), chart_box, move |y| tp.weak(y), move |y| amplitude(y))
    }

    /// Blow up again along a center in the current chart coordinates.
    pub fn then(mut self, chart: BlowupChart, order: u32, sample_box: &[(f64, f64)]) -> Result<TransformedPhase> {
        self.chain.push(chart);
        self.exponents.push(order);
        check_order(&self, sample_box)?;
        Ok(self)
    }
}

/// Blow-up of `problem` in `chart`, declaring that ψ vanishes to order m on
/// the center. `sample_box` is a box in chart coordinates used to check it.
pub fn blow_up(problem: &PhaseProblem, chart: BlowupChart, order: u32, sample_box: &[(f64, f64)]) -> Result<TransformedPhase> {
    if chart.ambient_dim != problem.dim {
        return Err(Error::Config(format!("chart dimension {} != phase dimension {}", chart.ambient_dim, problem.dim)));
    }
    if order == 0 {
        return Err(Error::Config("vanishing order must be at least 1".into()));
    }
    let tp = TransformedPhase { base: problem.clone(), chain: vec![chart], exponents: vec![order], extension_step: EXTENSION_STEP };
    check_order(&tp, sample_box)?;
    Ok(tp)
}

/// Samples the quotient Φ^{tot}/σ^m along σ = 10^{-1..-3}; growth by more than
/// a factor 5 per decade marks a vanishing order below the declared one.
fn check_order(tp: &TransformedPhase, sample_box: &[(f64, f64)]) -> Result<()> {
    let n = tp.base.dim;
    if sample_box.len() != n {
        return Err(Error::Config(format!("sample box needs {n} axes")));
    }
    let m = *tp.exponents.last().unwrap();
    let rho = tp.last().rho;
    let mut rng = ChaCha8Rng::seed_from_u64(0x0b10);
    let mut rows = Vec::new();
    for _ in 0..64 {
        let mut y: Vec<f64> = sample_box.iter().map(|(a, b)| a + (b - a) * rng.gen::<f64>()).collect();
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let q: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|s| {
                y[rho] = sign * s;
                (tp.reduced_total(&y) / y[rho].powi(m as i32)).abs()
            })
            .collect();
        rows.push(q);
    }
    let floor = 1e-3 * rows.iter().flatten().cloned().fold(0.0, f64::max) + 1e-300;
    for q in &rows {
        let grows = q[1] > 5.0 * (q[0] + floor) && q[2] > 5.0 * (q[1] + floor);
        if !q.iter().all(|v| v.is_finite()) || grows {
            return Err(Error::Order(format!(
                "{}: Φ/σ^{m} grows like {:e} -> {:e} as σ -> 0; the phase does not vanish to order {m} on the center",
                tp.base.name, q[0], q[2]
            )));
        }
    }
    Ok(())
}

/// δ: (σ_1..σ_N) ↦ (τ_1..τ_N), where step j multiplies every coordinate but
/// the j-th by the current j-th coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadraticSubstitution {
    pub n: usize,
}

impl QuadraticSubstitution {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("δ needs at least one variable".into()));
        }
        Ok(QuadraticSubstitution { n })
    }

    pub fn map(&self, sigma: &[f64]) -> Vec<f64> {
        self.map_with_jacobian(sigma).0
    }

    /// δ(σ) and Dδ(σ) by forward propagation through the steps.
    pub fn map_with_jacobian(&self, sigma: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let n = self.n;
        let mut s = sigma.to_vec();
        let mut jac = DMatrix::identity(n, n);
        for j in 0..n {
            let sj = s[j];
            let mut step = DMatrix::zeros(n, n);
            for i in 0..n {
                if i == j {
                    step[(i, i)] = 1.0;
                } else {
                    step[(i, i)] = sj;
                    step[(i, j)] = s[i];
                }
            }
            jac = step * jac;
            for i in 0..n {
                if i != j {
                    s[i] *= sj;
                }
            }
        }
        (s, jac)
    }

    /// Exponent matrix E with τ_i = Π_k σ_k^{E_ik}.
    pub fn exponent_matrix(&self) -> Vec<Vec<u32>> {
        let n = self.n;
        let mut e: Vec<Vec<u32>> = (0..n).map(|i| (0..n).map(|k| u32::from(i == k)).collect()).collect();
        for j in 0..n {
            let ej = e[j].clone();
            for (i, row) in e.iter_mut().enumerate() {
                if i != j {
                    for (r, v) in row.iter_mut().zip(&ej) {
                        *r += v;
                    }
                }
            }
        }
        e
    }

    /// |det Dδ| = c Π σ_k^{e_k}: returns (c, e). For monomial maps
    /// det Dδ = det(E) Π τ_i / Π σ_k.
    pub fn jacobian_monomial(&self) -> (f64, Vec<u32>) {
        let e = self.exponent_matrix();
        let n = self.n;
        let m = DMatrix::from_fn(n, n, |i, k| e[i][k] as f64);
        let c = m.determinant().round().abs();
        let exps = (0..n).map(|k| e.iter().map(|row| row[k]).sum::<u32>() - 1).collect();
        (c, exps)
    }
}

/// Parametrization of the predicted critical set of a weak phase.
#[derive(Clone)]
pub struct CriticalSampler {
    pub param_box: Vec<(f64, f64)>,
    pub map: VectorFn,
    /// Parameter that equals the exceptional coordinate σ.
    pub divisor_param: usize,
    /// Codimension of the critical set.
    pub codim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub coords: Vec<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanlinessReport {
    pub points_checked: usize,
    pub divisor_points: usize,
    pub off_set_checked: usize,
    pub codim: usize,
    /// Smallest transversal singular value over the sampled points.
    pub min_singular_value: f64,
    pub violations: Vec<Counterexample>,
}

impl CleanlinessReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

pub const SINGULAR_VALUE_MARGIN: f64 = 0.1;
const WEAK_GRAD_TOL: f64 = 1e-7;
const OFF_SET_DISTANCE: f64 = 1e-2;
const HESS_STEP: f64 = 1e-3;

/// Samples the predicted critical set of Φ^{wk} (every tenth point on the
/// divisor σ = 0) and checks that the gradient vanishes there, that it does
/// not vanish at normal displacements, and that the transversal Hessian has
/// rank codim with singular values at least 0.1.
pub fn weak_phase_cleanliness(tp: &TransformedPhase, sampler: &CriticalSampler, samples: usize, seed: u64) -> CleanlinessReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Vec<Vec<f64>> = (0..samples)
        .map(|k| {
            let mut u: Vec<f64> = sampler.param_box.iter().map(|(a, b)| a + (b - a) * rng.gen::<f64>()).collect();
            if k % 10 == 0 {
                u[sampler.divisor_param] = 0.0;
            }
            u
        })
        .collect();
    let dirs: Vec<u64> = (0..samples).map(|_| rng.gen()).collect();
    let results: Vec<(Vec<Counterexample>, f64, bool)> = params
        .par_iter()
        .zip(dirs.par_iter())
        .map(|(u, &dseed)| check_point(tp, sampler, u, dseed))
        .collect();
    let mut violations = Vec::new();
    let mut min_sv = f64::INFINITY;
    let mut off = 0;
    for (v, sv, checked_off) in results {
        violations.extend(v);
        min_sv = min_sv.min(sv);
        off += usize::from(checked_off);
    }
    CleanlinessReport {
        points_checked: samples,
        divisor_points: params.iter().filter(|u| u[sampler.divisor_param] == 0.0).count(),
        off_set_checked: off,
        codim: sampler.codim,
        min_singular_value: min_sv,
        violations,
    }
}

fn check_point(tp: &TransformedPhase, sampler: &CriticalSampler, u: &[f64], dseed: u64) -> (Vec<Counterexample>, f64, bool) {
    let mut out = Vec::new();
    let y = (sampler.map)(u);
    let weak = |z: &[f64]| tp.weak(z);
    let g = fd_gradient(weak, &y, 1e-6);
    if !(norm(&g) < WEAK_GRAD_TOL) {
        out.push(Counterexample { coords: y.clone(), detail: format!("|grad Φ^wk| = {:e} on the predicted critical set", norm(&g)) });
    }
    let frame = crate::numerics::fd_jacobian(|v| (sampler.map)(v), u, 1e-6);
    let normal = orthogonal_complement(&frame, y.len());
    if normal.ncols() != sampler.codim {
        out.push(Counterexample { coords: y.clone(), detail: format!("normal space has dimension {} not {}", normal.ncols(), sampler.codim) });
        return (out, 0.0, false);
    }
    let h = fd_hessian(weak, &y, HESS_STEP);
    let hn = normal.transpose() * h * &normal;
    let sv = hn.singular_values();
    let min_sv = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_sv >= SINGULAR_VALUE_MARGIN) {
        out.push(Counterexample { coords: y.clone(), detail: format!("transversal singular value {min_sv:e} below {SINGULAR_VALUE_MARGIN}") });
    }
    // a normal displacement must leave the critical set
    let mut r = ChaCha8Rng::seed_from_u64(dseed);
    let c: Vec<f64> = (0..normal.ncols()).map(|_| r.gen::<f64>() - 0.5).collect();
    let dir = &normal * nalgebra::DVector::from_vec(c);
    let dn = dir.norm();
    let z: Vec<f64> = y.iter().zip(dir.iter()).map(|(a, d)| a + OFF_SET_DISTANCE * d / dn).collect();
    let gz = norm(&fd_gradient(weak, &z, 1e-6));
    if !(gz > 1e-3 * OFF_SET_DISTANCE * SINGULAR_VALUE_MARGIN) {
        out.push(Counterexample { coords: z, detail: format!("gradient {gz:e} vanishes off the predicted critical set") });
    }
    (out, min_sv, true)
}

/// Critical points of the weak phase in the fiber over a fixed σ.
#[derive(Clone)]
pub enum FiberCritical {
    /// Isolated points found by multistart search.
    Search,
    /// No critical points in the chart box.
    Empty,
    /// Parametrized critical manifold in fiber coordinates.
    Manifold(CriticalManifold),
}

/// One chart of an atlas for `singular_asymptotics`.
#[derive(Clone)]
pub struct SingularChart {
    pub transformed: TransformedPhase,
    /// Box in chart coordinates containing the support of `amplitude`.
    pub chart_box: Vec<(f64, f64)>,
    /// Pulled-back amplitude times the partition function, without the
    /// Jacobian factor.
    pub amplitude: ScalarFn,
    pub fiber_critical: FiberCritical,
    pub nodes_per_axis: usize,
}

impl SingularChart {
    fn rho(&self) -> usize {
        self.transformed.last().rho
    }

    fn fiber_problem(&self, sigma: f64) -> PhaseProblem {
        let rho = self.rho();
        let embed = move |w: &[f64]| {
            let mut y = w.to_vec();
            y.insert(rho, sigma);
            y
        };
        let tp = self.transformed.clone();
        let amp = self.amplitude.clone();
        let mut fiber_box = self.chart_box.clone();
        fiber_box.remove(rho);
        let mut p = PhaseProblem::new(
            format!("{}-fiber", tp.base.name),
            fiber_box,
            move |w| tp.weak(&embed(w)),
            move |w| {
                let mut y = w.to_vec();
                y.insert(rho, sigma);
                amp(&y)
            },
        );
        if let FiberCritical::Manifold(cm) = &self.fiber_critical {
            p = p.with_critical_manifold(cm.clone());
        }
        p
    }

    /// Q₀ of the fiber problem with large parameter σ^l/h; the sign of σ^l
    /// flips the signature.
    fn fiber_q0(&self, sigma: f64, negative_side: bool) -> Result<(Complex64, f64)> {
        if matches!(self.fiber_critical, FiberCritical::Empty) {
            return Ok((Complex64::new(0.0, 0.0), 0.0));
        }
        let l = *self.transformed.exponents.last().unwrap();
        let mut prob = self.fiber_problem(sigma);
        let negative = (sigma < 0.0 || negative_side) && l % 2 == 1;
        if negative {
            prob = prob.conjugate();
        }
        let r = q0_with_nodes(&prob, self.nodes_per_axis).map_err(|e| match e {
            Error::CleanlinessViolation { .. } | Error::MissingCriticalManifold(_) => {
                Error::NotResolved(format!("weak phase of {} is not clean in the fiber over σ = {sigma}: {e}", prob.name))
            }
            other => other,
        })?;
        if r.psi0.abs() > 1e-9 {
            return Err(Error::NotResolved(format!("weak phase has nonzero critical value {} over σ = {sigma}", r.psi0)));
        }
        Ok((r.q0, 2.0 * r.order))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedTerm {
    pub alpha: f64,
    pub log_power: u32,
    pub coefficient: Complex64,
}

impl PredictedTerm {
    pub fn term(&self) -> Term {
        Term::new(self.alpha, self.log_power)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularPrediction {
    /// Leading term summed over charts.
    pub leading: PredictedTerm,
    pub chart_terms: Vec<PredictedTerm>,
}

/// Leading term of I(h) predicted chart by chart: stationary phase of Φ^{wk}
/// in the fiber over σ with large parameter |σ|^l/h, then the σ-integral of
/// |σ|^{e - l k/2} Q₀(σ). Exponent -1 gives a log(1/h) term with the cutoff
/// ε = h^{1/l}; exponents above -1 give a pure power.
pub fn singular_asymptotics(atlas: &[SingularChart]) -> Result<SingularPrediction> {
    if atlas.is_empty() {
        return Err(Error::Config("empty atlas".into()));
    }
    let terms: Vec<Option<PredictedTerm>> = atlas.iter().map(chart_term).collect::<Result<_>>()?;
    let present: Vec<&PredictedTerm> = terms.iter().flatten().collect();
    let Some(first) = present.first() else {
        return Err(Error::NotResolved("no chart carries critical points".into()));
    };
    // leading = smallest α, then largest log power
    let best = present
        .iter()
        .map(|t| (t.alpha, t.log_power))
        .fold((first.alpha, first.log_power), |acc, t| {
            if t.0 < acc.0 - 1e-12 || ((t.0 - acc.0).abs() <= 1e-12 && t.1 > acc.1) {
                t
            } else {
                acc
            }
        });
    let coef: Complex64 = present
        .iter()
        .filter(|t| (t.alpha - best.0).abs() <= 1e-12 && t.log_power == best.1)
        .map(|t| t.coefficient)
        .sum();
    let chart_terms = terms
        .into_iter()
        .map(|t| t.unwrap_or(PredictedTerm { alpha: best.0, log_power: best.1, coefficient: Complex64::new(0.0, 0.0) }))
        .collect();
    Ok(SingularPrediction { leading: PredictedTerm { alpha: best.0, log_power: best.1, coefficient: coef }, chart_terms })
}

fn chart_term(chart: &SingularChart) -> Result<Option<PredictedTerm>> {
    if matches!(chart.fiber_critical, FiberCritical::Empty) {
        return Ok(None);
    }
    let rho = chart.rho();
    let l = *chart.transformed.exponents.last().unwrap() as f64;
    let e = chart.transformed.last().jacobian_exponent() as f64;
    let (lo, hi) = chart.chart_box[rho];
    let (q_plus, k) = chart.fiber_q0(0.0, false)?;
    let q_minus = chart.fiber_q0(0.0, true)?.0;
    let beta = e - l * k / 2.0;
    let pre = TAU.powf(k / 2.0);
    if (beta + 1.0).abs() < 1e-12 {
        let mut c = Complex64::new(0.0, 0.0);
        if hi > 0.0 {
            c += q_plus;
        }
        if lo < 0.0 {
            c += q_minus;
        }
        return Ok(Some(PredictedTerm { alpha: k / 2.0, log_power: 1, coefficient: pre * c / l }));
    }
    if beta < -1.0 {
        return Err(Error::NotResolved(format!(
            "σ-weight exponent {beta} < -1: the leading term comes from the region |σ| < h^(1/{l}) and needs a further blow-up"
        )));
    }
    // ∫_0^R σ^β f(σ) dσ = R^{β+1}/(β+1) ∫_0^1 f(R w^{1/(β+1)}) dw
    let side = |r: f64| -> Result<Complex64> {
        if r == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let q = 1.0 / (beta + 1.0);
        let nodes = gauss_legendre_on(chart.nodes_per_axis, 0.0, 1.0);
        let vals: Vec<Complex64> = nodes
            .par_iter()
            .map(|&(w, wt)| chart.fiber_q0(r * w.powf(q), r < 0.0).map(|v| v.0 * wt))
            .collect::<Result<_>>()?;
        Ok(pairwise_sum_c(&vals) * r.abs().powf(beta + 1.0) / (beta + 1.0))
    };
    let c = side(hi.max(0.0))? + side(lo.min(0.0))?;
    Ok(Some(PredictedTerm { alpha: k / 2.0, log_power: 0, coefficient: pre * c }))
}

/// I(h) as the sum over charts of ∫ e^{iΦ^{tot}/h} b |det DZ| over each chart
/// box, split at σ = 0 where the Jacobian factor has a kink.
pub fn pullback_integral(atlas: &[SingularChart], h: f64, rel_tolerance: f64) -> Result<Complex64> {
    let mut total = Complex64::new(0.0, 0.0);
    for chart in atlas {
        let tp = chart.transformed.clone();
        let amp = chart.amplitude.clone();
        let phase = |y: &[f64]| tp.total(y);
        let weight = |y: &[f64]| amp(y) * tp.jacobian_abs(y);
        let rho = chart.rho();
        let (a, b) = chart.chart_box[rho];
        let pieces = if a < 0.0 && b > 0.0 { vec![(a, 0.0), (0.0, b)] } else { vec![(a, b)] };
        for (pa, pb) in pieces {
            let (mut lo, mut hi): (Vec<f64>, Vec<f64>) = chart.chart_box.iter().cloned().unzip();
            lo[rho] = pa;
            hi[rho] = pb;
            let mut spec = QuadratureSpec::new(lo, hi, h, MuConvention::Small);
            spec.rel_tolerance = rel_tolerance;
            total += integrate(&phase, &weight, &spec)?.value;
        }
    }
    Ok(total)
}

/// I(h) = ∫ e^{iψ/h} a over the support box of `problem`, for each h.
pub fn direct_samples(problem: &PhaseProblem, grid: &[f64], rel_tolerance: f64) -> Result<Vec<(f64, Complex64)>> {
    let (lo, hi): (Vec<f64>, Vec<f64>) = problem.support.iter().cloned().unzip();
    grid.iter()
        .map(|&h| {
            let mut spec = QuadratureSpec::new(lo.clone(), hi.clone(), h, MuConvention::Small);
            spec.rel_tolerance = rel_tolerance;
            let r = integrate(&|x: &[f64]| (problem.phase)(x), &|x: &[f64]| (problem.amplitude)(x), &spec)?;
            Ok((h, r.value))
        })
        .collect()
}

/// Model terms h^{1/2} log(1/h) and h^{1/2} for the xy2 fit.
pub fn xy2_fit_terms() -> Vec<Term> {
    vec![Term::new(0.5, 1), Term::new(0.5, 0)]
}

/// Radial profile of the two-chart partition of unity on R²: 1 for r ≤ 0.8,
/// 0 for r ≥ 1.25, and S(r) + 1 - S(1/r) = 1 across the overlap.
pub fn partition_profile(r: f64) -> f64 {
    const LO: f64 = 0.8;
    const HI: f64 = 1.25;
    // symmetric in log r about 0 so that S(r) + S(1/r) = 1
    let t = (r.ln() - LO.ln()) / (HI.ln() - LO.ln());
    1.0 - smooth_step(t)
}

/// Half-width of the amplitude support of the xy2 example.
pub const XY2_RADIUS: f64 = 0.5;

pub fn xy2_amplitude(x: &[f64]) -> f64 {
    bump(x[0] / XY2_RADIUS) * bump(x[1] / XY2_RADIUS)
}

pub fn xy2_problem() -> PhaseProblem {
    let r = XY2_RADIUS;
    PhaseProblem::new("xy2", vec![(-r, r), (-r, r)], |x| (x[0] * x[1]).powi(2), xy2_amplitude)
        .with_gradient(|x| vec![2.0 * x[0] * x[1] * x[1], 2.0 * x[0] * x[0] * x[1]])
}

/// Two-chart atlas of the blow-up of the origin for ψ = (xy)².
/// Chart 0: x = t, y = t v. Chart 1: x = u s, y = s.
pub fn xy2_atlas() -> Result<Vec<SingularChart>> {
    let p = xy2_problem();
    let r = XY2_RADIUS;
    let vmax = 1.25;
    let cbox = vec![(-r, r), (-vmax, vmax)];
    let c0 = BlowupChart::new(2, vec![0, 1], 0)?;
    let c1 = BlowupChart::new(2, vec![0, 1], 1)?;
    let t0 = blow_up(&p, c0, 4, &cbox)?;
    let t1 = blow_up(&p, c1, 4, &[(-vmax, vmax), (-r, r)])?;
    let a0: ScalarFn = Arc::new(|y: &[f64]| xy2_amplitude(&[y[0], y[0] * y[1]]) * partition_profile(y[1].abs()));
    let a1: ScalarFn = Arc::new(|y: &[f64]| xy2_amplitude(&[y[0] * y[1], y[1]]) * (1.0 - partition_profile(1.0 / y[0].abs())));
    Ok(vec![
        SingularChart { transformed: t0, chart_box: cbox, amplitude: a0, fiber_critical: FiberCritical::Search, nodes_per_axis: 32 },
        SingularChart {
            transformed: t1,
            chart_box: vec![(-vmax, vmax), (-r, r)],
            amplitude: a1,
            fiber_critical: FiberCritical::Search,
            nodes_per_axis: 32,
        },
    ])
}

/// Predicted critical set {v = 0} of the chart-0 weak phase of xy2, in (t, v).
pub fn xy2_critical_sampler() -> CriticalSampler {
    CriticalSampler {
        param_box: vec![(-XY2_RADIUS, XY2_RADIUS)],
        map: Arc::new(|u| vec![u[0], 0.0]),
        divisor_param: 0,
        codim: 1,
    }
}

/// Half-width of the auxiliary s support in the torus model.
pub const TORUS_S_RADIUS: f64 = 0.5;

/// Normalized weight e(s) = (1 + cos(π s/R))/(2R) on |s| < R.
pub fn torus_s_weight(s: f64) -> f64 {
    let r = TORUS_S_RADIUS;
    if s.abs() >= r {
        0.0
    } else {
        (1.0 + (PI * s / r).cos()) / (2.0 * r)
    }
}

/// Torus equivariant phase with the auxiliary coordinate s:
/// variables (x1, x2, ξ1, ξ2, θ, s), ψ = -θ ξ1, amplitude a(x, ξ, θ) e(s).
pub fn torus_model_problem() -> PhaseProblem {
    let r = crate::statphase::TORUS_L0_RADIUS;
    let support = vec![(0.0, TAU), (0.0, TAU), (-r, r), (-r, r), (-r, r), (-TORUS_S_RADIUS, TORUS_S_RADIUS)];
    PhaseProblem::new("torus-model", support, |z| crate::statphase::torus_l0_phase(&z[..5]), |z| {
        crate::statphase::torus_l0_amplitude(&z[..5]) * torus_s_weight(z[5])
    })
}

/// Blow-up of {θ = s = 0} in the chart θ = A σ, s = σ: Φ^{tot} = σ(-A ξ1).
pub fn torus_weak_transform() -> Result<TransformedPhase> {
    let p = torus_model_problem();
    let chart = BlowupChart::new(6, vec![4, 5], 5)?;
    let r = crate::statphase::TORUS_L0_RADIUS;
    let sbox = vec![(0.0, TAU), (0.0, TAU), (-r, r), (-r, r), (-1.25, 1.25), (-TORUS_S_RADIUS, TORUS_S_RADIUS)];
    blow_up(&p, chart, 1, &sbox)
}

/// Predicted critical set {A = 0, ξ1 = 0} of the torus weak phase.
pub fn torus_critical_sampler() -> CriticalSampler {
    let r = crate::statphase::TORUS_L0_RADIUS;
    CriticalSampler {
        param_box: vec![(0.0, TAU), (0.0, TAU), (-r, r), (-TORUS_S_RADIUS, TORUS_S_RADIUS)],
        map: Arc::new(|u| vec![u[0], u[1], 0.0, u[2], 0.0, u[3]]),
        divisor_param: 3,
        codim: 2,
    }
}

/// Two-chart atlas of the torus model: chart 0 (θ = Aσ, s = σ) carries the
/// critical set; chart 1 (θ = τ, s = Bτ) has weak phase -ξ1 without
/// critical points.
pub fn torus_atlas(nodes_per_axis: usize) -> Result<Vec<SingularChart>> {
    let r = crate::statphase::TORUS_L0_RADIUS;
    let rs = TORUS_S_RADIUS;
    let p = torus_model_problem();
    let t0 = torus_weak_transform()?;
    let c1 = BlowupChart::new(6, vec![4, 5], 4)?;
    let t1 = blow_up(&p, c1, 1, &[(0.0, TAU), (0.0, TAU), (-r, r), (-r, r), (-r, r), (-1.25, 1.25)])?;
    let amp0: ScalarFn = Arc::new(move |y: &[f64]| {
        let z = [y[0], y[1], y[2], y[3], y[4] * y[5], y[5]];
        crate::statphase::torus_l0_amplitude(&z[..5]) * torus_s_weight(z[5]) * partition_profile(y[4].abs())
    });
    let amp1: ScalarFn = Arc::new(move |y: &[f64]| {
        let z = [y[0], y[1], y[2], y[3], y[4], y[4] * y[5]];
        crate::statphase::torus_l0_amplitude(&z[..5]) * torus_s_weight(z[5]) * (1.0 - partition_profile(1.0 / y[5].abs()))
    });
    // fiber coordinates of chart 0: (x1, x2, ξ1, ξ2, A); C = {ξ1 = A = 0}
    let fiber = CriticalManifold {
        param_box: vec![(0.0, TAU), (0.0, TAU), (-r, r)],
        map: Arc::new(|u| vec![u[0], u[1], 0.0, u[2], 0.0]),
        tangent: None,
    };
    Ok(vec![
        SingularChart {
            transformed: t0,
            chart_box: vec![(0.0, TAU), (0.0, TAU), (-r, r), (-r, r), (-1.25, 1.25), (-rs, rs)],
            amplitude: amp0,
            fiber_critical: FiberCritical::Manifold(fiber),
            nodes_per_axis,
        },
        SingularChart {
            transformed: t1,
            chart_box: vec![(0.0, TAU), (0.0, TAU), (-r, r), (-r, r), (-r, r), (-1.25, 1.25)],
            amplitude: amp1,
            fiber_critical: FiberCritical::Empty,
            nodes_per_axis,
        },
    ])
}
