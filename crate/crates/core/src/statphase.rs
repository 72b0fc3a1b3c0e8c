//! Stationary phase on clean critical manifolds.
//!
//! Convention: for the large-parameter integral I(μ) = ∫ e^{iμψ} a,
//! I(μ) ≈ (2π/μ)^{(n-p)/2} e^{iμψ₀} Q₀ with
//! Q₀ = e^{iπσ/4} ∫_C a / |det ψ''|_{N C}|^{1/2} dσ_C.
//! The small-parameter form e^{iψ/h} is the same with μ = 1/h.

use crate::actions::{GroupActionSpec, ManifoldId};
use crate::error::{Error, Result};
use crate::numerics::{bump, fd_gradient, fd_hessian, fd_jacobian, gauss_legendre_on, norm, orthogonal_complement, pairwise_sum_c, smooth_step};
use crate::symplectic::EquivariantPhase;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

const GRAD_STEP: f64 = 1e-6;
const HESS_STEP: f64 = 1e-4;
const CRITICAL_TOL: f64 = 1e-8;
const EIGEN_TOL: f64 = 1e-10;
pub const DEFAULT_NODES_PER_AXIS: usize = 32;
const MULTISTART_PER_AXIS: usize = 16;
const MERGE_RADIUS: f64 = 1e-6;
const ACCUMULATION_RADIUS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradientSource {
    Analytic,
    FiniteDifference,
}

/// Parametrization of a critical manifold by a box in R^p.
#[derive(Clone)]
pub struct CriticalManifold {
    pub param_box: Vec<(f64, f64)>,
    pub map: VectorFn,
    /// Tangent frame (n x p); finite differences of `map` when absent.
    pub tangent: Option<MatrixFn>,
}

impl CriticalManifold {
    pub fn dim(&self) -> usize {
        self.param_box.len()
    }

    pub fn frame(&self, u: &[f64]) -> DMatrix<f64> {
        match &self.tangent {
            Some(t) => t(u),
            None => fd_jacobian(|v| (self.map)(v), u, GRAD_STEP),
        }
    }
}

#[derive(Clone)]
pub struct PhaseProblem {
    pub name: String,
    pub dim: usize,
    pub phase: ScalarFn,
    pub gradient: Option<VectorFn>,
    pub hessian: Option<MatrixFn>,
    pub amplitude: ScalarFn,
    /// Box containing the support of the amplitude.
    pub support: Vec<(f64, f64)>,
    pub critical_manifold: Option<CriticalManifold>,
}

impl fmt::Debug for PhaseProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhaseProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("gradient", &self.gradient_source())
            .field("support", &self.support)
            .field("critical_manifold_dim", &self.critical_manifold.as_ref().map(|c| c.dim()))
            .finish()
    }
}

impl PhaseProblem {
    pub fn new(
        name: impl Into<String>,
        support: Vec<(f64, f64)>,
        phase: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        amplitude: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        PhaseProblem {
            name: name.into(),
            dim: support.len(),
            phase: Arc::new(phase),
            gradient: None,
            hessian: None,
            amplitude: Arc::new(amplitude),
            support,
            critical_manifold: None,
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn with_hessian(mut self, h: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.hessian = Some(Arc::new(h));
        self
    }

    pub fn with_critical_manifold(mut self, c: CriticalManifold) -> Self {
        self.critical_manifold = Some(c);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.support.len() != self.dim || self.dim == 0 {
            return Err(Error::Config(format!("{}: support box must have {} axes", self.name, self.dim)));
        }
        if self.support.iter().any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
            return Err(Error::Config(format!("{}: support box must be finite and non-empty", self.name)));
        }
        Ok(())
    }

    pub fn gradient_source(&self) -> GradientSource {
        if self.gradient.is_some() {
            GradientSource::Analytic
        } else {
            GradientSource::FiniteDifference
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        match &self.gradient {
            Some(g) => g(x),
            None => fd_gradient(|v| (self.phase)(v), x, GRAD_STEP),
        }
    }

    pub fn hess(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.hessian {
            Some(h) => h(x),
            None => fd_hessian(|v| (self.phase)(v), x, HESS_STEP),
        }
    }

    /// The problem with ψ replaced by -ψ.
    pub fn conjugate(&self) -> PhaseProblem {
        let mut out = self.clone();
        let p = self.phase.clone();
        out.phase = Arc::new(move |x| -p(x));
        if let Some(g) = self.gradient.clone() {
            out.gradient = Some(Arc::new(move |x| g(x).into_iter().map(|v| -v).collect()));
        }
        if let Some(h) = self.hessian.clone() {
            out.hessian = Some(Arc::new(move |x| -h(x)));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransversalHessian {
    pub det: f64,
    pub signature: i32,
    pub inverse_norm: f64,
}

/// Hessian restricted to the orthogonal complement of `frame` (n x p).
pub fn transversal_hessian(problem: &PhaseProblem, point: &[f64], frame: &DMatrix<f64>) -> Result<TransversalHessian> {
    let n = problem.dim;
    let g = norm(&problem.grad(point));
    if !(g < CRITICAL_TOL) {
        return Err(Error::Config(format!("{}: |grad ψ| = {g:e} at {point:?} is not critical", problem.name)));
    }
    let p = frame.ncols();
    if p > 0 && frame.clone().svd(false, false).rank(1e-8) < p {
        return Err(Error::Config(format!("{}: tangent frame has rank below {p}", problem.name)));
    }
    let normal = orthogonal_complement(frame, n);
    let h = problem.hess(point);
    let hn = normal.transpose() * h * &normal;
    transversal_from_matrix(hn, point)
}

fn transversal_from_matrix(hn: DMatrix<f64>, point: &[f64]) -> Result<TransversalHessian> {
    let hn = (&hn + hn.transpose()) * 0.5;
    if hn.nrows() == 0 {
        return Ok(TransversalHessian { det: 1.0, signature: 0, inverse_norm: 0.0 });
    }
    let eig = SymmetricEigen::new(hn);
    let mut det = 1.0;
    let mut sig = 0;
    let mut min_abs = f64::INFINITY;
    for &l in eig.eigenvalues.iter() {
        if l.abs() < EIGEN_TOL {
            return Err(Error::CleanlinessViolation {
                point: point.to_vec(),
                detail: format!("transversal Hessian eigenvalue {l:e}"),
            });
        }
        det *= l;
        sig += if l > 0.0 { 1 } else { -1 };
        min_abs = min_abs.min(l.abs());
    }
    Ok(TransversalHessian { det, signature: sig, inverse_norm: 1.0 / min_abs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatPhaseResult {
    pub q0: Complex64,
    pub signature: i32,
    pub transversal_det_samples: Vec<f64>,
    /// (n - p)/2.
    pub order: f64,
    /// Critical value ψ₀.
    pub psi0: f64,
    /// Quadrature nodes on C, or number of isolated critical points.
    pub samples: usize,
    pub error_model: String,
}

impl StatPhaseResult {
    /// Leading term (2π/μ)^{order} e^{iμψ₀} Q₀.
    pub fn leading(&self, mu: f64) -> Complex64 {
        (TAU / mu).powf(self.order) * Complex64::from_polar(1.0, mu * self.psi0) * self.q0
    }

    pub fn json_record(&self) -> serde_json::Value {
        serde_json::json!({
            "q0_re": self.q0.re,
            "q0_im": self.q0.im,
            "signature": self.signature,
            "order": self.order,
            "samples": self.samples,
        })
    }
}

fn gl_tensor(param_box: &[(f64, f64)], per_axis: usize) -> Vec<(Vec<f64>, f64)> {
    let rules: Vec<Vec<(f64, f64)>> = param_box.iter().map(|&(a, b)| gauss_legendre_on(per_axis, a, b)).collect();
    let total = per_axis.pow(param_box.len() as u32);
    (0..total)
        .map(|mut idx| {
            let mut u = Vec::with_capacity(rules.len());
            let mut w = 1.0;
            for r in &rules {
                let (x, wx) = r[idx % per_axis];
                idx /= per_axis;
                u.push(x);
                w *= wx;
            }
            (u, w)
        })
        .collect()
}

/// Leading coefficient Q₀.
pub fn q0(problem: &PhaseProblem) -> Result<StatPhaseResult> {
    q0_with_nodes(problem, DEFAULT_NODES_PER_AXIS)
}

pub fn q0_with_nodes(problem: &PhaseProblem, per_axis: usize) -> Result<StatPhaseResult> {
    problem.validate()?;
    match &problem.critical_manifold {
        Some(c) => q0_manifold(problem, c, per_axis),
        None => q0_isolated(problem),
    }
}

fn q0_manifold(problem: &PhaseProblem, cm: &CriticalManifold, per_axis: usize) -> Result<StatPhaseResult> {
    let n = problem.dim;
    let p = cm.dim();
    if p >= n {
        return Err(Error::Config(format!("{}: critical manifold dimension {p} >= {n}", problem.name)));
    }
    let nodes = gl_tensor(&cm.param_box, per_axis);
    let parts: Vec<Result<(f64, f64, TransversalHessian)>> = nodes
        .par_iter()
        .map(|(u, w)| {
            let m = (cm.map)(u);
            let frame = cm.frame(u);
            let th = transversal_hessian(problem, &m, &frame)?;
            let gram = frame.transpose() * &frame;
            let dsigma = gram.determinant().max(0.0).sqrt();
            let val = w * (problem.amplitude)(&m) * dsigma / th.det.abs().sqrt();
            Ok((val, (problem.phase)(&m), th))
        })
        .collect();
    let parts: Vec<(f64, f64, TransversalHessian)> = parts.into_iter().collect::<Result<_>>()?;
    let signature = parts[0].2.signature;
    if let Some(bad) = parts.iter().find(|t| t.2.signature != signature) {
        return Err(Error::CleanlinessViolation {
            point: vec![],
            detail: format!("signature changes from {signature} to {} along C", bad.2.signature),
        });
    }
    let psi0 = parts[0].1;
    if let Some(bad) = parts.iter().find(|t| (t.1 - psi0).abs() > 1e-9 * (1.0 + psi0.abs())) {
        return Err(Error::Unsupported(format!("{}: ψ is not constant on C ({} vs {psi0})", problem.name, bad.1)));
    }
    let vals: Vec<Complex64> = parts.iter().map(|t| Complex64::new(t.0, 0.0)).collect();
    let integral = pairwise_sum_c(&vals);
    Ok(StatPhaseResult {
        q0: integral * Complex64::from_polar(1.0, PI * signature as f64 / 4.0),
        signature,
        transversal_det_samples: parts.iter().map(|t| t.2.det).collect(),
        order: (n - p) as f64 / 2.0,
        psi0,
        samples: nodes.len(),
        error_model: format!("Gauss-Legendre {per_axis} points per axis on C"),
    })
}

/// Damped Newton iteration on ∇ψ = 0 with a pseudo-inverse step.
fn newton(problem: &PhaseProblem, start: &[f64]) -> Option<Vec<f64>> {
    let mut x = start.to_vec();
    let mut g = problem.grad(&x);
    let mut gn = norm(&g);
    for _ in 0..100 {
        if gn < 1e-12 {
            break;
        }
        let h = problem.hess(&x);
        let step = h.svd(true, true).solve(&DVector::from_vec(g.clone()), 1e-12).ok()?;
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-6 {
            let y: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            let gy = problem.grad(&y);
            let ny = norm(&gy);
            if ny < gn {
                x = y;
                g = gy;
                gn = ny;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let inside = x.iter().zip(&problem.support).all(|(v, (a, b))| *v >= *a && *v <= *b);
    (gn < CRITICAL_TOL && inside).then_some(x)
}

/// Critical points of ψ in the support box by multistart Newton from a
/// 16^n grid, merged at radius 1e-6.
pub fn find_critical_points(problem: &PhaseProblem) -> Result<Vec<Vec<f64>>> {
    problem.validate()?;
    let n = problem.dim;
    if n > 4 {
        return Err(Error::Resource(format!("multistart grid 16^{n} is too large; provide the critical manifold")));
    }
    let k = MULTISTART_PER_AXIS;
    let starts: Vec<Vec<f64>> = (0..k.pow(n as u32))
        .map(|mut idx| {
            problem
                .support
                .iter()
                .map(|&(a, b)| {
                    let i = idx % k;
                    idx /= k;
                    a + (b - a) * (i as f64 + 0.5) / k as f64
                })
                .collect()
        })
        .collect();
    let found: Vec<Option<Vec<f64>>> = starts.par_iter().map(|s| newton(problem, s)).collect();
    let mut points: Vec<Vec<f64>> = Vec::new();
    for x in found.into_iter().flatten() {
        if !points.iter().any(|p| crate::numerics::dist(p, &x) < MERGE_RADIUS) {
            points.push(x);
        }
    }
    points.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(points)
}

fn q0_isolated(problem: &PhaseProblem) -> Result<StatPhaseResult> {
    let n = problem.dim;
    let points = find_critical_points(problem)?;
    let active: Vec<&Vec<f64>> = points.iter().filter(|p| (problem.amplitude)(p) != 0.0).collect();
    // Newton stalls short of a degenerate point, leaving a cluster of
    // distinct near-critical points around it.
    for (i, p) in active.iter().enumerate() {
        if active[i + 1..].iter().any(|q| crate::numerics::dist(p, q) < ACCUMULATION_RADIUS) {
            return Err(Error::CleanlinessViolation {
                point: p.to_vec(),
                detail: format!("{}: critical points accumulate; the critical set is not isolated here", problem.name),
            });
        }
    }
    let mut terms = Vec::new();
    let mut dets = Vec::new();
    let mut signature = None;
    let mut psi0 = None;
    for p in &active {
        let h = problem.hess(p);
        let eig = SymmetricEigen::new((&h + h.transpose()) * 0.5);
        let null = eig.eigenvalues.iter().filter(|l| l.abs() < EIGEN_TOL).count();
        if null > 0 {
            if null == n {
                return Err(Error::CleanlinessViolation {
                    point: p.to_vec(),
                    detail: format!("{}: Hessian has {null} zero eigenvalues; the critical set is not clean here", problem.name),
                });
            }
            return Err(Error::MissingCriticalManifold(null));
        }
        let th = transversal_from_matrix(h, p)?;
        if *signature.get_or_insert(th.signature) != th.signature {
            return Err(Error::CleanlinessViolation { point: p.to_vec(), detail: "signature differs between critical points".into() });
        }
        let v = (problem.phase)(p);
        if (v - *psi0.get_or_insert(v)).abs() > 1e-9 * (1.0 + v.abs()) {
            return Err(Error::Unsupported(format!("{}: critical points with different critical values", problem.name)));
        }
        dets.push(th.det);
        terms.push(Complex64::new((problem.amplitude)(p) / th.det.abs().sqrt(), 0.0));
    }
    let signature = signature.unwrap_or(0);
    Ok(StatPhaseResult {
        q0: pairwise_sum_c(&terms) * Complex64::from_polar(1.0, PI * signature as f64 / 4.0),
        signature,
        transversal_det_samples: dets,
        order: n as f64 / 2.0,
        psi0: psi0.unwrap_or(0.0),
        samples: active.len(),
        error_model: "exact at isolated non-degenerate critical points".into(),
    })
}

/// Sequence of cutoff values for the equivariant leading coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L0Result {
    pub value: Complex64,
    /// (ε, L₀(ε)) for the cutoff family, empty when no cutoff is applied.
    pub eps_sequence: Vec<(f64, Complex64)>,
    /// Successive differences of the cutoff sequence are non-increasing.
    pub converged: bool,
}

/// Distance-like function to the singular part of Ω.
pub type SingularDistance = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Equivariant phase on T*M × G as a phase problem in the variables
/// (x, ξ, g) near g = e, together with the parametrization of Reg C.
/// Implemented for rotations of flat tori, where Reg C = {g = e, ξ_1..ξ_κ = 0}.
pub fn equivariant_problem(phi: &EquivariantPhase, amplitude: ScalarFn, support: Vec<(f64, f64)>) -> Result<PhaseProblem> {
    let spec: &GroupActionSpec = &phi.model.spec;
    let ManifoldId::Torus(n) = spec.manifold else {
        return Err(Error::Unsupported(format!("{}: explicit Reg C parametrization exists for flat tori only", spec.key)));
    };
    let d = spec.dim_g;
    if support.len() != 2 * n + d {
        return Err(Error::Config(format!("support box needs {} axes (x, ξ, g)", 2 * n + d)));
    }
    let mut param_box: Vec<(f64, f64)> = vec![(0.0, TAU); n];
    param_box.extend_from_slice(&support[n + d..2 * n]);
    let cm = CriticalManifold {
        param_box,
        map: Arc::new(move |u: &[f64]| {
            let mut z = u[..n].to_vec();
            z.extend(std::iter::repeat(0.0).take(d));
            z.extend_from_slice(&u[n..]);
            z.extend(std::iter::repeat(0.0).take(d));
            z
        }),
        tangent: None,
    };
    let phase = {
        let phi = phi.clone();
        move |z: &[f64]| phi.value(0, &z[..n], &z[n..2 * n], &crate::actions::GroupElement(z[2 * n..].to_vec())).unwrap_or(f64::NAN)
    };
    let mut p = PhaseProblem::new(format!("{}-equivariant", spec.key), support, phase, move |z: &[f64]| amplitude(z));
    p = p.with_critical_manifold(cm);
    Ok(p)
}

/// L₀ = ∫_{Reg C} a / |det Φ''|_{N Reg C}|^{1/2}. With a singular distance
/// the amplitude is multiplied by 1 - u_ε (u_ε = 1 within ε, 0 beyond 2ε)
/// for each ε of `eps`.
pub fn l0_equivariant(
    phi: &EquivariantPhase,
    amplitude: ScalarFn,
    support: Vec<(f64, f64)>,
    singular: Option<(SingularDistance, Vec<f64>)>,
) -> Result<L0Result> {
    let base = equivariant_problem(phi, amplitude.clone(), support.clone())?;
    let strip_phase = |r: StatPhaseResult| r.q0 * Complex64::from_polar(1.0, -PI * r.signature as f64 / 4.0);
    let Some((dist, eps)) = singular else {
        return Ok(L0Result { value: strip_phase(q0(&base)?), eps_sequence: vec![], converged: true });
    };
    let mut seq = Vec::with_capacity(eps.len());
    for &e in &eps {
        let a = amplitude.clone();
        let dd = dist.clone();
        let cut: ScalarFn = Arc::new(move |z: &[f64]| a(z) * smooth_step((dd(z) - e) / e));
        let prob = equivariant_problem(phi, cut, support.clone())?;
        seq.push((e, strip_phase(q0(&prob)?)));
    }
    let diffs: Vec<f64> = seq.windows(2).map(|w| (w[1].1 - w[0].1).norm()).collect();
    let converged = diffs.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-14);
    let value = seq.last().map(|s| s.1).ok_or_else(|| Error::Config("empty ε sequence".into()))?;
    if !converged {
        return Err(Error::NonConvergent(format!("ε-cutoff differences {diffs:?} are not decreasing")));
    }
    Ok(L0Result { value, eps_sequence: seq, converged })
}

/// Named built-in phase problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinPhase {
    pub name: String,
    /// Half-width of the amplitude support (per axis).
    #[serde(default)]
    pub width: Option<f64>,
}

pub const BUILTIN_PHASES: &[&str] = &["fresnel", "fresnel-line", "saddle", "torus-l0", "xy2"];

/// Half-width of the ξ and θ support in the torus benchmark.
pub const TORUS_L0_RADIUS: f64 = 0.5;

/// Amplitude b(x) c(ξ) d(θ) of the torus benchmark.
pub fn torus_l0_amplitude(z: &[f64]) -> f64 {
    let r = TORUS_L0_RADIUS;
    let b = 1.0 + 0.5 * z[0].cos() + 0.25 * z[1].sin();
    b * bump(z[2] / r) * bump(z[3] / r) * bump(z[4] / r)
}

/// Torus benchmark phase in the variables (x1, x2, ξ1, ξ2, θ), |θ| < π.
pub fn torus_l0_phase(z: &[f64]) -> f64 {
    -z[4] * z[2]
}

pub fn builtin_problem(spec: &BuiltinPhase) -> Result<PhaseProblem> {
    let w = spec.width.unwrap_or(1.0);
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::Config(format!("phase width must be positive, got {w}")));
    }
    Ok(match spec.name.as_str() {
        "fresnel" => PhaseProblem::new("fresnel", vec![(-w, w)], |x| 0.5 * x[0] * x[0], move |x| bump(x[0] / w))
            .with_gradient(|x| vec![x[0]])
            .with_hessian(|_| DMatrix::from_element(1, 1, 1.0)),
        "fresnel-line" => PhaseProblem::new(
            "fresnel-line",
            vec![(-w, w), (-w, w)],
            |x| 0.5 * x[0] * x[0],
            move |x| bump(x[0] / w) * bump(x[1] / w),
        )
        .with_gradient(|x| vec![x[0], 0.0])
        .with_hessian(|_| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]))
        .with_critical_manifold(CriticalManifold {
            param_box: vec![(-w, w)],
            map: Arc::new(|u| vec![0.0, u[0]]),
            tangent: Some(Arc::new(|_| DMatrix::from_column_slice(2, 1, &[0.0, 1.0]))),
        }),
        "saddle" => PhaseProblem::new(
            "saddle",
            vec![(-w, w), (-w, w)],
            |x| x[0] * x[0] - x[1] * x[1],
            move |x| bump(x[0] / w) * bump(x[1] / w),
        )
        .with_gradient(|x| vec![2.0 * x[0], -2.0 * x[1]])
        .with_hessian(|_| DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -2.0])),
        "torus-l0" => {
            let r = TORUS_L0_RADIUS;
            let support = vec![(0.0, TAU), (0.0, TAU), (-r, r), (-r, r), (-r, r)];
            PhaseProblem::new("torus-l0", support, torus_l0_phase, torus_l0_amplitude)
                .with_gradient(|z| vec![0.0, 0.0, -z[4], 0.0, -z[2]])
                .with_critical_manifold(CriticalManifold {
                    param_box: vec![(0.0, TAU), (0.0, TAU), (-r, r)],
                    map: Arc::new(|u| vec![u[0], u[1], 0.0, u[2], 0.0]),
                    tangent: None,
                })
        }
        "xy2" => {
            let r = 0.5 * w;
            PhaseProblem::new(
                "xy2",
                vec![(-r, r), (-r, r)],
                |x| (x[0] * x[1]).powi(2),
                move |x| bump(x[0] / r) * bump(x[1] / r),
            )
            .with_gradient(|x| vec![2.0 * x[0] * x[1] * x[1], 2.0 * x[0] * x[0] * x[1]])
        }
        other => {
            return Err(Error::Config(format!("unknown phase '{other}'; built-ins are {}", BUILTIN_PHASES.join(", "))))
        }
    })
}

/// Loads a built-in phase from TOML text such as `name = "fresnel"`.
pub fn load_phase_problem(text: &str) -> Result<PhaseProblem> {
    let spec: BuiltinPhase = toml::from_str(text)?;
    builtin_problem(&spec)
}
