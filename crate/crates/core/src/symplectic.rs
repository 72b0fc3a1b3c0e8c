//! Momentum map, equivariant phase and reduced volume on the cotangent bundle.
//!
//! T*M carries the Sasaki metric built from the metric of M:
//! ds^2 = g(dx, dx) + g^{-1}(Dξ, Dξ), Dξ_k = dξ_k - Γ^j_{ik} ξ_j dx^i.
//! The reduced volume integrates the induced density of Ω ∩ S*M divided by
//! the Sasaki length of the orbit through each point.

use crate::actions::{orbit_type_info, GroupActionSpec, GroupElement, GroupId, Isotropy, ManifoldId};
use crate::error::{Error, Result};
use crate::numerics::{dot, fd_jacobian, gauss_legendre_on, norm, pairwise_sum};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotangentPoint {
    pub chart: usize,
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumMapModel {
    pub spec: GroupActionSpec,
    /// Constant factor applied to the metric of M.
    pub metric_scale: f64,
}

const CHRISTOFFEL_STEP: f64 = 1e-5;
const FIELD_JACOBIAN_STEP: f64 = 1e-4;
const ORBIT_NODES: usize = 64;

impl MomentumMapModel {
    pub fn new(spec: GroupActionSpec) -> Self {
        MomentumMapModel { spec, metric_scale: 1.0 }
    }

    pub fn n(&self) -> usize {
        self.spec.dim_m
    }

    pub fn metric(&self, c: usize, y: &[f64]) -> DMatrix<f64> {
        self.spec.metric(c, y) * self.metric_scale
    }

    /// Riemannian volume of M.
    pub fn volume(&self) -> f64 {
        let base = match self.spec.manifold {
            ManifoldId::Torus(n) => TAU.powi(n as i32),
            ManifoldId::Sphere2 => 4.0 * PI,
            ManifoldId::Sphere3 => 2.0 * PI * PI,
            ManifoldId::LensSpace(p) => 2.0 * PI * PI / p as f64,
        };
        base * self.metric_scale.powf(self.n() as f64 / 2.0)
    }

    fn flat(&self) -> bool {
        matches!(self.spec.manifold, ManifoldId::Torus(_))
    }

    /// Fundamental vector field of the Lie algebra element `alg` at `y`.
    pub fn fundamental_field(&self, alg: &[f64], c: usize, y: &[f64]) -> Result<Vec<f64>> {
        if alg.len() != self.spec.dim_g {
            return Err(Error::Config(format!("Lie algebra element needs {} components", self.spec.dim_g)));
        }
        if self.flat() {
            let mut v = vec![0.0; self.n()];
            v[..alg.len()].copy_from_slice(alg);
            return Ok(v);
        }
        let h = self.spec.fd_step;
        let gp = GroupElement(alg.iter().map(|a| a * h).collect());
        let gm = GroupElement(alg.iter().map(|a| -a * h).collect());
        let p = self.spec.act(&gp, c, y)?;
        let m = self.spec.act(&gm, c, y)?;
        Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect())
    }

    fn generators(&self) -> Vec<Vec<f64>> {
        (0..self.spec.dim_g)
            .map(|i| {
                let mut e = vec![0.0; self.spec.dim_g];
                e[i] = 1.0;
                e
            })
            .collect()
    }

    /// Christoffel symbols, `gamma[j][(i, k)] = Γ^j_{ik}`.
    pub fn christoffel(&self, c: usize, y: &[f64]) -> Vec<DMatrix<f64>> {
        let n = self.n();
        if self.flat() {
            return vec![DMatrix::zeros(n, n); n];
        }
        let h = CHRISTOFFEL_STEP;
        let mut z = y.to_vec();
        let dg: Vec<DMatrix<f64>> = (0..n)
            .map(|i| {
                z[i] = y[i] + h;
                let p = self.metric(c, &z);
                z[i] = y[i] - h;
                let m = self.metric(c, &z);
                z[i] = y[i];
                (p - m) / (2.0 * h)
            })
            .collect();
        let ginv = self.metric(c, y).try_inverse().expect("metric is positive definite");
        (0..n)
            .map(|j| {
                DMatrix::from_fn(n, n, |i, k| {
                    0.5 * (0..n)
                        .map(|l| ginv[(j, l)] * (dg[i][(l, k)] + dg[k][(l, i)] - dg[l][(i, k)]))
                        .sum::<f64>()
                })
            })
            .collect()
    }

    /// Sasaki metric at (y, xi) in coordinates (dx, dxi).
    pub fn sasaki_metric(&self, c: usize, y: &[f64], xi: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        let g = self.metric(c, y);
        let ginv = g.clone().try_inverse().expect("metric is positive definite");
        let gamma = self.christoffel(c, y);
        // Dξ = dξ - C dx with C[k][i] = Γ^j_{ik} ξ_j
        let cm = DMatrix::from_fn(n, n, |k, i| (0..n).map(|j| gamma[j][(i, k)] * xi[j]).sum::<f64>());
        let mut s = DMatrix::zeros(2 * n, 2 * n);
        let top = &g + cm.transpose() * &ginv * &cm;
        let off = -(&ginv * &cm);
        s.view_mut((0, 0), (n, n)).copy_from(&top);
        s.view_mut((n, 0), (n, n)).copy_from(&off);
        s.view_mut((0, n), (n, n)).copy_from(&off.transpose());
        s.view_mut((n, n), (n, n)).copy_from(&ginv);
        s
    }

    /// Cotangent lift of the fundamental field: (X̃, -(DX̃)^T ξ).
    pub fn lifted_field(&self, alg: &[f64], c: usize, y: &[f64], xi: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let xt = self.fundamental_field(alg, c, y)?;
        if self.flat() {
            return Ok((xt, vec![0.0; self.n()]));
        }
        let f = |z: &[f64]| self.fundamental_field(alg, c, z).unwrap_or_else(|_| vec![f64::NAN; z.len()]);
        let d = fd_jacobian(f, y, FIELD_JACOBIAN_STEP);
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::Chart(format!("fundamental field leaves chart {c} near {y:?}")));
        }
        let v = -(d.transpose() * DVector::from_column_slice(xi));
        Ok((xt, v.iter().cloned().collect()))
    }

    /// Sasaki norm of a tangent vector (dx, dxi) at (y, xi).
    pub fn sasaki_norm(&self, c: usize, y: &[f64], xi: &[f64], dx: &[f64], dxi: &[f64]) -> f64 {
        let s = self.sasaki_metric(c, y, xi);
        let v = DVector::from_iterator(dx.len() + dxi.len(), dx.iter().chain(dxi).cloned());
        (v.transpose() * s * &v)[(0, 0)].max(0.0).sqrt()
    }

    /// Image of a cotangent point under g, expressed in the chart chosen for
    /// the image point.
    pub fn act_cotangent(&self, g: &GroupElement, pt: &CotangentPoint) -> Result<CotangentPoint> {
        let (c2, x2) = self.spec.act_selected(g, pt.chart, &pt.x)?;
        let (_, dg) = self.spec.action_differential(g, pt.chart, &pt.x)?;
        let dgt = dg.transpose();
        let xi2 = dgt
            .lu()
            .solve(&DVector::from_column_slice(&pt.xi))
            .ok_or_else(|| Error::Chart("singular action differential".into()))?;
        Ok(CotangentPoint { chart: c2, x: x2, xi: xi2.iter().cloned().collect() })
    }

    /// Period of principal orbits of the circle action.
    pub fn principal_period(&self) -> Result<f64> {
        let info = orbit_type_info(&self.spec)?;
        Ok(match info.principal_isotropy {
            Isotropy::Cyclic(q) => TAU / q as f64,
            Isotropy::Circle => 0.0,
        })
    }

    /// Sasaki length of the orbit through `pt` by 64-point Gauss–Legendre
    /// arc-length quadrature over one principal period.
    pub fn orbit_length(&self, pt: &CotangentPoint) -> Result<f64> {
        if self.spec.group != GroupId::Circle {
            return Err(Error::Unsupported("orbit length is implemented for circle actions".into()));
        }
        let period = self.principal_period()?;
        let mut terms = Vec::with_capacity(ORBIT_NODES);
        for (t, w) in gauss_legendre_on(ORBIT_NODES, 0.0, period) {
            let q = if t == 0.0 { pt.clone() } else { self.act_cotangent(&GroupElement::circle(t), pt)? };
            terms.push(w * self.orbit_speed(&q)?);
        }
        Ok(pairwise_sum(&terms))
    }

    /// Orbit length as period times the speed at `pt`. The catalog actions
    /// are isometries, so their cotangent lifts preserve the Sasaki metric and
    /// the speed is constant along the orbit; agrees with `orbit_length`.
    pub fn orbit_length_isometric(&self, pt: &CotangentPoint) -> Result<f64> {
        if self.spec.group != GroupId::Circle {
            return Err(Error::Unsupported("orbit length is implemented for circle actions".into()));
        }
        Ok(self.principal_period()? * self.orbit_speed(pt)?)
    }

    /// Sasaki speed of the circle orbit at `pt`.
    pub fn orbit_speed(&self, pt: &CotangentPoint) -> Result<f64> {
        let (vx, vxi) = self.lifted_field(&[1.0], pt.chart, &pt.x, &pt.xi)?;
        Ok(self.sasaki_norm(pt.chart, &pt.x, &pt.xi, &vx, &vxi))
    }

    /// g^{-1}-orthonormal frame (n x (n - dim G)) of the annihilator of the
    /// orbit directions at y. `pivot` fixes which coordinate covectors are
    /// completed; pass the value returned at a nearby point for smoothness.
    pub fn annihilator_frame(&self, c: usize, y: &[f64], pivot: Option<&[usize]>) -> Result<(DMatrix<f64>, Vec<usize>)> {
        let n = self.n();
        let g = self.metric(c, y);
        let ginv = g.clone().try_inverse().expect("metric is positive definite");
        let ip = |a: &DVector<f64>, b: &DVector<f64>| (a.transpose() * &ginv * b)[(0, 0)];
        let mut basis: Vec<DVector<f64>> = Vec::new();
        for gen in self.generators() {
            let xt = DVector::from_vec(self.fundamental_field(&gen, c, y)?);
            let mut v = &g * xt;
            for b in &basis {
                let p = ip(b, &v);
                v -= b * p;
            }
            let len = ip(&v, &v).sqrt();
            if len > 1e-12 {
                basis.push(v / len);
            }
        }
        let orbit_rank = basis.len();
        let order: Vec<usize> = match pivot {
            Some(p) => p.to_vec(),
            None => {
                let mut idx: Vec<(f64, usize)> = (0..n)
                    .map(|i| {
                        let mut e = DVector::zeros(n);
                        e[i] = 1.0;
                        let along: f64 = basis.iter().map(|b| ip(b, &e).powi(2)).sum();
                        (along / ip(&e, &e), i)
                    })
                    .collect();
                idx.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                idx.into_iter().map(|(_, i)| i).take(n - orbit_rank).collect()
            }
        };
        let mut frame = Vec::new();
        for &i in &order {
            let mut v = DVector::zeros(n);
            v[i] = 1.0;
            for b in basis.iter().chain(frame.iter()) {
                let p = ip(b, &v);
                v -= b * p;
            }
            let len = ip(&v, &v).sqrt();
            if len < 1e-10 {
                return Err(Error::Chart(format!("annihilator frame degenerates at {y:?}")));
            }
            frame.push(v / len);
        }
        Ok((DMatrix::from_columns(&frame), order))
    }

    /// Random cotangent point with ξ in the zero level of the momentum map.
    pub fn sample_omega_point(&self, rng: &mut impl Rng, radius: f64) -> Result<CotangentPoint> {
        let (c, y) = self.spec.sample_chart_point(rng);
        let (frame, _) = self.annihilator_frame(c, &y, None)?;
        let s: Vec<f64> = (0..frame.ncols()).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let xi = &frame * DVector::from_vec(s);
        Ok(CotangentPoint { chart: c, x: y, xi: xi.iter().map(|v| v * radius).collect() })
    }
}

/// J_X(x, ξ) = ξ(X̃_x).
pub fn momentum(model: &MomentumMapModel, pt: &CotangentPoint, alg: &[f64]) -> Result<f64> {
    model.spec.chart(pt.chart)?;
    if !model.spec.charts[pt.chart].contains(&pt.x) {
        return Err(Error::Chart(format!("point {:?} outside chart {}", pt.x, pt.chart)));
    }
    let xt = model.fundamental_field(alg, pt.chart, &pt.x)?;
    Ok(dot(&xt, &pt.xi))
}

/// Φ(x, ξ, g) = ⟨x - g x, ξ⟩ in the chart of the point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivariantPhase {
    pub model: MomentumMapModel,
    /// Step of the finite-difference gradients.
    pub fd_step: f64,
}

impl EquivariantPhase {
    pub fn new(model: MomentumMapModel) -> Self {
        EquivariantPhase { model, fd_step: 1e-6 }
    }

    fn spec(&self) -> &GroupActionSpec {
        &self.model.spec
    }

    pub fn value(&self, c: usize, x: &[f64], xi: &[f64], g: &GroupElement) -> Result<f64> {
        let gx = self.spec().act(g, c, x)?;
        Ok(x.iter().zip(&gx).zip(xi).map(|((a, b), e)| (a - b) * e).sum())
    }

    fn is_analytic(&self) -> bool {
        matches!(self.spec().manifold, ManifoldId::Torus(_))
    }

    /// (∂_x Φ, ∂_ξ Φ, ∂_g Φ), length 2n + d.
    pub fn gradient(&self, pt: &CotangentPoint, g: &GroupElement) -> Result<Vec<f64>> {
        let n = self.model.n();
        let c = pt.chart;
        let gx = self.spec().act(g, c, &pt.x)?;
        let mut out = Vec::with_capacity(2 * n + g.0.len());
        if self.is_analytic() {
            out.extend(std::iter::repeat(0.0).take(n));
            out.extend(pt.x.iter().zip(&gx).map(|(a, b)| a - b));
            out.extend(pt.xi[..g.0.len()].iter().map(|v| -v));
            return Ok(out);
        }
        let h = self.fd_step;
        let fx = |z: &[f64]| self.value(c, z, &pt.xi, g).unwrap_or(f64::NAN);
        out.extend(crate::numerics::fd_gradient(fx, &pt.x, h));
        out.extend(pt.x.iter().zip(&gx).map(|(a, b)| a - b));
        let fg = |t: &[f64]| self.value(c, &pt.x, &pt.xi, &GroupElement(t.to_vec())).unwrap_or(f64::NAN);
        out.extend(crate::numerics::fd_gradient(fg, &g.0, h));
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Chart(format!("g x leaves chart {c} near {:?}", pt.x)));
        }
        Ok(out)
    }

    /// Membership of (x, ξ, g) in Crit(Φ).
    pub fn critical_set_check(&self, pt: &CotangentPoint, g: &GroupElement) -> bool {
        const TOL: f64 = 1e-9;
        let c = pt.chart;
        let Ok(gx) = self.spec().act(g, c, &pt.x) else { return false };
        if crate::numerics::dist(&gx, &pt.x) >= TOL {
            return false;
        }
        let f = |z: &[f64]| self.spec().act(g, c, z).unwrap_or_else(|_| vec![f64::NAN; z.len()]);
        let dg = fd_jacobian(f, &pt.x, self.spec().fd_step);
        let Some(pushed) = dg.transpose().lu().solve(&DVector::from_column_slice(&pt.xi)) else { return false };
        let moved = pushed.iter().zip(&pt.xi).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if !(moved < TOL) {
            return false;
        }
        self.model
            .generators()
            .iter()
            .all(|e| momentum(&self.model, pt, e).map(|j| j.abs() < TOL).unwrap_or(false))
    }
}

/// Order of the isotropy group of the cotangent point.
pub fn cotangent_isotropy_order(model: &MomentumMapModel, pt: &CotangentPoint) -> Result<u32> {
    let p = model.spec.from_chart(pt.chart, &pt.x)?;
    let q = match model.spec.sampled_stabilizer(&p) {
        Isotropy::Cyclic(q) => q,
        Isotropy::Circle => return Err(Error::Unsupported("point fixed by the whole group".into())),
    };
    let mut count = 0;
    for j in 0..q {
        let g = GroupElement::circle(TAU * j as f64 / q as f64);
        let img = model.act_cotangent(&g, pt)?;
        let back = model.spec.to_chart(pt.chart, &model.spec.from_chart(img.chart, &img.x)?)?;
        // compare covectors in the original chart
        let moved = if img.chart == pt.chart {
            norm(&img.xi.iter().zip(&pt.xi).map(|(a, b)| a - b).collect::<Vec<_>>())
        } else {
            let t = model.spec.transition_jacobian(pt.chart, img.chart, &pt.x)?;
            let xi_here = t.transpose() * DVector::from_column_slice(&img.xi);
            norm(&xi_here.iter().zip(&pt.xi).map(|(a, b)| a - b).collect::<Vec<_>>())
        };
        if crate::numerics::dist(&back, &pt.x) < 1e-8 && moved < 1e-6 {
            count += 1;
        }
    }
    Ok(count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VolumeMethod {
    Grid,
    MonteCarlo,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedVolumeEstimate {
    pub value: f64,
    pub standard_error: f64,
    pub sample_count: u64,
    pub method: VolumeMethod,
    pub skipped_singular: u64,
    /// False when the estimate from the first half of the samples differs
    /// from the full estimate by more than three standard errors.
    pub converged: bool,
}

impl ReducedVolumeEstimate {
    pub fn json_record(&self, action: &str) -> serde_json::Value {
        serde_json::json!({
            "action": action,
            "samples": self.sample_count,
            "value": self.value,
            "stderr": self.standard_error,
            "skipped_singular": self.skipped_singular,
        })
    }
}

fn sphere_volume(k: usize) -> f64 {
    let h = (k as f64 + 1.0) / 2.0;
    2.0 * PI.powf(h) / statrs::function::gamma::gamma(h)
}

/// vol(S^{n-κ-1}) ∫_M dx / |orbit(x)| in closed form for the catalog actions.
pub fn closed_form_reduced_volume(model: &MomentumMapModel) -> Result<ReducedVolumeEstimate> {
    let spec = &model.spec;
    let n = model.n();
    if n <= spec.dim_g {
        return Err(Error::Unsupported("reduced volume needs n > dim G".into()));
    }
    let f = n - spec.dim_g;
    let base = match (spec.manifold, spec.group) {
        (ManifoldId::Torus(_), _) => TAU.powi(n as i32 - spec.dim_g as i32) * sphere_volume(f - 1),
        // ∫ dA / (2π sin θ) = 2π on the round sphere
        (ManifoldId::Sphere2, GroupId::Circle) => 2.0 * PI,
        (ManifoldId::Sphere3, GroupId::Circle) => 2.0 * PI * PI,
        (ManifoldId::LensSpace(p), GroupId::Circle) => 2.0 * PI * PI * spec.kernel_order() as f64 / p as f64,
        _ => return Err(Error::Unsupported(format!("no closed form for {}", spec.key))),
    };
    Ok(ReducedVolumeEstimate {
        value: base * model.metric_scale.powf(f as f64 / 2.0),
        standard_error: 0.0,
        sample_count: 0,
        method: VolumeMethod::ClosedForm,
        skipped_singular: 0,
        converged: true,
    })
}

/// How sample points are assigned to charts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChartCover {
    /// Chart whose projection pole is farthest from the point.
    Farthest,
    /// The other chart whenever the point lies in its domain (torus: angles
    /// lifted to [pi, 3 pi)).
    Alternate,
}

pub const MIN_SAMPLES: u64 = 1000;
const CHUNK: u64 = 2048;
const ORBIT_CUTOFF: f64 = 1e-6;
const PARAM_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    sum: f64,
    sumsq: f64,
    count: u64,
    skipped: u64,
}

impl Moments {
    fn merge(a: Moments, b: Moments) -> Moments {
        Moments { sum: a.sum + b.sum, sumsq: a.sumsq + b.sumsq, count: a.count + b.count, skipped: a.skipped + b.skipped }
    }
}

fn tree_merge(parts: &[Moments]) -> Moments {
    match parts.len() {
        0 => Moments::default(),
        1 => parts[0],
        n => Moments::merge(tree_merge(&parts[..n / 2]), tree_merge(&parts[n / 2..])),
    }
}

/// Unit vector in R^f from hyperspherical angles (f - 1 of them).
fn hyperspherical(a: &[f64]) -> Vec<f64> {
    let f = a.len() + 1;
    let mut out = vec![0.0; f];
    let mut s = 1.0;
    for i in 0..a.len() {
        out[i] = s * a[i].cos();
        s *= a[i].sin();
    }
    out[f - 1] = s;
    out
}

/// Box of the hyperspherical angles: [0, pi]^{f-2} x [0, 2 pi).
fn angle_box(f: usize) -> Vec<f64> {
    (0..f.saturating_sub(1)).map(|i| if i + 2 == f { TAU } else { PI }).collect()
}

impl MomentumMapModel {
    fn cover_chart(&self, p: &[f64], cover: ChartCover) -> Option<(usize, Vec<f64>)> {
        match cover {
            ChartCover::Farthest => {
                let c = self.spec.select_chart(p);
                self.spec.to_chart(c, p).ok().map(|y| (c, y))
            }
            ChartCover::Alternate => {
                if self.flat() {
                    let y: Vec<f64> = p.iter().map(|v| PI + (v - PI).rem_euclid(TAU)).collect();
                    return Some((0, y));
                }
                let c = 1 - self.spec.select_chart(p);
                match self.spec.to_chart(c, p) {
                    Ok(y) if y.iter().all(|v| v.abs() <= 2.0) => Some((c, y)),
                    _ => {
                        let c = 1 - c;
                        self.spec.to_chart(c, p).ok().map(|y| (c, y))
                    }
                }
            }
        }
    }

    /// Random point of M and its sampling density relative to the Riemannian
    /// volume. On S^2 the polar angle is drawn uniformly, which flattens the
    /// 1/sin(θ) growth of the integrand at the fixed points.
    fn sample_base(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
        if self.spec.manifold == ManifoldId::Sphere2 {
            let th = rng.gen::<f64>() * PI;
            let ph = rng.gen::<f64>() * TAU;
            let p = vec![th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
            let rel = 1.0 / (TAU * PI * th.sin().max(f64::MIN_POSITIVE) * self.metric_scale);
            return (p, rel);
        }
        (self.spec.sample_point(rng), 1.0 / self.volume())
    }

    /// Point of Ω ∩ S*M over chart point y with fiber parameter s.
    fn fiber_point(&self, c: usize, y: &[f64], s: &[f64], pivot: Option<&[usize]>) -> Result<(Vec<f64>, Vec<usize>)> {
        let (frame, piv) = self.annihilator_frame(c, y, pivot)?;
        let xi = frame * DVector::from_column_slice(s);
        Ok((xi.iter().cloned().collect(), piv))
    }

    /// Induced Sasaki density of (y, a) ↦ (y, ξ(y, a)) at one point.
    fn sigma_density(&self, c: usize, y: &[f64], angles: &[f64], sheet: f64) -> Result<(f64, Vec<f64>)> {
        let n = self.n();
        let unit = |a: &[f64]| -> Vec<f64> {
            if a.is_empty() {
                vec![sheet]
            } else {
                hyperspherical(a)
            }
        };
        let (xi0, piv) = self.fiber_point(c, y, &unit(angles), None)?;
        let cols = n + angles.len();
        let mut jac = DMatrix::zeros(2 * n, cols);
        // the frame turns at a rate ~ 1/|X̃| near fixed points
        let speed = self
            .generators()
            .iter()
            .map(|e| self.fundamental_field(e, c, y).map(|v| norm(&v)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        let h = PARAM_STEP * speed.min(1.0);
        if h < 1e-14 {
            return Err(Error::Chart(format!("orbit direction degenerates at {y:?}")));
        }
        let mut z = y.to_vec();
        for i in 0..n {
            z[i] = y[i] + h;
            let (xp, _) = self.fiber_point(c, &z, &unit(angles), Some(&piv))?;
            z[i] = y[i] - h;
            let (xm, _) = self.fiber_point(c, &z, &unit(angles), Some(&piv))?;
            z[i] = y[i];
            jac[(i, i)] = 1.0;
            for k in 0..n {
                jac[(n + k, i)] = (xp[k] - xm[k]) / (2.0 * h);
            }
        }
        let mut a = angles.to_vec();
        for j in 0..angles.len() {
            a[j] = angles[j] + h;
            let (xp, _) = self.fiber_point(c, y, &unit(&a), Some(&piv))?;
            a[j] = angles[j] - h;
            let (xm, _) = self.fiber_point(c, y, &unit(&a), Some(&piv))?;
            a[j] = angles[j];
            for k in 0..n {
                jac[(n + k, n + j)] = (xp[k] - xm[k]) / (2.0 * h);
            }
        }
        let s = self.sasaki_metric(c, y, &xi0);
        let gram = jac.transpose() * s * &jac;
        Ok((gram.determinant().max(0.0).sqrt(), xi0))
    }

    /// Integrand of the reduced volume for one sampled point of M: the sum over
    /// fiber sheets (or one angle sample) of density / orbit length, divided by
    /// the sampling density. `None` marks a point skipped as singular.
    fn sample_value(&self, rng: &mut ChaCha8Rng, cover: ChartCover) -> Result<Option<f64>> {
        let n = self.n();
        let f = n - self.spec.dim_g;
        let (p, rel) = self.sample_base(rng);
        let Some((c, y)) = self.cover_chart(&p, cover) else { return Ok(None) };
        let p_y = self.metric(c, &y).determinant().sqrt() * rel;
        let abox = angle_box(f);
        let angles: Vec<f64> = abox.iter().map(|w| rng.gen::<f64>() * w).collect();
        let a_vol: f64 = abox.iter().product();
        let sheets: &[f64] = if f == 1 { &[1.0, -1.0] } else { &[1.0] };
        let mut total = 0.0;
        for &sheet in sheets {
            let (dens, xi) = match self.sigma_density(c, &y, &angles, sheet) {
                Ok(v) => v,
                Err(Error::Chart(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let pt = CotangentPoint { chart: c, x: y.clone(), xi };
            let len = match self.orbit_length_any(&pt) {
                Ok(l) => l,
                Err(Error::Chart(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            if len < ORBIT_CUTOFF {
                return Ok(None);
            }
            total += dens / len;
        }
        Ok(Some(total * a_vol / p_y))
    }

    /// Orbit volume for circle or 2-torus actions on flat tori.
    fn orbit_length_any(&self, pt: &CotangentPoint) -> Result<f64> {
        match self.spec.group {
            GroupId::Circle => self.orbit_length_isometric(pt),
            GroupId::Torus2 => {
                if !self.flat() {
                    return Err(Error::Unsupported("2-torus actions are only cataloged on flat tori".into()));
                }
                Ok(TAU * TAU * self.metric_scale)
            }
        }
    }
}

/// Monte Carlo estimate of vol[(Reg Ω ∩ S*M)/G].
pub fn reduced_volume(model: &MomentumMapModel, samples: u64, seed: u64) -> Result<ReducedVolumeEstimate> {
    reduced_volume_with_cover(model, samples, seed, ChartCover::Farthest)
}

pub fn reduced_volume_with_cover(
    model: &MomentumMapModel,
    samples: u64,
    seed: u64,
    cover: ChartCover,
) -> Result<ReducedVolumeEstimate> {
    if samples < MIN_SAMPLES {
        return Err(Error::Config(format!("reduced_volume needs at least {MIN_SAMPLES} samples, got {samples}")));
    }
    if model.n() <= model.spec.dim_g {
        return Err(Error::Unsupported("reduced volume needs n > dim G".into()));
    }
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<Result<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let len = CHUNK.min(samples - k * CHUNK);
            let mut vals = Vec::with_capacity(len as usize);
            let mut skipped = 0;
            for _ in 0..len {
                match model.sample_value(&mut rng, cover)? {
                    Some(v) => vals.push(v),
                    None => {
                        skipped += 1;
                        vals.push(0.0);
                    }
                }
            }
            let sq: Vec<f64> = vals.iter().map(|v| v * v).collect();
            Ok(Moments { sum: pairwise_sum(&vals), sumsq: pairwise_sum(&sq), count: len, skipped })
        })
        .collect();
    let parts: Vec<Moments> = parts.into_iter().collect::<Result<_>>()?;
    let stats = |m: Moments| {
        let nn = m.count as f64;
        let mean = m.sum / nn;
        let var = (m.sumsq / nn - mean * mean).max(0.0) * nn / (nn - 1.0).max(1.0);
        (mean, (var / nn).sqrt())
    };
    let all = tree_merge(&parts);
    let (value, se) = stats(all);
    let half = tree_merge(&parts[..(parts.len() / 2).max(1)]);
    let (hv, hse) = stats(half);
    let converged = (hv - value).abs() <= 3.0 * hse.max(se) + 1e-12 * value.abs();
    Ok(ReducedVolumeEstimate {
        value,
        standard_error: se,
        sample_count: samples,
        method: VolumeMethod::MonteCarlo,
        skipped_singular: all.skipped,
        converged,
    })
}

/// Midpoint-grid estimate for flat tori, `per_axis` points per angle.
pub fn reduced_volume_grid(model: &MomentumMapModel, per_axis: usize) -> Result<ReducedVolumeEstimate> {
    let ManifoldId::Torus(n) = model.spec.manifold else {
        return Err(Error::Unsupported("grid reduced volume is implemented for flat tori".into()));
    };
    let f = n - model.spec.dim_g;
    let abox = angle_box(f);
    let total_axes = n + abox.len();
    let count = per_axis.pow(total_axes as u32);
    let cell = TAU.powi(n as i32) * abox.iter().product::<f64>() / count as f64;
    let sheets: &[f64] = if f == 1 { &[1.0, -1.0] } else { &[1.0] };
    let mut vals = Vec::with_capacity(count);
    let mut skipped = 0;
    for idx in 0..count {
        let mut r = idx;
        let mut u = Vec::with_capacity(total_axes);
        for _ in 0..total_axes {
            u.push((r % per_axis) as f64 + 0.5);
            r /= per_axis;
        }
        let y: Vec<f64> = u[..n].iter().map(|v| TAU * v / per_axis as f64).collect();
        let a: Vec<f64> = u[n..].iter().zip(&abox).map(|(v, w)| w * v / per_axis as f64).collect();
        let mut s = 0.0;
        for &sheet in sheets {
            let (dens, xi) = model.sigma_density(0, &y, &a, sheet)?;
            let len = model.orbit_length_any(&CotangentPoint { chart: 0, x: y.clone(), xi })?;
            if len < ORBIT_CUTOFF {
                skipped += 1;
                continue;
            }
            s += dens / len;
        }
        vals.push(s * cell);
    }
    Ok(ReducedVolumeEstimate {
        value: pairwise_sum(&vals),
        standard_error: 0.0,
        sample_count: count as u64,
        method: VolumeMethod::Grid,
        skipped_singular: skipped,
        converged: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn model(key: &str) -> MomentumMapModel {
        MomentumMapModel::new(GroupActionSpec::from_key(key).unwrap())
    }

    #[test]
    fn torus_momentum_is_first_covector_component() {
        let m = model("torus2-rot1");
        let pt = CotangentPoint { chart: 0, x: vec![0.3, 1.7], xi: vec![-2.5, 4.0] };
        assert_eq!(momentum(&m, &pt, &[1.0]).unwrap(), -2.5);
        let zero = CotangentPoint { xi: vec![0.0, 0.0], ..pt };
        assert_eq!(momentum(&m, &zero, &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn momentum_vanishes_on_annihilator() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for key in ["s2-rot", "s3-hopf", "lens-p3-right", "torus3-rot1"] {
            let m = model(key);
            for _ in 0..50 {
                let pt = m.sample_omega_point(&mut rng, 2.0).unwrap();
                assert!(momentum(&m, &pt, &[1.0]).unwrap().abs() < 1e-12, "{key}");
            }
        }
    }

    #[test]
    fn momentum_is_linear_in_the_algebra() {
        let m = model("torus3-rot2");
        let pt = CotangentPoint { chart: 0, x: vec![0.1, 0.2, 0.3], xi: vec![1.0, -2.0, 3.0] };
        let a = momentum(&m, &pt, &[1.0, 0.0]).unwrap();
        let b = momentum(&m, &pt, &[0.0, 1.0]).unwrap();
        let ab = momentum(&m, &pt, &[2.0, -3.0]).unwrap();
        assert!((ab - (2.0 * a - 3.0 * b)).abs() < 1e-12);
    }

    #[test]
    fn momentum_rejects_points_outside_chart() {
        let m = model("s2-rot");
        let pt = CotangentPoint { chart: 0, x: vec![10.0, 0.0], xi: vec![1.0, 0.0] };
        assert!(matches!(momentum(&m, &pt, &[1.0]), Err(Error::Chart(_))));
    }

    #[test]
    fn phase_vanishes_at_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for key in ["torus2-rot1", "s2-rot", "s3-hopf", "lens-p4-right"] {
            let phi = EquivariantPhase::new(model(key));
            for _ in 0..20 {
                let (c, y) = phi.model.spec.sample_chart_point(&mut rng);
                let xi: Vec<f64> = (0..y.len()).map(|_| rng.gen::<f64>() - 0.5).collect();
                assert!(phi.value(c, &y, &xi, &GroupElement::circle(0.0)).unwrap().abs() < 1e-14);
            }
        }
    }

    #[test]
    fn identity_gradient_is_minus_momentum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for key in ["torus2-rot1", "s2-rot", "s3-hopf"] {
            let phi = EquivariantPhase::new(model(key));
            for _ in 0..20 {
                let (c, y) = phi.model.spec.sample_chart_point(&mut rng);
                let xi: Vec<f64> = (0..y.len()).map(|_| rng.gen::<f64>() - 0.5).collect();
                let pt = CotangentPoint { chart: c, x: y, xi };
                let g = phi.gradient(&pt, &GroupElement::circle(0.0)).unwrap();
                let n = pt.x.len();
                assert!(g[n..2 * n].iter().all(|v| v.abs() < 1e-14));
                let j = momentum(&phi.model, &pt, &[1.0]).unwrap();
                assert!((g[2 * n] + j).abs() < 1e-7, "{key}");
            }
        }
    }

    #[test]
    fn torus_theta_derivative_is_minus_xi1() {
        let phi = EquivariantPhase::new(model("torus2-rot1"));
        let pt = CotangentPoint { chart: 0, x: vec![1.0, 2.0], xi: vec![0.7, -0.2] };
        for t in [0.0, 0.4, -2.0] {
            let g = phi.gradient(&pt, &GroupElement::circle(t)).unwrap();
            assert_eq!(g[4], -0.7);
            // finite-difference cross-check
            let fd = (phi.value(0, &pt.x, &pt.xi, &GroupElement::circle(t + 1e-6)).unwrap()
                - phi.value(0, &pt.x, &pt.xi, &GroupElement::circle(t - 1e-6)).unwrap())
                / 2e-6;
            assert!((fd + 0.7).abs() < 1e-8);
            assert!((g[2] + crate::numerics::wrap_angle(t)).abs() < 1e-15);
        }
    }

    #[test]
    fn critical_set_examples() {
        let phi = EquivariantPhase::new(model("torus2-rot1"));
        let e = GroupElement::circle(0.0);
        assert!(phi.critical_set_check(&CotangentPoint { chart: 0, x: vec![0.1, 0.2], xi: vec![0.0, 0.0] }, &e));
        assert!(!phi.critical_set_check(&CotangentPoint { chart: 0, x: vec![0.1, 0.2], xi: vec![0.5, 0.0] }, &e));
        let s2 = EquivariantPhase::new(model("s2-rot"));
        let g = GroupElement::circle(PI / 3.0);
        // north pole in chart 0 is y = 0
        let pole = |xi: Vec<f64>| CotangentPoint { chart: 0, x: vec![0.0, 0.0], xi };
        assert!(!s2.critical_set_check(&pole(vec![0.3, -0.1]), &g));
        assert!(s2.critical_set_check(&pole(vec![0.0, 0.0]), &g));
    }

    #[test]
    fn orbit_speed_and_length() {
        let m = model("torus2-rot1");
        let pt = CotangentPoint { chart: 0, x: vec![0.3, 2.0], xi: vec![0.0, 1.0] };
        assert!((m.orbit_length(&pt).unwrap() - TAU).abs() < 1e-12);
        // lifted speed is constant along the orbit on S^2
        let s2 = model("s2-rot");
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pt = s2.sample_omega_point(&mut rng, 1.0).unwrap();
        let v0 = s2.orbit_speed(&pt).unwrap();
        for t in [0.5, 2.0, 4.0] {
            let q = s2.act_cotangent(&GroupElement::circle(t), &pt).unwrap();
            assert!((s2.orbit_speed(&q).unwrap() - v0).abs() < 1e-6 * v0);
        }
    }

    #[test]
    fn isometric_orbit_length_matches_quadrature() {
        for key in ["torus2-rot1", "torus3-rot1", "s2-rot", "s3-hopf", "lens-p3-right", "lens-p4-right"] {
            let m = model(key);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for _ in 0..20 {
                let pt = m.sample_omega_point(&mut rng, 1.0).unwrap();
                let (Ok(a), Ok(b)) = (m.orbit_length(&pt), m.orbit_length_isometric(&pt)) else { continue };
                assert!((a - b).abs() < 1e-6 * a, "{key}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn sasaki_metric_is_flat_on_torus() {
        let m = model("torus2-rot1");
        assert_eq!(m.sasaki_metric(0, &[0.1, 0.2], &[1.0, 2.0]), DMatrix::identity(4, 4));
    }

    #[test]
    fn christoffel_matches_conformal_formula() {
        // g = f I with f = 4/(1+|y|^2)^2: Γ^j_ik = (δ_jk ∂_i + δ_ji ∂_k - δ_ik ∂_j) log sqrt f
        let m = model("s2-rot");
        let y = [0.3, -0.4];
        let gam = m.christoffel(0, &y);
        let r2 = y[0] * y[0] + y[1] * y[1];
        let dl = |i: usize| -2.0 * y[i] / (1.0 + r2);
        for j in 0..2 {
            for i in 0..2 {
                for k in 0..2 {
                    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                    let expect = d(j, k) * dl(i) + d(j, i) * dl(k) - d(i, k) * dl(j);
                    assert!((gam[j][(i, k)] - expect).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn torus_reduced_volume_is_four_pi() {
        let est = reduced_volume(&model("torus2-rot1"), 4000, 0).unwrap();
        assert!((est.value - 4.0 * PI).abs() < 1e-9, "{}", est.value);
        assert_eq!(est.skipped_singular, 0);
        let grid = reduced_volume_grid(&model("torus2-rot1"), 8).unwrap();
        assert!((grid.value - 4.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn sphere_reduced_volume_is_two_pi() {
        let est = reduced_volume(&model("s2-rot"), 20_000, 4).unwrap();
        assert!((est.value / TAU - 1.0).abs() < 1e-5, "{} +- {}", est.value, est.standard_error);
        assert!(est.converged);
    }

    #[test]
    fn hopf_and_lens_reduced_volumes() {
        let cases = [("s3-hopf", 2.0 * PI * PI), ("lens-p3-right", 2.0 * PI * PI / 3.0), ("lens-p4-right", PI * PI)];
        for (key, expect) in cases {
            let est = reduced_volume(&model(key), 4000, 5).unwrap();
            assert!((est.value / expect - 1.0).abs() < 1e-4, "{key}: {} +- {}", est.value, est.standard_error);
        }
    }

    #[test]
    fn closed_form_matches_sampled_volume() {
        for key in ["torus2-rot1", "torus3-rot1", "torus3-rot2", "s2-rot", "s3-hopf", "lens-p3-right", "lens-p4-right"] {
            let m = model(key);
            let exact = closed_form_reduced_volume(&m).unwrap();
            let est = reduced_volume(&m, 4000, 2).unwrap();
            assert!((est.value / exact.value - 1.0).abs() < 1e-4, "{key}: {} vs {}", est.value, exact.value);
        }
        let mut m = model("s3-hopf");
        m.metric_scale = 2.0;
        assert!((closed_form_reduced_volume(&m).unwrap().value - 4.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn chart_cover_invariance() {
        for key in ["s2-rot", "torus2-rot1"] {
            let m = model(key);
            let a = reduced_volume_with_cover(&m, 8000, 6, ChartCover::Farthest).unwrap();
            let b = reduced_volume_with_cover(&m, 8000, 6, ChartCover::Alternate).unwrap();
            let se = (a.standard_error.powi(2) + b.standard_error.powi(2)).sqrt();
            // finite-difference noise floor of the density is ~1e-6 relative
            assert!((a.value - b.value).abs() <= 2.0 * se + 1e-6 * a.value, "{key}: {} vs {}", a.value, b.value);
        }
    }

    #[test]
    fn metric_scaling_homogeneity() {
        let m = model("torus2-rot1");
        let mut m2 = m.clone();
        m2.metric_scale = 2.0;
        let a = reduced_volume(&m, 2000, 1).unwrap().value;
        let b = reduced_volume(&m2, 2000, 1).unwrap().value;
        assert!((b / a - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn curved_metric_scaling_homogeneity() {
        for (key, factor) in [("s2-rot", 2f64.sqrt()), ("s3-hopf", 2.0)] {
            let m = model(key);
            let mut m2 = m.clone();
            m2.metric_scale = 2.0;
            let a = reduced_volume(&m, 1000, 1).unwrap().value;
            let b = reduced_volume(&m2, 1000, 1).unwrap().value;
            assert!((b / a - factor).abs() < 1e-5, "{key}: {}", b / a);
        }
    }

    #[test]
    fn standard_error_is_consistent() {
        let m = model("s3-hopf");
        let est = reduced_volume(&m, 4096, 9).unwrap();
        assert!(est.standard_error < 1e-5 * est.value);
        assert!((est.value - 2.0 * PI * PI).abs() < 3.0 * est.standard_error + 1e-6 * est.value);
        assert!(est.converged);
    }

    #[test]
    fn sample_floor_and_determinism() {
        let m = model("s2-rot");
        assert!(matches!(reduced_volume(&m, 999, 0), Err(Error::Config(_))));
        assert_eq!(reduced_volume(&m, 3000, 7).unwrap(), reduced_volume(&m, 3000, 7).unwrap());
    }

    #[test]
    fn json_record_fields() {
        let est = reduced_volume(&model("torus2-rot1"), 1000, 0).unwrap();
        let v = est.json_record("torus2-rot1");
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
        assert_eq!(keys, vec!["action", "samples", "skipped_singular", "stderr", "value"]);
    }

    #[test]
    fn cotangent_isotropy_matches_base_isotropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for (key, q) in [("s2-rot", 1), ("lens-p4-right", 2), ("lens-p3-right", 1)] {
            let m = model(key);
            for _ in 0..5 {
                let pt = m.sample_omega_point(&mut rng, 1.0).unwrap();
                assert_eq!(cotangent_isotropy_order(&m, &pt).unwrap(), q, "{key}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gradient_agrees_with_critical_check(
            key in prop::sample::select(vec!["torus2-rot1", "s2-rot", "s3-hopf", "lens-p3-right"]),
            seed in 0u64..1000,
            t in -3.0f64..3.0,
        ) {
            let phi = EquivariantPhase::new(model(key));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (c, y) = phi.model.spec.sample_chart_point(&mut rng);
            let xi: Vec<f64> = (0..y.len()).map(|_| rng.gen::<f64>() - 0.5).collect();
            let pt = CotangentPoint { chart: c, x: y, xi };
            let g = GroupElement::circle(t);
            if let Ok(grad) = phi.gradient(&pt, &g) {
                prop_assert_eq!(norm(&grad) < 1e-7, phi.critical_set_check(&pt, &g));
            }
        }
    }
}
