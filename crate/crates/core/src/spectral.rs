//! Exact Laplace spectra of the catalog manifolds, split by character.
//!
//! All catalog eigenvalues are integers (|k|^2, l(l+1), k(k+2)), so the
//! table keys on exact integers and exposes `f64` views.

use crate::actions::{CharacterLabel, GroupActionSpec, GroupId, ManifoldId, Weight};
use crate::error::{Error, Result};
use crate::numerics::pairwise_sum;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

/// Default cap on the number of (eigenvalue, weight) contributions a build may
/// enumerate.
pub const DEFAULT_ENTRY_CAP: f64 = 2.0e7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub t: u64,
    pub total_mult: u64,
    /// Weights with nonzero multiplicity, sorted.
    pub mults: Vec<(Weight, u64)>,
}

impl SpectrumEntry {
    pub fn eigenvalue(&self) -> f64 {
        self.t as f64
    }

    pub fn mult(&self, w: Weight) -> u64 {
        self.mults
            .binary_search_by(|(k, _)| k.cmp(&w))
            .map(|i| self.mults[i].1)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTable {
    pub action: String,
    pub group: GroupId,
    pub entries: Vec<SpectrumEntry>,
    pub lambda_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingResult {
    pub chi: CharacterLabel,
    pub lambda: Vec<f64>,
    pub n_chi: Vec<u64>,
}

/// Weighting of eigenvalues in smoothed sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MultWeighting {
    /// One term per distinct eigenvalue weighted by d_chi * mult_chi(t).
    PerEigenvalue,
    /// One term per eigenvector weighted by d_chi * mult_chi(t) / dim E_t.
    PerEigenvector,
}

/// Gaussian mollifier with unit integral, so 2 pi rho(0) = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothedCountConfig {
    pub sigma: f64,
    /// Truncation radius in units of sigma.
    pub support_sds: f64,
    pub weighting: MultWeighting,
}

impl Default for SmoothedCountConfig {
    fn default() -> Self {
        SmoothedCountConfig { sigma: 2.0, support_sds: 12.0, weighting: MultWeighting::PerEigenvalue }
    }
}

impl SmoothedCountConfig {
    pub fn rho_hat(&self, s: f64) -> f64 {
        if s.abs() > self.support_radius() {
            return 0.0;
        }
        (-0.5 * (s / self.sigma).powi(2)).exp() / (self.sigma * (2.0 * PI).sqrt())
    }

    pub fn support_radius(&self) -> f64 {
        self.support_sds * self.sigma
    }

    /// rho(0) = (1/2 pi) * integral of rho_hat.
    pub fn rho0(&self) -> f64 {
        1.0 / (2.0 * PI)
    }

    /// Mass of rho_hat discarded by the truncation.
    pub fn truncation_error(&self) -> f64 {
        statrs::function::erf::erfc(self.support_sds / std::f64::consts::SQRT_2)
    }
}

/// Predicted number of (eigenvalue, weight) contributions below `lambda_max`.
pub fn predicted_entries(spec: &GroupActionSpec, lambda_max: f64) -> f64 {
    let r = lambda_max.max(0.0).sqrt();
    match spec.manifold {
        ManifoldId::Torus(n) => {
            // volume of the n-ball of radius r + 1
            let n = n as f64;
            PI.powf(n / 2.0) / statrs::function::gamma::gamma(n / 2.0 + 1.0) * (r + 1.0).powf(n)
        }
        ManifoldId::Sphere2 => (r + 2.0).powi(2),
        ManifoldId::Sphere3 | ManifoldId::LensSpace(_) => (r + 2.0).powi(2) / 2.0,
    }
}

pub fn build_spectrum(spec: &GroupActionSpec, lambda_max: f64) -> Result<SpectrumTable> {
    build_spectrum_capped(spec, lambda_max, DEFAULT_ENTRY_CAP)
}

pub fn build_spectrum_capped(spec: &GroupActionSpec, lambda_max: f64, cap: f64) -> Result<SpectrumTable> {
    if !(lambda_max >= 1.0) || !lambda_max.is_finite() {
        return Err(Error::Config(format!("lambda_max must be >= 1, got {lambda_max}")));
    }
    let predicted = predicted_entries(spec, lambda_max);
    if predicted > cap {
        return Err(Error::Resource(format!(
            "spectrum up to lambda = {lambda_max:e} needs about {predicted:.3e} entries, cap is {cap:.3e}"
        )));
    }
    let tmax = lambda_max.floor() as u64;
    let mut contrib: Vec<(u64, Weight, u64)> = match spec.manifold {
        ManifoldId::Torus(n) => torus_contributions(n, spec.group, tmax),
        ManifoldId::Sphere2 => shells(tmax, |l| l * (l + 1))
            .into_par_iter()
            .flat_map_iter(|l| {
                let t = l * (l + 1);
                (-(l as i64)..=l as i64).map(move |m| (t, Weight(m, 0), 1))
            })
            .collect(),
        ManifoldId::Sphere3 => shells(tmax, |k| k * (k + 2))
            .into_par_iter()
            .flat_map_iter(|k| {
                let t = k * (k + 2);
                parity_weights(k).map(move |m| (t, Weight(m, 0), k + 1))
            })
            .collect(),
        ManifoldId::LensSpace(p) => shells(tmax, |k| k * (k + 2))
            .into_par_iter()
            .flat_map_iter(|k| {
                let t = k * (k + 2);
                let c = invariant_count(k, p);
                parity_weights(k)
                    .filter(move |_| c > 0)
                    .map(move |m| (t, Weight(m, 0), c))
            })
            .collect(),
    };
    contrib.par_sort_unstable();
    let mut entries: Vec<SpectrumEntry> = Vec::new();
    let mut i = 0;
    while i < contrib.len() {
        let t = contrib[i].0;
        let mut mults: Vec<(Weight, u64)> = Vec::new();
        while i < contrib.len() && contrib[i].0 == t {
            let (_, w, m) = contrib[i];
            match mults.last_mut() {
                Some((lw, lm)) if *lw == w => *lm += m,
                _ => mults.push((w, m)),
            }
            i += 1;
        }
        let total_mult = mults.iter().map(|(_, m)| m).sum();
        entries.push(SpectrumEntry { t, total_mult, mults });
    }
    Ok(SpectrumTable { action: spec.key.clone(), group: spec.group, entries, lambda_max })
}

fn shells(tmax: u64, t_of: impl Fn(u64) -> u64) -> Vec<u64> {
    (0..).take_while(|k| t_of(*k) <= tmax).collect()
}

fn parity_weights(k: u64) -> impl Iterator<Item = i64> {
    let k = k as i64;
    (0..=k).map(move |j| -k + 2 * j)
}

/// Number of left weights j in {-k, -k+2, ..., k} with j = 0 mod p.
pub fn invariant_count(k: u64, p: u32) -> u64 {
    parity_weights(k).filter(|j| j.rem_euclid(p as i64) == 0).count() as u64
}

fn torus_contributions(n: usize, group: GroupId, tmax: u64) -> Vec<(u64, Weight, u64)> {
    let r = isqrt(tmax) as i64;
    // enumerate the first coordinate in parallel, the rest recursively
    (-r..=r)
        .into_par_iter()
        .flat_map_iter(|k1| {
            let mut out = Vec::new();
            let t1 = (k1 * k1) as u64;
            let mut tail = vec![0i64; n - 1];
            lattice_tail(&mut tail, 0, t1, tmax, r, &mut |t, rest| {
                let w = match group {
                    GroupId::Circle => Weight(k1, 0),
                    GroupId::Torus2 => Weight(k1, rest[0]),
                };
                out.push((t, w, 1));
            });
            out.into_iter()
        })
        .collect()
}

fn isqrt(v: u64) -> u64 {
    let mut r = (v as f64).sqrt() as u64;
    while r * r > v {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= v {
        r += 1;
    }
    r
}

fn lattice_tail(k: &mut [i64], i: usize, t: u64, tmax: u64, r: i64, f: &mut impl FnMut(u64, &[i64])) {
    if i == k.len() {
        f(t, k);
        return;
    }
    let room = (isqrt(tmax - t) as i64).min(r);
    for v in -room..=room {
        let tv = t + (v * v) as u64;
        if tv <= tmax {
            k[i] = v;
            lattice_tail(k, i + 1, tv, tmax, r, f);
        }
    }
}

impl SpectrumTable {
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.eigenvalue()).collect()
    }

    /// Weights with nonzero multiplicity somewhere in the table, sorted.
    pub fn weights(&self) -> Vec<Weight> {
        let mut w: Vec<Weight> = self.entries.iter().flat_map(|e| e.mults.iter().map(|(w, _)| *w)).collect();
        w.sort_unstable();
        w.dedup();
        w
    }

    fn check_chi(&self, chi: &CharacterLabel) -> Result<()> {
        if chi.group != self.group {
            return Err(Error::Config(format!(
                "character of {:?} used with a {:?} spectrum",
                chi.group, self.group
            )));
        }
        Ok(())
    }

    fn check_range(&self, lambda: f64) -> Result<()> {
        if lambda > self.lambda_max {
            return Err(Error::IncompleteSpectrum { requested: lambda, available: self.lambda_max });
        }
        Ok(())
    }

    /// Cumulative (eigenvalue, N_chi) steps.
    fn steps(&self, chi: &CharacterLabel) -> (Vec<f64>, Vec<u64>) {
        let mut ts = Vec::new();
        let mut cum = Vec::new();
        let mut acc = 0u64;
        for e in &self.entries {
            let m = e.mult(chi.weight);
            if m > 0 {
                acc += chi.d_chi() * m;
                ts.push(e.eigenvalue());
                cum.push(acc);
            }
        }
        (ts, cum)
    }
}

fn step_value(ts: &[f64], cum: &[u64], lambda: f64) -> u64 {
    let idx = ts.partition_point(|t| *t <= lambda);
    if idx == 0 {
        0
    } else {
        cum[idx - 1]
    }
}

pub fn count_reduced(table: &SpectrumTable, chi: &CharacterLabel, grid: &[f64]) -> Result<CountingResult> {
    table.check_chi(chi)?;
    if let Some(m) = grid.iter().cloned().fold(None, |a: Option<f64>, b| Some(a.map_or(b, |a| a.max(b)))) {
        table.check_range(m)?;
    }
    let (ts, cum) = table.steps(chi);
    Ok(CountingResult {
        chi: *chi,
        lambda: grid.to_vec(),
        n_chi: grid.iter().map(|l| step_value(&ts, &cum, *l)).collect(),
    })
}

/// Full counting function N(lambda) with multiplicity.
pub fn count_total(table: &SpectrumTable, grid: &[f64]) -> Result<Vec<u64>> {
    if let Some(m) = grid.iter().cloned().reduce(f64::max) {
        table.check_range(m)?;
    }
    let mut ts = Vec::with_capacity(table.entries.len());
    let mut cum = Vec::with_capacity(table.entries.len());
    let mut acc = 0;
    for e in &table.entries {
        acc += e.total_mult;
        ts.push(e.eigenvalue());
        cum.push(acc);
    }
    Ok(grid.iter().map(|l| step_value(&ts, &cum, *l)).collect())
}

/// Sum over eigenvalues of m_chi(mu_j) rho_hat(mu - mu_j) with mu_j = sqrt(t_j).
pub fn smoothed_count(table: &SpectrumTable, chi: &CharacterLabel, config: &SmoothedCountConfig, mu: f64) -> Result<f64> {
    table.check_chi(chi)?;
    let reach = mu + config.support_radius();
    table.check_range(reach * reach)?;
    let lo = (mu - config.support_radius()).max(0.0);
    let start = table.entries.partition_point(|e| e.eigenvalue().sqrt() < lo);
    let mut terms = Vec::new();
    for e in &table.entries[start..] {
        let mu_j = e.eigenvalue().sqrt();
        if mu_j > reach {
            break;
        }
        let m = e.mult(chi.weight);
        if m == 0 {
            continue;
        }
        let r = config.rho_hat(mu - mu_j);
        let d = chi.d_chi() as f64;
        match config.weighting {
            MultWeighting::PerEigenvalue => terms.push(d * m as f64 * r),
            MultWeighting::PerEigenvector => {
                let per_vector = d * m as f64 / e.total_mult as f64;
                terms.push(per_vector * r * e.total_mult as f64);
            }
        }
    }
    Ok(pairwise_sum(&terms))
}

/// Integral of N_chi(s^2) rho_hat(mu - s) ds, exact for the step function.
pub fn mollified_count(table: &SpectrumTable, chi: &CharacterLabel, config: &SmoothedCountConfig, mu: f64) -> Result<f64> {
    table.check_chi(chi)?;
    let reach = mu + config.support_radius();
    table.check_range(reach * reach)?;
    let (ts, cum) = table.steps(chi);
    let mut terms = Vec::new();
    let mut prev = 0u64;
    for (t, c) in ts.iter().zip(&cum) {
        let mu_j = t.sqrt();
        if mu_j > reach {
            break;
        }
        // each jump at mu_j contributes its height times P(s >= mu_j)
        let z = (mu - mu_j) / (config.sigma * std::f64::consts::SQRT_2);
        terms.push((c - prev) as f64 * 0.5 * statrs::function::erf::erfc(-z));
        prev = *c;
    }
    Ok(pairwise_sum(&terms))
}

/// |N_chi(mu^2) - mollified count| / mu^(n - kappa - 1).
pub fn tauberian_constant(
    table: &SpectrumTable,
    chi: &CharacterLabel,
    config: &SmoothedCountConfig,
    mu: f64,
    reduced_dim: usize,
) -> Result<f64> {
    let n = count_reduced(table, chi, &[mu * mu])?.n_chi[0] as f64;
    let smooth = mollified_count(table, chi, config, mu)?;
    Ok((n - smooth).abs() / mu.powi(reduced_dim as i32 - 1))
}

fn weight_text(group: GroupId, w: Weight) -> String {
    match group {
        GroupId::Circle => w.0.to_string(),
        GroupId::Torus2 => format!("({},{})", w.0, w.1),
    }
}

pub fn write_spectrum_csv(table: &SpectrumTable, out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out);
    w.write_record(["t", "total_mult", "weight", "mult_weight"])?;
    for e in &table.entries {
        for (wt, m) in &e.mults {
            w.write_record([
                e.t.to_string(),
                e.total_mult.to_string(),
                weight_text(table.group, *wt),
                m.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_counting_csv(result: &CountingResult, out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out);
    w.write_record(["lambda", "N_chi"])?;
    for (l, n) in result.lambda.iter().zip(&result.n_chi) {
        w.write_record([format!("{l:?}"), n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
