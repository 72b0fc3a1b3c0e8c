//! Predicted equivariant Weyl coefficients, empirical fits of N_χ(λ) and
//! remainder diagnostics.

use crate::actions::{orbit_type_info, restriction_multiplicity, CharacterLabel, GroupActionSpec, ManifoldId};
use crate::error::{Error, Result};
use crate::numerics::linear_fit;
use crate::spectral::{count_reduced, count_total, SpectrumTable};
use crate::symplectic::{MomentumMapModel, ReducedVolumeEstimate};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Number of dyadic λ points in `verify`.
pub const DYADIC_POINTS: usize = 20;
pub const ENVELOPE_SLACK: f64 = 0.1;
/// Below this λ the full-law check is marked insufficient.
pub const MIN_FULL_LAW_LAMBDA: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylPrediction {
    pub action: String,
    pub chi: CharacterLabel,
    pub d_chi: u64,
    pub restriction_mult: u64,
    pub kappa: usize,
    pub n: usize,
    pub m_order: u32,
    pub reduced_volume: ReducedVolumeEstimate,
    pub leading_coefficient: f64,
    pub coefficient_stderr: f64,
    pub growth_exponent: f64,
    /// Λ, the longest chain of isotropy types.
    pub log_power_bound: usize,
    /// Λ - 1, reported when n - κ ≥ 2.
    pub improved_log_power_bound: Option<usize>,
}

impl WeylPrediction {
    pub fn reduced_dim(&self) -> usize {
        self.n - self.kappa
    }

    pub fn predicted_count(&self, lambda: f64) -> f64 {
        self.leading_coefficient * lambda.powf(self.growth_exponent)
    }
}

pub fn default_tolerance(spec: &GroupActionSpec) -> f64 {
    match spec.manifold {
        ManifoldId::Torus(_) => 0.02,
        _ => 0.05,
    }
}

/// d_χ [π_χ|H : 1] vol / ((n-κ)(2π)^{n-κ}) with exponent (n-κ)/2.
pub fn predict(spec: &GroupActionSpec, chi: &CharacterLabel, volume: &ReducedVolumeEstimate) -> Result<WeylPrediction> {
    if chi.group != spec.group {
        return Err(Error::Config(format!("character of {:?} for a {:?} action", chi.group, spec.group)));
    }
    let info = orbit_type_info(spec)?;
    let n = spec.dim_m;
    if n <= info.kappa {
        return Err(Error::Unsupported(format!("{}: n - κ = {} must be at least 1", spec.key, n as i64 - info.kappa as i64)));
    }
    let f = (n - info.kappa) as f64;
    let r = restriction_multiplicity(chi, info.principal_isotropy);
    let scale = chi.d_chi() as f64 * r as f64 / (f * TAU.powf(f));
    Ok(WeylPrediction {
        action: spec.key.clone(),
        chi: *chi,
        d_chi: chi.d_chi(),
        restriction_mult: r,
        kappa: info.kappa,
        n,
        m_order: 2,
        reduced_volume: volume.clone(),
        leading_coefficient: scale * volume.value,
        coefficient_stderr: scale * volume.standard_error,
        growth_exponent: f / 2.0,
        log_power_bound: info.lambda,
        improved_log_power_bound: (n - info.kappa >= 2).then(|| info.lambda.saturating_sub(1)),
    })
}

/// λ_max 2^{-k}, k = points-1 .. 0.
pub fn dyadic_grid(lambda_max: f64, points: usize) -> Vec<f64> {
    (0..points).map(|i| lambda_max * 0.5f64.powi((points - 1 - i) as i32)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderDiagnostics {
    pub lambda: Vec<f64>,
    pub n_chi: Vec<u64>,
    /// N_χ(λ) - C λ^{(n-κ)/2}.
    pub residual: Vec<f64>,
    /// C from the fit N ≈ C λ^e + D λ^{e-1/2} on the upper half of the grid.
    pub empirical_coefficient: f64,
    pub empirical_stderr: f64,
    /// N_χ(λ_max) / λ_max^e.
    pub ratio_at_max: f64,
    /// Slope of log N_χ against log λ on the upper half of the grid.
    pub exponent_fit: f64,
    /// Slope of the running maximum of |residual| on the upper half.
    pub envelope_exponent: f64,
    pub envelope_bound: f64,
    /// Slope of log(envelope / λ^{bound}) against log log λ; reported only.
    pub log_power_fit: f64,
    pub coefficient_pass: bool,
    pub envelope_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylVerification {
    pub prediction: WeylPrediction,
    pub diagnostics: RemainderDiagnostics,
    pub tolerance: f64,
    pub pass: bool,
}

impl WeylVerification {
    /// {predicted, empirical, stderr, exponent_fit, pass} plus identifying keys.
    pub fn verdict_json(&self) -> serde_json::Value {
        serde_json::json!({
            "action": self.prediction.action,
            "chi": self.prediction.chi.to_string(),
            "predicted": self.prediction.leading_coefficient,
            "empirical": self.diagnostics.empirical_coefficient,
            "stderr": self.prediction.coefficient_stderr.hypot(self.diagnostics.empirical_stderr),
            "exponent_fit": self.diagnostics.exponent_fit,
            "envelope_exponent": self.diagnostics.envelope_exponent,
            "log_power_fit": self.diagnostics.log_power_fit,
            "log_power_bound": self.prediction.log_power_bound,
            "improved_log_power_bound": self.prediction.improved_log_power_bound,
            "tolerance": self.tolerance,
            "pass": self.pass,
        })
    }
}

/// Compares N_χ on a dyadic grid up to `lambda_max` against the prediction.
/// Passes when the fitted coefficient is within `tolerance` (relative, or
/// absolute when the prediction is 0) and the residual envelope grows no
/// faster than λ^{(n-κ-1)/2 + 0.1}.
pub fn verify(table: &SpectrumTable, prediction: &WeylPrediction, lambda_max: f64, tolerance: f64) -> Result<WeylVerification> {
    if table.lambda_max < lambda_max {
        return Err(Error::IncompleteSpectrum { requested: lambda_max, available: table.lambda_max });
    }
    let grid = dyadic_grid(lambda_max, DYADIC_POINTS);
    let counts = count_reduced(table, &prediction.chi, &grid)?;
    let e = prediction.growth_exponent;
    let c = prediction.leading_coefficient;
    let residual: Vec<f64> = grid.iter().zip(&counts.n_chi).map(|(l, &nc)| nc as f64 - c * l.powf(e)).collect();
    let upper = DYADIC_POINTS / 2;

    // two-term least squares on the upper half
    let (ls, ns) = (&grid[upper..], &counts.n_chi[upper..]);
    let a = DMatrix::from_fn(ls.len(), 2, |i, j| ls[i].powf(e - 0.5 * j as f64) / ls[ls.len() - 1].powf(e - 0.5 * j as f64));
    let b = DVector::from_iterator(ns.len(), ns.iter().map(|&v| v as f64));
    let cov = (a.transpose() * &a).try_inverse().ok_or(Error::IllConditioned(f64::INFINITY))?;
    let sol = &cov * a.transpose() * &b;
    let top = ls[ls.len() - 1];
    let empirical = sol[0] / top.powf(e);
    let res = &b - &a * &sol;
    let dof = (ls.len() - 2).max(1) as f64;
    let s2 = res.norm_squared() / dof;
    let empirical_stderr = (s2 * cov[(0, 0)]).sqrt() / top.powf(e);

    let positive: Vec<(f64, f64)> =
        ls.iter().zip(ns).filter(|(_, &v)| v > 0).map(|(l, &v)| (l.ln(), (v as f64).ln())).collect();
    let exponent_fit = if positive.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
        linear_fit(&x, &y).0
    } else {
        0.0
    };

    let mut env = Vec::with_capacity(grid.len());
    let mut running = 1.0f64;
    for r in &residual {
        running = running.max(r.abs());
        env.push(running);
    }
    let lx: Vec<f64> = grid[upper..].iter().map(|l| l.ln()).collect();
    let ly: Vec<f64> = env[upper..].iter().map(|v| v.ln()).collect();
    let envelope_exponent = linear_fit(&lx, &ly).0;
    let bound = (prediction.reduced_dim() as f64 - 1.0) / 2.0;
    let llx: Vec<f64> = lx.iter().map(|v| v.ln()).collect();
    let lly: Vec<f64> = lx.iter().zip(&ly).map(|(x, y)| y - bound * x).collect();
    let log_power_fit = linear_fit(&llx, &lly).0;

    let coefficient_pass = if c > 0.0 { (empirical / c - 1.0).abs() <= tolerance } else { empirical.abs() <= tolerance };
    let envelope_pass = envelope_exponent <= bound + ENVELOPE_SLACK;
    let ratio_at_max = *counts.n_chi.last().unwrap() as f64 / lambda_max.powf(e);
    let diagnostics = RemainderDiagnostics {
        lambda: grid,
        n_chi: counts.n_chi,
        residual,
        empirical_coefficient: empirical,
        empirical_stderr,
        ratio_at_max,
        exponent_fit,
        envelope_exponent,
        envelope_bound: bound,
        log_power_fit,
        coefficient_pass,
        envelope_pass,
    };
    Ok(WeylVerification { prediction: prediction.clone(), diagnostics, tolerance, pass: coefficient_pass && envelope_pass })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullLawReport {
    pub action: String,
    pub lambda: f64,
    pub count: u64,
    /// vol(S*M) / (n (2π)^n).
    pub coefficient: f64,
    pub ratio: f64,
    pub tolerance: f64,
    pub insufficient_range: bool,
    pub pass: bool,
}

/// N(λ) against ω_n vol(M) λ^{n/2} / (2π)^n.
pub fn full_law_check(table: &SpectrumTable, spec: &GroupActionSpec, lambda: f64) -> Result<FullLawReport> {
    let n = spec.dim_m;
    let vol_m = MomentumMapModel::new(spec.clone()).volume();
    let ball = PI.powf(n as f64 / 2.0) / statrs::function::gamma::gamma(n as f64 / 2.0 + 1.0);
    let coefficient = ball * vol_m / TAU.powi(n as i32);
    let count = count_total(table, &[lambda])?[0];
    let ratio = count as f64 / (coefficient * lambda.powf(n as f64 / 2.0));
    let tolerance = match spec.manifold {
        ManifoldId::Torus(_) => 0.01,
        _ => 0.02,
    };
    let insufficient_range = lambda < MIN_FULL_LAW_LAMBDA;
    Ok(FullLawReport {
        action: spec.key.clone(),
        lambda,
        count,
        coefficient,
        ratio,
        tolerance,
        insufficient_range,
        pass: !insufficient_range && (ratio - 1.0).abs() <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::Isotropy;
    use crate::spectral::build_spectrum;
    use crate::symplectic::closed_form_reduced_volume;
    use proptest::prelude::*;

    fn setup(key: &str) -> (GroupActionSpec, ReducedVolumeEstimate) {
        let spec = GroupActionSpec::from_key(key).unwrap();
        let vol = closed_form_reduced_volume(&MomentumMapModel::new(spec.clone())).unwrap();
        (spec, vol)
    }

    /// Lattice oracle: #{k2 : m^2 + k2^2 ≤ λ}.
    fn torus_count(m: i64, lambda: f64) -> u64 {
        let rest = lambda - (m * m) as f64;
        if rest < 0.0 {
            0
        } else {
            2 * rest.sqrt().floor() as u64 + 1
        }
    }

    #[test]
    fn torus_prediction_is_two() {
        let (spec, vol) = setup("torus2-rot1");
        for m in [0, 1, 5, -3] {
            let p = predict(&spec, &CharacterLabel::circle(m), &vol).unwrap();
            assert!((p.leading_coefficient - 2.0).abs() < 1e-12);
            assert_eq!(p.growth_exponent, 0.5);
            assert_eq!(p.log_power_bound, 1);
            assert_eq!(p.improved_log_power_bound, None);
        }
    }

    #[test]
    fn sphere_and_hopf_predictions() {
        let (spec, vol) = setup("s2-rot");
        let p = predict(&spec, &CharacterLabel::circle(2), &vol).unwrap();
        assert!((p.leading_coefficient - 1.0).abs() < 1e-12);
        let (spec, vol) = setup("s3-hopf");
        let p = predict(&spec, &CharacterLabel::circle(1), &vol).unwrap();
        assert!((p.leading_coefficient - 0.25).abs() < 1e-12);
        assert_eq!(p.growth_exponent, 1.0);
        assert_eq!(p.improved_log_power_bound, Some(0));
        let (spec, vol) = setup("lens-p3-right");
        let q = predict(&spec, &CharacterLabel::circle(1), &vol).unwrap();
        assert!((q.leading_coefficient - 0.25 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_restriction_gives_zero_coefficient() {
        let (spec, vol) = setup("lens-p4-right");
        assert_eq!(orbit_type_info(&spec).unwrap().principal_isotropy, Isotropy::Cyclic(2));
        let p = predict(&spec, &CharacterLabel::circle(1), &vol).unwrap();
        assert_eq!(p.restriction_mult, 0);
        assert_eq!(p.leading_coefficient, 0.0);
        let table = build_spectrum(&spec, 1e5).unwrap();
        let v = verify(&table, &p, 1e5, 0.05).unwrap();
        assert!(v.diagnostics.n_chi.iter().all(|&c| c == 0));
        assert!(v.pass);
    }

    #[test]
    fn mismatched_group_is_rejected() {
        let (spec, vol) = setup("torus2-rot1");
        assert!(predict(&spec, &CharacterLabel::torus2(0, 0), &vol).is_err());
    }

    #[test]
    fn torus_verification_against_lattice_oracle() {
        let (spec, vol) = setup("torus2-rot1");
        let table = build_spectrum(&spec, 1e6).unwrap();
        for m in [0, 1, 5, 10] {
            let p = predict(&spec, &CharacterLabel::circle(m), &vol).unwrap();
            let v = verify(&table, &p, 1e6, 0.02).unwrap();
            for (l, c) in v.diagnostics.lambda.iter().zip(&v.diagnostics.n_chi) {
                assert_eq!(*c, torus_count(m, *l));
            }
            assert!(v.pass, "m = {m}: {:?}", v.verdict_json());
            assert!((v.diagnostics.ratio_at_max / 2.0 - 1.0).abs() < 0.02);
        }
        let ratios: Vec<f64> = [0, 1, 5, 10].iter().map(|&m| torus_count(m, 1e6) as f64 / 2e3).collect();
        for a in &ratios {
            for b in &ratios {
                assert!((a / b - 1.0).abs() < 0.03);
            }
        }
    }

    #[test]
    fn sphere_verification() {
        let (spec, vol) = setup("s2-rot");
        let table = build_spectrum(&spec, 1e6).unwrap();
        let p = predict(&spec, &CharacterLabel::circle(3), &vol).unwrap();
        let v = verify(&table, &p, 1e6, 0.05).unwrap();
        assert!(v.pass, "{:?}", v.verdict_json());
        assert!((v.diagnostics.empirical_coefficient - 1.0).abs() < 0.01);
    }

    #[test]
    fn hopf_and_lens_exponents() {
        for key in ["s3-hopf", "lens-p3-right"] {
            let (spec, vol) = setup(key);
            let table = build_spectrum(&spec, 1e6).unwrap();
            let p = predict(&spec, &CharacterLabel::circle(1), &vol).unwrap();
            let v = verify(&table, &p, 1e6, 0.05).unwrap();
            assert!((v.diagnostics.exponent_fit - 1.0).abs() < 0.02, "{key}: {}", v.diagnostics.exponent_fit);
            assert!(v.pass, "{key}: {:?}", v.verdict_json());
        }
    }

    #[test]
    fn wrong_prediction_fails() {
        let (spec, vol) = setup("torus2-rot1");
        let table = build_spectrum(&spec, 1e5).unwrap();
        let mut p = predict(&spec, &CharacterLabel::circle(0), &vol).unwrap();
        p.leading_coefficient *= 1.1;
        assert!(!verify(&table, &p, 1e5, 0.02).unwrap().pass);
    }

    #[test]
    fn incomplete_spectrum_is_an_error() {
        let (spec, vol) = setup("torus2-rot1");
        let table = build_spectrum(&spec, 1e3).unwrap();
        let p = predict(&spec, &CharacterLabel::circle(0), &vol).unwrap();
        assert!(matches!(verify(&table, &p, 1e4, 0.02), Err(Error::IncompleteSpectrum { .. })));
    }

    #[test]
    fn full_law_constants() {
        for (key, coef) in [("torus2-rot1", PI), ("s2-rot", 1.0), ("s3-hopf", 1.0 / 3.0)] {
            let spec = GroupActionSpec::from_key(key).unwrap();
            let table = build_spectrum(&spec, 1e6).unwrap();
            let r = full_law_check(&table, &spec, 1e6).unwrap();
            assert!((r.coefficient - coef).abs() < 1e-12, "{key}");
            assert!(r.pass, "{key}: ratio {}", r.ratio);
            let tiny = full_law_check(&table, &spec, 10.0).unwrap();
            assert!(tiny.insufficient_range && !tiny.pass);
        }
    }

    #[test]
    fn sum_of_predictions_below_total_count() {
        let (spec, vol) = setup("s3-hopf");
        let lambda = 1e5;
        let table = build_spectrum(&spec, lambda).unwrap();
        let total = count_total(&table, &[lambda]).unwrap()[0] as f64;
        let sum: f64 = (-20..=20).map(|m| predict(&spec, &CharacterLabel::circle(m), &vol).unwrap().predicted_count(lambda)).sum();
        assert!(sum <= total);
    }

    #[test]
    fn verdict_keys_are_sorted() {
        let (spec, vol) = setup("torus2-rot1");
        let table = build_spectrum(&spec, 1e4).unwrap();
        let p = predict(&spec, &CharacterLabel::circle(0), &vol).unwrap();
        let v = verify(&table, &p, 1e4, 0.02).unwrap().verdict_json();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        for k in ["predicted", "empirical", "stderr", "exponent_fit", "pass"] {
            assert!(v.get(k).is_some(), "{k}");
        }
    }

    proptest! {
        #[test]
        fn torus_prediction_independent_of_weight(m in -50i64..50) {
            let (spec, vol) = setup("torus2-rot1");
            let p = predict(&spec, &CharacterLabel::circle(m), &vol).unwrap();
            prop_assert!((p.leading_coefficient - 2.0).abs() < 1e-12);
        }

        #[test]
        fn prediction_scales_with_volume(v in 0.1f64..100.0) {
            let (spec, mut vol) = setup("s2-rot");
            vol.value = v;
            let p = predict(&spec, &CharacterLabel::circle(0), &vol).unwrap();
            prop_assert!((p.leading_coefficient - v / TAU).abs() < 1e-12 * v);
        }
    }
}
