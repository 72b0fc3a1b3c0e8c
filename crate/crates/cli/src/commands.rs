use anyhow::{bail, Context};
use num_complex::Complex64;
use serde_json::{json, Value};
use std::f64::consts::PI;
use weylab::artifacts::{fmt_f64, ArtifactWriter};
use weylab::blowup::{direct_samples, singular_asymptotics, xy2_atlas, xy2_fit_terms, xy2_problem};
use weylab::config::{parse_terms, ExperimentConfig};
use weylab::oscquad::{fit_asymptotics, geometric_grid, integrate, MuConvention, QuadratureSpec};
use weylab::spectral::{build_spectrum, count_reduced, count_total, write_spectrum_csv};
use weylab::statphase::{builtin_problem, load_phase_problem, q0, BuiltinPhase, BUILTIN_PHASES};
use weylab::symplectic::closed_form_reduced_volume;
use weylab::weyl::{default_tolerance, dyadic_grid, full_law_check, predict, verify, DYADIC_POINTS, MIN_FULL_LAW_LAMBDA};
use weylab::{
    reduced_volume, CharacterLabel, Error, GroupActionSpec, GroupId, MomentumMapModel, PhaseProblem, SpectrumTable,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

pub fn run(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    match cfg.command.as_str() {
        "weyl-verify" => weyl_verify(cfg),
        "statphase" => statphase(cfg),
        "blowup-demo" => blowup_demo(cfg),
        "spectrum-dump" => spectrum_dump(cfg),
        "reduced-volume" => volume(cfg),
        other => bail!(Error::Config(format!("unknown command {other:?}"))),
    }
}

/// Config as recorded in the manifest; the output directory and thread
/// count do not affect results and are left out so runs compare byte for byte.
fn manifest_config(cfg: &ExperimentConfig) -> anyhow::Result<Value> {
    let mut v = serde_json::to_value(cfg)?;
    if let Some(map) = v.as_object_mut() {
        map.remove("out_dir");
        map.remove("threads");
    }
    Ok(v)
}

fn action_spec(cfg: &ExperimentConfig) -> anyhow::Result<GroupActionSpec> {
    let key = cfg.action.as_deref().ok_or_else(|| Error::Config("--action is required".into()))?;
    Ok(GroupActionSpec::from_key(key)?)
}

fn characters(spec: &GroupActionSpec, weights: &[i64]) -> anyhow::Result<Vec<CharacterLabel>> {
    match spec.group {
        GroupId::Circle => Ok(weights.iter().map(|&m| CharacterLabel::circle(m)).collect()),
        GroupId::Torus2 => {
            if weights.len() % 2 != 0 {
                bail!(Error::Config(format!("{} needs weights in pairs a,b", spec.key)));
            }
            Ok(weights.chunks(2).map(|w| CharacterLabel::torus2(w[0], w[1])).collect())
        }
    }
}

fn spectrum_bytes(table: &SpectrumTable) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_spectrum_csv(table, &mut buf)?;
    Ok(buf)
}

fn weyl_verify(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let spec = action_spec(cfg)?;
    let chis = characters(&spec, &cfg.weyl.weights)?;
    let lambda = cfg.weyl.lambda_max;
    let tolerance = cfg.tolerance.unwrap_or_else(|| default_tolerance(&spec));
    let table = build_spectrum(&spec, lambda)?;
    let volume = closed_form_reduced_volume(&MomentumMapModel::new(spec.clone()))?;

    let mut out = ArtifactWriter::new(&cfg.out_dir)?;
    out.write_bytes("spectrum.csv", &spectrum_bytes(&table)?)?;
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    let mut pass = true;
    for chi in &chis {
        let p = predict(&spec, chi, &volume)?;
        let v = verify(&table, &p, lambda, tolerance)?;
        for ((l, n), r) in v.diagnostics.lambda.iter().zip(&v.diagnostics.n_chi).zip(&v.diagnostics.residual) {
            rows.push(vec![chi.to_string(), fmt_f64(*l), n.to_string(), fmt_f64(p.predicted_count(*l)), fmt_f64(*r)]);
        }
        eprintln!(
            "{} chi={}: predicted {:.6}, empirical {:.6}, exponent {:.4} -> {}",
            spec.key,
            chi,
            p.leading_coefficient,
            v.diagnostics.empirical_coefficient,
            v.diagnostics.exponent_fit,
            if v.pass { "PASS" } else { "FAIL" }
        );
        pass &= v.pass;
        verdicts.push(v.verdict_json());
    }
    out.write_csv("counting.csv", &["chi", "lambda", "N_chi", "predicted", "residual"], &rows)?;

    let full_law = if lambda >= MIN_FULL_LAW_LAMBDA {
        let r = full_law_check(&table, &spec, lambda)?;
        eprintln!("{} full law: ratio {:.6} -> {}", spec.key, r.ratio, if r.pass { "PASS" } else { "FAIL" });
        pass &= r.pass;
        serde_json::to_value(&r)?
    } else {
        Value::Null
    };
    out.write_json(
        "verdict.json",
        &json!({
            "action": spec.key,
            "lambda_max": lambda,
            "characters": verdicts,
            "full_law": full_law,
            "pass": pass,
        }),
    )?;
    out.finish(&cfg.command, &manifest_config(cfg)?)?;
    Ok(Outcome::from_pass(pass))
}

fn load_phase(name: &str) -> anyhow::Result<PhaseProblem> {
    if BUILTIN_PHASES.contains(&name) {
        return Ok(builtin_problem(&BuiltinPhase { name: name.to_string(), width: None })?);
    }
    let path = std::path::Path::new(name);
    if !path.exists() {
        bail!(Error::Config(format!("{name:?} is neither a builtin phase ({}) nor a file", BUILTIN_PHASES.join(", "))));
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {name}"))?;
    Ok(load_phase_problem(&text)?)
}

fn mu_grid(cfg: &ExperimentConfig, default: (f64, f64, usize)) -> Vec<f64> {
    match cfg.oscillatory.mu {
        Some((a, b)) if a == b => vec![a],
        Some((a, b)) => geometric_grid(a, b, cfg.oscillatory.points),
        None => geometric_grid(default.0, default.1, default.2),
    }
}

fn statphase(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let name = cfg.oscillatory.phase.as_deref().unwrap_or("fresnel");
    let problem = load_phase(name)?;
    let lead = q0(&problem)?;
    let default = if problem.dim >= 5 { (1e3, 1e3, 1) } else { (50.0, 800.0, 5) };
    let grid = mu_grid(cfg, default);
    let tolerance = cfg.tolerance.unwrap_or(0.05);
    let (lo, hi): (Vec<f64>, Vec<f64>) = problem.support.iter().cloned().unzip();

    let mut rows = Vec::new();
    let mut last_err = f64::NAN;
    for &mu in &grid {
        let mut qs = QuadratureSpec::new(lo.clone(), hi.clone(), mu, MuConvention::Large);
        qs.rel_tolerance = 1e-4;
        let i = integrate(&|x: &[f64]| (problem.phase)(x), &|x: &[f64]| (problem.amplitude)(x), &qs)?.value;
        let l = lead.leading(mu);
        let ratio = i / l;
        last_err = (ratio - 1.0).norm();
        eprintln!("{name} mu={mu:.6e}: |I/leading - 1| = {last_err:.3e}");
        rows.push(vec![fmt_f64(mu), fmt_f64(i.re), fmt_f64(i.im), fmt_f64(l.re), fmt_f64(l.im), fmt_f64(ratio.re), fmt_f64(ratio.im)]);
    }
    let pass = last_err < tolerance;
    let mut out = ArtifactWriter::new(&cfg.out_dir)?;
    out.write_csv("statphase.csv", &["mu", "re_i", "im_i", "re_leading", "im_leading", "re_ratio", "im_ratio"], &rows)?;
    let mut record = lead.json_record();
    if let Some(map) = record.as_object_mut() {
        map.insert("phase".into(), json!(name));
        map.insert("final_relative_error".into(), json!(last_err));
        map.insert("tolerance".into(), json!(tolerance));
        map.insert("pass".into(), json!(pass));
    }
    out.write_json("statphase.json", &record)?;
    out.finish(&cfg.command, &manifest_config(cfg)?)?;
    Ok(Outcome::from_pass(pass))
}

fn complex_json(z: Complex64) -> Value {
    json!({"re": z.re, "im": z.im, "abs": z.norm(), "arg": z.arg()})
}

fn blowup_demo(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let name = cfg.oscillatory.phase.as_deref().unwrap_or("xy2");
    let (problem, prediction) = match name {
        "xy2" => (xy2_problem(), Some(singular_asymptotics(&xy2_atlas()?)?)),
        // a clean phase, for which the log term must vanish
        "clean" => (builtin_problem(&BuiltinPhase { name: "fresnel".into(), width: None })?, None),
        other => bail!(Error::Config(format!("blowup-demo supports xy2 and clean, got {other:?}"))),
    };
    let terms = match &cfg.oscillatory.terms {
        Some(t) => parse_terms(t)?,
        None => xy2_fit_terms(),
    };
    let grid = mu_grid(cfg, (1e-2, 1e-4, 9));
    let samples = direct_samples(&problem, &grid, 1e-7)?;
    let fit = fit_asymptotics(&samples, &terms)?;
    let tolerance = cfg.tolerance.unwrap_or(0.1);

    let c1 = fit.coefficients[0];
    let c2 = fit.coefficients.get(1).copied().unwrap_or_default();
    let pass = match name {
        "xy2" => ((c1.norm() - PI.sqrt()) / PI.sqrt()).abs() < tolerance && (c1.arg() - PI / 4.0).abs() < 0.1,
        _ => c1.norm() < tolerance * c2.norm().max(f64::MIN_POSITIVE),
    };
    eprintln!(
        "{name}: c1 = {:.6}{:+.6}i, c2 = {:.6}{:+.6}i, condition {:.3e} -> {}",
        c1.re,
        c1.im,
        c2.re,
        c2.im,
        fit.condition_number,
        if pass { "PASS" } else { "FAIL" }
    );

    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|(h, i)| {
            vec![fmt_f64(*h), fmt_f64(i.re), fmt_f64(i.im), fmt_f64(c1.re), fmt_f64(c1.im), fmt_f64(c2.re), fmt_f64(c2.im)]
        })
        .collect();
    let mut out = ArtifactWriter::new(&cfg.out_dir)?;
    out.write_csv("blowup.csv", &["mu", "re_i", "im_i", "c1_re", "c1_im", "c2_re", "c2_im"], &rows)?;
    let fitted: Vec<Value> = fit
        .terms
        .iter()
        .zip(&fit.coefficients)
        .zip(&fit.standard_errors)
        .map(|((t, c), e)| json!({"alpha": t.alpha, "log_power": t.log_power, "coefficient": complex_json(*c), "stderr": e}))
        .collect();
    let predicted = prediction.map(|p| {
        json!({"alpha": p.leading.alpha, "log_power": p.leading.log_power, "coefficient": complex_json(p.leading.coefficient)})
    });
    out.write_json(
        "fit.json",
        &json!({
            "phase": name,
            "terms": fitted,
            "condition_number": fit.condition_number,
            "residual_norm": fit.residual_norm,
            "predicted_leading": predicted,
            "tolerance": tolerance,
            "pass": pass,
        }),
    )?;
    out.finish(&cfg.command, &manifest_config(cfg)?)?;
    Ok(Outcome::from_pass(pass))
}

fn spectrum_dump(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let spec = action_spec(cfg)?;
    let chis = characters(&spec, &cfg.weyl.weights)?;
    let lambda = cfg.weyl.lambda_max;
    let table = build_spectrum(&spec, lambda)?;
    let grid = dyadic_grid(lambda, DYADIC_POINTS);
    let mut out = ArtifactWriter::new(&cfg.out_dir)?;
    out.write_bytes("spectrum.csv", &spectrum_bytes(&table)?)?;
    let mut rows = Vec::new();
    for chi in &chis {
        let c = count_reduced(&table, chi, &grid)?;
        rows.extend(c.lambda.iter().zip(&c.n_chi).map(|(l, n)| vec![chi.to_string(), fmt_f64(*l), n.to_string()]));
    }
    out.write_csv("counting.csv", &["chi", "lambda", "N_chi"], &rows)?;
    let total = count_total(&table, &grid)?;
    let rows: Vec<Vec<String>> = grid.iter().zip(&total).map(|(l, n)| vec![fmt_f64(*l), n.to_string()]).collect();
    out.write_csv("total.csv", &["lambda", "N"], &rows)?;
    out.finish(&cfg.command, &manifest_config(cfg)?)?;
    Ok(Outcome::Pass)
}

fn volume(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let spec = action_spec(cfg)?;
    let model = MomentumMapModel::new(spec.clone());
    let est = reduced_volume(&model, cfg.volume.samples, cfg.seed)?;
    let exact = closed_form_reduced_volume(&model)?.value;
    let tolerance = cfg.tolerance.unwrap_or(0.05);
    let rel = (est.value / exact - 1.0).abs();
    let pass = rel < tolerance;
    eprintln!(
        "{}: Monte Carlo {:.6} ± {:.2e}, closed form {:.6}, rel {:.2e} -> {}",
        spec.key,
        est.value,
        est.standard_error,
        exact,
        rel,
        if pass { "PASS" } else { "FAIL" }
    );
    let mut record = est.json_record(&spec.key);
    if let Some(map) = record.as_object_mut() {
        map.insert("closed_form".into(), json!(exact));
        map.insert("converged".into(), json!(est.converged));
        map.insert("relative_difference".into(), json!(rel));
        map.insert("tolerance".into(), json!(tolerance));
        map.insert("pass".into(), json!(pass));
    }
    let mut out = ArtifactWriter::new(&cfg.out_dir)?;
    out.write_json("volume.json", &record)?;
    out.finish(&cfg.command, &manifest_config(cfg)?)?;
    Ok(Outcome::from_pass(pass))
}
