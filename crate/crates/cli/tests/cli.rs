use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn weylab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weylab"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn weyl_verify_torus_passes_and_writes_artifacts() {
    let d = tempfile::tempdir().unwrap();
    let o = weylab(&["weyl-verify", "--action", "torus2-rot1", "--weights", "0,1,5", "--lambda-max", "1e6"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["spectrum.csv", "counting.csv", "verdict.json", "manifest.json", "metadata.json"] {
        assert!(d.path().join(f).exists(), "{f}");
    }
    let v = json(&d.path().join("verdict.json"));
    assert_eq!(v["pass"], true);
    assert_eq!(v["characters"].as_array().unwrap().len(), 3);
    for c in v["characters"].as_array().unwrap() {
        for key in ["predicted", "empirical", "stderr", "exponent_fit", "pass"] {
            assert!(c.get(key).is_some(), "{key}");
        }
    }
    assert!(weylab::artifacts::verify_manifest(d.path()).unwrap().is_empty());
    let spectrum = fs::read_to_string(d.path().join("spectrum.csv")).unwrap();
    assert!(spectrum.starts_with("t,total_mult,weight,mult_weight\r\n"));
}

#[test]
fn unknown_action_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let o = weylab(&["weyl-verify", "--action", "klein-bottle"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown action key"), "{}", stderr(&o));
}

#[test]
fn oversized_spectrum_is_refused() {
    let d = tempfile::tempdir().unwrap();
    let o = weylab(&["weyl-verify", "--action", "torus2-rot1", "--lambda-max", "1e12"], d.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("resource limit"), "{}", stderr(&o));
}

#[test]
fn failed_verification_exits_one() {
    let d = tempfile::tempdir().unwrap();
    let o = weylab(&["weyl-verify", "--action", "s2-rot", "--lambda-max", "1e4", "--tolerance", "1e-9"], d.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert_eq!(json(&d.path().join("verdict.json"))["pass"], false);
}

#[test]
fn malformed_flags_and_configs_exit_two() {
    let d = tempfile::tempdir().unwrap();
    let o = weylab(&["weyl-verify", "--action", "s2-rot", "--weights", "1,x"], d.path());
    assert_eq!(o.status.code(), Some(2));
    let cfg = d.path().join("bad.toml");
    fs::write(&cfg, "command = \"weyl-verify\"\nunknown_key = 3\n").unwrap();
    let o = weylab(&["--config", cfg.to_str().unwrap()], d.path());
    assert_eq!(o.status.code(), Some(2));
    let o = weylab(&["no-such-command"], d.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_with_flag_override() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.toml");
    fs::write(&cfg, "command = \"weyl-verify\"\naction = \"s2-rot\"\n\n[weyl]\nweights = [0, 2]\nlambda_max = 1e5\n").unwrap();
    let out = d.path().join("out");
    let o = weylab(&["--config", cfg.to_str().unwrap(), "--weights", "1"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&out.join("verdict.json"));
    assert_eq!(v["lambda_max"], 1e5);
    let chars = v["characters"].as_array().unwrap();
    assert_eq!(chars.len(), 1);
    assert_eq!(chars[0]["chi"], "1");
}

#[test]
fn statphase_fresnel_ratio_converges() {
    let d = tempfile::tempdir().unwrap();
    let o = weylab(&["statphase", "fresnel"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut r = csv::Reader::from_path(d.path().join("statphase.csv")).unwrap();
    let errs: Vec<f64> = r
        .records()
        .map(|rec| {
            let rec = rec.unwrap();
            let re: f64 = rec[5].parse().unwrap();
            let im: f64 = rec[6].parse().unwrap();
            (re - 1.0).hypot(im)
        })
        .collect();
    assert_eq!(errs.len(), 5);
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    assert!(*errs.last().unwrap() < 2e-3);
}

#[test]
fn statphase_rejects_xy2_with_pointer() {
    let d = tempfile::tempdir().unwrap();
    let o = weylab(&["statphase", "xy2"], d.path());
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("cleanliness violation at ["), "{e}");
    assert!(e.contains("blowup-demo xy2"), "{e}");
}

#[test]
fn blowup_demo_xy2_default_grid() {
    let d = tempfile::tempdir().unwrap();
    let o = weylab(&["blowup-demo", "xy2", "--mu", "1e-2..1e-4", "--points", "9"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fit = json(&d.path().join("fit.json"));
    let c1 = fit["terms"][0]["coefficient"]["abs"].as_f64().unwrap();
    let ratio = c1 / std::f64::consts::PI.sqrt();
    assert!((0.9..=1.1).contains(&ratio), "{ratio}");
    assert!(fit["terms"][0]["stderr"].as_f64().unwrap() > 0.0);
    let rows = fs::read_to_string(d.path().join("blowup.csv")).unwrap();
    assert_eq!(rows.lines().count(), 10);
    assert!(rows.starts_with("mu,re_i,im_i,c1_re,c1_im,c2_re,c2_im\r\n"));
}

#[test]
fn blowup_demo_clean_phase_has_no_log_term() {
    let d = tempfile::tempdir().unwrap();
    let o = weylab(&["blowup-demo", "clean"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fit = json(&d.path().join("fit.json"));
    let log_coef = fit["terms"][0]["coefficient"]["abs"].as_f64().unwrap();
    let power_coef = fit["terms"][1]["coefficient"]["abs"].as_f64().unwrap();
    assert!(log_coef < 1e-2 * power_coef, "{log_coef} vs {power_coef}");
    // (2π)^{1/2} from the clean stationary point
    assert!((power_coef - (2.0 * std::f64::consts::PI).sqrt()).abs() < 2e-2);
}

#[test]
fn blowup_demo_custom_model_reports_condition() {
    let d = tempfile::tempdir().unwrap();
    let o = weylab(&["blowup-demo", "clean", "--terms", "0.5:1,0.5:0,1:0", "--points", "7", "--mu", "1e-2..1e-3"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fit = json(&d.path().join("fit.json"));
    assert_eq!(fit["terms"].as_array().unwrap().len(), 3);
    assert!(fit["condition_number"].as_f64().unwrap() > 1.0);
    let o = weylab(&["blowup-demo", "clean", "--terms", "half:1"], d.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn spectrum_dump_and_reduced_volume() {
    let d = tempfile::tempdir().unwrap();
    let o = weylab(&["spectrum-dump", "--action", "torus3-rot2", "--weights", "0,1,1,-1", "--lambda-max", "1e3"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let counting = fs::read_to_string(d.path().join("counting.csv")).unwrap();
    assert!(counting.contains("\"(1,-1)\""));
    let o = weylab(&["spectrum-dump", "--action", "torus3-rot2", "--weights", "0,1,1"], d.path());
    assert_eq!(o.status.code(), Some(2));

    let v = tempfile::tempdir().unwrap();
    let o = weylab(&["reduced-volume", "--action", "s2-rot", "--samples", "20000", "--seed", "3"], v.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rec = json(&v.path().join("volume.json"));
    assert!((rec["value"].as_f64().unwrap() / (2.0 * std::f64::consts::PI) - 1.0).abs() < 1e-3);
}

fn assert_same_artifacts(a: &Path, b: &Path) {
    let manifest = json(&a.join("manifest.json"));
    let mut names: Vec<String> =
        manifest["files"].as_array().unwrap().iter().map(|f| f["file"].as_str().unwrap().to_string()).collect();
    names.push("manifest.json".into());
    for f in names {
        assert_eq!(fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap(), "{f} differs");
    }
}

#[test]
fn runs_are_byte_identical_across_thread_counts() {
    let runs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (d, threads) in runs.iter().zip(["1", "1", "3"]) {
        let o = weylab(&["weyl-verify", "--action", "s3-hopf", "--lambda-max", "1e5", "--weights", "0,1", "--threads", threads], d.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    assert_same_artifacts(runs[0].path(), runs[1].path());
    assert_same_artifacts(runs[0].path(), runs[2].path());

    let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for (d, threads) in runs.iter().zip(["1", "4"]) {
        let o = weylab(&["reduced-volume", "--action", "lens-p3-right", "--samples", "10000", "--seed", "17", "--threads", threads], d.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    assert_same_artifacts(runs[0].path(), runs[1].path());
}
