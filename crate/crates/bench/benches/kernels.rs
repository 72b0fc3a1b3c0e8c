use criterion::{black_box, criterion_group, criterion_main, Criterion};
use weylab::blowup::{torus_weak_transform, xy2_atlas};
use weylab::oscquad::{fit_asymptotics, integrate, MuConvention, QuadratureSpec};
use weylab::spectral::{build_spectrum, count_reduced};
use weylab::statphase::{builtin_problem, BuiltinPhase};
use weylab::symplectic::EquivariantPhase;
use weylab::weyl::dyadic_grid;
use weylab::{reduced_volume, CharacterLabel};
use weylab_bench::{model, spec, synthetic_samples, CATALOG};

fn spectra(c: &mut Criterion) {
    let mut g = c.benchmark_group("spectrum");
    for key in CATALOG {
        let s = spec(key);
        g.bench_function(format!("build/{key}/1e4"), |b| b.iter(|| build_spectrum(black_box(&s), 1e4).unwrap()));
    }
    let s = spec("s2-rot");
    let table = build_spectrum(&s, 1e6).unwrap();
    let grid = dyadic_grid(1e6, 20);
    g.bench_function("count_reduced/s2-rot/1e6", |b| {
        b.iter(|| count_reduced(&table, &CharacterLabel::circle(1), black_box(&grid)).unwrap())
    });
    g.finish();
}

fn volumes(c: &mut Criterion) {
    let mut g = c.benchmark_group("reduced_volume");
    g.sample_size(10);
    for key in ["torus2-rot1", "s2-rot"] {
        let m = model(key);
        g.bench_function(format!("{key}/2000"), |b| b.iter(|| reduced_volume(&m, 2000, 1).unwrap()));
    }
    let phi = EquivariantPhase::new(model("s3-hopf"));
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
    let pt = phi.model.sample_omega_point(&mut rng, 1.0).unwrap();
    let g0 = weylab::GroupElement::circle(0.7);
    g.bench_function("equivariant_gradient/s3-hopf", |b| b.iter(|| phi.gradient(black_box(&pt), &g0).unwrap()));
    g.finish();
}

fn oscillatory(c: &mut Criterion) {
    let mut g = c.benchmark_group("oscquad");
    let p = builtin_problem(&BuiltinPhase { name: "fresnel".into(), width: None }).unwrap();
    let spec = QuadratureSpec::new(vec![-1.0], vec![1.0], 200.0, MuConvention::Large);
    g.bench_function("fresnel/mu200", |b| {
        b.iter(|| integrate(&|x: &[f64]| (p.phase)(x), &|x: &[f64]| (p.amplitude)(x), black_box(&spec)).unwrap())
    });
    let samples = synthetic_samples(9);
    let terms = weylab::blowup::xy2_fit_terms();
    g.bench_function("fit/2terms", |b| b.iter(|| fit_asymptotics(black_box(&samples), &terms).unwrap()));
    g.finish();
}

fn blowup(c: &mut Criterion) {
    let mut g = c.benchmark_group("blowup");
    let atlas = xy2_atlas().unwrap();
    let y = [0.13, 0.4];
    g.bench_function("xy2/weak", |b| b.iter(|| atlas[0].transformed.weak(black_box(&y))));
    let tp = torus_weak_transform().unwrap();
    let z = [0.1, 0.2, 0.05, -0.1, 0.3, 0.0];
    g.bench_function("torus/weak_on_divisor", |b| b.iter(|| tp.weak(black_box(&z))));
    g.finish();
}

criterion_group!(benches, spectra, volumes, oscillatory, blowup);
criterion_main!(benches);
