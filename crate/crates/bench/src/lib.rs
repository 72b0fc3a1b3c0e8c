//! Shared fixtures for the benchmarks.

use weylab::{GroupActionSpec, MomentumMapModel};

pub const CATALOG: &[&str] = &["torus2-rot1", "s2-rot", "s3-hopf", "lens-p3-right"];

pub fn spec(key: &str) -> GroupActionSpec {
    GroupActionSpec::from_key(key).expect("catalog key")
}

pub fn model(key: &str) -> MomentumMapModel {
    MomentumMapModel::new(spec(key))
}

/// Synthetic samples of I(h) = c1 h^{1/2} log(1/h) + c2 h^{1/2} for fit benchmarks.
pub fn synthetic_samples(points: usize) -> Vec<(f64, num_complex::Complex64)> {
    let c1 = num_complex::Complex64::new(1.25, 1.25);
    let c2 = num_complex::Complex64::new(-2.5, -4.9);
    weylab::oscquad::geometric_grid(1e-2, 1e-4, points)
        .into_iter()
        .map(|h| (h, c1 * h.sqrt() * (1.0 / h).ln() + c2 * h.sqrt()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_resolve() {
        for key in CATALOG {
            assert_eq!(spec(key).key, *key);
        }
        let s = synthetic_samples(9);
        assert_eq!(s.len(), 9);
        let fit = weylab::oscquad::fit_asymptotics(&s, &weylab::blowup::xy2_fit_terms()).unwrap();
        assert!((fit.coefficients[0] - num_complex::Complex64::new(1.25, 1.25)).norm() < 1e-9);
    }
}
