use givbma::priors::GKind;
use givbma::sampler::CovarianceUpdate;
use givbma_bench::geweke::{geweke_test, GewekeConfig};

fn max_abs_z(cfg: &GewekeConfig) -> f64 {
    let res = geweke_test(cfg).unwrap();
    for f in &res {
        eprintln!("{:>12}: forward {:.4}, gibbs {:.4}, z = {:.2}", f.feature, f.forward_mean, f.gibbs_mean, f.z());
    }
    res.iter().map(|f| f.z().abs()).fold(0.0, f64::max)
}

#[test]
fn exact_sampler_passes_with_hyper_g() {
    assert!(max_abs_z(&GewekeConfig::default()) < 4.0);
}

#[test]
fn exact_sampler_passes_with_bric() {
    let cfg = GewekeConfig {
        g: GKind::Bric,
        iterations: 400_000,
        seed: 1,
        ..Default::default()
    };
    assert!(max_abs_z(&cfg) < 4.0);
}

// The residual-only Σ update ignores the g-prior factors and must be detected.
#[test]
fn verbatim_covariance_update_is_rejected() {
    let cfg = GewekeConfig {
        update: CovarianceUpdate::Verbatim,
        iterations: 400_000,
        seed: 1,
        ..Default::default()
    };
    assert!(max_abs_z(&cfg) > 4.0);
}
