//! Finds the phase spread of states 2 and 4 that gives a target coin
//! imbalance, with every other width fixed at 0.05 rad.
//!
//!     cargo run --release --example calibrate_prep -- [target] [mu_out]

use qkd_trojan::prep::{GaussianPrepModel, PrepModel};
use qkd_trojan::trojan::analyze;

const BASE_SIGMA: f64 = 0.05;

fn model(s: f64) -> PrepModel {
    PrepModel::Gaussian(GaussianPrepModel::around_ideal(
        0.0,
        [BASE_SIGMA, s, BASE_SIGMA, s],
        BASE_SIGMA,
    ))
}

fn delta(s: f64, mu: f64) -> f64 {
    analyze(&model(s), mu, 1.0, 0.0).expect("valid model").delta
}

fn main() {
    let mut args = std::env::args().skip(1);
    let target: f64 = args.next().map_or(9.2e-6, |a| a.parse().expect("target"));
    let mu: f64 = args.next().map_or(1e-6, |a| a.parse().expect("mu_out"));

    let (mut lo, mut hi) = (BASE_SIGMA, 0.2);
    assert!(
        delta(lo, mu) < target && delta(hi, mu) > target,
        "target outside reachable range"
    );
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if delta(mid, mu) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    println!("phi_sigma = [{BASE_SIGMA}, {s:.6}, {BASE_SIGMA}, {s:.6}], theta_sigma = {BASE_SIGMA}");
    let rounded = (s * 1e4).round() / 1e4;
    println!("rounded sigma {rounded}");
    for m in [mu, 1e-100] {
        println!("  mu_out = {m:e}: delta = {:.6e}", delta(rounded, m));
    }
}
