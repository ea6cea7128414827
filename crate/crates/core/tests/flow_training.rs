use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use riskgen::naturalness::{synthetic_events, train_flow, train_on_rows, TrainConfig};
use riskgen::scenario::catalog_entry;

/// -(D/2) ln(2 pi e) for D = 2.
fn gaussian_entropy_2d() -> f64 {
    -(2.0 * std::f64::consts::PI * std::f64::consts::E).ln()
}

fn normal_rows(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| vec![StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)]).collect()
}

#[test]
fn standard_normal_heldout_loglik() {
    let start = Instant::now();
    let rows = normal_rows(10_000, 1);
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let (model, report) = train_on_rows("normal2d", &refs, &TrainConfig::default(), 7).unwrap();
    let held = normal_rows(10_000, 2);
    let mean: f64 = held.iter().map(|r| model.log_likelihood_values(r).unwrap()).sum::<f64>() / held.len() as f64;
    let target = gaussian_entropy_2d();
    assert!((target + 2.8379).abs() < 1e-4);
    eprintln!("held-out {mean:.4} target {target:.4} epochs {} in {:?}", report.epochs_run, start.elapsed());
    assert!((mean - target).abs() < 0.1, "{mean} vs {target}");
    for w in report.train_loglik.windows(2) {
        assert!(w[1] >= w[0] - 0.05, "train loglik dropped {} -> {}", w[0], w[1]);
    }
    assert!(start.elapsed().as_secs() < 180);
}

#[test]
fn cut_in_model_trains_on_synthetic_events() {
    let start = Instant::now();
    let ls = catalog_entry("CutIn1").unwrap();
    let events = synthetic_events(&ls, 10_000, 7).unwrap();
    let (model, report) = train_flow("CutIn1", &events, &TrainConfig::default(), 7).unwrap();
    eprintln!(
        "CutIn1: {} events, epochs {}, train {:.3} val {:.3}, {:?}",
        events.len(),
        report.epochs_run,
        report.final_train_loglik,
        report.final_validation_loglik,
        start.elapsed()
    );
    for w in report.train_loglik.windows(2) {
        assert!(w[1] >= w[0] - 0.05, "train loglik dropped {} -> {}", w[0], w[1]);
    }
    // Typical events are more natural than a box corner.
    let typical = model.log_likelihood_values(&[22.0, 19.0, 23.0, 16.0, 3.0, 22.5]).unwrap();
    let corner = model.log_likelihood_values(&[10.0, 40.0, 5.0, 5.0, 1.0, 30.0]).unwrap();
    assert!(model.nat_norm(typical) > 0.3, "{}", model.nat_norm(typical));
    assert!(model.nat_norm(corner) < 0.01, "{}", model.nat_norm(corner));
}
