use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::flow::{FlowModel, MadeParams};
use super::EventSample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_flows: usize,
    pub hidden: [usize; 2],
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Epochs after which the step size is multiplied by `decay_factor`.
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub validation_fraction: f64,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub min_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_flows: 5,
            hidden: [64, 64],
            batch_size: 256,
            epochs: 100,
            learning_rate: 1e-3,
            decay_epochs: vec![60, 85],
            decay_factor: 0.5,
            validation_fraction: 0.1,
            patience: 10,
            min_samples: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub ls_id: String,
    pub seed: u64,
    pub n_samples: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Mean log-likelihood of the whole training split after each epoch.
    pub train_loglik: Vec<f64>,
    pub validation_loglik: Vec<f64>,
    pub final_train_loglik: f64,
    pub final_validation_loglik: f64,
}

struct Adam {
    m: Vec<MadeParams>,
    v: Vec<MadeParams>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(model: &FlowModel) -> Self {
        let zeros: Vec<MadeParams> = model.layers.iter().map(|_| MadeParams::zeros(model.dim(), model.hidden)).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }

    fn step(&mut self, model: &mut FlowModel, grads: &[MadeParams], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (l, layer) in model.layers.iter_mut().enumerate() {
            let params = layer.params.tensors_mut();
            let g = grads[l].tensors();
            let m = self.m[l].tensors_mut();
            let v = self.v[l].tensors_mut();
            for (((p, g), m), v) in params.into_iter().zip(g).zip(m).zip(v) {
                for i in 0..p.len() {
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                    p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

fn to_matrix(rows: &[&[f64]], dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), dim), |(i, j)| rows[i][j])
}

/// Fits a flow to extracted events.
pub fn train_flow(ls_id: &str, samples: &[EventSample], cfg: &TrainConfig, seed: u64) -> Result<(FlowModel, TrainReport)> {
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.features.as_slice()).collect();
    train_on_rows(ls_id, &rows, cfg, seed)
}

/// Fits a flow to raw feature rows: shuffle, split, standardize on the
/// training split, then Adam on the mean negative log-likelihood with
/// early stopping on the validation split. The best validation epoch's
/// weights are kept.
pub fn train_on_rows(ls_id: &str, rows: &[&[f64]], cfg: &TrainConfig, seed: u64) -> Result<(FlowModel, TrainReport)> {
    if rows.len() < cfg.min_samples.max(2) {
        return Err(Error::TooFewSamples {
            needed: cfg.min_samples.max(2),
            got: rows.len(),
        });
    }
    let dim = rows[0].len();
    if dim == 0 {
        return Err(Error::validation("samples", "feature vectors are empty"));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::Dimension { expected: dim, got: bad.len() });
    }
    if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::validation("samples", "non-finite feature"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((rows.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, rows.len() - 1);
    let pick = |idx: &[usize]| -> Array2<f64> { to_matrix(&idx.iter().map(|&i| rows[i]).collect::<Vec<_>>(), dim) };
    let val_raw = pick(&order[..n_val]);
    let train_raw = pick(&order[n_val..]);

    let mut model = FlowModel::random(ls_id, dim, cfg.n_flows, cfg.hidden, &mut rng);
    let mean: Array1<f64> = train_raw.mean_axis(Axis(0)).expect("nonempty");
    let std = train_raw.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
    model.feature_mean = mean.to_vec();
    model.feature_std = std.to_vec();
    let train = model.standardize(train_raw.view());

    let mut adam = Adam::new(&model);
    let mut report = TrainReport {
        ls_id: ls_id.to_string(),
        seed,
        n_samples: rows.len(),
        n_train: train.nrows(),
        n_validation: n_val,
        epochs_run: 0,
        best_epoch: 0,
        train_loglik: Vec::new(),
        validation_loglik: Vec::new(),
        final_train_loglik: f64::NAN,
        final_validation_loglik: f64::NAN,
    };
    let mut best = (f64::NEG_INFINITY, model.clone());
    let mut stall = 0;
    let mut idx: Vec<usize> = (0..train.nrows()).collect();
    for epoch in 1..=cfg.epochs {
        let decays = cfg.decay_epochs.iter().filter(|&&d| epoch > d).count();
        let lr = cfg.learning_rate * cfg.decay_factor.powi(decays as i32);
        idx.shuffle(&mut rng);
        for chunk in idx.chunks(cfg.batch_size.max(1)) {
            let batch = train.select(Axis(0), chunk);
            let (ll, grads) = model.batch_grad(batch.view());
            if !ll.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            adam.step(&mut model, &grads, lr);
        }
        let train_ll = model.log_prob_rows(train_raw.view()).mean().expect("nonempty");
        let val_ll = model.log_prob_rows(val_raw.view()).mean().expect("nonempty");
        if !train_ll.is_finite() || !val_ll.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        report.train_loglik.push(train_ll);
        report.validation_loglik.push(val_ll);
        report.epochs_run = epoch;
        if val_ll > best.0 {
            best = (val_ll, model.clone());
            report.best_epoch = epoch;
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.patience {
                break;
            }
        }
    }

    let mut model = best.1;
    let mut lls = model.log_prob_rows(train_raw.view()).to_vec();
    lls.sort_by(f64::total_cmp);
    report.final_train_loglik = lls.iter().sum::<f64>() / lls.len() as f64;
    report.final_validation_loglik = best.0;
    model.train_loglik_sorted = lls;
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_rows(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..2).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
    }

    fn small() -> TrainConfig {
        TrainConfig {
            hidden: [16, 16],
            n_flows: 2,
            epochs: 8,
            batch_size: 64,
            min_samples: 50,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn too_few_samples() {
        let rows = gaussian_rows(199, 1);
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let err = train_on_rows("t", &refs, &TrainConfig::default(), 1).unwrap_err();
        assert!(matches!(err, Error::TooFewSamples { needed: 200, got: 199 }));
    }

    #[test]
    fn ragged_rows_rejected() {
        let mut rows = gaussian_rows(300, 1);
        rows[7].push(1.0);
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        assert!(matches!(train_on_rows("t", &refs, &small(), 1), Err(Error::Dimension { .. })));
    }

    #[test]
    fn equal_seed_equal_model() {
        let rows = gaussian_rows(400, 2);
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let (a, ra) = train_on_rows("t", &refs, &small(), 5).unwrap();
        let (b, rb) = train_on_rows("t", &refs, &small(), 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert_eq!(a.to_text().unwrap(), b.to_text().unwrap());
        let (c, _) = train_on_rows("t", &refs, &small(), 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn training_improves_and_sorts() {
        // Correlated pair: the flow must beat the independent Gaussian fit.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..2000)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                vec![a, a * a + 0.3 * b]
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let cfg = TrainConfig { epochs: 30, min_samples: 50, ..TrainConfig::default() };
        let (model, report) = train_on_rows("t", &refs, &cfg, 4).unwrap();
        assert!(model.train_loglik_sorted.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(model.train_loglik_sorted.len(), report.n_train);
        assert!(report.train_loglik.last().unwrap() > &report.train_loglik[0]);
        // Independent Gaussian with matching moments.
        let var_b: f64 = 2.0 + 0.09;
        let gauss = -(2.0 * std::f64::consts::PI).ln() - 0.5 - 0.5 * var_b.ln() - 0.5;
        assert!(report.final_validation_loglik > gauss + 0.3, "{} vs {gauss}", report.final_validation_loglik);
    }
}
