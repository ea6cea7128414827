//! Masked autoregressive flow over standardized features.
//!
//! Each layer is an affine autoregressive map whose shift `mu` and log-scale
//! `alpha` come from a masked two-hidden-layer tanh network (MADE), so
//! output `d` sees only inputs `< d`:
//!
//! * generative direction `x_d = u_d * exp(alpha_d) + mu_d`, log-det `sum alpha`,
//!   evaluated one coordinate at a time;
//! * density direction `u_d = (x_d - mu_d) * exp(-alpha_d)`, log-det
//!   `-sum alpha`, evaluated in one pass.
//!
//! Coordinate order is reversed between consecutive layers and `alpha` is
//! clamped to `[-7, 7]`. The log-likelihood of raw features adds the
//! standardization term `-sum ln std`.

use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::ConcreteScenario;

pub const FLOW_FORMAT_VERSION: u32 = 1;
pub const ALPHA_CLAMP: f64 = 7.0;
const LN_2PI: f64 = 1.837_877_066_409_345_3;
const OUTPUT_INIT_SCALE: f64 = 0.01;

/// MADE weights; matrices are (out, in) and stay zero where masked.
#[derive(Debug, Clone, PartialEq)]
pub struct MadeParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
}

impl MadeParams {
    pub fn zeros(dim: usize, hidden: [usize; 2]) -> Self {
        Self {
            w1: Array2::zeros((hidden[0], dim)),
            b1: Array1::zeros(hidden[0]),
            w2: Array2::zeros((hidden[1], hidden[0])),
            b2: Array1::zeros(hidden[1]),
            w3: Array2::zeros((2 * dim, hidden[1])),
            b3: Array1::zeros(2 * dim),
        }
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
            self.w3.as_slice().expect("standard layout"),
            self.b3.as_slice().expect("standard layout"),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
            self.w3.as_slice_mut().expect("standard layout"),
            self.b3.as_slice_mut().expect("standard layout"),
        ]
    }
}

/// Connectivity degrees of hidden units, cycling over `1..dim`.
fn degrees(dim: usize, width: usize) -> Vec<usize> {
    if dim <= 1 {
        vec![0; width]
    } else {
        (0..width).map(|k| k % (dim - 1) + 1).collect()
    }
}

fn made_masks(dim: usize, hidden: [usize; 2]) -> [Array2<f64>; 3] {
    let d1 = degrees(dim, hidden[0]);
    let d2 = degrees(dim, hidden[1]);
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    [
        Array2::from_shape_fn((hidden[0], dim), |(k, d)| flag(d1[k] > d)),
        Array2::from_shape_fn((hidden[1], hidden[0]), |(k, j)| flag(d2[k] >= d1[j])),
        Array2::from_shape_fn((2 * dim, hidden[1]), |(r, k)| flag(r % dim + 1 > d2[k])),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    pub params: MadeParams,
    masks: [Array2<f64>; 3],
}

pub(crate) struct LayerCache {
    x: Array2<f64>,
    h1: Array2<f64>,
    h2: Array2<f64>,
    u: Array2<f64>,
    scale: Array2<f64>,
    unclamped: Array2<f64>,
}

impl AffineLayer {
    /// All conditioner outputs zero: the identity map.
    pub fn identity(dim: usize, hidden: [usize; 2]) -> Self {
        Self {
            params: MadeParams::zeros(dim, hidden),
            masks: made_masks(dim, hidden),
        }
    }

    pub fn random(dim: usize, hidden: [usize; 2], rng: &mut impl Rng) -> Self {
        let mut layer = Self::identity(dim, hidden);
        let [m1, m2, m3] = &layer.masks;
        let p = &mut layer.params;
        let mut fill = |w: &mut Array2<f64>, m: &Array2<f64>, scale: f64| {
            let bound = scale / (w.ncols() as f64).sqrt();
            for (wi, mi) in w.iter_mut().zip(m.iter()) {
                let r: f64 = rng.gen_range(-bound..bound);
                *wi = r * mi;
            }
        };
        fill(&mut p.w1, m1, 1.0);
        fill(&mut p.w2, m2, 1.0);
        fill(&mut p.w3, m3, OUTPUT_INIT_SCALE);
        layer
    }

    pub fn dim(&self) -> usize {
        self.params.w1.ncols()
    }

    fn conditioner(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let p = &self.params;
        let h1 = (x.dot(&p.w1.t()) + &p.b1).mapv_into(f64::tanh);
        let h2 = (h1.dot(&p.w2.t()) + &p.b2).mapv_into(f64::tanh);
        let o = h2.dot(&p.w3.t()) + &p.b3;
        (h1, h2, o)
    }

    /// Density direction for a batch of rows: `(u, log|det du/dx|)`.
    pub fn inverse(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>) {
        let (u, logdet, _) = self.inverse_cached(x);
        (u, logdet)
    }

    pub(crate) fn inverse_cached(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>, LayerCache) {
        let d = self.dim();
        let (h1, h2, o) = self.conditioner(x);
        let mu = o.slice(s![.., ..d]);
        let raw = o.slice(s![.., d..]);
        let alpha = raw.mapv(|a| a.clamp(-ALPHA_CLAMP, ALPHA_CLAMP));
        let unclamped = raw.mapv(|a| if a.abs() < ALPHA_CLAMP { 1.0 } else { 0.0 });
        let scale = alpha.mapv(|a| (-a).exp());
        let u = (&x - &mu) * &scale;
        let logdet = -alpha.sum_axis(Axis(1));
        let cache = LayerCache {
            x: x.to_owned(),
            h1,
            h2,
            u: u.clone(),
            scale,
            unclamped,
        };
        (u, logdet, cache)
    }

    /// Generative direction for one row: `(x, log|det dx/du|)`.
    pub fn forward(&self, u: &[f64]) -> (Vec<f64>, f64) {
        let d = self.dim();
        let mut x = Array2::zeros((1, d));
        let mut logdet = 0.0;
        for i in 0..d {
            let (_, _, o) = self.conditioner(x.view());
            let alpha = o[[0, d + i]].clamp(-ALPHA_CLAMP, ALPHA_CLAMP);
            x[[0, i]] = u[i] * alpha.exp() + o[[0, i]];
            logdet += alpha;
        }
        (x.into_raw_vec_and_offset().0, logdet)
    }

    /// Back-propagates `g_u` (loss gradient w.r.t. `u`, per row) through the
    /// layer, adding the `+sum alpha` term of the negative log-likelihood.
    /// Returns the gradient w.r.t. the layer input and summed parameter
    /// gradients.
    pub(crate) fn backward(&self, cache: &LayerCache, g_u: &Array2<f64>) -> (Array2<f64>, MadeParams) {
        let p = &self.params;
        let [m1, m2, m3] = &self.masks;
        let g_mu = -(g_u * &cache.scale);
        let g_alpha = (1.0 - g_u * &cache.u) * &cache.unclamped;
        let g_o = concatenate(Axis(1), &[g_mu.view(), g_alpha.view()]).expect("matching rows");
        let w3 = g_o.t().dot(&cache.h2) * m3;
        let b3 = g_o.sum_axis(Axis(0));
        let g_a2 = g_o.dot(&p.w3) * cache.h2.mapv(|h| 1.0 - h * h);
        let w2 = g_a2.t().dot(&cache.h1) * m2;
        let b2 = g_a2.sum_axis(Axis(0));
        let g_a1 = g_a2.dot(&p.w2) * cache.h1.mapv(|h| 1.0 - h * h);
        let w1 = g_a1.t().dot(&cache.x) * m1;
        let b1 = g_a1.sum_axis(Axis(0));
        let g_x = g_u * &cache.scale + g_a1.dot(&p.w1);
        (g_x, MadeParams { w1, b1, w2, b2, w3, b3 })
    }
}

fn reversed(x: &Array2<f64>) -> Array2<f64> {
    x.slice(s![.., ..;-1]).to_owned()
}

/// Trained density model of one logical scenario's features.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    pub ls_id: String,
    pub hidden: [usize; 2],
    pub layers: Vec<AffineLayer>,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub train_loglik_sorted: Vec<f64>,
}

impl FlowModel {
    pub fn random(ls_id: &str, dim: usize, n_flows: usize, hidden: [usize; 2], rng: &mut impl Rng) -> Self {
        Self {
            ls_id: ls_id.to_string(),
            hidden,
            layers: (0..n_flows).map(|_| AffineLayer::random(dim, hidden, rng)).collect(),
            feature_mean: vec![0.0; dim],
            feature_std: vec![1.0; dim],
            train_loglik_sorted: Vec::new(),
        }
    }

    pub fn identity(ls_id: &str, dim: usize, n_flows: usize, hidden: [usize; 2]) -> Self {
        Self {
            ls_id: ls_id.to_string(),
            hidden,
            layers: (0..n_flows).map(|_| AffineLayer::identity(dim, hidden)).collect(),
            feature_mean: vec![0.0; dim],
            feature_std: vec![1.0; dim],
            train_loglik_sorted: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.feature_mean.len()
    }

    pub fn n_flows(&self) -> usize {
        self.layers.len()
    }

    pub fn standardize(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mean = Array1::from(self.feature_mean.clone());
        let std = Array1::from(self.feature_std.clone());
        (&x - &mean) / &std
    }

    fn log_std_sum(&self) -> f64 {
        self.feature_std.iter().map(|s| s.ln()).sum()
    }

    /// Standardized rows to latent rows plus the summed log-determinant.
    pub fn to_latent(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>) {
        let mut v = x.to_owned();
        let mut total = Array1::zeros(x.nrows());
        for (l, layer) in self.layers.iter().enumerate() {
            let (u, logdet) = layer.inverse(v.view());
            total += &logdet;
            v = if l + 1 < self.layers.len() { reversed(&u) } else { u };
        }
        (v, total)
    }

    /// One latent row back to standardized feature space.
    pub fn from_latent(&self, z: &[f64]) -> Vec<f64> {
        let mut v = z.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if l + 1 < self.layers.len() {
                v.reverse();
            }
            v = layer.forward(&v).0;
        }
        v
    }

    fn base_log_density(z: &Array2<f64>) -> Array1<f64> {
        let d = z.ncols() as f64;
        z.map_axis(Axis(1), |r| -0.5 * r.dot(&r) - 0.5 * d * LN_2PI)
    }

    /// Log-density of standardized rows.
    pub fn log_prob_standardized(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let (z, logdet) = self.to_latent(x);
        Self::base_log_density(&z) + logdet
    }

    /// Log-density of raw feature rows.
    pub fn log_prob_rows(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.log_prob_standardized(self.standardize(x).view()) - self.log_std_sum()
    }

    pub fn log_likelihood_values(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: values.len(),
            });
        }
        let row = ArrayView2::from_shape((1, values.len()), values).expect("one row");
        Ok(self.log_prob_rows(row)[0])
    }

    pub fn log_likelihood(&self, cs: &ConcreteScenario) -> Result<f64> {
        self.log_likelihood_values(&cs.values)
    }

    /// Empirical-CDF rank of `loglik` among the training log-likelihoods,
    /// ties counted half. A model without training scores returns 0.5.
    pub fn nat_norm(&self, loglik: f64) -> f64 {
        let v = &self.train_loglik_sorted;
        if v.is_empty() {
            return 0.5;
        }
        let below = v.partition_point(|&t| t < loglik);
        let upto = v.partition_point(|&t| t <= loglik);
        (below as f64 + 0.5 * (upto - below) as f64) / v.len() as f64
    }

    /// Draws raw feature vectors.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let z: Vec<f64> = (0..self.dim()).map(|_| StandardNormal.sample(rng)).collect();
                self.from_latent(&z)
                    .iter()
                    .zip(self.feature_mean.iter().zip(&self.feature_std))
                    .map(|(x, (m, s))| x * s + m)
                    .collect()
            })
            .collect()
    }

    /// Mean log-likelihood of standardized rows and the gradients of its
    /// negative with respect to every layer's parameters.
    pub(crate) fn batch_grad(&self, x: ArrayView2<f64>) -> (f64, Vec<MadeParams>) {
        let n = x.nrows() as f64;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut v = x.to_owned();
        let mut logdet = Array1::zeros(x.nrows());
        for (l, layer) in self.layers.iter().enumerate() {
            let (u, ld, cache) = layer.inverse_cached(v.view());
            logdet += &ld;
            caches.push(cache);
            v = if l + 1 < self.layers.len() { reversed(&u) } else { u };
        }
        let mean_ll = (Self::base_log_density(&v) + logdet).sum() / n;
        let mut g = v;
        let mut grads = vec![None; self.layers.len()];
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if l + 1 < self.layers.len() {
                g = reversed(&g);
            }
            let (g_x, mut grad) = layer.backward(&caches[l], &g);
            for t in grad.tensors_mut() {
                t.iter_mut().for_each(|x| *x /= n);
            }
            grads[l] = Some(grad);
            g = g_x;
        }
        (mean_ll, grads.into_iter().map(|g| g.expect("every layer")).collect())
    }

    pub fn to_text(&self) -> Result<String> {
        let file = FlowFile {
            format_version: FLOW_FORMAT_VERSION,
            ls_id: self.ls_id.clone(),
            dim: self.dim(),
            n_flows: self.n_flows(),
            hidden: self.hidden.to_vec(),
            alpha_clamp: ALPHA_CLAMP,
            feature_mean: self.feature_mean.clone(),
            feature_std: self.feature_std.clone(),
            train_loglik_sorted: self.train_loglik_sorted.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| {
                    let [w1, b1, w2, b2, w3, b3] = l.params.tensors().map(<[f64]>::to_vec);
                    LayerFile { w1, b1, w2, b2, w3, b3 }
                })
                .collect(),
        };
        toml::to_string(&file).map_err(|e| Error::validation("flow model", e.to_string()))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = toml::from_str(text).map_err(|e| Error::from_toml(text, e))?;
        if header.format_version != FLOW_FORMAT_VERSION {
            return Err(Error::ModelVersion(header.format_version));
        }
        let file: FlowFile = toml::from_str(text).map_err(|e| Error::from_toml(text, e))?;
        file.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct FlowFile {
    format_version: u32,
    ls_id: String,
    dim: usize,
    n_flows: usize,
    hidden: Vec<usize>,
    alpha_clamp: f64,
    feature_mean: Vec<f64>,
    feature_std: Vec<f64>,
    train_loglik_sorted: Vec<f64>,
    #[serde(rename = "layer")]
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    w3: Vec<f64>,
    b3: Vec<f64>,
}

impl FlowFile {
    fn into_model(self) -> Result<FlowModel> {
        let bad = |msg: String| Error::validation("flow model", msg);
        let dim = self.dim;
        if dim == 0 || self.feature_mean.len() != dim || self.feature_std.len() != dim {
            return Err(bad("feature statistics do not match dim".into()));
        }
        if self.feature_std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(bad("feature_std must be positive".into()));
        }
        if self.train_loglik_sorted.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(bad("train_loglik_sorted is not sorted".into()));
        }
        if self.alpha_clamp != ALPHA_CLAMP {
            return Err(bad(format!("alpha_clamp {} unsupported", self.alpha_clamp)));
        }
        let hidden: [usize; 2] = self
            .hidden
            .as_slice()
            .try_into()
            .map_err(|_| bad("hidden must list two widths".into()))?;
        if self.layers.len() != self.n_flows {
            return Err(bad(format!("n_flows {} but {} layers", self.n_flows, self.layers.len())));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, lf) in self.layers.into_iter().enumerate() {
            let mut layer = AffineLayer::identity(dim, hidden);
            let src = [lf.w1, lf.b1, lf.w2, lf.b2, lf.w3, lf.b3];
            let masks = [Some(&layer.masks[0]), None, Some(&layer.masks[1]), None, Some(&layer.masks[2]), None];
            let masks = masks.map(|m| m.map(|m| m.iter().copied().collect::<Vec<f64>>()));
            for ((dst, src), mask) in layer.params.tensors_mut().into_iter().zip(src).zip(masks) {
                if dst.len() != src.len() {
                    return Err(bad(format!("layer {i}: expected {} weights, got {}", dst.len(), src.len())));
                }
                if src.iter().any(|v| !v.is_finite()) {
                    return Err(bad(format!("layer {i}: non-finite weight")));
                }
                if let Some(mask) = mask {
                    if src.iter().zip(&mask).any(|(v, m)| *m == 0.0 && *v != 0.0) {
                        return Err(bad(format!("layer {i}: weight breaks the autoregressive mask")));
                    }
                }
                dst.copy_from_slice(&src);
            }
            layers.push(layer);
        }
        Ok(FlowModel {
            ls_id: self.ls_id,
            hidden,
            layers,
            feature_mean: self.feature_mean,
            feature_std: self.feature_std,
            train_loglik_sorted: self.train_loglik_sorted,
        })
    }
}
