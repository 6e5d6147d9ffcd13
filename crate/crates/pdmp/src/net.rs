//! Fully-connected occupancy classifier: tanh hidden layers, sigmoid output,
//! batched forward passes and analytic gradients of the output with respect
//! to the input coordinates.
//!
//! A trained net is immutable; `forward_batch` and `input_grad_batch` are
//! pure and safe to call concurrently. Training runs on a single thread so
//! that a fixed seed reproduces weights bitwise.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::geometry::OccupancyDataset;

/// Layer sizes: `input_dim` inputs, tanh hidden layers, one sigmoid output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetArch {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
}

impl NetArch {
    pub fn new(input_dim: usize, hidden: Vec<usize>) -> Result<Self> {
        let arch = Self { input_dim, hidden };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidArch("input_dim must be >= 1".into()));
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::InvalidArch(
                "need at least one hidden layer, all widths >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Dense layer, row-major weights (`rows × cols`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            w: vec![0.0; rows * cols],
            b: vec![0.0; rows],
        }
    }

    fn check(&self) -> Result<()> {
        if self.w.len() != self.rows * self.cols || self.b.len() != self.rows {
            return Err(Error::InvalidArch("layer shape mismatch".into()));
        }
        if self.w.iter().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArch("non-finite weight".into()));
        }
        Ok(())
    }

    /// out[r] = b[r] + sum_k w[r,k] * input[k]
    #[inline]
    fn affine(&self, input: &[f64], out: &mut [f64]) {
        for r in 0..self.rows {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let mut acc = self.b[r];
            for (wk, xk) in row.iter().zip(input) {
                acc += wk * xk;
            }
            out[r] = acc;
        }
    }
}

/// Input normalization applied before the first layer:
/// `x_norm = (x - offset) * scale`, chosen to map bounds onto [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self {
            offset: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn from_bounds(bounds: &crate::geometry::Aabb) -> Self {
        let offset: Vec<f64> = bounds
            .min
            .iter()
            .zip(&bounds.max)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect();
        let scale: Vec<f64> = bounds
            .min
            .iter()
            .zip(&bounds.max)
            .map(|(lo, hi)| if hi > lo { 2.0 / (hi - lo) } else { 1.0 })
            .collect();
        Self { offset, scale }
    }
}

const MODEL_VERSION: u32 = 1;

// Keep sigmoid outputs strictly inside (0, 1).
const P_MIN: f64 = 1e-300;
const P_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

#[inline]
fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(P_MIN, P_MAX)
}

/// The classifier `f(x) = p(occupied | x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyNet {
    arch: NetArch,
    norm: Normalization,
    layers: Vec<Layer>,
}

/// On-disk model format; `version` is required.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    arch: NetArch,
    norm: Normalization,
    layers: Vec<Layer>,
}

impl OccupancyNet {
    /// Builds a net from raw layers (last layer must have one row). The
    /// hidden-layer count may be zero here; that path exists for tests and
    /// for loading files, not for `init_net`.
    pub fn from_layers(layers: Vec<Layer>, norm: Option<Normalization>) -> Result<Self> {
        if layers.is_empty() || layers.last().unwrap().rows != 1 {
            return Err(Error::InvalidArch("last layer must have one row".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            layer.check()?;
            if i > 0 && layer.cols != layers[i - 1].rows {
                return Err(Error::InvalidArch("layer widths do not chain".into()));
            }
        }
        let input_dim = layers[0].cols;
        let hidden: Vec<usize> = layers[..layers.len() - 1].iter().map(|l| l.rows).collect();
        Ok(Self {
            arch: NetArch { input_dim, hidden },
            norm: norm.unwrap_or_else(|| Normalization::identity(input_dim)),
            layers,
        })
    }

    /// All-zero weights; `forward` is identically 0.5. Test constructor.
    pub fn zeros(arch: &NetArch) -> Result<Self> {
        arch.validate()?;
        let mut dims = vec![arch.input_dim];
        dims.extend_from_slice(&arch.hidden);
        dims.push(1);
        let layers = dims
            .windows(2)
            .map(|w| Layer::zeros(w[1], w[0]))
            .collect();
        Self::from_layers(layers, None)
    }

    pub fn arch(&self) -> &NetArch {
        &self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    pub fn set_normalization(&mut self, norm: Normalization) {
        assert_eq!(norm.offset.len(), self.arch.input_dim);
        assert_eq!(norm.scale.len(), self.arch.input_dim);
        self.norm = norm;
    }

    fn check_batch(&self, points: &[f64]) -> Result<usize> {
        let d = self.arch.input_dim;
        if points.len() % d != 0 {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: points.len() % d,
            });
        }
        Ok(points.len() / d)
    }

    /// Normalized inputs for the whole batch, row-major `count × d`.
    fn normalized(&self, points: &[f64], count: usize) -> Vec<f64> {
        let d = self.arch.input_dim;
        let mut a = vec![0.0; count * d];
        for s in 0..count {
            for j in 0..d {
                a[s * d + j] = (points[s * d + j] - self.norm.offset[j]) * self.norm.scale[j];
            }
        }
        a
    }

    /// Batch-major affine + optional tanh for one layer. Row accumulation
    /// order is fixed, so every point's result is independent of what else
    /// is in the batch.
    fn layer_forward(layer: &Layer, input: &[f64], out: &mut Vec<f64>, count: usize, tanh: bool) {
        let (rows, cols) = (layer.rows, layer.cols);
        out.clear();
        out.resize(count * rows, 0.0);
        for s in 0..count {
            let a = &input[s * cols..(s + 1) * cols];
            let z = &mut out[s * rows..(s + 1) * rows];
            for (r, zr) in z.iter_mut().enumerate() {
                let wr = &layer.w[r * cols..(r + 1) * cols];
                let mut acc = layer.b[r];
                for (wk, ak) in wr.iter().zip(a) {
                    acc += wk * ak;
                }
                *zr = if tanh { acc.tanh() } else { acc };
            }
        }
    }

    /// Occupancy probabilities for a flat batch (`count × input_dim`).
    /// The batch result equals per-point evaluation, elementwise and exactly.
    pub fn forward_batch(&self, points: &[f64]) -> Result<Vec<f64>> {
        let count = self.check_batch(points)?;
        let last = self.layers.len() - 1;
        let mut cur = self.normalized(points, count);
        let mut next = Vec::new();
        for (li, layer) in self.layers.iter().enumerate() {
            Self::layer_forward(layer, &cur, &mut next, count, li < last);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur.iter().map(|z| sigmoid(*z)).collect())
    }

    /// Analytic gradient of the output probability with respect to the input
    /// coordinates, one `input_dim` row per point, via reverse-mode
    /// accumulation through the sigmoid/tanh layers.
    pub fn input_grad_batch(&self, points: &[f64]) -> Result<Vec<f64>> {
        self.forward_and_input_grad_batch(points).map(|(_, g)| g)
    }

    /// One shared pass returning both probabilities and input gradients;
    /// the values match `forward_batch` and `input_grad_batch` exactly.
    pub fn forward_and_input_grad_batch(&self, points: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let count = self.check_batch(points)?;
        let d = self.arch.input_dim;
        let n_layers = self.layers.len();
        // Forward, keeping every layer's activations for the whole batch.
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        acts.push(self.normalized(points, count));
        for (li, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::new();
            Self::layer_forward(layer, &acts[li], &mut out, count, li < n_layers - 1);
            acts.push(out);
        }
        // Seed with sigmoid'(z) and walk the layers backward; `g` holds
        // d p / d (activations feeding layer li).
        let probs: Vec<f64> = acts[n_layers].iter().map(|z| sigmoid(*z)).collect();
        let mut g: Vec<f64> = probs.iter().map(|p| p * (1.0 - p)).collect();
        let mut g_next = Vec::new();
        for li in (0..n_layers).rev() {
            let layer = &self.layers[li];
            let (rows, cols) = (layer.rows, layer.cols);
            g_next.clear();
            g_next.resize(count * cols, 0.0);
            for s in 0..count {
                let gs = &g[s * rows..(s + 1) * rows];
                let go = &mut g_next[s * cols..(s + 1) * cols];
                for (r, gr) in gs.iter().enumerate() {
                    let wr = &layer.w[r * cols..(r + 1) * cols];
                    for (ok, wk) in go.iter_mut().zip(wr) {
                        *ok += wk * gr;
                    }
                }
                if li > 0 {
                    // Chain through the tanh that produced these inputs.
                    let a = &acts[li][s * cols..(s + 1) * cols];
                    for (ok, ak) in go.iter_mut().zip(a) {
                        *ok *= 1.0 - ak * ak;
                    }
                }
            }
            std::mem::swap(&mut g, &mut g_next);
        }
        let mut out = g;
        for s in 0..count {
            for j in 0..d {
                out[s * d + j] *= self.norm.scale[j];
            }
        }
        Ok((probs, out))
    }

    /// Fraction of points whose thresholded prediction matches the label.
    pub fn accuracy(&self, points: &[f64], labels: &[u8]) -> Result<f64> {
        let probs = self.forward_batch(points)?;
        if probs.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                got: probs.len(),
            });
        }
        if labels.is_empty() {
            return Ok(0.0);
        }
        let hits = probs
            .iter()
            .zip(labels)
            .filter(|(p, &y)| (**p >= 0.5) == (y == 1))
            .count();
        Ok(hits as f64 / labels.len() as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            version: MODEL_VERSION,
            arch: self.arch.clone(),
            norm: self.norm.clone(),
            layers: self.layers.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.version != MODEL_VERSION {
            return Err(Error::ModelVersion(file.version));
        }
        let net = Self::from_layers(file.layers, Some(file.norm))?;
        if net.arch != file.arch {
            return Err(Error::InvalidArch(
                "declared arch does not match layer shapes".into(),
            ));
        }
        Ok(net)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_json()?)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Fresh random net: weights uniform in `±1/sqrt(fan_in)`, zero biases.
/// Deterministic given the seed.
pub fn init_net(arch: &NetArch, seed: u64) -> Result<OccupancyNet> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = vec![arch.input_dim];
    dims.extend_from_slice(&arch.hidden);
    dims.push(1);
    let layers = dims
        .windows(2)
        .map(|wnd| {
            let (cols, rows) = (wnd[0], wnd[1]);
            let bound = 1.0 / (cols as f64).sqrt();
            Layer {
                rows,
                cols,
                w: (0..rows * cols)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect(),
                b: vec![0.0; rows],
            }
        })
        .collect();
    OccupancyNet::from_layers(layers, None)
}

/// First-order stochastic training settings (Adam-style smoothing).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            learning_rate: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 || !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(
                "epochs >= 1, batch_size >= 1, learning_rate > 0 required".into(),
            ));
        }
        Ok(())
    }
}

/// Minimizes mean binary cross-entropy with mini-batch Adam. Inputs are
/// normalized to [-1, 1] by the dataset bounds; the constants are stored
/// with the net. When one class holds less than 10% of the data, the loss
/// terms are reweighted by inverse class frequency.
pub fn train_net(
    dataset: &OccupancyDataset,
    arch: &NetArch,
    cfg: &TrainConfig,
) -> Result<OccupancyNet> {
    train_net_logged(dataset, arch, cfg).map(|(net, _)| net)
}

/// As [`train_net`], also returning the mean training loss per epoch.
pub fn train_net_logged(
    dataset: &OccupancyDataset,
    arch: &NetArch,
    cfg: &TrainConfig,
) -> Result<(OccupancyNet, Vec<f64>)> {
    cfg.validate()?;
    arch.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if arch.input_dim != dataset.dim {
        return Err(Error::DimensionMismatch {
            expected: dataset.dim,
            got: arch.input_dim,
        });
    }
    let pos = dataset.positive_fraction();
    if pos == 0.0 || pos == 1.0 {
        return Err(Error::SingleClassDataset);
    }
    let (w_pos, w_neg) = if !(0.1..=0.9).contains(&pos) {
        (0.5 / pos, 0.5 / (1.0 - pos))
    } else {
        (1.0, 1.0)
    };

    let mut net = init_net(arch, derive_seed(cfg.seed, 0))?;
    net.set_normalization(Normalization::from_bounds(&dataset.bounds));
    let mut opt = Adam::new(&net.layers, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));

    let n = dataset.len();
    let d = dataset.dim;
    let mut order: Vec<usize> = (0..n).collect();
    let mut scratch = TrainScratch::new(&net);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _epoch in 0..cfg.epochs {
        // Fisher-Yates shuffle, deterministic for the seed.
        for i in (1..n).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            scratch.zero_grads(&net);
            let mut batch_loss = 0.0;
            for &idx in chunk {
                let x = &dataset.points[idx * d..(idx + 1) * d];
                let y = dataset.labels[idx] as f64;
                let w = if dataset.labels[idx] == 1 { w_pos } else { w_neg };
                batch_loss += scratch.forward_backward(&net, x, y, w);
            }
            loss_sum += batch_loss;
            let inv = 1.0 / chunk.len() as f64;
            opt.step(&mut net.layers, &mut scratch.grads, inv);
        }
        epoch_losses.push(loss_sum / n as f64);
    }
    Ok((net, epoch_losses))
}

/// Per-layer gradient buffers plus forward activations for one sample.
struct TrainScratch {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_next: Vec<f64>,
    grads: Vec<Layer>,
}

impl TrainScratch {
    fn new(net: &OccupancyNet) -> Self {
        let mut acts = vec![vec![0.0; net.arch.input_dim]];
        for l in &net.layers {
            acts.push(vec![0.0; l.rows]);
        }
        let max_w = net
            .layers
            .iter()
            .map(|l| l.rows.max(l.cols))
            .max()
            .unwrap();
        Self {
            acts,
            delta: vec![0.0; max_w],
            delta_next: vec![0.0; max_w],
            grads: net
                .layers
                .iter()
                .map(|l| Layer::zeros(l.rows, l.cols))
                .collect(),
        }
    }

    fn zero_grads(&mut self, net: &OccupancyNet) {
        for (g, l) in self.grads.iter_mut().zip(&net.layers) {
            g.w[..l.rows * l.cols].fill(0.0);
            g.b[..l.rows].fill(0.0);
        }
    }

    /// Accumulates weight gradients for one `(x, y)` pair; returns the
    /// weighted BCE loss term (stable logit form).
    fn forward_backward(&mut self, net: &OccupancyNet, x: &[f64], y: f64, w: f64) -> f64 {
        let n_layers = net.layers.len();
        for j in 0..x.len() {
            self.acts[0][j] = (x[j] - net.norm.offset[j]) * net.norm.scale[j];
        }
        for (li, layer) in net.layers.iter().enumerate() {
            let (prev, rest) = self.acts.split_at_mut(li + 1);
            layer.affine(&prev[li], &mut rest[0][..layer.rows]);
            if li < n_layers - 1 {
                for v in &mut rest[0][..layer.rows] {
                    *v = v.tanh();
                }
            }
        }
        let z = self.acts[n_layers][0];
        let p = sigmoid(z);
        let loss = w * (z.max(0.0) - y * z + (-z.abs()).exp().ln_1p());

        self.delta[0] = w * (p - y);
        for li in (0..n_layers).rev() {
            let layer = &net.layers[li];
            let grad = &mut self.grads[li];
            let prev = &self.acts[li];
            for r in 0..layer.rows {
                let dr = self.delta[r];
                grad.b[r] += dr;
                let grow = &mut grad.w[r * layer.cols..(r + 1) * layer.cols];
                for (gk, pk) in grow.iter_mut().zip(prev) {
                    *gk += dr * pk;
                }
            }
            if li > 0 {
                for k in 0..layer.cols {
                    let mut acc = 0.0;
                    for r in 0..layer.rows {
                        acc += layer.w[r * layer.cols + k] * self.delta[r];
                    }
                    self.delta_next[k] = acc * (1.0 - prev[k] * prev[k]);
                }
                std::mem::swap(&mut self.delta, &mut self.delta_next);
            }
        }
        loss
    }
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    t: u64,
    m: Vec<(Vec<f64>, Vec<f64>)>,
    v: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adam {
    const EPS: f64 = 1e-8;

    fn new(layers: &[Layer], cfg: &TrainConfig) -> Self {
        let shape = |l: &Layer| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]);
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            t: 0,
            m: layers.iter().map(shape).collect(),
            v: layers.iter().map(shape).collect(),
        }
    }

    fn step(&mut self, layers: &mut [Layer], grads: &mut [Layer], grad_scale: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);

        #[allow(clippy::too_many_arguments)]
        fn update(
            param: &mut [f64],
            grad: &[f64],
            m: &mut [f64],
            v: &mut [f64],
            lr: f64,
            beta1: f64,
            beta2: f64,
            bc1: f64,
            bc2: f64,
            grad_scale: f64,
        ) {
            for i in 0..param.len() {
                let gi = grad[i] * grad_scale;
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                param[i] -= lr * mhat / (vhat.sqrt() + Adam::EPS);
            }
        }

        for (li, layer) in layers.iter_mut().enumerate() {
            let (mw, mb) = &mut self.m[li];
            let (vw, vb) = &mut self.v[li];
            let g = &grads[li];
            update(
                &mut layer.w, &g.w, mw, vw, self.lr, self.beta1, self.beta2, bc1, bc2, grad_scale,
            );
            update(
                &mut layer.b, &g.b, mb, vb, self.lr, self.beta1, self.beta2, bc1, bc2, grad_scale,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_dataset, Aabb, Environment, Obstacle};
    use proptest::prelude::*;
    #[allow(unused_imports)]
    use rand::Rng;

    fn small_env() -> Environment {
        Environment::new(
            "t",
            Aabb::new(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap(),
            vec![Obstacle::Box {
                min: vec![0.0, 0.0],
                max: vec![1.0, 1.0],
            }],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn init_shapes() {
        let arch = NetArch::new(2, vec![64, 64]).unwrap();
        let net = init_net(&arch, 0).unwrap();
        let shapes: Vec<(usize, usize)> = net.layers.iter().map(|l| (l.rows, l.cols)).collect();
        assert_eq!(shapes, vec![(64, 2), (64, 64), (1, 64)]);
        for l in &net.layers {
            assert_eq!(l.b.len(), l.rows);
        }
    }

    #[test]
    fn init_deterministic() {
        let arch = NetArch::new(2, vec![8, 8]).unwrap();
        let a = init_net(&arch, 42).unwrap();
        let b = init_net(&arch, 42).unwrap();
        assert_eq!(a, b);
        let c = init_net(&arch, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_net_outputs_half() {
        let arch = NetArch::new(2, vec![4]).unwrap();
        let net = OccupancyNet::zeros(&arch).unwrap();
        let out = net.forward_batch(&[0.3, -1.0, 5.0, 2.0]).unwrap();
        assert_eq!(out, vec![0.5, 0.5]);
        let g = net.input_grad_batch(&[0.3, -1.0]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn empty_batch() {
        let arch = NetArch::new(2, vec![4]).unwrap();
        let net = init_net(&arch, 0).unwrap();
        assert!(net.forward_batch(&[]).unwrap().is_empty());
        assert!(net.input_grad_batch(&[]).unwrap().is_empty());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let arch = NetArch::new(2, vec![4]).unwrap();
        let net = init_net(&arch, 0).unwrap();
        assert!(matches!(
            net.forward_batch(&[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_linear_layer_closed_form() {
        // f(x) = sigmoid(w . x + b); grad = sigma'(z) * w.
        let w = [0.7, -1.3];
        let b = 0.4;
        let net = OccupancyNet::from_layers(
            vec![Layer {
                rows: 1,
                cols: 2,
                w: w.to_vec(),
                b: vec![b],
            }],
            None,
        )
        .unwrap();
        let x = [0.2, 0.9];
        let z = w[0] * x[0] + w[1] * x[1] + b;
        let p = 1.0 / (1.0 + (-z).exp());
        let got = net.forward_batch(&x).unwrap();
        assert!((got[0] - p).abs() < 1e-15);
        let g = net.input_grad_batch(&x).unwrap();
        assert!((g[0] - p * (1.0 - p) * w[0]).abs() < 1e-15);
        assert!((g[1] - p * (1.0 - p) * w[1]).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let arch = NetArch::new(3, vec![16, 16]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..20 {
            let net = init_net(&arch, trial).unwrap();
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let g = net.input_grad_batch(&x).unwrap();
            let h = 1e-4;
            for j in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (net.forward_batch(&xp).unwrap()[0] - net.forward_batch(&xm).unwrap()[0])
                    / (2.0 * h);
                let denom = g[j].abs().max(1e-8);
                assert!(
                    ((g[j] - fd) / denom).abs() < 1e-3,
                    "trial {trial} dim {j}: {} vs {fd}",
                    g[j]
                );
            }
        }
    }

    #[test]
    fn json_round_trip_and_version() {
        let arch = NetArch::new(2, vec![6, 5]).unwrap();
        let net = init_net(&arch, 17).unwrap();
        let text = net.to_json().unwrap();
        let back = OccupancyNet::from_json(&text).unwrap();
        assert_eq!(net, back);
        let bad = text.replace("\"version\":1", "\"version\":9");
        assert!(matches!(
            OccupancyNet::from_json(&bad),
            Err(Error::ModelVersion(9))
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let env = small_env();
        let ds = generate_dataset(&env, 400, 3);
        let arch = NetArch::new(2, vec![8]).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            ..Default::default()
        };
        let a = train_net(&ds, &arch, &cfg).unwrap();
        let b = train_net(&ds, &arch, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_rejects_single_class() {
        let env = Environment::new(
            "open",
            Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            vec![Obstacle::Sphere {
                center: vec![-0.4, -0.4],
                radius: 0.57,
            }],
            vec![],
        )
        .unwrap();
        // The sphere only grazes the corner; a tiny dataset sees one class.
        let ds = generate_dataset(&env, 20, 1);
        assert_eq!(ds.positive_fraction(), 0.0);
        let arch = NetArch::new(2, vec![4]).unwrap();
        assert!(matches!(
            train_net(&ds, &arch, &TrainConfig::default()),
            Err(Error::SingleClassDataset)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn outputs_strictly_inside_unit_interval(
            seed in 0u64..500,
            x in -50.0f64..50.0,
            y in -50.0f64..50.0,
        ) {
            let arch = NetArch::new(2, vec![6, 6]).unwrap();
            let net = init_net(&arch, seed).unwrap();
            let p = net.forward_batch(&[x, y]).unwrap()[0];
            prop_assert!(p > 0.0 && p < 1.0);
        }

        #[test]
        fn batch_equals_per_point(seed in 0u64..500) {
            let arch = NetArch::new(2, vec![7, 5]).unwrap();
            let net = init_net(&arch, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let pts: Vec<f64> = (0..20).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let batch_f = net.forward_batch(&pts).unwrap();
            let batch_g = net.input_grad_batch(&pts).unwrap();
            for i in 0..10 {
                let single = &pts[i * 2..(i + 1) * 2];
                prop_assert_eq!(net.forward_batch(single).unwrap()[0], batch_f[i]);
                prop_assert_eq!(&net.input_grad_batch(single).unwrap()[..], &batch_g[i * 2..(i + 1) * 2]);
            }
        }
    }
}
