//! Graph convolution over the normalized adjacency, the SGC baseline,
//! row softmax and masked cross-entropy.
//!
//! Layer `i` computes `ρ(Ã · L_{i-1} · W_i)` with no bias; the last layer
//! skips `ρ` and returns raw logits so the softmax can be applied (and
//! interpolated) outside the network.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// Linear layers; used to check the GCN/SGC collapse.
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardMode {
    /// Dropout active, masks drawn from the seed.
    Train {
        seed: u64,
    },
    Eval,
}

/// Input node features.
#[derive(Clone, Debug, PartialEq)]
pub enum NodeFeatures {
    /// `X = I_n`, never materialized.
    Identity(usize),
    Dense(DenseMatrix),
}

impl NodeFeatures {
    pub fn n_rows(&self) -> usize {
        match self {
            NodeFeatures::Identity(n) => *n,
            NodeFeatures::Dense(m) => m.n_rows(),
        }
    }

    pub fn n_cols(&self) -> usize {
        match self {
            NodeFeatures::Identity(n) => *n,
            NodeFeatures::Dense(m) => m.n_cols(),
        }
    }

    /// `X · W`.
    fn times(&self, w: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            NodeFeatures::Identity(n) => {
                if *n != w.n_rows() {
                    return Err(Error::Shape(format!("identity {n} by {}x{}", w.n_rows(), w.n_cols())));
                }
                Ok(w.clone())
            }
            NodeFeatures::Dense(x) => x.matmul(w),
        }
    }

    /// `Xᵀ · G`.
    fn t_times(&self, g: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            NodeFeatures::Identity(_) => Ok(g.clone()),
            NodeFeatures::Dense(x) => x.t_matmul(g),
        }
    }
}

/// Row-stochastic class probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    pub probs: DenseMatrix,
}

impl PredictionSet {
    /// Convex combination `λ·a + (1-λ)·b`.
    pub fn interpolate(lambda: f64, a: &PredictionSet, b: &PredictionSet) -> Result<PredictionSet> {
        if a.probs.shape() != b.probs.shape() {
            return Err(Error::Shape(format!(
                "interpolating {:?} with {:?}",
                a.probs.shape(),
                b.probs.shape()
            )));
        }
        let data = a
            .probs
            .data()
            .iter()
            .zip(b.probs.data())
            .map(|(&x, &y)| lambda * x + (1.0 - lambda) * y)
            .collect();
        Ok(PredictionSet {
            probs: DenseMatrix::from_vec(a.probs.n_rows(), a.probs.n_cols(), data)?,
        })
    }

    /// Predicted class per row; ties go to the lowest class index.
    pub fn argmax(&self) -> Vec<usize> {
        self.probs
            .rows()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |best, (j, &v)| if v > best.1 { (j, v) } else { best },
                    )
                    .0
            })
            .collect()
    }

    pub fn max_row_sum_error(&self) -> f64 {
        self.probs
            .rows()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Numerically stable row softmax.
pub fn softmax_rows(logits: &DenseMatrix) -> PredictionSet {
    let mut probs = logits.clone();
    let n_cols = probs.n_cols();
    if n_cols > 0 {
        for row in probs.data_mut().chunks_mut(n_cols) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
    }
    PredictionSet { probs }
}

/// Pulls `dL/dp` back through the row softmax to `dL/dlogits`.
pub fn softmax_backward(probs: &PredictionSet, d_probs: &DenseMatrix) -> Result<DenseMatrix> {
    if probs.probs.shape() != d_probs.shape() {
        return Err(Error::Shape("softmax backward shape".into()));
    }
    let mut out = d_probs.clone();
    let n_cols = out.n_cols();
    if n_cols == 0 {
        return Ok(out);
    }
    for (row, p) in out.data_mut().chunks_mut(n_cols).zip(probs.probs.rows()) {
        let dot: f64 = row.iter().zip(p).map(|(g, p)| g * p).sum();
        for (g, &p) in row.iter_mut().zip(p) {
            *g = p * (*g - dot);
        }
    }
    Ok(out)
}

pub const PROB_FLOOR: f64 = 1e-12;

fn masked_rows(labels: &[i64], mask: &[bool], n_rows: usize) -> Result<Vec<usize>> {
    if labels.len() != n_rows || mask.len() != n_rows {
        return Err(Error::Shape(format!(
            "{} labels / {} mask entries for {n_rows} rows",
            labels.len(),
            mask.len()
        )));
    }
    let rows: Vec<usize> = (0..n_rows).filter(|&i| mask[i]).collect();
    if rows.is_empty() {
        return Err(Error::Argument("empty loss mask".into()));
    }
    if let Some(&r) = rows.iter().find(|&&r| labels[r] < 0) {
        return Err(Error::Argument(format!("masked row {r} is unlabeled")));
    }
    Ok(rows)
}

/// Mean negative log-probability of the true class over masked rows.
pub fn cross_entropy_masked(probs: &PredictionSet, labels: &[i64], mask: &[bool]) -> Result<f64> {
    let rows = masked_rows(labels, mask, probs.probs.n_rows())?;
    let total: f64 = rows
        .iter()
        .map(|&r| -probs.probs.get(r, labels[r] as usize).max(PROB_FLOOR).ln())
        .sum();
    Ok(total / rows.len() as f64)
}

/// Gradient of [`cross_entropy_masked`] with respect to the probabilities.
pub fn cross_entropy_grad(probs: &PredictionSet, labels: &[i64], mask: &[bool]) -> Result<DenseMatrix> {
    let rows = masked_rows(labels, mask, probs.probs.n_rows())?;
    let (n, c) = probs.probs.shape();
    let mut grad = DenseMatrix::zeros(n, c);
    let scale = 1.0 / rows.len() as f64;
    for &r in &rows {
        let y = labels[r] as usize;
        let p = probs.probs.get(r, y);
        if p > PROB_FLOOR {
            grad.set(r, y, -scale / p);
        }
    }
    Ok(grad)
}

/// Glorot-uniform matrix: entries in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> DenseMatrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    DenseMatrix::from_fn(fan_in, fan_out, |_, _| dist.sample(rng))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnModel {
    pub layers: Vec<DenseMatrix>,
    pub activation: Activation,
    pub dropout: f64,
}

/// What a layer saw as input, after dropout.
#[derive(Clone, Debug)]
enum LayerInput {
    /// Identity features; `Some` holds the per-node dropout scale.
    Identity(Option<Vec<f64>>),
    Dense {
        dropped: DenseMatrix,
        mask: Option<Vec<f64>>,
    },
}

/// Intermediates kept by [`GcnModel::forward`] for [`GcnModel::backward`].
#[derive(Clone, Debug)]
pub struct GcnCache {
    inputs: Vec<LayerInput>,
    pre_activations: Vec<DenseMatrix>,
    shapes: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnGradients {
    pub weights: Vec<DenseMatrix>,
    /// Gradient for the first `input_rows` rows of the input features.
    pub input: Option<DenseMatrix>,
}

fn dropout_mask(len: usize, rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = crate::seeded_rng(seed);
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

impl GcnModel {
    /// Glorot-initialized model for the layer widths `[input, hidden.., classes]`.
    pub fn init(widths: &[usize], seed: u64, activation: Activation, dropout: f64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Argument("a GCN needs at least one layer".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Argument(format!("dropout {dropout} outside [0, 1)")));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                glorot_uniform(
                    w[0],
                    w[1],
                    &mut crate::seeded_rng(crate::derive_seed(seed, &[i as u64])),
                )
            })
            .collect();
        Ok(Self {
            layers,
            activation,
            dropout,
        })
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].n_rows()
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().unwrap().n_cols()
    }

    /// Forward pass over all nodes, returning logits and the backward cache.
    pub fn forward(
        &self,
        adjacency: &SparseMatrix,
        features: &NodeFeatures,
        mode: ForwardMode,
    ) -> Result<(DenseMatrix, GcnCache)> {
        let n = adjacency.n_rows();
        if features.n_rows() != n || adjacency.n_cols() != n {
            return Err(Error::Shape(format!(
                "{} feature rows for a {}x{} adjacency",
                features.n_rows(),
                adjacency.n_rows(),
                adjacency.n_cols()
            )));
        }
        if features.n_cols() != self.input_width() {
            return Err(Error::Shape(format!(
                "feature width {} but first layer expects {}",
                features.n_cols(),
                self.input_width()
            )));
        }
        for w in self.layers.windows(2) {
            if w[0].n_cols() != w[1].n_rows() {
                return Err(Error::Shape("layer widths do not chain".into()));
            }
        }

        let mut cache = GcnCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(self.layers.len()),
            shapes: self.layers.iter().map(DenseMatrix::shape).collect(),
        };
        let last = self.layers.len() - 1;
        let mut hidden: Option<DenseMatrix> = None;
        for (l, weight) in self.layers.iter().enumerate() {
            let mask_seed = match mode {
                ForwardMode::Train { seed } if self.dropout > 0.0 => Some(crate::derive_seed(seed, &[l as u64])),
                _ => None,
            };
            let (projected, input) = match (hidden.take(), l) {
                (None, 0) => match features {
                    NodeFeatures::Identity(_) => {
                        let mask = mask_seed.map(|s| dropout_mask(n, self.dropout, s));
                        let mut p = weight.clone();
                        if let Some(mask) = &mask {
                            for (i, &m) in mask.iter().enumerate() {
                                p.row_mut(i).iter_mut().for_each(|v| *v *= m);
                            }
                        }
                        (p, LayerInput::Identity(mask))
                    }
                    NodeFeatures::Dense(x) => self.dense_input(x.clone(), weight, mask_seed)?,
                },
                (Some(h), _) => self.dense_input(h, weight, mask_seed)?,
                (None, _) => unreachable!(),
            };
            let pre = adjacency.mul_dense(&projected)?;
            let out = if l == last {
                pre.clone()
            } else {
                let act = self.activation;
                pre.map(|v| act.apply(v))
            };
            cache.inputs.push(input);
            cache.pre_activations.push(pre);
            hidden = Some(out);
        }
        Ok((hidden.unwrap(), cache))
    }

    fn dense_input(
        &self,
        mut h: DenseMatrix,
        weight: &DenseMatrix,
        mask_seed: Option<u64>,
    ) -> Result<(DenseMatrix, LayerInput)> {
        let mask = mask_seed.map(|s| dropout_mask(h.data().len(), self.dropout, s));
        if let Some(mask) = &mask {
            h.data_mut().iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
        }
        let projected = h.matmul(weight)?;
        Ok((projected, LayerInput::Dense { dropped: h, mask }))
    }

    /// Reverse pass. `input_rows` selects how many leading rows of the input
    /// feature gradient to return (0 for none).
    pub fn backward(
        &self,
        adjacency: &SparseMatrix,
        cache: &GcnCache,
        d_logits: &DenseMatrix,
        input_rows: usize,
    ) -> Result<GcnGradients> {
        let shapes: Vec<_> = self.layers.iter().map(DenseMatrix::shape).collect();
        if cache.shapes != shapes || cache.inputs.len() != self.layers.len() {
            return Err(Error::Internal("GCN cache does not match the model".into()));
        }
        let last = self.layers.len() - 1;
        if d_logits.shape() != cache.pre_activations[last].shape() {
            return Err(Error::Internal(
                "upstream gradient does not match the cached logits".into(),
            ));
        }
        let adj_t = adjacency.transpose();
        let mut weights = vec![DenseMatrix::zeros(0, 0); self.layers.len()];
        let mut input = None;
        let mut d_out = d_logits.clone();
        for l in (0..=last).rev() {
            let d_pre = if l == last {
                d_out
            } else {
                let act = self.activation;
                let pre = &cache.pre_activations[l];
                let data = d_out
                    .data()
                    .iter()
                    .zip(pre.data())
                    .map(|(&g, &p)| g * act.derivative(p))
                    .collect();
                DenseMatrix::from_vec(pre.n_rows(), pre.n_cols(), data)?
            };
            let d_proj = adj_t.mul_dense(&d_pre)?;
            let weight = &self.layers[l];
            match &cache.inputs[l] {
                LayerInput::Identity(mask) => {
                    let mut dw = d_proj;
                    if let Some(mask) = mask {
                        for (i, &m) in mask.iter().enumerate() {
                            dw.row_mut(i).iter_mut().for_each(|v| *v *= m);
                        }
                    }
                    weights[l] = dw;
                    d_out = DenseMatrix::zeros(0, 0);
                }
                LayerInput::Dense { dropped, mask } => {
                    weights[l] = dropped.t_matmul(&d_proj)?;
                    let rows = if l == 0 { input_rows } else { d_proj.n_rows() };
                    if rows == 0 {
                        d_out = DenseMatrix::zeros(0, 0);
                        continue;
                    }
                    let mut d_in = d_proj.top_rows(rows).matmul_t(weight)?;
                    if let Some(mask) = mask {
                        d_in.data_mut().iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
                    }
                    if l == 0 {
                        input = Some(d_in);
                        d_out = DenseMatrix::zeros(0, 0);
                    } else {
                        d_out = d_in;
                    }
                }
            }
        }
        Ok(GcnGradients { weights, input })
    }
}

/// Simplified graph convolution: `Ã^K · X · W`, no nonlinearity.
#[derive(Clone, Debug, PartialEq)]
pub struct SgcModel {
    pub k: usize,
    pub weight: DenseMatrix,
}

/// `Ã^K · X · W` by `K` repeated sparse products.
pub fn sgc_forward(
    adjacency: &SparseMatrix,
    features: &NodeFeatures,
    k: usize,
    weight: &DenseMatrix,
) -> Result<DenseMatrix> {
    if k < 1 {
        return Err(Error::Argument("SGC needs K >= 1".into()));
    }
    if features.n_rows() != adjacency.n_cols() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} adjacency columns",
            features.n_rows(),
            adjacency.n_cols()
        )));
    }
    if features.n_cols() != weight.n_rows() {
        return Err(Error::Shape(format!(
            "feature width {} vs weight {}x{}",
            features.n_cols(),
            weight.n_rows(),
            weight.n_cols()
        )));
    }
    let mut out = features.times(weight)?;
    for _ in 0..k {
        out = adjacency.mul_dense(&out)?;
    }
    Ok(out)
}

impl SgcModel {
    pub fn init(in_width: usize, n_classes: usize, k: usize, seed: u64) -> Result<Self> {
        if k < 1 {
            return Err(Error::Argument("SGC needs K >= 1".into()));
        }
        Ok(Self {
            k,
            weight: glorot_uniform(
                in_width,
                n_classes,
                &mut crate::seeded_rng(crate::derive_seed(seed, &[0])),
            ),
        })
    }

    pub fn forward(&self, adjacency: &SparseMatrix, features: &NodeFeatures) -> Result<DenseMatrix> {
        sgc_forward(adjacency, features, self.k, &self.weight)
    }

    /// Returns `(dW, dX rows)`.
    pub fn backward(
        &self,
        adjacency: &SparseMatrix,
        features: &NodeFeatures,
        d_logits: &DenseMatrix,
        input_rows: usize,
    ) -> Result<(DenseMatrix, Option<DenseMatrix>)> {
        let adj_t = adjacency.transpose();
        let mut g = d_logits.clone();
        for _ in 0..self.k {
            g = adj_t.mul_dense(&g)?;
        }
        let dw = features.t_times(&g)?;
        let dx = if input_rows > 0 {
            Some(g.top_rows(input_rows).matmul_t(&self.weight)?)
        } else {
            None
        };
        Ok((dw, dx))
    }
}

/// Either graph network behind a common interface.
#[derive(Clone, Debug, PartialEq)]
pub enum GraphModel {
    Gcn(GcnModel),
    Sgc(SgcModel),
}

/// Cache for [`GraphModel::backward`].
#[derive(Clone, Debug)]
pub enum GraphCache {
    Gcn(GcnCache),
    Sgc,
}

impl GraphModel {
    pub fn input_width(&self) -> usize {
        match self {
            GraphModel::Gcn(m) => m.input_width(),
            GraphModel::Sgc(m) => m.weight.n_rows(),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            GraphModel::Gcn(m) => m.n_classes(),
            GraphModel::Sgc(m) => m.weight.n_cols(),
        }
    }

    pub fn weights(&self) -> Vec<&DenseMatrix> {
        match self {
            GraphModel::Gcn(m) => m.layers.iter().collect(),
            GraphModel::Sgc(m) => vec![&m.weight],
        }
    }

    pub fn weights_mut(&mut self) -> Vec<&mut DenseMatrix> {
        match self {
            GraphModel::Gcn(m) => m.layers.iter_mut().collect(),
            GraphModel::Sgc(m) => vec![&mut m.weight],
        }
    }

    pub fn forward(
        &self,
        adjacency: &SparseMatrix,
        features: &NodeFeatures,
        mode: ForwardMode,
    ) -> Result<(DenseMatrix, GraphCache)> {
        match self {
            GraphModel::Gcn(m) => m
                .forward(adjacency, features, mode)
                .map(|(l, c)| (l, GraphCache::Gcn(c))),
            GraphModel::Sgc(m) => m.forward(adjacency, features).map(|l| (l, GraphCache::Sgc)),
        }
    }

    pub fn backward(
        &self,
        adjacency: &SparseMatrix,
        features: &NodeFeatures,
        cache: &GraphCache,
        d_logits: &DenseMatrix,
        input_rows: usize,
    ) -> Result<GcnGradients> {
        match (self, cache) {
            (GraphModel::Gcn(m), GraphCache::Gcn(c)) => m.backward(adjacency, c, d_logits, input_rows),
            (GraphModel::Sgc(m), GraphCache::Sgc) => {
                let (dw, input) = m.backward(adjacency, features, d_logits, input_rows)?;
                Ok(GcnGradients {
                    weights: vec![dw],
                    input,
                })
            }
            _ => Err(Error::Internal("cache kind does not match the model".into())),
        }
    }
}
