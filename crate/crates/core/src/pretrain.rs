//! Teacher pretraining on synthetic Gaussian blobs.
//!
//! The zero-shot setting needs a trained teacher but no training data at
//! distillation time. At desk scale the teacher learns a balanced k-class
//! Gaussian-blobs problem: class means drawn uniformly from [−1, 1]^d, points
//! scattered around them, minibatch SGD on the mean squared error between the
//! softmax output and the one-hot target. Training stops early once the
//! target train accuracy is reached and fails loudly if it never is.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{CoreError, Result};
use crate::models::{
    collect_grads, init_mlp_params, mlp_forward, mlp_probs, Head, MlpDims, TeacherNet,
};
use crate::real::{lit, Real};
use crate::rng::{stream, Domain};
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Synthetic classification dataset.
#[derive(Debug, Clone)]
pub struct Blobs<T: Real = f64> {
    /// `(n, input)` design matrix.
    pub x: Tensor<T>,
    /// Class index per row.
    pub labels: Vec<usize>,
    pub classes: usize,
}

/// Balanced Gaussian blobs: `n` points in `input` dimensions across
/// `classes` clusters with per-coordinate noise `spread`.
pub fn make_blobs<T: Real>(
    input: usize,
    classes: usize,
    n: usize,
    spread: f64,
    seed: u64,
) -> Result<Blobs<T>> {
    if classes == 0 || n == 0 || input == 0 {
        return Err(CoreError::Invalid(
            "blobs need input >= 1, classes >= 1, n >= 1".into(),
        ));
    }
    let mut rng = stream(seed, Domain::TeacherData, 0, 0);
    let mut means = vec![0.0f64; classes * input];
    for m in means.iter_mut() {
        *m = rng.gen_range(-1.0..1.0);
    }
    let mut data = Vec::with_capacity(n * input);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        labels.push(c);
        for j in 0..input {
            let z: f64 = rng.sample(StandardNormal);
            data.push(lit::<T>(means[c * input + j] + spread * z));
        }
    }
    Ok(Blobs {
        x: Tensor::from_vec(vec![n, input], data)?,
        labels,
        classes,
    })
}

/// One-hot targets, `(n, classes)`.
pub fn one_hot<T: Real>(labels: &[usize], classes: usize) -> Tensor<T> {
    let mut data = vec![T::zero(); labels.len() * classes];
    for (i, &c) in labels.iter().enumerate() {
        data[i * classes + c] = T::one();
    }
    Tensor::from_vec(vec![labels.len(), classes], data).expect("sized by construction")
}

/// Fraction of rows whose argmax matches the label.
pub fn accuracy<T: Real>(probs: &Tensor<T>, labels: &[usize]) -> f64 {
    let classes = probs.cols();
    let mut hits = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let mut best = 0usize;
        for c in 1..classes {
            if probs.at(i, c) > probs.at(i, best) {
                best = c;
            }
        }
        if best == label {
            hits += 1;
        }
    }
    hits as f64 / labels.len().max(1) as f64
}

/// SGD hyperparameters for teacher pretraining.
#[derive(Debug, Clone, Copy)]
pub struct TeacherTrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    /// Stop early at this train accuracy; error out if never reached.
    pub target_acc: f64,
}

impl Default for TeacherTrainConfig {
    fn default() -> Self {
        Self {
            lr: 20.0,
            epochs: 200,
            batch: 128,
            target_acc: 0.95,
        }
    }
}

fn gather_rows<T: Real>(x: &Tensor<T>, idx: &[usize]) -> Tensor<T> {
    let cols = x.cols();
    let mut data = Vec::with_capacity(idx.len() * cols);
    for &i in idx {
        data.extend_from_slice(&x.data()[i * cols..(i + 1) * cols]);
    }
    Tensor::from_vec(vec![idx.len(), cols], data).expect("sized by construction")
}

/// Trains a softmax-MSE teacher until `target_acc`, returning the network
/// and its final train accuracy.
pub fn train_teacher<T: Real>(
    dims: &MlpDims,
    blobs: &Blobs<T>,
    cfg: &TeacherTrainConfig,
    seed: u64,
) -> Result<(TeacherNet<T>, f64)> {
    if dims.output != blobs.classes {
        return Err(CoreError::DimMismatch {
            op: "train_teacher",
            detail: format!("{} outputs vs {} classes", dims.output, blobs.classes),
        });
    }
    if dims.input != blobs.x.cols() {
        return Err(CoreError::DimMismatch {
            op: "train_teacher",
            detail: format!("{} inputs vs {}-dim data", dims.input, blobs.x.cols()),
        });
    }
    let n = blobs.labels.len();
    let mut params = init_mlp_params::<T>(dims, &mut stream(seed, Domain::TeacherInit, 0, 0));
    let targets = one_hot::<T>(&blobs.labels, blobs.classes);
    let lr = lit::<T>(-cfg.lr);
    let mut acc = 0.0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream(seed, Domain::TeacherShuffle, epoch as u64, 0));
        for chunk in order.chunks(cfg.batch.max(1)) {
            let xb = gather_rows(&blobs.x, chunk);
            let yb = gather_rows(&targets, chunk);
            let mut tape = Tape::new();
            let xid = tape.leaf(xb);
            let yid = tape.leaf(yb);
            let (probs, leaves) = mlp_forward(&mut tape, xid, &params, dims, Head::Softmax)?;
            let sq = tape.squared_diff(probs, yid)?;
            let loss = tape.mean(sq);
            let grads = tape.backward(loss)?;
            let g = collect_grads(&grads, &leaves);
            params.add_scaled(&g, lr);
        }
        let probs = mlp_probs(&params, dims, &blobs.x, Head::Softmax)?;
        acc = accuracy(&probs, &blobs.labels);
        if acc >= cfg.target_acc {
            break;
        }
    }
    if acc < cfg.target_acc {
        return Err(CoreError::Invalid(format!(
            "teacher training stalled at accuracy {acc:.3}, target {:.3}",
            cfg.target_acc
        )));
    }
    Ok((TeacherNet { dims: *dims, params }, acc))
}
