//! The three networks of the distillation game.
//!
//! * **Teacher** — a frozen full-precision MLP classifier with a softmax
//!   head.
//! * **Student** — the same architecture, but its flat weight vector lives on
//!   a quantization grid: the struct carries the latent (real) weights and
//!   the codes, and forward passes always use the dequantized weights.
//! * **Generator** — a noise-to-embedding MLP with a `tanh` output head (its
//!   outputs mimic normalized embeddings), optionally followed by a linear
//!   per-token adapter matrix.
//!
//! Hidden layers use `tanh` throughout: it is smooth, so finite-difference
//! gradient checks are well-conditioned everywhere.
//!
//! The divergence driving the game is the mean squared difference between
//! the two softmax outputs, `mean((p − q)²)` — zero iff the distributions
//! match, smooth, and bounded on the simplex.

use crate::error::{CoreError, Result};
use crate::param::ParamVector;
use crate::quant::{dequantize, fit_scale, quantize, QuantizedVector};
use crate::real::{lit, Real};
use crate::tape::{Gradients, NodeId, Tape};
use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::StandardNormal;

/// Layer sizes of a two-layer MLP (input → hidden → output).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpDims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl MlpDims {
    /// Parameter tensor shapes in flattening order: w1, b1, w2, b2.
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        vec![
            vec![self.input, self.hidden],
            vec![self.hidden],
            vec![self.hidden, self.output],
            vec![self.output],
        ]
    }

    pub fn param_count(&self) -> usize {
        self.input * self.hidden + self.hidden + self.hidden * self.output + self.output
    }
}

/// Output nonlinearity of an MLP forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Row-wise softmax (classifiers).
    Softmax,
    /// Elementwise tanh (the generator's embedding head).
    Tanh,
}

/// Draws Gaussian MLP weights scaled by 1/√fan_in; biases start at zero.
pub fn init_mlp_params<T: Real>(dims: &MlpDims, rng: &mut impl Rng) -> ParamVector<T> {
    let mut values = Vec::with_capacity(dims.param_count());
    let mut layer = |fan_in: usize, n_weights: usize, n_bias: usize, values: &mut Vec<T>| {
        let sd = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..n_weights {
            let z: f64 = rng.sample(StandardNormal);
            values.push(lit::<T>(z * sd));
        }
        values.extend(std::iter::repeat(T::zero()).take(n_bias));
    };
    layer(dims.input, dims.input * dims.hidden, dims.hidden, &mut values);
    layer(dims.hidden, dims.hidden * dims.output, dims.output, &mut values);
    ParamVector::new(values)
}

/// Builds a two-layer MLP on the tape. Returns the output node and the
/// parameter leaf nodes (w1, b1, w2, b2) for gradient extraction.
pub fn mlp_forward<T: Real>(
    tape: &mut Tape<T>,
    x: NodeId,
    params: &ParamVector<T>,
    dims: &MlpDims,
    head: Head,
) -> Result<(NodeId, Vec<NodeId>)> {
    let tensors = params.to_tensors(&dims.shapes())?;
    let leaves: Vec<NodeId> = tensors.into_iter().map(|t| tape.leaf(t)).collect();
    let (w1, b1, w2, b2) = (leaves[0], leaves[1], leaves[2], leaves[3]);
    let z1 = tape.matmul(x, w1)?;
    let z1 = tape.bias_add(z1, b1)?;
    let h = tape.tanh(z1);
    let z2 = tape.matmul(h, w2)?;
    let z2 = tape.bias_add(z2, b2)?;
    let out = match head {
        Head::Softmax => tape.softmax(z2)?,
        Head::Tanh => tape.tanh(z2),
    };
    Ok((out, leaves))
}

/// Value-only MLP forward pass on a scratch tape.
pub fn mlp_probs<T: Real>(
    params: &ParamVector<T>,
    dims: &MlpDims,
    x: &Tensor<T>,
    head: Head,
) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let xid = tape.leaf(x.clone());
    let (out, _) = mlp_forward(&mut tape, xid, params, dims, head)?;
    Ok(tape.value(out).clone())
}

/// Flattens the adjoints of the given leaves into one parameter vector.
pub fn collect_grads<T: Real>(grads: &Gradients<T>, leaves: &[NodeId]) -> ParamVector<T> {
    let tensors: Vec<Tensor<T>> = leaves.iter().map(|&id| grads.grad(id).clone()).collect();
    ParamVector::from_tensors(&tensors)
}

// ---------------------------------------------------------------------------
// Teacher
// ---------------------------------------------------------------------------

/// Frozen full-precision classifier.
#[derive(Debug, Clone)]
pub struct TeacherNet<T: Real = f64> {
    pub dims: MlpDims,
    pub params: ParamVector<T>,
}

impl<T: Real> TeacherNet<T> {
    /// Class probabilities for a `(batch, input)` tensor.
    pub fn probs(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        mlp_probs(&self.params, &self.dims, x, Head::Softmax)
    }
}

// ---------------------------------------------------------------------------
// Student
// ---------------------------------------------------------------------------

/// Quantized student: latent weights plus their codes under a scale fitted
/// once at initialization.
#[derive(Debug, Clone)]
pub struct StudentNet<T: Real = f64> {
    pub dims: MlpDims,
    pub latent: ParamVector<T>,
    pub quant: QuantizedVector<T>,
}

impl<T: Real> StudentNet<T> {
    /// Post-training-quantization initialization: copy the teacher weights,
    /// fit an absmax scale at the requested width, and quantize.
    pub fn from_ptq(teacher: &TeacherNet<T>, bits: u8) -> Result<Self> {
        let scheme = fit_scale(teacher.params.as_slice(), bits)?;
        let quant = quantize(teacher.params.as_slice(), &scheme)?;
        Ok(Self {
            dims: teacher.dims,
            latent: teacher.params.clone(),
            quant,
        })
    }

    /// The dequantized weights the student actually runs with.
    pub fn weights(&self) -> ParamVector<T> {
        ParamVector::new(dequantize(&self.quant))
    }

    /// Replaces the latent weights and re-quantizes under the fixed scheme.
    pub fn set_latent(&mut self, latent: ParamVector<T>) -> Result<()> {
        if latent.dim() != self.latent.dim() {
            return Err(CoreError::DimMismatch {
                op: "set_latent",
                detail: format!("got {}, want {}", latent.dim(), self.latent.dim()),
            });
        }
        self.quant = quantize(latent.as_slice(), &self.quant.scheme)?;
        self.latent = latent;
        Ok(())
    }

    /// Class probabilities using the dequantized weights.
    pub fn probs(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        mlp_probs(&self.weights(), &self.dims, x, Head::Softmax)
    }
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

/// Generator sizes: noise → hidden → seq·embed, with an optional per-token
/// embed×embed linear adapter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenDims {
    pub noise: usize,
    pub hidden: usize,
    pub seq: usize,
    pub embed: usize,
    /// When set, a trainable embed×embed matrix (initialized to identity)
    /// post-multiplies each generated token embedding.
    pub adapter: bool,
}

impl GenDims {
    /// Flat output width seq·embed.
    pub fn out(&self) -> usize {
        self.seq * self.embed
    }

    /// The MLP trunk sizes.
    pub fn mlp(&self) -> MlpDims {
        MlpDims {
            input: self.noise,
            hidden: self.hidden,
            output: self.out(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.mlp().param_count() + if self.adapter { self.embed * self.embed } else { 0 }
    }

    /// Parameter tensor shapes in flattening order: the trunk's four, plus
    /// the adapter square when enabled.
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = self.mlp().shapes();
        if self.adapter {
            shapes.push(vec![self.embed, self.embed]);
        }
        shapes
    }
}

/// Noise-to-embedding generator with a tanh head.
#[derive(Debug, Clone)]
pub struct GeneratorNet<T: Real = f64> {
    pub dims: GenDims,
    pub params: ParamVector<T>,
}

impl<T: Real> GeneratorNet<T> {
    /// Gaussian trunk init; the adapter (when present) starts as identity.
    pub fn init(dims: GenDims, rng: &mut impl Rng) -> Self {
        let mut params = init_mlp_params::<T>(&dims.mlp(), rng).into_vec();
        if dims.adapter {
            for i in 0..dims.embed {
                for j in 0..dims.embed {
                    params.push(if i == j { T::one() } else { T::zero() });
                }
            }
        }
        Self {
            dims,
            params: ParamVector::new(params),
        }
    }

    /// Value-only generation: `(batch, noise)` → `(batch, seq·embed)`.
    pub fn generate(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let zid = tape.leaf(z.clone());
        let (out, _) = generator_forward(&mut tape, zid, &self.params, &self.dims)?;
        Ok(tape.value(out).clone())
    }
}

/// Builds the generator on the tape. Returns the output node (shape
/// `(batch, seq·embed)`) and the parameter leaves (w1, b1, w2, b2[, adapter]).
pub fn generator_forward<T: Real>(
    tape: &mut Tape<T>,
    z: NodeId,
    params: &ParamVector<T>,
    dims: &GenDims,
) -> Result<(NodeId, Vec<NodeId>)> {
    let batch = tape.value(z).rows();
    let mlp_dims = dims.mlp();
    if !dims.adapter {
        return mlp_forward(tape, z, params, &mlp_dims, Head::Tanh);
    }
    let trunk_len = mlp_dims.param_count();
    if params.dim() != dims.param_count() {
        return Err(CoreError::DimMismatch {
            op: "generator_forward",
            detail: format!("got {} params, want {}", params.dim(), dims.param_count()),
        });
    }
    let trunk = ParamVector::new(params.as_slice()[..trunk_len].to_vec());
    let (emb, mut leaves) = mlp_forward(tape, z, &trunk, &mlp_dims, Head::Tanh)?;
    let adapter = Tensor::from_vec(
        vec![dims.embed, dims.embed],
        params.as_slice()[trunk_len..].to_vec(),
    )?;
    let a = tape.leaf(adapter);
    leaves.push(a);
    // Apply the adapter per token: (batch·seq, embed) × (embed, embed).
    let tokens = tape.reshape(emb, vec![batch * dims.seq, dims.embed])?;
    let adapted = tape.matmul(tokens, a)?;
    let out = tape.reshape(adapted, vec![batch, dims.out()])?;
    Ok((out, leaves))
}

// ---------------------------------------------------------------------------
// Divergence and interpolation
// ---------------------------------------------------------------------------

/// Tape node for `mean((p − q)²)`.
pub fn divergence_node<T: Real>(tape: &mut Tape<T>, p: NodeId, q: NodeId) -> Result<NodeId> {
    let sq = tape.squared_diff(p, q)?;
    Ok(tape.mean(sq))
}

/// Value-only `mean((p − q)²)` between two same-shaped tensors.
pub fn divergence<T: Real>(p: &Tensor<T>, q: &Tensor<T>) -> Result<T> {
    if p.shape() != q.shape() {
        return Err(CoreError::ShapeMismatch {
            op: "divergence",
            detail: format!("{:?} vs {:?}", p.shape(), q.shape()),
        });
    }
    let n = lit::<T>(p.len() as f64);
    let sum: T = p
        .data()
        .iter()
        .zip(q.data())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok(sum / n)
}

/// Linear path through weight space for loss-landscape slices:
/// `after + α·(after − before)`, so α = 0 is the trained endpoint and
/// α = −1 is the starting point.
pub fn interpolate_params<T: Real>(
    before: &ParamVector<T>,
    after: &ParamVector<T>,
    alpha: T,
) -> Result<ParamVector<T>> {
    if before.dim() != after.dim() {
        return Err(CoreError::DimMismatch {
            op: "interpolate_params",
            detail: format!("{} vs {}", before.dim(), after.dim()),
        });
    }
    let values = before
        .as_slice()
        .iter()
        .zip(after.as_slice())
        .map(|(&a, &b)| b + alpha * (b - a))
        .collect();
    Ok(ParamVector::new(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    fn dims() -> MlpDims {
        MlpDims {
            input: 6,
            hidden: 5,
            output: 3,
        }
    }

    #[test]
    fn param_count_matches_shapes() {
        let d = dims();
        assert_eq!(d.param_count(), 6 * 5 + 5 + 5 * 3 + 3);
        let total: usize = d.shapes().iter().map(|s| s.iter().product::<usize>()).sum();
        assert_eq!(total, d.param_count());
    }

    #[test]
    fn softmax_head_outputs_a_distribution_per_row() {
        let d = dims();
        let mut rng = stream(1, Domain::GradCheck, 0, 0);
        let params = init_mlp_params::<f64>(&d, &mut rng);
        let x = Tensor::from_vec(vec![4, 6], (0..24).map(|i| (i as f64) / 10.0).collect()).unwrap();
        let probs = mlp_probs(&params, &d, &x, Head::Softmax).unwrap();
        assert_eq!(probs.shape(), &[4, 3]);
        for r in 0..4 {
            let row_sum: f64 = (0..3).map(|c| probs.at(r, c)).sum();
            assert!((row_sum - 1.0).abs() < 1e-12);
            assert!((0..3).all(|c| probs.at(r, c) > 0.0));
        }
    }

    #[test]
    fn generator_output_is_tanh_bounded() {
        let gd = GenDims {
            noise: 4,
            hidden: 8,
            seq: 3,
            embed: 5,
            adapter: false,
        };
        let mut rng = stream(2, Domain::GeneratorInit, 0, 0);
        let gen = GeneratorNet::<f64>::init(gd, &mut rng);
        assert_eq!(gen.params.dim(), gd.param_count());
        let z = Tensor::from_vec(vec![2, 4], vec![0.3; 8]).unwrap();
        let out = gen.generate(&z).unwrap();
        assert_eq!(out.shape(), &[2, 15]);
        assert!(out.data().iter().all(|&v| v.abs() <= 1.0));
    }

    #[test]
    fn identity_adapter_reproduces_the_trunk_output() {
        let base = GenDims {
            noise: 4,
            hidden: 8,
            seq: 3,
            embed: 5,
            adapter: false,
        };
        let with_adapter = GenDims { adapter: true, ..base };
        let mut rng = stream(3, Domain::GeneratorInit, 0, 0);
        let trunk_only = GeneratorNet::<f64>::init(base, &mut rng);
        let mut rng = stream(3, Domain::GeneratorInit, 0, 0);
        let adapted = GeneratorNet::<f64>::init(with_adapter, &mut rng);
        assert_eq!(adapted.params.dim(), trunk_only.params.dim() + 25);

        let z = Tensor::from_vec(vec![2, 4], (0..8).map(|i| i as f64 * 0.1 - 0.4).collect()).unwrap();
        let a = trunk_only.generate(&z).unwrap();
        let b = adapted.generate(&z).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_zero_iff_equal_and_symmetric() {
        let p: Tensor = Tensor::from_vec(vec![2, 2], vec![0.2, 0.8, 0.5, 0.5]).unwrap();
        let q = Tensor::from_vec(vec![2, 2], vec![0.3, 0.7, 0.5, 0.5]).unwrap();
        assert_eq!(divergence(&p, &p).unwrap(), 0.0);
        let d1 = divergence(&p, &q).unwrap();
        let d2 = divergence(&q, &p).unwrap();
        assert!(d1 > 0.0);
        assert_eq!(d1, d2);
        // Hand value: two coords differ by 0.1 → (2·0.01)/4.
        assert!((d1 - 0.005).abs() < 1e-15);
    }

    #[test]
    fn interpolation_hits_both_endpoints() {
        let before = ParamVector::new(vec![1.0, -2.0]);
        let after = ParamVector::new(vec![3.0, 0.0]);
        assert_eq!(
            interpolate_params(&before, &after, 0.0).unwrap(),
            after.clone()
        );
        assert_eq!(
            interpolate_params(&before, &after, -1.0).unwrap(),
            before.clone()
        );
        // α = 1 extrapolates past the endpoint by the same distance.
        assert_eq!(
            interpolate_params(&before, &after, 1.0).unwrap().as_slice(),
            &[5.0, 2.0]
        );
    }

    #[test]
    fn ptq_student_weights_sit_on_the_grid_near_the_teacher() {
        let d = dims();
        let mut rng = stream(4, Domain::TeacherInit, 0, 0);
        let teacher = TeacherNet::<f64> {
            dims: d,
            params: init_mlp_params(&d, &mut rng),
        };
        let student = StudentNet::from_ptq(&teacher, 8).unwrap();
        let w = student.weights();
        let s = student.quant.scheme.scale();
        for (tw, sw) in teacher.params.as_slice().iter().zip(w.as_slice()) {
            assert!((tw - sw).abs() <= s / 2.0 + 1e-15);
        }
        // 16-bit PTQ is near-lossless at this scale.
        let student16 = StudentNet::from_ptq(&teacher, 16).unwrap();
        let w16 = student16.weights();
        for (tw, sw) in teacher.params.as_slice().iter().zip(w16.as_slice()) {
            assert!((tw - sw).abs() < 1e-4);
        }
    }

    #[test]
    fn set_latent_keeps_the_original_scheme() {
        let d = dims();
        let mut rng = stream(5, Domain::TeacherInit, 0, 0);
        let teacher = TeacherNet::<f64> {
            dims: d,
            params: init_mlp_params(&d, &mut rng),
        };
        let mut student = StudentNet::from_ptq(&teacher, 4).unwrap();
        let scheme_before = student.quant.scheme;
        let mut latent = student.latent.clone();
        latent.as_mut_slice()[0] += 100.0;
        student.set_latent(latent).unwrap();
        assert_eq!(student.quant.scheme, scheme_before);
        // The huge coordinate clamps to the top of the grid.
        assert_eq!(
            student.quant.codes[0] as i64,
            scheme_before.qmax()
        );
    }
}
