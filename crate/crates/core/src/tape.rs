//! Reverse-mode automatic differentiation on a flat tape.
//!
//! The op set is exactly what small MLP games need: dense matmul, (bias)
//! addition, `tanh`/`relu` activations, a numerically safe row softmax, an
//! all-elements mean, elementwise squared difference, multiplication by a
//! constant, and a reshape. Each forward call appends a node; [`Tape::backward`]
//! seeds the scalar loss with 1 and sweeps the tape once in reverse,
//! accumulating adjoints for every node.
//!
//! Values follow IEEE semantics (a NaN in, a NaN out); shape errors are
//! reported eagerly by the forward calls.

use crate::error::{CoreError, Result};
use crate::param::ParamVector;
use crate::real::{lit, Real};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op<T: Real> {
    Leaf,
    MatMul { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    BiasAdd { a: NodeId, b: NodeId },
    Tanh { a: NodeId },
    Relu { a: NodeId },
    Softmax { a: NodeId },
    Mean { a: NodeId },
    SquaredDiff { a: NodeId, b: NodeId },
    ScalarMul { a: NodeId, c: T },
    Reshape { a: NodeId },
}

#[derive(Debug)]
struct Node<T: Real> {
    op: Op<T>,
    value: Tensor<T>,
}

/// Gradient tape: append-only graph of [`Tensor`] computations.
#[derive(Debug, Default)]
pub struct Tape<T: Real = f64> {
    nodes: Vec<Node<T>>,
}

/// Adjoints produced by one backward sweep, indexed by [`NodeId`].
#[derive(Debug)]
pub struct Gradients<T: Real = f64> {
    adjoints: Vec<Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    /// The adjoint (∂loss/∂node) of `id`. Zero-filled for nodes the loss
    /// does not depend on.
    pub fn grad(&self, id: NodeId) -> &Tensor<T> {
        &self.adjoints[id.0]
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    /// Number of nodes currently on the tape.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node so the allocation can be reused.
    pub fn reset(&mut self) {
        self.nodes.clear();
    }

    /// The forward value of a node.
    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Registers an input tensor. Leaves are where gradients are read off.
    pub fn leaf(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// Dense matrix product of a `(m,k)` and a `(k,n)` tensor.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape().len() != 2 || vb.shape().len() != 2 || va.cols() != vb.rows() {
            return Err(CoreError::ShapeMismatch {
                op: "matmul",
                detail: format!("{:?} x {:?}", va.shape(), vb.shape()),
            });
        }
        let (m, k, n) = (va.rows(), va.cols(), vb.cols());
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = va.at(i, p);
                let row_b = &vb.data()[p * n..(p + 1) * n];
                let row_out = &mut out[i * n..(i + 1) * n];
                for (o, &bv) in row_out.iter_mut().zip(row_b) {
                    *o += aip * bv;
                }
            }
        }
        Ok(self.push(Op::MatMul { a, b }, Tensor::from_vec(vec![m, n], out)?))
    }

    /// Elementwise sum of two same-shaped tensors.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(CoreError::ShapeMismatch {
                op: "add",
                detail: format!("{:?} + {:?}", va.shape(), vb.shape()),
            });
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| x + y)
            .collect();
        let value = Tensor::from_vec(va.shape().to_vec(), data)?;
        Ok(self.push(Op::Add { a, b }, value))
    }

    /// Adds a length-`n` bias row to every row of a `(m,n)` tensor.
    pub fn bias_add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape().len() != 2 || vb.shape().len() != 1 || vb.len() != va.cols() {
            return Err(CoreError::ShapeMismatch {
                op: "bias_add",
                detail: format!("{:?} + bias {:?}", va.shape(), vb.shape()),
            });
        }
        let n = va.cols();
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(idx, &x)| x + vb.data()[idx % n])
            .collect();
        let value = Tensor::from_vec(va.shape().to_vec(), data)?;
        Ok(self.push(Op::BiasAdd { a, b }, value))
    }

    /// Elementwise hyperbolic tangent.
    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = map_tensor(self.value(a), |x| x.tanh());
        self.push(Op::Tanh { a }, value)
    }

    /// Elementwise `max(x, 0)`.
    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = map_tensor(self.value(a), |x| if x > T::zero() { x } else { T::zero() });
        self.push(Op::Relu { a }, value)
    }

    /// Row-wise softmax of a 2-D tensor, computed with the row max
    /// subtracted so large logits cannot overflow.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        if va.shape().len() != 2 {
            return Err(CoreError::ShapeMismatch {
                op: "softmax",
                detail: format!("expected 2-D input, got {:?}", va.shape()),
            });
        }
        let (m, n) = (va.rows(), va.cols());
        let mut data = vec![T::zero(); m * n];
        for i in 0..m {
            let row = &va.data()[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
            let out = &mut data[i * n..(i + 1) * n];
            let mut sum = T::zero();
            for (o, &x) in out.iter_mut().zip(row) {
                *o = (x - max).exp();
                sum += *o;
            }
            for o in out.iter_mut() {
                *o /= sum;
            }
        }
        let value = Tensor::from_vec(vec![m, n], data)?;
        Ok(self.push(Op::Softmax { a }, value))
    }

    /// Mean over all elements, producing a shape-`[1]` scalar.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let n = lit::<T>(va.len() as f64);
        let sum: T = va.data().iter().cloned().sum();
        self.push(Op::Mean { a }, Tensor::scalar(sum / n))
    }

    /// Elementwise `(a - b)^2` of two same-shaped tensors.
    pub fn squared_diff(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(CoreError::ShapeMismatch {
                op: "squared_diff",
                detail: format!("{:?} vs {:?}", va.shape(), vb.shape()),
            });
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| (x - y) * (x - y))
            .collect();
        let value = Tensor::from_vec(va.shape().to_vec(), data)?;
        Ok(self.push(Op::SquaredDiff { a, b }, value))
    }

    /// Multiplication by a compile-time-known constant.
    pub fn scalar_mul(&mut self, a: NodeId, c: T) -> NodeId {
        let value = map_tensor(self.value(a), |x| x * c);
        self.push(Op::ScalarMul { a, c }, value)
    }

    /// Same values under a new shape of equal size.
    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let value = self.value(a).reshaped(shape)?;
        Ok(self.push(Op::Reshape { a }, value))
    }

    /// Runs one reverse sweep from a scalar loss node and returns the
    /// adjoints of every node on the tape.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(CoreError::NonScalarLoss {
                shape: loss_value.shape().to_vec(),
            });
        }
        let mut adj: Vec<Tensor<T>> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.shape().to_vec()))
            .collect();
        adj[loss.0].data_mut()[0] = T::one();

        for idx in (0..=loss.0).rev() {
            // Adjoint of the current node is final once we reach it; move it
            // out so children can be borrowed mutably.
            let g = std::mem::replace(&mut adj[idx], Tensor::zeros(vec![0]));
            match self.nodes[idx].op {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let va = &self.nodes[a.0].value;
                    let vb = &self.nodes[b.0].value;
                    let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                    // dA[i,p] += sum_j g[i,j] * B[p,j]
                    {
                        let ga = adj[a.0].data_mut();
                        for i in 0..m {
                            for p in 0..k {
                                let mut acc = T::zero();
                                for j in 0..n {
                                    acc += g.at(i, j) * vb.at(p, j);
                                }
                                ga[i * k + p] += acc;
                            }
                        }
                    }
                    // dB[p,j] += sum_i A[i,p] * g[i,j]
                    {
                        let gb = adj[b.0].data_mut();
                        for p in 0..k {
                            for i in 0..m {
                                let aip = va.at(i, p);
                                for j in 0..n {
                                    gb[p * n + j] += aip * g.at(i, j);
                                }
                            }
                        }
                    }
                }
                Op::Add { a, b } => {
                    accumulate(adj[a.0].data_mut(), g.data(), |gv| gv);
                    accumulate(adj[b.0].data_mut(), g.data(), |gv| gv);
                }
                Op::BiasAdd { a, b } => {
                    accumulate(adj[a.0].data_mut(), g.data(), |gv| gv);
                    let n = self.nodes[b.0].value.len();
                    let gb = adj[b.0].data_mut();
                    for (idx2, &gv) in g.data().iter().enumerate() {
                        gb[idx2 % n] += gv;
                    }
                }
                Op::Tanh { a } => {
                    let y = self.nodes[idx].value.data();
                    let ga = adj[a.0].data_mut();
                    for ((gav, &gv), &yv) in ga.iter_mut().zip(g.data()).zip(y) {
                        *gav += gv * (T::one() - yv * yv);
                    }
                }
                Op::Relu { a } => {
                    let x = self.nodes[a.0].value.data();
                    let ga = adj[a.0].data_mut();
                    for ((gav, &gv), &xv) in ga.iter_mut().zip(g.data()).zip(x) {
                        if xv > T::zero() {
                            *gav += gv;
                        }
                    }
                }
                Op::Softmax { a } => {
                    let y = &self.nodes[idx].value;
                    let (m, n) = (y.rows(), y.cols());
                    let ga = adj[a.0].data_mut();
                    for i in 0..m {
                        let yrow = &y.data()[i * n..(i + 1) * n];
                        let grow = &g.data()[i * n..(i + 1) * n];
                        let mut inner = T::zero();
                        for (&gv, &yv) in grow.iter().zip(yrow) {
                            inner += gv * yv;
                        }
                        let garow = &mut ga[i * n..(i + 1) * n];
                        for ((gav, &gv), &yv) in garow.iter_mut().zip(grow).zip(yrow) {
                            *gav += yv * (gv - inner);
                        }
                    }
                }
                Op::Mean { a } => {
                    let n = lit::<T>(self.nodes[a.0].value.len() as f64);
                    let gv = g.data()[0] / n;
                    for gav in adj[a.0].data_mut() {
                        *gav += gv;
                    }
                }
                Op::SquaredDiff { a, b } => {
                    let two = lit::<T>(2.0);
                    // Accumulate into a first, then b, to permit a == b.
                    {
                        let va = self.nodes[a.0].value.data().to_vec();
                        let vb = self.nodes[b.0].value.data().to_vec();
                        let ga = adj[a.0].data_mut();
                        for (i, &gv) in g.data().iter().enumerate() {
                            ga[i] += two * (va[i] - vb[i]) * gv;
                        }
                        let gb = adj[b.0].data_mut();
                        for (i, &gv) in g.data().iter().enumerate() {
                            gb[i] -= two * (va[i] - vb[i]) * gv;
                        }
                    }
                }
                Op::ScalarMul { a, c } => {
                    accumulate(adj[a.0].data_mut(), g.data(), |gv| gv * c);
                }
                Op::Reshape { a } => {
                    accumulate(adj[a.0].data_mut(), g.data(), |gv| gv);
                }
            }
            adj[idx] = g;
        }
        Ok(Gradients { adjoints: adj })
    }
}

fn map_tensor<T: Real>(t: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    let data = t.data().iter().map(|&x| f(x)).collect();
    Tensor::from_vec(t.shape().to_vec(), data).expect("same shape, same size")
}

fn accumulate<T: Real>(dst: &mut [T], src: &[T], f: impl Fn(T) -> T) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += f(s);
    }
}

/// Central finite-difference gradient of a scalar function, the reference
/// oracle for gradient checks: `(f(x+h·e_i) − f(x−h·e_i)) / 2h` per
/// coordinate.
pub fn finite_difference_gradient<T: Real>(
    f: impl Fn(&ParamVector<T>) -> T,
    at: &ParamVector<T>,
    h: T,
) -> ParamVector<T> {
    let mut grad = ParamVector::zeros(at.dim());
    let mut x = at.clone();
    for i in 0..at.dim() {
        let orig = x.as_slice()[i];
        x.as_mut_slice()[i] = orig + h;
        let fp = f(&x);
        x.as_mut_slice()[i] = orig - h;
        let fm = f(&x);
        x.as_mut_slice()[i] = orig;
        grad.as_mut_slice()[i] = (fp - fm) / (lit::<T>(2.0) * h);
    }
    grad
}

/// Worst relative disagreement between an analytic and a reference gradient:
/// `max_i |ad_i − fd_i| / max(1, |fd_i|)`.
pub fn max_rel_error<T: Real>(analytic: &[T], reference: &[T]) -> T {
    analytic
        .iter()
        .zip(reference)
        .map(|(&a, &r)| (a - r).abs() / T::max(T::one(), r.abs()))
        .fold(T::zero(), T::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_grad(build: impl Fn(&mut Tape, NodeId) -> NodeId, at: f64) -> (f64, f64) {
        let mut tape: Tape = Tape::new();
        let w = tape.leaf(Tensor::from_vec(vec![1, 1], vec![at]).unwrap());
        let loss = build(&mut tape, w);
        let grads = tape.backward(loss).unwrap();
        (tape.value(loss).item().unwrap(), grads.grad(w).data()[0])
    }

    #[test]
    fn matmul_of_ones_forward_and_backward() {
        let mut tape: Tape = Tape::new();
        let a = tape.leaf(Tensor::ones(vec![2, 3]));
        let b = tape.leaf(Tensor::ones(vec![3, 1]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).shape(), &[2, 1]);
        assert_eq!(tape.value(c).data(), &[3.0, 3.0]);

        let loss = tape.mean(c);
        let grads = tape.backward(loss).unwrap();
        // dC = 1/2 everywhere; dA[i,p] = sum_j dC[i,j]·B[p,j] = 1/2,
        // dB[p,0] = sum_i A[i,p]·dC[i,0] = 1.
        assert_eq!(grads.grad(a).data(), &[0.5; 6]);
        assert_eq!(grads.grad(b).data(), &[1.0; 3]);
    }

    #[test]
    fn matmul_rejects_mismatched_inner_dims() {
        let mut tape: Tape = Tape::new();
        let a = tape.leaf(Tensor::ones(vec![2, 3]));
        let b = tape.leaf(Tensor::ones(vec![2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        assert!(err.to_string().contains("matmul"));
    }

    #[test]
    fn tanh_gradient_at_zero_is_one() {
        let (y, g) = scalar_grad(|t, w| { let h = t.tanh(w); t.mean(h) }, 0.0);
        assert_eq!(y, 0.0);
        assert_eq!(g, 1.0);
    }

    #[test]
    fn squared_diff_of_identical_tensors_is_zero_with_zero_grad() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_vec(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
        let b = tape.leaf(Tensor::from_vec(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
        let d = tape.squared_diff(a, b).unwrap();
        let loss = tape.mean(d);
        assert_eq!(tape.value(loss).item().unwrap(), 0.0);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.grad(a).data(), &[0.0; 3]);
    }

    #[test]
    fn square_via_squared_diff_has_gradient_two_w() {
        // loss = (w − 0)² at w = 3 → value 9, gradient 6.
        let (y, g) = scalar_grad(
            |t, w| {
                let zero = t.leaf(Tensor::zeros(vec![1, 1]));
                let sq = t.squared_diff(w, zero).unwrap();
                t.mean(sq)
            },
            3.0,
        );
        assert_eq!(y, 9.0);
        assert_eq!(g, 6.0);
    }

    #[test]
    fn mean_squared_error_at_the_target_has_zero_gradient() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::from_vec(vec![2], vec![0.3, -1.2]).unwrap());
        let c = tape.leaf(Tensor::from_vec(vec![2], vec![0.3, -1.2]).unwrap());
        let sq = tape.squared_diff(w, c).unwrap();
        let loss = tape.mean(sq);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.grad(w).data(), &[0.0, 0.0]);
    }

    #[test]
    fn product_rule_through_one_by_one_matmul() {
        let mut tape = Tape::new();
        let w1 = tape.leaf(Tensor::from_vec(vec![1, 1], vec![2.0]).unwrap());
        let w2 = tape.leaf(Tensor::from_vec(vec![1, 1], vec![5.0]).unwrap());
        let p = tape.matmul(w1, w2).unwrap();
        let loss = tape.mean(p);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.grad(w1).data(), &[5.0]);
        assert_eq!(grads.grad(w2).data(), &[2.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_survive_huge_logits() {
        let mut tape: Tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![2, 2], vec![1000.0, 0.0, 3.0, 3.0]).unwrap());
        let y = tape.softmax(x).unwrap();
        let v = tape.value(y);
        assert!(v.is_finite());
        assert!((v.at(0, 0) - 1.0).abs() < 1e-12);
        assert!((v.at(1, 0) - 0.5).abs() < 1e-12);
        assert!((v.data()[0] + v.data()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape: Tape = Tape::new();
        let a = tape.leaf(Tensor::ones(vec![2]));
        assert!(matches!(
            tape.backward(a),
            Err(CoreError::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn finite_difference_matches_analytic_sine_derivative() {
        let f = |x: &ParamVector| x.as_slice()[0].sin();
        let g = finite_difference_gradient(f, &ParamVector::new(vec![0.0]), 1e-5);
        assert!((g.as_slice()[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn reshape_routes_gradients_through_unchanged() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let r = tape.reshape(a, vec![1, 4]).unwrap();
        let s = tape.scalar_mul(r, 3.0);
        let loss = tape.mean(s);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.grad(a).data(), &[0.75; 4]);
    }
}
