//! The distillation game as a stochastic minimax problem.
//!
//! f(ω, θ) = E_z[ mean( (P(G_θ(z)) − Q_ω(G_θ(z)))² ) ]: the generator G_θ
//! turns Gaussian noise into embeddings, ω are the student's latent weights,
//! and the expectation is estimated by a batch of noise draws. The student
//! descends on f while the generator ascends — exactly the shape
//! [`crate::samsga::run_sam_sga`] optimizes.
//!
//! Batches are keyed, not streamed: noise sample `i` of batch `key` comes
//! from its own ChaCha stream, so the two student-phase evaluations (clean
//! and sharpness-perturbed) see the identical batch while the generator
//! phase sees a fresh one.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::models::{
    collect_grads, divergence, divergence_node, generator_forward, mlp_forward, mlp_probs,
    GenDims, GeneratorNet, Head, StudentNet, TeacherNet,
};
use crate::param::ParamVector;
use crate::quant::dequantize;
use crate::real::{lit, Real};
use crate::rng::{stream, Domain};
use crate::samsga::{run_sam_sga, MinimaxProblem, RunResult, SamSgaConfig, SampleKey};
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Which player's gradient a joint forward/backward pass should extract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GradSide {
    Student,
    Generator,
}

/// Teacher–student divergence under a trainable generator, as a minimax
/// problem over (student weights ω, generator weights θ).
#[derive(Debug, Clone)]
pub struct DistillationProblem<T: Real = f64> {
    pub teacher: TeacherNet<T>,
    pub gen_dims: GenDims,
}

impl<T: Real> DistillationProblem<T> {
    pub fn new(teacher: TeacherNet<T>, gen_dims: GenDims) -> Self {
        Self { teacher, gen_dims }
    }

    /// The keyed Gaussian noise batch `(m, noise_dim)`.
    pub fn batch_noise(&self, key: SampleKey, m: usize) -> Tensor<T> {
        let d = self.gen_dims.noise;
        let mut data = Vec::with_capacity(m * d);
        for i in 0..m {
            let mut rng = key.stream(i as u64);
            for _ in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                data.push(lit::<T>(z));
            }
        }
        Tensor::from_vec(vec![m, d], data).expect("sized by construction")
    }

    /// One forward/backward of the full game on a given noise batch.
    fn gap_value_grad(
        &self,
        student_w: &[T],
        gen_p: &[T],
        z: &Tensor<T>,
        side: GradSide,
    ) -> Result<(T, Vec<T>)> {
        let student = ParamVector::new(student_w.to_vec());
        let gen = ParamVector::new(gen_p.to_vec());
        let mut tape = Tape::new();
        let zid = tape.leaf(z.clone());
        let (emb, gen_leaves) = generator_forward(&mut tape, zid, &gen, &self.gen_dims)?;
        let (p_teacher, _) = mlp_forward(
            &mut tape,
            emb,
            &self.teacher.params,
            &self.teacher.dims,
            Head::Softmax,
        )?;
        let (p_student, student_leaves) =
            mlp_forward(&mut tape, emb, &student, &self.teacher.dims, Head::Softmax)?;
        let loss = divergence_node(&mut tape, p_teacher, p_student)?;
        let value = tape.value(loss).item()?;
        let grads = tape.backward(loss)?;
        let g = match side {
            GradSide::Student => collect_grads(&grads, &student_leaves),
            GradSide::Generator => collect_grads(&grads, &gen_leaves),
        };
        Ok((value, g.into_vec()))
    }
}

impl<T: Real> MinimaxProblem<T> for DistillationProblem<T> {
    fn omega_dim(&self) -> usize {
        self.teacher.dims.param_count()
    }

    fn theta_dim(&self) -> usize {
        self.gen_dims.param_count()
    }

    fn value_grad_omega(
        &self,
        omega: &[T],
        theta: &[T],
        key: SampleKey,
        batch: usize,
    ) -> Result<(T, Vec<T>)> {
        let z = self.batch_noise(key, batch);
        self.gap_value_grad(omega, theta, &z, GradSide::Student)
    }

    fn value_grad_theta(
        &self,
        omega: &[T],
        theta: &[T],
        key: SampleKey,
        batch: usize,
    ) -> Result<(T, Vec<T>)> {
        let z = self.batch_noise(key, batch);
        self.gap_value_grad(omega, theta, &z, GradSide::Generator)
    }
}

/// A fixed held-out probe: `n` standard normal inputs in the embedding
/// space, independent of the generator.
pub fn make_probe<T: Real>(seed: u64, n: usize, input: usize) -> Tensor<T> {
    let mut rng = stream(seed, Domain::Probe, 0, 0);
    let mut data = Vec::with_capacity(n * input);
    for _ in 0..n * input {
        let z: f64 = rng.sample(StandardNormal);
        data.push(lit::<T>(z));
    }
    Tensor::from_vec(vec![n, input], data).expect("sized by construction")
}

/// Teacher–student divergence on a fixed input batch.
pub fn gap_on_inputs<T: Real>(
    teacher: &TeacherNet<T>,
    student_weights: &ParamVector<T>,
    x: &Tensor<T>,
) -> Result<T> {
    let p = teacher.probs(x)?;
    let q = mlp_probs(student_weights, &teacher.dims, x, Head::Softmax)?;
    divergence(&p, &q)
}

/// Everything a ZSAQ training run needs to start.
#[derive(Debug, Clone)]
pub struct ZsaqSetup<T: Real = f64> {
    pub teacher: TeacherNet<T>,
    pub teacher_acc: f64,
    pub generator: GeneratorNet<T>,
    pub student0: StudentNet<T>,
    pub probe: Tensor<T>,
    pub train_x: Tensor<T>,
    pub train_labels: Vec<usize>,
}

/// Metrics of one finished ZSAQ run.
#[derive(Debug, Clone)]
pub struct ZsaqOutcome<T: Real = f64> {
    pub run: RunResult<T>,
    /// Probe divergence of the PTQ student, before any training.
    pub ptq_gap: T,
    /// Probe divergence after training (same quantity as `heldout_gap`).
    pub final_gap: T,
    /// Probe divergence after training, named for reports.
    pub heldout_gap: T,
    pub teacher_acc: f64,
    pub student_acc_ptq: f64,
    pub student_acc_final: f64,
}

/// Runs the full game from a prepared setup and measures the before/after
/// gaps on the probe and the accuracies on the teacher's training data.
pub fn run_zsaq<T: Real>(setup: &ZsaqSetup<T>, cfg: &SamSgaConfig<T>) -> Result<ZsaqOutcome<T>> {
    let problem = DistillationProblem::new(setup.teacher.clone(), setup.generator.dims);
    let run = run_sam_sga(
        &problem,
        cfg,
        setup.student0.latent.as_slice(),
        setup.generator.params.as_slice(),
    )?;

    let w_ptq = setup.student0.weights();
    let w_final = ParamVector::new(dequantize(&run.final_quant));
    let ptq_gap = gap_on_inputs(&setup.teacher, &w_ptq, &setup.probe)?;
    let final_gap = gap_on_inputs(&setup.teacher, &w_final, &setup.probe)?;

    let dims = setup.teacher.dims;
    let acc_of = |w: &ParamVector<T>| -> Result<f64> {
        let probs = mlp_probs(w, &dims, &setup.train_x, Head::Softmax)?;
        Ok(crate::pretrain::accuracy(&probs, &setup.train_labels))
    };
    Ok(ZsaqOutcome {
        ptq_gap,
        final_gap,
        heldout_gap: final_gap,
        teacher_acc: setup.teacher_acc,
        student_acc_ptq: acc_of(&w_ptq)?,
        student_acc_final: acc_of(&w_final)?,
        run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_mlp_params, MlpDims};
    use crate::samsga::Phase;
    use crate::tape::{finite_difference_gradient, max_rel_error};

    fn tiny_setup() -> (DistillationProblem, ParamVector, ParamVector) {
        let dims = MlpDims {
            input: 6,
            hidden: 4,
            output: 3,
        };
        let gd = GenDims {
            noise: 2,
            hidden: 4,
            seq: 3,
            embed: 2,
            adapter: true,
        };
        let teacher = TeacherNet {
            dims,
            params: init_mlp_params(&dims, &mut stream(21, Domain::TeacherInit, 0, 0)),
        };
        let student = init_mlp_params(&dims, &mut stream(22, Domain::TeacherInit, 0, 0));
        let gen = GeneratorNet::init(gd, &mut stream(23, Domain::GeneratorInit, 0, 0));
        (DistillationProblem::new(teacher, gd), student, gen.params)
    }

    #[test]
    fn keyed_batches_are_reproducible_and_phase_separated() {
        let (p, _, _) = tiny_setup();
        let k = |phase, iteration| SampleKey {
            seed: 5,
            iteration,
            phase,
        };
        let a = p.batch_noise(k(Phase::Student, 0), 4);
        let b = p.batch_noise(k(Phase::Student, 0), 4);
        assert_eq!(a, b);
        assert_ne!(a, p.batch_noise(k(Phase::Generator, 0), 4));
        assert_ne!(a, p.batch_noise(k(Phase::Student, 1), 4));
    }

    #[test]
    fn student_gradient_matches_finite_differences() {
        let (p, student, gen) = tiny_setup();
        let key = SampleKey {
            seed: 1,
            iteration: 0,
            phase: Phase::Student,
        };
        let (_, g) = p
            .value_grad_omega(student.as_slice(), gen.as_slice(), key, 3)
            .unwrap();
        let fd = finite_difference_gradient(
            |w| {
                p.value_grad_omega(w.as_slice(), gen.as_slice(), key, 3)
                    .unwrap()
                    .0
            },
            &student,
            1e-5,
        );
        assert!(max_rel_error(&g, fd.as_slice()) < 1e-5);
    }

    #[test]
    fn generator_gradient_matches_finite_differences() {
        let (p, student, gen) = tiny_setup();
        let key = SampleKey {
            seed: 2,
            iteration: 0,
            phase: Phase::Generator,
        };
        let (_, g) = p
            .value_grad_theta(student.as_slice(), gen.as_slice(), key, 3)
            .unwrap();
        let fd = finite_difference_gradient(
            |th| {
                p.value_grad_theta(student.as_slice(), th.as_slice(), key, 3)
                    .unwrap()
                    .0
            },
            &gen,
            1e-5,
        );
        assert!(max_rel_error(&g, fd.as_slice()) < 1e-5);
    }

    #[test]
    fn gap_vanishes_when_the_student_is_the_teacher() {
        let (p, _, _) = tiny_setup();
        let probe = make_probe::<f64>(3, 16, 6);
        let gap = gap_on_inputs(&p.teacher, &p.teacher.params.clone(), &probe).unwrap();
        assert_eq!(gap, 0.0);
    }

    #[test]
    fn probe_is_seeded() {
        let a = make_probe::<f64>(9, 8, 5);
        assert_eq!(a, make_probe::<f64>(9, 8, 5));
        assert_ne!(a, make_probe::<f64>(10, 8, 5));
    }
}
