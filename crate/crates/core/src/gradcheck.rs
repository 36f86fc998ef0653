//! Central finite-difference checks for the loss kernels.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::loss::{combined_objective, flops_loss, in_batch_loss, joint_flops_loss, Batch, LossValue};
use crate::par;

/// Tolerance on the maximum relative gradient error.
pub const TOLERANCE: f64 = 1e-4;
/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Denominator floor so exactly-zero gradients compare absolutely.
const REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    InBatch,
    Flops,
    JointFlops,
    Combined,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::InBatch,
        LossKind::Flops,
        LossKind::JointFlops,
        LossKind::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::InBatch => "inbatch",
            LossKind::Flops => "flops",
            LossKind::JointFlops => "jflops",
            LossKind::Combined => "combined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub coordinates: usize,
}

impl GradReport {
    pub fn passes(&self) -> bool {
        self.max_rel_error <= TOLERANCE
    }

    fn merge(self, other: GradReport) -> GradReport {
        GradReport {
            max_rel_error: self.max_rel_error.max(other.max_rel_error),
            coordinates: self.coordinates + other.coordinates,
        }
    }
}

/// Evaluates `kind` on its inputs: `[q, d]` for pair losses, `[q]` for FLOPS.
pub fn evaluate(kind: LossKind, inputs: &[Array2<f64>], lambda_j: f64) -> Result<LossValue> {
    match kind {
        LossKind::InBatch => Ok(in_batch_loss(&Batch::new(inputs[0].clone(), inputs[1].clone())?)),
        LossKind::Flops => flops_loss(inputs[0].view()),
        LossKind::JointFlops => joint_flops_loss(inputs[0].view(), inputs[1].view()),
        LossKind::Combined => combined_objective(&Batch::new(inputs[0].clone(), inputs[1].clone())?, lambda_j),
    }
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares every analytic gradient coordinate against a central difference
/// of the loss value.
pub fn check(kind: LossKind, inputs: &[Array2<f64>], lambda_j: f64, step: f64) -> Result<GradReport> {
    let analytic = evaluate(kind, inputs, lambda_j)?;
    let coords: Vec<(usize, usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(k, m)| (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| (k, i, j))))
        .collect();
    let errors = par::try_map(&coords, |&(k, i, j)| {
        let mut shifted = inputs.to_vec();
        shifted[k][[i, j]] += step;
        let plus = evaluate(kind, &shifted, lambda_j)?.value;
        shifted[k][[i, j]] -= 2.0 * step;
        let minus = evaluate(kind, &shifted, lambda_j)?.value;
        let numeric = (plus - minus) / (2.0 * step);
        Ok::<_, crate::Error>(relative_error(analytic.grads[k][[i, j]], numeric))
    })?;
    Ok(GradReport {
        max_rel_error: errors.into_iter().fold(0.0, f64::max),
        coordinates: coords.len(),
    })
}

/// Non-negative activations bounded away from zero by more than the FD step.
pub fn random_activations<R: Rng>(rng: &mut R, rows: usize, width: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, width), |_| rng.random_range(0.01..1.0))
}

/// Batch sizes and widths cycled over by [`run`].
pub const BATCH_SIZES: [usize; 4] = [1, 2, 4, 8];
pub const WIDTHS: [usize; 2] = [8, 64];

/// Checks `kind` on `batches` random batches drawn from `seed`.
pub fn run(kind: LossKind, seed: u64, batches: usize, lambda_j: f64) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradReport {
        max_rel_error: 0.0,
        coordinates: 0,
    };
    for n in 0..batches {
        let size = BATCH_SIZES[n % BATCH_SIZES.len()];
        let width = WIDTHS[(n / BATCH_SIZES.len()) % WIDTHS.len()];
        let q = random_activations(&mut rng, size, width);
        let d = random_activations(&mut rng, size, width);
        let inputs = match kind {
            LossKind::Flops => vec![q],
            _ => vec![q, d],
        };
        report = report.merge(check(kind, &inputs, lambda_j, STEP)?);
    }
    Ok(report)
}
