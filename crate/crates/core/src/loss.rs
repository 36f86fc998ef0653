//! Fine-tuning loss kernels over dense activations with analytic gradients:
//! in-batch negative softmax loss, FLOPS and joint FLOPS regularizers.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Paired query and positive-document activations; row `i` of `q` pairs
/// with row `i` of `d`, and every other `d` row is a negative for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    q: Array2<f64>,
    d: Array2<f64>,
}

impl Batch {
    pub fn new(q: Array2<f64>, d: Array2<f64>) -> Result<Self> {
        if q.nrows() == 0 {
            return Err(Error::validation("batch must hold at least one pair"));
        }
        if q.dim() != d.dim() {
            return Err(Error::validation(format!(
                "query batch {:?} and document batch {:?} differ in shape",
                q.dim(),
                d.dim()
            )));
        }
        check_activations(q.view())?;
        check_activations(d.view())?;
        Ok(Self { q, d })
    }

    pub fn q(&self) -> ArrayView2<'_, f64> {
        self.q.view()
    }

    pub fn d(&self) -> ArrayView2<'_, f64> {
        self.d.view()
    }

    pub fn size(&self) -> usize {
        self.q.nrows()
    }
}

fn check_activations(m: ArrayView2<'_, f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::validation("activations must be finite and non-negative"));
    }
    Ok(())
}

/// A loss value and one gradient per differentiated input, in argument order.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grads: Vec<Array2<f64>>,
}

pub fn similarity(q: ArrayView1<'_, f64>, d: ArrayView1<'_, f64>) -> Result<f64> {
    if q.len() != d.len() {
        return Err(Error::validation(format!("widths {} and {} differ", q.len(), d.len())));
    }
    Ok(q.dot(&d))
}

/// Per-row `-log softmax` of the diagonal entry, averaged over rows.
///
/// The denominator runs over the row's positive plus every other document
/// in the batch, so a batch of one has loss exactly zero.
pub fn in_batch_loss(batch: &Batch) -> LossValue {
    let b = batch.size();
    let scores = batch.q.dot(&batch.d.t());
    let (value, dscores) = softmax_cross_entropy(&scores);
    let grad_q = dscores.dot(&batch.d);
    let grad_d = dscores.t().dot(&batch.q);
    debug_assert_eq!(grad_q.nrows(), b);
    LossValue {
        value,
        grads: vec![grad_q, grad_d],
    }
}

/// Loss and `dL/dS` for a square similarity matrix with targets on the diagonal.
pub fn softmax_cross_entropy(scores: &Array2<f64>) -> (f64, Array2<f64>) {
    let b = scores.nrows();
    let inv_b = 1.0 / b as f64;
    let mut total = 0.0;
    let mut grad = Array2::zeros((b, b));
    for (i, row) in scores.axis_iter(Axis(0)).enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |m, &s| m.max(s));
        let sum: f64 = row.iter().map(|&s| (s - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[i];
        for (j, &s) in row.iter().enumerate() {
            grad[[i, j]] = (s - lse).exp() * inv_b;
        }
        grad[[i, i]] -= inv_b;
    }
    (total * inv_b, grad)
}

fn mean_row(m: ArrayView2<'_, f64>) -> Array1<f64> {
    m.mean_axis(Axis(0)).expect("non-empty batch")
}

fn check_list(m: ArrayView2<'_, f64>, name: &str) -> Result<()> {
    if m.nrows() == 0 {
        return Err(Error::validation(format!("{name} list is empty")));
    }
    check_activations(m)
}

/// Squared norm of the batch-mean activation.
pub fn flops_loss(vectors: ArrayView2<'_, f64>) -> Result<LossValue> {
    check_list(vectors, "vector")?;
    let mean = mean_row(vectors);
    let value = mean.dot(&mean);
    let row_grad = &mean * (2.0 / vectors.nrows() as f64);
    let grad = row_grad.broadcast(vectors.dim()).expect("same width").to_owned();
    Ok(LossValue {
        value,
        grads: vec![grad],
    })
}

/// Dot product of the query-batch mean with the document-batch mean.
pub fn joint_flops_loss(q: ArrayView2<'_, f64>, d: ArrayView2<'_, f64>) -> Result<LossValue> {
    check_list(q, "query")?;
    check_list(d, "document")?;
    if q.ncols() != d.ncols() {
        return Err(Error::validation(format!(
            "query width {} differs from document width {}",
            q.ncols(),
            d.ncols()
        )));
    }
    let mq = mean_row(q);
    let md = mean_row(d);
    let grad_q = (&md / q.nrows() as f64).broadcast(q.dim()).unwrap().to_owned();
    let grad_d = (&mq / d.nrows() as f64).broadcast(d.dim()).unwrap().to_owned();
    Ok(LossValue {
        value: mq.dot(&md),
        grads: vec![grad_q, grad_d],
    })
}

/// `in_batch_loss + lambda_j * joint_flops_loss`.
pub fn combined_objective(batch: &Batch, lambda_j: f64) -> Result<LossValue> {
    if lambda_j.is_nan() || lambda_j < 0.0 || lambda_j.is_infinite() {
        return Err(Error::validation(format!(
            "lambda_j must be finite and >= 0, got {lambda_j}"
        )));
    }
    let ranking = in_batch_loss(batch);
    let reg = joint_flops_loss(batch.q(), batch.d())?;
    let grads = ranking
        .grads
        .into_iter()
        .zip(reg.grads)
        .map(|(a, b)| a + b * lambda_j)
        .collect();
    Ok(LossValue {
        value: ranking.value + lambda_j * reg.value,
        grads,
    })
}
