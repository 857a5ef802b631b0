use nalgebra::{Cholesky, DMatrix, DVector};

use super::Network;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::features::{Sample, SampleSet};

/// Rows per block when accumulating `J^T J`. Fixed so that the reduction
/// order, and therefore every bit of the result, is independent of the
/// execution policy.
const BLOCK_ROWS: usize = 128;

/// Writes d r / d w for one sample into `row` and returns the residual
/// `r = y - y_hat`.
fn fill_row(net: &Network, sample: &Sample, hidden: &mut [f64], mut put: impl FnMut(usize, f64)) -> f64 {
    let n_in = net.n_inputs();
    let n_h = net.n_hidden();
    let y_hat = net.forward_into(&sample.features, hidden);
    let w2 = net.output_weights();
    let b1_off = n_h * n_in;
    let w2_off = b1_off + n_h;
    for j in 0..n_h {
        let a = hidden[j];
        let delta = -w2[j] * a * (1.0 - a);
        for (i, xi) in sample.features.iter().enumerate() {
            put(j * n_in + i, delta * xi);
        }
        put(b1_off + j, delta);
        put(w2_off + j, -a);
    }
    put(w2_off + n_h, -1.0);
    sample.target - y_hat
}

fn check_dims(net: &Network, samples: &[Sample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("jacobian needs at least one sample".into()));
    }
    if let Some(s) = samples.iter().find(|s| s.features.len() != net.n_inputs()) {
        return Err(Error::DimensionMismatch { expected: net.n_inputs(), got: s.features.len() });
    }
    Ok(())
}

/// Residual vector `r` (N) and its Jacobian `J` (N x W) with respect to the
/// packed parameters.
pub fn jacobian(net: &Network, samples: &SampleSet) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_dims(net, &samples.samples)?;
    let n = samples.len();
    let mut jac = DMatrix::zeros(n, net.n_params());
    let mut r = DVector::zeros(n);
    let mut hidden = vec![0.0; net.n_hidden()];
    for (k, s) in samples.samples.iter().enumerate() {
        r[k] = fill_row(net, s, &mut hidden, |c, v| jac[(k, c)] = v);
        if !r[k].is_finite() {
            return Err(Error::NonFinite(format!("activation for sample {k}")));
        }
    }
    Ok((r, jac))
}

/// `J^T J`, `J^T r` and the sum of squared residuals, accumulated without
/// materializing the full Jacobian.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    pub jtj: DMatrix<f64>,
    pub jtr: DVector<f64>,
    pub sse: f64,
}

impl NormalEquations {
    pub fn gradient_inf_norm(&self) -> f64 {
        self.jtr.amax()
    }
}

pub fn normal_equations(net: &Network, samples: &[Sample], exec: Exec) -> Result<NormalEquations> {
    check_dims(net, samples)?;
    let w = net.n_params();
    let blocks: Vec<&[Sample]> = samples.chunks(BLOCK_ROWS).collect();
    let partials = exec.map(blocks, |block| {
        let mut jac = DMatrix::zeros(block.len(), w);
        let mut r = DVector::zeros(block.len());
        let mut hidden = vec![0.0; net.n_hidden()];
        for (k, s) in block.iter().enumerate() {
            r[k] = fill_row(net, s, &mut hidden, |c, v| jac[(k, c)] = v);
        }
        let mut jtj = DMatrix::zeros(w, w);
        jtj.gemm_tr(1.0, &jac, &jac, 0.0);
        let jtr = jac.tr_mul(&r);
        (jtj, jtr, r.norm_squared())
    });
    let mut iter = partials.into_iter();
    let (mut jtj, mut jtr, mut sse) = iter.next().expect("at least one block");
    for (a, b, c) in iter {
        jtj += a;
        jtr += b;
        sse += c;
    }
    if !sse.is_finite() {
        return Err(Error::NonFinite("sum of squared residuals".into()));
    }
    Ok(NormalEquations { jtj, jtr, sse })
}

/// Sum of squared residuals, blocked like [`normal_equations`].
pub fn sum_squared_error(net: &Network, samples: &[Sample], exec: Exec) -> f64 {
    let blocks: Vec<&[Sample]> = samples.chunks(BLOCK_ROWS).collect();
    let partials = exec.map(blocks, |block| {
        let mut hidden = vec![0.0; net.n_hidden()];
        block
            .iter()
            .map(|s| {
                let e = s.target - net.forward_into(&s.features, &mut hidden);
                e * e
            })
            .sum::<f64>()
    });
    partials.into_iter().sum()
}

/// Solves `(J^T J + mu I) delta = J^T r` by Cholesky. The caller applies
/// `w <- w - delta`. Returns `None` when the damped matrix is not positive
/// definite.
pub fn lm_step(jtj: &DMatrix<f64>, jtr: &DVector<f64>, mu: f64) -> Option<DVector<f64>> {
    let mut a = jtj.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += mu;
    }
    let chol = Cholesky::new(a)?;
    let delta = chol.solve(jtr);
    delta.iter().all(|v| v.is_finite()).then_some(delta)
}
