//! Single-head scaled dot-product attention, `softmax(Q K^T / sqrt(d_k)) V`.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput<T> {
    pub context: Vec<T>,
    pub weights: Vec<T>,
    pub scores: Vec<T>,
}

/// Max-subtracted softmax.
pub fn softmax<T: Scalar>(scores: &[T]) -> Vec<T> {
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Attends one query (`d_k`) over `m` key rows (`m x d_k`) and value rows
/// (`m x d_v`).
pub fn attention<T: Scalar>(query: &[T], keys: &Matrix<T>, values: &Matrix<T>) -> Result<AttentionOutput<T>> {
    let m = keys.rows();
    if m == 0 {
        return Err(Error::invalid("attention needs at least one key"));
    }
    if values.rows() != m || keys.cols() != query.len() {
        return Err(Error::invalid(format!(
            "attention shapes: query {}, keys {}x{}, values {}x{}",
            query.len(),
            keys.rows(),
            keys.cols(),
            values.rows(),
            values.cols()
        )));
    }
    let scale = T::from_usize_lossy(query.len()).sqrt();
    let scores: Vec<T> = (0..m).map(|i| dot(query, keys.row(i)) / scale).collect();
    let weights = softmax(&scores);
    let context = values.vec_mul(&weights);
    Ok(AttentionOutput { context, weights, scores })
}
