use super::{NumericsError, Tensor};
use crate::scalar::Scalar;

/// Worst element found by [`grad_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport<T> {
    pub max_relative_error: T,
    pub tensor_index: usize,
    pub element_index: usize,
    pub analytic: T,
    pub numeric: T,
    pub checked: usize,
}

/// Compares `analytic` against central differences of `value`.
///
/// Every element of every tensor in `params` is perturbed by `±eps` and
/// restored. Relative error is `|a - n| / max(1, |a|, |n|)`.
pub fn grad_check<T, E, F>(
    params: &mut [Tensor<T>],
    analytic: &[Tensor<T>],
    eps: T,
    mut value: F,
) -> Result<GradCheckReport<T>, E>
where
    T: Scalar,
    E: From<NumericsError>,
    F: FnMut(&[Tensor<T>]) -> Result<T, E>,
{
    if params.len() != analytic.len() {
        return Err(E::from(NumericsError::ShapeMismatch {
            op: "grad_check",
            left: vec![params.len()],
            right: vec![analytic.len()],
        }));
    }
    let two = T::one() + T::one();
    let mut report = GradCheckReport {
        max_relative_error: T::zero(),
        tensor_index: 0,
        element_index: 0,
        analytic: T::zero(),
        numeric: T::zero(),
        checked: 0,
    };
    for t in 0..params.len() {
        if params[t].shape() != analytic[t].shape() {
            return Err(E::from(NumericsError::ShapeMismatch {
                op: "grad_check",
                left: params[t].shape().to_vec(),
                right: analytic[t].shape().to_vec(),
            }));
        }
        for e in 0..params[t].len() {
            let original = params[t].data()[e];
            params[t].data_mut()[e] = original + eps;
            let plus = value(params);
            params[t].data_mut()[e] = original - eps;
            let minus = value(params);
            params[t].data_mut()[e] = original;
            let numeric = (plus? - minus?) / (two * eps);

            let a = analytic[t].data()[e];
            let denom = T::one().max(a.abs()).max(numeric.abs());
            let rel = (a - numeric).abs() / denom;
            report.checked += 1;
            if rel > report.max_relative_error || report.checked == 1 {
                report = GradCheckReport {
                    max_relative_error: rel,
                    tensor_index: t,
                    element_index: e,
                    analytic: a,
                    numeric,
                    checked: report.checked,
                };
            }
        }
    }
    Ok(report)
}
