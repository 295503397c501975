use super::tensor::Tensor4;
use crate::error::Result;
use crate::num::Real;

/// Mean squared error and its gradient `2 (pred - target) / count`.
pub fn l2_loss<T: Real>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<(f64, Tensor4<T>)> {
    pred.check_same_shape(target)?;
    let n = pred.data().len() as f64;
    let scale = T::from_f64(2.0 / n);
    let mut sum = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            let df = d.to_f64();
            sum += df * df;
            scale * d
        })
        .collect();
    Ok((sum / n, Tensor4::new(pred.shape(), grad)?))
}
