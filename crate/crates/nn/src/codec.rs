//! Complex data as two real channels.

use num_complex::Complex64;

use crate::{shape_err, Result, Tensor};

/// `[re(x)..., im(x)...]` with shape `[2, *shape]`.
pub fn complex_to_real(x: &[Complex64], shape: &[usize]) -> Result<Tensor> {
    let len: usize = shape.iter().product();
    if len != x.len() {
        return Err(shape_err("complex_to_real", format!("shape {shape:?} for {} values", x.len())));
    }
    let mut data = Vec::with_capacity(2 * len);
    data.extend(x.iter().map(|z| z.re));
    data.extend(x.iter().map(|z| z.im));
    let mut full = vec![2];
    full.extend_from_slice(shape);
    Tensor::new(full, data)
}

/// Inverse of [`complex_to_real`]; the leading axis must have size 2.
pub fn real_to_complex(t: &Tensor) -> Result<Vec<Complex64>> {
    if t.shape().first() != Some(&2) {
        return Err(shape_err("real_to_complex", format!("leading axis of {:?} is not 2", t.shape())));
    }
    let half = t.len() / 2;
    let (re, im) = t.data().split_at(half);
    Ok(re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect())
}
