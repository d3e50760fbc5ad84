use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64;

use crate::{Error, Result};

/// `x^H y`.
pub(crate) fn inner(x: ArrayView1<Complex64>, y: ArrayView1<Complex64>) -> Complex64 {
    x.iter().zip(y.iter()).map(|(a, b)| a.conj() * b).sum()
}

pub(crate) fn norm_sqr(x: ArrayView1<Complex64>) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
///
/// Returns a numeric error when a pivot falls below `tol` times the largest
/// absolute entry of `a`.
pub(crate) fn solve(a: &Array2<Complex64>, b: &Array1<Complex64>, tol: f64) -> Result<Array1<Complex64>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.len(), n);
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::Numeric("zero system matrix".into()));
    }
    let mut m = a.clone();
    let mut rhs = b.clone();
    for col in 0..n {
        let (piv, piv_abs) = (col..n)
            .map(|r| (r, m[[r, col]].norm()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv_abs <= tol * scale {
            return Err(Error::Numeric(format!("singular system at column {col}")));
        }
        if piv != col {
            for c in 0..n {
                m.swap([piv, c], [col, c]);
            }
            rhs.swap(piv, col);
        }
        let d = m[[col, col]];
        for r in col + 1..n {
            let f = m[[r, col]] / d;
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for c in col..n {
                let v = m[[col, c]];
                m[[r, c]] -= f * v;
            }
            let v = rhs[col];
            rhs[r] -= f * v;
        }
    }
    let mut x = Array1::zeros(n);
    for r in (0..n).rev() {
        let mut acc = rhs[r];
        for c in r + 1..n {
            acc -= m[[r, c]] * x[c];
        }
        x[r] = acc / m[[r, r]];
    }
    Ok(x)
}
