//! Small dense kernels.
//!
//! `matmul` accumulates every output element over `k` in index order, so a row
//! of the product depends only on the matching row of the left operand. Batched
//! and one-row evaluations of the same network therefore agree bit for bit.

use ndarray::{Array2, ArrayView2};

pub fn matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    matmul_view(a.view(), b.view())
}

pub fn matmul_view(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let (n, k) = a.dim();
    let (k2, m) = b.dim();
    assert_eq!(k, k2, "matmul: inner dimensions {k} and {k2} differ");
    let b = b.as_standard_layout();
    let bs = b.as_slice().expect("standard layout");
    let mut out = Array2::<f64>::zeros((n, m));
    {
        let os = out.as_slice_mut().expect("fresh array is contiguous");
        for i in 0..n {
            let orow = &mut os[i * m..(i + 1) * m];
            for p in 0..k {
                let aip = a[[i, p]];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bs[p * m..(p + 1) * m];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += aip * bv;
                }
            }
        }
    }
    out
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Returns `None` when a pivot is not strictly positive.
pub fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for p in 0..j {
                s -= l[[i, p]] * l[[j, p]];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Some(l)
}

/// Solves `L y = b` for lower-triangular `L`.
pub fn forward_substitute(l: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for p in 0..i {
            s -= l[[i, p]] * y[p];
        }
        y[i] = s / l[[i, i]];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matmul_matches_ndarray_dot() {
        let a = array![[1.0, 2.0, 0.0], [-1.0, 0.5, 3.0]];
        let b = array![[1.0, 0.0], [2.0, -1.0], [0.5, 4.0]];
        assert_eq!(matmul(&a, &b), a.dot(&b));
    }

    #[test]
    fn row_result_independent_of_batch() {
        let a = array![[0.1, 0.7, -0.3], [1.3, -2.2, 0.9]];
        let b = array![[0.11, 0.2], [0.3, -0.45], [0.77, 0.01]];
        let full = matmul(&a, &b);
        let single = matmul(&a.slice(ndarray::s![1..2, ..]).to_owned(), &b);
        assert_eq!(full.row(1), single.row(0));
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let l = cholesky(&a).unwrap();
        assert!((l.dot(&l.t()) - &a).iter().all(|x| x.abs() < 1e-12));
        assert!(cholesky(&array![[1.0, 2.0], [2.0, 1.0]]).is_none());
    }
}
