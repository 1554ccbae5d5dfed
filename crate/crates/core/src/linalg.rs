//! Dense linear solves for exact policy evaluation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Solves `a x = b` for square row-major `a` by Gaussian elimination with
/// partial pivoting.
pub fn solve<S: Scalar>(mut a: Vec<S>, mut b: Vec<S>) -> Result<Vec<S>> {
    let n = b.len();
    if a.len() != n * n {
        return Err(Error::Shape(format!(
            "matrix has {} entries, expected {}",
            a.len(),
            n * n
        )));
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i * n + col]
                    .abs()
                    .partial_cmp(&a[j * n + col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("non-empty pivot range");
        if a[pivot * n + col].abs() <= S::epsilon() * S::lit(1e-3) {
            return Err(Error::Singular);
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            b.swap(pivot, col);
        }
        let diag = a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] / diag;
            if factor == S::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[row * n + k] = a[row * n + k] - factor * v;
            }
            b[row] = b[row] - factor * b[col];
        }
    }
    let mut x = vec![S::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc = acc - a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        // 2x + y = 3, x + 3y = 5  ->  x = 0.8, y = 1.4
        let x = solve(vec![2.0, 1.0, 1.0, 3.0], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8_f64).abs() < 1e-14);
        assert!((x[1] - 1.4_f64).abs() < 1e-14);
    }

    #[test]
    fn singular_is_reported() {
        assert_eq!(
            solve(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 2.0]),
            Err(Error::Singular)
        );
    }
}
