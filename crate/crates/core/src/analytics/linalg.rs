//! Small dense linear algebra: LU factorization with partial pivoting and a
//! 3x3 matrix exponential by scaling-and-squaring.
//!
//! Deliberately minimal — the crate only ever solves moderate dense systems
//! (first-step equations of lumped chains, capped at 10^4 unknowns) and
//! exponentiates one 3x3 generator, and being `no_std` it favours a small,
//! fully-tested local implementation over a linear-algebra dependency.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// LU factorization (Doolittle, partial pivoting) of a square matrix.
pub struct LuFactors {
    n: usize,
    /// Packed L (unit diagonal, below) and U (diagonal and above).
    lu: Vec<f64>,
    /// Row swaps applied during elimination, in order: step `k` swapped rows
    /// `k` and `swaps[k]`.
    swaps: Vec<usize>,
}

/// Factor a row-major `n x n` matrix.  Errors on a (numerically) singular
/// matrix.
pub fn lu_factor(mut a: Vec<f64>, n: usize) -> Result<LuFactors> {
    if a.len() != n * n {
        return Err(Error::InvalidInput("matrix shape mismatch"));
    }
    let mut swaps = vec![0usize; n];
    for k in 0..n {
        // Partial pivoting: largest magnitude in column k at or below row k.
        let mut pivot_row = k;
        let mut pivot_val = math::abs(a[k * n + k]);
        for i in (k + 1)..n {
            let v = math::abs(a[i * n + k]);
            if v > pivot_val {
                pivot_val = v;
                pivot_row = i;
            }
        }
        if pivot_val == 0.0 || !pivot_val.is_finite() {
            return Err(Error::InvalidInput("matrix is singular"));
        }
        swaps[k] = pivot_row;
        if pivot_row != k {
            for j in 0..n {
                a.swap(k * n + j, pivot_row * n + j);
            }
        }
        let pivot = a[k * n + k];
        for i in (k + 1)..n {
            let m = a[i * n + k] / pivot;
            a[i * n + k] = m;
            if m != 0.0 {
                for j in (k + 1)..n {
                    a[i * n + j] -= m * a[k * n + j];
                }
            }
        }
    }
    Ok(LuFactors { n, lu: a, swaps })
}

impl LuFactors {
    /// Solve `A x = b` in place (`b` becomes `x`).
    pub fn solve(&self, b: &mut [f64]) -> Result<()> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::InvalidInput("rhs length mismatch"));
        }
        for k in 0..n {
            b.swap(k, self.swaps[k]);
        }
        // Forward substitution with unit lower-triangular L.
        for i in 1..n {
            let mut s = b[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * b[j];
            }
            b[i] = s;
        }
        // Back substitution with U.
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in (i + 1)..n {
                s -= self.lu[i * n + j] * b[j];
            }
            b[i] = s / self.lu[i * n + i];
        }
        Ok(())
    }
}

/// 3x3 row-major matrix multiply.
fn mul3(a: &[f64; 9], b: &[f64; 9]) -> [f64; 9] {
    let mut c = [0.0; 9];
    for i in 0..3 {
        for k in 0..3 {
            let aik = a[i * 3 + k];
            if aik != 0.0 {
                for j in 0..3 {
                    c[i * 3 + j] += aik * b[k * 3 + j];
                }
            }
        }
    }
    c
}

/// Matrix exponential of a 3x3 matrix by scaling-and-squaring with a Taylor
/// series on the scaled matrix (infinity norm <= 1/2, so 24 terms leave a
/// truncation error far below double precision).
pub fn expm3(a: &[f64; 9]) -> [f64; 9] {
    let norm = (0..3)
        .map(|i| math::abs(a[i * 3]) + math::abs(a[i * 3 + 1]) + math::abs(a[i * 3 + 2]))
        .fold(0.0f64, f64::max);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let mut scaled = [0.0; 9];
    for (s, &x) in scaled.iter_mut().zip(a) {
        *s = x * scale;
    }
    // exp(scaled) = sum scaled^k / k!
    let mut result = [0.0; 9];
    for i in 0..3 {
        result[i * 3 + i] = 1.0;
    }
    let mut term = result;
    for k in 1..=24u32 {
        term = mul3(&term, &scaled);
        let inv = 1.0 / f64::from(k);
        for t in term.iter_mut() {
            *t *= inv;
        }
        for (r, &t) in result.iter_mut().zip(&term) {
            *r += t;
        }
    }
    for _ in 0..squarings {
        result = mul3(&result, &result);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedSpec;

    #[test]
    fn solves_known_system() {
        // [[2, 1], [1, 3]] x = [5, 10] -> x = [1, 3]
        let lu = lu_factor(vec![2.0, 1.0, 1.0, 3.0], 2).unwrap();
        let mut b = [5.0, 10.0];
        lu.solve(&mut b).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-14);
        assert!((b[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        // Leading zero forces a row swap.
        let lu = lu_factor(vec![0.0, 1.0, 1.0, 0.0], 2).unwrap();
        let mut b = [3.0, 7.0];
        lu.solve(&mut b).unwrap();
        assert_eq!(b, [7.0, 3.0]);
    }

    #[test]
    fn singular_detected() {
        assert!(lu_factor(vec![1.0, 2.0, 2.0, 4.0], 2).is_err());
        assert!(lu_factor(vec![0.0; 4], 2).is_err());
    }

    #[test]
    fn random_systems_roundtrip() {
        let mut stream = SeedSpec::with_path(77, &[0]).unwrap().derive_stream();
        for trial in 0..20 {
            let n = 1 + (trial % 12);
            // Diagonally dominant => well conditioned and non-singular.
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                let mut row_sum = 0.0;
                for j in 0..n {
                    if i != j {
                        let v = stream.uniform() * 2.0 - 1.0;
                        a[i * n + j] = v;
                        row_sum += v.abs();
                    }
                }
                a[i * n + i] = row_sum + 1.0 + stream.uniform();
            }
            let x_true: Vec<f64> = (0..n).map(|_| stream.uniform() * 4.0 - 2.0).collect();
            let mut b = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    b[i] += a[i * n + j] * x_true[j];
                }
            }
            let lu = lu_factor(a, n).unwrap();
            lu.solve(&mut b).unwrap();
            for (xi, ti) in b.iter().zip(&x_true) {
                assert!((xi - ti).abs() < 1e-10, "n={n}: {xi} vs {ti}");
            }
        }
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let e = expm3(&[0.0; 9]);
        let id = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        for (a, b) in e.iter().zip(&id) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn exp_of_diagonal() {
        let d = [1.0, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0, 0.5];
        let e = expm3(&d);
        assert!((e[0] - f64::exp(1.0)).abs() < 1e-14);
        assert!((e[4] - f64::exp(-2.0)).abs() < 1e-14);
        assert!((e[8] - f64::exp(0.5)).abs() < 1e-14);
        assert_eq!(e[1], 0.0);
        assert_eq!(e[3], 0.0);
    }

    #[test]
    fn exp_of_nilpotent() {
        // N = [[0,1,0],[0,0,1],[0,0,0]]: exp(N) = I + N + N^2/2 exactly.
        let n = [0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let e = expm3(&n);
        let expect = [1.0, 1.0, 0.5, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        for (a, b) in e.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
