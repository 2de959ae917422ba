//! Dense row-major kernels for the GP: Cholesky factorization and triangular solves.

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`.
#[inline]
fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// In-place lower Cholesky of the `n x n` matrix `a`. The strict upper
/// triangle is zeroed. Returns `false` if `a` is not numerically positive definite.
pub(crate) fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    debug_assert_eq!(a.len(), n * n);
    for j in 0..n {
        let (_, tail) = a.split_at_mut(j * n);
        let (row_j, rest) = tail.split_at_mut(n);
        let d = row_j[j] - dot(&row_j[..j], &row_j[..j]);
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        row_j[j] = d;
        row_j[j + 1..].fill(0.0);
        for row_i in rest.chunks_exact_mut(n) {
            row_i[j] = (row_i[j] - dot(&row_i[..j], &row_j[..j])) / d;
        }
    }
    true
}

/// Solves `L x = b` in place.
pub(crate) fn solve_lower(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let s = dot(&l[i * n..i * n + i], &b[..i]);
        b[i] = (b[i] - s) / l[i * n + i];
    }
}

/// Solves `L^T x = b` in place.
pub(crate) fn solve_lower_transposed(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        b[i] /= l[i * n + i];
        let xi = b[i];
        axpy(&mut b[..i], -xi, &l[i * n..i * n + i]);
    }
}

/// `(L L^T)^{-1}` from the lower factor `L`.
pub(crate) fn inverse_from_cholesky(l: &[f64], n: usize) -> Vec<f64> {
    // L^{-1} row by row: row i = -(sum_k<i l_ik row_k) / l_ii, plus 1/l_ii on the diagonal
    let mut linv = vec![0.0; n * n];
    for i in 0..n {
        let (done, tail) = linv.split_at_mut(i * n);
        let row_i = &mut tail[..n];
        for k in 0..i {
            let lik = l[i * n + k];
            if lik != 0.0 {
                axpy(&mut row_i[..=k], lik, &done[k * n..k * n + k + 1]);
            }
        }
        let dii = 1.0 / l[i * n + i];
        for v in &mut row_i[..i] {
            *v *= -dii;
        }
        row_i[i] = dii;
    }
    // K^{-1} = L^{-T} L^{-1}; lower triangle of entry (a, b) = sum_k linv[k][a] * linv[k][b]
    let mut inv = vec![0.0; n * n];
    for k in 0..n {
        let row = &linv[k * n..k * n + k + 1];
        for a in 0..=k {
            let ra = row[a];
            if ra != 0.0 {
                axpy(&mut inv[a * n..a * n + a + 1], ra, &row[..=a]);
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            inv[b * n + a] = inv[a * n + b];
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let d = i as f64 - j as f64;
                a[i * n + j] = (-0.3 * d * d).exp();
            }
            a[i * n + i] += 0.1;
        }
        a
    }

    #[test]
    fn cholesky_reconstructs_and_inverts() {
        let n = 6;
        let a = spd(n);
        let mut l = a.clone();
        assert!(cholesky_in_place(&mut l, n));
        for i in 0..n {
            for j in 0..n {
                let s: f64 = (0..n).map(|k| l[i * n + k] * l[j * n + k]).sum();
                assert!((s - a[i * n + j]).abs() < 1e-12);
            }
        }
        let inv = inverse_from_cholesky(&l, n);
        for i in 0..n {
            for j in 0..n {
                let s: f64 = (0..n).map(|k| a[i * n + k] * inv[k * n + j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-10, "({i},{j}) = {s}");
            }
        }
        let b: Vec<f64> = (0..n).map(|i| i as f64 - 2.0).collect();
        let mut x = b.clone();
        solve_lower(&l, n, &mut x);
        solve_lower_transposed(&l, n, &mut x);
        for i in 0..n {
            let s: f64 = (0..n).map(|k| a[i * n + k] * x[k]).sum();
            assert!((s - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        assert!(!cholesky_in_place(&mut a, 2));
    }
}
