/// Dense LU factorization with partial pivoting, `P A = L U`, stored row-major.
#[derive(Debug, Clone, Default)]
pub(crate) struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Singular;

impl DenseLu {
    pub fn factor(mut a: Vec<f64>, n: usize) -> Result<DenseLu, Singular> {
        debug_assert_eq!(a.len(), n * n);
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let tiny = 1e-11 * scale;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (mut best, mut best_abs) = (k, a[k * n + k].abs());
            for r in k + 1..n {
                let v = a[r * n + k].abs();
                if v > best_abs {
                    best = r;
                    best_abs = v;
                }
            }
            if best_abs <= tiny {
                return Err(Singular);
            }
            if best != k {
                for c in 0..n {
                    a.swap(k * n + c, best * n + c);
                }
                perm.swap(k, best);
            }
            let pivot = a[k * n + k];
            let (upper, lower) = a.split_at_mut((k + 1) * n);
            let row_k = &upper[k * n..];
            for r in 0..n - k - 1 {
                let row_r = &mut lower[r * n..(r + 1) * n];
                let f = row_r[k] / pivot;
                if f != 0.0 {
                    row_r[k] = f;
                    for c in k + 1..n {
                        row_r[c] -= f * row_k[c];
                    }
                } else {
                    row_r[k] = 0.0;
                }
            }
        }
        Ok(DenseLu { n, lu: a, perm })
    }

    #[cfg(test)]
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        if n == 0 {
            return;
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&r| b[r]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n..(i + 1) * n];
            let s: f64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(u, v)| u * v).sum();
            x[i] = (x[i] - s) / row[i];
        }
        b.copy_from_slice(&x);
    }

    /// Solves `A^T x = b` in place.
    pub fn solve_transpose(&self, b: &mut [f64]) {
        let n = self.n;
        if n == 0 {
            return;
        }
        let lu = &self.lu;
        // U^T w = b
        let mut w = b.to_vec();
        for i in 0..n {
            w[i] /= lu[i * n + i];
            let wi = w[i];
            if wi != 0.0 {
                for c in i + 1..n {
                    w[c] -= lu[i * n + c] * wi;
                }
            }
        }
        // L^T v = w
        for i in (0..n).rev() {
            let vi = w[i];
            if vi != 0.0 {
                for c in 0..i {
                    w[c] -= lu[i * n + c] * vi;
                }
            }
        }
        for (k, &r) in self.perm.iter().enumerate() {
            b[r] = w[k];
        }
    }
}
