//! Dense least squares: Householder QR with column pivoting (minimum-norm on
//! rank-deficient problems) and CGLS for wide problems.

use ndarray::{Array1, Array2};

/// Above this many columns `least_squares` switches from QR to CGLS.
pub const QR_MAX_COLS: usize = 500;

pub const CG_REL_TOL: f64 = 1e-10;

/// Minimizes `‖b − Ax‖₂`, returning the minimum-norm minimizer.
pub fn least_squares(a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    if a.ncols() <= QR_MAX_COLS {
        lstsq_qr(a, b)
    } else {
        lstsq_cg(a, b, CG_REL_TOL, 20 * a.ncols().max(10))
    }
}

/// Column-major working copy.
struct ColMajor {
    rows: usize,
    data: Vec<f64>,
}

impl ColMajor {
    fn from_array(a: &Array2<f64>) -> Self {
        let (rows, cols) = a.dim();
        let mut data = vec![0.0; rows * cols];
        for ((i, j), &v) in a.indexed_iter() {
            data[j * rows + i] = v;
        }
        ColMajor { rows, data }
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let (lo, hi) = (a.min(b), a.max(b));
        let (left, right) = self.data.split_at_mut(hi * self.rows);
        left[lo * self.rows..(lo + 1) * self.rows].swap_with_slice(&mut right[..self.rows]);
    }
}

/// Householder reflector `I − β v vᵀ` acting on rows `k..`.
struct Reflector {
    k: usize,
    v: Vec<f64>,
    beta: f64,
}

impl Reflector {
    /// Builds the reflector mapping `x` onto a multiple of `e_1`; returns it
    /// together with the resulting leading entry.
    fn new(k: usize, x: &[f64]) -> (Self, f64) {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return (
                Reflector {
                    k,
                    v: vec![0.0; x.len()],
                    beta: 0.0,
                },
                0.0,
            );
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|t| t * t).sum();
        let beta = if vtv == 0.0 { 0.0 } else { 2.0 / vtv };
        (Reflector { k, v, beta }, alpha)
    }

    fn apply(&self, x: &mut [f64]) {
        if self.beta == 0.0 {
            return;
        }
        let tail = &mut x[self.k..self.k + self.v.len()];
        let dot: f64 = self.v.iter().zip(tail.iter()).map(|(a, b)| a * b).sum();
        let s = self.beta * dot;
        for (t, v) in tail.iter_mut().zip(self.v.iter()) {
            *t -= s * v;
        }
    }
}

/// Pivoted QR least squares.
pub fn lstsq_qr(a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let (m, n) = a.dim();
    assert_eq!(m, b.len(), "right-hand side length");
    let mut w = ColMajor::from_array(a);
    let mut rhs = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let steps = m.min(n);
    let mut diag = Vec::with_capacity(steps);

    let mut norms: Vec<f64> = (0..n)
        .map(|j| w.col(j).iter().map(|v| v * v).sum())
        .collect();

    for k in 0..steps {
        // Recompute the trailing norms exactly; downdating loses accuracy on
        // the nearly rank-deficient systems this is used for.
        for j in k..n {
            norms[j] = w.col(j)[k..].iter().map(|v| v * v).sum();
        }
        let piv = (k..n)
            .max_by(|&i, &j| norms[i].total_cmp(&norms[j]).then(j.cmp(&i)))
            .unwrap_or(k);
        w.swap_cols(k, piv);
        norms.swap(k, piv);
        perm.swap(k, piv);

        let (h, alpha) = Reflector::new(k, &w.col(k)[k..]);
        {
            let col = w.col_mut(k);
            col[k] = alpha;
            for v in col[k + 1..].iter_mut() {
                *v = 0.0;
            }
        }
        for j in k + 1..n {
            h.apply(w.col_mut(j));
        }
        h.apply(&mut rhs);
        diag.push(alpha);
    }

    let r00 = diag.first().map_or(0.0, |v| v.abs());
    let tol = r00 * f64::EPSILON * (m.max(n) as f64);
    let rank = diag.iter().take_while(|d| d.abs() > tol).count();

    let mut z = vec![0.0; n];
    if rank == n {
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for j in i + 1..n {
                s -= w.get(i, j) * z[j];
            }
            z[i] = s / w.get(i, i);
        }
    } else if rank > 0 {
        // Minimum-norm solution of the r×n trapezoid S z = c via QR of Sᵀ.
        let mut st = ColMajor {
            rows: n,
            data: vec![0.0; n * rank],
        };
        for i in 0..rank {
            for j in i..n {
                st.data[i * n + j] = w.get(i, j);
            }
        }
        let mut reflectors = Vec::with_capacity(rank);
        for k in 0..rank {
            let (h, alpha) = Reflector::new(k, &st.col(k)[k..]);
            {
                let col = st.col_mut(k);
                col[k] = alpha;
            }
            for j in k + 1..rank {
                h.apply(st.col_mut(j));
            }
            reflectors.push(h);
        }
        // Sᵀ = V U  ⇒  S = Uᵀ Vᵀ; solve Uᵀ t = c then z = V [t; 0].
        let mut t = vec![0.0; n];
        for i in 0..rank {
            let mut s = rhs[i];
            for j in 0..i {
                s -= st.get(j, i) * t[j];
            }
            t[i] = s / st.get(i, i);
        }
        for h in reflectors.iter().rev() {
            h.apply(&mut t);
        }
        z = t;
    }

    let mut x = Array1::zeros(n);
    for (k, &j) in perm.iter().enumerate() {
        x[j] = z[k];
    }
    x
}

/// CGLS (conjugate gradient on the normal equations). Started from zero it
/// converges to the minimum-norm solution.
pub fn lstsq_cg(a: &Array2<f64>, b: &Array1<f64>, rel_tol: f64, max_iter: usize) -> Array1<f64> {
    let n = a.ncols();
    let mut x = Array1::zeros(n);
    let mut r = b.clone();
    let mut s = a.t().dot(&r);
    let stop = rel_tol * s.dot(&s).sqrt();
    let mut p = s.clone();
    let mut gamma = s.dot(&s);
    for _ in 0..max_iter {
        if gamma.sqrt() <= stop || gamma == 0.0 {
            break;
        }
        let q = a.dot(&p);
        let qq = q.dot(&q);
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        x.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &q);
        s = a.t().dot(&r);
        let gamma_next = s.dot(&s);
        let ratio = gamma_next / gamma;
        gamma = gamma_next;
        p = &s + &(p * ratio);
    }
    x
}

/// Smallest pivot ratio `L_jj² / max_i G_ii` accepted by [`cholesky_solve`].
pub const CHOLESKY_MIN_PIVOT: f64 = 1e-10;

/// Solves `G x = b` for symmetric positive definite `G` by Cholesky.
/// Returns `None` when a pivot falls below `CHOLESKY_MIN_PIVOT` relative to
/// the largest diagonal entry, so callers can fall back to an orthogonal solve.
pub fn cholesky_solve(g: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let p = g.nrows();
    let scale = g.diag().iter().fold(0.0_f64, |m, &v| m.max(v));
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    let mut l = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        let mut d = g[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > CHOLESKY_MIN_PIVOT * scale) {
            return None;
        }
        let ljj = d.sqrt();
        l[[j, j]] = ljj;
        for i in j + 1..p {
            let mut v = g[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / ljj;
        }
    }
    let mut z = b.clone();
    for i in 0..p {
        for k in 0..i {
            z[i] -= l[[i, k]] * z[k];
        }
        z[i] /= l[[i, i]];
    }
    for i in (0..p).rev() {
        for k in i + 1..p {
            z[i] -= l[[k, i]] * z[k];
        }
        z[i] /= l[[i, i]];
    }
    Some(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn normal_residual(a: &Array2<f64>, b: &Array1<f64>, x: &Array1<f64>) -> f64 {
        let r = b - &a.dot(x);
        let g = a.t().dot(&r);
        g.dot(&g).sqrt()
    }

    #[test]
    fn square_system() {
        let a = array![[2.0, 1.0], [1.0, 3.0]];
        let b = array![3.0, 5.0];
        let x = lstsq_qr(&a, &b);
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn overdetermined_matches_normal_equations() {
        let a = array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 4.0]];
        let b = array![1.0, 2.0, 2.5, 5.0];
        let x = lstsq_qr(&a, &b);
        assert!(normal_residual(&a, &b, &x) < 1e-12);
        let y = lstsq_cg(&a, &b, 1e-14, 100);
        assert!((&x - &y).iter().all(|d| d.abs() < 1e-10));
    }

    #[test]
    fn rank_deficient_returns_minimum_norm() {
        // Duplicate columns: any split x0 + x1 = 2 fits, min norm is (1, 1).
        let a = array![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]];
        let b = array![2.0, 2.0, 2.0];
        let x = lstsq_qr(&a, &b);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
        let y = lstsq_cg(&a, &b, 1e-14, 100);
        assert!((&x - &y).iter().all(|d| d.abs() < 1e-10));
    }

    #[test]
    fn wide_system_minimum_norm() {
        let a = array![[1.0, 2.0, 3.0]];
        let b = array![14.0];
        let x = lstsq_qr(&a, &b);
        // x = aᵀ (a aᵀ)^{-1} b = (1, 2, 3)
        for (got, want) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_matrix() {
        let a = Array2::zeros((3, 2));
        let x = lstsq_qr(&a, &array![1.0, 2.0, 3.0]);
        assert_eq!(x, array![0.0, 0.0]);
    }

    #[test]
    fn cholesky_matches_qr_and_rejects_singular() {
        let a = array![
            [2.0, 1.0, 0.0],
            [1.0, 3.0, 1.0],
            [0.0, 1.0, 4.0],
            [1.0, 0.0, 1.0]
        ];
        let b = array![1.0, -2.0, 0.5, 3.0];
        let g = a.t().dot(&a);
        let x = cholesky_solve(&g, &a.t().dot(&b)).unwrap();
        let y = lstsq_qr(&a, &b);
        assert!((&x - &y).iter().all(|v| v.abs() < 1e-12));
        let sing = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(cholesky_solve(&sing, &array![1.0, 1.0]).is_none());
    }
}
