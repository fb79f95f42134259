//! Euclidean projections onto the constraint sets used by the indicator and
//! distance penalties, and banded fusion matrices `D` for constraints of the
//! form `Dβ ∈ C`.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, L2eError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintSet {
    /// `β_1 ≤ β_2 ≤ … ≤ β_p`
    Isotonic,
    /// At most `k` nonzero entries.
    Sparse(usize),
    Nonnegative,
    WholeSpace,
}

impl ConstraintSet {
    pub fn project(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        match *self {
            ConstraintSet::Isotonic => project_isotonic(v, Array1::ones(v.len()).view()),
            ConstraintSet::Sparse(k) => {
                if k == 0 {
                    return Err(L2eError::InvalidArgument(
                        "sparsity level must be at least 1".into(),
                    ));
                }
                Ok(project_sparse(v, k))
            }
            ConstraintSet::Nonnegative => Ok(project_nonneg(v)),
            ConstraintSet::WholeSpace => Ok(v.to_owned()),
        }
    }

    /// Euclidean distance from `v` to the set.
    pub fn distance(&self, v: ArrayView1<f64>) -> Result<f64> {
        let p = self.project(v)?;
        Ok((&v - &p).mapv(|d| d * d).sum().sqrt())
    }
}

#[derive(Debug, Clone, Copy)]
struct Block {
    weighted_sum: f64,
    weight: f64,
    len: usize,
}

impl Block {
    fn mean(&self) -> f64 {
        self.weighted_sum / self.weight
    }
}

/// Weighted isotonic regression by pool-adjacent-violators:
/// `argmin Σ w_i (v_i − β_i)²` over nondecreasing `β`. Linear time.
pub fn project_isotonic(v: ArrayView1<f64>, w: ArrayView1<f64>) -> Result<Array1<f64>> {
    check_len("isotonic weights", v.len(), w.len())?;
    if let Some(bad) = w.iter().find(|&&wi| !(wi > 0.0 && wi.is_finite())) {
        return Err(L2eError::InvalidArgument(format!(
            "isotonic weights must be positive and finite, got {bad}"
        )));
    }
    let mut stack: Vec<Block> = Vec::with_capacity(v.len());
    for (&vi, &wi) in v.iter().zip(w.iter()) {
        stack.push(Block {
            weighted_sum: wi * vi,
            weight: wi,
            len: 1,
        });
        while stack.len() >= 2 {
            let last = stack[stack.len() - 1];
            let prev = stack[stack.len() - 2];
            if prev.mean() <= last.mean() {
                break;
            }
            stack.pop();
            let top = stack.last_mut().expect("two blocks present");
            top.weighted_sum += last.weighted_sum;
            top.weight += last.weight;
            top.len += last.len;
        }
    }
    let mut out = Array1::zeros(v.len());
    let mut i = 0;
    for b in &stack {
        let m = b.mean();
        out.slice_mut(ndarray::s![i..i + b.len]).fill(m);
        i += b.len;
    }
    Ok(out)
}

/// Nonincreasing isotonic fit: `−P_inc(−v)`.
pub fn project_antitonic(v: ArrayView1<f64>, w: ArrayView1<f64>) -> Result<Array1<f64>> {
    let neg = v.mapv(|x| -x);
    Ok(project_isotonic(neg.view(), w)?.mapv(|x| -x))
}

/// Keeps the `k` largest-magnitude entries; ties at the cutoff keep the
/// lower index.
pub fn project_sparse(v: ArrayView1<f64>, k: usize) -> Array1<f64> {
    if k >= v.len() {
        return v.to_owned();
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    let mut out = Array1::zeros(v.len());
    for &i in &order[..k] {
        out[i] = v[i];
    }
    out
}

pub fn project_nonneg(v: ArrayView1<f64>) -> Array1<f64> {
    v.mapv(|x| x.max(0.0))
}

/// Banded matrix whose row `i` holds `stencil` starting at column `i`.
/// Identity and finite-difference operators both fit this shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionMatrix {
    rows: usize,
    cols: usize,
    stencil: Vec<f64>,
}

impl FusionMatrix {
    pub fn identity(p: usize) -> Self {
        FusionMatrix {
            rows: p,
            cols: p,
            stencil: vec![1.0],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn stencil(&self) -> &[f64] {
        &self.stencil
    }

    pub fn is_identity(&self) -> bool {
        self.rows == self.cols && self.stencil == [1.0]
    }

    /// `Dβ`
    pub fn apply(&self, beta: ArrayView1<f64>) -> Array1<f64> {
        (0..self.rows)
            .map(|i| {
                self.stencil
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c * beta[i + j])
                    .sum()
            })
            .collect()
    }

    /// `Dᵀv`
    pub fn apply_transpose(&self, v: ArrayView1<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(self.cols);
        for (i, &vi) in v.iter().enumerate() {
            for (j, c) in self.stencil.iter().enumerate() {
                out[i + j] += c * vi;
            }
        }
        out
    }

    /// Adds `scale · DᵀD` to `g` without forming `D`.
    pub fn add_gram_to(&self, g: &mut Array2<f64>, scale: f64) {
        for i in 0..self.rows {
            for (a, &ca) in self.stencil.iter().enumerate() {
                for (b, &cb) in self.stencil.iter().enumerate() {
                    g[[i + a, i + b]] += scale * ca * cb;
                }
            }
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.rows, self.cols));
        for i in 0..self.rows {
            for (j, &c) in self.stencil.iter().enumerate() {
                d[[i, i + j]] = c;
            }
        }
        d
    }
}

/// Finite-difference operator of the given order on `n` points:
/// `(n − order) × n` with rows `(−1, 1)` for order 1 and `(1, −2, 1)` for
/// order 2.
pub fn difference_matrix(n: usize, order: usize) -> Result<FusionMatrix> {
    if order == 0 {
        return Err(L2eError::InvalidArgument(
            "difference order must be at least 1".into(),
        ));
    }
    if n < order + 1 {
        return Err(L2eError::InvalidArgument(format!(
            "order-{order} differences need at least {} points, got {n}",
            order + 1
        )));
    }
    // Coefficients of (x − 1)^order, lowest power first with sign (−1)^(order−j).
    let mut stencil = vec![1.0];
    for _ in 0..order {
        let mut next = vec![0.0; stencil.len() + 1];
        for (j, &c) in stencil.iter().enumerate() {
            next[j] -= c;
            next[j + 1] += c;
        }
        stencil = next;
    }
    Ok(FusionMatrix {
        rows: n - order,
        cols: n,
        stencil,
    })
}
