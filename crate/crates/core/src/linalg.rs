//! Dense complex linear algebra used by the propagators.
//!
//! The matrix exponential is a scaling-and-squaring Padé(13) scheme. Before
//! exponentiating, the matrix is split into the connected components of its
//! sparsity graph; each component is an invariant subspace, so it can be
//! exponentiated on its own. Cavity-QED Hamiltonians conserve excitation
//! number, which makes the components tiny compared to the full space.

use ndarray::{s, Array1, Array2};
use num_complex::Complex64;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

/// Padé(13,13) numerator coefficients b_0..b_13.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

fn one_norm(a: &Array2<Complex64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential of a dense square matrix.
///
/// Exact zeros in the input define the block structure; entries that are
/// structurally zero in the input's invariant-subspace decomposition are
/// exactly zero in the output.
pub fn expm(a: &Array2<Complex64>) -> Array2<Complex64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    let blocks = connected_blocks(a);
    if blocks.len() == 1 {
        return expm_dense(a);
    }
    let mut out = Array2::zeros((n, n));
    for block in blocks {
        let m = block.len();
        if m == 1 {
            let i = block[0];
            out[[i, i]] = a[[i, i]].exp();
            continue;
        }
        let mut sub = Array2::zeros((m, m));
        for (bi, &i) in block.iter().enumerate() {
            for (bj, &j) in block.iter().enumerate() {
                sub[[bi, bj]] = a[[i, j]];
            }
        }
        let e = expm_dense(&sub);
        for (bi, &i) in block.iter().enumerate() {
            for (bj, &j) in block.iter().enumerate() {
                out[[i, j]] = e[[bi, bj]];
            }
        }
    }
    out
}

/// Index sets of the connected components of the undirected graph with an
/// edge (i, j) wherever a[i, j] or a[j, i] is nonzero. Components are sorted
/// by their smallest index.
pub fn connected_blocks(a: &Array2<Complex64>) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if a[[i, j]] != ZERO || a[[j, i]] != ZERO {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

fn expm_dense(a: &Array2<Complex64>) -> Array2<Complex64> {
    let n = a.nrows();
    let norm = one_norm(a);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a.mapv(|z| z / 2f64.powi(squarings));
    let mut e = pade13(&scaled);
    for _ in 0..squarings {
        e = e.dot(&e);
    }
    debug_assert_eq!(e.nrows(), n);
    e
}

fn pade13(a: &Array2<Complex64>) -> Array2<Complex64> {
    let n = a.nrows();
    let b = |k: usize| Complex64::new(PADE13[k], 0.0);
    let ident = Array2::<Complex64>::eye(n);
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);

    let u_inner = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let u_tail = &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &ident * b(1);
    let u = a.dot(&(a6.dot(&u_inner) + u_tail));

    let v_inner = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v_tail = &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &ident * b(0);
    let v = a6.dot(&v_inner) + v_tail;

    solve(&(&v - &u), &(&v + &u)).expect("Pade denominator is nonsingular for scaled input")
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot vanishes.
pub fn solve(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Option<Array2<Complex64>> {
    let n = a.nrows();
    let m = b.ncols();
    let mut aug = Array2::<Complex64>::zeros((n, n + m));
    aug.slice_mut(s![.., ..n]).assign(a);
    aug.slice_mut(s![.., n..]).assign(b);

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&x, &y| aug[[x, col]].norm().total_cmp(&aug[[y, col]].norm()))
            .unwrap();
        if aug[[pivot_row, col]].norm() == 0.0 {
            return None;
        }
        if pivot_row != col {
            for j in 0..(n + m) {
                aug.swap([col, j], [pivot_row, j]);
            }
        }
        let pivot = aug[[col, col]];
        for row in (col + 1)..n {
            let factor = aug[[row, col]] / pivot;
            if factor == ZERO {
                continue;
            }
            for j in col..(n + m) {
                let v = aug[[col, j]];
                aug[[row, j]] -= factor * v;
            }
        }
    }

    let mut x = Array2::<Complex64>::zeros((n, m));
    for row in (0..n).rev() {
        for j in 0..m {
            let mut acc = aug[[row, n + j]];
            for k in (row + 1)..n {
                acc -= aug[[row, k]] * x[[k, j]];
            }
            x[[row, j]] = acc / aug[[row, row]];
        }
    }
    Some(x)
}

/// Row-compressed copy of a dense matrix holding only its nonzero entries.
/// Used on the trajectory hot path, where propagators are block-sparse.
#[derive(Debug, Clone)]
pub struct CompressedOperator {
    dim: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl CompressedOperator {
    pub fn from_dense(a: &Array2<Complex64>) -> Self {
        let dim = a.nrows();
        let mut row_start = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..dim {
            row_start.push(cols.len());
            for j in 0..a.ncols() {
                let z = a[[i, j]];
                if z != ZERO {
                    cols.push(j);
                    vals.push(z);
                }
            }
        }
        row_start.push(cols.len());
        Self {
            dim,
            row_start,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn apply_into(&self, x: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.dim);
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.row_start[i]..self.row_start[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *o = acc;
        }
    }

    pub fn apply(&self, x: &Array1<Complex64>) -> Array1<Complex64> {
        let mut out = Array1::zeros(self.dim);
        self.apply_into(x.as_slice().expect("contiguous state"), out.as_slice_mut().unwrap());
        out
    }

    /// ‖A x‖² without materializing A x.
    pub fn norm_sqr_of_image(&self, x: &[Complex64]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.dim {
            let mut acc = ZERO;
            for k in self.row_start[i]..self.row_start[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            total += acc.norm_sqr();
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_abs_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let z = Array2::<Complex64>::zeros((5, 5));
        assert!(max_abs_diff(&expm(&z), &Array2::eye(5)) < 1e-15);
    }

    #[test]
    fn exp_of_rotation_generator() {
        // exp(-i theta sigma_x) = cos theta I - i sin theta sigma_x
        let theta: f64 = 37.3;
        let a = ndarray::array![[ZERO, c(0.0, -theta)], [c(0.0, -theta), ZERO]];
        let e = expm(&a);
        let expected = ndarray::array![
            [c(theta.cos(), 0.0), c(0.0, -theta.sin())],
            [c(0.0, -theta.sin()), c(theta.cos(), 0.0)]
        ];
        assert!(max_abs_diff(&e, &expected) < 1e-12);
    }

    #[test]
    fn jordan_block_exponential() {
        // exp([[l, 1], [0, l]]) = e^l [[1, 1], [0, 1]]
        let l = c(-0.3, 2.0);
        let a = ndarray::array![[l, ONE], [ZERO, l]];
        let e = expm(&a);
        let el = l.exp();
        let expected = ndarray::array![[el, el], [ZERO, el]];
        assert!(max_abs_diff(&e, &expected) < 1e-13);
    }

    #[test]
    fn block_split_matches_dense_path() {
        let mut a = Array2::<Complex64>::zeros((6, 6));
        // blocks {0, 3}, {1, 4, 5}, {2}
        a[[0, 3]] = c(0.4, -1.0);
        a[[3, 0]] = c(-0.2, 0.7);
        a[[1, 4]] = c(3.0, 0.0);
        a[[4, 5]] = c(0.0, -2.5);
        a[[5, 1]] = c(1.1, 0.1);
        a[[2, 2]] = c(-0.5, 4.0);
        a[[4, 4]] = c(0.0, -9.0);
        assert_eq!(connected_blocks(&a), vec![vec![0, 3], vec![1, 4, 5], vec![2]]);
        let blocked = expm(&a);
        let dense = expm_dense(&a);
        assert!(max_abs_diff(&blocked, &dense) < 1e-12);
        assert_eq!(blocked[[0, 1]], ZERO);
    }

    #[test]
    fn solve_recovers_known_solution() {
        let a = ndarray::array![[c(2.0, 1.0), c(0.0, 1.0)], [c(1.0, 0.0), c(3.0, -1.0)]];
        let x = ndarray::array![[c(1.0, 0.0)], [c(-1.0, 2.0)]];
        let b = a.dot(&x);
        let got = solve(&a, &b).unwrap();
        assert!(max_abs_diff(&got, &x) < 1e-14);
    }

    #[test]
    fn compressed_apply_matches_dense() {
        let a = ndarray::array![[c(1.0, 0.0), ZERO], [c(0.5, 0.5), c(0.0, 2.0)]];
        let x = ndarray::array![c(1.0, -1.0), c(2.0, 0.0)];
        let op = CompressedOperator::from_dense(&a);
        assert_eq!(op.nnz(), 3);
        let y = op.apply(&x);
        let yd = a.dot(&x);
        assert!((y[0] - yd[0]).norm() < 1e-15 && (y[1] - yd[1]).norm() < 1e-15);
        let n2: f64 = yd.iter().map(|z| z.norm_sqr()).sum();
        assert!((op.norm_sqr_of_image(x.as_slice().unwrap()) - n2).abs() < 1e-14);
    }
}
