//! Compressed-row matrices, block composition, sparse LU and condition
//! estimation.

use std::io::Write;

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat};

use crate::error::{Error, Result};

/// Row-major compressed sparse matrix. Column indices are sorted and unique
/// within each row; explicitly stored zeros count towards `nnz`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixStats {
    pub rows: usize,
    pub cols: usize,
    pub nnz: usize,
}

impl SparseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, row_ptr: vec![0; n_rows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self { n_rows: n, n_cols: n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: d.to_vec() }
    }

    /// Builds the matrix from `(row, col, value)` triplets, summing duplicates.
    ///
    /// Duplicates are summed in the order they appear, so a fixed triplet
    /// sequence always produces bit-identical values.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, c, _) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({r}, {c}) outside a {n_rows} x {n_cols} matrix"
                )));
            }
            counts[r + 1] += 1;
        }
        for r in 0..n_rows {
            counts[r + 1] += counts[r];
        }
        // stable bucket by row
        let mut next = counts.clone();
        let mut bucket = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            bucket[next[r]] = (c, v);
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for r in 0..n_rows {
            let row = &mut bucket[counts[r]..counts[r + 1]];
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.iter();
            if let Some(&(c0, v0)) = iter.next() {
                let (mut c, mut acc) = (c0, v0);
                for &(cc, vv) in iter {
                    if cc == c {
                        acc += vv;
                    } else {
                        col_idx.push(c);
                        values.push(acc);
                        c = cc;
                        acc = vv;
                    }
                }
                col_idx.push(c);
                values.push(acc);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { n_rows, n_cols, row_ptr, col_idx, values })
    }

    /// Dense row-major input; every entry, zero or not, is dropped unless
    /// `keep_zeros`.
    pub fn from_dense(rows: &[Vec<f64>], keep_zeros: bool) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut t = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch("ragged dense input".into()));
            }
            for (c, &v) in row.iter().enumerate() {
                if keep_zeros || v != 0.0 {
                    t.push((r, c, v));
                }
            }
        }
        Self::from_triplets(rows.len(), n_cols, &t)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    /// Stored value at `(r, c)`, `None` if the entry is not in the pattern.
    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).ok().map(|p| vals[p])
    }

    /// `(row, col, value)` for every stored entry, row-major.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols, "matvec dimension");
        (0..self.n_rows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_rows, "matvec_transpose dimension");
        let mut y = vec![0.0; self.n_cols];
        for (r, c, v) in self.triplets() {
            y[c] += v * x[r];
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.n_cols, self.n_rows, &t).expect("transpose keeps bounds")
    }

    /// `self + s * other` on the union of both patterns.
    pub fn add_scaled(&self, other: &Self, s: f64) -> Result<Self> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} + {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let t: Vec<_> = self.triplets().chain(other.triplets().map(|(r, c, v)| (r, c, s * v))).collect();
        Self::from_triplets(self.n_rows, self.n_cols, &t)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> f64 {
        let mut sums = vec![0.0; self.n_cols];
        for (_, c, v) in self.triplets() {
            sums[c] += v.abs();
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.abs_row_sums().into_iter().fold(0.0, f64::max)
    }

    pub fn norm_frobenius(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `|A| 1`.
    pub fn abs_row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.row(r).1.iter().map(|v| v.abs()).sum()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |a_ij - a_ji|` over the union pattern, divided by `max |a_ij|`.
    pub fn symmetry_defect(&self) -> f64 {
        if self.n_rows != self.n_cols {
            return f64::INFINITY;
        }
        let diff = match self.add_scaled(&self.transpose(), -1.0) {
            Ok(d) => d.max_abs(),
            Err(_) => return f64::INFINITY,
        };
        let scale = self.max_abs();
        if scale == 0.0 { 0.0 } else { diff / scale }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, c, v) in self.triplets() {
            d[r][c] = v;
        }
        d
    }

    /// `diag(r) A diag(c)`.
    pub fn scale_rows_cols(&self, r: &[f64], c: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.n_rows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[p] *= r[i] * c[self.col_idx[p]];
            }
        }
        out
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.n_rows, self.n_cols, &t)
            .map_err(|e| Error::Solver(format!("conversion failed: {e:?}")))
    }
}

pub fn matrix_stats(a: &SparseMatrix) -> MatrixStats {
    MatrixStats { rows: a.n_rows(), cols: a.n_cols(), nnz: a.nnz() }
}

/// One block of a block system: `scale * matrix` placed at block position
/// `(row_block, col_block)`.
#[derive(Debug, Clone, Copy)]
pub struct BlockPlacement<'a> {
    pub row_block: usize,
    pub col_block: usize,
    pub matrix: &'a SparseMatrix,
    pub scale: f64,
}

impl<'a> BlockPlacement<'a> {
    pub fn new(row_block: usize, col_block: usize, matrix: &'a SparseMatrix) -> Self {
        Self { row_block, col_block, matrix, scale: 1.0 }
    }

    pub fn scaled(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }
}

/// Square system assembled from blocks.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    /// Start of every block row (and column), plus the total size.
    pub offsets: Vec<usize>,
}

impl BlockSystem {
    pub fn size(&self) -> usize {
        self.matrix.n_rows()
    }

    /// Slice of `x` belonging to block `b`.
    pub fn block<'v>(&self, x: &'v [f64], b: usize) -> &'v [f64] {
        &x[self.offsets[b]..self.offsets[b + 1]]
    }
}

/// Places blocks into one square matrix. Overlapping placements are summed
/// entrywise, over the union of their patterns. `sizes[b]` is the dimension
/// of block row/column `b` and `rhs[b]` its right-hand side part.
pub fn compose_blocks(sizes: &[usize], blocks: &[BlockPlacement<'_>], rhs: &[Vec<f64>]) -> Result<BlockSystem> {
    let mut offsets = vec![0];
    for &s in sizes {
        offsets.push(offsets.last().unwrap() + s);
    }
    let n = *offsets.last().unwrap();
    if rhs.len() != sizes.len() {
        return Err(Error::DimensionMismatch(format!("{} rhs parts for {} blocks", rhs.len(), sizes.len())));
    }
    for (b, (part, &s)) in rhs.iter().zip(sizes).enumerate() {
        if part.len() != s {
            return Err(Error::DimensionMismatch(format!("rhs block {b} has length {} not {s}", part.len())));
        }
    }
    let mut covered = vec![false; sizes.len()];
    let mut t = Vec::with_capacity(blocks.iter().map(|b| b.matrix.nnz()).sum());
    for p in blocks {
        let (rb, cb) = (p.row_block, p.col_block);
        if rb >= sizes.len() || cb >= sizes.len() {
            return Err(Error::DimensionMismatch(format!("block ({rb}, {cb}) out of range")));
        }
        if p.matrix.n_rows() != sizes[rb] || p.matrix.n_cols() != sizes[cb] {
            return Err(Error::DimensionMismatch(format!(
                "block ({rb}, {cb}) is {}x{}, expected {}x{}",
                p.matrix.n_rows(),
                p.matrix.n_cols(),
                sizes[rb],
                sizes[cb]
            )));
        }
        covered[rb] = true;
        t.extend(p.matrix.triplets().map(|(r, c, v)| (offsets[rb] + r, offsets[cb] + c, p.scale * v)));
    }
    if let Some(b) = covered.iter().position(|c| !c) {
        return Err(Error::DimensionMismatch(format!("block row {b} has no entries")));
    }
    let matrix = SparseMatrix::from_triplets(n, n, &t)?;
    Ok(BlockSystem { matrix, rhs: rhs.concat(), offsets })
}

/// Row and column scalings `(r, c)` such that `diag(r) A diag(c)` has every
/// row and column max-norm in `[1/2, 2]` up to convergence of Ruiz's
/// iteration. Factors are powers of two, so applying them is exact. Empty
/// rows and columns keep the factor 1.
pub fn equilibrate(a: &SparseMatrix, iterations: usize) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = (a.n_rows(), a.n_cols());
    let mut r = vec![1.0f64; m];
    let mut c = vec![1.0f64; n];
    let pow2 = |v: f64| if v > 0.0 && v.is_finite() { 2f64.powi(-(v.log2() / 2.0).round() as i32) } else { 1.0 };
    for _ in 0..iterations {
        let mut rmax = vec![0.0f64; m];
        let mut cmax = vec![0.0f64; n];
        for (i, j, v) in a.triplets() {
            let s = (v * r[i] * c[j]).abs();
            rmax[i] = rmax[i].max(s);
            cmax[j] = cmax[j].max(s);
        }
        let mut changed = false;
        for (ri, &mx) in r.iter_mut().zip(&rmax) {
            let f = pow2(mx);
            changed |= f != 1.0;
            *ri *= f;
        }
        for (cj, &mx) in c.iter_mut().zip(&cmax) {
            let f = pow2(mx);
            changed |= f != 1.0;
            *cj *= f;
        }
        if !changed {
            break;
        }
    }
    (r, c)
}

/// Sweeps of the equilibration applied before every factorization.
pub const EQUILIBRATION_SWEEPS: usize = 20;

/// Sparse LU factorization with fill-reducing column ordering and partial
/// pivoting, applied to the equilibrated matrix `diag(r) A diag(c)`.
/// Immutable once built; `solve` may be called from many threads.
pub struct LuFactorization {
    n: usize,
    lu: Lu<usize, f64>,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
}

impl std::fmt::Debug for LuFactorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LuFactorization").field("n", &self.n).finish_non_exhaustive()
    }
}

impl LuFactorization {
    /// Equilibrates and factorizes `a`.
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        Self::with_equilibration(a, EQUILIBRATION_SWEEPS)
    }

    /// Factorizes `a` after `sweeps` equilibration sweeps (`0` factorizes
    /// `a` as given).
    pub fn with_equilibration(a: &SparseMatrix, sweeps: usize) -> Result<Self> {
        if a.n_rows() != a.n_cols() {
            return Err(Error::DimensionMismatch(format!("LU of a {}x{} matrix", a.n_rows(), a.n_cols())));
        }
        if a.n_rows() == 0 {
            return Err(Error::DegenerateInput("empty matrix".into()));
        }
        let (row_scale, col_scale) = equilibrate(a, sweeps);
        let lu = a
            .scale_rows_cols(&row_scale, &col_scale)
            .to_faer()?
            .sp_lu()
            .map_err(|e| Error::Singular(format!("{e:?}")))?;
        Ok(Self { n: a.n_rows(), lu, row_scale, col_scale })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Row and column factors of the equilibration.
    pub fn scaling(&self) -> (&[f64], &[f64]) {
        (&self.row_scale, &self.col_scale)
    }

    fn run(&self, b: &[f64], transpose: bool) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch(format!("rhs length {} for n={}", b.len(), self.n)));
        }
        // A = R^-1 S C^-1, so A^-1 = C S^-1 R and A^-T = R S^-T C
        let (pre, post) = if transpose { (&self.col_scale, &self.row_scale) } else { (&self.row_scale, &self.col_scale) };
        let mut m = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i] * pre[i]);
        if transpose {
            self.lu.solve_transpose_in_place_with_conj(Conj::No, m.as_mut());
        } else {
            self.lu.solve_in_place_with_conj(Conj::No, m.as_mut());
        }
        let x: Vec<f64> = (0..self.n).map(|i| m[(i, 0)] * post[i]).collect();
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(Error::Singular("factorization produced non-finite values".into()))
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.run(b, false)
    }

    /// Solves `A^T x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.run(b, true)
    }

    /// Solves `A x = b` followed by up to `steps` rounds of fixed-precision
    /// iterative refinement; stops once the residual no longer decreases.
    pub fn solve_refined(&self, a: &SparseMatrix, b: &[f64], steps: usize) -> Result<Vec<f64>> {
        let mut x = self.solve(b)?;
        let resid = |x: &[f64]| -> Vec<f64> { a.matvec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect() };
        let mut r = resid(&x);
        let mut rn = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for _ in 0..steps {
            if rn == 0.0 {
                break;
            }
            let d = self.solve(&r)?;
            let cand: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + di).collect();
            let rc = resid(&cand);
            let rcn = rc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !(rcn < rn) {
                break;
            }
            (x, r, rn) = (cand, rc, rcn);
        }
        Ok(x)
    }
}

/// Factorizes `a` and solves `a x = b`.
pub fn lu_solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    LuFactorization::new(a)?.solve(b)
}

/// `||A x - b||_2 / (||A||_F ||x||_2 + ||b||_2)`.
pub fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let r = a.matvec(x);
    let num = r.iter().zip(b).map(|(ri, bi)| (ri - bi).powi(2)).sum::<f64>().sqrt();
    let den = a.norm_frobenius() * norm2(x) + norm2(b);
    if den == 0.0 { num } else { num / den }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Estimates `||B||_1` for an operator given through products with `B` and
/// `B^T` (Hager's method with Higham's safeguards). The result is a lower
/// bound that is almost always within a factor 3 of the true norm.
pub fn norm1_estimate(
    n: usize,
    apply: impl Fn(&[f64]) -> Result<Vec<f64>>,
    apply_t: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    let l1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
    let mut x = vec![1.0 / n as f64; n];
    let mut est = 0.0f64;
    let mut last_j = usize::MAX;
    for _ in 0..5 {
        let y = apply(&x)?;
        let new_est = l1(&y);
        if new_est <= est && last_j != usize::MAX {
            break;
        }
        est = new_est;
        let xi: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
        let z = apply_t(&xi)?;
        let (j, zmax) = z
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bj, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bj, bv) });
        let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
        if zmax <= ztx || j == last_j {
            break;
        }
        x = vec![0.0; n];
        x[j] = 1.0;
        last_j = j;
    }
    // alternating test vector guards against cancellation in the power steps
    let alt: Vec<f64> = (0..n)
        .map(|i| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            s * (1.0 + i as f64 / (n.max(2) - 1) as f64)
        })
        .collect();
    let alt_est = 2.0 * l1(&apply(&alt)?) / (3.0 * n as f64);
    Ok(est.max(alt_est))
}

/// Estimate of the 1-norm condition number `||A||_1 ||A^-1||_1`.
pub fn cond1_estimate(a: &SparseMatrix, lu: &LuFactorization) -> Result<f64> {
    let inv = norm1_estimate(a.n_rows(), |v| lu.solve(v), |v| lu.solve_transpose(v))?;
    Ok(a.norm_1() * inv)
}

/// Estimate of the componentwise (Skeel) condition number
/// `|| |A^-1| |A| ||_inf`, which is invariant under row scaling of `A`.
///
/// With `w = |A| 1` this equals `|| A^-1 diag(w) ||_inf = || diag(w) A^-T ||_1`,
/// estimated through solves with `A` and `A^T`.
pub fn skeel_cond_estimate(a: &SparseMatrix, lu: &LuFactorization) -> Result<f64> {
    let w = a.abs_row_sums();
    norm1_estimate(
        a.n_rows(),
        |v| Ok(lu.solve_transpose(v)?.iter().zip(&w).map(|(x, wi)| x * wi).collect()),
        |v| lu.solve(&v.iter().zip(&w).map(|(x, wi)| x * wi).collect::<Vec<_>>()),
    )
}

/// Estimate of the componentwise condition number at the solution `x`,
/// `|| |A^-1| |A| |x| ||_inf / ||x||_inf`: the factor by which relative
/// componentwise perturbations of `A` and `b` can amplify into the largest
/// entry of `x`.
pub fn componentwise_cond_estimate(a: &SparseMatrix, lu: &LuFactorization, x: &[f64]) -> Result<f64> {
    let xn = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if xn == 0.0 {
        return Ok(0.0);
    }
    let absx: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    let mut w = vec![0.0; a.n_rows()];
    for (i, j, v) in a.triplets() {
        w[i] += v.abs() * absx[j];
    }
    let est = norm1_estimate(
        a.n_rows(),
        |v| Ok(lu.solve_transpose(v)?.iter().zip(&w).map(|(x, wi)| x * wi).collect()),
        |v| lu.solve(&v.iter().zip(&w).map(|(x, wi)| x * wi).collect::<Vec<_>>()),
    )?;
    Ok(est / xn)
}

/// Writes `a` in MatrixMarket coordinate format with 1-based indices.
pub fn write_matrix_market<W: Write>(a: &SparseMatrix, mut out: W) -> std::io::Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz())?;
    for (r, c, v) in a.triplets() {
        writeln!(out, "{} {} {:.17e}", r + 1, c + 1, v)?;
    }
    Ok(())
}
