//! Design and penalty matrices for the structured base learners.
//!
//! Designs are stored row-sparse ([`SparseRows`]) because every basis used here has
//! few non-zeros per row: `degree + 1` for B-splines, one for dummy codes and
//! `(degree + 1)^2` for tensor products. A centered spline is a sparse B-spline
//! basis followed by a dense `q x (q - 2)` projection, see [`Design`].

use serde::{Deserialize, Serialize};

use crate::error::BasisError;
use crate::linalg::{kron, psd_rank, Matrix, SpdSolver, Vector};

/// Upper bound on the width of a tensor-product design.
pub const MAX_TENSOR_WIDTH: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    n_cols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseRows {
    pub fn with_capacity(n_cols: usize, n_rows: usize, nnz_per_row: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        row_ptr.push(0);
        SparseRows {
            n_cols,
            row_ptr,
            cols: Vec::with_capacity(n_rows * nnz_per_row),
            vals: Vec::with_capacity(n_rows * nnz_per_row),
        }
    }

    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, f64)>) {
        for (c, v) in entries {
            debug_assert!(c < self.n_cols);
            self.cols.push(c as u32);
            self.vals.push(v);
        }
        self.row_ptr.push(self.cols.len());
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n_rows(), self.n_cols);
        for i in 0..self.n_rows() {
            let (c, v) = self.row(i);
            for (&c, &v) in c.iter().zip(v) {
                m[(i, c as usize)] += v;
            }
        }
        m
    }

    /// `Xᵀ r`
    pub fn t_mul(&self, r: &[f64]) -> Vector {
        let mut out = vec![0.0; self.n_cols];
        for (i, &ri) in r.iter().enumerate() {
            let (c, v) = self.row(i);
            for (&c, &v) in c.iter().zip(v) {
                out[c as usize] += v * ri;
            }
        }
        Vector::from_vec(out)
    }

    /// `X β`
    pub fn mul(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n_rows())
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&c, &v)| v * beta[c as usize]).sum()
            })
            .collect()
    }

    /// `XᵀX`
    pub fn gram(&self) -> Matrix {
        let q = self.n_cols;
        let mut g = vec![0.0; q * q];
        for i in 0..self.n_rows() {
            let (c, v) = self.row(i);
            for (a, &ca) in c.iter().enumerate() {
                let row = ca as usize * q;
                let va = v[a];
                for (b, &cb) in c.iter().enumerate() {
                    g[row + cb as usize] += va * v[b];
                }
            }
        }
        Matrix::from_row_slice(q, q, &g)
    }
}

/// A design matrix `X = raw · T` with an optional dense right factor `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub raw: SparseRows,
    pub transform: Option<Matrix>,
}

impl Design {
    pub fn sparse(raw: SparseRows) -> Self {
        Design { raw, transform: None }
    }

    pub fn n_rows(&self) -> usize {
        self.raw.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.transform.as_ref().map_or(self.raw.n_cols(), |t| t.ncols())
    }

    pub fn t_mul(&self, r: &[f64]) -> Vector {
        let raw = self.raw.t_mul(r);
        match &self.transform {
            Some(t) => t.tr_mul(&raw),
            None => raw,
        }
    }

    pub fn mul(&self, theta: &[f64]) -> Vec<f64> {
        match &self.transform {
            Some(t) => {
                let beta = t * Vector::from_column_slice(theta);
                self.raw.mul(beta.as_slice())
            }
            None => self.raw.mul(theta),
        }
    }

    pub fn gram(&self) -> Matrix {
        let g = self.raw.gram();
        match &self.transform {
            Some(t) => t.transpose() * g * t,
            None => g,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let d = self.raw.to_dense();
        match &self.transform {
            Some(t) => d * t,
            None => d,
        }
    }
}

// ---------------------------------------------------------------------------
// B-splines

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    pub interior: Vec<f64>,
    pub degree: usize,
    pub min: f64,
    pub max: f64,
}

impl KnotVector {
    pub fn new(interior: Vec<f64>, degree: usize, min: f64, max: f64) -> Result<Self, BasisError> {
        let kv = KnotVector {
            interior,
            degree,
            min,
            max,
        };
        kv.validate()?;
        Ok(kv)
    }

    /// `n_interior` equidistant interior knots over `[min, max]`.
    pub fn equidistant(min: f64, max: f64, n_interior: usize, degree: usize) -> Result<Self, BasisError> {
        if !(min < max) || !min.is_finite() || !max.is_finite() {
            return Err(BasisError::DegenerateRange { min, max });
        }
        let step = (max - min) / (n_interior + 1) as f64;
        let interior = (1..=n_interior).map(|i| min + step * i as f64).collect();
        KnotVector::new(interior, degree, min, max)
    }

    pub fn validate(&self) -> Result<(), BasisError> {
        if !(self.min < self.max) {
            return Err(BasisError::DegenerateRange {
                min: self.min,
                max: self.max,
            });
        }
        let sorted = self.interior.windows(2).all(|w| w[0] <= w[1])
            && self.interior.iter().all(|&k| k >= self.min && k <= self.max);
        if !sorted {
            return Err(BasisError::UnsortedKnots);
        }
        if self.dim() < 1 {
            return Err(BasisError::NoBasisFunctions);
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.interior.len() + self.degree + 1
    }

    /// Boundary knots replicated `degree + 1` times on each side around the interior knots.
    pub fn full(&self) -> Vec<f64> {
        let p = self.degree;
        let mut t = Vec::with_capacity(self.interior.len() + 2 * (p + 1));
        t.extend(std::iter::repeat_n(self.min, p + 1));
        t.extend_from_slice(&self.interior);
        t.extend(std::iter::repeat_n(self.max, p + 1));
        t
    }

    /// Evaluate the `degree + 1` non-zero basis functions at `x` (clamped to the
    /// boundary). Returns the index of the first non-zero function.
    pub fn eval_nonzero(&self, knots: &[f64], x: f64, out: &mut [f64]) -> usize {
        let p = self.degree;
        let n = self.dim() - 1;
        let x = x.clamp(self.min, self.max);
        // span index s with knots[s] <= x < knots[s + 1]
        let span = if x >= knots[n + 1] {
            n
        } else {
            let (mut lo, mut hi) = (p, n + 1);
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if x < knots[mid] {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            lo
        };
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        out[0] = 1.0;
        for j in 1..=p {
            left[j] = x - knots[span + 1 - j];
            right[j] = knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { out[r] / denom };
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
        span - p
    }
}

/// Cox–de Boor evaluation of all basis functions at every `x`; inputs outside the
/// boundary are clamped.
pub fn bspline_design(x: &[f64], kv: &KnotVector) -> Result<SparseRows, BasisError> {
    kv.validate()?;
    let knots = kv.full();
    let p = kv.degree;
    let mut out = SparseRows::with_capacity(kv.dim(), x.len(), p + 1);
    let mut buf = vec![0.0; p + 1];
    for &xi in x {
        let first = kv.eval_nonzero(&knots, xi, &mut buf);
        out.push_row(buf.iter().enumerate().map(|(k, &v)| (first + k, v)));
    }
    Ok(out)
}

/// `DᵀD` for the `order`-th forward-difference operator on `dim` coefficients.
pub fn difference_penalty(order: usize, dim: usize) -> Result<Matrix, BasisError> {
    if order == 0 || dim <= order {
        return Err(BasisError::PenaltyDimension { order, dim });
    }
    let mut d = Matrix::identity(dim, dim);
    for _ in 0..order {
        let r = d.nrows();
        let next = d.rows(1, r - 1) - d.rows(0, r - 1);
        d = next;
    }
    Ok(d.transpose() * d)
}

/// Projection from a raw spline basis onto the part orthogonal (on the training
/// sample) to the affine functions of the feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteringTransform {
    pub projection: Matrix,
}

/// Returns the transform, the centered design `B·T` and the penalty `TᵀPT`.
pub fn center_spline_basis(
    basis: &SparseRows,
    x: &[f64],
    penalty: &Matrix,
) -> Result<(CenteringTransform, Design, Matrix), BasisError> {
    let q = basis.n_cols();
    let n = basis.n_rows();
    if x.len() != n || penalty.nrows() != q {
        return Err(BasisError::Dimension(format!(
            "basis {n}x{q}, x {}, penalty {}",
            x.len(),
            penalty.nrows()
        )));
    }
    if n < q || q < 3 {
        return Err(BasisError::RankDeficient(format!(
            "centering needs n >= q >= 3 (n = {n}, q = {q})"
        )));
    }
    // Cᵀ = Bᵀ [1 x]  (q x 2)
    let ones = vec![1.0; n];
    let c0 = basis.t_mul(&ones);
    let c1 = basis.t_mul(x);
    let mut a = Matrix::zeros(q, 2);
    a.set_column(0, &c0);
    a.set_column(1, &c1);
    let mut qm = Matrix::identity(q, q);
    let mut diag = [0.0f64; 2];
    for k in 0..2 {
        let col: Vec<f64> = (k..q).map(|i| a[(i, k)]).collect();
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            diag[k] = 0.0;
            continue;
        }
        let alpha = if col[0] > 0.0 { -norm } else { norm };
        let mut v = col;
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            diag[k] = alpha;
            continue;
        }
        for j in k..2 {
            let dot: f64 = (k..q).map(|i| v[i - k] * a[(i, j)]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..q {
                a[(i, j)] -= f * v[i - k];
            }
        }
        for r in 0..q {
            let dot: f64 = (k..q).map(|i| qm[(r, i)] * v[i - k]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..q {
                qm[(r, i)] -= f * v[i - k];
            }
        }
        diag[k] = a[(k, k)];
    }
    let scale = diag[0].abs().max(a[(0, 1)].abs());
    if scale == 0.0 || diag[1].abs() <= 1e-10 * scale {
        return Err(BasisError::RankDeficient(
            "feature is constant on the training data".into(),
        ));
    }
    let t = qm.columns(2, q - 2).into_owned();
    let pen = t.transpose() * penalty * &t;
    let pen = (&pen + pen.transpose()) * 0.5;
    let design = Design {
        raw: basis.clone(),
        transform: Some(t.clone()),
    };
    Ok((CenteringTransform { projection: t }, design, pen))
}

/// Row-wise Kronecker product of two designs with the Kronecker-sum penalty
/// `Pa ⊗ I + I ⊗ Pb`.
pub fn tensor_product(
    a: &SparseRows,
    b: &SparseRows,
    pen_a: &Matrix,
    pen_b: &Matrix,
) -> Result<(SparseRows, Matrix), BasisError> {
    if a.n_rows() != b.n_rows() {
        return Err(BasisError::Dimension(format!(
            "row counts differ: {} vs {}",
            a.n_rows(),
            b.n_rows()
        )));
    }
    let (qa, qb) = (a.n_cols(), b.n_cols());
    let width = qa.saturating_mul(qb);
    if width > MAX_TENSOR_WIDTH {
        return Err(BasisError::TooWide {
            width,
            limit: MAX_TENSOR_WIDTH,
        });
    }
    if pen_a.nrows() != qa || pen_b.nrows() != qb {
        return Err(BasisError::Dimension("penalty does not match design width".into()));
    }
    let mut out = SparseRows::with_capacity(width, a.n_rows(), 16);
    for i in 0..a.n_rows() {
        let (ca, va) = a.row(i);
        let (cb, vb) = b.row(i);
        let mut entries = Vec::with_capacity(ca.len() * cb.len());
        for (&ia, &xa) in ca.iter().zip(va) {
            for (&ib, &xb) in cb.iter().zip(vb) {
                entries.push((ia as usize * qb + ib as usize, xa * xb));
            }
        }
        out.push_row(entries);
    }
    let pen = kron(pen_a, &Matrix::identity(qb, qb)) + kron(&Matrix::identity(qa, qa), pen_b);
    Ok((out, pen))
}

/// One column per level, exactly one indicator per row.
pub fn dummy_encode(codes: &[u32], n_levels: usize) -> Result<SparseRows, BasisError> {
    if n_levels == 0 {
        return Err(BasisError::EmptyColumn);
    }
    let mut out = SparseRows::with_capacity(n_levels, codes.len(), 1);
    for &c in codes {
        if c as usize >= n_levels {
            return Err(BasisError::Dimension(format!(
                "level code {c} outside 0..{n_levels} (missing values must be imputed first)"
            )));
        }
        out.push_row([(c as usize, 1.0)]);
    }
    Ok(out)
}

/// `trace(X (XᵀX + λP)⁻¹ Xᵀ) = trace((G + λP)⁻¹ G)` with `G = XᵀX`.
pub fn hat_trace(gram: &Matrix, penalty: &Matrix, lambda: f64) -> Result<f64, BasisError> {
    let a = gram + penalty * lambda;
    let solver = SpdSolver::new(&a)?;
    Ok(solver.solve_matrix(gram).trace())
}

fn unpenalized_rank(gram: &Matrix, penalty: &Matrix) -> usize {
    let eig = penalty.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = max * 1e-10 * penalty.nrows() as f64;
    let null: Vec<usize> = (0..penalty.nrows()).filter(|&i| eig.eigenvalues[i] <= tol).collect();
    if null.is_empty() {
        return 0;
    }
    let z = Matrix::from_fn(penalty.nrows(), null.len(), |r, c| eig.eigenvectors[(r, null[c])]);
    psd_rank(&(z.transpose() * gram * &z))
}

/// Smoothing parameter giving the requested effective degrees of freedom.
///
/// Returns 0 when `df` is at least the rank of the design. Otherwise the trace is
/// matched to `df` by a bracketed secant (Illinois) search on `log λ`.
pub fn df_to_lambda(gram: &Matrix, penalty: &Matrix, df: f64) -> Result<f64, BasisError> {
    if gram.shape() != penalty.shape() || !gram.is_square() {
        return Err(BasisError::Dimension("gram and penalty shapes differ".into()));
    }
    if !(df > 0.0) {
        return Err(BasisError::DfUnreachable { df, limit: 0.0 });
    }
    let rank = psd_rank(gram);
    if df >= rank as f64 - 1e-9 {
        return Ok(0.0);
    }
    let tr_p = penalty.trace();
    if tr_p <= 0.0 {
        return Err(BasisError::DfUnreachable { df, limit: rank as f64 });
    }
    // As λ → ∞ the trace falls to the rank of G on the penalty's null space.
    let limit = unpenalized_rank(gram, penalty);
    if df <= limit as f64 + 1e-9 {
        return Err(BasisError::DfUnreachable {
            df,
            limit: limit as f64,
        });
    }
    let scale = (gram.trace() / tr_p).max(f64::MIN_POSITIVE);
    let g = |lam: f64| hat_trace(gram, penalty, lam).map(|t| t - df);

    let mut hi = scale;
    let mut g_hi = g(hi)?;
    let mut tries = 0;
    while g_hi >= 0.0 {
        tries += 1;
        if tries > 40 {
            return Err(BasisError::DfUnreachable { df, limit: g_hi + df });
        }
        hi *= 10.0;
        g_hi = g(hi)?;
    }
    let mut lo = hi / 10.0;
    let mut g_lo = g(lo)?;
    while g_lo <= 0.0 {
        lo /= 10.0;
        g_lo = g(lo)?;
        if lo < scale * 1e-30 {
            return Ok(lo);
        }
    }
    let (mut a, mut ga) = (lo.ln(), g_lo);
    let (mut b, mut gb) = (hi.ln(), g_hi);
    let mut c = b;
    for _ in 0..200 {
        c = b - gb * (b - a) / (gb - ga);
        if !c.is_finite() {
            c = 0.5 * (a + b);
        }
        let gc = g(c.exp())?;
        if gc.abs() < 1e-10 || (b - a).abs() < 1e-13 {
            break;
        }
        if gc * gb < 0.0 {
            a = b;
            ga = gb;
        } else {
            ga *= 0.5;
        }
        b = c;
        gb = gc;
    }
    Ok(c.exp())
}
