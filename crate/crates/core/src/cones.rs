//! Geometry of the nonnegative cone: Hilbert projective distance, Birkhoff
//! contraction coefficient, total-variation distance, and numerically stable
//! running matrix products.
//!
//! Two vectors `x`, `y` in the nonnegative orthant are *on the same face* when
//! they are positive on exactly the same coordinates. On a common face the
//! Hilbert distance is
//!
//! ```text
//! h(x, y) = log max_{k,l} (x_k / y_k) / (x_l / y_l)
//! ```
//!
//! over coordinate pairs where the vectors are nonzero, and `h = ∞` across
//! faces. A nonnegative matrix `A` contracts `h` by its Birkhoff coefficient
//! `τ(A) = tanh(φ(A)/4)`, where `φ(A)` is the maximal Hilbert distance between
//! columns of `A`; `τ(A) < 1` exactly when every row of `A` is strictly
//! positive or identically zero.
//!
//! Zero patterns drive everything downstream (row classification, primitivity,
//! node classification), so positivity is tracked as an exact boolean support
//! alongside the floating-point entries and is never re-derived from a
//! tolerance test.

use crate::error::{Error, Result};

/// A nonnegative real number or `+∞`.
///
/// The infinite value is a tagged sentinel rather than `f64::INFINITY` so it
/// cannot silently flow into downstream arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    Infinite,
}

impl ExtendedReal {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(*v),
            ExtendedReal::Infinite => None,
        }
    }

    /// Finite value, panicking on `∞`. For tests and call sites that have
    /// already checked finiteness.
    pub fn expect_finite(&self) -> f64 {
        self.finite().expect("expected a finite extended real")
    }
}

impl std::fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExtendedReal::Finite(v) => write!(f, "{v}"),
            ExtendedReal::Infinite => write!(f, "inf"),
        }
    }
}

/// Support classification of a matrix row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowClass {
    /// Every entry strictly positive.
    Positive,
    /// Every entry zero.
    Zero,
    /// Both positive and zero entries.
    Mixed,
}

/// Nonnegative vector with exact support.
#[derive(Debug, Clone, PartialEq)]
pub struct NonNegVector {
    entries: Vec<f64>,
    support: Vec<bool>,
}

impl NonNegVector {
    /// Builds a vector from nonnegative entries. The support is derived
    /// structurally (`entry > 0`), which is exact because callers construct
    /// entries from explicit shares, never from subtractive arithmetic.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        for &e in &entries {
            if !(e.is_finite() && e >= 0.0) {
                return Err(Error::InvalidEntry(e));
            }
        }
        let support: Vec<bool> = entries.iter().map(|&e| e > 0.0).collect();
        Ok(Self { entries, support })
    }

    /// As [`new`](Self::new), but rejects the all-zero vector.
    pub fn new_nonzero(entries: Vec<f64>) -> Result<Self> {
        let v = Self::new(entries)?;
        if v.is_zero() {
            return Err(Error::ZeroVector);
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn support(&self) -> &[bool] {
        &self.support
    }

    pub fn is_zero(&self) -> bool {
        !self.support.iter().any(|&s| s)
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().sum()
    }
}

/// Dense square nonnegative matrix with exact boolean support.
#[derive(Debug, Clone, PartialEq)]
pub struct NonNegMatrix {
    dim: usize,
    entries: Vec<f64>, // row-major
    support: Vec<bool>,
}

impl NonNegMatrix {
    /// Builds a matrix from row-major nonnegative entries.
    pub fn from_entries(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                actual: entries.len(),
            });
        }
        for &e in &entries {
            if !(e.is_finite() && e >= 0.0) {
                return Err(Error::InvalidEntry(e));
            }
        }
        let support: Vec<bool> = entries.iter().map(|&e| e > 0.0).collect();
        Ok(Self {
            dim,
            entries,
            support,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            entries.extend_from_slice(row);
        }
        Self::from_entries(dim, entries)
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self::from_entries(dim, entries).expect("identity is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.dim + col]
    }

    pub fn supported(&self, row: usize, col: usize) -> bool {
        self.support[row * self.dim + col]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn support(&self) -> &[bool] {
        &self.support
    }

    pub fn is_zero(&self) -> bool {
        !self.support.iter().any(|&s| s)
    }

    /// Every column contains a strictly positive entry.
    pub fn is_column_allowable(&self) -> bool {
        (0..self.dim).all(|j| (0..self.dim).any(|i| self.support[i * self.dim + j]))
    }

    pub fn row_class(&self, row: usize) -> RowClass {
        let r = &self.support[row * self.dim..(row + 1) * self.dim];
        row_class_of(r)
    }

    pub fn column(&self, col: usize) -> NonNegVector {
        let entries: Vec<f64> = (0..self.dim).map(|i| self.get(i, col)).collect();
        NonNegVector::new(entries).expect("column of a valid matrix is valid")
    }

    /// `A·v` for a (possibly signed) vector, skipping structural zeros of `A`.
    ///
    /// Skipping zero entries does not change the floating-point result; it
    /// only avoids touching the dense zero blocks of sparse step matrices.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim, "vector length must match matrix dim");
        let mut out = vec![0.0; self.dim];
        for i in 0..self.dim {
            let row = i * self.dim;
            let mut acc = 0.0;
            for k in 0..self.dim {
                if self.support[row + k] {
                    acc += self.entries[row + k] * v[k];
                }
            }
            out[i] = acc;
        }
        out
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.dim];
        for i in 0..self.dim {
            for j in 0..self.dim {
                sums[j] += self.entries[i * self.dim + j];
            }
        }
        sums
    }

    /// Minimal positive and maximal entry, if any entry is positive.
    pub fn positive_entry_range(&self) -> Option<(f64, f64)> {
        let mut min = f64::INFINITY;
        let mut max = 0.0f64;
        let mut seen = false;
        for (&e, &s) in self.entries.iter().zip(&self.support) {
            if s {
                seen = true;
                min = min.min(e);
                max = max.max(e);
            }
        }
        seen.then_some((min, max))
    }
}

fn row_class_of(support_row: &[bool]) -> RowClass {
    let pos = support_row.iter().filter(|&&s| s).count();
    if pos == support_row.len() {
        RowClass::Positive
    } else if pos == 0 {
        RowClass::Zero
    } else {
        RowClass::Mixed
    }
}

/// Hilbert projective distance of two nonnegative nonzero vectors, via the
/// coordinate-ratio formula.
///
/// Returns `∞` when the supports differ (the vectors are not on the same
/// face), `0` when the vectors are collinear.
pub fn hilbert_distance(x: &NonNegVector, y: &NonNegVector) -> Result<ExtendedReal> {
    if x.is_zero() || y.is_zero() {
        return Err(Error::ZeroVector);
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.support() != y.support() {
        return Ok(ExtendedReal::Infinite);
    }
    // Common support: the maximum of (x_k/y_k)/(x_l/y_l) over coordinate
    // pairs is the quotient of the extreme ratios.
    let mut max_ratio = f64::NEG_INFINITY;
    let mut min_ratio = f64::INFINITY;
    for k in 0..x.len() {
        if x.support()[k] {
            let r = x.entries()[k] / y.entries()[k];
            max_ratio = max_ratio.max(r);
            min_ratio = min_ratio.min(r);
        }
    }
    Ok(ExtendedReal::Finite((max_ratio / min_ratio).ln()))
}

/// Hilbert distance evaluated directly from its definition,
///
/// ```text
/// h(x, y) = log ( inf{λ ≥ 0 : λy − x ≥ 0} / sup{λ ≥ 0 : x − λy ≥ 0} )
/// ```
///
/// by scanning the coordinate constraints on λ. Kept as an independent oracle
/// for [`hilbert_distance`].
pub fn hilbert_distance_by_definition(x: &NonNegVector, y: &NonNegVector) -> Result<ExtendedReal> {
    if x.is_zero() || y.is_zero() {
        return Err(Error::ZeroVector);
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    // inf{λ : λy ≥ x}: each coordinate with y_k > 0 demands λ ≥ x_k/y_k;
    // a coordinate with y_k = 0 < x_k admits no finite λ.
    let mut inf = 0.0f64;
    for k in 0..x.len() {
        if y.support()[k] {
            inf = inf.max(x.entries()[k] / y.entries()[k]);
        } else if x.support()[k] {
            return Ok(ExtendedReal::Infinite);
        }
    }
    // sup{λ : x ≥ λy}: each coordinate with y_k > 0 demands λ ≤ x_k/y_k.
    let mut sup = f64::INFINITY;
    for k in 0..x.len() {
        if y.support()[k] {
            sup = sup.min(x.entries()[k] / y.entries()[k]);
        }
    }
    if sup == 0.0 {
        return Ok(ExtendedReal::Infinite);
    }
    Ok(ExtendedReal::Finite(inf.ln() - sup.ln()))
}

/// Projective diameter `φ(A)` of the image of a nonnegative nonzero matrix:
/// the maximal Hilbert distance between columns.
///
/// `φ(A) = ∞` exactly when some row of `A` mixes positive and zero entries;
/// otherwise it is the log of the maximal cross-ratio over column pairs and
/// strictly positive row pairs.
pub fn phi(a: &NonNegMatrix) -> Result<ExtendedReal> {
    phi_of_parts(a.dim(), a.entries(), a.support())
}

pub(crate) fn phi_of_parts(dim: usize, entries: &[f64], support: &[bool]) -> Result<ExtendedReal> {
    let mut positive_rows = Vec::new();
    let mut any_positive = false;
    for i in 0..dim {
        match row_class_of(&support[i * dim..(i + 1) * dim]) {
            RowClass::Positive => {
                positive_rows.push(i);
                any_positive = true;
            }
            RowClass::Zero => {}
            RowClass::Mixed => {
                // A mixed row puts two columns on different faces.
                return Ok(ExtendedReal::Infinite);
            }
        }
    }
    if !any_positive {
        return Err(Error::ZeroMatrix);
    }
    // All rows positive-or-zero: every column is strictly positive on the
    // positive rows, so all column pairs are on the same face.
    let mut max_log = 0.0f64;
    for i in 0..dim {
        for j in (i + 1)..dim {
            let mut max_ratio = f64::NEG_INFINITY;
            let mut min_ratio = f64::INFINITY;
            for &k in &positive_rows {
                let r = entries[k * dim + i] / entries[k * dim + j];
                max_ratio = max_ratio.max(r);
                min_ratio = min_ratio.min(r);
            }
            let d = (max_ratio / min_ratio).ln();
            max_log = max_log.max(d);
        }
    }
    // A single positive row, or a single column, gives diameter zero; the
    // loop above leaves max_log at 0 in those cases, which is correct.
    if !max_log.is_finite() {
        // Ratio arithmetic can only overflow if an entry underflowed to zero
        // inside a structurally positive row; treat as no contraction.
        return Ok(ExtendedReal::Infinite);
    }
    Ok(ExtendedReal::Finite(max_log))
}

/// Birkhoff contraction coefficient `τ(A) = tanh(φ(A)/4)`, with `τ = 1` when
/// `φ = ∞`.
pub fn tau(a: &NonNegMatrix) -> Result<f64> {
    Ok(match phi(a)? {
        ExtendedReal::Finite(p) => (p / 4.0).tanh(),
        ExtendedReal::Infinite => 1.0,
    })
}

/// Witness pair showing that a matrix with a mixed row (and no zero column)
/// has `τ(A) = 1`.
#[derive(Debug, Clone)]
pub struct TauWitness {
    pub x: NonNegVector,
    pub y: NonNegVector,
    /// `h(Ax, Ay) / h(x, y)`; nondecreasing in `n` with limit 1.
    pub ratio: f64,
    /// Index of the mixed row used for normalization.
    pub mixed_row: usize,
    /// Column with a positive entry in the mixed row (plays the role of the
    /// first coordinate after reindexing).
    pub positive_col: usize,
    /// Column with a zero entry in the mixed row (second coordinate after
    /// reindexing).
    pub zero_col: usize,
}

/// Constructs the vector pair `x = e_pos + (n+1)·e_zero`, `y = e_pos + n·e_zero`
/// aligned with the first mixed row of `A` and evaluates the contraction
/// ratio `h(Ax, Ay)/h(x, y)`.
///
/// Requires a mixed row and no zero column; the chosen indices are reported
/// instead of permuting the matrix.
pub fn tau_witness_sequence(a: &NonNegMatrix, n: u64) -> Result<TauWitness> {
    if n == 0 {
        return Err(Error::WitnessUnavailable("witness index n must be >= 1"));
    }
    if !a.is_column_allowable() {
        return Err(Error::WitnessUnavailable("matrix has a zero column"));
    }
    let dim = a.dim();
    let mixed_row = (0..dim)
        .find(|&i| a.row_class(i) == RowClass::Mixed)
        .ok_or(Error::WitnessUnavailable(
            "every row is strictly positive or zero",
        ))?;
    let positive_col = (0..dim)
        .find(|&j| a.supported(mixed_row, j))
        .expect("mixed row has a positive entry");
    let zero_col = (0..dim)
        .find(|&j| !a.supported(mixed_row, j))
        .expect("mixed row has a zero entry");

    let mut xe = vec![0.0; dim];
    let mut ye = vec![0.0; dim];
    xe[positive_col] = 1.0;
    ye[positive_col] = 1.0;
    xe[zero_col] = (n + 1) as f64;
    ye[zero_col] = n as f64;
    let x = NonNegVector::new_nonzero(xe)?;
    let y = NonNegVector::new_nonzero(ye)?;

    let ax = NonNegVector::new(a.mul_vec(x.entries()))?;
    let ay = NonNegVector::new(a.mul_vec(y.entries()))?;
    let h_xy = hilbert_distance(&x, &y)?.expect_finite();
    let h_axy = hilbert_distance(&ax, &ay)?.expect_finite();
    Ok(TauWitness {
        x,
        y,
        ratio: h_axy / h_xy,
        mixed_row,
        positive_col,
        zero_col,
    })
}

/// Tolerance on `|Σξ − 1|` below which a vector is accepted as a probability
/// vector.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-9;

/// Total variation distance `½·Σ|ξ_i − η_i|` between probability vectors.
pub fn tv_distance(xi: &NonNegVector, eta: &NonNegVector) -> Result<f64> {
    if xi.len() != eta.len() {
        return Err(Error::DimensionMismatch {
            expected: xi.len(),
            actual: eta.len(),
        });
    }
    for v in [xi, eta] {
        let s = v.sum();
        if (s - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(Error::NotProbabilityVector(s));
        }
    }
    let sum: f64 = xi
        .entries()
        .iter()
        .zip(eta.entries())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(0.5 * sum)
}

/// Running product `M_n = A_n ⋯ A_1` stored as a renormalized numeric matrix,
/// an accumulated natural-log scale, and the exact boolean-semiring support.
///
/// The numeric part keeps its maximal entry in `[1/2, 1]`, so `M_n`
/// reconstructs as `numeric · e^{log_scale}` entrywise without overflow or
/// underflow of the scale. Entries whose support is false are exactly `0.0`:
/// zero rows and zero patterns of the true product are preserved bit-exactly,
/// while structurally positive entries may still underflow numerically.
#[derive(Debug, Clone)]
pub struct ScaledProduct {
    dim: usize,
    numeric: Vec<f64>, // row-major, max entry in [1/2, 1]
    log_scale: f64,
    support: Vec<bool>,
    steps: u64,
}

impl ScaledProduct {
    /// Empty product (identity, zero steps).
    pub fn identity(dim: usize) -> Self {
        let id = NonNegMatrix::identity(dim);
        Self {
            dim,
            numeric: id.entries().to_vec(),
            log_scale: 0.0,
            support: id.support().to_vec(),
            steps: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn numeric(&self) -> &[f64] {
        &self.numeric
    }

    pub fn support(&self) -> &[bool] {
        &self.support
    }

    /// Reconstructed entry `numeric[i][j] · e^{log_scale}`.
    pub fn reconstruct(&self, row: usize, col: usize) -> f64 {
        self.numeric[row * self.dim + col] * self.log_scale.exp()
    }

    /// Left-multiplies the accumulated product by `a`: `M ← a · M`.
    ///
    /// The numeric part is renormalized so its maximal entry is 1; the
    /// support is updated in the boolean semiring.
    pub fn multiply_accumulate(&mut self, a: &NonNegMatrix) -> Result<()> {
        if a.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: a.dim(),
            });
        }
        let p = self.dim;
        let mut numeric = vec![0.0; p * p];
        let mut support = vec![false; p * p];
        for i in 0..p {
            for k in 0..p {
                if a.supported(i, k) {
                    let aik = a.get(i, k);
                    let dst = &mut numeric[i * p..(i + 1) * p];
                    let src = &self.numeric[k * p..(k + 1) * p];
                    for j in 0..p {
                        dst[j] += aik * src[j];
                    }
                    let dsts = &mut support[i * p..(i + 1) * p];
                    let srcs = &self.support[k * p..(k + 1) * p];
                    for j in 0..p {
                        dsts[j] |= srcs[j];
                    }
                }
            }
        }
        let max = numeric.iter().fold(0.0f64, |m, &v| m.max(v));
        if max == 0.0 {
            return Err(Error::ProductCollapsed);
        }
        let inv = 1.0 / max;
        for v in &mut numeric {
            *v *= inv;
        }
        // Division can round the former maximum off 1.0 only at the last ulp;
        // it stays within [1/2, 1] regardless.
        self.numeric = numeric;
        self.support = support;
        self.log_scale += max.ln();
        self.steps += 1;
        Ok(())
    }

    /// Per-row support classification, derived from the exact support.
    pub fn row_classification(&self) -> Vec<RowClass> {
        (0..self.dim)
            .map(|i| row_class_of(&self.support[i * self.dim..(i + 1) * self.dim]))
            .collect()
    }

    /// Every row all-positive or all-zero (the product has become weakly
    /// primitive along this trajectory).
    pub fn rows_positive_or_zero(&self) -> bool {
        self.row_classification()
            .iter()
            .all(|c| *c != RowClass::Mixed)
    }

    /// `φ` of the accumulated product; scale-invariant, so evaluated on the
    /// numeric part directly.
    pub fn phi(&self) -> Result<ExtendedReal> {
        phi_of_parts(self.dim, &self.numeric, &self.support)
    }

    /// `τ` of the accumulated product.
    pub fn tau(&self) -> Result<f64> {
        Ok(match self.phi()? {
            ExtendedReal::Finite(p) => (p / 4.0).tanh(),
            ExtendedReal::Infinite => 1.0,
        })
    }

    /// Maximal `log(M_ik / M_jk)` over strictly positive row pairs `(i, j)`
    /// and columns `k`; `None` while fewer than two rows are strictly
    /// positive.
    ///
    /// Divided by the step count this is the subexponentiality witness for
    /// the ratios of product entries.
    pub fn max_log_row_ratio(&self) -> Option<f64> {
        let classes = self.row_classification();
        let rows: Vec<usize> = (0..self.dim)
            .filter(|&i| classes[i] == RowClass::Positive)
            .collect();
        if rows.len() < 2 {
            return None;
        }
        let mut best = 0.0f64;
        for j in 0..self.dim {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for &i in &rows {
                let v = self.numeric[i * self.dim + j];
                min = min.min(v);
                max = max.max(v);
            }
            if min > 0.0 {
                best = best.max((max / min).ln());
            }
        }
        Some(best)
    }
}
