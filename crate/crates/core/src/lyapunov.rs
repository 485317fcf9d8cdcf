//! Estimation of the top two Lyapunov exponents of a random matrix product
//! and of the spectral gap `λ₁ − λ₂`.
//!
//! Three routes are implemented and kept deliberately independent so they can
//! cross-validate each other:
//!
//! * the QR (Benettin) method: a `p×2` orthonormal frame is pushed through the
//!   product with re-orthonormalization every step, accumulating the log
//!   growth of the two `R` diagonal entries;
//! * the exterior-power route: the top exponent of the compound (second
//!   exterior power) process equals `λ₁ + λ₂`;
//! * the Birkhoff route: `λ₁ − λ₂ = lim −(1/n) log τ(M_n)` where `τ` is the
//!   Birkhoff contraction coefficient of the running product.
//!
//! The Birkhoff route has a finite numerical horizon: once the columns of the
//! renormalized product agree to machine precision, `τ(M_n)` can no longer be
//! resolved in `f64`. The tracker therefore records `log τ` densely while it
//! is resolvable, thins its records geometrically to a bounded count, and
//! closes the estimate at a resolution floor instead of fitting noise.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::cones::{NonNegMatrix, NonNegVector, ScaledProduct};
use crate::error::{Error, Result};
use crate::process_gen::MatrixProcess;

/// Diagonal entries of the per-step triangular factor below this floor are
/// treated as rank deficiency.
pub const R_DIAGONAL_FLOOR: f64 = 1e-300;

/// `ln τ` below this is machine noise for a renormalized `f64` product; the
/// Birkhoff tracker stops there.
pub const LOG_TAU_RESOLUTION_FLOOR: f64 = -30.0;

/// RNG stream id for the compound tracker's start direction and restarts.
const COMPOUND_STREAM: u64 = 0x636f6d70; // "comp"

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn ols_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    sxy / sxx
}

/// QR-method state: orthonormal `p×2` frame plus cumulative `Σ log R_ii`.
#[derive(Debug, Clone)]
pub struct QrEstimator {
    dim: usize,
    frame: [Vec<f64>; 2],
    log_sums: [f64; 2],
    steps: u64,
    rank_deficient_steps: u64,
}

impl QrEstimator {
    /// Starts from the first two coordinate axes. A fixed start keeps
    /// constant diagonal matrices exact and costs only a transient of total
    /// size O(1) in the accumulated logs otherwise.
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidConfig(
                "QR estimator needs dimension >= 2".into(),
            ));
        }
        let mut f0 = vec![0.0; dim];
        let mut f1 = vec![0.0; dim];
        f0[0] = 1.0;
        f1[1] = 1.0;
        Ok(Self {
            dim,
            frame: [f0, f1],
            log_sums: [0.0, 0.0],
            steps: 0,
            rank_deficient_steps: 0,
        })
    }

    /// Frame column orthonormal to `q0`, used when the second direction
    /// collapses: the coordinate axis least aligned with `q0`, orthogonalized.
    fn fallback_direction(q0: &[f64]) -> Vec<f64> {
        let m = q0
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let mut v = vec![0.0; q0.len()];
        v[m] = 1.0;
        let c = dot(&v, q0);
        for (vi, qi) in v.iter_mut().zip(q0) {
            *vi -= c * qi;
        }
        let n = norm2(&v);
        for vi in &mut v {
            *vi /= n;
        }
        v
    }

    /// One Benettin step: multiply the frame by `a`, re-orthonormalize with a
    /// nonnegative-diagonal triangular factor, and accumulate `log R_ii`.
    pub fn step(&mut self, a: &NonNegMatrix) -> Result<()> {
        if a.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: a.dim(),
            });
        }
        let b0 = a.mul_vec(&self.frame[0]);
        let b1 = a.mul_vec(&self.frame[1]);
        let r00 = norm2(&b0);
        let floor_log = R_DIAGONAL_FLOOR.ln();

        let q0 = if r00 < R_DIAGONAL_FLOOR {
            if norm2(&b1) < R_DIAGONAL_FLOOR {
                return Err(Error::EstimatorCollapsed(
                    "transition matrix maps the whole frame to zero".into(),
                ));
            }
            self.rank_deficient_steps += 1;
            self.log_sums[0] += floor_log;
            let mut e = vec![0.0; self.dim];
            e[0] = 1.0;
            e
        } else {
            self.log_sums[0] += r00.ln();
            b0.iter().map(|x| x / r00).collect()
        };

        let r01 = dot(&q0, &b1);
        let mut u: Vec<f64> = b1.iter().zip(&q0).map(|(b, q)| b - r01 * q).collect();
        let r11 = norm2(&u);
        let mut q1 = if r11 < R_DIAGONAL_FLOOR {
            self.rank_deficient_steps += 1;
            self.log_sums[1] += floor_log;
            Self::fallback_direction(&q0)
        } else {
            self.log_sums[1] += r11.ln();
            for x in &mut u {
                *x /= r11;
            }
            u
        };

        // One extra orthogonalization pass keeps the frame orthonormal to
        // ~1e-15 over arbitrarily long runs.
        let c = dot(&q0, &q1);
        for (q1i, q0i) in q1.iter_mut().zip(&q0) {
            *q1i -= c * q0i;
        }
        let n1 = norm2(&q1);
        for x in &mut q1 {
            *x /= n1;
        }

        self.frame = [q0, q1];
        self.steps += 1;
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn rank_deficient_steps(&self) -> u64 {
        self.rank_deficient_steps
    }

    pub fn log_sums(&self) -> [f64; 2] {
        self.log_sums
    }

    pub fn frame(&self) -> (&[f64], &[f64]) {
        (&self.frame[0], &self.frame[1])
    }

    /// Current per-step growth estimates, sorted descending.
    pub fn estimates(&self) -> (f64, f64) {
        let n = self.steps.max(1) as f64;
        let a = self.log_sums[0] / n;
        let b = self.log_sums[1] / n;
        if a >= b {
            (a, b)
        } else {
            (b, a)
        }
    }
}

/// Cumulative estimate over a diagnostic window.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct WindowedEstimate {
    pub end_step: u64,
    pub lambda1: f64,
    pub lambda2: f64,
}

/// Result of a QR run over a matrix stream.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LyapunovEstimate {
    pub lambda1: f64,
    /// `None` encodes `−∞` (more than half of the steps were rank deficient).
    pub lambda2: Option<f64>,
    pub gap: Option<f64>,
    pub steps: u64,
    pub rank_deficient_steps: u64,
    pub burn_in: u64,
    /// Cumulative post-burn-in estimates at evenly spaced checkpoints.
    pub windowed_estimates: Vec<WindowedEstimate>,
    /// Absolute change of (λ̂₁, λ̂₂) between the last two windows.
    pub window_drift: Option<(f64, f64)>,
}

/// QR estimation over a planned number of steps, with burn-in bookkeeping
/// and windowed convergence diagnostics. Drives [`QrEstimator`] so the same
/// run can share its matrix stream with other estimators.
#[derive(Debug, Clone)]
pub struct QrRun {
    est: QrEstimator,
    n_steps: u64,
    burn_in: u64,
    checkpoints: Vec<u64>,
    at_burn_in: [f64; 2],
    windowed: Vec<WindowedEstimate>,
}

impl QrRun {
    pub fn new(dim: usize, n_steps: u64) -> Result<Self> {
        if n_steps < 100 {
            return Err(Error::InvalidConfig(
                "rate estimation needs n_steps >= 100".into(),
            ));
        }
        let burn_in = 100.max(n_steps / 10);
        let span = n_steps.saturating_sub(burn_in);
        let checkpoints: Vec<u64> = (1..=10u64)
            .map(|j| burn_in + j * span / 10)
            .filter(|&s| s > burn_in)
            .collect();
        Ok(Self {
            est: QrEstimator::new(dim)?,
            n_steps,
            burn_in,
            checkpoints,
            at_burn_in: [0.0; 2],
            windowed: Vec::new(),
        })
    }

    pub fn step(&mut self, a: &NonNegMatrix) -> Result<()> {
        self.est.step(a)?;
        let step = self.est.steps();
        if step == self.burn_in {
            self.at_burn_in = self.est.log_sums;
        }
        if step > self.burn_in && self.checkpoints.contains(&step) {
            let len = (step - self.burn_in) as f64;
            let mut pair = [
                (self.est.log_sums[0] - self.at_burn_in[0]) / len,
                (self.est.log_sums[1] - self.at_burn_in[1]) / len,
            ];
            pair.sort_by(|a, b| b.total_cmp(a));
            self.windowed.push(WindowedEstimate {
                end_step: step,
                lambda1: pair[0],
                lambda2: pair[1],
            });
        }
        Ok(())
    }

    pub fn estimator(&self) -> &QrEstimator {
        &self.est
    }

    pub fn finish(self) -> LyapunovEstimate {
        let (l1, l2) = self.est.estimates();
        let degenerate = self.est.rank_deficient_steps * 2 > self.n_steps;
        let lambda2 = (!degenerate).then_some(l2);
        let window_drift = (self.windowed.len() >= 2).then(|| {
            let a = self.windowed[self.windowed.len() - 2];
            let b = self.windowed[self.windowed.len() - 1];
            ((a.lambda1 - b.lambda1).abs(), (a.lambda2 - b.lambda2).abs())
        });
        LyapunovEstimate {
            lambda1: l1,
            lambda2,
            gap: lambda2.map(|l2| l1 - l2),
            steps: self.est.steps(),
            rank_deficient_steps: self.est.rank_deficient_steps,
            burn_in: self.burn_in,
            windowed_estimates: self.windowed,
            window_drift,
        }
    }
}

/// Runs the QR method over `n_steps` draws from the process.
///
/// Deterministic for a deterministic process; the first `max(100, n/10)`
/// steps are excluded from the windowed diagnostics while the headline
/// estimates use every step.
pub fn estimate_top2(process: &mut dyn MatrixProcess, n_steps: u64) -> Result<LyapunovEstimate> {
    let mut run = QrRun::new(process.dim(), n_steps)?;
    for _ in 0..n_steps {
        let a = process.next_matrix();
        run.step(&a)?;
    }
    Ok(run.finish())
}

/// Number of index pairs `i < j` in `0..p`.
pub fn pair_count(p: usize) -> usize {
    p * (p - 1) / 2
}

/// Position of the pair `(i, j)`, `i < j`, in lexicographic order.
pub fn pair_index(p: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < p);
    i * (2 * p - i - 1) / 2 + (j - i - 1)
}

/// Second exterior power of a `p×p` matrix: entries are the `2×2` minors
/// `A[{i,j},{k,l}]`, signs kept.
#[derive(Debug, Clone)]
pub struct CompoundMatrix {
    pairs: usize,
    entries: Vec<f64>, // row-major pairs×pairs
}

impl CompoundMatrix {
    pub fn dim(&self) -> usize {
        self.pairs
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.pairs + col]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.pairs);
        let mut out = vec![0.0; self.pairs];
        for r in 0..self.pairs {
            let row = &self.entries[r * self.pairs..(r + 1) * self.pairs];
            out[r] = dot(row, v);
        }
        out
    }
}

/// Builds the compound (second exterior power) matrix of `a`.
pub fn compound_matrix(a: &NonNegMatrix) -> CompoundMatrix {
    let p = a.dim();
    assert!(p >= 2, "compound matrix needs dimension >= 2");
    let pairs = pair_count(p);
    let mut entries = vec![0.0; pairs * pairs];
    let mut r = 0;
    for i in 0..p {
        for j in (i + 1)..p {
            let mut c = 0;
            for k in 0..p {
                for l in (k + 1)..p {
                    entries[r * pairs + c] = a.get(i, k) * a.get(j, l) - a.get(i, l) * a.get(j, k);
                    c += 1;
                }
            }
            r += 1;
        }
    }
    CompoundMatrix { pairs, entries }
}

/// Normalized vector iteration on the compound process; the accumulated log
/// growth per step estimates `λ₁ + λ₂`.
///
/// The iterate can die exactly: flush steps zero whole coordinate blocks and
/// dyadic share coefficients can snap the normalized bivector onto a
/// decomposable state whose factors the next step maps to collinear vectors.
/// A collapse draws a fresh direction and skips that step's contribution;
/// the growth accumulated before the collapse is kept (each segment measures
/// the same exponent, so segments concatenate).
#[derive(Debug, Clone)]
pub struct CompoundTracker {
    pairs: usize,
    v: Vec<f64>,
    log_sum: f64,
    steps_accumulated: u64,
    restarts: u32,
    rng: ChaCha12Rng,
}

const MAX_COMPOUND_RESTARTS: u32 = 5;

impl CompoundTracker {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidConfig(
                "compound tracker needs dimension >= 2".into(),
            ));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(COMPOUND_STREAM);
        let pairs = pair_count(dim);
        let mut t = Self {
            pairs,
            v: Vec::new(),
            log_sum: 0.0,
            steps_accumulated: 0,
            restarts: 0,
            rng,
        };
        t.v = t.random_unit();
        Ok(t)
    }

    fn random_unit(&mut self) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..self.pairs)
                .map(|_| self.rng.random_range(-1.0..1.0))
                .collect();
            let n = norm2(&v);
            if n > 1e-3 {
                return v.iter().map(|x| x / n).collect();
            }
        }
    }

    pub fn step(&mut self, a: &NonNegMatrix) -> Result<()> {
        let c = compound_matrix(a);
        if c.dim() != self.pairs {
            return Err(Error::DimensionMismatch {
                expected: self.pairs,
                actual: c.dim(),
            });
        }
        let w = c.mul_vec(&self.v);
        let n = norm2(&w);
        if n < 1e-300 {
            self.restarts += 1;
            if self.restarts > MAX_COMPOUND_RESTARTS {
                return Err(Error::EstimatorCollapsed(format!(
                    "compound iterate collapsed {} times",
                    self.restarts
                )));
            }
            self.v = self.random_unit();
            return Ok(());
        }
        self.v = w.iter().map(|x| x / n).collect();
        self.log_sum += n.ln();
        self.steps_accumulated += 1;
        Ok(())
    }

    pub fn restarts(&self) -> u32 {
        self.restarts
    }

    /// Per-step log growth over all accumulated steps: the `λ₁ + λ₂`
    /// estimate.
    pub fn finish(&self) -> Result<f64> {
        if self.steps_accumulated == 0 {
            return Err(Error::EstimatorCollapsed(
                "compound tracker has no accumulated steps".into(),
            ));
        }
        Ok(self.log_sum / self.steps_accumulated as f64)
    }
}

/// Estimates `λ₁ + λ₂` by running the compound tracker over the process.
pub fn estimate_sum_top2_via_compound(
    process: &mut dyn MatrixProcess,
    n_steps: u64,
    seed: u64,
) -> Result<f64> {
    let dim = process.dim();
    if pair_count(dim) > 2000 {
        return Err(Error::InvalidConfig(format!(
            "compound dimension C({dim},2) = {} exceeds the desk-scale limit 2000",
            pair_count(dim)
        )));
    }
    let mut t = CompoundTracker::new(dim, seed)?;
    for _ in 0..n_steps {
        let a = process.next_matrix();
        t.step(&a)?;
    }
    t.finish()
}

/// Gap estimation through `−(1/n) log τ(M_n)`.
///
/// Records `(n, log τ(M_n))` while the contraction is resolvable in `f64`,
/// thinning to at most `2·sample_points` evenly spaced records, and fits an
/// OLS slope over the final half. Fitting the slope of `log τ` against `n`
/// (rather than averaging `−(1/n) log τ`) cancels the O(1) offset that the
/// pre-primitivity transient leaves in the series.
#[derive(Debug, Clone)]
pub struct BirkhoffGapTracker {
    product: ScaledProduct,
    records: Vec<(u64, f64)>,
    cadence: u64,
    max_records: usize,
    saturated: bool,
    steps_fed: u64,
}

impl BirkhoffGapTracker {
    pub fn new(dim: usize, sample_points: usize) -> Result<Self> {
        if sample_points < 4 {
            return Err(Error::InvalidConfig(
                "birkhoff tracker needs sample_points >= 4".into(),
            ));
        }
        Ok(Self {
            product: ScaledProduct::identity(dim),
            records: Vec::new(),
            cadence: 1,
            max_records: 2 * sample_points,
            saturated: false,
            steps_fed: 0,
        })
    }

    pub fn step(&mut self, a: &NonNegMatrix) -> Result<()> {
        self.steps_fed += 1;
        if self.saturated {
            // The contraction already fell below f64 resolution; the estimate
            // is closed and further factors cannot move it.
            return Ok(());
        }
        self.product.multiply_accumulate(a)?;
        if !self.product.steps().is_multiple_of(self.cadence) {
            return Ok(());
        }
        let t = self.product.tau()?;
        if t >= 1.0 {
            return Ok(()); // not yet primitive along this trajectory
        }
        let lt = t.ln();
        if !lt.is_finite() {
            // τ collapsed to exactly 0 (rank-1 product): contraction is
            // instantaneous and below any resolvable slope.
            self.saturated = true;
            return Ok(());
        }
        self.records.push((self.product.steps(), lt));
        if lt <= LOG_TAU_RESOLUTION_FLOOR {
            self.saturated = true;
            return Ok(());
        }
        if self.records.len() >= self.max_records {
            let mut keep = Vec::with_capacity(self.records.len() / 2 + 1);
            for (i, r) in self.records.iter().enumerate() {
                if i % 2 == 0 {
                    keep.push(*r);
                }
            }
            self.records = keep;
            self.cadence *= 2;
        }
        Ok(())
    }

    pub fn records(&self) -> &[(u64, f64)] {
        &self.records
    }

    pub fn saturated(&self) -> bool {
        self.saturated
    }

    pub fn product(&self) -> &ScaledProduct {
        &self.product
    }

    /// Slope-stabilized gap estimate over the final half of the records.
    pub fn finish(&self) -> Result<f64> {
        if self.records.len() < 2 {
            return Err(Error::NotPrimitive {
                horizon: self.steps_fed,
            });
        }
        let start = self.records.len() / 2;
        let tail = if self.records.len() - start >= 2 {
            &self.records[start..]
        } else {
            &self.records[self.records.len() - 2..]
        };
        let pts: Vec<(f64, f64)> = tail.iter().map(|&(n, lt)| (n as f64, lt)).collect();
        Ok(-ols_slope(&pts))
    }
}

/// Convenience wrapper: run the Birkhoff tracker over `n_steps` draws.
pub fn birkhoff_gap_estimate(
    process: &mut dyn MatrixProcess,
    n_steps: u64,
    sample_points: usize,
) -> Result<f64> {
    let mut t = BirkhoffGapTracker::new(process.dim(), sample_points)?;
    for _ in 0..n_steps {
        let a = process.next_matrix();
        t.step(&a)?;
    }
    t.finish()
}

/// Monte Carlo mean of `log τ(A₁)` over one-step matrices.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeanLogTau {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
}

/// Estimates `E log τ(A₁)`; `−mean` lower-bounds the spectral gap. The value
/// is 0 (a trivial bound) whenever single steps have mixed rows.
pub fn mean_log_tau(process: &mut dyn MatrixProcess, n_samples: u64) -> Result<MeanLogTau> {
    if n_samples == 0 {
        return Err(Error::InvalidConfig("need at least one sample".into()));
    }
    let mut values = Vec::with_capacity(n_samples as usize);
    for _ in 0..n_samples {
        let a = process.next_matrix();
        values.push(crate::cones::tau(&a)?.ln());
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(MeanLogTau {
        mean,
        std_error: (var / n).sqrt(),
        samples: n_samples,
    })
}

/// Rank-1 first-order picture of a running product: top singular triplet.
#[derive(Debug, Clone)]
pub struct FirstOrderApprox {
    /// Left singular direction, unit norm, zero exactly on zero rows.
    pub u1: NonNegVector,
    /// Right singular direction, unit norm.
    pub v1: NonNegVector,
    /// `log σ₁` of the reconstructed product (includes the log scale).
    pub sigma1_log: f64,
}

/// Top singular triplet of the accumulated product, sign-normalized to
/// nonnegative vectors.
///
/// `v1` comes from a full SVD of the renormalized numeric part; `u1` is then
/// recomputed as `numeric·v1 / σ₁`, which keeps it exactly zero on the
/// structurally zero rows of the product.
pub fn first_order_approx(p: &ScaledProduct) -> Result<FirstOrderApprox> {
    let dim = p.dim();
    let m = nalgebra::DMatrix::from_row_slice(dim, dim, p.numeric());
    let svd = m.svd(false, true);
    let v_t = svd
        .v_t
        .as_ref()
        .expect("svd computed with right singular vectors");
    let top = svd
        .singular_values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or(Error::ZeroMatrix)?;
    let mut v1: Vec<f64> = v_t.row(top).iter().copied().collect();

    // Perron structure makes the top right direction one-signed; flip so the
    // dominant entry is positive and clamp rounding-level negatives.
    let (imax, vmax) = v1
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .expect("nonempty vector");
    if *vmax < 0.0 {
        for x in &mut v1 {
            *x = -*x;
        }
    }
    let scale = v1[imax].abs();
    for x in &mut v1 {
        if *x < 0.0 {
            debug_assert!(*x > -1e-9 * scale, "top singular vector not one-signed");
            *x = 0.0;
        }
    }

    let mut u1 = vec![0.0; dim];
    for i in 0..dim {
        let row = &p.numeric()[i * dim..(i + 1) * dim];
        u1[i] = dot(row, &v1);
    }
    let sigma = norm2(&u1);
    if sigma == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    for x in &mut u1 {
        *x /= sigma;
    }
    // Renormalize v1 (clamping can shift the norm at rounding level).
    let nv = norm2(&v1);
    for x in &mut v1 {
        *x /= nv;
    }
    Ok(FirstOrderApprox {
        u1: NonNegVector::new(u1)?,
        v1: NonNegVector::new(v1)?,
        sigma1_log: sigma.ln() + p.log_scale(),
    })
}
