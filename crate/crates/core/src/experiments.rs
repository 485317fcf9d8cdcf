//! End-to-end rate experiments: one shared matrix stream feeds the QR,
//! Birkhoff, and empirical-slope estimators so their agreement is a statement
//! about the same realization; parameter sweeps over the drop rate and the
//! transmit fraction; JSON/CSV reporting.
//!
//! Empirical slopes are fitted on log series computed from the scaled
//! difference vector `y_n = M_n (x₀ − θ w₀)`: the log of the TV distance and
//! of the maximal ratio error are exact sums of a renormalized vector's log
//! and its accumulated scale, so the series stay resolvable over the full
//! horizon instead of flattening at machine precision.

use std::fmt;
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cones::tau;
use crate::error::{Error, Result};
use crate::lyapunov::{
    first_order_approx, pair_count, BirkhoffGapTracker, CompoundTracker, LyapunovEstimate, QrRun,
};
use crate::primitivity::{classify_nodes, weak_primitivity_time, NodeClassification, SupportPattern};
use crate::process_gen::{
    enumerate_range, random_regular_out_digraph, verify_conditions, ConditionReport,
    MatrixProcess, ProcessConfig, StepSampler,
};
use crate::protocol::{Mode, ProtocolState, TransmitFraction};

/// RNG stream id for initial-vector presets.
const INIT_STREAM: u64 = 2;
/// Seed for the compound tracker's start direction, derived from the config
/// seed inside [`run_rate_experiment`].
const COMPOUND_SEED_SALT: u64 = 0x1f2e3d4c;

/// Initial vector: explicit values or a named preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorInit {
    Preset(Preset),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// All-ones weights: ratios converge to the average.
    Average,
    /// `e₁` weights: ratios converge to the sum.
    Sum,
    /// Seeded strictly positive entries in `[0.5, 1.5)`.
    RandomPositive,
}

impl VectorInit {
    pub fn resolve(&self, p: usize, seed: u64) -> Result<Vec<f64>> {
        match self {
            VectorInit::Preset(Preset::Average) => Ok(vec![1.0; p]),
            VectorInit::Preset(Preset::Sum) => {
                let mut v = vec![0.0; p];
                v[0] = 1.0;
                Ok(v)
            }
            VectorInit::Preset(Preset::RandomPositive) => {
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                rng.set_stream(INIT_STREAM);
                Ok((0..p).map(|_| rng.random_range(0.5..1.5)).collect())
            }
            VectorInit::Values(v) => {
                if v.len() != p {
                    return Err(Error::InvalidConfig(format!(
                        "initial vector has {} entries for {p} nodes",
                        v.len()
                    )));
                }
                Ok(v.clone())
            }
        }
    }
}

/// Which estimators a rate experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EstimatorSet {
    pub qr: bool,
    pub birkhoff: bool,
    pub empirical: bool,
    pub compound: bool,
}

impl Default for EstimatorSet {
    fn default() -> Self {
        Self {
            qr: true,
            birkhoff: true,
            empirical: true,
            compound: false,
        }
    }
}

impl EstimatorSet {
    pub fn from_names(names: &[String]) -> Result<Self> {
        let mut set = Self {
            qr: false,
            birkhoff: false,
            empirical: false,
            compound: false,
        };
        for n in names {
            match n.as_str() {
                "qr" => set.qr = true,
                "birkhoff" => set.birkhoff = true,
                "empirical" => set.empirical = true,
                "compound" => set.compound = true,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown estimator '{other}' (expected qr, birkhoff, empirical, compound)"
                    )))
                }
            }
        }
        Ok(set)
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub process: ProcessConfig,
    pub n_steps: u64,
    pub x0: VectorInit,
    pub w0: VectorInit,
    pub estimators: EstimatorSet,
    pub birkhoff_sample_points: usize,
}

impl ExperimentConfig {
    pub fn new(process: ProcessConfig, n_steps: u64) -> Self {
        Self {
            process,
            n_steps,
            x0: VectorInit::Preset(Preset::RandomPositive),
            w0: VectorInit::Preset(Preset::Average),
            estimators: EstimatorSet::default(),
            birkhoff_sample_points: 256,
        }
    }

    /// The 30-node, out-degree-10 asynchronous reference network at a
    /// reduced horizon; the named preset for sweeps at scale.
    pub fn preset_async_30x10(seed: u64) -> Self {
        let topology =
            random_regular_out_digraph(30, 10, 0).expect("30 nodes with out-degree 10 is valid");
        let process = ProcessConfig {
            topology,
            mode: Mode::Async,
            drop_rate: 0.2,
            s: TransmitFraction::Classic,
            seed,
        };
        Self::new(process, 5000)
    }
}

/// Pairwise relative differences between the gap estimates,
/// `|a − b| / max(|a|, |b|)`.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Agreement {
    pub qr_vs_tv: Option<f64>,
    pub qr_vs_birkhoff: Option<f64>,
    pub tv_vs_birkhoff: Option<f64>,
    pub qr_vs_ratio_slope: Option<f64>,
}

pub fn relative_difference(a: f64, b: f64) -> f64 {
    let m = a.abs().max(b.abs());
    if m == 0.0 {
        0.0
    } else {
        (a - b).abs() / m
    }
}

/// Secondary observations attached to a rate report.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RateDiagnostics {
    pub target: f64,
    pub burn_in_steps: u64,
    pub primitivity_time: Option<u64>,
    pub rank_deficient_steps: u64,
    pub windowed_estimates: Vec<crate::lyapunov::WindowedEstimate>,
    pub window_drift: Option<(f64, f64)>,
    /// Recorded (first, last) step of the Birkhoff contraction window.
    pub birkhoff_window: Option<(u64, u64)>,
    pub birkhoff_records: usize,
    /// The contraction fell below float resolution before the horizon.
    pub birkhoff_saturated: bool,
    pub sum_top2_qr: Option<f64>,
    pub sum_top2_compound: Option<f64>,
    /// Consensus target re-estimated from the first-order approximation of
    /// the running product (`v¹x₀ / v¹w₀`); the column-stochastic target is
    /// exact, so this is a cross-check.
    pub v1_target: Option<f64>,
    pub tv_points: usize,
    pub ratio_points: usize,
    pub final_max_ratio_error: Option<f64>,
}

/// The three gap estimates with agreement diagnostics.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RateReport {
    pub lambda1: Option<f64>,
    /// `None` encodes λ₂ = −∞.
    pub lambda2: Option<f64>,
    pub gap_qr: Option<f64>,
    /// `None` means "not primitive within the horizon".
    pub gap_birkhoff: Option<f64>,
    pub slope_tv: Option<f64>,
    pub slope_ratio_error: Option<f64>,
    pub agreement: Agreement,
    pub diagnostics: RateDiagnostics,
}

/// Ordinary-least-squares slope of a `(step, log value)` series after
/// dropping non-finite points and a leading burn-in fraction of the step
/// range.
pub fn fit_slope(series: &[(f64, f64)], burn_in_fraction: f64) -> Result<f64> {
    const MIN_POINTS: usize = 20;
    let max_x = series.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let cutoff = burn_in_fraction * max_x;
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(x, y)| x.is_finite() && y.is_finite() && *x >= cutoff)
        .copied()
        .collect();
    if pts.len() < MIN_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_POINTS,
            got: pts.len(),
        });
    }
    Ok(crate::lyapunov::ols_slope(&pts))
}

/// Runs one trajectory and every enabled estimator on the same matrix
/// stream. Deterministic for a given config.
pub fn run_rate_experiment(config: &ExperimentConfig) -> Result<RateReport> {
    config.process.validate()?;
    if config.process.drop_rate >= 1.0 {
        return Err(Error::DegenerateProcess(
            "drop_rate = 1 delivers nothing; no consensus, no finite rate".into(),
        ));
    }
    if config.n_steps < 1000 {
        return Err(Error::InvalidConfig(
            "rate experiments need n_steps >= 1000".into(),
        ));
    }
    let protocol = config.process.protocol()?;
    let aug = *protocol.augmented();
    let dim = aug.dim();
    let p_real = aug.real_count();
    let n = config.n_steps;

    let x0 = config.x0.resolve(p_real, config.process.seed)?;
    let w0 = config.w0.resolve(p_real, config.process.seed.wrapping_add(1))?;
    let mut state = ProtocolState::new(&aug, &x0, &w0)?;
    let target = state.sum_x() / state.sum_w();
    let sum_x0 = state.sum_x();
    let x_nonneg = x0.iter().all(|&v| v >= 0.0);

    // Scaled difference vector: errors in log form at any depth.
    let mut y: Vec<f64> = state
        .x
        .iter()
        .zip(&state.w)
        .map(|(xv, wv)| xv - target * wv)
        .collect();
    let mut y_log_scale = 0.0f64;
    let mut y_zero = false;
    crate::protocol::deflate_conserved_mode(&mut y);
    crate::protocol::normalize_signed(&mut y, &mut y_log_scale, &mut y_zero);

    let mut sampler = StepSampler::new(&config.process)?;
    let mut qr = config
        .estimators
        .qr
        .then(|| QrRun::new(dim, n))
        .transpose()?;
    let mut birkhoff = if config.estimators.birkhoff {
        Some(BirkhoffGapTracker::new(dim, config.birkhoff_sample_points)?)
    } else {
        None
    };
    let mut compound = if config.estimators.compound {
        if pair_count(dim) > 2000 {
            return Err(Error::InvalidConfig(format!(
                "compound estimator disabled above C(p,2) = 2000 pairs; this lift has C({dim},2) = {}",
                pair_count(dim)
            )));
        }
        Some(CompoundTracker::new(
            dim,
            config.process.seed ^ COMPOUND_SEED_SALT,
        )?)
    } else {
        None
    };

    let mut support_acc = SupportPattern::identity(dim);
    let mut primitivity_time: Option<u64> = None;
    let mut tv_series: Vec<(f64, f64)> = Vec::new();
    let mut ratio_series: Vec<(f64, f64)> = Vec::new();
    let mut final_max_ratio_error: Option<f64> = None;

    for step in 1..=n {
        let (matrix, outcome) = sampler.next_step();
        if let Some(q) = qr.as_mut() {
            q.step(&matrix)?;
        }
        if let Some(b) = birkhoff.as_mut() {
            b.step(&matrix)?;
        }
        if let Some(c) = compound.as_mut() {
            c.step(&matrix)?;
        }
        if primitivity_time.is_none() {
            support_acc = SupportPattern::from_matrix(&matrix).product(&support_acc);
            if support_acc.rows_positive_or_zero() {
                primitivity_time = Some(step);
            }
        }

        state = protocol.step_with(&state, &outcome, config.process.mode)?;
        protocol.apply_outcome(&mut y, &outcome);
        crate::protocol::deflate_conserved_mode(&mut y);
        crate::protocol::normalize_signed(&mut y, &mut y_log_scale, &mut y_zero);

        if config.estimators.empirical {
            // log max_i |y_i| / w_i over supported real coordinates.
            let mut log_err: Option<f64> = None;
            let mut linear_err: Option<f64> = None;
            for i in 0..p_real {
                if state.w_support[i] && state.w[i] > 0.0 {
                    let abs_y = if y_zero { 0.0 } else { y[i].abs() };
                    let lin = if abs_y == 0.0 {
                        0.0
                    } else {
                        (abs_y.ln() + y_log_scale - state.w[i].ln()).exp()
                    };
                    linear_err = Some(linear_err.map_or(lin, |b: f64| b.max(lin)));
                    if abs_y > 0.0 {
                        let le = abs_y.ln() + y_log_scale - state.w[i].ln();
                        log_err = Some(log_err.map_or(le, |b: f64| b.max(le)));
                    }
                }
            }
            if let Some(le) = log_err {
                // An exactly zero error at some node does not matter for the
                // max; a step where *every* defined error is zero is dropped.
                ratio_series.push((step as f64, le));
            }
            final_max_ratio_error = linear_err;

            if x_nonneg && sum_x0 > 0.0 && !y_zero {
                let l1: f64 = y.iter().map(|v| v.abs()).sum();
                let log_tv = (0.5 * l1).ln() + y_log_scale - sum_x0.ln();
                tv_series.push((step as f64, log_tv));
            }
        }
    }

    let estimate: Option<LyapunovEstimate> = qr.map(QrRun::finish);
    let (lambda1, lambda2, gap_qr, sum_top2_qr, rank_deficient_steps) = match &estimate {
        Some(e) => (
            Some(e.lambda1),
            e.lambda2,
            e.gap,
            e.lambda2.map(|l2| e.lambda1 + l2),
            e.rank_deficient_steps,
        ),
        None => (None, None, None, None, 0),
    };

    let (gap_birkhoff, birkhoff_window, birkhoff_records, birkhoff_saturated, v1_target) =
        match &birkhoff {
            Some(b) => {
                let gap = match b.finish() {
                    Ok(g) => Some(g),
                    Err(Error::NotPrimitive { .. }) => None,
                    Err(e) => return Err(e),
                };
                let window = (!b.records().is_empty()).then(|| {
                    (
                        b.records().first().unwrap().0,
                        b.records().last().unwrap().0,
                    )
                });
                // v¹ from the product's first-order approximation: target
                // cross-check v¹x₀/v¹w₀ on the augmented initial vectors.
                let v1_target = first_order_approx(b.product()).ok().and_then(|f| {
                    let v1 = f.v1.entries();
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for i in 0..p_real {
                        num += v1[i] * x0[i];
                        den += v1[i] * w0[i];
                    }
                    (den != 0.0).then(|| num / den)
                });
                (gap, window, b.records().len(), b.saturated(), v1_target)
            }
            None => (None, None, 0, false, None),
        };

    let sum_top2_compound = match &compound {
        Some(c) => Some(c.finish()?),
        None => None,
    };

    let burn_in_steps = primitivity_time.unwrap_or(0).max(n / 10);
    let burn_in_fraction = burn_in_steps as f64 / n as f64;
    let slope_tv = fit_slope(&tv_series, burn_in_fraction).ok();
    let slope_ratio_error = fit_slope(&ratio_series, burn_in_fraction).ok();

    let agreement = Agreement {
        qr_vs_tv: match (gap_qr, slope_tv) {
            (Some(g), Some(s)) => Some(relative_difference(g, s.abs())),
            _ => None,
        },
        qr_vs_birkhoff: match (gap_qr, gap_birkhoff) {
            (Some(g), Some(b)) => Some(relative_difference(g, b)),
            _ => None,
        },
        tv_vs_birkhoff: match (slope_tv, gap_birkhoff) {
            (Some(s), Some(b)) => Some(relative_difference(s.abs(), b)),
            _ => None,
        },
        qr_vs_ratio_slope: match (gap_qr, slope_ratio_error) {
            (Some(g), Some(s)) => Some(relative_difference(g, s.abs())),
            _ => None,
        },
    };

    Ok(RateReport {
        lambda1,
        lambda2,
        gap_qr,
        gap_birkhoff,
        slope_tv,
        slope_ratio_error,
        agreement,
        diagnostics: RateDiagnostics {
            target,
            burn_in_steps,
            primitivity_time,
            rank_deficient_steps,
            windowed_estimates: estimate
                .as_ref()
                .map(|e| e.windowed_estimates.clone())
                .unwrap_or_default(),
            window_drift: estimate.as_ref().and_then(|e| e.window_drift),
            birkhoff_window,
            birkhoff_records,
            birkhoff_saturated,
            sum_top2_qr,
            sum_top2_compound,
            v1_target,
            tv_points: tv_series.len(),
            ratio_points: ratio_series.len(),
            final_max_ratio_error,
        },
    })
}

/// Swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    DropRate,
    TransmitFraction,
}

impl SweepParam {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "drop_rate" => Ok(Self::DropRate),
            "s" => Ok(Self::TransmitFraction),
            other => Err(Error::InvalidConfig(format!(
                "unknown sweep parameter '{other}' (expected drop_rate or s)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::DropRate => "drop_rate",
            Self::TransmitFraction => "s",
        }
    }

    fn validate_value(&self, v: f64) -> Result<()> {
        match self {
            Self::DropRate if (0.0..1.0).contains(&v) => Ok(()),
            Self::DropRate => Err(Error::InvalidConfig(format!(
                "drop_rate grid value {v} outside [0, 1) (1 is the degenerate process)"
            ))),
            Self::TransmitFraction if v > 0.0 && v <= 1.0 => Ok(()),
            Self::TransmitFraction => Err(Error::InvalidConfig(format!(
                "s grid value {v} outside (0, 1]"
            ))),
        }
    }

    fn apply(&self, config: &mut ExperimentConfig, v: f64) {
        match self {
            Self::DropRate => config.process.drop_rate = v,
            Self::TransmitFraction => config.process.s = TransmitFraction::Fixed(v),
        }
    }
}

/// One sweep grid point and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param_name: String,
    pub param_value: f64,
    pub seed: u64,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub gap_qr: Option<f64>,
    pub gap_birkhoff: Option<f64>,
    pub slope_tv: Option<f64>,
    pub slope_ratio_error: Option<f64>,
    pub n_steps: u64,
    pub wall_time_ms: u64,
}

pub const SWEEP_CSV_HEADER: &str = "param_name,param_value,seed,lambda1,lambda2,gap_qr,gap_birkhoff,slope_tv,slope_ratio_error,n_steps,wall_time_ms";

fn fmt_opt(v: Option<f64>, missing: &str) -> String {
    v.map_or_else(|| missing.to_string(), |x| format!("{x}"))
}

impl SweepRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.param_name,
            self.param_value,
            self.seed,
            fmt_opt(self.lambda1, ""),
            fmt_opt(self.lambda2, "-inf"),
            fmt_opt(self.gap_qr, "not primitive"),
            fmt_opt(self.gap_birkhoff, "not primitive"),
            fmt_opt(self.slope_tv, ""),
            fmt_opt(self.slope_ratio_error, ""),
            self.n_steps,
            self.wall_time_ms
        )
    }
}

/// Runs the grid × seeds sweep in parallel; rows are emitted in grid-then-
/// seed order regardless of scheduling. Per-row failures are recorded in the
/// row, never aborting the sweep.
///
/// Wall time is measured only when `timing` is set; otherwise the column is
/// written as 0 so identical configs give byte-identical CSV.
pub fn sweep(
    base: &ExperimentConfig,
    param: SweepParam,
    grid: &[f64],
    seeds: &[u64],
    timing: bool,
) -> Result<Vec<SweepRow>> {
    for &v in grid {
        param.validate_value(v)?;
    }
    let cells: Vec<(f64, u64)> = grid
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(value, seed)| {
            let mut config = base.clone();
            param.apply(&mut config, value);
            config.process.seed = seed;
            let started = Instant::now();
            let report = run_rate_experiment(&config);
            let wall_time_ms = if timing {
                started.elapsed().as_millis() as u64
            } else {
                0
            };
            match report {
                Ok(r) => SweepRow {
                    param_name: param.name().to_string(),
                    param_value: value,
                    seed,
                    lambda1: r.lambda1,
                    lambda2: r.lambda2,
                    gap_qr: r.gap_qr,
                    gap_birkhoff: r.gap_birkhoff,
                    slope_tv: r.slope_tv,
                    slope_ratio_error: r.slope_ratio_error,
                    n_steps: config.n_steps,
                    wall_time_ms,
                },
                Err(_) => SweepRow {
                    param_name: param.name().to_string(),
                    param_value: value,
                    seed,
                    lambda1: None,
                    lambda2: None,
                    gap_qr: None,
                    gap_birkhoff: None,
                    slope_tv: None,
                    slope_ratio_error: None,
                    n_steps: config.n_steps,
                    wall_time_ms,
                },
            }
        })
        .collect();
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}

/// Per-step CSV of a consensus trajectory; undefined values are empty cells.
pub fn trajectory_csv(trajectory: &crate::protocol::Trajectory) -> String {
    let mut out = String::from("step,max_ratio_error,tv_distance\n");
    for r in &trajectory.records {
        out.push_str(&format!(
            "{},{},{}\n",
            r.step,
            fmt_opt(r.max_ratio_error, ""),
            fmt_opt(r.tv_distance, "")
        ));
    }
    out
}

/// Hypothesis verdict for a config: boundedness, primitivity, and node
/// classification.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub conditions: ConditionReport,
    pub classification: NodeClassification,
    /// Weak-primitivity stopping times over probe trials.
    pub primitivity_samples: Vec<Option<u64>>,
    pub column_allowable: bool,
    pub degenerate_drop_rate: bool,
    /// All hypotheses the rate theorems need from a generated process.
    pub hypotheses_satisfied: bool,
}

const CHECK_TRIALS: u64 = 20;
const CHECK_HORIZON: u64 = 1000;

/// Verifies the theorem hypotheses for a generated process.
pub fn check(process: &ProcessConfig) -> Result<CheckReport> {
    process.validate()?;
    let conditions = verify_conditions(process, 1000, process.seed)?;
    let classification = classify_nodes(process, 8, 256)?;

    let mut primitivity_samples = Vec::new();
    for trial in 0..CHECK_TRIALS {
        let mut proc =
            StepSampler::with_stream(process, crate::process_gen::TRIAL_STREAM_BASE + trial)?;
        primitivity_samples.push(weak_primitivity_time(&mut proc, CHECK_HORIZON));
    }

    // Column allowability of the range: structural for our lifts, verified
    // on the enumerated range when available, otherwise on samples.
    let column_allowable = match enumerate_range(process) {
        Ok(range) => range.iter().all(|(m, _)| m.is_column_allowable()),
        Err(Error::RangeTooLarge(_)) => {
            let mut sampler = StepSampler::new(process)?;
            (0..64).all(|_| sampler.next_matrix().is_column_allowable())
        }
        Err(e) => return Err(e),
    };

    let degenerate_drop_rate = process.drop_rate >= 1.0;
    let all_primitive = primitivity_samples.iter().all(|t| t.is_some());
    let hypotheses_satisfied = column_allowable
        && conditions.bounded_condition
        && all_primitive
        && !degenerate_drop_rate;

    Ok(CheckReport {
        conditions,
        classification,
        primitivity_samples,
        column_allowable,
        degenerate_drop_rate,
        hypotheses_satisfied,
    })
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "bounded condition: {} (alpha = {}, beta = {}, {})",
            if self.conditions.bounded_condition {
                "proven (finite range)"
            } else {
                "NOT established"
            },
            self.conditions.alpha_min,
            self.conditions.beta_max,
            if self.conditions.exact {
                format!(
                    "range of {} matrices enumerated",
                    self.conditions.range_size.unwrap_or(0)
                )
            } else {
                "sampled bounds".to_string()
            }
        )?;
        match self.conditions.psi_expectation_estimate {
            Some(psi) => writeln!(
                f,
                "primitivity window E[psi] ~ {psi:.2} over {} trials",
                self.conditions.psi_trials
            )?,
            None => writeln!(
                f,
                "weak primitivity: not reached within {} steps",
                self.conditions.psi_horizon
            )?,
        }
        let reached = self
            .primitivity_samples
            .iter()
            .filter(|t| t.is_some())
            .count();
        writeln!(
            f,
            "weak primitivity reached in {reached}/{} probe trials",
            self.primitivity_samples.len()
        )?;
        writeln!(f, "column allowable: {}", self.column_allowable)?;
        writeln!(f, "real nodes: {:?}", self.classification.real_nodes)?;
        writeln!(f, "virtual nodes: {:?}", self.classification.virtual_nodes)?;
        for w in &self.classification.warnings {
            writeln!(f, "warning: {w}")?;
        }
        write!(
            f,
            "verdict: hypotheses {}",
            if self.hypotheses_satisfied {
                "satisfied"
            } else {
                "NOT satisfied"
            }
        )
    }
}

/// Sanity bound used by tests and the CLI: gap lower bound from one-step
/// contraction coefficients.
pub fn mean_log_tau_bound(process: &ProcessConfig, n_samples: u64) -> Result<f64> {
    let mut sampler = StepSampler::new(process)?;
    let mut sum = 0.0;
    for _ in 0..n_samples.max(1) {
        sum += tau(&sampler.next_matrix())?.ln();
    }
    Ok(-(sum / n_samples.max(1) as f64))
}
