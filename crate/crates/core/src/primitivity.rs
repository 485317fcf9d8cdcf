//! Structural analysis of the matrix process in the boolean support
//! semiring: weak sequential primitivity stopping times, the window index ψ,
//! and real/virtual classification of augmented coordinates.
//!
//! Everything here is exact. Products of support patterns propagate zero/
//! positive information without floating point, so "this row is zero" is a
//! statement about the true product, not about underflow.

use serde::Serialize;

use crate::cones::{NonNegMatrix, RowClass};
use crate::error::Result;
use crate::process_gen::{MatrixProcess, ProcessConfig, StepSampler, TRIAL_STREAM_BASE};
use crate::protocol::build_augmented;

/// Boolean positivity pattern of a square matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportPattern {
    dim: usize,
    bits: Vec<bool>, // row-major
}

impl SupportPattern {
    pub fn identity(dim: usize) -> Self {
        let mut bits = vec![false; dim * dim];
        for i in 0..dim {
            bits[i * dim + i] = true;
        }
        Self { dim, bits }
    }

    pub fn from_matrix(m: &NonNegMatrix) -> Self {
        Self {
            dim: m.dim(),
            bits: m.support().to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.dim + col]
    }

    /// Boolean-semiring product: `(P·Q)_ij = OR_k (P_ik AND Q_kj)`.
    pub fn product(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "support pattern dims must match");
        let p = self.dim;
        let mut bits = vec![false; p * p];
        for i in 0..p {
            for k in 0..p {
                if self.bits[i * p + k] {
                    let src = &rhs.bits[k * p..(k + 1) * p];
                    let dst = &mut bits[i * p..(i + 1) * p];
                    for j in 0..p {
                        dst[j] |= src[j];
                    }
                }
            }
        }
        Self { dim: p, bits }
    }

    pub fn row_class(&self, row: usize) -> RowClass {
        let r = &self.bits[row * self.dim..(row + 1) * self.dim];
        let pos = r.iter().filter(|&&b| b).count();
        if pos == self.dim {
            RowClass::Positive
        } else if pos == 0 {
            RowClass::Zero
        } else {
            RowClass::Mixed
        }
    }

    pub fn rows_positive_or_zero(&self) -> bool {
        (0..self.dim).all(|i| self.row_class(i) != RowClass::Mixed)
    }

    pub fn zero_rows(&self) -> Vec<usize> {
        (0..self.dim)
            .filter(|&i| self.row_class(i) == RowClass::Zero)
            .collect()
    }
}

/// Free-function form of the boolean-semiring product.
pub fn support_product(p: &SupportPattern, q: &SupportPattern) -> SupportPattern {
    p.product(q)
}

/// Smallest `n ≤ max_steps` such that every row of `A_n ⋯ A_1` is all-positive
/// or all-zero; `None` when the horizon is exhausted (a legitimate outcome,
/// e.g. for the identity process).
pub fn weak_primitivity_time(process: &mut dyn MatrixProcess, max_steps: u64) -> Option<u64> {
    let mut acc = SupportPattern::identity(process.dim());
    for n in 1..=max_steps {
        let a = SupportPattern::from_matrix(&process.next_matrix());
        acc = a.product(&acc);
        if acc.rows_positive_or_zero() {
            return Some(n);
        }
    }
    None
}

/// Window index from the process's current position: minimal `ψ ≥ 1` such
/// that `A_{n+ψ−1} ⋯ A_n` has only positive-or-zero rows.
pub fn psi_index(process: &mut dyn MatrixProcess, max_window: u64) -> Option<u64> {
    // Identical recursion; the distinction from the stopping time is where
    // the stream starts, which is the caller's choice.
    weak_primitivity_time(process, max_window)
}

/// Real/virtual verdict for the augmented coordinates of a generated process.
#[derive(Debug, Clone, Serialize)]
pub struct NodeClassification {
    pub real_nodes: Vec<usize>,
    pub virtual_nodes: Vec<usize>,
    /// Structurally undecidable coordinates were placed in `real_nodes`;
    /// one message per case.
    pub warnings: Vec<String>,
    /// Per-coordinate frequency of zero rows of the running product over the
    /// Monte Carlo corroboration (trials × horizon step observations).
    pub observed_zero_row_freq: Vec<f64>,
    pub trials: u64,
    pub horizon: u64,
}

/// Classifies augmented coordinates as real or virtual.
///
/// The verdict is structural, from the generator's finite range: a coordinate
/// whose row has a positive diagonal in every step matrix can never lose its
/// row support (real); a coordinate whose row is entirely zeroed with fixed
/// positive probability each step is zero infinitely often (virtual). The
/// drop_rate = 1 and s = 1 corner cases leave buffers (respectively value
/// nodes) structurally undecided; those are reported as real with a warning.
/// Monte Carlo zero-row frequencies over `trials × horizon` are attached as
/// corroboration only.
pub fn classify_nodes(
    config: &ProcessConfig,
    trials: u64,
    horizon: u64,
) -> Result<NodeClassification> {
    config.validate()?;
    let topo = &config.topology;
    let aug = build_augmented(topo);
    let p_real = aug.real_count();
    let dim = aug.dim();
    let r = config.drop_rate;

    let mut real_nodes = Vec::new();
    let mut virtual_nodes = Vec::new();
    let mut warnings = Vec::new();

    for i in 0..p_real {
        let s_i = config.s.for_degree(topo.out_degree(i));
        if s_i < 1.0 {
            // Positive kept fraction: positive diagonal in every matrix of
            // the range, so the row of the product never dies.
            real_nodes.push(i);
        } else if topo.in_degree(i) == 0 {
            virtual_nodes.push(i);
            warnings.push(format!(
                "node {i} transmits everything (s = 1) and has no in-edges: its row is always zero"
            ));
        } else if r > 0.0 {
            // Row of the step matrix is zero whenever all in-edges drop.
            virtual_nodes.push(i);
            warnings.push(format!(
                "node {i} transmits everything (s = 1); with drops its row vanishes infinitely often"
            ));
        } else {
            // s = 1, no drops: deliveries arrive every step and row support
            // propagates through the senders.
            real_nodes.push(i);
        }
    }
    for e in 0..aug.buffer_count() {
        let coord = aug.buffer_coord(e);
        if r < 1.0 {
            // The buffer flushes (row zero) with positive probability each
            // step: sync mode every tick, async when its sender wakes.
            virtual_nodes.push(coord);
        } else {
            real_nodes.push(coord);
            let (from, to) = topo.edges()[e];
            warnings.push(format!(
                "buffer of edge ({from}, {to}) never flushes at drop_rate = 1; \
                 its row stays nonzero after the first inflow (degenerate process)"
            ));
        }
    }

    // Monte Carlo corroboration: observed zero-row frequencies of M_n.
    let mut zero_counts = vec![0u64; dim];
    let mut observations = 0u64;
    for trial in 0..trials {
        let mut proc = StepSampler::with_stream(config, TRIAL_STREAM_BASE + trial)?;
        let mut acc = SupportPattern::identity(dim);
        for _ in 0..horizon {
            let a = SupportPattern::from_matrix(&proc.next_matrix());
            acc = a.product(&acc);
            observations += 1;
            for i in 0..dim {
                if acc.row_class(i) == RowClass::Zero {
                    zero_counts[i] += 1;
                }
            }
        }
    }
    let denom = observations.max(1) as f64;
    let observed_zero_row_freq = zero_counts.iter().map(|&c| c as f64 / denom).collect();

    real_nodes.sort_unstable();
    virtual_nodes.sort_unstable();
    Ok(NodeClassification {
        real_nodes,
        virtual_nodes,
        warnings,
        observed_zero_row_freq,
        trials,
        horizon,
    })
}

/// Aggregate primitivity statistics over independent trials.
#[derive(Debug, Clone, Serialize)]
pub struct PrimitivityReport {
    /// Per trial: first step at which every row of the running product is
    /// positive-or-zero, `None` when not reached within the horizon.
    pub tau_samples: Vec<Option<u64>>,
    /// Per trial: ψ window length from a fresh stream position.
    pub psi_samples: Vec<Option<u64>>,
    pub real_nodes: Vec<usize>,
    pub virtual_nodes: Vec<usize>,
    pub horizon: u64,
    pub trials: u64,
}

/// Runs `trials` independent primitivity probes of a generated process.
pub fn primitivity_report(
    config: &ProcessConfig,
    trials: u64,
    horizon: u64,
) -> Result<PrimitivityReport> {
    let mut tau_samples = Vec::with_capacity(trials as usize);
    let mut psi_samples = Vec::with_capacity(trials as usize);
    for trial in 0..trials {
        let mut proc = StepSampler::with_stream(config, TRIAL_STREAM_BASE + trial)?;
        tau_samples.push(weak_primitivity_time(&mut proc, horizon));
        // ψ from a position far from the start: reuse the same stream, which
        // now points past the first window.
        psi_samples.push(psi_index(&mut proc, horizon));
    }
    let classification = classify_nodes(config, trials.min(8), horizon.min(256))?;
    Ok(PrimitivityReport {
        tau_samples,
        psi_samples,
        real_nodes: classification.real_nodes,
        virtual_nodes: classification.virtual_nodes,
        horizon,
        trials,
    })
}
