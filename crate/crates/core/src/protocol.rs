//! Push-sum / ratio-consensus state machine with the running-sums,
//! packet-loss-robust variant, lifted to a linear system on an augmented
//! network.
//!
//! Each directed edge `(i, j)` gets a buffer coordinate. Every step the
//! sender pushes its per-edge share into the buffer; a *live* buffer flushes
//! its entire content (including this step's inflow) to the receiver and
//! holds zero afterwards, while a *dropped* buffer retains content plus
//! inflow. Deliveries therefore carry running sums: losses delay mass, they
//! never destroy it. Every step is a column-stochastic linear map on the
//! augmented coordinates, and buffer rows of the step matrix are zero exactly
//! when their edge is live.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::cones::NonNegMatrix;
use crate::error::{Error, Result};

/// Synchronous (all nodes act each tick) or asynchronous (one uniformly
/// chosen node acts per tick).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sync,
    Async,
}

/// Directed communication graph with dense, stable edge ordinals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkTopology {
    p: usize,
    out_neighbors: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
    edge_index: HashMap<(usize, usize), usize>,
}

impl NetworkTopology {
    /// Validates and indexes a topology. Self-loops are rejected (retention
    /// is modeled by the kept fraction), every node needs out-degree ≥ 1,
    /// duplicate edges are rejected.
    pub fn new(out_neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let p = out_neighbors.len();
        if p < 2 {
            return Err(Error::InvalidTopology(
                "need at least two nodes (out-degree >= 1 is impossible without self-loops)"
                    .into(),
            ));
        }
        let mut edges = Vec::new();
        let mut edge_index = HashMap::new();
        for (i, targets) in out_neighbors.iter().enumerate() {
            if targets.is_empty() {
                return Err(Error::InvalidTopology(format!(
                    "node {i} has out-degree 0"
                )));
            }
            for &j in targets {
                if j >= p {
                    return Err(Error::InvalidTopology(format!(
                        "edge ({i}, {j}) points outside 0..{p}"
                    )));
                }
                if j == i {
                    return Err(Error::InvalidTopology(format!("self-loop at node {i}")));
                }
                if edge_index.insert((i, j), edges.len()).is_some() {
                    return Err(Error::InvalidTopology(format!("duplicate edge ({i}, {j})")));
                }
                edges.push((i, j));
            }
        }
        Ok(Self {
            p,
            out_neighbors,
            edges,
            edge_index,
        })
    }

    /// Complete directed graph on `p` nodes.
    pub fn complete(p: usize) -> Result<Self> {
        let out = (0..p)
            .map(|i| (0..p).filter(|&j| j != i).collect())
            .collect();
        Self::new(out)
    }

    /// Parses the edge-list format: one `i j` pair per line, 0-indexed,
    /// `#` starts a comment.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut max_node = 0usize;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize> {
                tok.and_then(|t| t.parse().ok()).ok_or_else(|| {
                    Error::InvalidTopology(format!("line {}: expected 'i j'", lineno + 1))
                })
            };
            let i = parse(it.next())?;
            let j = parse(it.next())?;
            if it.next().is_some() {
                return Err(Error::InvalidTopology(format!(
                    "line {}: trailing tokens",
                    lineno + 1
                )));
            }
            max_node = max_node.max(i).max(j);
            pairs.push((i, j));
        }
        let mut out = vec![Vec::new(); max_node + 1];
        for (i, j) in pairs {
            out[i].push(j);
        }
        Self::new(out)
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for &(i, j) in &self.edges {
            s.push_str(&format!("{i} {j}\n"));
        }
        s
    }

    pub fn node_count(&self) -> usize {
        self.p
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.out_neighbors[node].len()
    }

    pub fn out_neighbors(&self, node: usize) -> &[usize] {
        &self.out_neighbors[node]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_ordinal(&self, from: usize, to: usize) -> Option<usize> {
        self.edge_index.get(&(from, to)).copied()
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|(_, j)| *j == node).count()
    }
}

/// Layout of the augmented coordinate space: real nodes first, then one
/// buffer per edge in edge-ordinal order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentedIndex {
    p_real: usize,
    n_buffers: usize,
}

impl AugmentedIndex {
    pub fn dim(&self) -> usize {
        self.p_real + self.n_buffers
    }

    pub fn real_count(&self) -> usize {
        self.p_real
    }

    pub fn buffer_count(&self) -> usize {
        self.n_buffers
    }

    pub fn buffer_coord(&self, edge_ordinal: usize) -> usize {
        debug_assert!(edge_ordinal < self.n_buffers);
        self.p_real + edge_ordinal
    }

    pub fn is_buffer(&self, coord: usize) -> bool {
        coord >= self.p_real
    }

    pub fn edge_of_coord(&self, coord: usize) -> Option<usize> {
        (coord >= self.p_real).then(|| coord - self.p_real)
    }
}

/// Deterministic augmented layout for a topology.
pub fn build_augmented(topology: &NetworkTopology) -> AugmentedIndex {
    AugmentedIndex {
        p_real: topology.node_count(),
        n_buffers: topology.edge_count(),
    }
}

/// Fraction of a node's mass transmitted per activation, split evenly across
/// its out-edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransmitFraction {
    /// The same fraction `s ∈ (0, 1]` for every node.
    Fixed(f64),
    /// `s_i = d_i/(d_i+1)`: the classical equal split, keeping `1/(d_i+1)`
    /// and sending `1/(d_i+1)` along each of the `d_i` out-edges.
    Classic,
}

impl TransmitFraction {
    pub fn validate(&self) -> Result<()> {
        match self {
            TransmitFraction::Fixed(s) if !(*s > 0.0 && *s <= 1.0) => Err(Error::InvalidConfig(
                format!("transmit fraction {s} outside (0, 1]"),
            )),
            _ => Ok(()),
        }
    }

    pub fn for_degree(&self, out_degree: usize) -> f64 {
        match self {
            TransmitFraction::Fixed(s) => *s,
            TransmitFraction::Classic => out_degree as f64 / (out_degree as f64 + 1.0),
        }
    }
}

/// One sampled step: which edges deliver, and who woke (async only).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    /// Per edge-ordinal delivery flag. In async mode only the woken node's
    /// out-edges are consulted.
    pub live_edges: Vec<bool>,
    /// Acting node in async mode, `None` in sync mode.
    pub woken: Option<usize>,
}

/// Value/weight state over the augmented coordinates.
///
/// The value vector may carry signed entries; weights are nonnegative and
/// their support is propagated structurally (a positive weight reaching a
/// coordinate marks it supported even if the float value later underflows).
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolState {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub w_support: Vec<bool>,
    pub step: u64,
}

impl ProtocolState {
    /// Initial state from real-node vectors; buffers start at zero.
    pub fn new(aug: &AugmentedIndex, x0: &[f64], w0: &[f64]) -> Result<Self> {
        if x0.len() != aug.real_count() || w0.len() != aug.real_count() {
            return Err(Error::DimensionMismatch {
                expected: aug.real_count(),
                actual: if x0.len() != aug.real_count() {
                    x0.len()
                } else {
                    w0.len()
                },
            });
        }
        let mut any_pos = false;
        for &wv in w0 {
            if !(wv.is_finite() && wv >= 0.0) {
                return Err(Error::InvalidEntry(wv));
            }
            any_pos |= wv > 0.0;
        }
        if !any_pos {
            return Err(Error::ZeroVector);
        }
        for &xv in x0 {
            if !xv.is_finite() {
                return Err(Error::InvalidEntry(xv));
            }
        }
        let dim = aug.dim();
        let mut x = vec![0.0; dim];
        let mut w = vec![0.0; dim];
        x[..x0.len()].copy_from_slice(x0);
        w[..w0.len()].copy_from_slice(w0);
        let w_support = w.iter().map(|&v| v > 0.0).collect();
        Ok(Self {
            x,
            w,
            w_support,
            step: 0,
        })
    }

    pub fn sum_x(&self) -> f64 {
        self.x.iter().sum()
    }

    pub fn sum_w(&self) -> f64 {
        self.w.iter().sum()
    }
}

/// The running-sums push-sum protocol on one topology: step application,
/// matrix materialization, and ratio readout.
#[derive(Debug, Clone)]
pub struct PushSum {
    topology: NetworkTopology,
    augmented: AugmentedIndex,
    s: TransmitFraction,
}

impl PushSum {
    pub fn new(topology: NetworkTopology, s: TransmitFraction) -> Result<Self> {
        s.validate()?;
        let augmented = build_augmented(&topology);
        Ok(Self {
            topology,
            augmented,
            s,
        })
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn augmented(&self) -> &AugmentedIndex {
        &self.augmented
    }

    pub fn transmit_fraction(&self) -> &TransmitFraction {
        &self.s
    }

    fn check_outcome(&self, outcome: &StepOutcome, mode: Mode) -> Result<()> {
        if outcome.live_edges.len() != self.topology.edge_count() {
            return Err(Error::DimensionMismatch {
                expected: self.topology.edge_count(),
                actual: outcome.live_edges.len(),
            });
        }
        match (mode, outcome.woken) {
            (Mode::Sync, None) => Ok(()),
            (Mode::Async, Some(w)) if w < self.topology.node_count() => Ok(()),
            (Mode::Sync, Some(_)) => Err(Error::InvalidConfig(
                "sync outcome must not name a woken node".into(),
            )),
            (Mode::Async, _) => Err(Error::InvalidConfig(
                "async outcome needs a valid woken node".into(),
            )),
        }
    }

    /// Applies one activation of node `node` in place. Only the acting
    /// node's coordinate and its out-edge buffers change, so reading the
    /// held mass up front makes the in-place update equal to the linear map;
    /// this is only valid for a single acting node.
    fn apply_node(&self, v: &mut [f64], node: usize, live: &[bool]) {
        let d = self.topology.out_degree(node);
        let s = self.s.for_degree(d);
        let share = s / d as f64;
        let held = v[node];
        let inflow = share * held;
        v[node] = (1.0 - s) * held;
        for &target in self.topology.out_neighbors(node) {
            let e = self.topology.edge_ordinal(node, target).expect("edge exists");
            let buf = self.augmented.buffer_coord(e);
            if live[e] {
                v[target] += v[buf] + inflow;
                v[buf] = 0.0;
            } else {
                v[buf] += inflow;
            }
        }
    }

    /// One simultaneous synchronous step: every coordinate of the result is
    /// computed from the previous vector, never from partially updated
    /// entries.
    fn apply_sync(&self, v: &mut [f64], live: &[bool]) {
        let old = v.to_vec();
        for node in 0..self.topology.node_count() {
            let s = self.s.for_degree(self.topology.out_degree(node));
            v[node] = (1.0 - s) * old[node];
        }
        for (e, &(from, to)) in self.topology.edges().iter().enumerate() {
            let d = self.topology.out_degree(from);
            let share = self.s.for_degree(d) / d as f64;
            let inflow = share * old[from];
            let buf = self.augmented.buffer_coord(e);
            if live[e] {
                v[to] += old[buf] + inflow;
                v[buf] = 0.0;
            } else {
                v[buf] = old[buf] + inflow;
            }
        }
    }

    /// Support-semiring twin of [`apply_node`].
    fn apply_node_support(&self, sup: &mut [bool], node: usize, live: &[bool]) {
        let d = self.topology.out_degree(node);
        let s = self.s.for_degree(d);
        let held = sup[node];
        sup[node] = held && (1.0 - s) > 0.0;
        for &target in self.topology.out_neighbors(node) {
            let e = self.topology.edge_ordinal(node, target).expect("edge");
            let buf = self.augmented.buffer_coord(e);
            // The per-edge share is strictly positive, so inflow support
            // equals the sender's support.
            if live[e] {
                sup[target] = sup[target] || sup[buf] || held;
                sup[buf] = false;
            } else {
                sup[buf] = sup[buf] || held;
            }
        }
    }

    /// Support-semiring twin of [`apply_sync`].
    fn apply_sync_support(&self, sup: &mut [bool], live: &[bool]) {
        let old = sup.to_vec();
        for node in 0..self.topology.node_count() {
            let s = self.s.for_degree(self.topology.out_degree(node));
            sup[node] = old[node] && (1.0 - s) > 0.0;
        }
        for (e, &(from, to)) in self.topology.edges().iter().enumerate() {
            let buf = self.augmented.buffer_coord(e);
            if live[e] {
                sup[to] = sup[to] || old[buf] || old[from];
                sup[buf] = false;
            } else {
                sup[buf] = old[buf] || old[from];
            }
        }
    }

    /// One synchronous step: every node splits its mass, every live buffer
    /// flushes. `live` is indexed by edge ordinal.
    pub fn step_synchronous(&self, state: &ProtocolState, live: &[bool]) -> Result<ProtocolState> {
        let outcome = StepOutcome {
            live_edges: live.to_vec(),
            woken: None,
        };
        self.step_with(state, &outcome, Mode::Sync)
    }

    /// One asynchronous step: only `woken` splits mass, only its out-edge
    /// buffers flush or retain. `live_out` is indexed by the woken node's
    /// out-edge slots.
    pub fn step_asynchronous(
        &self,
        state: &ProtocolState,
        woken: usize,
        live_out: &[bool],
    ) -> Result<ProtocolState> {
        if woken >= self.topology.node_count() {
            return Err(Error::InvalidConfig(format!("woken node {woken} out of range")));
        }
        if live_out.len() != self.topology.out_degree(woken) {
            return Err(Error::DimensionMismatch {
                expected: self.topology.out_degree(woken),
                actual: live_out.len(),
            });
        }
        let mut live = vec![false; self.topology.edge_count()];
        for (slot, &target) in self.topology.out_neighbors(woken).iter().enumerate() {
            let e = self.topology.edge_ordinal(woken, target).expect("edge");
            live[e] = live_out[slot];
        }
        let outcome = StepOutcome {
            live_edges: live,
            woken: Some(woken),
        };
        self.step_with(state, &outcome, Mode::Async)
    }

    /// Applies a sampled outcome to a state.
    pub fn step_with(
        &self,
        state: &ProtocolState,
        outcome: &StepOutcome,
        mode: Mode,
    ) -> Result<ProtocolState> {
        self.check_outcome(outcome, mode)?;
        if state.x.len() != self.augmented.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.augmented.dim(),
                actual: state.x.len(),
            });
        }
        let mut next = state.clone();
        self.apply_outcome(&mut next.x, outcome);
        self.apply_outcome(&mut next.w, outcome);
        self.apply_outcome_support(&mut next.w_support, outcome);
        next.step = state.step + 1;
        Ok(next)
    }

    /// In-place application of an outcome to a raw augmented vector.
    pub fn apply_outcome(&self, v: &mut [f64], outcome: &StepOutcome) {
        match outcome.woken {
            Some(node) => self.apply_node(v, node, &outcome.live_edges),
            None => self.apply_sync(v, &outcome.live_edges),
        }
    }

    fn apply_outcome_support(&self, sup: &mut [bool], outcome: &StepOutcome) {
        match outcome.woken {
            Some(node) => self.apply_node_support(sup, node, &outcome.live_edges),
            None => self.apply_sync_support(sup, &outcome.live_edges),
        }
    }

    /// Materializes the step as a column-stochastic transition matrix on the
    /// augmented coordinates. Buffer rows are zero exactly on live edges.
    pub fn as_matrix(&self, outcome: &StepOutcome, mode: Mode) -> Result<NonNegMatrix> {
        self.check_outcome(outcome, mode)?;
        let dim = self.augmented.dim();
        let mut entries = vec![0.0; dim * dim];
        let mut acting: Vec<usize> = match outcome.woken {
            Some(node) => vec![node],
            None => (0..self.topology.node_count()).collect(),
        };
        let acting_set: Vec<bool> = {
            let mut v = vec![false; self.topology.node_count()];
            for &n in &acting {
                v[n] = true;
            }
            v
        };
        // Idle real nodes keep their mass.
        for node in 0..self.topology.node_count() {
            if !acting_set[node] {
                entries[node * dim + node] = 1.0;
            }
        }
        // Buffers of non-acting senders retain their content.
        for (e, &(from, _)) in self.topology.edges().iter().enumerate() {
            if !acting_set[from] {
                let b = self.augmented.buffer_coord(e);
                entries[b * dim + b] = 1.0;
            }
        }
        for node in acting.drain(..) {
            let d = self.topology.out_degree(node);
            let s = self.s.for_degree(d);
            let share = s / d as f64;
            entries[node * dim + node] = 1.0 - s;
            for &target in self.topology.out_neighbors(node) {
                let e = self.topology.edge_ordinal(node, target).expect("edge");
                let b = self.augmented.buffer_coord(e);
                if outcome.live_edges[e] {
                    // Share and buffer content reach the receiver this step.
                    entries[target * dim + node] += share;
                    entries[target * dim + b] = 1.0;
                } else {
                    entries[b * dim + node] += share;
                    entries[b * dim + b] = 1.0;
                }
            }
        }
        NonNegMatrix::from_entries(dim, entries)
    }

    /// Per-real-node ratio `x_i / w_i`, `None` where the weight has no
    /// support (or has underflowed to zero; a ratio is never `NaN`).
    pub fn ratios(&self, state: &ProtocolState) -> Vec<Option<f64>> {
        (0..self.augmented.real_count())
            .map(|i| {
                (state.w_support[i] && state.w[i] > 0.0).then(|| state.x[i] / state.w[i])
            })
            .collect()
    }
}

/// Per-step record of a consensus run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub step: u64,
    /// Max over defined real-node ratios of `|ratio − target|`; `None` when
    /// no ratio is defined.
    pub max_ratio_error: Option<f64>,
    /// TV distance between the normalized value and weight vectors; `None`
    /// when the value vector is signed (or has zero total mass).
    pub tv_distance: Option<f64>,
}

/// Full trajectory of a consensus run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub final_state: ProtocolState,
    /// Consensus target `Σx₀ / Σw₀`.
    pub target: f64,
    pub final_ratios: Vec<Option<f64>>,
}

/// Stream id for drop masks and wake-ups inside [`run_consensus`]; matches
/// the id used by the process generators so a config replays identically.
pub(crate) const PROCESS_STREAM: u64 = 1;

/// Runs the protocol for `n_steps` with i.i.d. Bernoulli drops (and uniform
/// wake-ups in async mode), recording per-step ratio-error and TV series.
///
/// Error and TV values are computed from the scaled difference vector
/// `y_n = M_n (x₀ − θ w₀)` (carried with its own log scale), which tracks the
/// same quantities as the raw states but stays resolvable long after the raw
/// difference reaches machine precision.
#[allow(clippy::too_many_arguments)]
pub fn run_consensus(
    topology: NetworkTopology,
    x0: &[f64],
    w0: &[f64],
    n_steps: u64,
    seed: u64,
    drop_rate: f64,
    s: TransmitFraction,
    mode: Mode,
) -> Result<Trajectory> {
    if !(0.0..=1.0).contains(&drop_rate) {
        return Err(Error::InvalidConfig(format!(
            "drop_rate {drop_rate} outside [0, 1]"
        )));
    }
    let protocol = PushSum::new(topology, s)?;
    let aug = *protocol.augmented();
    let mut state = ProtocolState::new(&aug, x0, w0)?;
    let target = state.sum_x() / state.sum_w();

    // Scaled difference vector y = x − θ·w, renormalized to max |entry| 1.
    let mut y: Vec<f64> = state
        .x
        .iter()
        .zip(&state.w)
        .map(|(xv, wv)| xv - target * wv)
        .collect();
    let mut y_log_scale = 0.0f64;
    let mut y_zero = false;
    deflate_conserved_mode(&mut y);
    normalize_signed(&mut y, &mut y_log_scale, &mut y_zero);

    let x_nonneg = x0.iter().all(|&v| v >= 0.0);
    let sum_x0 = state.sum_x();

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(PROCESS_STREAM);

    let mut records = Vec::with_capacity(n_steps as usize);
    for step in 1..=n_steps {
        let outcome = sample_outcome(&protocol, mode, drop_rate, &mut rng);
        let next = protocol.step_with(&state, &outcome, mode)?;
        state = next;
        protocol.apply_outcome(&mut y, &outcome);
        deflate_conserved_mode(&mut y);
        normalize_signed(&mut y, &mut y_log_scale, &mut y_zero);

        let scale = if y_zero { 0.0 } else { y_log_scale.exp() };
        let max_ratio_error = {
            let mut best: Option<f64> = None;
            for i in 0..aug.real_count() {
                if state.w_support[i] && state.w[i] > 0.0 {
                    let err = if y_zero {
                        0.0
                    } else {
                        (y[i] * scale / state.w[i]).abs()
                    };
                    best = Some(best.map_or(err, |b: f64| b.max(err)));
                }
            }
            best
        };
        let tv_distance = if x_nonneg && sum_x0 > 0.0 {
            let l1: f64 = y.iter().map(|v| v.abs()).sum();
            Some(if y_zero { 0.0 } else { 0.5 * l1 * scale / sum_x0 })
        } else {
            None
        };
        records.push(TrajectoryRecord {
            step,
            max_ratio_error,
            tv_distance,
        });
    }

    let final_ratios = protocol.ratios(&state);
    Ok(Trajectory {
        records,
        final_state: state,
        target,
        final_ratios,
    })
}

/// Renormalizes a signed vector to max-|entry| 1, accumulating the log scale.
/// An exactly zero vector (finite-step consensus) is flagged and left as is.
pub(crate) fn normalize_signed(v: &mut [f64], log_scale: &mut f64, is_zero: &mut bool) {
    if *is_zero {
        return;
    }
    let max = v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if max == 0.0 {
        *is_zero = true;
        return;
    }
    let inv = 1.0 / max;
    for x in v.iter_mut() {
        *x *= inv;
    }
    *log_scale += max.ln();
}

/// Projects a difference vector back onto the zero-sum subspace.
///
/// Column-stochastic steps conserve coordinate sums, so `x − θw` has sum zero
/// and stays there in exact arithmetic; per-step rounding leaks a relative
/// ~1e-16 of the conserved (non-decaying) mode back in, which would floor the
/// tracked difference near machine precision. Removing the mean every step
/// discards exactly that leak, the same hygiene as re-orthonormalization in
/// QR iteration.
pub(crate) fn deflate_conserved_mode(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
}

/// Draws one step outcome: Bernoulli(1 − drop_rate) delivery per edge, and a
/// uniform woken node in async mode (drop bits are drawn only for the woken
/// node's out-edges).
pub(crate) fn sample_outcome(
    protocol: &PushSum,
    mode: Mode,
    drop_rate: f64,
    rng: &mut ChaCha12Rng,
) -> StepOutcome {
    let topo = protocol.topology();
    match mode {
        Mode::Sync => {
            let live = (0..topo.edge_count())
                .map(|_| rng.random::<f64>() >= drop_rate)
                .collect();
            StepOutcome {
                live_edges: live,
                woken: None,
            }
        }
        Mode::Async => {
            let woken = rng.random_range(0..topo.node_count());
            let mut live = vec![false; topo.edge_count()];
            for &target in topo.out_neighbors(woken) {
                let e = topo.edge_ordinal(woken, target).expect("edge");
                live[e] = rng.random::<f64>() >= drop_rate;
            }
            StepOutcome {
                live_edges: live,
                woken: Some(woken),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_topology() -> NetworkTopology {
        NetworkTopology::new(vec![vec![1], vec![0]]).unwrap()
    }

    fn pair_protocol() -> PushSum {
        PushSum::new(pair_topology(), TransmitFraction::Fixed(0.5)).unwrap()
    }

    #[test]
    fn augmented_layout() {
        let aug = build_augmented(&pair_topology());
        assert_eq!(aug.dim(), 4);
        assert_eq!(aug.buffer_coord(0), 2);
        assert!(aug.is_buffer(3));
        assert!(!aug.is_buffer(1));
    }

    #[test]
    fn reference_network_dimension() {
        let topo = crate::process_gen::random_regular_out_digraph(30, 10, 7).unwrap();
        let aug = build_augmented(&topo);
        assert_eq!(aug.dim(), 330);
    }

    #[test]
    fn single_node_topology_rejected() {
        assert!(NetworkTopology::new(vec![vec![]]).is_err());
    }

    #[test]
    fn sync_step_no_drop_splits_mass() {
        let p = pair_protocol();
        let state = ProtocolState::new(p.augmented(), &[1.0, 0.0], &[1.0, 1.0]).unwrap();
        let next = p.step_synchronous(&state, &[true, true]).unwrap();
        assert_eq!(next.x, vec![0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn sync_step_all_dropped_accumulates_buffers() {
        let p = pair_protocol();
        let state = ProtocolState::new(p.augmented(), &[1.0, 0.0], &[1.0, 1.0]).unwrap();
        let next = p.step_synchronous(&state, &[false, false]).unwrap();
        assert_eq!(next.x, vec![0.5, 0.0, 0.5, 0.0]);
        assert!((next.sum_x() - state.sum_x()).abs() < 1e-15);
        // Real coordinates scale by (1−s).
        assert_eq!(next.w[0], 0.5);
        assert_eq!(next.w[1], 0.5);
    }

    #[test]
    fn sync_step_full_transmit_keeps_nothing() {
        let p = PushSum::new(pair_topology(), TransmitFraction::Fixed(1.0)).unwrap();
        let state = ProtocolState::new(p.augmented(), &[1.0, 2.0], &[1.0, 1.0]).unwrap();
        let next = p.step_synchronous(&state, &[false, false]).unwrap();
        assert_eq!(next.x, vec![0.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn async_step_touches_only_woken_coordinates() {
        let p = pair_protocol();
        let state = ProtocolState::new(p.augmented(), &[1.0, 2.0], &[1.0, 1.0]).unwrap();
        let next = p.step_asynchronous(&state, 0, &[false]).unwrap();
        assert_eq!(next.x, vec![0.5, 2.0, 0.5, 0.0]);
        assert_eq!(next.w[1], 1.0);
    }

    #[test]
    fn async_star_delivery_includes_buffer_content() {
        // Star with center 0: edges (0,1), (0,2), (1,0), (2,0).
        let topo = NetworkTopology::new(vec![vec![1, 2], vec![0], vec![0]]).unwrap();
        let p = PushSum::new(topo, TransmitFraction::Fixed(0.5)).unwrap();
        let state = ProtocolState::new(p.augmented(), &[4.0, 0.0, 0.0], &[1.0, 1.0, 1.0]).unwrap();
        // First wake center with both edges dropped: shares land in buffers.
        let s1 = p.step_asynchronous(&state, 0, &[false, false]).unwrap();
        assert_eq!(s1.x[..3], [2.0, 0.0, 0.0]);
        assert_eq!(s1.x[3], 1.0); // buffer (0,1)
        assert_eq!(s1.x[4], 1.0); // buffer (0,2)
        // Wake center again, all live: receivers get buffer + fresh share.
        let s2 = p.step_asynchronous(&s1, 0, &[true, true]).unwrap();
        assert_eq!(s2.x[..3], [1.0, 1.5, 1.5]);
        assert_eq!(s2.x[3], 0.0);
        assert_eq!(s2.x[4], 0.0);
    }

    #[test]
    fn async_steps_commute_iff_coordinate_sets_disjoint() {
        let topo = NetworkTopology::new(vec![vec![1, 2], vec![0], vec![0]]).unwrap();
        let p = PushSum::new(topo, TransmitFraction::Fixed(0.5)).unwrap();
        let o1 = StepOutcome {
            live_edges: vec![false, false, true, false],
            woken: Some(1),
        };
        let o2 = StepOutcome {
            live_edges: vec![false, false, false, true],
            woken: Some(2),
        };
        let a1 = p.as_matrix(&o1, Mode::Async).unwrap();
        let a2 = p.as_matrix(&o2, Mode::Async).unwrap();
        let dim = a1.dim();
        // Nodes 1 and 2 touch disjoint columns/buffers: products agree.
        for i in 0..dim {
            for j in 0..dim {
                let m12: f64 = (0..dim).map(|k| a1.get(i, k) * a2.get(k, j)).sum();
                let m21: f64 = (0..dim).map(|k| a2.get(i, k) * a1.get(k, j)).sum();
                assert!((m12 - m21).abs() < 1e-15);
            }
        }
        // Waking 0 and 1 shares coordinate 0: products differ.
        let o0 = StepOutcome {
            live_edges: vec![true, true, false, false],
            woken: Some(0),
        };
        let a0 = p.as_matrix(&o0, Mode::Async).unwrap();
        let mut differs = false;
        for i in 0..dim {
            for j in 0..dim {
                let m01: f64 = (0..dim).map(|k| a0.get(i, k) * a1.get(k, j)).sum();
                let m10: f64 = (0..dim).map(|k| a1.get(i, k) * a0.get(k, j)).sum();
                if (m01 - m10).abs() > 1e-12 {
                    differs = true;
                }
            }
        }
        assert!(differs);
    }

    #[test]
    fn matrix_columns_sum_to_one_and_buffer_rows_zero_iff_live() {
        let p = pair_protocol();
        let outcome = StepOutcome {
            live_edges: vec![true, false],
            woken: None,
        };
        let a = p.as_matrix(&outcome, Mode::Sync).unwrap();
        for (j, sum) in a.column_sums().iter().enumerate() {
            assert!((sum - 1.0).abs() < 1e-15, "column {j} sums to {sum}");
        }
        assert!(a.is_column_allowable());
        // Edge 0 live: buffer row 2 is zero. Edge 1 dropped: row 3 is not.
        assert_eq!(a.row_class(2), crate::cones::RowClass::Zero);
        assert_ne!(a.row_class(3), crate::cones::RowClass::Zero);
    }

    #[test]
    fn matrix_matches_step_application() {
        let p = pair_protocol();
        let state = ProtocolState::new(p.augmented(), &[0.3, -1.2], &[1.0, 2.0]).unwrap();
        let outcome = StepOutcome {
            live_edges: vec![true, false],
            woken: None,
        };
        let next = p.step_with(&state, &outcome, Mode::Sync).unwrap();
        let a = p.as_matrix(&outcome, Mode::Sync).unwrap();
        let ax = a.mul_vec(&state.x);
        let aw = a.mul_vec(&state.w);
        for i in 0..4 {
            assert!((next.x[i] - ax[i]).abs() < 1e-15);
            assert!((next.w[i] - aw[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn delayed_delivery_equals_lossless_total() {
        // Keep the return edge (1, 0) dropped throughout so mass only flows
        // 0 → 1. Dropping edge (0, 1) k times and then delivering once must
        // hand the receiver side exactly what k+1 lossless deliveries would.
        let k = 5;
        let p = pair_protocol();
        let mut lossy = ProtocolState::new(p.augmented(), &[1.0, 0.0], &[1.0, 1.0]).unwrap();
        let mut lossless = lossy.clone();
        for _ in 0..k {
            lossy = p.step_synchronous(&lossy, &[false, false]).unwrap();
            lossless = p.step_synchronous(&lossless, &[true, false]).unwrap();
        }
        lossy = p.step_synchronous(&lossy, &[true, false]).unwrap();
        lossless = p.step_synchronous(&lossless, &[true, false]).unwrap();
        // Receiver side = node 1 plus its (never flushed) outgoing buffer.
        let received_lossy: f64 = lossy.x[1] + lossy.x[3];
        let received_lossless: f64 = lossless.x[1] + lossless.x[3];
        assert!(
            (received_lossy - received_lossless).abs() < 1e-12,
            "lossy {received_lossy} vs lossless {received_lossless}"
        );
        // And nothing is pending on the lossy sender's buffer anymore.
        assert_eq!(lossy.x[2], 0.0);
    }

    #[test]
    fn ratios_undefined_without_weight_support() {
        let p = pair_protocol();
        let state = ProtocolState::new(p.augmented(), &[1.0, 1.0], &[1.0, 0.0]).unwrap();
        let r = p.ratios(&state);
        assert_eq!(r[0], Some(1.0));
        assert_eq!(r[1], None);
    }

    #[test]
    fn run_consensus_no_drop_converges() {
        let topo = NetworkTopology::complete(5).unwrap();
        let x0 = [1.0, 2.0, 3.0, 4.0, 5.0];
        let w0 = [1.0; 5];
        let t = run_consensus(
            topo,
            &x0,
            &w0,
            200,
            11,
            0.0,
            TransmitFraction::Classic,
            Mode::Sync,
        )
        .unwrap();
        assert!((t.target - 3.0).abs() < 1e-15);
        let last = t.records.last().unwrap();
        assert!(last.max_ratio_error.unwrap() < 1e-10);
        for r in &t.final_ratios {
            assert!((r.unwrap() - 3.0).abs() < 1e-8);
        }
    }

    #[test]
    fn run_consensus_full_drop_never_converges() {
        let topo = NetworkTopology::complete(3).unwrap();
        let t = run_consensus(
            topo,
            &[1.0, 2.0, 3.0],
            &[1.0, 1.0, 1.0],
            200,
            5,
            1.0,
            TransmitFraction::Fixed(0.5),
            Mode::Sync,
        )
        .unwrap();
        // No information flows: the error never decays below its floor.
        let errs: Vec<f64> = t
            .records
            .iter()
            .filter_map(|r| r.max_ratio_error)
            .collect();
        let floor = errs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(floor > 0.1, "error floor {floor}");
    }

    #[test]
    fn run_consensus_signed_values_converge() {
        let topo = NetworkTopology::complete(4).unwrap();
        let x0 = [-2.0, 1.0, 5.0, -1.5];
        let target = x0.iter().sum::<f64>() / 4.0;
        let t = run_consensus(
            topo,
            &x0,
            &[1.0; 4],
            300,
            3,
            0.2,
            TransmitFraction::Classic,
            Mode::Sync,
        )
        .unwrap();
        assert!((t.target - target).abs() < 1e-15);
        for r in &t.final_ratios {
            assert!((r.unwrap() - target).abs() < 1e-6);
        }
        // Signed values: TV series is not reported.
        assert!(t.records.iter().all(|r| r.tv_distance.is_none()));
    }

    #[test]
    fn run_consensus_mass_conserved() {
        let topo = NetworkTopology::new(vec![vec![1], vec![2], vec![0]]).unwrap();
        let t = run_consensus(
            topo,
            &[1.0, 2.0, 4.0],
            &[1.0, 1.0, 1.0],
            1000,
            17,
            0.5,
            TransmitFraction::Fixed(0.75),
            Mode::Sync,
        )
        .unwrap();
        assert!((t.final_state.sum_x() - 7.0).abs() < 1e-12 * 7.0);
        assert!((t.final_state.sum_w() - 3.0).abs() < 1e-12 * 3.0);
    }

    #[test]
    fn edge_list_roundtrip() {
        let text = "# a comment\n0 1\n1 2  # inline\n2 0\n";
        let topo = NetworkTopology::from_edge_list(text).unwrap();
        assert_eq!(topo.node_count(), 3);
        assert_eq!(topo.edge_count(), 3);
        let again = NetworkTopology::from_edge_list(&topo.to_edge_list()).unwrap();
        assert_eq!(topo, again);
    }

    #[test]
    fn rejects_self_loop_and_duplicate() {
        assert!(NetworkTopology::new(vec![vec![0], vec![0]]).is_err());
        assert!(NetworkTopology::new(vec![vec![1, 1], vec![0]]).is_err());
    }
}
