//! Synchronous-round execution engine.
//!
//! Each round k: every node holding tokens triggers (refreshing its snapshot
//! and estimate), splits its mass, and routes one message per token, either
//! by sampling the transmission policy (random mode) or from a scripted
//! [`RoundSchedule`]. All deliveries land before aggregation, so mass and
//! token totals are conserved at every round boundary. A [`TraceRecord`] is
//! the post-trigger snapshot of round k, which makes round 0 equal the
//! initialization.
//!
//! Convergence is judged by an omniscient monitor against the exact target
//! `{floor, ceil}` of the initial average; nodes never self-detect. In
//! random mode a run stops once the instantaneous check has held for a full
//! confirmation window (default: n rounds), and the reported `k0` is the
//! first round of that window. In scripted mode the schedule is executed to
//! its end and `k0` is the start of the trailing converged stretch, if the
//! final round converged.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{Digraph, TransmissionPolicy};
use crate::oracle::exact_average;
use crate::protocol::{NodeState, ProtocolError, TokenMessage};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("digraph is not strongly connected (set allow_weakly_connected to proceed anyway)")]
    NotStronglyConnected,
    #[error("initial values length {got} does not match node count {expected}")]
    InitialValuesLength { expected: usize, got: usize },
    #[error("max_rounds must be at least 1")]
    InvalidMaxRounds,
    #[error("round {round}: v{} emits {expected} pieces but the schedule lists {got} destinations", .node + 1)]
    ScheduleLengthMismatch {
        round: u64,
        node: usize,
        expected: usize,
        got: usize,
    },
    #[error("round {round}: v{} cannot transmit to v{}; destinations must be out-neighbors or self", .node + 1, .dest + 1)]
    ScheduleIllegalDestination {
        round: u64,
        node: usize,
        dest: usize,
    },
    #[error("round {round}: schedule routes v{}, which holds no tokens", .node + 1)]
    ScheduleUntriggeredNode { round: u64, node: usize },
    #[error("schedule parse error at line {line}: {reason}")]
    ScheduleParse { line: usize, reason: String },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
}

/// Scripted routing for one round: for each transmitting node, the ordered
/// list of destinations, one per emitted piece.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoundSchedule {
    destinations: BTreeMap<usize, Vec<usize>>,
}

impl RoundSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a destination for the next piece of `node`.
    pub fn push(&mut self, node: usize, dest: usize) {
        self.destinations.entry(node).or_default().push(dest);
    }

    pub fn get(&self, node: usize) -> Option<&[usize]> {
        self.destinations.get(&node).map(|v| v.as_slice())
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.destinations.keys().copied()
    }
}

/// Parse the scripted-schedule format: one line per round,
/// `k: sender->dest[,sender->dest...]`, 1-based labels, `#` comments and
/// blank lines skipped. `k` must count up from 0 in file order; a node
/// emitting several pieces repeats `sender->dest` in piece order.
pub fn parse_schedule(text: &str) -> Result<Vec<RoundSchedule>, SimError> {
    let err = |line: usize, reason: String| SimError::ScheduleParse { line, reason };
    let mut rounds = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (round_tok, rest) = line
            .split_once(':')
            .ok_or_else(|| err(line_no, "expected `k: sender->dest,...`".into()))?;
        let round: usize = round_tok.trim().parse().map_err(|_| {
            err(
                line_no,
                format!("invalid round index `{}`", round_tok.trim()),
            )
        })?;
        if round != rounds.len() {
            return Err(err(
                line_no,
                format!(
                    "round index {round} out of order, expected {}",
                    rounds.len()
                ),
            ));
        }
        let mut schedule = RoundSchedule::new();
        for part in rest.split(',') {
            let part = part.trim();
            if part.is_empty() {
                return Err(err(line_no, "empty routing entry".into()));
            }
            let (from, to) = part
                .split_once("->")
                .ok_or_else(|| err(line_no, format!("expected `sender->dest`, got `{part}`")))?;
            let sender: usize = from
                .trim()
                .parse()
                .map_err(|_| err(line_no, format!("invalid node label `{}`", from.trim())))?;
            let dest: usize = to
                .trim()
                .parse()
                .map_err(|_| err(line_no, format!("invalid node label `{}`", to.trim())))?;
            if sender == 0 || dest == 0 {
                return Err(err(line_no, "labels are 1-based; 0 is not a node".into()));
            }
            schedule.push(sender - 1, dest - 1);
        }
        rounds.push(schedule);
    }
    Ok(rounds)
}

/// Snapshot of one round: all node states plus the conservation audit fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub k: u64,
    pub nodes: Vec<NodeState>,
    /// Sum of held masses; constant across a run.
    pub mass_total: i64,
    /// Sum of held tokens; equals n at every round boundary.
    pub count_total: i64,
    /// Instantaneous convergence check against the exact target.
    pub converged: bool,
}

/// Which transmission probabilities a run uses.
#[derive(Debug, Clone, Copy)]
pub enum PolicyChoice<'a> {
    Uniform,
    Custom(&'a TransmissionPolicy),
}

/// Routing source for a run.
#[derive(Debug, Clone)]
pub enum ScheduleMode {
    /// Seeded sampling from the transmission policy.
    Random,
    /// Fixed per-round routing; the run executes exactly these rounds.
    Scripted(Vec<RoundSchedule>),
}

/// Full description of a run.
#[derive(Debug, Clone)]
pub struct SimConfig<'a> {
    pub graph: &'a Digraph,
    pub initial_values: Vec<i64>,
    pub seed: u64,
    pub max_rounds: u64,
    /// Rounds the convergence check must hold before the monitor fires;
    /// defaults to n. Estimates of token-less nodes are frozen, so a single
    /// lucky snapshot is not taken as convergence.
    pub confirmation_window: Option<u64>,
    pub policy: PolicyChoice<'a>,
    pub mode: ScheduleMode,
    /// Research override for the strong-connectivity precondition.
    pub allow_weakly_connected: bool,
}

impl<'a> SimConfig<'a> {
    /// Random-mode run with the uniform policy and default limits.
    pub fn new(graph: &'a Digraph, initial_values: Vec<i64>) -> Self {
        Self {
            graph,
            initial_values,
            seed: 0,
            max_rounds: 100_000,
            confirmation_window: None,
            policy: PolicyChoice::Uniform,
            mode: ScheduleMode::Random,
            allow_weakly_connected: false,
        }
    }
}

/// Outcome of a run: the full trace plus the monitor's verdict.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<TraceRecord>,
    /// First round of the stable window (random mode) or of the trailing
    /// converged stretch (scripted mode); `None` if the run never converged.
    pub k0: Option<u64>,
    pub q_floor: i64,
    pub q_ceil: i64,
    /// Tokens transmitted, self-deliveries included.
    pub messages_total: u64,
    /// Tokens transmitted to a node other than the sender.
    pub messages_nonself: u64,
}

impl RunResult {
    pub fn converged(&self) -> bool {
        self.k0.is_some()
    }

    pub fn rounds_executed(&self) -> u64 {
        self.records.len() as u64 - 1
    }

    pub fn final_estimates(&self) -> Vec<i64> {
        self.records
            .last()
            .map(|rec| rec.nodes.iter().map(|s| s.estimate).collect())
            .unwrap_or_default()
    }
}

/// True iff every node's estimate lies in `{q_floor, q_ceil}`.
pub fn check_converged(states: &[NodeState], q_floor: i64, q_ceil: i64) -> bool {
    states
        .iter()
        .all(|s| s.estimate == q_floor || s.estimate == q_ceil)
}

/// Per-node destination sampler derived from a transmission policy.
/// Destinations are listed in ascending node order so the seeded stream is
/// reproducible.
struct Router {
    dests: Vec<Vec<usize>>,
    choosers: Vec<WeightedIndex<f64>>,
}

impl Router {
    fn new(policy: &TransmissionPolicy) -> Self {
        use num_traits::ToPrimitive;
        let mut dests = Vec::with_capacity(policy.n());
        let mut choosers = Vec::with_capacity(policy.n());
        for j in 0..policy.n() {
            let column = policy.column(j);
            let d: Vec<usize> = column.keys().copied().collect();
            let w: Vec<f64> = column
                .values()
                .map(|p| p.to_f64().expect("probability fits f64"))
                .collect();
            choosers.push(WeightedIndex::new(&w).expect("validated policy column"));
            dests.push(d);
        }
        Self { dests, choosers }
    }

    fn sample(&self, node: usize, rng: &mut impl Rng) -> usize {
        self.dests[node][self.choosers[node].sample(rng)]
    }
}

enum Routing<'r> {
    Random(&'r mut ChaCha8Rng),
    Scripted(&'r RoundSchedule),
}

/// The round-by-round executor. [`run`] drives it; it is public so callers
/// can single-step rounds and inspect snapshots directly.
pub struct Engine<'a> {
    graph: &'a Digraph,
    router: Router,
    states: Vec<NodeState>,
    /// Pieces split at the current round's trigger, pending transmission.
    pending: Vec<Vec<i64>>,
    inboxes: Vec<Vec<TokenMessage>>,
    round: u64,
    expected_mass: i64,
    q_floor: i64,
    q_ceil: i64,
    messages_total: u64,
    messages_nonself: u64,
}

impl<'a> Engine<'a> {
    pub fn new(
        graph: &'a Digraph,
        policy: &TransmissionPolicy,
        initial_values: &[i64],
    ) -> Result<Self, SimError> {
        if initial_values.len() != graph.n() {
            return Err(SimError::InitialValuesLength {
                expected: graph.n(),
                got: initial_values.len(),
            });
        }
        let avg = exact_average(initial_values)?;
        let states: Vec<NodeState> = initial_values.iter().map(|&y| NodeState::init(y)).collect();
        let mut engine = Self {
            graph,
            router: Router::new(policy),
            states,
            pending: vec![Vec::new(); graph.n()],
            inboxes: vec![Vec::new(); graph.n()],
            round: 0,
            expected_mass: avg.sum,
            q_floor: avg.floor,
            q_ceil: avg.ceil,
            messages_total: 0,
            messages_nonself: 0,
        };
        engine.trigger_all()?;
        Ok(engine)
    }

    fn trigger_all(&mut self) -> Result<(), SimError> {
        for (state, pending) in self.states.iter_mut().zip(self.pending.iter_mut()) {
            pending.clear();
            if state.is_triggered() {
                *pending = state.trigger_update()?;
            }
        }
        Ok(())
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn states(&self) -> &[NodeState] {
        &self.states
    }

    pub fn messages_total(&self) -> u64 {
        self.messages_total
    }

    pub fn messages_nonself(&self) -> u64 {
        self.messages_nonself
    }

    pub fn target(&self) -> (i64, i64) {
        (self.q_floor, self.q_ceil)
    }

    /// Post-trigger snapshot of the current round.
    pub fn snapshot(&self) -> TraceRecord {
        TraceRecord {
            k: self.round,
            nodes: self.states.clone(),
            mass_total: self.states.iter().map(|s| s.mass).sum(),
            count_total: self.states.iter().map(|s| s.tokens).sum(),
            converged: check_converged(&self.states, self.q_floor, self.q_ceil),
        }
    }

    /// Advance one round with seeded random routing.
    pub fn step_random(&mut self, rng: &mut ChaCha8Rng) -> Result<TraceRecord, SimError> {
        self.step(Routing::Random(rng))
    }

    /// Advance one round with scripted routing. The schedule must list
    /// exactly one destination per pending piece of every transmitting
    /// node, each an out-neighbor or the node itself.
    pub fn step_scripted(&mut self, schedule: &RoundSchedule) -> Result<TraceRecord, SimError> {
        self.step(Routing::Scripted(schedule))
    }

    fn step(&mut self, routing: Routing<'_>) -> Result<TraceRecord, SimError> {
        let n = self.graph.n();
        for inbox in &mut self.inboxes {
            inbox.clear();
        }

        let mut outgoing: Vec<TokenMessage> = Vec::with_capacity(n);
        match routing {
            Routing::Scripted(schedule) => {
                for node in schedule.nodes() {
                    if node >= n || self.pending[node].is_empty() {
                        return Err(SimError::ScheduleUntriggeredNode {
                            round: self.round,
                            node,
                        });
                    }
                }
                for node in 0..n {
                    if self.pending[node].is_empty() {
                        continue;
                    }
                    let dests = schedule.get(node).unwrap_or(&[]);
                    if dests.len() != self.pending[node].len() {
                        return Err(SimError::ScheduleLengthMismatch {
                            round: self.round,
                            node,
                            expected: self.pending[node].len(),
                            got: dests.len(),
                        });
                    }
                    for (&value, &dest) in self.pending[node].iter().zip(dests) {
                        if dest != node && !self.graph.contains_edge(dest, node) {
                            return Err(SimError::ScheduleIllegalDestination {
                                round: self.round,
                                node,
                                dest,
                            });
                        }
                        outgoing.push(TokenMessage::new(value, node, dest));
                    }
                }
            }
            Routing::Random(rng) => {
                // Node-index then piece order fixes the seeded stream.
                for node in 0..n {
                    for piece in 0..self.pending[node].len() {
                        let value = self.pending[node][piece];
                        let dest = self.router.sample(node, rng);
                        outgoing.push(TokenMessage::new(value, node, dest));
                    }
                }
            }
        }
        for msg in outgoing {
            self.deliver(msg);
        }

        for node in 0..n {
            let inbox = std::mem::take(&mut self.inboxes[node]);
            self.states[node].aggregate(node, &inbox)?;
            self.inboxes[node] = inbox;
        }

        self.round += 1;
        self.trigger_all()?;

        let record = self.snapshot();
        assert_eq!(
            record.mass_total, self.expected_mass,
            "mass conservation violated at round {}",
            self.round
        );
        assert_eq!(
            record.count_total, n as i64,
            "token conservation violated at round {}",
            self.round
        );
        Ok(record)
    }

    fn deliver(&mut self, msg: TokenMessage) {
        self.messages_total += 1;
        if !msg.is_self_delivery() {
            self.messages_nonself += 1;
        }
        self.inboxes[msg.dest].push(msg);
    }
}

/// Execute a full run per the configuration. Deterministic given the seed.
pub fn run(cfg: &SimConfig<'_>) -> Result<RunResult, SimError> {
    if cfg.max_rounds < 1 {
        return Err(SimError::InvalidMaxRounds);
    }
    if !cfg.allow_weakly_connected && !cfg.graph.is_strongly_connected() {
        return Err(SimError::NotStronglyConnected);
    }
    let uniform;
    let policy: &TransmissionPolicy = match cfg.policy {
        PolicyChoice::Uniform => {
            uniform = TransmissionPolicy::uniform(cfg.graph);
            &uniform
        }
        PolicyChoice::Custom(p) => p,
    };
    let mut engine = Engine::new(cfg.graph, policy, &cfg.initial_values)?;
    let window = cfg
        .confirmation_window
        .unwrap_or(cfg.graph.n() as u64)
        .max(1);

    let mut records = vec![engine.snapshot()];
    let mut streak: u64 = if records[0].converged { 1 } else { 0 };
    let mut k0 = None;

    match &cfg.mode {
        ScheduleMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            if streak >= window {
                k0 = Some(0);
            }
            while k0.is_none() && engine.round() < cfg.max_rounds {
                let record = engine.step_random(&mut rng)?;
                streak = if record.converged { streak + 1 } else { 0 };
                if streak >= window {
                    k0 = Some(record.k + 1 - window);
                }
                records.push(record);
            }
        }
        ScheduleMode::Scripted(rounds) => {
            for schedule in rounds.iter().take(cfg.max_rounds as usize) {
                let record = engine.step_scripted(schedule)?;
                streak = if record.converged { streak + 1 } else { 0 };
                records.push(record);
            }
            if streak > 0 {
                let last_k = records.last().expect("at least the initial record").k;
                k0 = Some(last_k + 1 - streak);
            }
        }
    }

    let (q_floor, q_ceil) = engine.target();
    Ok(RunResult {
        records,
        k0,
        q_floor,
        q_ceil,
        messages_total: engine.messages_total(),
        messages_nonself: engine.messages_nonself(),
    })
}

/// Render a trace as CSV, one row per (round, node), 1-based node labels.
/// Columns `y,z,ys,zs,qs` are the mass pair, the snapshot pair, and the
/// quantized estimate. `header`, when given, is emitted verbatim first.
pub fn render_trace_csv(run_id: u64, records: &[TraceRecord], header: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(h);
    }
    out.push_str("run_id,k,node,y,z,ys,zs,qs,mass_total,count_total,converged\n");
    for rec in records {
        for (node, s) in rec.nodes.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                run_id,
                rec.k,
                node + 1,
                s.mass,
                s.tokens,
                s.snapshot_mass,
                s.snapshot_tokens,
                s.estimate,
                rec.mass_total,
                rec.count_total,
                rec.converged
            ));
        }
    }
    out
}
