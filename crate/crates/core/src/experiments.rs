//! Batch campaigns and Monte Carlo cross-checks.
//!
//! A [`Campaign`] runs many seeded simulations, one per generated digraph
//! (or repeated runs on a fixed digraph), collecting convergence rounds,
//! message counts, and conservation-audit results. Per-run seeds derive from
//! the master seed and the run index, so runs are independent of scheduling
//! and a campaign reproduces exactly under the same configuration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::graph::{random_strongly_connected, Digraph, GraphError};
use crate::oracle::audit_conservation;
use crate::sim::{run, PolicyChoice, ScheduleMode, SimConfig, SimError, TraceRecord};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("campaign must run at least one graph")]
    NoGraphs,
    #[error("fixed initial values have length {got}, expected {expected}")]
    InitialValuesLength { expected: usize, got: usize },
    #[error("invalid initial-value range [{lo}, {hi}]")]
    InvalidRange { lo: i64, hi: i64 },
    #[error("could not generate a strongly connected digraph after {attempts} attempts (n = {n})")]
    GeneratorFailed { n: usize, attempts: u32 },
    #[error("conservation audit failed on run {run}")]
    AuditFailed { run: u64 },
    #[error("campaign config: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Where each run's digraph comes from.
#[derive(Debug, Clone)]
pub enum GraphSource {
    /// A fresh random strongly connected digraph per run.
    Random { n: usize, extra_edge_prob: f64 },
    /// The same fixed digraph for every run.
    Fixed(Digraph),
}

/// How each run's initial values are drawn.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum InitialValuePolicy {
    /// The same explicit vector for every run.
    Fixed { values: Vec<i64> },
    /// Independent uniform integers in `[lo, hi]`.
    UniformRange { lo: i64, hi: i64 },
    /// Uniform integers in `[lo, hi]` with the last entry adjusted so the
    /// vector sums to exactly `sum`. The adjusted entry may leave `[lo, hi]`;
    /// the bias is acceptable for a convergence study.
    FixedSum { sum: i64, lo: i64, hi: i64 },
}

/// A batch of seeded runs.
#[derive(Debug, Clone)]
pub struct Campaign {
    pub graphs: GraphSource,
    pub num_graphs: u64,
    pub initial_values: InitialValuePolicy,
    pub master_seed: u64,
    pub max_rounds: u64,
    /// Retain full traces on each run record (for plot emission).
    pub keep_traces: bool,
}

/// One row of a campaign result.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run_id: u64,
    /// Seed the digraph was generated from; `None` for a fixed digraph.
    pub graph_seed: Option<u64>,
    pub init_seed: u64,
    pub run_seed: u64,
    pub converged: bool,
    pub k0: Option<u64>,
    pub rounds: u64,
    pub messages_total: u64,
    pub messages_nonself: u64,
    pub q_floor: i64,
    pub q_ceil: i64,
    pub audit_passed: bool,
    /// Full trace, kept only when the campaign asks for it.
    pub trace: Option<Vec<TraceRecord>>,
}

/// Aggregated campaign outcome. All aggregates are recomputable from `runs`.
#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub runs: Vec<RunRecord>,
    pub convergence_rate: f64,
    pub k0_mean: Option<f64>,
    /// Lower median of the converged runs' k0.
    pub k0_median: Option<u64>,
    pub k0_max: Option<u64>,
}

/// Seed derivation for (run index, purpose) pairs: splitmix64-style mixing,
/// stable across platforms.
pub fn derive_seed(master: u64, index: u64, tag: u64) -> u64 {
    fn mix(mut x: u64) -> u64 {
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^ (x >> 31)
    }
    mix(master.wrapping_add(mix(index.wrapping_add(mix(tag)))))
}

const SEED_TAG_GRAPH: u64 = 1;
const SEED_TAG_INIT: u64 = 2;
const SEED_TAG_RUN: u64 = 3;
const GENERATOR_ATTEMPTS: u32 = 8;

fn draw_initial_values(
    policy: &InitialValuePolicy,
    n: usize,
    seed: u64,
) -> Result<Vec<i64>, CampaignError> {
    match policy {
        InitialValuePolicy::Fixed { values } => {
            if values.len() != n {
                return Err(CampaignError::InitialValuesLength {
                    expected: n,
                    got: values.len(),
                });
            }
            Ok(values.clone())
        }
        InitialValuePolicy::UniformRange { lo, hi } => {
            if lo > hi {
                return Err(CampaignError::InvalidRange { lo: *lo, hi: *hi });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..n).map(|_| rng.random_range(*lo..=*hi)).collect())
        }
        InitialValuePolicy::FixedSum { sum, lo, hi } => {
            if lo > hi {
                return Err(CampaignError::InvalidRange { lo: *lo, hi: *hi });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut values: Vec<i64> = (0..n).map(|_| rng.random_range(*lo..=*hi)).collect();
            let partial: i64 = values[..n - 1].iter().sum();
            values[n - 1] = sum - partial;
            Ok(values)
        }
    }
}

fn obtain_graph(source: &GraphSource, seed: u64) -> Result<(Digraph, Option<u64>), CampaignError> {
    match source {
        GraphSource::Fixed(g) => Ok((g.clone(), None)),
        GraphSource::Random { n, extra_edge_prob } => {
            for attempt in 0..GENERATOR_ATTEMPTS {
                let g = random_strongly_connected(
                    *n,
                    *extra_edge_prob,
                    derive_seed(seed, attempt as u64, 0),
                )?;
                if g.is_strongly_connected() {
                    return Ok((g, Some(seed)));
                }
            }
            Err(CampaignError::GeneratorFailed {
                n: *n,
                attempts: GENERATOR_ATTEMPTS,
            })
        }
    }
}

fn run_one(campaign: &Campaign, run_id: u64) -> Result<RunRecord, CampaignError> {
    let graph_seed = derive_seed(campaign.master_seed, run_id, SEED_TAG_GRAPH);
    let init_seed = derive_seed(campaign.master_seed, run_id, SEED_TAG_INIT);
    let run_seed = derive_seed(campaign.master_seed, run_id, SEED_TAG_RUN);

    let (graph, graph_seed) = obtain_graph(&campaign.graphs, graph_seed)?;
    let initial = draw_initial_values(&campaign.initial_values, graph.n(), init_seed)?;
    let expected_sum: i64 = initial.iter().sum();

    let cfg = SimConfig {
        graph: &graph,
        initial_values: initial,
        seed: run_seed,
        max_rounds: campaign.max_rounds,
        confirmation_window: None,
        policy: PolicyChoice::Uniform,
        mode: ScheduleMode::Random,
        allow_weakly_connected: false,
    };
    let result = run(&cfg)?;
    let audit_passed = audit_conservation(&result.records, expected_sum, graph.n());
    if !audit_passed {
        return Err(CampaignError::AuditFailed { run: run_id });
    }

    Ok(RunRecord {
        run_id,
        graph_seed,
        init_seed,
        run_seed,
        converged: result.converged(),
        k0: result.k0,
        rounds: result.rounds_executed(),
        messages_total: result.messages_total,
        messages_nonself: result.messages_nonself,
        q_floor: result.q_floor,
        q_ceil: result.q_ceil,
        audit_passed,
        trace: campaign.keep_traces.then_some(result.records),
    })
}

/// Execute every run of a campaign (in parallel) and aggregate. Results are
/// ordered by run index regardless of scheduling.
pub fn run_campaign(campaign: &Campaign) -> Result<CampaignResult, CampaignError> {
    if campaign.num_graphs < 1 {
        return Err(CampaignError::NoGraphs);
    }
    let runs: Result<Vec<RunRecord>, CampaignError> = (0..campaign.num_graphs)
        .into_par_iter()
        .map(|run_id| run_one(campaign, run_id))
        .collect();
    let runs = runs?;

    let converged: Vec<u64> = runs.iter().filter_map(|r| r.k0).collect();
    let convergence_rate = converged.len() as f64 / runs.len() as f64;
    let (k0_mean, k0_median, k0_max) = if converged.is_empty() {
        (None, None, None)
    } else {
        let mut sorted = converged.clone();
        sorted.sort_unstable();
        let mean = sorted.iter().sum::<u64>() as f64 / sorted.len() as f64;
        (
            Some(mean),
            Some(sorted[(sorted.len() - 1) / 2]),
            Some(*sorted.last().expect("non-empty")),
        )
    };
    Ok(CampaignResult {
        runs,
        convergence_rate,
        k0_mean,
        k0_median,
        k0_max,
    })
}

/// Render per-run campaign rows as CSV. `header`, when given, is emitted
/// verbatim first.
pub fn render_campaign_csv(result: &CampaignResult, header: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(h);
    }
    out.push_str(
        "run_id,graph_seed,init_seed,run_seed,converged,k0,rounds,\
         messages_total,messages_nonself,q_floor,q_ceil,audit_passed\n",
    );
    for r in &result.runs {
        let graph_seed = r.graph_seed.map(|s| s.to_string()).unwrap_or_default();
        let k0 = r.k0.map(|k| k.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.run_id,
            graph_seed,
            r.init_seed,
            r.run_seed,
            r.converged,
            k0,
            r.rounds,
            r.messages_total,
            r.messages_nonself,
            r.q_floor,
            r.q_ceil,
            r.audit_passed
        ));
    }
    out
}

/// Empirical distribution of a single token's position after `n - 1`
/// synchronous rounds of uniform-policy walking from `start`, over
/// `trials` independent walks.
pub fn token_walk_frequencies(g: &Digraph, start: usize, trials: u64, seed: u64) -> Vec<f64> {
    assert!(start < g.n(), "start node out of range");
    assert!(trials >= 1, "need at least one trial");
    // Destination lists: self plus out-neighbors, uniform choice.
    let dests: Vec<Vec<usize>> = (0..g.n())
        .map(|j| {
            let mut d = vec![j];
            d.extend_from_slice(g.out_neighbors(j));
            d.sort_unstable();
            d
        })
        .collect();
    let steps = g.n() - 1;
    let mut counts = vec![0u64; g.n()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let mut at = start;
        for _ in 0..steps {
            let choices = &dests[at];
            at = choices[rng.random_range(0..choices.len())];
        }
        counts[at] += 1;
    }
    counts
        .into_iter()
        .map(|c| c as f64 / trials as f64)
        .collect()
}

// ---------------------------------------------------------------------------
// Campaign config file (TOML)
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CampaignFile {
    num_graphs: u64,
    master_seed: u64,
    #[serde(default = "default_max_rounds")]
    max_rounds: u64,
    graph: GraphSpec,
    initial_values: InitialValuePolicy,
}

fn default_max_rounds() -> u64 {
    100_000
}

#[derive(Debug, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
enum GraphSpec {
    Random {
        nodes: usize,
        #[serde(default = "default_extra_edge_prob")]
        extra_edge_prob: f64,
    },
    /// Load a fixed digraph from an edge-list file (path relative to the
    /// working directory).
    EdgeList { path: String },
}

fn default_extra_edge_prob() -> f64 {
    0.05
}

impl Campaign {
    /// Parse the documented key-value (TOML) campaign schema. An `edge-list`
    /// graph source is loaded from disk here.
    pub fn from_toml(text: &str) -> Result<Self, CampaignError> {
        let file: CampaignFile =
            toml::from_str(text).map_err(|e| CampaignError::Config(e.to_string()))?;
        let graphs = match file.graph {
            GraphSpec::Random {
                nodes,
                extra_edge_prob,
            } => GraphSource::Random {
                n: nodes,
                extra_edge_prob,
            },
            GraphSpec::EdgeList { path } => {
                let content = std::fs::read_to_string(&path)
                    .map_err(|e| CampaignError::Config(format!("reading {path}: {e}")))?;
                GraphSource::Fixed(Digraph::parse_edge_list(&content)?)
            }
        };
        Ok(Campaign {
            graphs,
            num_graphs: file.num_graphs,
            initial_values: file.initial_values,
            master_seed: file.master_seed,
            max_rounds: file.max_rounds,
            keep_traces: false,
        })
    }
}
