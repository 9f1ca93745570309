//! Quantized average consensus on directed graphs via event-triggered mass
//! splitting.
//!
//! Nodes hold integer mass/token pairs and, whenever they hold at least one
//! token, split their mass into near-equal integer pieces and route each
//! piece to a random out-neighbor (or themselves) under a column-stochastic
//! transmission policy. Every node's quantized estimate settles, in finite
//! time with probability one, on the floor or ceiling of the exact average
//! of the initial values.
//!
//! Module map:
//! - [`graph`]: digraph model, strong connectivity, transmission policies,
//!   random generation.
//! - [`protocol`]: the node-local trigger/split/aggregate state machine.
//! - [`sim`]: synchronous-round engine with seeded random or scripted
//!   routing, trace records, and CSV output.
//! - [`oracle`]: exact ground truth: average decomposition, big-rational
//!   transition-matrix powers, the token-probability lower bound, and
//!   conservation audits.
//! - [`experiments`]: seeded batch campaigns and Monte Carlo walk checks.
//! - [`fixtures`]: built-in digraphs and the golden worked-example trace.

pub mod experiments;
pub mod fixtures;
pub mod graph;
pub mod meta;
pub mod oracle;
pub mod protocol;
pub mod sim;

pub use experiments::{
    derive_seed, render_campaign_csv, run_campaign, token_walk_frequencies, Campaign,
    CampaignError, CampaignResult, GraphSource, InitialValuePolicy, RunRecord,
};
pub use graph::{random_strongly_connected, Digraph, GraphError, TransmissionPolicy};
pub use oracle::{
    audit_conservation, check_token_bound, exact_average, markov_power, BoundCheck, ExactAverage,
    OracleError, RationalMatrix,
};
pub use protocol::{quantized_estimate, split_mass, NodeState, ProtocolError, TokenMessage};
pub use sim::{
    check_converged, parse_schedule, render_trace_csv, run, Engine, PolicyChoice, RoundSchedule,
    RunResult, ScheduleMode, SimConfig, SimError, TraceRecord,
};
