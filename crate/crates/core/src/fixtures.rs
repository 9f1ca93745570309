//! Built-in digraphs, initial values, and the golden trace of the worked
//! four-node example, so replay checks need no external data.
//!
//! The same files ship in the repository under `fixtures/` for CLI use; the
//! constants here embed them so the two never drift.

use std::fmt;

use crate::graph::Digraph;
use crate::sim::{parse_schedule, RoundSchedule, TraceRecord};

pub const FIG1_EDGE_LIST: &str = include_str!("../../../fixtures/fig1.edges");
pub const FIG2_EDGE_LIST: &str = include_str!("../../../fixtures/fig2.edges");
pub const EXAMPLE1_SCHEDULE: &str = include_str!("../../../fixtures/example1.schedule");

/// The 4-node digraph of the worked example.
pub fn fig1() -> Digraph {
    Digraph::parse_edge_list(FIG1_EDGE_LIST).expect("embedded fig1 edge list is valid")
}

/// The 7-node simulation digraph.
pub fn fig2() -> Digraph {
    Digraph::parse_edge_list(FIG2_EDGE_LIST).expect("embedded fig2 edge list is valid")
}

/// Initial values of the worked example (sum 17, target {4, 5}).
pub fn example1_initial_values() -> Vec<i64> {
    vec![5, 3, 7, 2]
}

/// Initial values used with [`fig2`] (sum 60, target {8, 9}).
pub fn fig2_initial_values() -> Vec<i64> {
    vec![15, 5, 11, 4, 3, 13, 9]
}

/// The scripted routing of the worked example, four rounds.
pub fn example1_schedule() -> Vec<RoundSchedule> {
    parse_schedule(EXAMPLE1_SCHEDULE).expect("embedded schedule is valid")
}

/// Expected `(y, z, ys, zs, qs)` values for one node in one round.
pub type GoldenCell = (i64, i64, i64, i64, i64);

/// Expected per-node cells for rounds 0..=4 of the worked example.
pub fn example1_golden() -> Vec<Vec<GoldenCell>> {
    vec![
        vec![
            (5, 1, 5, 1, 5),
            (3, 1, 3, 1, 3),
            (7, 1, 7, 1, 7),
            (2, 1, 2, 1, 2),
        ],
        vec![
            (7, 1, 7, 1, 7),
            (8, 2, 8, 2, 4),
            (2, 1, 2, 1, 2),
            (0, 0, 2, 1, 2),
        ],
        vec![
            (0, 0, 7, 1, 7),
            (13, 3, 13, 3, 4),
            (0, 0, 2, 1, 2),
            (4, 1, 4, 1, 4),
        ],
        vec![
            (0, 0, 7, 1, 7),
            (5, 1, 5, 1, 5),
            (4, 1, 4, 1, 4),
            (8, 2, 8, 2, 4),
        ],
        vec![
            (4, 1, 4, 1, 4),
            (5, 1, 5, 1, 5),
            (8, 2, 8, 2, 4),
            (0, 0, 8, 2, 4),
        ],
    ]
}

/// A single cell disagreement between a trace and a golden table.
/// `field` uses the trace CSV column names (`y`, `z`, `ys`, `zs`, `qs`),
/// plus `rounds` for a length mismatch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldenMismatch {
    pub k: u64,
    pub node: usize,
    pub field: &'static str,
    pub expected: i64,
    pub actual: i64,
}

impl fmt::Display for GoldenMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "k={} node v{} field {}: expected {}, got {}",
            self.k,
            self.node + 1,
            self.field,
            self.expected,
            self.actual
        )
    }
}

/// Compare a trace field-for-field against golden per-round tables.
/// Returns every mismatch, in (round, node, field) order.
pub fn diff_golden(
    records: &[TraceRecord],
    golden: &[Vec<GoldenCell>],
) -> Vec<GoldenMismatch> {
    let mut mismatches = Vec::new();
    if records.len() != golden.len() {
        mismatches.push(GoldenMismatch {
            k: records.len().min(golden.len()) as u64,
            node: 0,
            field: "rounds",
            expected: golden.len() as i64,
            actual: records.len() as i64,
        });
    }
    for (record, expected_round) in records.iter().zip(golden) {
        for (node, (state, &(y, z, ys, zs, qs))) in
            record.nodes.iter().zip(expected_round).enumerate()
        {
            let cells = [
                ("y", y, state.mass),
                ("z", z, state.tokens),
                ("ys", ys, state.snapshot_mass),
                ("zs", zs, state.snapshot_tokens),
                ("qs", qs, state.estimate),
            ];
            for (field, expected, actual) in cells {
                if expected != actual {
                    mismatches.push(GoldenMismatch {
                        k: record.k,
                        node,
                        field,
                        expected,
                        actual,
                    });
                }
            }
        }
    }
    mismatches
}
