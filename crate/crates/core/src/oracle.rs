//! Independent ground-truth computations.
//!
//! Everything here is exact: the consensus target comes from integer
//! division of the initial sum, and transition-matrix powers use
//! big-integer rationals, so the token-probability bound check is a
//! decisive comparison rather than a tolerance test. Nothing in this
//! module calls into the protocol implementation it is used to audit.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::graph::{Digraph, TransmissionPolicy};
use crate::sim::TraceRecord;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("need at least 2 initial values, got {0}")]
    TooFewValues(usize),
}

/// Exact decomposition of the initial average: `sum = n·quotient + remainder`
/// with `0 ≤ remainder < n`, and the floor/ceiling pair of `sum / n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactAverage {
    pub sum: i64,
    pub n: usize,
    pub quotient: i64,
    pub remainder: i64,
    pub floor: i64,
    pub ceil: i64,
}

/// Compute the exact average decomposition of the initial values.
pub fn exact_average(initial: &[i64]) -> Result<ExactAverage, OracleError> {
    if initial.len() < 2 {
        return Err(OracleError::TooFewValues(initial.len()));
    }
    let n = initial.len();
    let sum: i64 = initial.iter().sum();
    let quotient = sum.div_euclid(n as i64);
    let remainder = sum.rem_euclid(n as i64);
    Ok(ExactAverage {
        sum,
        n,
        quotient,
        remainder,
        floor: quotient,
        ceil: if remainder == 0 {
            quotient
        } else {
            quotient + 1
        },
    })
}

/// Dense square matrix of exact rationals, row-major. Row index is the
/// destination, column index the source, matching the transmission policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalMatrix {
    n: usize,
    entries: Vec<BigRational>,
}

impl RationalMatrix {
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zero(n);
        for i in 0..n {
            *m.entry_mut(i, i) = BigRational::one();
        }
        m
    }

    fn zero(n: usize) -> Self {
        Self {
            n,
            entries: vec![BigRational::zero(); n * n],
        }
    }

    /// The transition matrix of a policy: entry `(dest, src)` is the
    /// probability that `src` transmits to `dest`.
    pub fn from_policy(policy: &TransmissionPolicy) -> Self {
        let n = policy.n();
        let mut m = Self::zero(n);
        for src in 0..n {
            for (&dest, p) in policy.column(src) {
                *m.entry_mut(dest, src) = p.clone();
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, row: usize, col: usize) -> &BigRational {
        &self.entries[row * self.n + col]
    }

    fn entry_mut(&mut self, row: usize, col: usize) -> &mut BigRational {
        &mut self.entries[row * self.n + col]
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n, "dimension mismatch");
        let n = self.n;
        let mut out = Self::zero(n);
        for row in 0..n {
            for col in 0..n {
                let mut acc = BigRational::zero();
                for k in 0..n {
                    let a = self.entry(row, k);
                    let b = rhs.entry(k, col);
                    if !a.is_zero() && !b.is_zero() {
                        acc += a * b;
                    }
                }
                *out.entry_mut(row, col) = acc;
            }
        }
        out
    }

    pub fn min_entry(&self) -> &BigRational {
        self.entries.iter().min().expect("non-empty matrix")
    }

    pub fn column_sum(&self, col: usize) -> BigRational {
        (0..self.n).map(|row| self.entry(row, col).clone()).sum()
    }

    /// Column `col` as exact probabilities converted to f64.
    pub fn column_f64(&self, col: usize) -> Vec<f64> {
        use num_traits::ToPrimitive;
        (0..self.n)
            .map(|row| self.entry(row, col).to_f64().expect("probability fits f64"))
            .collect()
    }
}

/// Exact `steps`-th power of the policy's transition matrix. Column `j`
/// is the distribution of a single token started at `j` after `steps`
/// synchronous rounds.
pub fn markov_power(policy: &TransmissionPolicy, steps: u32) -> RationalMatrix {
    let base = RationalMatrix::from_policy(policy);
    let mut acc = RationalMatrix::identity(policy.n());
    for _ in 0..steps {
        acc = base.mul(&acc);
    }
    acc
}

/// Result of the token-probability lower-bound check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundCheck {
    /// Smallest entry of the (n−1)-step transition matrix.
    pub min_entry: BigRational,
    /// The lower bound `(1 + D_max)^-(n-1)` where `D_max` is the maximum
    /// out-degree.
    pub bound: BigRational,
    pub holds: bool,
}

/// Verify that every entry of the exact `(n−1)`-step transition matrix is at
/// least `(1 + D_max)^-(n-1)`. Checked in the all-pairs form: the bound must
/// hold for every (start, end) node pair, not just a single start node.
pub fn check_token_bound(policy: &TransmissionPolicy, g: &Digraph) -> BoundCheck {
    let steps = (g.n() - 1) as u32;
    let power = markov_power(policy, steps);
    let min_entry = power.min_entry().clone();
    let denom = num_traits::pow(BigInt::from(1 + g.max_out_degree() as u64), steps as usize);
    let bound = BigRational::new(BigInt::one(), denom);
    let holds = min_entry >= bound;
    BoundCheck {
        min_entry,
        bound,
        holds,
    }
}

/// True iff every record of a non-empty trace carries the expected mass and
/// token totals. Totals are recomputed from the per-node snapshots, so a
/// mutated node value is caught even if the stored totals were left
/// consistent with each other.
pub fn audit_conservation(trace: &[TraceRecord], expected_sum: i64, n: usize) -> bool {
    !trace.is_empty()
        && trace.iter().all(|rec| {
            let mass: i64 = rec.nodes.iter().map(|s| s.mass).sum();
            let tokens: i64 = rec.nodes.iter().map(|s| s.tokens).sum();
            mass == expected_sum
                && tokens == n as i64
                && rec.mass_total == expected_sum
                && rec.count_total == n as i64
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    fn ratio(num: i64, den: i64) -> BigRational {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    #[test]
    fn average_of_worked_example() {
        let avg = exact_average(&[5, 3, 7, 2]).unwrap();
        assert_eq!(
            avg,
            ExactAverage {
                sum: 17,
                n: 4,
                quotient: 4,
                remainder: 1,
                floor: 4,
                ceil: 5
            }
        );
    }

    #[test]
    fn average_of_seven_node_fixture() {
        let avg = exact_average(&fixtures::fig2_initial_values()).unwrap();
        assert_eq!(avg.sum, 60);
        assert_eq!(avg.n, 7);
        assert_eq!(avg.quotient, 8);
        assert_eq!(avg.remainder, 4);
        assert_eq!((avg.floor, avg.ceil), (8, 9));
    }

    #[test]
    fn average_handles_exact_negative_case() {
        let avg = exact_average(&[-5, -5]).unwrap();
        assert_eq!(avg.sum, -10);
        assert_eq!(avg.quotient, -5);
        assert_eq!(avg.remainder, 0);
        assert_eq!((avg.floor, avg.ceil), (-5, -5));
    }

    #[test]
    fn average_rejects_short_input() {
        assert_eq!(
            exact_average(&[]).unwrap_err(),
            OracleError::TooFewValues(0)
        );
        assert_eq!(
            exact_average(&[7]).unwrap_err(),
            OracleError::TooFewValues(1)
        );
    }

    #[test]
    fn zero_step_power_is_identity() {
        let g = fixtures::fig1();
        let b = TransmissionPolicy::uniform(&g);
        assert_eq!(markov_power(&b, 0), RationalMatrix::identity(4));
    }

    #[test]
    fn one_step_power_equals_the_policy_matrix() {
        let g = fixtures::fig1();
        let b = TransmissionPolicy::uniform(&g);
        let m = markov_power(&b, 1);
        let expected = [
            [ratio(1, 3), ratio(0, 1), ratio(1, 3), ratio(0, 1)],
            [ratio(1, 3), ratio(1, 2), ratio(1, 3), ratio(0, 1)],
            [ratio(1, 3), ratio(0, 1), ratio(1, 3), ratio(1, 2)],
            [ratio(0, 1), ratio(1, 2), ratio(0, 1), ratio(1, 2)],
        ];
        for (row, row_vals) in expected.iter().enumerate() {
            for (col, val) in row_vals.iter().enumerate() {
                assert_eq!(m.entry(row, col), val, "entry ({row}, {col})");
            }
        }
    }

    #[test]
    fn three_step_power_clears_the_bound_on_fig1() {
        let g = fixtures::fig1();
        let b = TransmissionPolicy::uniform(&g);
        let m = markov_power(&b, 3);
        let bound = ratio(1, 27);
        for row in 0..4 {
            for col in 0..4 {
                assert!(
                    m.entry(row, col) >= &bound,
                    "entry ({row}, {col}) below 1/27"
                );
            }
            assert!(m.column_sum(row).is_one());
        }
    }

    #[test]
    fn bound_check_on_fig1() {
        let g = fixtures::fig1();
        let b = TransmissionPolicy::uniform(&g);
        let check = check_token_bound(&b, &g);
        assert_eq!(check.bound, ratio(1, 27));
        assert!(check.holds);
        assert!(check.min_entry >= check.bound);
    }

    #[test]
    fn bound_is_tight_on_the_two_cycle() {
        let g = Digraph::new(2, [(0, 1), (1, 0)]).unwrap();
        let b = TransmissionPolicy::uniform(&g);
        let check = check_token_bound(&b, &g);
        assert_eq!(check.bound, ratio(1, 2));
        assert_eq!(check.min_entry, ratio(1, 2));
        assert!(check.holds);
    }

    #[test]
    fn audit_detects_an_injected_fault() {
        use crate::sim::{run, PolicyChoice, ScheduleMode, SimConfig};
        let g = fixtures::fig1();
        let cfg = SimConfig {
            graph: &g,
            initial_values: fixtures::example1_initial_values(),
            seed: 0,
            max_rounds: 10,
            confirmation_window: None,
            policy: PolicyChoice::Uniform,
            mode: ScheduleMode::Scripted(fixtures::example1_schedule()),
            allow_weakly_connected: false,
        };
        let result = run(&cfg).unwrap();
        assert!(audit_conservation(&result.records, 17, 4));
        assert!(!audit_conservation(&result.records, 18, 4));
        assert!(!audit_conservation(&result.records, 17, 5));
        assert!(!audit_conservation(&[], 17, 4));

        let mut tampered = result.records.clone();
        tampered[2].nodes[1].mass += 1;
        assert!(!audit_conservation(&tampered, 17, 4));
    }

    fn arb_small_policy() -> impl Strategy<Value = (Digraph, TransmissionPolicy)> {
        (2usize..6, 0.0f64..0.7, 0u64..1000).prop_map(|(n, p, seed)| {
            let g = crate::graph::random_strongly_connected(n, p, seed).unwrap();
            let b = TransmissionPolicy::uniform(&g);
            (g, b)
        })
    }

    proptest! {
        #[test]
        fn power_columns_sum_to_one((_g, b) in arb_small_policy(), steps in 0u32..6) {
            let m = markov_power(&b, steps);
            for col in 0..m.n() {
                prop_assert!(m.column_sum(col).is_one());
            }
        }

        #[test]
        fn powers_compose((_g, b) in arb_small_policy(), a in 0u32..5, c in 0u32..5) {
            let combined = markov_power(&b, a + c);
            let composed = markov_power(&b, a).mul(&markov_power(&b, c));
            prop_assert_eq!(combined, composed);
        }

        #[test]
        fn average_agrees_with_rational_division(values in proptest::collection::vec(-10_000i64..=10_000, 2..40)) {
            // Independent route: big-rational division with floor/ceil.
            let avg = exact_average(&values).unwrap();
            let sum: i64 = values.iter().sum();
            let q = BigRational::new(BigInt::from(sum), BigInt::from(values.len() as i64));
            prop_assert_eq!(BigInt::from(avg.floor), q.floor().to_integer());
            prop_assert_eq!(BigInt::from(avg.ceil), q.ceil().to_integer());
            prop_assert_eq!(avg.sum, sum);
            prop_assert_eq!(avg.n as i64 * avg.quotient + avg.remainder, sum);
            prop_assert!((0..avg.n as i64).contains(&avg.remainder));
        }
    }
}
