//! Node-local state machine for event-triggered mass splitting.
//!
//! Each node carries two mass variables, the integer `mass` it currently
//! holds and the number of `tokens` backing it, plus three state variables:
//! a snapshot of the mass/token pair taken at its last trigger and the
//! derived quantized `estimate = floor(snapshot_mass / snapshot_tokens)`.
//!
//! A node triggers whenever it holds at least one token. On a trigger it
//! refreshes the snapshot, splits its mass into one near-equal integer piece
//! per token, and emits every piece; aggregation then rebuilds the mass pair
//! from whatever tokens arrive (including self-addressed ones).
//!
//! All division is mathematical floor (rounds toward −∞), which keeps the
//! remainder in `[0, tokens)` and the piece spread at most 1 even for
//! negative masses.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("token count must be positive, got {0}")]
    NonPositiveTokenCount(i64),
    #[error("node is not triggered (holds no tokens)")]
    NotTriggered,
    #[error("message addressed to v{} delivered to v{}", .dest + 1, .node + 1)]
    DestinationMismatch { node: usize, dest: usize },
}

/// Per-node protocol variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeState {
    /// Mass currently held (may be negative).
    pub mass: i64,
    /// Tokens currently held (≥ 0); zero means the node stays silent.
    pub tokens: i64,
    /// Mass at the last trigger.
    pub snapshot_mass: i64,
    /// Tokens at the last trigger (≥ 1 from initialization onward).
    pub snapshot_tokens: i64,
    /// Quantized estimate `floor(snapshot_mass / snapshot_tokens)`.
    pub estimate: i64,
}

impl NodeState {
    /// Initial state: one token carrying `y0`, snapshot primed to match.
    pub fn init(y0: i64) -> Self {
        Self {
            mass: y0,
            tokens: 1,
            snapshot_mass: y0,
            snapshot_tokens: 1,
            estimate: y0,
        }
    }

    /// Event trigger condition: the node holds at least one token.
    pub fn is_triggered(&self) -> bool {
        self.tokens > 0
    }

    /// Apply the trigger: refresh the snapshot and estimate from the current
    /// mass pair, and return the split pieces to transmit. After this the
    /// mass is considered fully emitted; the next [`NodeState::aggregate`]
    /// rebuilds it from received tokens only.
    pub fn trigger_update(&mut self) -> Result<Vec<i64>, ProtocolError> {
        if !self.is_triggered() {
            return Err(ProtocolError::NotTriggered);
        }
        self.snapshot_mass = self.mass;
        self.snapshot_tokens = self.tokens;
        self.estimate = quantized_estimate(self.snapshot_mass, self.snapshot_tokens)?;
        split_mass(self.mass, self.tokens)
    }

    /// Replace the mass pair with the sums over `received` (empty sum = 0).
    /// State variables are untouched.
    pub fn aggregate(
        &mut self,
        node: usize,
        received: &[TokenMessage],
    ) -> Result<(), ProtocolError> {
        for msg in received {
            if msg.dest != node {
                return Err(ProtocolError::DestinationMismatch {
                    node,
                    dest: msg.dest,
                });
            }
        }
        self.mass = received.iter().map(|m| m.value).sum();
        self.tokens = received.iter().map(|m| m.count).sum();
        Ok(())
    }
}

/// One split piece in flight from `origin` to `dest` (`dest` may equal
/// `origin` for a self-transmission). `count` is always 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenMessage {
    pub value: i64,
    pub count: i64,
    pub origin: usize,
    pub dest: usize,
}

impl TokenMessage {
    pub fn new(value: i64, origin: usize, dest: usize) -> Self {
        Self {
            value,
            count: 1,
            origin,
            dest,
        }
    }

    pub fn is_self_delivery(&self) -> bool {
        self.origin == self.dest
    }
}

/// Split `mass` into `tokens` integer pieces that sum to `mass` and differ
/// pairwise by at most 1. With `base = floor(mass/tokens)` and remainder
/// `r = mass − tokens·base`, the first `r` pieces are `base + 1`, the rest
/// `base`.
pub fn split_mass(mass: i64, tokens: i64) -> Result<Vec<i64>, ProtocolError> {
    if tokens <= 0 {
        return Err(ProtocolError::NonPositiveTokenCount(tokens));
    }
    let base = mass.div_euclid(tokens);
    let remainder = mass.rem_euclid(tokens);
    Ok((0..tokens)
        .map(|t| if t < remainder { base + 1 } else { base })
        .collect())
}

/// Mathematical floor of `mass / tokens` (rounds toward −∞).
pub fn quantized_estimate(mass: i64, tokens: i64) -> Result<i64, ProtocolError> {
    if tokens <= 0 {
        return Err(ProtocolError::NonPositiveTokenCount(tokens));
    }
    Ok(mass.div_euclid(tokens))
}
