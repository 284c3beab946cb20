//! Posterior reception probabilities for entries attempted without heard
//! feedback, and the maximum-likelihood decision rules built on them.
//!
//! A targeted receiver stays silent either because the packet was erased
//! (probability `p`) or because it was received and the feedback erased
//! (probability `(1 - p) q`). After `θ` silent attempts the packet is still
//! missing with probability `(p / (p + (1 - p) q))^θ`. Because entries are
//! independent, the most likely joint state is the per-entry most likely
//! state, which reduces to comparing `(1 - p) q / p` with `2^(1/θ) - 1`.

use crate::error::{IdncError, Result};
use crate::model::{ChannelParams, PacketId, PerceivedState, ReceiverId};

fn check_open(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(IdncError::InvalidProbability { name, value })
    }
}

/// P^L: probability that a packet attempted `theta` times without heard
/// feedback was never received.
pub fn p_loss(p: f64, q: f64, theta: u32) -> Result<f64> {
    if theta == 0 {
        return Err(IdncError::NoUncertainty);
    }
    check_open("p", p)?;
    if !(0.0..1.0).contains(&q) {
        return Err(IdncError::InvalidProbability { name: "q", value: q });
    }
    let per_attempt = p / (p + (1.0 - p) * q);
    Ok(per_attempt.powi(theta as i32))
}

/// P^L on a reciprocal channel (`q = p`): `(1 / (2 - p))^θ`.
pub fn p_loss_reciprocal(p: f64, theta: u32) -> Result<f64> {
    if theta == 0 {
        return Err(IdncError::NoUncertainty);
    }
    check_open("p", p)?;
    Ok((1.0 / (2.0 - p)).powi(theta as i32))
}

/// P^R = 1 - P^L.
pub fn p_received(p: f64, q: f64, theta: u32) -> Result<f64> {
    p_loss(p, q, theta).map(|l| 1.0 - l)
}

/// P^L of entry `(i, j)` of a perceived state, or `None` when the entry is
/// not uncertain.
pub fn entry_p_loss(
    state: &PerceivedState,
    channels: &[ChannelParams],
    receiver: ReceiverId,
    packet: PacketId,
) -> Result<Option<f64>> {
    let theta = state.theta(receiver, packet);
    if theta == 0 {
        return Ok(None);
    }
    let ch = channels[receiver.0];
    p_loss(ch.p, ch.q, theta).map(Some)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MlDecision {
    /// Most likely still missing; keep the vertex active.
    Lost,
    /// Most likely received; hide the vertex.
    Received,
}

pub const THRESHOLD_TABLE_LEN: usize = 64;

/// T(n) = 2^(1/n) - 1, tabulated for n = 1..=64.
#[derive(Debug, Clone)]
pub struct ThresholdTable {
    values: [f64; THRESHOLD_TABLE_LEN],
}

impl Default for ThresholdTable {
    fn default() -> Self {
        Self::new()
    }
}

impl ThresholdTable {
    pub fn new() -> Self {
        let mut values = [0.0; THRESHOLD_TABLE_LEN];
        for (k, v) in values.iter_mut().enumerate() {
            *v = Self::compute(k as u32 + 1);
        }
        Self { values }
    }

    fn compute(n: u32) -> f64 {
        2f64.powf(1.0 / n as f64) - 1.0
    }

    /// `n >= 1`; values past the table are computed on demand.
    pub fn get(&self, n: u32) -> f64 {
        assert!(n >= 1, "threshold index starts at 1");
        match self.values.get(n as usize - 1) {
            Some(&v) => v,
            None => Self::compute(n),
        }
    }
}

/// Per-receiver ML rule with the channel ratio `(1 - p) q / p` computed once.
#[derive(Debug, Clone, Copy)]
pub struct MlRule {
    ratio: f64,
    one_attempt_lost: bool,
}

impl MlRule {
    pub fn new(channel: ChannelParams) -> Self {
        let ChannelParams { p, q } = channel;
        let reciprocal = channel.is_reciprocal();
        let ratio = if reciprocal {
            1.0 - p
        } else if p > 0.0 {
            (1.0 - p) * q / p
        } else {
            f64::INFINITY
        };
        Self {
            ratio,
            // p > q makes the one-attempt ratio strictly below 1.
            one_attempt_lost: reciprocal || p > q,
        }
    }

    pub fn decide(&self, theta: u32, table: &ThresholdTable) -> MlDecision {
        debug_assert!(theta >= 1);
        if theta == 1 && self.one_attempt_lost {
            return MlDecision::Lost;
        }
        if self.ratio <= table.get(theta) {
            MlDecision::Lost
        } else {
            MlDecision::Received
        }
    }
}

/// Threshold form of the ML rule for one entry. Ties go to `Lost`.
pub fn ml_entry_decision(p: f64, q: f64, theta: u32) -> MlDecision {
    ml_entry_decision_with(ChannelParams { p, q }, theta, &ThresholdTable::new())
}

pub fn ml_entry_decision_with(channel: ChannelParams, theta: u32, table: &ThresholdTable) -> MlDecision {
    MlRule::new(channel).decide(theta, table)
}

/// Uncertain entries of a state in row-major order: bit `k` of a state
/// encoding refers to `uncertain_entries(..)[k]`.
pub fn uncertain_entries(state: &PerceivedState) -> Vec<(ReceiverId, PacketId)> {
    let mut out = Vec::new();
    for i in 0..state.receivers() {
        for j in 0..state.packets() {
            if state.status(ReceiverId(i), PacketId(j)).is_uncertain() {
                out.push((ReceiverId(i), PacketId(j)));
            }
        }
    }
    out
}

pub const DEFAULT_ORACLE_CAP: usize = 16;

/// One realization of all uncertain entries. Bit `k` of `received_mask` set
/// means entry `k` is realized as received.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub entries: Vec<(ReceiverId, PacketId)>,
    pub received_mask: u64,
    pub probability: f64,
}

impl Realization {
    pub fn is_received(&self, k: usize) -> bool {
        self.received_mask >> k & 1 == 1
    }
}

/// The belief vector: every realization of the uncertain entries with its
/// probability, in increasing `received_mask` order.
pub fn belief_distribution(
    state: &PerceivedState,
    channels: &[ChannelParams],
    cap: usize,
) -> Result<Vec<Realization>> {
    let entries = uncertain_entries(state);
    if entries.len() > cap || entries.len() > 63 {
        return Err(IdncError::OracleCapExceeded {
            size: entries.len(),
            cap: cap.min(63),
        });
    }
    let losses = entries
        .iter()
        .map(|&(i, j)| {
            let ch = channels[i.0];
            p_loss(ch.p, ch.q, state.theta(i, j))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::with_capacity(1 << entries.len());
    for mask in 0u64..(1u64 << entries.len()) {
        let probability = losses
            .iter()
            .enumerate()
            .map(|(k, &l)| if mask >> k & 1 == 1 { 1.0 - l } else { l })
            .product();
        out.push(Realization {
            entries: entries.clone(),
            received_mask: mask,
            probability,
        });
    }
    Ok(out)
}

/// Exhaustive maximum-likelihood state. Ties keep the lowest encoding.
pub fn ml_state_oracle(
    state: &PerceivedState,
    channels: &[ChannelParams],
    cap: usize,
) -> Result<Realization> {
    let mut best: Option<Realization> = None;
    for r in belief_distribution(state, channels, cap)? {
        if best.as_ref().is_none_or(|b| r.probability > b.probability) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one realization"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ReceptionStatus, StateFeedbackMatrix};

    #[test]
    fn p_loss_hand_values() {
        assert!((p_loss(0.5, 0.5, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((p_loss(0.5, 0.5, 2).unwrap() - 4.0 / 9.0).abs() < 1e-15);
        for theta in 1..10 {
            assert_eq!(p_loss(0.3, 0.0, theta).unwrap(), 1.0);
        }
    }

    #[test]
    fn p_loss_rejects_bad_inputs() {
        assert_eq!(p_loss(0.5, 0.5, 0), Err(IdncError::NoUncertainty));
        assert!(p_loss(0.0, 0.5, 1).is_err());
        assert!(p_loss(0.5, 1.0, 1).is_err());
        assert_eq!(p_loss_reciprocal(0.5, 0), Err(IdncError::NoUncertainty));
    }

    #[test]
    fn reciprocal_hand_values() {
        assert!((p_loss_reciprocal(0.5, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((p_loss_reciprocal(1e-9, 1).unwrap() - 0.5).abs() < 1e-9);
        assert!((p_loss_reciprocal(0.6, 3).unwrap() - 0.364_431_486_880_466_5).abs() < 1e-12);
    }

    #[test]
    fn threshold_table_shape() {
        let t = ThresholdTable::new();
        assert_eq!(t.get(1), 1.0);
        for n in 1..100 {
            assert!(t.get(n + 1) < t.get(n));
        }
        assert!((t.get(2) - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        assert_eq!(t.get(65), 2f64.powf(1.0 / 65.0) - 1.0);
    }

    #[test]
    fn decision_examples() {
        assert_eq!(ml_entry_decision(0.3, 0.1, 1), MlDecision::Lost);
        for p in [0.05, 0.3, 0.7, 0.95] {
            assert_eq!(ml_entry_decision(p, p, 1), MlDecision::Lost);
        }
        // 0.7 > sqrt(2) - 1
        assert_eq!(ml_entry_decision(0.3, 0.3, 2), MlDecision::Received);
        // Perfect feedback: silence is always a loss.
        assert_eq!(ml_entry_decision(0.3, 0.0, 40), MlDecision::Lost);
    }

    #[test]
    fn received_is_permanent() {
        let table = ThresholdTable::new();
        for &(p, q) in &[(0.3, 0.3), (0.6, 0.2), (0.1, 0.05), (0.5, 0.45)] {
            let rule = MlRule::new(ChannelParams { p, q });
            let mut seen_received = false;
            for theta in 1..=64 {
                let d = rule.decide(theta, &table);
                if seen_received {
                    assert_eq!(d, MlDecision::Received, "p={p} q={q} theta={theta}");
                }
                seen_received |= d == MlDecision::Received;
            }
        }
    }

    fn two_unheard() -> (PerceivedState, Vec<ChannelParams>) {
        use ReceptionStatus::*;
        // After sending 0 xor 3: r0's packet 0 and r1's packet 3 are unheard.
        let sfm = StateFeedbackMatrix::from_rows(vec![
            vec![Uncertain { wanted: true }, Has, LacksUndesired, Has],
            vec![Has, Wants, Has, Uncertain { wanted: true }],
            vec![Wants, Wants, Has, LacksUndesired],
        ])
        .unwrap();
        let theta = vec![vec![1, 0, 0, 0], vec![0, 0, 0, 1], vec![0; 4]];
        let state = PerceivedState::with_theta(sfm, &theta).unwrap();
        (state, vec![ChannelParams::reciprocal(0.5).unwrap(); 3])
    }

    #[test]
    fn belief_after_unheard_xor() {
        let (state, channels) = two_unheard();
        let dist = belief_distribution(&state, &channels, DEFAULT_ORACLE_CAP).unwrap();
        assert_eq!(dist.len(), 4);
        let total: f64 = dist.iter().map(|r| r.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let ml = ml_state_oracle(&state, &channels, DEFAULT_ORACLE_CAP).unwrap();
        assert_eq!(ml.received_mask, 0);
        assert!((ml.probability - 4.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn oracle_trivial_and_single_entry() {
        let sfm = StateFeedbackMatrix::from_rows(vec![vec![ReceptionStatus::Wants]]).unwrap();
        let state = PerceivedState::certain(sfm).unwrap();
        let ch = [ChannelParams::reciprocal(0.5).unwrap()];
        let ml = ml_state_oracle(&state, &ch, 16).unwrap();
        assert_eq!(ml.probability, 1.0);
        assert!(ml.entries.is_empty());

        let sfm =
            StateFeedbackMatrix::from_rows(vec![vec![ReceptionStatus::Uncertain { wanted: true }]]).unwrap();
        let state = PerceivedState::with_theta(sfm, &[vec![1]]).unwrap();
        let ml = ml_state_oracle(&state, &ch, 16).unwrap();
        assert!(!ml.is_received(0));
        assert!((ml.probability - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn oracle_cap() {
        let (state, channels) = two_unheard();
        assert_eq!(
            ml_state_oracle(&state, &channels, 1),
            Err(IdncError::OracleCapExceeded { size: 2, cap: 1 })
        );
    }
}
