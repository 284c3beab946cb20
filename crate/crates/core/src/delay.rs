//! Decoding-delay accounting.
//!
//! For a planned transmission the sender splits its outstanding receivers
//! `O` (perceived non-empty Wants) into untargeted `ν`, targeted with a
//! never-attempted wanted packet `τ_n`, and targeted with an uncertain wanted
//! packet `τ_u`. `F ⊆ O` holds receivers all of whose wanted packets are
//! uncertain. The expected sum of decoding-delay increments is then
//!
//! ```text
//! E[D] = Σ_{ν} (1-p_i) + Σ_{τ_u} (1-p_i) P^R_{i j} - Σ_{F} (1-p_i) Π_{h ∈ W_i} P^R_{i h}
//! ```
//!
//! [`expected_decoding_delay_oracle`] recomputes the same quantity by brute
//! force from the decoding-delay definition.

use fixedbitset::FixedBitSet;

use crate::belief::{p_loss, uncertain_entries};
use crate::error::{IdncError, Result};
use crate::graph::{decode_effect, DecodeEffect};
use crate::model::{ChannelParams, PacketId, PerceivedState, ReceiverId};
use crate::selection::TransmissionPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TargetClass {
    /// ν: not targeted with a primary packet.
    Untargeted,
    /// τ_n: targeted with a wanted packet not attempted since last heard.
    New,
    /// τ_u: targeted with an uncertain wanted packet.
    Uncertain,
}

/// The five receiver cases of the closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DelayCase {
    PartialUntargeted,
    FullUntargeted,
    PartialNew,
    PartialUncertain,
    FullUncertain,
}

impl DelayCase {
    pub const ALL: [DelayCase; 5] = [
        DelayCase::PartialUntargeted,
        DelayCase::FullUntargeted,
        DelayCase::PartialNew,
        DelayCase::PartialUncertain,
        DelayCase::FullUncertain,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceiverClass {
    pub receiver: ReceiverId,
    /// Member of F.
    pub fully_uncertain: bool,
    pub target: TargetClass,
    /// j_κ, defined for τ_n and τ_u.
    pub decoded: Option<PacketId>,
}

impl ReceiverClass {
    pub fn case(&self) -> DelayCase {
        match (self.fully_uncertain, self.target) {
            (false, TargetClass::Untargeted) => DelayCase::PartialUntargeted,
            (true, TargetClass::Untargeted) => DelayCase::FullUntargeted,
            (false, TargetClass::New) => DelayCase::PartialNew,
            (false, TargetClass::Uncertain) => DelayCase::PartialUncertain,
            (true, TargetClass::Uncertain) => DelayCase::FullUncertain,
            (true, TargetClass::New) => unreachable!("rejected by classify_receivers"),
        }
    }
}

/// Classification of every outstanding receiver, in receiver order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceiverClasses {
    pub outstanding: Vec<ReceiverClass>,
}

impl ReceiverClasses {
    fn select(&self, pred: impl Fn(&ReceiverClass) -> bool) -> Vec<ReceiverId> {
        self.outstanding
            .iter()
            .filter(|c| pred(c))
            .map(|c| c.receiver)
            .collect()
    }

    /// O.
    pub fn outstanding_ids(&self) -> Vec<ReceiverId> {
        self.select(|_| true)
    }

    /// F.
    pub fn fully_uncertain(&self) -> Vec<ReceiverId> {
        self.select(|c| c.fully_uncertain)
    }

    /// ν(κ).
    pub fn untargeted(&self) -> Vec<ReceiverId> {
        self.select(|c| c.target == TargetClass::Untargeted)
    }

    /// τ_n(κ).
    pub fn targeted_new(&self) -> Vec<ReceiverId> {
        self.select(|c| c.target == TargetClass::New)
    }

    /// τ_u(κ).
    pub fn targeted_uncertain(&self) -> Vec<ReceiverId> {
        self.select(|c| c.target == TargetClass::Uncertain)
    }

    pub fn decoded_packet(&self, receiver: ReceiverId) -> Option<PacketId> {
        self.outstanding
            .iter()
            .find(|c| c.receiver == receiver)
            .and_then(|c| c.decoded)
    }
}

/// Split the outstanding receivers for `plan`. A receiver reached only
/// through a secondary vertex counts as untargeted.
pub fn classify_receivers(state: &PerceivedState, plan: &TransmissionPlan) -> Result<ReceiverClasses> {
    let m = state.receivers();
    let mut primary_target: Vec<Option<PacketId>> = vec![None; m];
    for v in &plan.primary {
        if v.receiver.0 >= m || v.packet.0 >= state.packets() {
            return Err(IdncError::InconsistentPlan(format!(
                "vertex ({}, {}) is outside the {}x{} state",
                v.receiver.0,
                v.packet.0,
                m,
                state.packets()
            )));
        }
        if !state.status(v.receiver, v.packet).is_wanted() {
            return Err(IdncError::InconsistentPlan(format!(
                "primary vertex ({}, {}) is not a wanted packet",
                v.receiver.0, v.packet.0
            )));
        }
        if primary_target[v.receiver.0].replace(v.packet).is_some() {
            return Err(IdncError::InconsistentPlan(format!(
                "receiver {} targeted twice",
                v.receiver.0
            )));
        }
    }

    let mut outstanding = Vec::new();
    for (i, target) in primary_target.into_iter().enumerate() {
        let r = ReceiverId(i);
        let row = state.sfm().row(r);
        if !row.iter().any(|s| s.is_wanted()) {
            continue;
        }
        let fully_uncertain = !row.contains(&crate::model::ReceptionStatus::Wants);
        let (target, decoded) = match target {
            None => (TargetClass::Untargeted, None),
            Some(pk) if state.status(r, pk).is_uncertain() => (TargetClass::Uncertain, Some(pk)),
            Some(pk) => (TargetClass::New, Some(pk)),
        };
        if fully_uncertain && target == TargetClass::New {
            return Err(IdncError::InconsistentPlan(format!(
                "receiver {i} is fully uncertain yet targeted with a new packet"
            )));
        }
        outstanding.push(ReceiverClass {
            receiver: r,
            fully_uncertain,
            target,
            decoded,
        });
    }
    Ok(ReceiverClasses { outstanding })
}

/// Decoding-delay increment of one receiver for one transmission: 1 when it
/// receives the packet and cannot decode a new wanted packet from it.
/// Receivers whose true Wants set is already empty never accrue delay. An
/// empty `coded` set counts as non-innovative.
pub fn actual_delay_increment(
    holdings: &FixedBitSet,
    wanted: &FixedBitSet,
    coded: &[PacketId],
    received: bool,
) -> u32 {
    if !received || wanted.is_subset(holdings) {
        return 0;
    }
    match decode_effect(coded, holdings) {
        Ok(DecodeEffect::InstantlyDecodable(pk)) if wanted.contains(pk.0) => 0,
        _ => 1,
    }
}

fn entry_p_received(
    state: &PerceivedState,
    channels: &[ChannelParams],
    r: ReceiverId,
    pk: PacketId,
) -> Result<f64> {
    let ch = channels[r.0];
    Ok(1.0 - p_loss(ch.p, ch.q, state.theta(r, pk))?)
}

/// Closed-form expected sum decoding-delay increment of `plan`.
pub fn expected_decoding_delay(
    state: &PerceivedState,
    channels: &[ChannelParams],
    plan: &TransmissionPlan,
) -> Result<f64> {
    let classes = classify_receivers(state, plan)?;
    expected_decoding_delay_classified(state, channels, &classes)
}

pub fn expected_decoding_delay_classified(
    state: &PerceivedState,
    channels: &[ChannelParams],
    classes: &ReceiverClasses,
) -> Result<f64> {
    let mut total = 0.0;
    for c in &classes.outstanding {
        let success = channels[c.receiver.0].success();
        match (c.target, c.decoded) {
            (TargetClass::Untargeted, _) => total += success,
            (TargetClass::Uncertain, Some(pk)) => {
                total += success * entry_p_received(state, channels, c.receiver, pk)?;
            }
            _ => {}
        }
        if c.fully_uncertain {
            let mut all_received = 1.0;
            for (j, s) in state.sfm().row(c.receiver).iter().enumerate() {
                if s.is_wanted() {
                    all_received *= entry_p_received(state, channels, c.receiver, PacketId(j))?;
                }
            }
            total -= success * all_received;
        }
    }
    Ok(total)
}

pub const ORACLE_MAX_UNCERTAIN: usize = 12;
pub const ORACLE_MAX_RECEIVERS: usize = 6;

/// Exact expectation by enumeration: every realization of the uncertain
/// entries and every erasure pattern of the transmission over the outstanding
/// receivers, scored with [`actual_delay_increment`].
pub fn expected_decoding_delay_oracle(
    state: &PerceivedState,
    channels: &[ChannelParams],
    plan: &TransmissionPlan,
) -> Result<f64> {
    let m = state.receivers();
    let n = state.packets();
    if m > ORACLE_MAX_RECEIVERS {
        return Err(IdncError::OracleCapExceeded {
            size: m,
            cap: ORACLE_MAX_RECEIVERS,
        });
    }
    let entries = uncertain_entries(state);
    if entries.len() > ORACLE_MAX_UNCERTAIN {
        return Err(IdncError::OracleCapExceeded {
            size: entries.len(),
            cap: ORACLE_MAX_UNCERTAIN,
        });
    }

    let outstanding: Vec<usize> = (0..m)
        .filter(|&i| state.sfm().row(ReceiverId(i)).iter().any(|s| s.is_wanted()))
        .collect();
    let wanted: Vec<FixedBitSet> = (0..m).map(|i| state.sfm().wants_set(ReceiverId(i))).collect();
    let has: Vec<FixedBitSet> = (0..m).map(|i| state.sfm().has_set(ReceiverId(i))).collect();

    let loss: Vec<f64> = entries
        .iter()
        .map(|&(r, pk)| {
            let ch = channels[r.0];
            p_loss(ch.p, ch.q, state.theta(r, pk))
        })
        .collect::<Result<_>>()?;

    let mut expectation = 0.0;
    let mut holdings = vec![FixedBitSet::with_capacity(n); m];
    let mut delay_if_received = vec![0u32; outstanding.len()];
    for mask in 0u32..(1u32 << entries.len()) {
        let mut weight = 1.0;
        for (k, &l) in loss.iter().enumerate() {
            weight *= if mask >> k & 1 == 1 { 1.0 - l } else { l };
        }
        for i in 0..m {
            holdings[i].clone_from(&has[i]);
        }
        for (k, &(r, pk)) in entries.iter().enumerate() {
            if mask >> k & 1 == 1 {
                holdings[r.0].insert(pk.0);
            }
        }
        for (slot, &i) in outstanding.iter().enumerate() {
            delay_if_received[slot] = actual_delay_increment(&holdings[i], &wanted[i], &plan.coded, true);
        }

        for erasures in 0u32..(1u32 << outstanding.len()) {
            let mut p_pattern = weight;
            let mut delay = 0u32;
            for (slot, &i) in outstanding.iter().enumerate() {
                let ch = channels[i];
                if erasures >> slot & 1 == 1 {
                    p_pattern *= ch.p;
                } else {
                    p_pattern *= ch.success();
                    delay += delay_if_received[slot];
                }
            }
            expectation += p_pattern * delay as f64;
        }
    }
    Ok(expectation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::VertexId;
    use crate::model::ReceptionStatus::*;
    use crate::model::StateFeedbackMatrix;

    fn bits(n: usize, items: &[usize]) -> FixedBitSet {
        let mut b = FixedBitSet::with_capacity(n);
        for &i in items {
            b.insert(i);
        }
        b
    }

    fn plan(primary: &[(usize, usize)], coded: &[usize]) -> TransmissionPlan {
        TransmissionPlan {
            primary: primary.iter().map(|&(i, j)| VertexId::new(i, j)).collect(),
            secondary: vec![],
            coded: coded.iter().map(|&j| PacketId(j)).collect(),
        }
    }

    fn half() -> Vec<ChannelParams> {
        vec![ChannelParams::reciprocal(0.5).unwrap(); 3]
    }

    #[test]
    fn classification_examples() {
        let sfm = StateFeedbackMatrix::from_rows(vec![
            vec![Wants, Has, Has],
            vec![Uncertain { wanted: true }, Has, Has],
            vec![Has, Has, LacksUndesired],
        ])
        .unwrap();
        let state = PerceivedState::with_theta(sfm, &[vec![0; 3], vec![2, 0, 0], vec![0; 3]]).unwrap();
        let c = classify_receivers(&state, &plan(&[(0, 0)], &[0])).unwrap();
        assert_eq!(c.targeted_new(), vec![ReceiverId(0)]);
        assert_eq!(c.untargeted(), vec![ReceiverId(1)]);
        assert_eq!(c.fully_uncertain(), vec![ReceiverId(1)]);
        assert_eq!(c.outstanding_ids(), vec![ReceiverId(0), ReceiverId(1)]);
        assert_eq!(c.decoded_packet(ReceiverId(0)), Some(PacketId(0)));

        let c = classify_receivers(&state, &plan(&[(0, 0), (1, 0)], &[0])).unwrap();
        assert_eq!(c.targeted_uncertain(), vec![ReceiverId(1)]);
        assert!(c.untargeted().is_empty());
    }

    #[test]
    fn classification_rejects_bad_plans() {
        let sfm = StateFeedbackMatrix::from_rows(vec![vec![Wants, LacksUndesired]]).unwrap();
        let state = PerceivedState::certain(sfm).unwrap();
        assert!(classify_receivers(&state, &plan(&[(0, 1)], &[1])).is_err());
        assert!(classify_receivers(&state, &plan(&[(0, 0), (0, 0)], &[0])).is_err());
        assert!(classify_receivers(&state, &plan(&[(3, 0)], &[0])).is_err());
    }

    #[test]
    fn increments() {
        let wanted = bits(3, &[0, 1]);
        let held = bits(3, &[1]);
        assert_eq!(actual_delay_increment(&held, &wanted, &[PacketId(0)], false), 0);
        assert_eq!(
            actual_delay_increment(&held, &wanted, &[PacketId(0), PacketId(1)], true),
            0
        );
        assert_eq!(actual_delay_increment(&held, &wanted, &[PacketId(1)], true), 1);
        // Decodes something, but not a wanted packet.
        assert_eq!(actual_delay_increment(&held, &wanted, &[PacketId(2)], true), 1);
        assert_eq!(
            actual_delay_increment(&bits(3, &[]), &wanted, &[PacketId(0), PacketId(2)], true),
            1
        );
        // Complete receivers never accrue delay.
        assert_eq!(
            actual_delay_increment(&bits(3, &[0, 1]), &wanted, &[PacketId(2)], true),
            0
        );
    }

    #[test]
    fn closed_form_hand_values() {
        // One untargeted receiver, W = U = {0}, θ = 1, p = q = 0.5:
        // 0.5 - 0.5 * (1/3) = 1/3.
        let sfm = StateFeedbackMatrix::from_rows(vec![vec![Uncertain { wanted: true }, Has]]).unwrap();
        let state = PerceivedState::with_theta(sfm, &[vec![1, 0]]).unwrap();
        let untargeted = plan(&[], &[1]);
        let e = expected_decoding_delay(&state, &half(), &untargeted).unwrap();
        assert!((e - 1.0 / 3.0).abs() < 1e-15);
        let o = expected_decoding_delay_oracle(&state, &half(), &untargeted).unwrap();
        assert!((e - o).abs() < 1e-12);

        // τ_u receiver that still has a never-attempted wanted packet:
        // 0.5 * (1/3) = 1/6.
        let sfm = StateFeedbackMatrix::from_rows(vec![vec![Uncertain { wanted: true }, Wants]]).unwrap();
        let state = PerceivedState::with_theta(sfm, &[vec![1, 0]]).unwrap();
        let targeted = plan(&[(0, 0)], &[0]);
        let e = expected_decoding_delay(&state, &half(), &targeted).unwrap();
        assert!((e - 1.0 / 6.0).abs() < 1e-15);
        let o = expected_decoding_delay_oracle(&state, &half(), &targeted).unwrap();
        assert!((e - o).abs() < 1e-12);
    }

    #[test]
    fn perfect_feedback_reduces_to_untargeted_sum() {
        let sfm =
            StateFeedbackMatrix::from_rows(vec![vec![Wants, Has], vec![Has, Wants], vec![Wants, Wants]])
                .unwrap();
        let state = PerceivedState::certain(sfm).unwrap();
        let ch = vec![
            ChannelParams::new(0.1, 0.0).unwrap(),
            ChannelParams::new(0.2, 0.0).unwrap(),
            ChannelParams::new(0.3, 0.0).unwrap(),
        ];
        let p = plan(&[(0, 0), (1, 1)], &[0, 1]);
        let e = expected_decoding_delay(&state, &ch, &p).unwrap();
        assert!((e - 0.7).abs() < 1e-15);
        assert!((expected_decoding_delay_oracle(&state, &ch, &p).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn nothing_outstanding_is_zero() {
        let sfm = StateFeedbackMatrix::from_rows(vec![vec![Has, LacksUndesired]]).unwrap();
        let state = PerceivedState::certain(sfm).unwrap();
        let empty = TransmissionPlan::default();
        assert_eq!(expected_decoding_delay(&state, &half(), &empty).unwrap(), 0.0);
        assert_eq!(
            expected_decoding_delay_oracle(&state, &half(), &empty).unwrap(),
            0.0
        );
    }

    #[test]
    fn oracle_caps() {
        let sfm = StateFeedbackMatrix::filled(7, 1, Wants);
        let state = PerceivedState::certain(sfm).unwrap();
        let ch = vec![ChannelParams::reciprocal(0.5).unwrap(); 7];
        assert!(matches!(
            expected_decoding_delay_oracle(&state, &ch, &TransmissionPlan::default()),
            Err(IdncError::OracleCapExceeded { size: 7, cap: 6 })
        ));
    }
}
