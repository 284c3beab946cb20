//! Seeded frame simulation: N uncoded broadcasts, then coded recovery
//! transmissions until the sender believes every receiver is complete.
//!
//! Every slot draws one forward uniform and one feedback uniform per
//! receiver, in receiver order, whatever the policy does with them. Two
//! policies that make the same decisions therefore see the same channel.

use std::fmt;
use std::str::FromStr;

use fixedbitset::FixedBitSet;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::belief::{MlDecision, MlRule, ThresholdTable};
use crate::error::{IdncError, Result};
use crate::graph::{decode_effect, DecodeEffect, IdncGraph};
use crate::model::{
    apply_initial_phase, ActualState, ChannelParams, DemandProfile, PacketId, PerceivedState, ReceiverId,
    ReceptionStatus,
};
use crate::selection::{select_transmission, SelectionParams, TransmissionPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum PolicyKind {
    /// Perfect feedback: every q_i is forced to zero.
    #[serde(rename = "PF")]
    Pf,
    /// Hide uncertain vertices whose maximum-likelihood state is received.
    #[serde(rename = "ML")]
    Ml,
    /// Hide every uncertain vertex.
    #[serde(rename = "FVE")]
    Fve,
    /// Keep every uncertain vertex.
    #[serde(rename = "NVE")]
    Nve,
    /// Decoding-delay weights, no hiding.
    #[serde(rename = "WVS_DD")]
    WvsDd,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Pf,
        PolicyKind::Ml,
        PolicyKind::Fve,
        PolicyKind::Nve,
        PolicyKind::WvsDd,
    ];

    /// Stable identifier mixed into trial seeds.
    pub fn id(self) -> u64 {
        match self {
            PolicyKind::Pf => 0,
            PolicyKind::Ml => 1,
            PolicyKind::Fve => 2,
            PolicyKind::Nve => 3,
            PolicyKind::WvsDd => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Pf => "PF",
            PolicyKind::Ml => "ML",
            PolicyKind::Fve => "FVE",
            PolicyKind::Nve => "NVE",
            PolicyKind::WvsDd => "WVS_DD",
        }
    }

    pub fn selection_params(self, m_exponent: f64) -> SelectionParams {
        let base = match self {
            PolicyKind::WvsDd => SelectionParams::decoding_delay(),
            _ => SelectionParams::default(),
        };
        SelectionParams { m_exponent, ..base }
    }

    pub fn effective_channel(self, channel: ChannelParams) -> ChannelParams {
        match self {
            PolicyKind::Pf => channel.with_perfect_feedback(),
            _ => channel,
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = IdncError;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| IdncError::Config(format!("unknown policy `{s}`")))
    }
}

/// Per-receiver channels and demands of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSample {
    pub channels: Vec<ChannelParams>,
    pub demand: DemandProfile,
}

impl NetworkSample {
    pub fn homogeneous(channel: ChannelParams, demand: DemandProfile) -> Self {
        Self {
            channels: vec![channel; demand.receivers()],
            demand,
        }
    }

    pub fn receivers(&self) -> usize {
        self.demand.receivers()
    }

    pub fn packets(&self) -> usize {
        self.demand.packets()
    }
}

pub const MIN_ERASURE: f64 = 1e-3;
pub const MAX_ERASURE: f64 = 0.95;

/// Uniform draws on `[lo, hi]` shifted so their mean is exactly `mean`,
/// shrinking the spread as little as needed to stay in bounds.
fn sample_with_mean(rng: &mut impl Rng, count: usize, mean: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..count)
        .map(|_| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
        .collect();
    let xbar = xs.iter().sum::<f64>() / count as f64;
    let mut s: f64 = 1.0;
    for &x in &xs {
        let d = x - xbar;
        if d > 0.0 {
            s = s.min((hi - mean) / d);
        } else if d < 0.0 {
            s = s.min((lo - mean) / d);
        }
    }
    let s = s.max(0.0);
    for x in &mut xs {
        *x = (mean + s * (*x - xbar)).clamp(lo, hi);
    }
    xs
}

/// Draws heterogeneous erasure probabilities and demand ratios around the
/// given means, and a wants set for every receiver. In reciprocal mode
/// `q_i = p_i`, otherwise `q_i` is uniform below `p_i`.
pub fn sample_heterogeneous_params(
    mean_p: f64,
    mean_mu: f64,
    m: usize,
    n: usize,
    reciprocal: bool,
    rng: &mut impl Rng,
) -> Result<NetworkSample> {
    if !(mean_p > 0.0 && mean_p < MAX_ERASURE) {
        return Err(IdncError::Infeasible(format!(
            "mean erasure probability {mean_p} outside (0, {MAX_ERASURE})"
        )));
    }
    if !(mean_mu > 0.0 && mean_mu <= 1.0) {
        return Err(IdncError::Infeasible(format!(
            "mean demand ratio {mean_mu} outside (0, 1]"
        )));
    }
    if m == 0 || n == 0 {
        return Err(IdncError::Infeasible("empty network".into()));
    }
    let p_hi = (2.0 * mean_p).min(MAX_ERASURE);
    let p_lo = MIN_ERASURE.max(2.0 * mean_p - p_hi);
    if mean_p < p_lo {
        return Err(IdncError::Infeasible(format!(
            "mean erasure probability {mean_p} below {MIN_ERASURE}"
        )));
    }
    let ps = sample_with_mean(rng, m, mean_p, p_lo, p_hi);
    let mu_lo = (2.0 * mean_mu - 1.0).max(0.0);
    let mu_hi = (2.0 * mean_mu).min(1.0);
    let mus = sample_with_mean(rng, m, mean_mu, mu_lo, mu_hi);

    let target = (mean_mu * (m * n) as f64).round() as usize;
    let mut sizes: Vec<usize> = mus
        .iter()
        .map(|&mu| ((mu * n as f64).round() as usize).min(n))
        .collect();
    let total: usize = sizes.iter().sum();
    // One pass over receivers ordered by rounding residual.
    let mut order: Vec<usize> = (0..m).collect();
    let residual = |i: usize| mus[i] * n as f64 - sizes[i] as f64;
    if total < target {
        order.sort_by(|&a, &b| residual(b).total_cmp(&residual(a)).then(a.cmp(&b)));
        let mut missing = target - total;
        for &i in &order {
            if missing == 0 {
                break;
            }
            if sizes[i] < n {
                sizes[i] += 1;
                missing -= 1;
            }
        }
    } else if total > target {
        order.sort_by(|&a, &b| residual(a).total_cmp(&residual(b)).then(a.cmp(&b)));
        let mut extra = total - target;
        for &i in &order {
            if extra == 0 {
                break;
            }
            if sizes[i] > 0 {
                sizes[i] -= 1;
                extra -= 1;
            }
        }
    }

    let mut packets: Vec<usize> = (0..n).collect();
    let mut masks = Vec::with_capacity(m);
    for &k in &sizes {
        packets.shuffle(rng);
        let mut mask = FixedBitSet::with_capacity(n);
        for &j in &packets[..k] {
            mask.insert(j);
        }
        masks.push(mask);
    }
    let demand = DemandProfile::from_masks(n, masks)?;

    let channels = ps
        .iter()
        .map(|&p| {
            if reciprocal {
                ChannelParams::reciprocal(p)
            } else {
                let q = rng.gen::<f64>() * p;
                ChannelParams::non_reciprocal(p, q)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NetworkSample { channels, demand })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameConfig {
    pub network: NetworkSample,
    pub policy: PolicyKind,
    pub m_exponent: f64,
    /// Cap on recovery transmissions.
    pub max_timeslots: u64,
}

pub const DEFAULT_TIMESLOT_FACTOR: u64 = 50;

impl FrameConfig {
    pub fn new(network: NetworkSample, policy: PolicyKind) -> Self {
        let max_timeslots = DEFAULT_TIMESLOT_FACTOR * network.packets() as u64;
        Self {
            network,
            policy,
            m_exponent: 3.0,
            max_timeslots,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameMetrics {
    /// Recovery transmissions until every receiver actually held its wants.
    pub completion_delay: Option<u64>,
    /// Recovery transmissions sent, i.e. until perceived completion.
    pub transmissions: u64,
    pub decoding_delay: Vec<u64>,
    pub feedback_heard: u64,
    pub feedback_lost: u64,
    pub theta_increments: u64,
    pub truncated: bool,
}

impl FrameMetrics {
    pub fn sum_decoding_delay(&self) -> u64 {
        self.decoding_delay.iter().sum()
    }

    pub fn mean_decoding_delay(&self) -> f64 {
        if self.decoding_delay.is_empty() {
            0.0
        } else {
            self.sum_decoding_delay() as f64 / self.decoding_delay.len() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackOutcome {
    Heard,
    Unheard,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedbackEvent {
    pub receiver: ReceiverId,
    pub packet: PacketId,
    pub outcome: FeedbackOutcome,
}

/// What happened in one recovery slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepTrace {
    /// 1-based recovery transmission index.
    pub slot: u64,
    pub plan: TransmissionPlan,
    pub received: Vec<bool>,
    pub decoded: Vec<(ReceiverId, PacketId)>,
    pub delay: Vec<u32>,
    pub feedback: Vec<FeedbackEvent>,
}

pub struct Simulation {
    policy: PolicyKind,
    params: SelectionParams,
    channels: Vec<ChannelParams>,
    rules: Vec<MlRule>,
    table: ThresholdTable,
    max_timeslots: u64,
    actual: ActualState,
    perceived: PerceivedState,
    rng: ChaCha8Rng,
    metrics: FrameMetrics,
}

impl Simulation {
    /// Seeds the channel and runs the uncoded phase.
    pub fn new(config: &FrameConfig, seed: u64) -> Result<Self> {
        let network = &config.network;
        let (m, n) = (network.receivers(), network.packets());
        if network.channels.len() != m {
            return Err(IdncError::DimensionMismatch {
                expected: format!("{m} channels"),
                found: network.channels.len().to_string(),
            });
        }
        let channels: Vec<ChannelParams> = network
            .channels
            .iter()
            .map(|&c| config.policy.effective_channel(c))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut received = vec![vec![false; n]; m];
        let mut heard = vec![vec![false; n]; m];
        let mut metrics = FrameMetrics {
            completion_delay: None,
            transmissions: 0,
            decoding_delay: vec![0; m],
            feedback_heard: 0,
            feedback_lost: 0,
            theta_increments: 0,
            truncated: false,
        };
        for j in 0..n {
            for (i, ch) in channels.iter().enumerate() {
                received[i][j] = rng.gen::<f64>() >= ch.p;
            }
            for (i, ch) in channels.iter().enumerate() {
                heard[i][j] = rng.gen::<f64>() >= ch.q;
                if heard[i][j] {
                    metrics.feedback_heard += 1;
                } else {
                    metrics.feedback_lost += 1;
                    metrics.theta_increments += 1;
                }
            }
        }
        let (perceived, actual) = apply_initial_phase(&received, &heard, &network.demand)?;
        if actual.is_actually_complete() {
            metrics.completion_delay = Some(0);
        }
        Ok(Self {
            policy: config.policy,
            params: config.policy.selection_params(config.m_exponent),
            rules: channels.iter().map(|&c| MlRule::new(c)).collect(),
            channels,
            table: ThresholdTable::new(),
            max_timeslots: config.max_timeslots,
            actual,
            perceived,
            rng,
            metrics,
        })
    }

    pub fn policy(&self) -> PolicyKind {
        self.policy
    }

    pub fn channels(&self) -> &[ChannelParams] {
        &self.channels
    }

    pub fn perceived(&self) -> &PerceivedState {
        &self.perceived
    }

    pub fn actual(&self) -> &ActualState {
        &self.actual
    }

    pub fn metrics(&self) -> &FrameMetrics {
        &self.metrics
    }

    pub fn is_finished(&self) -> bool {
        self.perceived.is_perceived_complete() || self.metrics.transmissions >= self.max_timeslots
    }

    /// Perceived Has never exceeds what a receiver actually holds.
    pub fn is_sound(&self) -> bool {
        (0..self.perceived.receivers()).all(|i| {
            let r = ReceiverId(i);
            self.perceived.sfm().has_set(r).is_subset(self.actual.holdings(r))
        })
    }

    fn hidden(&self, r: ReceiverId, pk: PacketId) -> bool {
        let status = self.perceived.status(r, pk);
        if !status.is_uncertain() {
            return false;
        }
        match self.policy {
            PolicyKind::Fve => true,
            PolicyKind::Ml => {
                self.rules[r.0].decide(self.perceived.theta(r, pk), &self.table) == MlDecision::Received
            }
            PolicyKind::Pf | PolicyKind::Nve | PolicyKind::WvsDd => false,
        }
    }

    /// The graph the policy would code over in the current state.
    pub fn graph(&self) -> IdncGraph {
        IdncGraph::build(self.perceived.sfm(), |r, pk| self.hidden(r, pk))
    }

    /// One recovery transmission, or `None` once the frame is over.
    pub fn step(&mut self) -> Result<Option<StepTrace>> {
        if self.is_finished() {
            return Ok(None);
        }
        let mut graph = self.graph();
        let plan = select_transmission(&mut graph, &self.perceived, &self.channels, &self.params)?;
        if plan.is_empty() {
            return Err(IdncError::InconsistentPlan(
                "frame incomplete but nothing to transmit".into(),
            ));
        }
        let m = self.perceived.receivers();
        self.metrics.transmissions += 1;
        let slot = self.metrics.transmissions;

        let received: Vec<bool> = self
            .channels
            .iter()
            .map(|ch| self.rng.gen::<f64>() >= ch.p)
            .collect();
        let feedback_draws: Vec<f64> = (0..m).map(|_| self.rng.gen::<f64>()).collect();

        let mut decoded = Vec::new();
        let mut delay = vec![0u32; m];
        for i in 0..m {
            let r = ReceiverId(i);
            if !received[i] {
                continue;
            }
            let holdings = self.actual.holdings(r);
            delay[i] = crate::delay::actual_delay_increment(
                holdings,
                self.actual.demand().wants(r),
                &plan.coded,
                true,
            );
            if let DecodeEffect::InstantlyDecodable(pk) = decode_effect(&plan.coded, holdings)? {
                self.actual.receive(r, pk);
                decoded.push((r, pk));
            }
            self.metrics.decoding_delay[i] += u64::from(delay[i]);
        }

        let mut feedback = Vec::new();
        for v in plan.targets() {
            let i = v.receiver.0;
            let sent = received[i];
            let heard = sent && feedback_draws[i] >= self.channels[i].q;
            if heard {
                let holdings = self.actual.holdings(v.receiver).clone();
                self.perceived.apply_heard_feedback(v.receiver, &holdings, slot);
                self.metrics.feedback_heard += 1;
            } else if self.channels[i].q > 0.0 {
                // Erasure and lost feedback look the same to the sender.
                self.perceived.record_unheard(v.receiver, v.packet);
                self.metrics.theta_increments += 1;
                if sent {
                    self.metrics.feedback_lost += 1;
                }
            }
            // With q = 0 a missing ACK is a certain erasure: nothing to update.
            feedback.push(FeedbackEvent {
                receiver: v.receiver,
                packet: v.packet,
                outcome: if heard {
                    FeedbackOutcome::Heard
                } else {
                    FeedbackOutcome::Unheard
                },
            });
        }

        if self.metrics.completion_delay.is_none() && self.actual.is_actually_complete() {
            self.metrics.completion_delay = Some(slot);
        }
        if self.metrics.transmissions >= self.max_timeslots && !self.perceived.is_perceived_complete() {
            self.metrics.truncated = true;
        }
        Ok(Some(StepTrace {
            slot,
            plan,
            received,
            decoded,
            delay,
            feedback,
        }))
    }

    pub fn run(mut self) -> Result<FrameMetrics> {
        while self.step()?.is_some() {}
        Ok(self.metrics)
    }
}

/// Runs one frame to perceived completion or truncation.
pub fn run_frame(config: &FrameConfig, seed: u64) -> Result<FrameMetrics> {
    Simulation::new(config, seed)?.run()
}

pub type RowChange = (PacketId, ReceptionStatus, ReceptionStatus);

/// Receivers whose row changed between two perceived states.
pub fn changed_rows(before: &PerceivedState, after: &PerceivedState) -> Vec<(ReceiverId, Vec<RowChange>)> {
    let mut out = Vec::new();
    for i in 0..before.receivers() {
        let r = ReceiverId(i);
        let diff: Vec<_> = before
            .sfm()
            .row(r)
            .iter()
            .zip(after.sfm().row(r))
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(j, (a, b))| (PacketId(j), *a, *b))
            .collect();
        if !diff.is_empty() {
            out.push((r, diff));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn single_receiver_gets_the_mean() {
        let net = sample_heterogeneous_params(0.3, 0.5, 1, 10, true, &mut rng(1)).unwrap();
        assert_eq!(net.channels[0].p, 0.3);
        assert_eq!(net.channels[0].q, 0.3);
        assert_eq!(net.demand.wants(ReceiverId(0)).count_ones(..), 5);
    }

    #[test]
    fn sampler_hits_the_means() {
        for seed in 0..20 {
            let net = sample_heterogeneous_params(0.25, 0.5, 60, 30, true, &mut rng(seed)).unwrap();
            let mean = net.channels.iter().map(|c| c.p).sum::<f64>() / 60.0;
            assert!((mean - 0.25).abs() < 1e-12, "{mean}");
            assert!(net.channels.iter().all(|c| c.p >= MIN_ERASURE && c.p <= 0.5));
            assert!((net.demand.mean_ratio() - 0.5).abs() <= 1.0 / (60.0 * 30.0));
        }
    }

    #[test]
    fn sampler_broadcast_and_non_reciprocal() {
        let net = sample_heterogeneous_params(0.4, 1.0, 8, 6, false, &mut rng(3)).unwrap();
        for i in 0..8 {
            assert_eq!(net.demand.wants(ReceiverId(i)).count_ones(..), 6);
            let c = net.channels[i];
            assert!(c.q < c.p);
        }
    }

    #[test]
    fn sampler_rejects_boundary_means() {
        assert!(sample_heterogeneous_params(0.0, 0.5, 3, 3, true, &mut rng(0)).is_err());
        assert!(sample_heterogeneous_params(0.96, 0.5, 3, 3, true, &mut rng(0)).is_err());
        assert!(sample_heterogeneous_params(0.2, 0.0, 3, 3, true, &mut rng(0)).is_err());
    }

    #[test]
    fn lossless_frame_needs_no_recovery() {
        let demand = DemandProfile::from_lists(4, &[vec![0, 1], vec![2], vec![0, 3]]).unwrap();
        let net = NetworkSample::homogeneous(ChannelParams::new(0.0, 0.0).unwrap(), demand);
        for policy in PolicyKind::ALL {
            let m = run_frame(&FrameConfig::new(net.clone(), policy), 7).unwrap();
            assert_eq!(m.completion_delay, Some(0));
            assert_eq!(m.transmissions, 0);
            assert_eq!(m.sum_decoding_delay(), 0);
        }
    }

    #[test]
    fn frames_terminate_sound_and_deterministic() {
        let net = sample_heterogeneous_params(0.3, 0.6, 6, 5, true, &mut rng(11)).unwrap();
        for policy in PolicyKind::ALL {
            let config = FrameConfig::new(net.clone(), policy);
            let mut sim = Simulation::new(&config, 99).unwrap();
            assert!(sim.is_sound());
            while sim.step().unwrap().is_some() {
                assert!(sim.is_sound());
                sim.perceived().check_consistency().unwrap();
            }
            let m = sim.metrics().clone();
            assert!(!m.truncated, "{policy}");
            let done = m.completion_delay.unwrap();
            assert!(done <= m.transmissions);
            assert_eq!(run_frame(&config, 99).unwrap(), m);
        }
    }

    #[test]
    fn perfect_feedback_never_creates_uncertainty() {
        let net = sample_heterogeneous_params(0.4, 0.7, 5, 6, true, &mut rng(5)).unwrap();
        let m = run_frame(&FrameConfig::new(net, PolicyKind::Pf), 3).unwrap();
        assert_eq!(m.theta_increments, 0);
        assert_eq!(m.feedback_lost, 0);
    }

    #[test]
    fn truncation_is_reported() {
        let demand = DemandProfile::broadcast(2, 3);
        let net = NetworkSample::homogeneous(ChannelParams::reciprocal(0.9).unwrap(), demand);
        let mut config = FrameConfig::new(net, PolicyKind::Nve);
        config.max_timeslots = 1;
        let m = run_frame(&config, 0).unwrap();
        assert!(m.truncated);
        assert_eq!(m.transmissions, 1);
    }

    #[test]
    fn policy_names_round_trip() {
        for p in PolicyKind::ALL {
            assert_eq!(p.name().parse::<PolicyKind>().unwrap(), p);
        }
        assert!("XYZ".parse::<PolicyKind>().is_err());
    }
}
