//! Oracle and statistical checks for the acceptance criteria.
//!
//! Each `criterion_*` function is self-contained, seeded, and returns a
//! [`CriterionReport`]. The instance generators are public so property
//! tests can reuse them.

use std::fmt;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::belief::{
    ml_entry_decision, ml_entry_decision_with, ml_state_oracle, p_loss, p_loss_reciprocal, uncertain_entries,
    MlDecision, ThresholdTable, THRESHOLD_TABLE_LEN,
};
use crate::delay::{
    classify_receivers, expected_decoding_delay, expected_decoding_delay_classified,
    expected_decoding_delay_oracle, DelayCase, ReceiverClasses,
};
use crate::error::Result;
use crate::experiment::{run_experiment, trial_seed, ExperimentConfig, OutputFormat, Parallelism, SweepAxis};
use crate::graph::{IdncGraph, Layer, VertexId};
use crate::model::{
    ChannelParams, DemandProfile, PacketId, PerceivedState, ReceiverId, ReceptionStatus, StateFeedbackMatrix,
};
use crate::selection::{
    decoding_weights, exact_max_weight_clique, select_transmission, SelectionParams, TransmissionPlan,
};
use crate::sim::{run_frame, FrameConfig, NetworkSample, PolicyKind, Simulation};

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} [{}] {}: {} ({:.2?})",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed
        )
    }
}

fn timed(
    id: u8,
    name: &'static str,
    budget: Option<Duration>,
    body: impl FnOnce() -> Result<(bool, String)>,
) -> CriterionReport {
    let start = Instant::now();
    let outcome = body();
    let elapsed = start.elapsed();
    let (mut passed, mut detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    if let Some(b) = budget {
        if elapsed > b {
            passed = false;
            detail.push_str(&format!("; over the {b:?} budget"));
        }
    }
    CriterionReport {
        id,
        name,
        passed,
        detail,
        elapsed,
    }
}

pub const CRITERIA: [u8; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

pub fn run_criterion(id: u8) -> Option<CriterionReport> {
    Some(match id {
        1 => criterion_belief(),
        2 => criterion_ml_factorization(),
        3 => criterion_threshold_rules(),
        4 => criterion_decoding_delay_closed_form(),
        5 => criterion_objective_equivalence(),
        6 => criterion_graph(),
        7 => criterion_simulation_sanity(),
        8 => criterion_policy_ordering(),
        9 => criterion_decoding_delay_ordering(),
        10 => criterion_determinism(),
        _ => return None,
    })
}

pub fn run_all() -> Vec<CriterionReport> {
    CRITERIA.iter().filter_map(|&id| run_criterion(id)).collect()
}

// ---------------------------------------------------------------------------
// Oracles and generators

/// P^L by enumerating the 3^θ per-attempt outcomes (erased, received with
/// the ACK lost, received with the ACK heard) and conditioning on no ACK.
pub fn p_loss_event_oracle(p: f64, q: f64, theta: u32) -> f64 {
    let outcome = [p, (1.0 - p) * q, (1.0 - p) * (1.0 - q)];
    let mut unheard = 0.0;
    let mut lost = 0.0;
    for code in 0..3u32.pow(theta) {
        let mut c = code;
        let mut prob = 1.0;
        let mut heard = false;
        let mut all_erased = true;
        for _ in 0..theta {
            let d = (c % 3) as usize;
            c /= 3;
            prob *= outcome[d];
            heard |= d == 2;
            all_erased &= d == 0;
        }
        if !heard {
            unheard += prob;
            if all_erased {
                lost += prob;
            }
        }
    }
    lost / unheard
}

/// C1/C2 adjacency read straight off the matrix.
pub fn brute_force_adjacent(sfm: &StateFeedbackMatrix, a: VertexId, b: VertexId) -> bool {
    if a.receiver == b.receiver {
        return false;
    }
    a.packet == b.packet || (sfm.get(a.receiver, b.packet).is_has() && sfm.get(b.receiver, a.packet).is_has())
}

pub const GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

pub fn random_channel(rng: &mut impl Rng) -> ChannelParams {
    let p = rng.gen_range(0.05..0.9);
    if rng.gen_bool(0.5) {
        ChannelParams::reciprocal(p).expect("p in range")
    } else {
        ChannelParams::new(p, rng.gen_range(0.01..p)).expect("q below p")
    }
}

/// Random perceived state of at most `max_m x max_n` with at most
/// `max_uncertain` uncertain entries, plus one channel per receiver.
pub fn random_state(
    rng: &mut impl Rng,
    max_m: usize,
    max_n: usize,
    max_uncertain: usize,
    uncertain_rate: f64,
) -> (PerceivedState, Vec<ChannelParams>) {
    let m = rng.gen_range(1..=max_m);
    let n = rng.gen_range(1..=max_n);
    let mut uncertain = 0;
    let mut rows = Vec::with_capacity(m);
    let mut theta = Vec::with_capacity(m);
    for _ in 0..m {
        let mut row = Vec::with_capacity(n);
        let mut trow = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.gen();
            let (status, t) = if u < uncertain_rate && uncertain < max_uncertain {
                uncertain += 1;
                (
                    ReceptionStatus::Uncertain {
                        wanted: rng.gen_bool(0.6),
                    },
                    rng.gen_range(1..=4),
                )
            } else {
                let v: f64 = rng.gen();
                let s = if v < 0.4 {
                    ReceptionStatus::Has
                } else if v < 0.65 {
                    ReceptionStatus::LacksUndesired
                } else {
                    ReceptionStatus::Wants
                };
                (s, 0)
            };
            row.push(status);
            trow.push(t);
        }
        rows.push(row);
        theta.push(trow);
    }
    let sfm = StateFeedbackMatrix::from_rows(rows).expect("rectangular");
    let state = PerceivedState::with_theta(sfm, &theta).expect("consistent");
    let channels = (0..m).map(|_| random_channel(rng)).collect();
    (state, channels)
}

/// A random clique built greedily from a shuffled vertex order, stopped at a
/// random size.
pub fn random_clique(graph: &IdncGraph, rng: &mut impl Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..graph.len()).collect();
    order.shuffle(rng);
    let limit = rng.gen_range(0..=graph.len());
    let mut chosen: Vec<usize> = Vec::new();
    for v in order {
        if chosen.len() >= limit {
            break;
        }
        if chosen.iter().all(|&u| graph.adjacent(u, v)) {
            chosen.push(v);
        }
    }
    chosen.sort_unstable();
    chosen
}

pub fn plan_from_clique(graph: &IdncGraph, clique: &[usize]) -> TransmissionPlan {
    let (primary, secondary): (Vec<usize>, Vec<usize>) = clique
        .iter()
        .partition(|&&v| graph.vertex(v).layer == Layer::Primary);
    TransmissionPlan::from_cliques(graph, &primary, &secondary)
}

/// Every clique (including the empty one) among `eligible`.
pub fn all_cliques(graph: &IdncGraph, eligible: &[usize]) -> Vec<Vec<usize>> {
    fn grow(graph: &IdncGraph, current: &mut Vec<usize>, candidates: &[usize], out: &mut Vec<Vec<usize>>) {
        out.push(current.clone());
        for (k, &v) in candidates.iter().enumerate() {
            let next: Vec<usize> = candidates[k + 1..]
                .iter()
                .copied()
                .filter(|&u| graph.adjacent(u, v))
                .collect();
            current.push(v);
            grow(graph, current, &next, out);
            current.pop();
        }
    }
    let mut out = Vec::new();
    grow(graph, &mut Vec::new(), eligible, &mut out);
    out
}

/// The closed form assumes a receiver outside the primary targets cannot
/// decode a wanted packet by accident. That can fail when the coded packet
/// holds exactly one packet it certainly lacks and that packet is wanted, or
/// when it certainly lacks none of them and one of the uncertain ones is
/// wanted.
pub fn untargeted_may_decode(
    state: &PerceivedState,
    plan: &TransmissionPlan,
    classes: &ReceiverClasses,
) -> bool {
    classes.untargeted().into_iter().any(|r| {
        let row = state.sfm().row(r);
        let certain: Vec<PacketId> = plan
            .coded
            .iter()
            .copied()
            .filter(|pk| {
                let s = row[pk.0];
                !s.is_has() && !s.is_uncertain()
            })
            .collect();
        match certain.as_slice() {
            [only] => row[only.0].is_wanted(),
            [] => plan.coded.iter().any(|pk| {
                let s = row[pk.0];
                s.is_uncertain() && s.is_wanted()
            }),
            _ => false,
        }
    })
}

fn fmt_pass(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "MISMATCH"
    }
}

// ---------------------------------------------------------------------------
// Criteria

pub fn criterion_belief() -> CriterionReport {
    timed(1, "belief correctness", Some(Duration::from_secs(1)), || {
        let mut worst: f64 = 0.0;
        let mut worst_recip: f64 = 0.0;
        for &p in &GRID {
            for &q in &GRID {
                for theta in 1..=4 {
                    let formula = p_loss(p, q, theta)?;
                    worst = worst.max((formula - p_loss_event_oracle(p, q, theta)).abs());
                }
            }
            for theta in 1..=4 {
                worst_recip = worst_recip.max((p_loss_reciprocal(p, theta)? - p_loss(p, p, theta)?).abs());
            }
        }
        let ok = worst <= 1e-12 && worst_recip <= 1e-15;
        Ok((
            ok,
            format!("max |P^L - event oracle| = {worst:.2e} (tol 1e-12), max |reciprocal - general| = {worst_recip:.2e} (tol 1e-15) over 81 grid points x theta 1..4"),
        ))
    })
}

pub fn criterion_ml_factorization() -> CriterionReport {
    timed(2, "ML factorization", Some(Duration::from_secs(30)), || {
        let mut rng = ChaCha8Rng::seed_from_u64(0x2222);
        let table = ThresholdTable::new();
        let (mut checked, mut skipped, mut mismatches) = (0usize, 0usize, 0usize);
        while checked < 1000 {
            let (state, channels) = random_state(&mut rng, 5, 5, 10, 0.5);
            let entries = uncertain_entries(&state);
            if entries.is_empty() {
                continue;
            }
            let tie = entries.iter().any(|&(r, pk)| {
                let ch = channels[r.0];
                p_loss(ch.p, ch.q, state.theta(r, pk)).is_ok_and(|l| (l - 0.5).abs() < 1e-12)
            });
            if tie {
                skipped += 1;
                continue;
            }
            let best = ml_state_oracle(&state, &channels, 10)?;
            let agree = entries.iter().enumerate().all(|(k, &(r, pk))| {
                let decision = ml_entry_decision_with(channels[r.0], state.theta(r, pk), &table);
                best.is_received(k) == (decision == MlDecision::Received)
            });
            if !agree {
                mismatches += 1;
            }
            checked += 1;
        }
        Ok((
            mismatches == 0,
            format!("{checked} instances with up to 10 uncertain entries, {mismatches} mismatches, {skipped} tie instances skipped"),
        ))
    })
}

pub fn criterion_threshold_rules() -> CriterionReport {
    timed(3, "threshold rules", Some(Duration::from_secs(1)), || {
        let mut sign_mismatch = 0;
        let mut ties = 0;
        for &p in &GRID {
            for &q in &GRID {
                for theta in 1..=4 {
                    let exact = p_loss_event_oracle(p, q, theta);
                    if (exact - 0.5).abs() < 1e-12 {
                        ties += 1;
                        continue;
                    }
                    let lost = ml_entry_decision(p, q, theta) == MlDecision::Lost;
                    if lost != (exact > 0.5) {
                        sign_mismatch += 1;
                    }
                }
            }
        }
        let mut reciprocal_bad = 0;
        for &p in &GRID {
            if ml_entry_decision(p, p, 1) != MlDecision::Lost || p_loss_event_oracle(p, p, 1) <= 0.5 {
                reciprocal_bad += 1;
            }
        }
        let table = ThresholdTable::new();
        let mut permanence_bad = 0;
        let mut direct_bad = 0;
        for &p in &GRID {
            for &q in &GRID {
                let ch = ChannelParams { p, q };
                let mut seen_received = false;
                for theta in 1..=THRESHOLD_TABLE_LEN as u32 {
                    let d = ml_entry_decision_with(ch, theta, &table);
                    if seen_received && d == MlDecision::Lost {
                        permanence_bad += 1;
                    }
                    seen_received |= d == MlDecision::Received;
                    let l = p_loss(p, q, theta)?;
                    if (l - 0.5).abs() > 1e-9 && (d == MlDecision::Lost) != (l > 0.5) {
                        direct_bad += 1;
                    }
                }
            }
        }
        let ok = sign_mismatch == 0 && reciprocal_bad == 0 && permanence_bad == 0 && direct_bad == 0;
        Ok((
            ok,
            format!(
                "sign of P^L - 1/2: {} ({sign_mismatch} mismatches, {ties} exact ties); reciprocal one-attempt rule: {}; permanence to theta 64: {}; rule vs P^L to theta 64: {}",
                fmt_pass(sign_mismatch == 0),
                fmt_pass(reciprocal_bad == 0),
                fmt_pass(permanence_bad == 0),
                fmt_pass(direct_bad == 0)
            ),
        ))
    })
}

pub fn criterion_decoding_delay_closed_form() -> CriterionReport {
    timed(
        4,
        "decoding-delay closed form",
        Some(Duration::from_secs(120)),
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(0x4444);
            let mut cases = std::collections::BTreeMap::new();
            let (mut checked, mut filtered, mut mismatches) = (0usize, 0usize, 0usize);
            let mut worst: f64 = 0.0;
            let dd = SelectionParams::decoding_delay();
            let cd = SelectionParams::default();
            while checked < 2000 {
                let (state, channels) = random_state(&mut rng, 6, 6, 12, 0.35);
                let mut graph = IdncGraph::build_unhidden(state.sfm());
                let plan = match rng.gen_range(0..3) {
                    0 => select_transmission(&mut graph, &state, &channels, &dd)?,
                    1 => select_transmission(&mut graph, &state, &channels, &cd)?,
                    _ => plan_from_clique(&graph, &random_clique(&graph, &mut rng)),
                };
                let classes = classify_receivers(&state, &plan)?;
                if untargeted_may_decode(&state, &plan, &classes) {
                    filtered += 1;
                    continue;
                }
                let closed = expected_decoding_delay_classified(&state, &channels, &classes)?;
                let oracle = expected_decoding_delay_oracle(&state, &channels, &plan)?;
                let err = (closed - oracle).abs();
                worst = worst.max(err);
                if err > 1e-12 {
                    mismatches += 1;
                }
                for c in &classes.outstanding {
                    *cases.entry(c.case()).or_insert(0usize) += 1;
                }
                checked += 1;
            }
            let covered = DelayCase::ALL.iter().all(|c| cases.contains_key(c));
            Ok((
            mismatches == 0 && covered,
            format!(
                "{checked} instances, max |closed - oracle| = {worst:.2e} (tol 1e-12), {mismatches} mismatches, {filtered} skipped for untargeted accidental decoding; class counts {:?}",
                cases
            ),
        ))
        },
    )
}

pub fn criterion_objective_equivalence() -> CriterionReport {
    timed(5, "objective equivalence", Some(Duration::from_secs(120)), || {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5555);
        let (mut checked, mut misses) = (0usize, 0usize);
        let mut cliques_seen = 0usize;
        while checked < 500 {
            let (state, channels) = random_state(&mut rng, 6, 6, 12, 0.35);
            let graph = IdncGraph::build_unhidden(state.sfm());
            let primary: Vec<usize> = graph.active_in(Layer::Primary).ones().collect();
            if primary.len() < 4 || primary.len() > 18 {
                continue;
            }
            let weights = decoding_weights(&graph, &state, &channels)?;
            let best = exact_max_weight_clique(&graph, &weights, &graph.active_in(Layer::Primary))?;
            let best_delay = expected_decoding_delay(&state, &channels, &plan_from_clique(&graph, &best))?;
            let mut min_delay = f64::INFINITY;
            for clique in all_cliques(&graph, &primary) {
                cliques_seen += 1;
                let d = expected_decoding_delay(&state, &channels, &plan_from_clique(&graph, &clique))?;
                min_delay = min_delay.min(d);
            }
            if best_delay > min_delay + 1e-12 {
                misses += 1;
            }
            checked += 1;
        }
        Ok((
            misses == 0,
            format!("{checked} graphs, {cliques_seen} cliques enumerated, max-omega clique outside the argmin in {misses}"),
        ))
    })
}

pub fn criterion_graph() -> CriterionReport {
    timed(6, "graph correctness", None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6666);
        let (mut adjacency_bad, mut vertex_bad, mut plan_bad) = (0usize, 0usize, 0usize);
        let instances = 10_000;
        for k in 0..instances {
            let (state, channels) = random_state(&mut rng, 8, 8, 64, 0.25);
            let sfm = state.sfm();
            let hide_mask: Vec<bool> = (0..sfm.receivers() * sfm.packets())
                .map(|_| rng.gen_bool(0.3))
                .collect();
            let n = sfm.packets();
            let mut graph = IdncGraph::build(sfm, |r, pk| hide_mask[r.0 * n + pk.0]);

            let expected: Vec<VertexId> = (0..sfm.receivers())
                .flat_map(|i| (0..n).map(move |j| VertexId::new(i, j)))
                .filter(|v| !sfm.get(v.receiver, v.packet).is_has())
                .collect();
            let got: Vec<VertexId> = graph.vertices().iter().map(|v| v.id()).collect();
            if got != expected
                || graph
                    .vertices()
                    .iter()
                    .any(|v| (v.layer == Layer::Primary) != sfm.get(v.receiver, v.packet).is_wanted())
            {
                vertex_bad += 1;
            }
            for a in 0..graph.len() {
                for b in 0..graph.len() {
                    let (va, vb) = (graph.vertex(a).id(), graph.vertex(b).id());
                    if graph.adjacent(a, b) != brute_force_adjacent(sfm, va, vb) {
                        adjacency_bad += 1;
                    }
                }
            }

            let params = if k % 2 == 0 {
                SelectionParams::default()
            } else {
                SelectionParams::decoding_delay()
            };
            let plan = select_transmission(&mut graph, &state, &channels, &params)?;
            let ids = plan.all_vertices();
            let mut receivers: Vec<ReceiverId> = ids.iter().map(|v| v.receiver).collect();
            receivers.sort_unstable();
            receivers.dedup();
            let decodable = ids.iter().all(|v| {
                let has = sfm.has_set(v.receiver);
                plan.coded.iter().all(|pk| *pk == v.packet || has.contains(pk.0))
            });
            let outstanding = (0..sfm.receivers()).any(|i| sfm.wants_count(ReceiverId(i)) > 0);
            if !graph.is_clique(&ids)?
                || receivers.len() != ids.len()
                || !decodable
                || plan.primary.is_empty() == outstanding
            {
                plan_bad += 1;
            }
        }
        Ok((
            adjacency_bad == 0 && vertex_bad == 0 && plan_bad == 0,
            format!("{instances} matrices up to 8x8: {adjacency_bad} adjacency mismatches, {vertex_bad} vertex-set mismatches, {plan_bad} invalid plans"),
        ))
    })
}

pub fn criterion_simulation_sanity() -> CriterionReport {
    timed(7, "simulation sanity", None, || {
        let trials = 100_000usize;
        let channel = ChannelParams::new(0.5, 0.0)?;
        let net = NetworkSample::homogeneous(channel, DemandProfile::broadcast(1, 1));
        let config = FrameConfig::new(net, PolicyKind::Pf);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for t in 0..trials {
            let m = run_frame(&config, trial_seed(0x7777, 0, 0, t as u64))?;
            let d = m.completion_delay.unwrap_or(0) as f64;
            sum += d;
            sum_sq += d * d;
        }
        let n = trials as f64;
        let mean = sum / n;
        let se = ((sum_sq - n * mean * mean) / (n - 1.0) / n).sqrt();
        // Initial loss with probability p, then a geometric number of
        // retransmissions with mean 1/(1-p): p/(1-p) = 1 overall.
        let geometric_ok = (mean - 1.0).abs() <= 3.0 * se;

        let mut rng = ChaCha8Rng::seed_from_u64(0x7778);
        let mut trajectories_bad = 0;
        let pairs = 200;
        for k in 0..pairs {
            let m = rng.gen_range(1..=8);
            let n = rng.gen_range(1..=8);
            let lists: Vec<Vec<usize>> = (0..m)
                .map(|_| (0..n).filter(|_| rng.gen_bool(0.6)).collect())
                .collect();
            let demand = DemandProfile::from_lists(n, &lists)?;
            let channels = (0..m)
                .map(|_| ChannelParams::new(rng.gen_range(0.05..0.6), 0.0))
                .collect::<Result<Vec<_>>>()?;
            let net = NetworkSample { channels, demand };
            let seed = trial_seed(0x7779, 0, 0, k);
            let mut pf = Simulation::new(&FrameConfig::new(net.clone(), PolicyKind::Pf), seed)?;
            let mut ml = Simulation::new(&FrameConfig::new(net, PolicyKind::Ml), seed)?;
            loop {
                let (a, b) = (pf.step()?, ml.step()?);
                if a != b || pf.perceived() != ml.perceived() {
                    trajectories_bad += 1;
                    break;
                }
                if a.is_none() {
                    break;
                }
            }
            if pf.metrics() != ml.metrics() {
                trajectories_bad += 1;
            }
        }
        Ok((
            geometric_ok && trajectories_bad == 0,
            format!(
                "M=N=1, p=0.5, q=0: mean recovery {mean:.5} vs 1 (3 SE = {:.5}) over {trials} frames; PF vs ML with q=0: {} of {pairs} trajectory pairs differ",
                3.0 * se,
                trajectories_bad
            ),
        ))
    })
}

fn desk_config(mu: f64, policies: Vec<PolicyKind>) -> ExperimentConfig {
    let mut c = ExperimentConfig::single_point(20, 15, mu, 0.25, 1000);
    c.reciprocal = true;
    c.m_exponent = 3.0;
    c.policies = policies;
    c.seed = 2024;
    c
}

pub fn criterion_policy_ordering() -> CriterionReport {
    timed(8, "policy ordering", Some(Duration::from_secs(600)), || {
        let policies = vec![PolicyKind::Pf, PolicyKind::Ml, PolicyKind::Fve, PolicyKind::Nve];
        let config = desk_config(0.5, policies);
        let table = run_experiment(&config, Parallelism::from_env(0))?;
        let row = |p| table.row(0.25, p).expect("row present");
        let (pf, ml, fve, nve) = (
            row(PolicyKind::Pf),
            row(PolicyKind::Ml),
            row(PolicyKind::Fve),
            row(PolicyKind::Nve),
        );
        let best_blind = if fve.mean_completion_delay <= nve.mean_completion_delay {
            fve
        } else {
            nve
        };
        let pf_le_ml = pf.mean_completion_delay <= ml.mean_completion_delay;
        let ml_le_blind =
            ml.mean_completion_delay <= best_blind.mean_completion_delay + best_blind.ci95_completion;
        let n = config.packets as f64;
        // Frame delivery time counts the N uncoded slots too.
        let degradation = (n + ml.mean_completion_delay) / (n + pf.mean_completion_delay) - 1.0;
        let recovery_only = ml.mean_completion_delay / pf.mean_completion_delay - 1.0;
        let truncated = table.rows.iter().map(|r| r.truncated_count).sum::<usize>();
        Ok((
            pf_le_ml && ml_le_blind && degradation <= 0.30,
            format!(
                "completion PF {:.3}, ML {:.3}, FVE {:.3}, NVE {:.3} (+-{:.3}); PF<=ML {}; ML<=min(FVE,NVE)+hw {}; frame-time degradation {:.1}% (<=30%), recovery-only {:.1}%; {truncated} truncated",
                pf.mean_completion_delay,
                ml.mean_completion_delay,
                fve.mean_completion_delay,
                nve.mean_completion_delay,
                best_blind.ci95_completion,
                fmt_pass(pf_le_ml),
                fmt_pass(ml_le_blind),
                100.0 * degradation,
                100.0 * recovery_only
            ),
        ))
    })
}

pub fn criterion_decoding_delay_ordering() -> CriterionReport {
    timed(
        9,
        "decoding-delay ordering",
        Some(Duration::from_secs(600)),
        || {
            let policies = vec![PolicyKind::WvsDd, PolicyKind::Fve, PolicyKind::Nve];
            let table = run_experiment(&desk_config(0.8, policies), Parallelism::from_env(0))?;
            let row = |p| table.row(0.25, p).expect("row present");
            let (wvs, fve, nve) = (row(PolicyKind::WvsDd), row(PolicyKind::Fve), row(PolicyKind::Nve));
            let best_blind = if fve.mean_decoding_delay <= nve.mean_decoding_delay {
                fve
            } else {
                nve
            };
            let ok = wvs.mean_decoding_delay <= best_blind.mean_decoding_delay + best_blind.ci95_decoding;
            Ok((
                ok,
                format!(
                    "decoding WVS_DD {:.4}, FVE {:.4}, NVE {:.4} (+-{:.4})",
                    wvs.mean_decoding_delay,
                    fve.mean_decoding_delay,
                    nve.mean_decoding_delay,
                    best_blind.ci95_decoding
                ),
            ))
        },
    )
}

pub fn criterion_determinism() -> CriterionReport {
    timed(10, "determinism", None, || {
        let mut config = ExperimentConfig::single_point(4, 5, 0.6, 0.3, 25);
        config.axis = SweepAxis::Receivers;
        config.values = vec![3.0, 6.0];
        config.reciprocal = false;
        config.seed = 77;
        let modes = [
            Parallelism::Sequential,
            Parallelism::Threads(1),
            Parallelism::Threads(4),
            Parallelism::Auto,
            Parallelism::Sequential,
        ];
        let mut outputs = Vec::new();
        for mode in modes {
            let table = run_experiment(&config, mode)?;
            outputs.push((table.render(OutputFormat::Csv), table.render(OutputFormat::Json)));
        }
        let identical = outputs.windows(2).all(|w| w[0] == w[1]);
        Ok((
            identical,
            format!(
                "{} runs (sequential, 1, 4 and auto threads): CSV and JSON {}",
                modes.len(),
                if identical { "byte-identical" } else { "differ" }
            ),
        ))
    })
}
