use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use idnc_core::belief::{belief_distribution, p_loss, DEFAULT_ORACLE_CAP};
use idnc_core::delay::{classify_receivers, expected_decoding_delay};
use idnc_core::experiment::{run_trial, ExperimentConfig};
use idnc_core::graph::{IdncGraph, Layer};
use idnc_core::model::{
    ChannelParams, PacketId, PerceivedState, ReceiverId, ReceptionStatus, StateFeedbackMatrix,
};
use idnc_core::selection::{
    completion_weights, select_transmission, weighted_vertex_search, SecondaryWeighting, SelectionParams,
    WeightRefresh,
};
use idnc_core::sim::{sample_heterogeneous_params, FrameConfig, PolicyKind, Simulation};
use idnc_core::verify::{brute_force_adjacent, random_clique, random_state};

fn status() -> impl Strategy<Value = ReceptionStatus> {
    prop_oneof![
        Just(ReceptionStatus::Has),
        Just(ReceptionStatus::LacksUndesired),
        Just(ReceptionStatus::Wants),
        any::<bool>().prop_map(|wanted| ReceptionStatus::Uncertain { wanted }),
    ]
}

fn sfm(max: usize) -> impl Strategy<Value = StateFeedbackMatrix> {
    (1..=max, 1..=max).prop_flat_map(|(m, n)| {
        prop::collection::vec(prop::collection::vec(status(), n), m)
            .prop_map(|rows| StateFeedbackMatrix::from_rows(rows).unwrap())
    })
}

fn with_theta(sfm: StateFeedbackMatrix, seed: u64) -> PerceivedState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta: Vec<Vec<u32>> = (0..sfm.receivers())
        .map(|i| {
            sfm.row(ReceiverId(i))
                .iter()
                .map(|s| if s.is_uncertain() { rng.gen_range(1..=5) } else { 0 })
                .collect()
        })
        .collect();
    PerceivedState::with_theta(sfm, &theta).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn set_view_round_trips(sfm in sfm(8)) {
        let m = sfm.receivers();
        let has: Vec<_> = (0..m).map(|i| sfm.has_set(ReceiverId(i))).collect();
        let wants: Vec<_> = (0..m).map(|i| sfm.wants_set(ReceiverId(i))).collect();
        let unc: Vec<_> = (0..m).map(|i| sfm.uncertain_set(ReceiverId(i))).collect();
        for i in 0..m {
            let r = ReceiverId(i);
            let mut union = has[i].clone();
            union.union_with(&sfm.lacks_set(r));
            prop_assert_eq!(union.count_ones(..), sfm.packets());
            prop_assert!(wants[i].is_disjoint(&has[i]));
            prop_assert!(unc[i].is_disjoint(&has[i]));
        }
        prop_assert_eq!(StateFeedbackMatrix::from_sets(sfm.packets(), &has, &wants, &unc).unwrap(), sfm);
    }

    #[test]
    fn snapshot_round_trips(sfm in sfm(6), seed in any::<u64>()) {
        let state = with_theta(sfm, seed);
        prop_assert_eq!(PerceivedState::from_json(&state.to_json()).unwrap(), state);
    }

    #[test]
    fn theta_tracks_uncertainty(sfm in sfm(6), seed in any::<u64>(), ops in prop::collection::vec((any::<u8>(), any::<u8>(), any::<bool>()), 0..40)) {
        let mut state = with_theta(sfm, seed);
        let (m, n) = (state.receivers(), state.packets());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for (t, (a, b, heard)) in ops.into_iter().enumerate() {
            let r = ReceiverId(a as usize % m);
            if heard {
                let mut holdings = state.sfm().has_set(r);
                for j in 0..n {
                    if rng.gen_bool(0.5) {
                        holdings.insert(j);
                    }
                }
                state.apply_heard_feedback(r, &holdings, t as u64 + 1);
                prop_assert_eq!(state.sfm().uncertain_set(r).count_ones(..), 0);
                prop_assert_eq!(state.sfm().has_set(r), holdings);
            } else {
                state.record_unheard(r, PacketId(b as usize % n));
            }
            prop_assert!(state.check_consistency().is_ok());
        }
    }

    #[test]
    fn adjacency_matches_rules_and_ignores_hiding(sfm in sfm(8), hide_seed in any::<u64>()) {
        let plain = IdncGraph::build_unhidden(&sfm);
        let n = sfm.packets();
        let mut rng = ChaCha8Rng::seed_from_u64(hide_seed);
        let mask: Vec<bool> = (0..sfm.receivers() * n).map(|_| rng.gen_bool(0.5)).collect();
        let hidden = IdncGraph::build(&sfm, |r, pk| mask[r.0 * n + pk.0]);
        prop_assert_eq!(plain.len(), hidden.len());
        for a in 0..plain.len() {
            prop_assert!(!plain.adjacent(a, a));
            for b in 0..plain.len() {
                let (va, vb) = (plain.vertex(a).id(), plain.vertex(b).id());
                prop_assert_eq!(plain.adjacent(a, b), brute_force_adjacent(&sfm, va, vb));
                prop_assert_eq!(plain.adjacent(a, b), hidden.adjacent(a, b));
                prop_assert_eq!(plain.adjacent(a, b), plain.adjacent(b, a));
            }
        }
    }

    #[test]
    fn selected_plans_are_decodable_cliques(seed in any::<u64>(), dd in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (state, channels) = random_state(&mut rng, 8, 8, 64, 0.3);
        let n = state.packets();
        let mask: Vec<bool> = (0..state.receivers() * n).map(|_| rng.gen_bool(0.3)).collect();
        let mut graph = IdncGraph::build(state.sfm(), |r, pk| mask[r.0 * n + pk.0]);
        let params = if dd { SelectionParams::decoding_delay() } else { SelectionParams::default() };
        let plan = select_transmission(&mut graph, &state, &channels, &params).unwrap();
        prop_assert!(graph.is_clique(&plan.all_vertices()).unwrap());
        for v in plan.targets() {
            let has = state.sfm().has_set(v.receiver);
            prop_assert!(plan.coded.iter().all(|pk| *pk == v.packet || has.contains(pk.0)));
        }
        let untouched = plan.targets().all(|v| !state.status(v.receiver, v.packet).is_has());
        prop_assert!(untouched);
    }

    #[test]
    fn search_is_scale_invariant(seed in any::<u64>(), k in -20i32..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (state, channels) = random_state(&mut rng, 8, 8, 64, 0.2);
        let graph = IdncGraph::build_unhidden(state.sfm());
        let w = completion_weights(&graph, &channels, 3.0, SecondaryWeighting::Psi);
        let scaled = w.scaled(2f64.powi(k));
        for refresh in [WeightRefresh::Iterative, WeightRefresh::Once] {
            let eligible = graph.active_in(Layer::Primary);
            prop_assert_eq!(
                weighted_vertex_search(&graph, &w, &eligible, refresh),
                weighted_vertex_search(&graph, &scaled, &eligible, refresh)
            );
        }
    }

    #[test]
    fn p_loss_is_a_decreasing_probability(p in 0.01f64..0.99, frac in 0.0f64..1.0, theta in 1u32..60) {
        let q = frac * 0.99;
        let now = p_loss(p, q, theta).unwrap();
        let next = p_loss(p, q, theta + 1).unwrap();
        prop_assert!(now > 0.0 && now <= 1.0);
        prop_assert!(next <= now);
    }

    #[test]
    fn belief_sums_to_one(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (state, channels) = random_state(&mut rng, 5, 5, 12, 0.4);
        let total: f64 = belief_distribution(&state, &channels, DEFAULT_ORACLE_CAP).unwrap().iter().map(|r| r.probability).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expected_delay_is_bounded_and_monotone(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (state, channels) = random_state(&mut rng, 5, 6, 12, 0.35);
        let graph = IdncGraph::build_unhidden(state.sfm());
        let clique = random_clique(&graph, &mut rng);
        let (primary, secondary): (Vec<usize>, Vec<usize>) =
            clique.iter().partition(|&&v| graph.vertex(v).layer == Layer::Primary);
        let plan = idnc_core::TransmissionPlan::from_cliques(&graph, &primary, &secondary);
        let e = expected_decoding_delay(&state, &channels, &plan).unwrap();
        let outstanding = classify_receivers(&state, &plan).unwrap().outstanding.len();
        prop_assert!(e >= -1e-15 && e <= outstanding as f64 + 1e-12);

        // Append an untargeted outstanding receiver.
        let n = state.packets();
        let mut rows: Vec<Vec<ReceptionStatus>> =
            (0..state.receivers()).map(|i| state.sfm().row(ReceiverId(i)).to_vec()).collect();
        let mut theta: Vec<Vec<u32>> =
            (0..state.receivers()).map(|i| state.tracker().theta_row(ReceiverId(i)).to_vec()).collect();
        let mut extra = vec![ReceptionStatus::Has; n];
        let mut extra_theta = vec![0; n];
        let j = rng.gen_range(0..n);
        if rng.gen_bool(0.5) {
            extra[j] = ReceptionStatus::Wants;
        } else {
            extra[j] = ReceptionStatus::Uncertain { wanted: true };
            extra_theta[j] = rng.gen_range(1..=4);
        }
        rows.push(extra);
        theta.push(extra_theta);
        let bigger = PerceivedState::with_theta(StateFeedbackMatrix::from_rows(rows).unwrap(), &theta).unwrap();
        let mut more_channels = channels.clone();
        more_channels.push(ChannelParams::reciprocal(rng.gen_range(0.05..0.9)).unwrap());
        let e2 = expected_decoding_delay(&bigger, &more_channels, &plan).unwrap();
        prop_assert!(e2 >= e - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simulation_is_sound_and_deterministic(seed in any::<u64>(), policy in 0usize..5, mean_p in 0.05f64..0.6, mu in 0.2f64..1.0, reciprocal in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.gen_range(1..=8);
        let n = rng.gen_range(1..=8);
        let net = sample_heterogeneous_params(mean_p, mu, m, n, reciprocal, &mut rng).unwrap();
        let config = FrameConfig::new(net, PolicyKind::ALL[policy]);
        let mut sim = Simulation::new(&config, seed).unwrap();
        while let Some(trace) = sim.step().unwrap() {
            prop_assert!(sim.is_sound());
            prop_assert!(sim.perceived().check_consistency().is_ok());
            prop_assert!(!trace.plan.is_empty());
        }
        let metrics = sim.metrics().clone();
        if !metrics.truncated {
            prop_assert!(metrics.completion_delay.unwrap() <= metrics.transmissions);
            prop_assert!(sim.actual().is_actually_complete());
        }
        if config.policy == PolicyKind::Pf {
            prop_assert_eq!(metrics.theta_increments, 0);
        }
        prop_assert_eq!(idnc_core::run_frame(&config, seed).unwrap(), metrics);
    }

    #[test]
    fn trials_are_reproducible(seed in any::<u64>(), trial in 0usize..1000) {
        let mut c = ExperimentConfig::single_point(5, 4, 0.6, 0.3, 1);
        c.seed = seed;
        for p in [PolicyKind::Ml, PolicyKind::WvsDd] {
            prop_assert_eq!(run_trial(&c, 0, p, trial).unwrap(), run_trial(&c, 0, p, trial).unwrap());
        }
    }
}
