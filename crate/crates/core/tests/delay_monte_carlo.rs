use std::collections::BTreeSet;

use fixedbitset::FixedBitSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use idnc_core::belief::p_loss;
use idnc_core::delay::{actual_delay_increment, classify_receivers, expected_decoding_delay, DelayCase};
use idnc_core::graph::IdncGraph;
use idnc_core::model::ReceptionStatus::*;
use idnc_core::model::{PacketId, ReceiverId};
use idnc_core::selection::{select_transmission, SelectionParams};
use idnc_core::verify::{random_state, untargeted_may_decode};

#[test]
fn sampled_increments_match_the_closed_form() {
    // First seeded instance whose untargeted receivers cannot decode by
    // accident and which mixes at least four receiver cases.
    let (state, channels, plan) = (0u64..)
        .find_map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (state, channels) = random_state(&mut rng, 6, 5, 10, 0.35);
            let mut graph = IdncGraph::build_unhidden(state.sfm());
            let plan = select_transmission(&mut graph, &state, &channels, &SelectionParams::decoding_delay())
                .ok()?;
            let classes = classify_receivers(&state, &plan).ok()?;
            let cases: BTreeSet<DelayCase> = classes.outstanding.iter().map(|c| c.case()).collect();
            (!untargeted_may_decode(&state, &plan, &classes) && cases.len() >= 4)
                .then_some((state, channels, plan))
        })
        .unwrap();
    let expected = expected_decoding_delay(&state, &channels, &plan).unwrap();

    let n = state.packets();
    let mut rng = ChaCha8Rng::seed_from_u64(0xDE1A);
    let reps = 200_000;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..reps {
        let mut total = 0u32;
        for (i, ch) in channels.iter().enumerate() {
            let r = ReceiverId(i);
            let mut holdings = FixedBitSet::with_capacity(n);
            for j in 0..n {
                let pk = PacketId(j);
                let held = match state.status(r, pk) {
                    Has => true,
                    Uncertain { .. } => rng.gen::<f64>() >= p_loss(ch.p, ch.q, state.theta(r, pk)).unwrap(),
                    _ => false,
                };
                holdings.set(j, held);
            }
            let received = rng.gen::<f64>() >= ch.p;
            total += actual_delay_increment(&holdings, &state.sfm().wants_set(r), &plan.coded, received);
        }
        let x = f64::from(total);
        sum += x;
        sum_sq += x * x;
    }
    let n_reps = reps as f64;
    let mean = sum / n_reps;
    let se = ((sum_sq - n_reps * mean * mean) / (n_reps - 1.0) / n_reps).sqrt();
    assert!(
        (mean - expected).abs() <= 3.0 * se,
        "sampled {mean} vs closed form {expected} (se {se})"
    );
}
