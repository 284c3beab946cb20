//! Shared fixtures for the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use idnc_core::model::{ChannelParams, PerceivedState, ReceiverId, ReceptionStatus, StateFeedbackMatrix};
use idnc_core::sim::{sample_heterogeneous_params, FrameConfig, PolicyKind};

/// A mid-frame state: roughly half the wanted packets outstanding, a few
/// of them uncertain.
pub fn mid_frame_state(m: usize, n: usize, seed: u64) -> (PerceivedState, Vec<ChannelParams>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = sample_heterogeneous_params(0.25, 0.6, m, n, true, &mut rng).expect("feasible");
    let mut rows = Vec::with_capacity(m);
    let mut theta = Vec::with_capacity(m);
    for i in 0..m {
        let wants = net.demand.wants(ReceiverId(i));
        let mut row = Vec::with_capacity(n);
        let mut trow = Vec::with_capacity(n);
        for j in 0..n {
            let h = (i * 31 + j * 17 + seed as usize) % 10;
            let (s, t) = match (h, wants.contains(j)) {
                (0..=4, _) => (ReceptionStatus::Has, 0),
                (5, w) => (ReceptionStatus::Uncertain { wanted: w }, 1 + (h as u32 % 3)),
                (_, true) => (ReceptionStatus::Wants, 0),
                (_, false) => (ReceptionStatus::LacksUndesired, 0),
            };
            row.push(s);
            trow.push(t);
        }
        rows.push(row);
        theta.push(trow);
    }
    let sfm = StateFeedbackMatrix::from_rows(rows).expect("rectangular");
    (
        PerceivedState::with_theta(sfm, &theta).expect("consistent"),
        net.channels,
    )
}

pub fn frame_config(m: usize, n: usize, policy: PolicyKind, seed: u64) -> FrameConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = sample_heterogeneous_params(0.25, 0.5, m, n, true, &mut rng).expect("feasible");
    FrameConfig::new(net, policy)
}
