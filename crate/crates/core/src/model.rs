//! Network state: demand profiles, the true per-receiver holdings, and the
//! sender's state feedback matrix with its companion attempt counters.
//!
//! The sender never sees [`ActualState`]. Everything it knows lives in
//! [`PerceivedState`], which is only ever updated from heard feedback or from
//! the knowledge that a targeted receiver stayed silent.

use std::fmt;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::error::{IdncError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReceiverId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PacketId(pub usize);

impl ReceiverId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl PacketId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ReceiverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

impl fmt::Display for PacketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Forward (`p`) and reverse (`q`) erasure probabilities of one receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub p: f64,
    pub q: f64,
}

impl ChannelParams {
    fn check(name: &'static str, value: f64) -> Result<()> {
        if (0.0..1.0).contains(&value) {
            Ok(())
        } else {
            Err(IdncError::InvalidProbability { name, value })
        }
    }

    /// Any `0 <= p < 1`, `0 <= q < 1`.
    pub fn new(p: f64, q: f64) -> Result<Self> {
        Self::check("p", p)?;
        Self::check("q", q)?;
        Ok(Self { p, q })
    }

    /// Feedback erased with the same probability as data.
    pub fn reciprocal(p: f64) -> Result<Self> {
        Self::new(p, p)
    }

    /// Non-reciprocal channels must have `p > q`.
    pub fn non_reciprocal(p: f64, q: f64) -> Result<Self> {
        let params = Self::new(p, q)?;
        if p <= q {
            return Err(IdncError::Infeasible(format!(
                "non-reciprocal channel needs p > q (p = {p}, q = {q})"
            )));
        }
        Ok(params)
    }

    /// Perfect reverse link with the same forward link.
    pub fn with_perfect_feedback(self) -> Self {
        Self { p: self.p, q: 0.0 }
    }

    pub fn success(&self) -> f64 {
        1.0 - self.p
    }

    pub fn is_reciprocal(&self) -> bool {
        self.p == self.q
    }
}

/// Which packets of the frame each receiver asked for.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandProfile {
    n_packets: usize,
    wants: Vec<FixedBitSet>,
    ratios: Vec<f64>,
    mean_ratio: f64,
}

impl DemandProfile {
    pub fn from_masks(n_packets: usize, wants: Vec<FixedBitSet>) -> Result<Self> {
        for (i, mask) in wants.iter().enumerate() {
            if mask.len() != n_packets {
                return Err(IdncError::DimensionMismatch {
                    expected: format!("wants mask of receiver {i} with {n_packets} bits"),
                    found: format!("{} bits", mask.len()),
                });
            }
        }
        let ratios: Vec<f64> = wants
            .iter()
            .map(|w| {
                if n_packets == 0 {
                    0.0
                } else {
                    w.count_ones(..) as f64 / n_packets as f64
                }
            })
            .collect();
        let mean_ratio = if ratios.is_empty() {
            0.0
        } else {
            ratios.iter().sum::<f64>() / ratios.len() as f64
        };
        Ok(Self {
            n_packets,
            wants,
            ratios,
            mean_ratio,
        })
    }

    pub fn from_lists(n_packets: usize, lists: &[Vec<usize>]) -> Result<Self> {
        let mut masks = Vec::with_capacity(lists.len());
        for list in lists {
            let mut mask = FixedBitSet::with_capacity(n_packets);
            for &j in list {
                if j >= n_packets {
                    return Err(IdncError::DimensionMismatch {
                        expected: format!("packet index < {n_packets}"),
                        found: j.to_string(),
                    });
                }
                mask.insert(j);
            }
            masks.push(mask);
        }
        Self::from_masks(n_packets, masks)
    }

    /// Every receiver wants every packet.
    pub fn broadcast(m_receivers: usize, n_packets: usize) -> Self {
        let mut full = FixedBitSet::with_capacity(n_packets);
        full.insert_range(..);
        Self::from_masks(n_packets, vec![full; m_receivers]).expect("uniform masks")
    }

    pub fn receivers(&self) -> usize {
        self.wants.len()
    }

    pub fn packets(&self) -> usize {
        self.n_packets
    }

    pub fn wants(&self, receiver: ReceiverId) -> &FixedBitSet {
        &self.wants[receiver.0]
    }

    pub fn is_wanted(&self, receiver: ReceiverId, packet: PacketId) -> bool {
        self.wants[receiver.0].contains(packet.0)
    }

    pub fn ratio(&self, receiver: ReceiverId) -> f64 {
        self.ratios[receiver.0]
    }

    pub fn mean_ratio(&self) -> f64 {
        self.mean_ratio
    }
}

/// One entry of the state feedback matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReceptionStatus {
    /// Received, and the sender heard about it.
    Has,
    /// Not received (as last reported) and not requested.
    LacksUndesired,
    /// Not received (as last reported) and requested.
    Wants,
    /// Attempted since the last heard feedback. The tag records whether the
    /// packet is requested so the entry can resolve without a demand lookup.
    Uncertain { wanted: bool },
}

impl ReceptionStatus {
    pub fn is_has(self) -> bool {
        matches!(self, ReceptionStatus::Has)
    }

    pub fn is_lacks(self) -> bool {
        !self.is_has()
    }

    pub fn is_wanted(self) -> bool {
        matches!(
            self,
            ReceptionStatus::Wants | ReceptionStatus::Uncertain { wanted: true }
        )
    }

    pub fn is_uncertain(self) -> bool {
        matches!(self, ReceptionStatus::Uncertain { .. })
    }

    /// Snapshot code: `"0"`, `"-1"`, `"1"`, `"x+"`, `"x-"`.
    pub fn code(self) -> &'static str {
        match self {
            ReceptionStatus::Has => "0",
            ReceptionStatus::LacksUndesired => "-1",
            ReceptionStatus::Wants => "1",
            ReceptionStatus::Uncertain { wanted: true } => "x+",
            ReceptionStatus::Uncertain { wanted: false } => "x-",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Some(match code {
            "0" => ReceptionStatus::Has,
            "-1" => ReceptionStatus::LacksUndesired,
            "1" => ReceptionStatus::Wants,
            "x+" => ReceptionStatus::Uncertain { wanted: true },
            "x-" => ReceptionStatus::Uncertain { wanted: false },
            _ => return None,
        })
    }

    fn certain_lack(wanted: bool) -> Self {
        if wanted {
            ReceptionStatus::Wants
        } else {
            ReceptionStatus::LacksUndesired
        }
    }
}

/// Sender-side M x N grid of [`ReceptionStatus`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateFeedbackMatrix {
    m: usize,
    n: usize,
    entries: Vec<ReceptionStatus>,
}

impl StateFeedbackMatrix {
    pub fn filled(m: usize, n: usize, status: ReceptionStatus) -> Self {
        Self {
            m,
            n,
            entries: vec![status; m * n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<ReceptionStatus>>) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != n) {
            return Err(IdncError::DimensionMismatch {
                expected: format!("{n} columns"),
                found: format!("{} columns in row {bad}", rows[bad].len()),
            });
        }
        Ok(Self {
            m,
            n,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    pub fn receivers(&self) -> usize {
        self.m
    }

    pub fn packets(&self) -> usize {
        self.n
    }

    pub fn get(&self, receiver: ReceiverId, packet: PacketId) -> ReceptionStatus {
        self.entries[receiver.0 * self.n + packet.0]
    }

    /// Raw setter. Prefer the [`PerceivedState`] transitions, which keep the
    /// attempt counters consistent.
    pub fn set(&mut self, receiver: ReceiverId, packet: PacketId, status: ReceptionStatus) {
        self.entries[receiver.0 * self.n + packet.0] = status;
    }

    pub fn row(&self, receiver: ReceiverId) -> &[ReceptionStatus] {
        &self.entries[receiver.0 * self.n..(receiver.0 + 1) * self.n]
    }

    fn collect_row(&self, receiver: ReceiverId, pred: impl Fn(ReceptionStatus) -> bool) -> FixedBitSet {
        let mut set = FixedBitSet::with_capacity(self.n);
        for (j, &s) in self.row(receiver).iter().enumerate() {
            if pred(s) {
                set.insert(j);
            }
        }
        set
    }

    /// H_i.
    pub fn has_set(&self, receiver: ReceiverId) -> FixedBitSet {
        self.collect_row(receiver, ReceptionStatus::is_has)
    }

    /// L_i = N \ H_i.
    pub fn lacks_set(&self, receiver: ReceiverId) -> FixedBitSet {
        self.collect_row(receiver, ReceptionStatus::is_lacks)
    }

    /// W_i, including the wanted uncertain entries.
    pub fn wants_set(&self, receiver: ReceiverId) -> FixedBitSet {
        self.collect_row(receiver, ReceptionStatus::is_wanted)
    }

    /// U_i.
    pub fn uncertain_set(&self, receiver: ReceiverId) -> FixedBitSet {
        self.collect_row(receiver, ReceptionStatus::is_uncertain)
    }

    pub fn wants_count(&self, receiver: ReceiverId) -> usize {
        self.row(receiver).iter().filter(|s| s.is_wanted()).count()
    }

    pub fn uncertain_count(&self) -> usize {
        self.entries.iter().filter(|s| s.is_uncertain()).count()
    }

    /// Rebuild the grid from per-receiver H, W and U sets. Inverse of the
    /// `*_set` accessors.
    pub fn from_sets(
        n: usize,
        has: &[FixedBitSet],
        wants: &[FixedBitSet],
        uncertain: &[FixedBitSet],
    ) -> Result<Self> {
        let m = has.len();
        if wants.len() != m || uncertain.len() != m {
            return Err(IdncError::DimensionMismatch {
                expected: format!("{m} rows in every set family"),
                found: format!("{} wants rows, {} uncertain rows", wants.len(), uncertain.len()),
            });
        }
        let mut sfm = Self::filled(m, n, ReceptionStatus::LacksUndesired);
        for i in 0..m {
            for j in 0..n {
                let status = if has[i].contains(j) {
                    ReceptionStatus::Has
                } else if uncertain[i].contains(j) {
                    ReceptionStatus::Uncertain {
                        wanted: wants[i].contains(j),
                    }
                } else {
                    ReceptionStatus::certain_lack(wants[i].contains(j))
                };
                sfm.set(ReceiverId(i), PacketId(j), status);
            }
        }
        Ok(sfm)
    }
}

/// Unheard attempt counters θ and the last timeslot each receiver was heard.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttemptTracker {
    n: usize,
    theta: Vec<u32>,
    last_heard: Vec<u64>,
}

impl AttemptTracker {
    pub fn new(m: usize, n: usize) -> Self {
        Self {
            n,
            theta: vec![0; m * n],
            last_heard: vec![0; m],
        }
    }

    pub fn theta(&self, receiver: ReceiverId, packet: PacketId) -> u32 {
        self.theta[receiver.0 * self.n + packet.0]
    }

    pub fn last_heard(&self, receiver: ReceiverId) -> u64 {
        self.last_heard[receiver.0]
    }

    pub fn theta_row(&self, receiver: ReceiverId) -> &[u32] {
        &self.theta[receiver.0 * self.n..(receiver.0 + 1) * self.n]
    }

    fn theta_mut(&mut self, receiver: ReceiverId, packet: PacketId) -> &mut u32 {
        &mut self.theta[receiver.0 * self.n + packet.0]
    }

    fn reset_row(&mut self, receiver: ReceiverId, now: u64) {
        let n = self.n;
        self.theta[receiver.0 * n..(receiver.0 + 1) * n].fill(0);
        self.last_heard[receiver.0] = now;
    }
}

/// Everything the sender believes: the SFM plus its attempt counters.
///
/// Invariant: `theta(i, j) > 0` exactly when entry `(i, j)` is uncertain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerceivedState {
    sfm: StateFeedbackMatrix,
    tracker: AttemptTracker,
}

impl PerceivedState {
    /// A state in which every lacked bit is certain.
    pub fn certain(sfm: StateFeedbackMatrix) -> Result<Self> {
        let tracker = AttemptTracker::new(sfm.receivers(), sfm.packets());
        Self::from_parts(sfm, tracker)
    }

    pub fn from_parts(sfm: StateFeedbackMatrix, tracker: AttemptTracker) -> Result<Self> {
        if tracker.theta.len() != sfm.entries.len() || tracker.last_heard.len() != sfm.m {
            return Err(IdncError::DimensionMismatch {
                expected: format!("{}x{} attempt tracker", sfm.m, sfm.n),
                found: format!("{} counters", tracker.theta.len()),
            });
        }
        let state = Self { sfm, tracker };
        state.check_consistency()?;
        Ok(state)
    }

    /// Build a state from an SFM and explicit θ rows (test fixtures, snapshots).
    pub fn with_theta(sfm: StateFeedbackMatrix, theta: &[Vec<u32>]) -> Result<Self> {
        let mut tracker = AttemptTracker::new(sfm.receivers(), sfm.packets());
        if theta.len() != sfm.receivers() {
            return Err(IdncError::DimensionMismatch {
                expected: format!("{} theta rows", sfm.receivers()),
                found: theta.len().to_string(),
            });
        }
        for (i, row) in theta.iter().enumerate() {
            if row.len() != sfm.packets() {
                return Err(IdncError::DimensionMismatch {
                    expected: format!("{} theta columns", sfm.packets()),
                    found: format!("{} in row {i}", row.len()),
                });
            }
            for (j, &t) in row.iter().enumerate() {
                *tracker.theta_mut(ReceiverId(i), PacketId(j)) = t;
            }
        }
        Self::from_parts(sfm, tracker)
    }

    pub fn sfm(&self) -> &StateFeedbackMatrix {
        &self.sfm
    }

    pub fn tracker(&self) -> &AttemptTracker {
        &self.tracker
    }

    pub fn receivers(&self) -> usize {
        self.sfm.m
    }

    pub fn packets(&self) -> usize {
        self.sfm.n
    }

    pub fn status(&self, receiver: ReceiverId, packet: PacketId) -> ReceptionStatus {
        self.sfm.get(receiver, packet)
    }

    pub fn theta(&self, receiver: ReceiverId, packet: PacketId) -> u32 {
        self.tracker.theta(receiver, packet)
    }

    pub fn check_consistency(&self) -> Result<()> {
        for (k, (&s, &t)) in self.sfm.entries.iter().zip(&self.tracker.theta).enumerate() {
            if s.is_uncertain() != (t > 0) {
                return Err(IdncError::InconsistentPlan(format!(
                    "entry ({}, {}) is {:?} with theta {}",
                    k / self.sfm.n,
                    k % self.sfm.n,
                    s,
                    t
                )));
            }
        }
        Ok(())
    }

    /// A feedback from `receiver` carrying its full cumulative reception set
    /// was heard at timeslot `now`. Every uncertain entry of the receiver is
    /// resolved and its counters are cleared.
    pub fn apply_heard_feedback(&mut self, receiver: ReceiverId, holdings: &FixedBitSet, now: u64) {
        for j in 0..self.sfm.n {
            let packet = PacketId(j);
            let status = self.sfm.get(receiver, packet);
            let resolved = if holdings.contains(j) {
                ReceptionStatus::Has
            } else {
                match status {
                    ReceptionStatus::Uncertain { wanted } => ReceptionStatus::certain_lack(wanted),
                    other => other,
                }
            };
            self.sfm.set(receiver, packet, resolved);
        }
        self.tracker.reset_row(receiver, now);
    }

    /// `receiver` was targeted with `packet` and the sender heard nothing.
    /// Only meaningful when that receiver's feedback can be lost; with a
    /// perfect reverse link silence is a certain loss and nothing changes.
    pub fn record_unheard(&mut self, receiver: ReceiverId, packet: PacketId) {
        let status = self.sfm.get(receiver, packet);
        match status {
            ReceptionStatus::Has => {}
            ReceptionStatus::Wants | ReceptionStatus::LacksUndesired => {
                self.sfm.set(
                    receiver,
                    packet,
                    ReceptionStatus::Uncertain {
                        wanted: status == ReceptionStatus::Wants,
                    },
                );
                *self.tracker.theta_mut(receiver, packet) = 1;
            }
            ReceptionStatus::Uncertain { .. } => {
                *self.tracker.theta_mut(receiver, packet) += 1;
            }
        }
    }

    /// The sender has heard completion from everyone: no entry is wanted,
    /// whether certain or not.
    pub fn is_perceived_complete(&self) -> bool {
        !self.sfm.entries.iter().any(|s| s.is_wanted())
    }

    pub fn to_snapshot(&self) -> Snapshot {
        let n = self.sfm.n;
        Snapshot {
            entries: (0..self.sfm.m)
                .map(|i| {
                    self.sfm
                        .row(ReceiverId(i))
                        .iter()
                        .map(|s| s.code().to_string())
                        .collect()
                })
                .collect(),
            theta: self.tracker.theta.chunks(n.max(1)).map(<[u32]>::to_vec).collect(),
        }
    }

    pub fn from_snapshot(snapshot: &Snapshot) -> Result<Self> {
        let rows = snapshot
            .entries
            .iter()
            .map(|row| {
                row.iter()
                    .map(|code| {
                        ReceptionStatus::from_code(code)
                            .ok_or_else(|| IdncError::Config(format!("unknown entry code {code:?}")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let sfm = StateFeedbackMatrix::from_rows(rows)?;
        Self::with_theta(sfm, &snapshot.theta)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_snapshot()).expect("snapshot serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let snapshot: Snapshot = serde_json::from_str(text).map_err(|e| IdncError::Config(e.to_string()))?;
        Self::from_snapshot(&snapshot)
    }
}

/// JSON form of a [`PerceivedState`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub entries: Vec<Vec<String>>,
    pub theta: Vec<Vec<u32>>,
}

/// Ground truth: what every receiver actually holds.
#[derive(Debug, Clone, PartialEq)]
pub struct ActualState {
    holdings: Vec<FixedBitSet>,
    demand: DemandProfile,
}

impl ActualState {
    pub fn empty(demand: DemandProfile) -> Self {
        let n = demand.packets();
        Self {
            holdings: vec![FixedBitSet::with_capacity(n); demand.receivers()],
            demand,
        }
    }

    pub fn from_holdings(demand: DemandProfile, holdings: Vec<FixedBitSet>) -> Result<Self> {
        if holdings.len() != demand.receivers() || holdings.iter().any(|h| h.len() != demand.packets()) {
            return Err(IdncError::DimensionMismatch {
                expected: format!("{}x{} holdings", demand.receivers(), demand.packets()),
                found: format!("{} rows", holdings.len()),
            });
        }
        Ok(Self { holdings, demand })
    }

    pub fn demand(&self) -> &DemandProfile {
        &self.demand
    }

    pub fn holdings(&self, receiver: ReceiverId) -> &FixedBitSet {
        &self.holdings[receiver.0]
    }

    pub fn receive(&mut self, receiver: ReceiverId, packet: PacketId) {
        self.holdings[receiver.0].insert(packet.0);
    }

    /// Requested packets the receiver does not hold yet.
    pub fn true_wants(&self, receiver: ReceiverId) -> FixedBitSet {
        let mut w = self.demand.wants(receiver).clone();
        w.difference_with(&self.holdings[receiver.0]);
        w
    }

    pub fn receiver_complete(&self, receiver: ReceiverId) -> bool {
        self.demand.wants(receiver).is_subset(&self.holdings[receiver.0])
    }

    pub fn is_actually_complete(&self) -> bool {
        (0..self.holdings.len()).all(|i| self.receiver_complete(ReceiverId(i)))
    }
}

/// The N uncoded broadcasts. `received[i][j]` says whether receiver `i` got
/// packet `j`; `heard[i][j]` whether its per-packet ACK/NACK reached the
/// sender. Unheard feedback leaves the entry uncertain with one attempt.
pub fn apply_initial_phase(
    received: &[Vec<bool>],
    heard: &[Vec<bool>],
    demand: &DemandProfile,
) -> Result<(PerceivedState, ActualState)> {
    let m = demand.receivers();
    let n = demand.packets();
    for (name, grid) in [("received", received), ("heard", heard)] {
        if grid.len() != m || grid.iter().any(|row| row.len() != n) {
            return Err(IdncError::DimensionMismatch {
                expected: format!("{m}x{n} {name} grid"),
                found: format!(
                    "{} rows of lengths {:?}",
                    grid.len(),
                    grid.iter().map(Vec::len).collect::<Vec<_>>()
                ),
            });
        }
    }

    let mut sfm = StateFeedbackMatrix::filled(m, n, ReceptionStatus::Has);
    let mut tracker = AttemptTracker::new(m, n);
    let mut actual = ActualState::empty(demand.clone());
    for i in 0..m {
        let r = ReceiverId(i);
        for j in 0..n {
            let pk = PacketId(j);
            let wanted = demand.is_wanted(r, pk);
            if received[i][j] {
                actual.receive(r, pk);
            }
            let status = match (heard[i][j], received[i][j]) {
                (true, true) => ReceptionStatus::Has,
                (true, false) => ReceptionStatus::certain_lack(wanted),
                (false, _) => {
                    *tracker.theta_mut(r, pk) = 1;
                    ReceptionStatus::Uncertain { wanted }
                }
            };
            sfm.set(r, pk, status);
        }
    }
    Ok((PerceivedState { sfm, tracker }, actual))
}
