//! Clique selection over the IDNC graph.
//!
//! Vertex weights come in two flavours. For completion delay every vertex of
//! receiver `i` weighs `ψ_i = (|W_i| / (1 - p_i))^m`. For decoding delay a
//! never-attempted wanted vertex weighs `1 - p_i` and an uncertain one
//! `(1 - p_i) P^L`. The greedy search repeatedly picks the candidate with the
//! largest modified weight `w(v) * Σ_{u ∈ A(v)} w(u)` and keeps only its
//! neighbours as candidates.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use fixedbitset::FixedBitSet;

use crate::belief::p_loss;
use crate::error::{IdncError, Result};
use crate::graph::{IdncGraph, Layer, VertexId};
use crate::model::{ChannelParams, PacketId, PerceivedState, ReceiverId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    CompletionDelay,
    DecodingDelay,
}

/// Weights of secondary-layer vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SecondaryWeighting {
    /// `ψ` with `|W_i|` replaced by the number of lacked unwanted packets.
    Psi,
    /// All zero; the search then follows index order.
    Zero,
}

/// When the greedy search recomputes modified weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightRefresh {
    /// On the shrinking candidate set at every step.
    Iterative,
    /// Once, on the initial candidate set.
    Once,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionParams {
    pub objective: Objective,
    /// Biasing exponent `m` of the completion weights.
    pub m_exponent: f64,
    pub secondary: SecondaryWeighting,
    pub refresh: WeightRefresh,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self {
            objective: Objective::CompletionDelay,
            m_exponent: 3.0,
            secondary: SecondaryWeighting::Psi,
            refresh: WeightRefresh::Iterative,
        }
    }
}

impl SelectionParams {
    pub fn decoding_delay() -> Self {
        Self {
            objective: Objective::DecodingDelay,
            ..Self::default()
        }
    }
}

/// Per-vertex base weights, indexed like the graph's vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexWeights {
    pub base: Vec<f64>,
}

impl VertexWeights {
    pub fn uniform(graph: &IdncGraph, value: f64) -> Self {
        Self {
            base: vec![value; graph.len()],
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            base: self.base.iter().map(|w| w * factor).collect(),
        }
    }

    /// `w(v) * Σ_{u ∈ A(v) ∩ within} w(u)`.
    pub fn modified(&self, graph: &IdncGraph, v: usize, within: &FixedBitSet) -> f64 {
        let sum: f64 = graph
            .neighbors(v)
            .intersection(within)
            .map(|u| self.base[u])
            .sum();
        self.base[v] * sum
    }

    pub fn total(&self, clique: &[usize]) -> f64 {
        clique.iter().map(|&v| self.base[v]).sum()
    }
}

/// `ψ` weights. `|W_i|` counts the receiver's active primary vertices, so
/// hidden vertices are treated as received.
pub fn completion_weights(
    graph: &IdncGraph,
    channels: &[ChannelParams],
    m_exponent: f64,
    secondary: SecondaryWeighting,
) -> VertexWeights {
    let mut primary_count = vec![0usize; graph.receivers()];
    let mut secondary_count = vec![0usize; graph.receivers()];
    for v in graph.vertices().iter().filter(|v| !v.hidden) {
        match v.layer {
            Layer::Primary => primary_count[v.receiver.0] += 1,
            Layer::Secondary => secondary_count[v.receiver.0] += 1,
        }
    }
    let base = graph
        .vertices()
        .iter()
        .map(|v| {
            let i = v.receiver.0;
            let size = match (v.layer, secondary) {
                (Layer::Primary, _) => primary_count[i],
                (Layer::Secondary, SecondaryWeighting::Psi) => secondary_count[i],
                (Layer::Secondary, SecondaryWeighting::Zero) => return 0.0,
            };
            (size as f64 / channels[i].success()).powf(m_exponent)
        })
        .collect();
    VertexWeights { base }
}

/// `ω` weights. Secondary vertices carry no decoding-delay benefit.
pub fn decoding_weights(
    graph: &IdncGraph,
    state: &PerceivedState,
    channels: &[ChannelParams],
) -> Result<VertexWeights> {
    let base = graph
        .vertices()
        .iter()
        .map(|v| {
            if v.layer == Layer::Secondary {
                return Ok(0.0);
            }
            let ch = channels[v.receiver.0];
            let theta = state.theta(v.receiver, v.packet);
            if theta == 0 {
                Ok(ch.success())
            } else {
                Ok(ch.success() * p_loss(ch.p, ch.q, theta)?)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VertexWeights { base })
}

fn pick_best(
    candidates: &FixedBitSet,
    score: impl Fn(usize) -> f64,
    weights: &VertexWeights,
    fallback: Option<&VertexWeights>,
) -> Option<usize> {
    let fb = |v: usize| fallback.map_or(0.0, |f| f.base[v]);
    let key = |v: usize| (score(v), weights.base[v], fb(v));
    let cmp = |a: f64, b: f64| a.partial_cmp(&b).unwrap_or(Ordering::Equal);
    candidates
        .ones()
        .map(|v| (v, key(v)))
        .reduce(|best, cand| {
            let ord = cmp(cand.1 .0, best.1 .0)
                .then(cmp(cand.1 .1, best.1 .1))
                .then(cmp(cand.1 .2, best.1 .2));
            // Lower index (receiver, then packet) wins remaining ties.
            if ord == Ordering::Greater {
                cand
            } else {
                best
            }
        })
        .map(|(v, _)| v)
}

/// Greedy maximum-weight clique search restricted to `eligible`.
///
/// Ties on the modified weight fall back to the base weight, then to
/// `fallback`'s base weight, then to the lowest vertex index.
pub fn weighted_vertex_search(
    graph: &IdncGraph,
    weights: &VertexWeights,
    eligible: &FixedBitSet,
    refresh: WeightRefresh,
) -> Vec<usize> {
    weighted_vertex_search_with_fallback(graph, weights, None, eligible, refresh)
}

pub fn weighted_vertex_search_with_fallback(
    graph: &IdncGraph,
    weights: &VertexWeights,
    fallback: Option<&VertexWeights>,
    eligible: &FixedBitSet,
    refresh: WeightRefresh,
) -> Vec<usize> {
    let mut candidates = eligible.clone();
    candidates.grow(graph.len());
    let frozen: Option<Vec<f64>> = match refresh {
        WeightRefresh::Iterative => None,
        WeightRefresh::Once => Some(
            (0..graph.len())
                .map(|v| weights.modified(graph, v, &candidates))
                .collect(),
        ),
    };

    let mut clique = Vec::new();
    while !candidates.is_clear() {
        let chosen = match &frozen {
            Some(values) => pick_best(&candidates, |v| values[v], weights, fallback),
            None => pick_best(
                &candidates,
                |v| weights.modified(graph, v, &candidates),
                weights,
                fallback,
            ),
        }
        .expect("non-empty candidate set");
        clique.push(chosen);
        candidates.intersect_with(graph.neighbors(chosen));
    }
    clique
}

pub const EXACT_CLIQUE_CAP: usize = 24;

/// Exhaustive branch and bound for the maximum total base weight clique
/// inside `eligible`. Weights must be non-negative. Among equal-weight
/// cliques the first one met in include-first index order is kept.
pub fn exact_max_weight_clique(
    graph: &IdncGraph,
    weights: &VertexWeights,
    eligible: &FixedBitSet,
) -> Result<Vec<usize>> {
    let order: Vec<usize> = eligible.ones().filter(|&v| v < graph.len()).collect();
    if order.len() > EXACT_CLIQUE_CAP {
        return Err(IdncError::OracleCapExceeded {
            size: order.len(),
            cap: EXACT_CLIQUE_CAP,
        });
    }

    struct Search<'a> {
        graph: &'a IdncGraph,
        weights: &'a VertexWeights,
        best: Option<(f64, Vec<usize>)>,
    }

    impl Search<'_> {
        fn go(&mut self, current: &mut Vec<usize>, weight: f64, candidates: &[usize]) {
            if candidates.is_empty() {
                if self.best.as_ref().is_none_or(|(w, _)| weight > *w) {
                    self.best = Some((weight, current.clone()));
                }
                return;
            }
            let bound: f64 = weight + candidates.iter().map(|&v| self.weights.base[v]).sum::<f64>();
            if let Some((w, _)) = &self.best {
                if bound <= *w {
                    return;
                }
            }
            let (&v, rest) = candidates.split_first().expect("non-empty");
            let narrowed: Vec<usize> = rest
                .iter()
                .copied()
                .filter(|&u| self.graph.adjacent(v, u))
                .collect();
            current.push(v);
            self.go(current, weight + self.weights.base[v], &narrowed);
            current.pop();
            self.go(current, weight, rest);
        }
    }

    let mut search = Search {
        graph,
        weights,
        best: None,
    };
    search.go(&mut Vec::new(), 0.0, &order);
    Ok(search.best.map(|(_, c)| c).unwrap_or_default())
}

/// One coded transmission: the primary and secondary cliques and the XOR of
/// their packets.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TransmissionPlan {
    pub primary: Vec<VertexId>,
    pub secondary: Vec<VertexId>,
    /// Distinct packets of the clique, ascending.
    pub coded: Vec<PacketId>,
}

impl TransmissionPlan {
    pub fn from_cliques(graph: &IdncGraph, primary: &[usize], secondary: &[usize]) -> Self {
        let ids = |c: &[usize]| c.iter().map(|&v| graph.vertex(v).id()).collect::<Vec<_>>();
        let primary = ids(primary);
        let secondary = ids(secondary);
        let coded: BTreeSet<PacketId> = primary.iter().chain(&secondary).map(|v| v.packet).collect();
        Self {
            primary,
            secondary,
            coded: coded.into_iter().collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.primary.is_empty() && self.secondary.is_empty()
    }

    /// Every targeted vertex, primary first.
    pub fn targets(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.primary.iter().chain(&self.secondary).copied()
    }

    pub fn is_targeted(&self, receiver: ReceiverId) -> bool {
        self.targets().any(|v| v.receiver == receiver)
    }

    pub fn primary_packet(&self, receiver: ReceiverId) -> Option<PacketId> {
        self.primary
            .iter()
            .find(|v| v.receiver == receiver)
            .map(|v| v.packet)
    }

    pub fn all_vertices(&self) -> Vec<VertexId> {
        self.targets().collect()
    }
}

/// Choose the next transmission: reactivate exhausted receivers, run the
/// greedy search on the active primary layer, then extend it with secondary
/// vertices of untargeted receivers adjacent to the whole primary clique.
pub fn select_transmission(
    graph: &mut IdncGraph,
    state: &PerceivedState,
    channels: &[ChannelParams],
    params: &SelectionParams,
) -> Result<TransmissionPlan> {
    if channels.len() != graph.receivers() {
        return Err(IdncError::DimensionMismatch {
            expected: format!("{} channels", graph.receivers()),
            found: channels.len().to_string(),
        });
    }
    graph.reactivate_all_exhausted();

    let psi = completion_weights(graph, channels, params.m_exponent, params.secondary);
    let primary_weights = match params.objective {
        Objective::CompletionDelay => psi.clone(),
        Objective::DecodingDelay => decoding_weights(graph, state, channels)?,
    };

    let primary = weighted_vertex_search(
        graph,
        &primary_weights,
        &graph.active_in(Layer::Primary),
        params.refresh,
    );

    let mut secondary_pool = graph.active_in(Layer::Secondary);
    let targeted: BTreeSet<ReceiverId> = primary.iter().map(|&v| graph.vertex(v).receiver).collect();
    for &v in &primary {
        secondary_pool.intersect_with(graph.neighbors(v));
    }
    let pool: Vec<usize> = secondary_pool.ones().collect();
    for v in pool {
        if targeted.contains(&graph.vertex(v).receiver) {
            secondary_pool.set(v, false);
        }
    }
    // Decoding-delay secondary weights are all zero, so ψ decides.
    let secondary = weighted_vertex_search(graph, &psi, &secondary_pool, params.refresh);

    Ok(TransmissionPlan::from_cliques(graph, &primary, &secondary))
}
