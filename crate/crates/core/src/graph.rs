//! The two-layer IDNC graph.
//!
//! One vertex per lacked `(receiver, packet)` pair. Two vertices of distinct
//! receivers are adjacent when they lack the same packet, or when each one's
//! packet is held by the other receiver. A clique therefore names an XOR that
//! every receiver inducing one of its vertices can decode on reception.

use std::fmt::Write as _;

use fixedbitset::FixedBitSet;

use crate::error::{IdncError, Result};
use crate::model::{PacketId, ReceiverId, StateFeedbackMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layer {
    /// Lacked and wanted.
    Primary,
    /// Lacked but not wanted.
    Secondary,
}

/// `(receiver, packet)` key of a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId {
    pub receiver: ReceiverId,
    pub packet: PacketId,
}

impl VertexId {
    pub fn new(receiver: usize, packet: usize) -> Self {
        Self {
            receiver: ReceiverId(receiver),
            packet: PacketId(packet),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vertex {
    pub receiver: ReceiverId,
    pub packet: PacketId,
    pub layer: Layer,
    /// Kept in the adjacency structure but not offered for selection.
    pub hidden: bool,
}

impl Vertex {
    pub fn id(&self) -> VertexId {
        VertexId {
            receiver: self.receiver,
            packet: self.packet,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IdncGraph {
    n_receivers: usize,
    n_packets: usize,
    vertices: Vec<Vertex>,
    adjacency: Vec<FixedBitSet>,
    // (receiver * n + packet) -> vertex index
    lookup: Vec<Option<usize>>,
}

impl IdncGraph {
    /// Build the graph of the perceived state. `hide(i, j)` decides which
    /// vertices start out hidden.
    pub fn build(sfm: &StateFeedbackMatrix, hide: impl Fn(ReceiverId, PacketId) -> bool) -> Self {
        let m = sfm.receivers();
        let n = sfm.packets();
        let has: Vec<FixedBitSet> = (0..m).map(|i| sfm.has_set(ReceiverId(i))).collect();

        let mut vertices = Vec::new();
        let mut lookup = vec![None; m * n];
        for i in 0..m {
            let r = ReceiverId(i);
            for (j, status) in sfm.row(r).iter().enumerate() {
                if status.is_has() {
                    continue;
                }
                let pk = PacketId(j);
                lookup[i * n + j] = Some(vertices.len());
                vertices.push(Vertex {
                    receiver: r,
                    packet: pk,
                    layer: if status.is_wanted() {
                        Layer::Primary
                    } else {
                        Layer::Secondary
                    },
                    hidden: hide(r, pk),
                });
            }
        }

        // C1: same packet. C2: j in H_k and l in H_i.
        let size = vertices.len();
        let mut adjacency = vec![FixedBitSet::with_capacity(size); size];
        for a in 0..size {
            let va = vertices[a];
            for b in (a + 1)..size {
                let vb = vertices[b];
                if va.receiver == vb.receiver {
                    continue;
                }
                let adjacent = va.packet == vb.packet
                    || (has[vb.receiver.0].contains(va.packet.0) && has[va.receiver.0].contains(vb.packet.0));
                if adjacent {
                    adjacency[a].insert(b);
                    adjacency[b].insert(a);
                }
            }
        }

        Self {
            n_receivers: m,
            n_packets: n,
            vertices,
            adjacency,
            lookup,
        }
    }

    /// Every vertex active.
    pub fn build_unhidden(sfm: &StateFeedbackMatrix) -> Self {
        Self::build(sfm, |_, _| false)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn receivers(&self) -> usize {
        self.n_receivers
    }

    pub fn packets(&self) -> usize {
        self.n_packets
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, index: usize) -> &Vertex {
        &self.vertices[index]
    }

    pub fn index_of(&self, id: VertexId) -> Option<usize> {
        if id.receiver.0 >= self.n_receivers || id.packet.0 >= self.n_packets {
            return None;
        }
        self.lookup[id.receiver.0 * self.n_packets + id.packet.0]
    }

    /// A(v): the neighbourhood of vertex `index`.
    pub fn neighbors(&self, index: usize) -> &FixedBitSet {
        &self.adjacency[index]
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].contains(b)
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(|row| row.count_ones(..)).sum::<usize>() / 2
    }

    /// Vertices selectable in the given layer (not hidden).
    pub fn active_in(&self, layer: Layer) -> FixedBitSet {
        let mut set = FixedBitSet::with_capacity(self.len());
        for (k, v) in self.vertices.iter().enumerate() {
            if v.layer == layer && !v.hidden {
                set.insert(k);
            }
        }
        set
    }

    pub fn set_hidden(&mut self, index: usize, hidden: bool) {
        self.vertices[index].hidden = hidden;
    }

    pub fn is_clique_indices(&self, indices: &[usize]) -> bool {
        indices.iter().enumerate().all(|(k, &a)| {
            indices[k + 1..]
                .iter()
                .all(|&b| a != b && self.adjacency[a].contains(b))
        })
    }

    /// True when every pair of the given vertices is adjacent.
    pub fn is_clique(&self, ids: &[VertexId]) -> Result<bool> {
        let indices = ids
            .iter()
            .map(|&id| {
                self.index_of(id).ok_or(IdncError::UnknownVertex {
                    receiver: id.receiver.0,
                    packet: id.packet.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.is_clique_indices(&indices))
    }

    /// If `receiver` has hidden primary vertices but no active primary one,
    /// bring all of its hidden vertices back. Returns whether anything
    /// changed.
    pub fn reactivate_if_exhausted(&mut self, receiver: ReceiverId) -> bool {
        let mut active_primary = 0;
        let mut hidden_primary = 0;
        for v in self.vertices.iter().filter(|v| v.receiver == receiver) {
            if v.layer == Layer::Primary {
                if v.hidden {
                    hidden_primary += 1;
                } else {
                    active_primary += 1;
                }
            }
        }
        if active_primary > 0 || hidden_primary == 0 {
            return false;
        }
        for v in self.vertices.iter_mut().filter(|v| v.receiver == receiver) {
            v.hidden = false;
        }
        true
    }

    pub fn reactivate_all_exhausted(&mut self) {
        for i in 0..self.n_receivers {
            self.reactivate_if_exhausted(ReceiverId(i));
        }
    }

    /// Graphviz rendering. Primary vertices are filled, hidden ones dashed.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph idnc {\n  node [shape=circle];\n");
        for (k, v) in self.vertices.iter().enumerate() {
            let mut style = Vec::new();
            if v.layer == Layer::Primary {
                style.push("filled");
            }
            if v.hidden {
                style.push("dashed");
            }
            let _ = writeln!(
                out,
                "  v{k} [label=\"{}{}\"{}];",
                v.receiver.0,
                v.packet.0,
                if style.is_empty() {
                    String::new()
                } else {
                    format!(", style=\"{}\"", style.join(","))
                }
            );
        }
        for a in 0..self.len() {
            for b in self.adjacency[a].ones().filter(|&b| b > a) {
                let _ = writeln!(out, "  v{a} -- v{b};");
            }
        }
        out.push_str("}\n");
        out
    }
}

/// What a coded packet does for a receiver holding `holdings`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeEffect {
    NonInnovative,
    InstantlyDecodable(PacketId),
    NonInstantlyDecodable,
}

pub fn decode_effect(coded: &[PacketId], holdings: &FixedBitSet) -> Result<DecodeEffect> {
    if coded.is_empty() {
        return Err(IdncError::EmptyCodedPacket);
    }
    let mut missing = coded.iter().filter(|p| !holdings.contains(p.0));
    Ok(match (missing.next(), missing.next()) {
        (None, _) => DecodeEffect::NonInnovative,
        (Some(&p), None) => DecodeEffect::InstantlyDecodable(p),
        (Some(_), Some(_)) => DecodeEffect::NonInstantlyDecodable,
    })
}
