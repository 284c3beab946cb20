//! Instantly decodable network coding over erasure channels with lossy
//! feedback: state model, packet graph, belief over uncertain entries,
//! transmission selection, delay accounting and a frame simulator.

pub mod belief;
pub mod delay;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod model;
pub mod selection;
pub mod sim;
pub mod verify;

pub use belief::{ml_entry_decision, p_loss, MlDecision, ThresholdTable};
pub use delay::{expected_decoding_delay, ReceiverClasses};
pub use error::{IdncError, Result};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentTable, Parallelism};
pub use graph::{IdncGraph, Layer, Vertex, VertexId};
pub use model::{
    ActualState, ChannelParams, DemandProfile, PacketId, PerceivedState, ReceiverId, ReceptionStatus,
    StateFeedbackMatrix,
};
pub use selection::{select_transmission, Objective, SelectionParams, TransmissionPlan};
pub use sim::{run_frame, FrameConfig, FrameMetrics, NetworkSample, PolicyKind, Simulation};
