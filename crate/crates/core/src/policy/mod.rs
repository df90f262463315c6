//! Multi-role transfer controller: task routing by attention, a
//! knowledge-control head, transfer-strategy heads and a value critic.

mod network;

pub use network::{
    route, routing_probabilities, ActionDensity, Decision, DecisionContext, Mode, Overrides, Policy,
    PolicyStreams, ACTION_STD, EMBED_DIM, HIDDEN_DIM, MAX_TRANSFER_RATE,
};
