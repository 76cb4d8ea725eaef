pub mod association;
pub mod features;
pub mod geometry;
pub mod hub;
pub mod netproto;
pub mod sim;
pub mod tracker;

