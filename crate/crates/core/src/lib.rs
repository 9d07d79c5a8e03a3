//! Gesture-to-command pipeline: hand landmarks in, robot commands out.

pub mod bench;
pub mod cache;
pub mod config;
pub mod context;
pub mod corpus;
pub mod features;
pub mod gateway;
pub mod keyframe;
pub mod landmark;
pub mod pipeline;
pub mod router;
