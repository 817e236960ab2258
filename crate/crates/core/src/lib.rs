//! Simulator of light-controlled slime-mould logic gates.
//!
//! A scene (dish, electrodes, agar, food, LEDs, barriers) is rasterised into
//! stimulus fields. An agent-based plasmodium grows over them, its trail is
//! skeletonised into a network of tubes, and that network is read as a
//! resistor in an output circuit.

pub mod calibration;
pub mod cascade;
pub mod circuit;
pub mod config;
pub mod experiments;
pub mod fields;
pub mod gates;
pub mod geometry;
pub mod grid;
pub mod network;
pub mod parallel;
pub mod plasmodium;
pub mod record;
pub mod rng;
pub mod scene;
