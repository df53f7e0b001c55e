//! Numerical lab for degenerate parabolic complex Monge-Ampère flows on flat
//! periodic tori.

pub mod background;
pub mod elliptic;
pub mod grid;
pub mod herm;
pub mod ma_ops;
pub mod parabolic;
pub mod report;
pub mod scenarios;
pub mod verify;
