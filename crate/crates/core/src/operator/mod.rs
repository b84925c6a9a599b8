//! The fusion network and its configuration.

pub mod config;
pub mod model;
pub mod params;
pub mod sample;

pub use config::{Ablation, EdnoConfig};
pub use model::{
    efil, efim, forward, ifim, lift_ms, lift_pan, predict, record_forward, LiftGeometry,
};
pub use params::{init_params, layout, param_count, zero_params, ParamStore};
pub use sample::{scaled_len, SamplePair};
