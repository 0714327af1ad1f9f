//! Patch-based forecaster: encoder MLP, positional table, optional vocabulary
//! adapter, GPT-2 style or linear backbone, decoder MLP.

mod adapter;
mod config;
mod forecast;
mod layers;
mod rollout;

pub use adapter::VocabAdapter;
pub use config::{AdapterConfig, BackboneKind, ModelConfig};
pub use forecast::{Backbone, ForecastModel, ModelState};
pub use layers::{Block, LayerNorm, Linear, Mlp, NamedParam, ParamGroup, ParamKind, LN_EPS};
pub use rollout::{forecast, forecast_batch, rollout, PatchPredictor};
