//! Naturalness of concrete scenarios: trajectory ingest, event extraction,
//! a synthetic trajectory source and the density model trained on the
//! extracted events.
//!
//! The pipeline is `points -> extract_events -> train_flow -> FlowModel`,
//! after which [`FlowModel::log_likelihood`] scores a concrete scenario and
//! [`FlowModel::nat_norm`] maps that score into [0, 1] by its rank among the
//! model's own training log-likelihoods.

pub mod extract;
pub mod flow;
pub mod ingest;
pub mod synthetic;
pub mod train;

use serde::{Deserialize, Serialize};

pub use extract::{extract_events, EVENT_WINDOW_S};
pub use flow::{FlowModel, FLOW_FORMAT_VERSION};
pub use ingest::{ingest_csv, ingest_reader, CsvSchema, Ingested};
pub use synthetic::{synthetic_events, synthetic_points, SyntheticGenerator};
pub use train::{train_flow, train_on_rows, TrainConfig, TrainReport};

/// One observation of one vehicle. `coords` are (longitudinal, lateral)
/// meters for highway data and plane (x, y) meters for junction data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub vehicle_id: u64,
    pub time: f64,
    pub coords: [f64; 2],
    pub speed: f64,
    pub lane: i32,
    pub front_id: Option<u64>,
    pub rear_id: Option<u64>,
}

/// Feature vector of one extracted event, in the parameter order of the
/// logical scenario it was extracted for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSample {
    pub features: Vec<f64>,
    pub source_window: (f64, f64),
}
