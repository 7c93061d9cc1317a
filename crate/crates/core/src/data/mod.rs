//! Multi-domain data handling: datasets, synthetic scenarios, two-view
//! transforms and balanced batch creation.

pub mod batch;
pub mod dataset;
pub mod io;
pub mod scenario;
pub mod transform;

pub use batch::{create_batch, create_batch_unbalanced, BatchOptions, ClassPool};
pub use dataset::{Dataset, Label, Sample};
pub use io::{load_dataset, save_dataset};
pub use scenario::{generate_scenario, ScenarioConfig, ScenarioMetadata, StyleMap};
pub use transform::{adain_transform, view_transform, ViewTransformConfig};
