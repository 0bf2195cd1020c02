//! End-to-end crop type classification from three modalities: multi-year
//! crop rotations, windowed satellite time-series features, and the local
//! crop distribution of the surrounding parcels.
//!
//! Pipeline stages, in data order:
//!
//! - [`data`]: CSV ingestion, label taxonomy, sequence assembly
//! - [`prep`]: Hampel screening, 2-day resampling, Whittaker smoothing
//! - [`features`]: windowed statistical functionals (25 x 28 per season)
//! - [`cropdist`]: 10-km crop distribution context vectors
//! - [`neural`]: the recurrent model zoo with exact backpropagation
//! - [`train`]: Adam training loop, early stopping, checkpoints
//! - [`eval`]: metrics, label aggregation, confidence filtering, cutoff sweeps
//! - [`synth`]: synthetic rotation/phenology dataset generator
//! - [`pipeline`]: orchestration plus binary feature/series caches

pub mod cropdist;
pub mod data;
pub mod error;
pub mod features;
pub mod neural;
pub mod prep;
pub mod rng;

pub use cropdist::{build_grid_index, neighborhood_distribution, DistributionVector, GridIndex};
pub use data::{
    build_sequences, load_dataset, season_of, Aggregated, Dataset, LabelTaxonomy, Level,
    ParcelRecord, ParcelSequence,
};
pub use error::{Error, Result};
pub use features::{season_features, truncate_at, SeasonFeatures};
pub use prep::{prep_season, RawSeries, Signal, SmoothSeries};
