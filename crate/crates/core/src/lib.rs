//! Meta-learned conditional generative networks for bivariate causal discovery.
//!
//! A single generator, conditioned on a learned dataset feature through FiLM
//! layers and an amortized latent, is trained jointly across many labelled
//! cause-effect datasets. A new pair is scored by how well the generator
//! reproduces it in each direction, measured by MMD.

pub mod baselines;
pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod datagen;
pub mod embeddings;
pub mod error;
pub mod generator;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod nn;
pub mod report;
pub mod rng;
pub mod trainer;
pub mod tuebingen;

pub use baselines::{BaselineConfig, Method};
pub use bench::run_benchmark;
pub use checkpoint::Checkpoint;
pub use config::{BenchConfig, BenchMethod, DataSource};
pub use data::{standardize, Direction, PairDataset};
pub use datagen::{CeDatabase, CeEntry, Family, NoiseMode, PairSpec};
pub use embeddings::{CmeConfig, CmeOperator, DatasetFeature, DeepSetsEncoder};
pub use error::{Error, Result};
pub use generator::{EncoderKind, GeneratorConfig, GeneratorModel, Variant};
pub use kernels::{BandwidthSet, MmdEstimator};
pub use nn::{Activation, AdamState, Mlp, MlpConfig, ParamTensor};
pub use report::{BenchmarkReport, DatasetRecord};
pub use trainer::{DecoderWidth, DirectionScore, Prediction, Sampler, TrainConfig, TrainedEnsemble};
pub use tuebingen::TuebingenPair;
