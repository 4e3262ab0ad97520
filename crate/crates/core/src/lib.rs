//! Multilevel polar coded modulation over space-time block codes: channel
//! model, code families, set-partition labelling, information measures,
//! polar multilevel coding with multistage decoding, and the design search.

pub mod channel;
pub mod error;
pub mod harness;
pub mod infotheory;
pub mod linalg;
pub mod mapping;
pub mod mlc;
pub mod optimizer;
pub mod polar;
pub mod rng;
pub mod special;
pub mod stbc;

pub use channel::{sample_channel_batch, sample_noise, ChannelBatch, NoiseSpec};
pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, C64, J};
pub use mapping::{Constellation, ConstellationKind, Measure, MeasureContext, SetPartitionMap};
pub use stbc::{build_stbc, enumerate_codebook, Codebook, Family, StbcSpec};
