//! In-vitro bleeding experiment simulator.
//!
//! A well-stirred beaker receives either blood or a non-blood interference
//! mixture from a syringe pump. Each acquisition cycle reads the 12-channel
//! sensor under two illumination states, giving a 24-value [`SpectralFrame`].

mod acquire;
mod dataset;
mod io;
mod physics;
mod tank;
mod types;
mod window;

pub use acquire::{default_optics, medium_background, Simulator, MEDIUM_SGF, MEDIUM_WATER};
pub use dataset::{generate_dataset, DatasetBundle, DatasetConfig, ManifestEntry, Split, DEFAULT_MIXTURES};
pub use io::{frames_csv, read_dataset, read_frames_csv, read_recording_csv, write_dataset, write_recording_csv};
pub use physics::{physics_check, PhysicsCheck, RatioSeries};
pub use tank::{concentration_at, euler_concentration};
pub use types::{
    FlowClass, Infusate, InfusionScenario, NoiseModel, Recording, SpectralFrame, Window, FRAME_CHANNELS,
    SCHEMA_VERSION, WINDOW_STEPS,
};
pub use window::windowize;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("recording has {got} samples; at least {need} required")]
    TooShort { got: usize, need: usize },
    #[error("window stride must be at least 1")]
    BadStride,
    #[error("unknown interference mixture `{0}`")]
    UnknownMixture(String),
    #[error("invalid dataset config: {0}")]
    InvalidConfig(String),
    #[error("malformed file {path}: {msg}")]
    Format { path: String, msg: String },
    #[error(transparent)]
    Spectral(#[from] crate::spectral::SpectralError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Derives a well-mixed 64-bit seed from a parent seed and a stream index.
pub fn derive_seed(parent: u64, stream: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(parent ^ splitmix(stream.wrapping_add(0x5851_F42D_4C95_7F2D)))
}
