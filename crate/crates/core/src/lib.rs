//! Sports-video augmentation engine: shot segmentation, non-local highlight
//! scoring, narrative gap analysis, manga B-roll generation, four-track
//! timeline scheduling and deterministic rendering.
//!
//! The crate is organised by pipeline stage. [`pipeline::run`] wires the
//! stages together; each stage is usable on its own.

pub mod broll;
pub mod frame;
pub mod genai;
pub mod highlight;
pub mod media;
pub mod narrative;
pub mod pipeline;
pub mod render;
pub mod shots;
pub mod synth;
pub mod timeline;

mod digest;

pub use digest::{sha256_hex, Sha256Writer};
pub use frame::{round_half_up, Frame};
