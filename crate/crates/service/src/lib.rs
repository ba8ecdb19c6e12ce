//! Local HTTP service and command-line front end for the mangaroll
//! pipeline.

pub mod api;
pub mod cli;
mod error;
mod idempotency;
pub mod jobs;
pub mod store;

pub use api::{router, AppState};
pub use error::ApiError;
pub use jobs::{JobKind, JobRegistry, JobState, JobStatus};
pub use store::ProjectStore;

/// Port used when neither `--port` nor `MANGAROLL_PORT` is given.
pub const DEFAULT_PORT: u16 = 8787;
