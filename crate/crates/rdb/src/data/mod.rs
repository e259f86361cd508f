//! Dataset ingestion, normalization, world-state assembly, and windowing.

mod dataset;
mod types;
mod window;
mod world;

pub use dataset::{load_annotations, DatasetManifest, TrajectoryDataset};
pub use types::{AgentState, TrajectoryWindow, WindowConfig, WorldState};
pub use window::{frame_chunks, leave_one_out_split, window_split};
pub use world::{build_world_states, TruncationWarning};
