//! Input-gradient saliency and its scalp rendering.

mod saliency;
mod topomap;

pub use saliency::{saliency_map, SaliencyMap};
pub use topomap::{palette_color, project_topomap};
