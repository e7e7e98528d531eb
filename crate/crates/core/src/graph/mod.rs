//! Electrode graphs: montage geometry, adjacency priors and normalization,
//! graph convolution and the multi-depth pyramid built from it.

mod adjacency;
mod gcn;
mod layout;

pub use adjacency::{
    build_prior_adjacency, negative_degree_events, normalize_adjacency, preprocess_prior,
};
pub use gcn::{hgp_forward, write_matrix_csv, AdjacencySpec, GcnBranch};
pub use layout::ElectrodeLayout;

/// Neighbour radius used for both the adjacency prior and the Laplacian.
pub const NEIGHBOR_RADIUS_MM: f64 = 30.0;
