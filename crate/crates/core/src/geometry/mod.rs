//! Finite point-set geometry: metrics, separated sets and covers, chaining
//! decompositions, support functions and Gaussian mean width.

pub mod decomposition;
pub mod packing;
pub mod profile;
pub mod universe;
pub mod width;

pub use decomposition::{
    chaining_decomposition, default_delta, level_count, Decomposition, DecompositionExport,
    DecompositionViolation,
};
pub use packing::{
    exact_packing, greedy_separated_set, is_cover, is_separated, nearest_point_map,
    packing_number, InsertionOrder, PackingMode, SeparatedSet, DEFAULT_EXACT_CAP,
};
pub use profile::{packing_profile, scale_grid, ProfilePoint};
pub use universe::{diameter, metric_diameter, pairwise_distance, MetricKind, Norm, Universe};
pub use width::{coarse_dudley_bound, gaussian_mean_width, support_function, WidthEstimate};
