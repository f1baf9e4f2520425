//! Feature matrices, k-means, and pseudo-label routing.

mod features;
mod kmeans;
mod matching;
mod routing;

pub use features::{concat_normalized, l2_normalize, FeatureMatrix, FeatureSource};
pub use kmeans::{
    assign, distances_to_assigned, kmeans_fit, kmeans_from, kmeans_plus_plus, reassign_empty,
    squared_distance, ClusterModel, KMeansParams,
};
pub use matching::{best_matching, label_agreement};
pub use routing::{
    route_pseudo_labels, ClusteringOptions, FitRole, LabelStream, PseudoLabelSet, RoutedFit,
    Routing,
};
