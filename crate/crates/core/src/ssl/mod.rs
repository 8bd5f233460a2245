//! Stacked sequential learning: fold-wise auxiliary base classifiers,
//! neighbourhood score features and the stacked classifier.

mod folds;
mod neighborhood;
mod train;

pub use folds::{make_fold_plan, FoldPlan};
pub use neighborhood::{
    augment, build_track, gather_neighbor_scores, FlowSource, GridAnchor, NeighborhoodSpec, NoFlow, Reading,
    TemporalStyle, VolumeMode, WindowTrack,
};
pub use train::{train_ssl, train_ssl_from_base, AugmentedSample, SslConfig, SslModels, SslReport};
