//! Per-layer neural collapse metrics and the activation-dump file format.

mod collapse;
mod dump;

pub use crate::linalg::ClassStatistics;
pub use collapse::{
    analyze_layer, analyze_selected, nc1, nc2_equal_norms, nc2_max_angles, nc4, nearest_class_mean,
    subsample_coordinates, AnalysisOptions, CoordinateSubsample, LayerMetrics,
};
pub use dump::{read_dump, write_dump, ActivationDump, DumpDtype};
