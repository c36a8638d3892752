//! Basis-expansion regression for tail models: formulas, design matrices,
//! quantile-regression thresholds and the penalized non-stationary GPD.

pub mod design;
pub mod formula;
pub mod gam;
pub mod spline;
pub mod threshold;

pub use design::{build_design, DesignMatrix, DesignSpec};
pub use formula::{Formula, FormulaSet, Term};
pub use gam::{fit_nonstationary_gpd, FitSpec, GpdFit, RowModel, Smoothing, ThresholdSpec};
pub use spline::CubicRegressionSpline;
pub use threshold::{fit_threshold_quantile, stepped_threshold, ThresholdModel};
