//! Feature engineering: session geometry, ReLU splines, standardization and
//! block-factored design matrices for the five regressions.

pub mod calendar;
mod design;
mod layout;
mod scaler;
mod spec;
mod spline;

pub use calendar::{session_length, sidc_flags, SidcFlags};
pub use design::{hour_slots, DesignMatrix, LagSource, RowSet};
pub use layout::{Column, Equation, Group, Level, Registry};
pub use scaler::Standardizer;
pub use spec::{FeatureConfig, FeatureSpec, DOW_NAMES, LAGS};
pub use spline::{relu_basis, ReluSplineSpec};
