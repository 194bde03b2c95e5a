//! Observation model: data panel, component predictors, parameter layout and
//! the count distribution family.

pub mod data;
pub mod family;
pub mod layout;
pub mod mean;
pub mod spec;

pub use data::SurveillanceCounts;
pub use family::{cdf, log_pmf, Family};
pub use layout::{Layout, ParamInfo, ParamRole, ParameterVector, Transform};
pub use mean::{conditional_mean, design_row};
pub use spec::{Component, ComponentSpec, InterceptKind, ModelSpec};
