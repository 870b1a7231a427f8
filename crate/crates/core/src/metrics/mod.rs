//! Per-example and aggregate evaluation metrics.

pub mod diversity;
pub mod external;
pub mod feature;
