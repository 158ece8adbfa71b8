//! Market objects on tenor grids, anchor layouts, CSV histories,
//! normalization and synthetic curve generation.

pub mod anchors;
pub mod history;
pub mod normalizer;
pub mod synthetic;
pub mod tenor;

pub use anchors::{default_anchor_layout, AnchorLayout, AnchorLayoutFile};
pub use history::{load_history, save_history, CsvFormat, CurveHistory, MarketObject, ValueUnits};
pub use normalizer::{fit_normalizer, Normalizer};
pub use synthetic::{generate_synthetic_history, ns_yield, NelsonSiegelParams, NsFactors, SyntheticHistory};
pub use tenor::{parse_tenor, TenorGrid, STANDARD_TENORS};
