//! Diagonal scan orders, the selective state-space recurrence and the VSS
//! Scan block built on them.

mod order;
mod selective;
mod vss;

pub use order::{ScanOrder, ScanVariant};
pub use selective::{selective_scan, ss2d_diagonal, ss2d_path, SsmParams};
pub use vss::VssScanBlock;
