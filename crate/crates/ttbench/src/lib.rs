//! Benchmark front end: shape-string parsing, config-driven training
//! sweeps over kernel variants and rank caps, and Table-2-style reports
//! with flop accounting.

pub mod report;
pub mod shapes;
pub mod sweep;

pub use report::{SweepReport, SweepRow};
pub use shapes::{format_shape_string, parse_shape_string};
pub use sweep::{report_flops, run_sweep, Format, RunSpec, SweepOutcome, SweepSpec};
