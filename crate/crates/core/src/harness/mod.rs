//! Test-matrix generators, error measurement and the experiment drivers.

pub mod csvio;
pub mod experiments;
pub mod generate;
pub mod measure;

pub use experiments::{
    run_block_sweep, run_condition_sweep, run_dot_experiment, run_size_sweep, Distribution,
    DotArithmetic, DotSummary, SweepConfig, SweepRow,
};
pub use generate::{gen_matrix, gen_matrix_exact, MatrixKind, MatrixSpec};
pub use measure::{measure, ErrorReport};
