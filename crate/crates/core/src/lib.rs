//! Mixed-precision QR factorization over simulated floating-point arithmetic.
//!
//! * [`floatsim`]: rounding to binary formats, mixed inner products and block FMAs.
//! * [`qr`]: Householder QR, blocked WY QR and tall-skinny QR over any [`ArithmeticContext`].
//! * [`mixed`]: mixed-precision strategies built from the above.
//! * [`bounds`]: deterministic rounding-error bounds and their measurable forms.
//! * [`harness`]: test-matrix generators, error measurement and experiment sweeps.

pub mod bounds;
pub mod error;
pub mod floatsim;
pub mod harness;
pub mod matrix;
pub mod mixed;
pub mod qr;

pub use error::{Error, Result};
pub use floatsim::{ArithmeticContext, FpFormat, Mode, OverflowPolicy, PrecisionPair, SimValue};
pub use matrix::Matrix;
