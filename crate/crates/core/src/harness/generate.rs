//! Seeded test-matrix generators.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::floatsim::{FpFormat, OverflowPolicy};
use crate::matrix::Matrix;

/// A ChaCha8 stream: `seed` picks the key, `stream` the independent sub-sequence.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatrixKind {
    /// Entries drawn from N(0, 1).
    GaussianStd,
    /// Entries drawn from U[0, 1).
    Uniform01,
    /// `Q1 D Q2` with singular values `10^0 .. 10^-3` log-spaced.
    LogSpacedSV,
    /// `Q'(αE + I) / ‖Q'(αE + I)‖_F` with `E` all ones; 2-norm condition number `nα + 1`.
    Conditioned(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixSpec {
    pub kind: MatrixKind,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    /// Stream within `seed`; sweeps use it to separate shapes.
    pub stream: u64,
    pub storage: FpFormat,
}

impl MatrixSpec {
    pub fn new(kind: MatrixKind, m: usize, n: usize, seed: u64) -> MatrixSpec {
        MatrixSpec {
            kind,
            m,
            n,
            seed,
            stream: 0,
            storage: FpFormat::FP16,
        }
    }

    pub fn with_stream(mut self, stream: u64) -> MatrixSpec {
        self.stream = stream;
        self
    }

    pub fn with_storage(mut self, storage: FpFormat) -> MatrixSpec {
        self.storage = storage;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InvalidArgument("empty matrix".into()));
        }
        match self.kind {
            MatrixKind::LogSpacedSV | MatrixKind::Conditioned(_) if self.m < self.n => Err(
                Error::InvalidArgument(format!("{:?} needs m >= n", self.kind)),
            ),
            MatrixKind::LogSpacedSV if self.n < 2 => Err(Error::InvalidArgument(
                "log-spaced singular values need n >= 2".into(),
            )),
            MatrixKind::Conditioned(alpha) if alpha.is_nan() || alpha < 0.0 => Err(
                Error::InvalidArgument(format!("alpha must be >= 0, got {alpha}")),
            ),
            _ => Ok(()),
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(rng))
}

fn orthonormal_columns(a: DMatrix<f64>) -> DMatrix<f64> {
    a.qr().q()
}

/// The matrix before rounding to the storage format, in `f64`.
pub fn gen_matrix_exact(spec: &MatrixSpec) -> Result<Matrix> {
    spec.validate()?;
    let (m, n) = (spec.m, spec.n);
    let mut rng = rng_for(spec.seed, spec.stream);
    let a = match spec.kind {
        MatrixKind::GaussianStd => gaussian(&mut rng, m, n),
        MatrixKind::Uniform01 => DMatrix::from_fn(m, n, |_, _| rng.random::<f64>()),
        MatrixKind::LogSpacedSV => {
            let q1 = orthonormal_columns(gaussian(&mut rng, m, n));
            let q2 = orthonormal_columns(gaussian(&mut rng, n, n));
            let d = DMatrix::from_diagonal(&log_spaced_singular_values(n).into());
            q1 * d * q2
        }
        MatrixKind::Conditioned(alpha) => {
            let q = orthonormal_columns(DMatrix::from_fn(m, n, |_, _| rng.random::<f64>()));
            let core = DMatrix::from_element(n, n, alpha) + DMatrix::identity(n, n);
            let a = q * core;
            let norm = a.norm();
            a / norm
        }
    };
    Ok(Matrix::from_nalgebra(&a))
}

/// The generated matrix rounded to `spec.storage`.
pub fn gen_matrix(spec: &MatrixSpec) -> Result<Matrix> {
    gen_matrix_exact(spec)?.try_map(|x| spec.storage.round(x, OverflowPolicy::Signal))
}

/// `10^(-3 i / (n - 1))` for `i = 0..n`.
pub fn log_spaced_singular_values(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 10f64.powf(-3.0 * i as f64 / (n - 1) as f64))
        .collect()
}
