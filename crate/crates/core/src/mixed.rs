//! Mixed-precision QR strategies over a (low, high) precision pair.
//!
//! | strategy              | factorization                      | level-3 products         |
//! |-----------------------|------------------------------------|--------------------------|
//! | `hqr_high_castdown`   | HQR entirely in high               | none, factors cast down  |
//! | `mp_hqr2`             | HQR, mixed inner products          | none                     |
//! | `mp_bqr2`             | BQR, mixed inner products          | mixed inner products     |
//! | `mp_tsqr2`            | TSQR, mixed inner products         | none                     |
//! | `mp_bqr3`             | panels in high, WY cast down       | block FMA                |
//! | `mp_tsqr3`            | tree nodes in high, WY cast down   | block FMA                |
//!
//! A degenerate pair `(q, q)` runs the matching uniform algorithm in `q`.

use crate::bounds::{Algorithm, Regime};
use crate::error::{Error, Result};
use crate::floatsim::{ArithmeticContext, Mode, OverflowPolicy, PrecisionPair};
use crate::matrix::Matrix;
use crate::qr::{self, QApply, QrFactors};

/// The contexts one mixed-precision run needs, sharing an overflow policy.
#[derive(Debug)]
pub struct MixedQr {
    pair: PrecisionPair,
    low: ArithmeticContext,
    high: ArithmeticContext,
    /// `None` for a degenerate pair.
    inner: Option<ArithmeticContext>,
    fma: Option<ArithmeticContext>,
}

impl MixedQr {
    pub fn new(pair: PrecisionPair, policy: OverflowPolicy) -> Result<MixedQr> {
        let uniform = |f| ArithmeticContext::new(Mode::Uniform(f), policy);
        let (inner, fma) = if pair.is_degenerate() {
            (None, None)
        } else {
            (
                Some(ArithmeticContext::new(Mode::MixedInner(pair), policy)?),
                Some(ArithmeticContext::new(Mode::BlockFma(pair), policy)?),
            )
        };
        Ok(MixedQr {
            pair,
            low: uniform(pair.low())?,
            high: uniform(pair.high())?,
            inner,
            fma,
        })
    }

    pub fn pair(&self) -> PrecisionPair {
        self.pair
    }

    /// Values clamped so far across all contexts.
    pub fn saturations(&self) -> usize {
        [
            Some(&self.low),
            Some(&self.high),
            self.inner.as_ref(),
            self.fma.as_ref(),
        ]
        .into_iter()
        .flatten()
        .map(ArithmeticContext::saturations)
        .sum()
    }

    fn inner(&self) -> &ArithmeticContext {
        self.inner.as_ref().unwrap_or(&self.low)
    }

    /// HQR and `Q` formation in high; both factors cast down once.
    pub fn hqr_high_castdown(&self, a: &Matrix) -> Result<QrFactors> {
        let a = self.low.castdown(a)?;
        let f = qr::hqr(&a, &self.high)?;
        let q = qr::build_q(&f, true, &self.high)?;
        Ok(QrFactors {
            q: self.low.castdown(&q)?,
            r: self.low.castdown(&f.r)?,
        })
    }

    pub fn mp_hqr2(&self, a: &Matrix) -> Result<QrFactors> {
        let ctx = self.inner();
        let f = qr::hqr(a, ctx)?;
        let q = qr::build_q(&f, true, ctx)?;
        Ok(QrFactors { q, r: f.r })
    }

    pub fn mp_bqr2(&self, a: &Matrix, r: usize) -> Result<QrFactors> {
        qr::bqr(a, r, self.inner())
    }

    pub fn mp_tsqr2(&self, a: &Matrix, levels: u32) -> Result<QrFactors> {
        qr::tsqr(a, levels, self.inner())
    }

    pub fn mp_bqr3(&self, a: &Matrix, r: usize) -> Result<QrFactors> {
        match &self.fma {
            Some(fma) => qr::bqr_with(a, r, &self.high, fma),
            None => qr::bqr(a, r, &self.low),
        }
    }

    pub fn mp_tsqr3(&self, a: &Matrix, levels: u32) -> Result<QrFactors> {
        match &self.fma {
            Some(fma) => qr::tsqr_with(a, levels, &self.high, fma, QApply::Wy),
            None => qr::tsqr(a, levels, &self.low),
        }
    }
}

/// A factorization together with the number of values clamped while computing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub factors: QrFactors,
    pub saturations: usize,
}

/// Runs `algorithm` in `regime`.
///
/// `HighThenCastdown` runs the uniform algorithm in high and casts both factors
/// down; HQR has no block-FMA form, so `(Hqr, Mixed3)` is rejected.
pub fn factor(
    a: &Matrix,
    algorithm: Algorithm,
    regime: Regime,
    policy: OverflowPolicy,
) -> Result<Factorization> {
    let uniform = |a: &Matrix, ctx: &ArithmeticContext| -> Result<QrFactors> {
        match algorithm {
            Algorithm::Hqr => {
                let f = qr::hqr(a, ctx)?;
                let q = qr::build_q(&f, true, ctx)?;
                Ok(QrFactors { q, r: f.r })
            }
            Algorithm::Bqr { r } => qr::bqr(a, r, ctx),
            Algorithm::Tsqr { levels } => qr::tsqr(a, levels, ctx),
        }
    };
    match regime {
        Regime::Uniform(fmt) => {
            let ctx = ArithmeticContext::new(Mode::Uniform(fmt), policy)?;
            let factors = uniform(a, &ctx)?;
            Ok(Factorization {
                factors,
                saturations: ctx.saturations(),
            })
        }
        Regime::HighThenCastdown(pair) => {
            let mp = MixedQr::new(pair, policy)?;
            let f = uniform(&mp.low.castdown(a)?, &mp.high)?;
            let factors = QrFactors {
                q: mp.low.castdown(&f.q)?,
                r: mp.low.castdown(&f.r)?,
            };
            Ok(Factorization {
                factors,
                saturations: mp.saturations(),
            })
        }
        Regime::Mixed2(pair) => {
            let mp = MixedQr::new(pair, policy)?;
            let factors = match algorithm {
                Algorithm::Hqr => mp.mp_hqr2(a)?,
                Algorithm::Bqr { r } => mp.mp_bqr2(a, r)?,
                Algorithm::Tsqr { levels } => mp.mp_tsqr2(a, levels)?,
            };
            Ok(Factorization {
                factors,
                saturations: mp.saturations(),
            })
        }
        Regime::Mixed3(pair) => {
            let mp = MixedQr::new(pair, policy)?;
            let factors = match algorithm {
                Algorithm::Hqr => {
                    return Err(Error::InvalidArgument(
                        "HQR has no block-FMA variant".into(),
                    ))
                }
                Algorithm::Bqr { r } => mp.mp_bqr3(a, r)?,
                Algorithm::Tsqr { levels } => mp.mp_tsqr3(a, levels)?,
            };
            Ok(Factorization {
                factors,
                saturations: mp.saturations(),
            })
        }
    }
}

pub fn hqr_high_castdown(a: &Matrix, pair: PrecisionPair) -> Result<QrFactors> {
    MixedQr::new(pair, OverflowPolicy::Signal)?.hqr_high_castdown(a)
}

pub fn mp_hqr2(a: &Matrix, pair: PrecisionPair) -> Result<QrFactors> {
    MixedQr::new(pair, OverflowPolicy::Signal)?.mp_hqr2(a)
}

pub fn mp_bqr2(a: &Matrix, r: usize, pair: PrecisionPair) -> Result<QrFactors> {
    MixedQr::new(pair, OverflowPolicy::Signal)?.mp_bqr2(a, r)
}

pub fn mp_tsqr2(a: &Matrix, levels: u32, pair: PrecisionPair) -> Result<QrFactors> {
    MixedQr::new(pair, OverflowPolicy::Signal)?.mp_tsqr2(a, levels)
}

pub fn mp_bqr3(a: &Matrix, r: usize, pair: PrecisionPair) -> Result<QrFactors> {
    MixedQr::new(pair, OverflowPolicy::Signal)?.mp_bqr3(a, r)
}

pub fn mp_tsqr3(a: &Matrix, levels: u32, pair: PrecisionPair) -> Result<QrFactors> {
    MixedQr::new(pair, OverflowPolicy::Signal)?.mp_tsqr3(a, levels)
}
