//! Deterministic rounding-error bounds for the QR variants in this crate.
//!
//! All bounds are built from `γ̃_k = cku / (1 - cku)` and evaluated in `f64`.
//! A bound whose constituent terms all satisfy `cku < 1/2` is flagged stable;
//! a term with `cku >= 1` has no finite value and yields [`Error::Domain`].

use std::io::Write;

use crate::error::{Error, Result};
use crate::floatsim::{FpFormat, PrecisionPair};

/// `γ̃_k` for `k` accumulated operations at unit round-off `u`, with constant `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaTerm {
    pub k: f64,
    pub u: f64,
    pub c: f64,
}

/// A bound value together with its stability flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub value: f64,
    pub stable: bool,
}

impl Bound {
    fn scale(self, s: f64) -> Bound {
        Bound {
            value: self.value * s,
            stable: self.stable,
        }
    }

    fn plus(self, other: Bound) -> Bound {
        Bound {
            value: self.value + other.value,
            stable: self.stable && other.stable,
        }
    }
}

impl GammaTerm {
    pub fn new(k: f64, u: f64) -> GammaTerm {
        GammaTerm { k, u, c: 1.0 }
    }

    pub fn with_c(k: f64, u: f64, c: f64) -> GammaTerm {
        GammaTerm { k, u, c }
    }

    pub fn eval(&self) -> Result<Bound> {
        gamma(self.k, self.u, self.c)
    }
}

/// `cku / (1 - cku)`; unstable once `cku >= 1/2`, undefined once `cku >= 1`.
pub fn gamma(k: f64, u: f64, c: f64) -> Result<Bound> {
    if !(k >= 0.0 && u > 0.0 && c > 0.0) {
        return Err(Error::Domain(format!(
            "gamma needs k >= 0, u > 0, c > 0 (k={k}, u={u}, c={c})"
        )));
    }
    let x = c * k * u;
    if x >= 1.0 {
        return Err(Error::Domain(format!("c*k*u = {x} >= 1")));
    }
    Ok(Bound {
        value: x / (1.0 - x),
        stable: x < 0.5,
    })
}

/// A sum of gamma terms, the result of combining errors of several precisions.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSum {
    pub terms: Vec<GammaTerm>,
}

impl GammaSum {
    /// `Σ γ̃`, the first-order form with cross terms absorbed.
    pub fn value(&self) -> Result<f64> {
        self.terms.iter().map(|t| t.eval().map(|b| b.value)).sum()
    }

    /// `Π (1 + γ̃) - 1`, the exact composition.
    pub fn compounded(&self) -> Result<f64> {
        let mut p = 1.0;
        for t in &self.terms {
            p *= 1.0 + t.eval()?.value;
        }
        Ok(p - 1.0)
    }
}

/// Composes `(1 + γ_a)(1 + γ_b) - 1`.
///
/// Terms sharing `u` and `c` merge into `γ_{k_a + k_b}`; terms of different
/// precision stay as a two-term sum. Both inputs must be stable.
pub fn gamma_combine(a: GammaTerm, b: GammaTerm) -> Result<GammaSum> {
    for t in [a, b] {
        if !t.eval()?.stable {
            return Err(Error::Domain(format!(
                "gamma_{} at u={} is unstable",
                t.k, t.u
            )));
        }
    }
    if a.u == b.u && a.c == b.c {
        let merged = GammaTerm::with_c(a.k + b.k, a.u, a.c);
        merged.eval()?;
        return Ok(GammaSum {
            terms: vec![merged],
        });
    }
    Ok(GammaSum { terms: vec![a, b] })
}

/// `γ_a γ_b <= min(γ_a, γ_b)` for stable terms.
pub fn gamma_product(a: GammaTerm, b: GammaTerm) -> Result<f64> {
    let (ga, gb) = (a.eval()?, b.eval()?);
    if !(ga.stable && gb.stable) {
        return Err(Error::Domain("product rule needs stable terms".into()));
    }
    Ok((ga.value * gb.value).min(ga.value.min(gb.value)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Hqr,
    Bqr { r: usize },
    Tsqr { levels: u32 },
}

/// Which arithmetic the factorization ran in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Uniform(FpFormat),
    /// Mixed inner products, everything else in low.
    Mixed2(PrecisionPair),
    /// Panels in high, level-3 updates through block FMAs.
    Mixed3(PrecisionPair),
    /// Everything in high, factors cast down at the end.
    HighThenCastdown(PrecisionPair),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSpec {
    pub algorithm: Algorithm,
    pub regime: Regime,
    pub m: usize,
    pub n: usize,
    /// The constant inside every `γ̃`.
    pub c: f64,
}

impl BoundSpec {
    pub fn new(algorithm: Algorithm, regime: Regime, m: usize, n: usize) -> BoundSpec {
        BoundSpec {
            algorithm,
            regime,
            m,
            n,
            c: 1.0,
        }
    }

    pub fn with_c(mut self, c: f64) -> BoundSpec {
        self.c = c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = (self.m, self.n);
        if n == 0 || m < n {
            return Err(Error::InvalidArgument(format!(
                "need m >= n >= 1, got {m}x{n}"
            )));
        }
        if self.c.is_nan() || self.c <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "c must be positive, got {}",
                self.c
            )));
        }
        match self.algorithm {
            Algorithm::Hqr => {
                if let Regime::Mixed3(_) = self.regime {
                    return Err(Error::InvalidArgument(
                        "HQR has no block-FMA variant".into(),
                    ));
                }
            }
            Algorithm::Bqr { r } => {
                if r == 0 || r > n {
                    return Err(Error::InvalidArgument(format!(
                        "block width {r} outside 1..={n}"
                    )));
                }
            }
            Algorithm::Tsqr { levels } => {
                let fits = (1..63).contains(&levels)
                    && (1usize << levels)
                        .checked_mul(n)
                        .is_some_and(|need| m >= need);
                if !fits {
                    return Err(Error::InvalidLevels { m, n, levels });
                }
            }
        }
        Ok(())
    }

    fn g(&self, k: f64, fmt: FpFormat) -> Result<Bound> {
        gamma(k, fmt.unit_roundoff(), self.c)
    }

    /// Columnwise coefficient of the high (or uniform) precision part, `n γ̃_m`
    /// for HQR/BQR and `n (γ̃_{m'} + L γ̃_{2n})` for TSQR with leaf height `m'`.
    fn structural(&self, fmt: FpFormat) -> Result<Bound> {
        let (m, n) = (self.m as f64, self.n as f64);
        match self.algorithm {
            Algorithm::Hqr | Algorithm::Bqr { .. } => Ok(self.g(m, fmt)?.scale(n)),
            Algorithm::Tsqr { levels } => {
                let leaf = self.m.div_ceil(1 << levels) as f64;
                let tree = self.g(2.0 * n, fmt)?.scale(levels as f64);
                Ok(self.g(leaf, fmt)?.plus(tree).scale(n))
            }
        }
    }

    /// Low-precision part of the columnwise coefficient in the mixed regimes.
    fn low_part(&self, pair: PrecisionPair, level3: bool) -> Result<Bound> {
        let n = self.n as f64;
        let low = pair.low();
        match (self.algorithm, level3) {
            (Algorithm::Hqr, false) => self.g(10.0 * n, low),
            (Algorithm::Bqr { r }, false) => {
                let blocks = self.n.div_ceil(r) as f64;
                Ok(self.g(10.0 * r as f64, low)?.scale(blocks))
            }
            (Algorithm::Tsqr { levels }, false) => {
                Ok(self.g(10.0 * n, low)?.scale(levels as f64 + 1.0))
            }
            (Algorithm::Bqr { r }, true) => self.g(self.n.div_ceil(r) as f64, low),
            (Algorithm::Tsqr { levels }, true) => self.g(levels as f64 + 1.0, low),
            (Algorithm::Hqr, true) => Err(Error::InvalidArgument(
                "HQR has no block-FMA variant".into(),
            )),
        }
    }
}

/// Columnwise coefficient `ε` with `‖ΔR[:, j]‖ <= ε ‖A[:, j]‖` (also the per-column `Q` error).
pub fn column_coefficient(spec: &BoundSpec) -> Result<Bound> {
    spec.validate()?;
    match spec.regime {
        Regime::Uniform(fmt) => spec.structural(fmt),
        Regime::Mixed2(pair) => Ok(spec
            .low_part(pair, false)?
            .plus(spec.structural(pair.high())?)),
        Regime::Mixed3(pair) => Ok(spec
            .low_part(pair, true)?
            .plus(spec.structural(pair.high())?)),
        Regime::HighThenCastdown(pair) => {
            let ul = pair.low().unit_roundoff();
            let h = spec.structural(pair.high())?;
            Ok(Bound {
                value: ul + h.value + ul * h.value,
                stable: h.stable,
            })
        }
    }
}

/// Bound on `‖ΔR[:, j]‖_2` for a column of `A` with 2-norm `column_norm`.
pub fn bound_r_column(spec: &BoundSpec, column_norm: f64) -> Result<Bound> {
    Ok(column_coefficient(spec)?.scale(column_norm))
}

/// Bound on `‖Q̂ - Q‖_F`.
pub fn bound_q(spec: &BoundSpec) -> Result<Bound> {
    let n = spec.n as f64;
    Ok(column_coefficient(spec)?.scale(n.sqrt()))
}

/// Measurable forms of the forward bounds: `(backward, orthogonality)` with
/// `backward = √n (ε_R + ε_Q + ε_R ε_Q)` and `orthogonality = 2 ε_Q`.
pub fn convert_to_measurables(eps_r: f64, eps_q: f64, n: usize) -> (f64, f64) {
    let backward = (n as f64).sqrt() * (eps_r + eps_q + eps_r * eps_q);
    (backward, 2.0 * eps_q)
}

/// `(backward, orthogonality)` bounds for a spec, with `ε_R` the columnwise
/// coefficient and `ε_Q` the Frobenius bound on `Q`.
pub fn measurable_bounds(spec: &BoundSpec) -> Result<(Bound, Bound)> {
    let col = column_coefficient(spec)?;
    let q = bound_q(spec)?;
    let (backward, orth) = convert_to_measurables(col.value, q.value, spec.n);
    let stable = col.stable && q.stable;
    Ok((
        Bound {
            value: backward,
            stable,
        },
        Bound {
            value: orth,
            stable,
        },
    ))
}

/// The factor `(L+1) / (n (2^-L m + 2nL))` by which the block-FMA TSQR bound
/// exceeds its high-precision part, per unit of `u_low / u_high`.
pub fn tsqr3_excess_factor(m: usize, n: usize, levels: u32) -> f64 {
    let (m, n, l) = (m as f64, n as f64, levels as f64);
    (l + 1.0) / (n * (m / 2f64.powi(levels as i32) + 2.0 * n * l))
}

/// Schemes covered by [`feasibility_map`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Hqr,
    Tsqr { levels: u32 },
}

/// One cell of the feasibility grid: `None` when the shape is illegal or the
/// bound is undefined or at least one, else `log10` of the `Q` bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityCell {
    pub m: usize,
    pub n: usize,
    pub log10_bound: Option<f64>,
}

pub fn feasibility_map(
    scheme: Scheme,
    fmt: FpFormat,
    c: f64,
    m_values: &[usize],
    n_values: &[usize],
) -> Vec<FeasibilityCell> {
    let algorithm = match scheme {
        Scheme::Hqr => Algorithm::Hqr,
        Scheme::Tsqr { levels } => Algorithm::Tsqr { levels },
    };
    let mut cells = Vec::with_capacity(m_values.len() * n_values.len());
    for &m in m_values {
        for &n in n_values {
            let spec = BoundSpec::new(algorithm, Regime::Uniform(fmt), m, n).with_c(c);
            let log10_bound = bound_q(&spec)
                .ok()
                .filter(|b| b.value < 1.0)
                .map(|b| b.value.log10());
            cells.push(FeasibilityCell { m, n, log10_bound });
        }
    }
    cells
}

/// Writes cells as `m n value` lines, `inf` marking infeasible cells.
pub fn write_feasibility(cells: &[FeasibilityCell], mut out: impl Write) -> Result<()> {
    writeln!(out, "m n value")?;
    for cell in cells {
        match cell.log10_bound {
            Some(v) => writeln!(out, "{} {} {}", cell.m, cell.n, v)?,
            None => writeln!(out, "{} {} inf", cell.m, cell.n)?,
        }
    }
    Ok(())
}
