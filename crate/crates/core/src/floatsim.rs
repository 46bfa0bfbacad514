//! Software emulation of binary floating-point formats on an `f64` carrier.
//!
//! Every simulated value is an `f64` that lies exactly on the grid of its
//! format. An operation is evaluated once in `f64` and rounded to the target
//! grid. For formats with `t <= 25` the `f64` result is itself correctly
//! rounded with `53 >= 2t + 2` bits, so the second rounding cannot change the
//! outcome for `+ - * /` and `sqrt`. `fp64` is the carrier and is never rounded.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A binary floating-point number system.
///
/// Normal numbers are `m * 2^e` with `1 <= m < 2` and `emin <= e <= emax`;
/// `t` counts significand bits including the implicit one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FpFormat {
    name: &'static str,
    t: u32,
    emin: i32,
    emax: i32,
}

impl FpFormat {
    pub const FP16: FpFormat = FpFormat {
        name: "fp16",
        t: 11,
        emin: -14,
        emax: 15,
    };
    pub const FP32: FpFormat = FpFormat {
        name: "fp32",
        t: 24,
        emin: -126,
        emax: 127,
    };
    pub const FP64: FpFormat = FpFormat {
        name: "fp64",
        t: 53,
        emin: -1022,
        emax: 1023,
    };

    /// Builds a user-defined format.
    ///
    /// Only `2 <= t <= 25` is accepted (double rounding through the carrier is
    /// exact there) and the exponent range is limited to `[-480, 480]` so that
    /// products and quotients of representable values stay normal in `f64`.
    pub fn custom(name: &'static str, t: u32, emin: i32, emax: i32) -> Result<FpFormat> {
        if !(2..=25).contains(&t) {
            return Err(Error::InvalidArgument(format!(
                "precision t={t} outside the emulated range 2..=25"
            )));
        }
        if emin >= emax || emin < -480 || emax > 480 {
            return Err(Error::InvalidArgument(format!(
                "exponent range [{emin}, {emax}] outside [-480, 480]"
            )));
        }
        Ok(FpFormat {
            name,
            t,
            emin,
            emax,
        })
    }

    pub fn by_name(name: &str) -> Option<FpFormat> {
        match name.to_ascii_lowercase().as_str() {
            "fp16" | "half" | "binary16" => Some(Self::FP16),
            "fp32" | "single" | "binary32" => Some(Self::FP32),
            "fp64" | "double" | "binary64" => Some(Self::FP64),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn base(&self) -> u32 {
        2
    }

    pub fn precision(&self) -> u32 {
        self.t
    }

    pub fn emin(&self) -> i32 {
        self.emin
    }

    pub fn emax(&self) -> i32 {
        self.emax
    }

    /// `u = 2^-t`.
    pub fn unit_roundoff(&self) -> f64 {
        pow2(-(self.t as i32))
    }

    pub fn max_finite(&self) -> f64 {
        (2.0 - pow2(1 - self.t as i32)) * pow2(self.emax)
    }

    pub fn min_normal(&self) -> f64 {
        pow2(self.emin)
    }

    pub fn min_subnormal(&self) -> f64 {
        pow2(self.emin + 1 - self.t as i32)
    }

    fn is_carrier(&self) -> bool {
        self.t == 53
    }

    /// Whether `x` is a finite member of this format.
    pub fn contains(&self, x: f64) -> bool {
        x.is_finite() && matches!(self.round_raw(x), Rounded::Finite(r) if r == x)
    }

    /// Splits a representable `x` into `(negative, mu, eta)` with
    /// `|x| = mu * 2^(eta - t)`, `0 <= mu < 2^t` and `emin + 1 <= eta <= emax + 1`.
    /// Returns `None` when `x` is not a finite member of the format.
    pub fn decompose(&self, x: f64) -> Option<(bool, u64, i32)> {
        if !self.contains(x) {
            return None;
        }
        let t = self.t as i32;
        let e = exponent_of(x).max(self.emin);
        let eta = e + 1;
        let mu = (x.abs() * pow2(t - eta)) as u64;
        Some((x.is_sign_negative(), mu, eta))
    }

    /// Round-to-nearest-even onto this format's grid, without an overflow policy.
    fn round_raw(&self, x: f64) -> Rounded {
        if x.is_nan() {
            return Rounded::NotANumber;
        }
        if x.is_infinite() {
            return Rounded::Overflow;
        }
        if self.is_carrier() || x == 0.0 {
            return Rounded::Finite(x);
        }
        if *self == Self::FP32 {
            let r = x as f32;
            return if r.is_finite() {
                Rounded::Finite(r as f64)
            } else {
                Rounded::Overflow
            };
        }
        let e = exponent_of(x);
        if e > self.emax {
            return Rounded::Overflow;
        }
        // Grid spacing at x is 2^q; adding and removing 1.5 * 2^(q+52) leaves
        // f64's own round-to-nearest-even to pick the neighbour.
        let q = e.max(self.emin) + 1 - self.t as i32;
        let shift = 1.5 * pow2(q + 52);
        let r = if x > 0.0 {
            (x + shift) - shift
        } else {
            (x - shift) + shift
        }
        .copysign(x);
        if r.abs() > self.max_finite() {
            Rounded::Overflow
        } else {
            Rounded::Finite(r)
        }
    }

    /// Rounds `x` into this format under `policy`.
    pub fn round(&self, x: f64, policy: OverflowPolicy) -> Result<f64> {
        self.round_counted(x, policy).map(|(r, _)| r)
    }

    /// As [`FpFormat::round`], also reporting whether saturation took place.
    fn round_counted(&self, x: f64, policy: OverflowPolicy) -> Result<(f64, bool)> {
        match self.round_raw(x) {
            Rounded::Finite(r) => Ok((r, false)),
            Rounded::NotANumber => Err(Error::NotANumber),
            Rounded::Overflow => match policy {
                OverflowPolicy::Signal => Err(Error::Overflow {
                    value: x,
                    format: *self,
                }),
                OverflowPolicy::Saturate => Ok((self.max_finite().copysign(x), true)),
            },
        }
    }
}

impl fmt::Display for FpFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

enum Rounded {
    Finite(f64),
    Overflow,
    NotANumber,
}

/// `2^k` for `-1074 <= k <= 1023`.
pub(crate) fn pow2(k: i32) -> f64 {
    if k >= -1022 {
        f64::from_bits(((k + 1023) as u64) << 52)
    } else {
        f64::from_bits(1u64 << (k + 1074))
    }
}

/// `floor(log2 |x|)` for normal `x`; anything below `-1022` for `f64` subnormals.
fn exponent_of(x: f64) -> i32 {
    let biased = ((x.to_bits() >> 52) & 0x7ff) as i32;
    if biased == 0 {
        -1023
    } else {
        biased - 1023
    }
}

/// What happens when a rounded value exceeds the largest finite number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverflowPolicy {
    /// Fail with [`Error::Overflow`].
    #[default]
    Signal,
    /// Clamp to `±max_finite` and count the event.
    Saturate,
}

impl std::str::FromStr for OverflowPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signal" => Ok(OverflowPolicy::Signal),
            "saturate" => Ok(OverflowPolicy::Saturate),
            other => Err(Error::InvalidArgument(format!(
                "unknown overflow policy {other:?}"
            ))),
        }
    }
}

/// A value tagged with a format it is exactly representable in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimValue {
    value: f64,
    format: FpFormat,
}

impl SimValue {
    /// Fails unless `value` is a finite member of `format`.
    pub fn new(value: f64, format: FpFormat) -> Result<SimValue> {
        if value.is_nan() {
            return Err(Error::NotANumber);
        }
        if !format.contains(value) {
            return Err(Error::InvalidArgument(format!(
                "{value:e} is not representable in {format}"
            )));
        }
        Ok(SimValue { value, format })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn format(&self) -> FpFormat {
        self.format
    }
}

/// Nearest member of `fmt`, ties to even, overflow signalled.
pub fn round_to_format(x: f64, fmt: FpFormat) -> Result<SimValue> {
    let value = fmt.round(x, OverflowPolicy::Signal)?;
    Ok(SimValue { value, format: fmt })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

impl Op {
    fn exact(self, x: f64, y: f64) -> f64 {
        match self {
            Op::Add => x + y,
            Op::Sub => x - y,
            Op::Mul => x * y,
            Op::Div => x / y,
        }
    }
}

/// `fl(x op y)` in `fmt`.
pub fn sim_op(op: Op, x: SimValue, y: SimValue, fmt: FpFormat) -> Result<SimValue> {
    for v in [x, y] {
        if !fmt.contains(v.value) {
            return Err(Error::InvalidArgument(format!(
                "{:e} is not representable in {fmt}",
                v.value
            )));
        }
    }
    round_to_format(op.exact(x.value, y.value), fmt)
}

/// A (low, high) precision pair with `u_low > u_high`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrecisionPair {
    low: FpFormat,
    high: FpFormat,
}

impl PrecisionPair {
    pub const FP16_FP32: PrecisionPair = PrecisionPair {
        low: FpFormat::FP16,
        high: FpFormat::FP32,
    };

    pub fn new(low: FpFormat, high: FpFormat) -> Result<PrecisionPair> {
        if low.unit_roundoff() <= high.unit_roundoff() {
            return Err(Error::InvalidArgument(format!(
                "{low} is not strictly less precise than {high}"
            )));
        }
        Ok(PrecisionPair { low, high })
    }

    /// The pair `(q, q)`. Only the uniform code paths accept it.
    pub fn degenerate(q: FpFormat) -> PrecisionPair {
        PrecisionPair { low: q, high: q }
    }

    pub fn low(&self) -> FpFormat {
        self.low
    }

    pub fn high(&self) -> FpFormat {
        self.high
    }

    pub fn is_degenerate(&self) -> bool {
        self.low == self.high
    }

    /// `u_low / u_high`.
    pub fn ratio(&self) -> f64 {
        self.low.unit_roundoff() / self.high.unit_roundoff()
    }

    /// Whether every product of two `low` values is a member of `high`.
    pub fn products_exact(&self) -> bool {
        let (l, h) = (self.low, self.high);
        if h.is_carrier() {
            return 2 * l.t <= 53 && 2 * l.emax + 2 <= 1023;
        }
        let tiny = 2 * (l.emin + 1 - l.t as i32);
        2 * l.t <= h.t && 2 * l.emax < h.emax && tiny >= h.emin + 1 - h.t as i32
    }

    /// Whether every member of `low` is a member of `high`.
    pub fn nested(&self) -> bool {
        self.low.t <= self.high.t && self.low.emax <= self.high.emax && {
            let lo_tiny = self.low.emin + 1 - self.low.t as i32;
            lo_tiny >= self.high.emin + 1 - self.high.t as i32
        }
    }
}

/// How the floating-point operations of a factorization are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Every operation rounded to one format.
    Uniform(FpFormat),
    /// Inner products formed with exact products and `high` accumulation, then
    /// cast down once; all other operations in `low`.
    MixedInner(PrecisionPair),
    /// Matrix products formed by chained 4x4 block FMAs accumulating in `high`,
    /// then cast down once; all other operations in `low`.
    BlockFma(PrecisionPair),
}

/// Evaluation regime plus the overflow policy and a saturation counter.
#[derive(Debug)]
pub struct ArithmeticContext {
    mode: Mode,
    policy: OverflowPolicy,
    saturations: AtomicUsize,
}

impl Clone for ArithmeticContext {
    fn clone(&self) -> Self {
        ArithmeticContext {
            mode: self.mode,
            policy: self.policy,
            saturations: AtomicUsize::new(self.saturations()),
        }
    }
}

impl ArithmeticContext {
    pub fn new(mode: Mode, policy: OverflowPolicy) -> Result<ArithmeticContext> {
        if let Mode::MixedInner(pair) | Mode::BlockFma(pair) = mode {
            if pair.is_degenerate() {
                return Err(Error::InvalidArgument(
                    "mixed modes need two distinct precisions".into(),
                ));
            }
            if !pair.nested() || !pair.products_exact() {
                return Err(Error::InvalidArgument(format!(
                    "products of {} values are not exact in {}",
                    pair.low, pair.high
                )));
            }
        }
        Ok(ArithmeticContext {
            mode,
            policy,
            saturations: AtomicUsize::new(0),
        })
    }

    pub fn uniform(fmt: FpFormat) -> ArithmeticContext {
        ArithmeticContext {
            mode: Mode::Uniform(fmt),
            policy: OverflowPolicy::Signal,
            saturations: AtomicUsize::new(0),
        }
    }

    pub fn mixed_inner(pair: PrecisionPair) -> Result<ArithmeticContext> {
        Self::new(Mode::MixedInner(pair), OverflowPolicy::Signal)
    }

    pub fn block_fma(pair: PrecisionPair) -> Result<ArithmeticContext> {
        Self::new(Mode::BlockFma(pair), OverflowPolicy::Signal)
    }

    pub fn with_policy(mut self, policy: OverflowPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn policy(&self) -> OverflowPolicy {
        self.policy
    }

    /// Number of values clamped so far under [`OverflowPolicy::Saturate`].
    pub fn saturations(&self) -> usize {
        self.saturations.load(Ordering::Relaxed)
    }

    /// The format every stored value and every non-accumulating operation uses.
    pub fn storage(&self) -> FpFormat {
        match self.mode {
            Mode::Uniform(f) => f,
            Mode::MixedInner(p) | Mode::BlockFma(p) => p.low,
        }
    }

    /// The format inner products accumulate in.
    pub fn accumulator(&self) -> FpFormat {
        match self.mode {
            Mode::Uniform(f) => f,
            Mode::MixedInner(p) | Mode::BlockFma(p) => p.high,
        }
    }

    #[inline]
    pub fn round_to(&self, x: f64, fmt: FpFormat) -> Result<f64> {
        let (r, saturated) = fmt.round_counted(x, self.policy)?;
        if saturated {
            self.saturations.fetch_add(1, Ordering::Relaxed);
        }
        Ok(r)
    }

    #[inline]
    pub fn round(&self, x: f64) -> Result<f64> {
        self.round_to(x, self.storage())
    }

    #[inline]
    pub fn add(&self, x: f64, y: f64) -> Result<f64> {
        self.round(x + y)
    }

    #[inline]
    pub fn sub(&self, x: f64, y: f64) -> Result<f64> {
        self.round(x - y)
    }

    #[inline]
    pub fn mul(&self, x: f64, y: f64) -> Result<f64> {
        self.round(x * y)
    }

    #[inline]
    pub fn div(&self, x: f64, y: f64) -> Result<f64> {
        self.round(x / y)
    }

    #[inline]
    pub fn sqrt(&self, x: f64) -> Result<f64> {
        self.round(x.sqrt())
    }

    /// Rounds every entry to the storage format.
    pub fn castdown(&self, a: &Matrix) -> Result<Matrix> {
        let fmt = self.storage();
        a.try_map(|x| self.round_to(x, fmt))
    }

    /// `fl(xᵀy)` with left-to-right accumulation, in the storage format.
    pub fn dot(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        debug_assert_eq!(x.len(), y.len());
        match self.mode {
            Mode::Uniform(f) => {
                let mut s = 0.0;
                for (a, b) in x.iter().zip(y) {
                    let p = self.round_to(a * b, f)?;
                    s = self.round_to(s + p, f)?;
                }
                Ok(s)
            }
            Mode::MixedInner(p) => {
                let mut s = 0.0;
                for (a, b) in x.iter().zip(y) {
                    s = self.round_to(s + a * b, p.high)?;
                }
                self.round_to(s, p.low)
            }
            Mode::BlockFma(p) => {
                let s = self.fma_chain(x, y, 0.0, p.high)?;
                self.round_to(s, p.low)
            }
        }
    }

    /// Chains 4-wide block FMAs over `x·y` starting from accumulator `c`.
    ///
    /// Each block sums its exact products k-ascending in `high`, then adds the
    /// running accumulator. Missing tail entries behave as zero padding.
    fn fma_chain(&self, x: &[f64], y: &[f64], c: f64, high: FpFormat) -> Result<f64> {
        let mut acc = c;
        for (xs, ys) in x.chunks(4).zip(y.chunks(4)) {
            let mut s = xs[0] * ys[0];
            for (a, b) in xs[1..].iter().zip(&ys[1..]) {
                s = self.round_to(s + a * b, high)?;
            }
            acc = self.round_to(s + acc, high)?;
        }
        Ok(acc)
    }

    /// `fl(A·B)` under this context.
    pub fn matmul(&self, a: &Matrix, b: &Matrix) -> Result<Matrix> {
        self.matmul_tn(&a.transpose(), b)
    }

    /// `fl(Aᵀ·B)` under this context; every entry is one [`Self::dot`].
    pub fn matmul_tn(&self, a: &Matrix, b: &Matrix) -> Result<Matrix> {
        if a.rows() != b.rows() {
            return Err(Error::Dimension(format!(
                "cannot form AᵀB for A {}x{} and B {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            )));
        }
        let mut out = Matrix::zeros(a.cols(), b.cols());
        for j in 0..b.cols() {
            let bj = b.col(j);
            for i in 0..a.cols() {
                out[(i, j)] = self.dot(a.col(i), bj)?;
            }
        }
        Ok(out)
    }

    /// Entrywise `A - B` rounded to storage.
    pub fn sub_matrix(&self, a: &Matrix, b: &Matrix) -> Result<Matrix> {
        if a.shape() != b.shape() {
            return Err(Error::Dimension("shapes differ".into()));
        }
        let mut out = a.clone();
        for j in 0..a.cols() {
            for (o, &y) in out.col_mut(j).iter_mut().zip(b.col(j)) {
                *o = self.sub(*o, y)?;
            }
        }
        Ok(out)
    }
}

/// Uniform-precision inner product with every multiply and add rounded to `fmt`.
pub fn dot_uniform(x: &[f64], y: &[f64], fmt: FpFormat) -> Result<f64> {
    check_lengths(x, y)?;
    ArithmeticContext::uniform(fmt).dot(x, y)
}

/// Exact products, `high` accumulation, one castdown to `low`.
pub fn dot_mixed(x: &[f64], y: &[f64], pair: PrecisionPair) -> Result<f64> {
    check_lengths(x, y)?;
    ArithmeticContext::mixed_inner(pair)?.dot(x, y)
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "vectors of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

pub type Tile = [[f64; 4]; 4];

/// One block FMA: `D = fl_high(C + A·B)` for 4x4 tiles with `A`, `B` in `low`.
pub fn bfma_4x4(a: &Tile, b: &Tile, c: &Tile, pair: PrecisionPair) -> Result<Tile> {
    let ctx = ArithmeticContext::block_fma(pair)?;
    let mut d = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let col = [b[0][j], b[1][j], b[2][j], b[3][j]];
            d[i][j] = ctx.fma_chain(&a[i], &col, c[i][j], pair.high)?;
        }
    }
    Ok(d)
}

/// `fl(X·Y)` through chained 4x4 block FMAs with a single castdown per entry.
pub fn bfma_gemm(x: &Matrix, y: &Matrix, pair: PrecisionPair) -> Result<Matrix> {
    if x.cols() != y.rows() {
        return Err(Error::Dimension(format!(
            "cannot multiply {}x{} by {}x{}",
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols()
        )));
    }
    ArithmeticContext::block_fma(pair)?.matmul(x, y)
}
