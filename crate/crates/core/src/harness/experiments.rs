//! Experiment drivers producing CSV.
//!
//! Trials run on a rayon pool sized by `MPQR_THREADS`; rows are collected in
//! trial order, so output bytes do not depend on the thread count.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;

use crate::bounds::{Algorithm, BoundSpec, Regime};
use crate::error::{Error, Result};
use crate::floatsim::{dot_mixed, dot_uniform, FpFormat, OverflowPolicy, PrecisionPair};
use crate::harness::generate::{gen_matrix, rng_for, MatrixKind, MatrixSpec};
use crate::harness::measure::{measure, ErrorReport};
use crate::matrix::Matrix;
use crate::mixed;

pub const SWEEP_HEADER: [&str; 13] = [
    "alg",
    "regime",
    "m",
    "n",
    "r",
    "L",
    "alpha",
    "seed",
    "backward",
    "orth",
    "boundBackward",
    "boundOrth",
    "overflows",
];

/// Settings shared by every sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    /// Sample `i` uses matrix seed `seed + i`.
    pub seed: u64,
    pub samples: usize,
    pub policy: OverflowPolicy,
    pub c: f64,
    pub threads: usize,
    pub pair: PrecisionPair,
}

impl Default for SweepConfig {
    fn default() -> SweepConfig {
        SweepConfig {
            seed: 0,
            samples: 10,
            policy: OverflowPolicy::Signal,
            c: 1.0,
            threads: threads_from_env(),
            pair: PrecisionPair::FP16_FP32,
        }
    }
}

impl SweepConfig {
    fn sample_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_add(i as u64)
    }
}

/// `MPQR_THREADS` if set to a positive integer, else the available parallelism.
pub fn threads_from_env() -> usize {
    std::env::var("MPQR_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run_parallel<T, R, F>(threads: usize, jobs: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(&f).collect())
}

/// One factorization of one matrix. `report` is `None` when the run overflowed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub algorithm: Algorithm,
    pub regime: Regime,
    pub m: usize,
    pub n: usize,
    pub alpha: Option<f64>,
    pub seed: u64,
    pub report: Option<ErrorReport>,
}

impl SweepRow {
    pub fn backward(&self) -> f64 {
        self.report.map_or(f64::NAN, |r| r.backward)
    }

    pub fn overflows(&self) -> usize {
        self.report.map_or(1, |r| r.overflows)
    }

    fn record(&self) -> Vec<String> {
        let (r, levels) = match self.algorithm {
            Algorithm::Hqr => (String::new(), String::new()),
            Algorithm::Bqr { r } => (r.to_string(), String::new()),
            Algorithm::Tsqr { levels } => (String::new(), levels.to_string()),
        };
        let nan = f64::NAN;
        let rep = self.report.unwrap_or(ErrorReport {
            backward: nan,
            orth: nan,
            bound_backward: nan,
            bound_orth: nan,
            overflows: 1,
        });
        vec![
            algorithm_label(self.algorithm).to_string(),
            regime_label(self.regime),
            self.m.to_string(),
            self.n.to_string(),
            r,
            levels,
            self.alpha.map_or(String::new(), |a| a.to_string()),
            self.seed.to_string(),
            rep.backward.to_string(),
            rep.orth.to_string(),
            rep.bound_backward.to_string(),
            rep.bound_orth.to_string(),
            rep.overflows.to_string(),
        ]
    }
}

pub fn algorithm_label(a: Algorithm) -> &'static str {
    match a {
        Algorithm::Hqr => "hqr",
        Algorithm::Bqr { .. } => "bqr",
        Algorithm::Tsqr { .. } => "tsqr",
    }
}

pub fn regime_label(r: Regime) -> String {
    match r {
        Regime::Uniform(fmt) => fmt.name().to_string(),
        Regime::Mixed2(_) => "mixed2".into(),
        Regime::Mixed3(_) => "mixed3".into(),
        Regime::HighThenCastdown(_) => "castdown".into(),
    }
}

pub fn write_sweep(rows: &[SweepRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(())
}

/// Factors `a` and measures the result; overflow under the signal policy
/// yields a row without a report.
pub fn run_cell(
    a: &Matrix,
    algorithm: Algorithm,
    regime: Regime,
    cfg: &SweepConfig,
) -> Result<Option<ErrorReport>> {
    let (m, n) = a.shape();
    match mixed::factor(a, algorithm, regime, cfg.policy) {
        Ok(f) => {
            let spec = BoundSpec::new(algorithm, regime, m, n).with_c(cfg.c);
            let mut report = measure(a, &f.factors, Some(&spec))?;
            report.overflows = f.saturations;
            Ok(Some(report))
        }
        Err(Error::Overflow { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

struct Job {
    spec: MatrixSpec,
    alpha: Option<f64>,
    cells: Vec<(Algorithm, Regime)>,
}

fn run_jobs(jobs: &[Job], cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    let per_job = run_parallel(cfg.threads, jobs, |job| {
        let a = gen_matrix(&job.spec)?;
        job.cells
            .iter()
            .map(|&(algorithm, regime)| {
                Ok(SweepRow {
                    algorithm,
                    regime,
                    m: job.spec.m,
                    n: job.spec.n,
                    alpha: job.alpha,
                    seed: job.spec.seed,
                    report: run_cell(&a, algorithm, regime, cfg)?,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(per_job.into_iter().flatten().collect())
}

/// The default size-sweep rows: 1000 to 13949 in `count` geometric steps.
pub fn default_size_list(count: usize) -> Vec<usize> {
    let (lo, hi) = (1000f64, 13949f64);
    if count <= 1 {
        return vec![lo as usize];
    }
    (0..count)
        .map(|i| (lo * (hi / lo).powf(i as f64 / (count - 1) as f64)).round() as usize)
        .collect()
}

/// Every algorithm in uniform `fp32`, Mixed2 and Mixed3 on Gaussian inputs.
///
/// HQR has no block-FMA form, so each matrix yields eight rows.
pub fn run_size_sweep(
    cfg: &SweepConfig,
    m_list: &[usize],
    n: usize,
    r: usize,
    levels: u32,
    out: impl Write,
) -> Result<Vec<SweepRow>> {
    let pair = cfg.pair;
    let algorithms = [
        Algorithm::Hqr,
        Algorithm::Bqr { r },
        Algorithm::Tsqr { levels },
    ];
    let mut cells = Vec::new();
    for regime in [
        Regime::Uniform(FpFormat::FP32),
        Regime::Mixed2(pair),
        Regime::Mixed3(pair),
    ] {
        for &alg in &algorithms {
            if !(alg == Algorithm::Hqr && matches!(regime, Regime::Mixed3(_))) {
                cells.push((alg, regime));
            }
        }
    }
    let mut jobs = Vec::new();
    for &m in m_list {
        for i in 0..cfg.samples {
            jobs.push(Job {
                spec: MatrixSpec::new(MatrixKind::GaussianStd, m, n, cfg.sample_seed(i))
                    .with_storage(pair.low()),
                alpha: None,
                cells: cells.clone(),
            });
        }
    }
    let rows = run_jobs(&jobs, cfg)?;
    write_sweep(&rows, out)?;
    Ok(rows)
}

/// Uniform `fp32` BQR and `mp_bqr3` per block size on log-spaced-spectrum inputs.
pub fn run_block_sweep(
    cfg: &SweepConfig,
    m: usize,
    n: usize,
    r_list: &[usize],
    out: impl Write,
) -> Result<Vec<SweepRow>> {
    let pair = cfg.pair;
    let mut jobs = Vec::new();
    for i in 0..cfg.samples {
        jobs.push(Job {
            spec: MatrixSpec::new(MatrixKind::LogSpacedSV, m, n, cfg.sample_seed(i))
                .with_storage(pair.low()),
            alpha: None,
            cells: r_list
                .iter()
                .flat_map(|&r| {
                    [
                        (Algorithm::Bqr { r }, Regime::Uniform(FpFormat::FP32)),
                        (Algorithm::Bqr { r }, Regime::Mixed3(pair)),
                    ]
                })
                .collect(),
        });
    }
    let rows = run_jobs(&jobs, cfg)?;
    write_sweep(&rows, out)?;
    Ok(rows)
}

/// `mp_hqr2` and `mp_tsqr2` at every level in `levels_list`, per `(α, sample)`.
pub fn run_condition_sweep(
    cfg: &SweepConfig,
    m: usize,
    n: usize,
    alpha_list: &[f64],
    levels_list: &[u32],
    out: impl Write,
) -> Result<Vec<SweepRow>> {
    let regime = Regime::Mixed2(cfg.pair);
    let mut cells = vec![(Algorithm::Hqr, regime)];
    cells.extend(
        levels_list
            .iter()
            .map(|&levels| (Algorithm::Tsqr { levels }, regime)),
    );
    let mut jobs = Vec::new();
    for &alpha in alpha_list {
        for i in 0..cfg.samples {
            jobs.push(Job {
                spec: MatrixSpec::new(MatrixKind::Conditioned(alpha), m, n, cfg.sample_seed(i))
                    .with_storage(cfg.pair.low()),
                alpha: Some(alpha),
                cells: cells.clone(),
            });
        }
    }
    let rows = run_jobs(&jobs, cfg)?;
    write_sweep(&rows, out)?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    Normal,
    Uniform,
}

impl std::str::FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Distribution> {
        match s {
            "normal" => Ok(Distribution::Normal),
            "uniform" => Ok(Distribution::Uniform),
            _ => Err(Error::InvalidArgument(format!(
                "unknown distribution {s:?}, expected normal or uniform"
            ))),
        }
    }
}

/// How the inner products under test are computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DotArithmetic {
    Uniform(FpFormat),
    Mixed(PrecisionPair),
}

impl DotArithmetic {
    fn storage(&self) -> FpFormat {
        match *self {
            DotArithmetic::Uniform(f) => f,
            DotArithmetic::Mixed(p) => p.low(),
        }
    }

    fn dot(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match *self {
            DotArithmetic::Uniform(f) => dot_uniform(x, y, f),
            DotArithmetic::Mixed(p) => dot_mixed(x, y, p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DotSummary {
    pub average: f64,
    /// Sample standard deviation.
    pub sd: f64,
    pub max: f64,
    /// Trials excluded from the statistics.
    pub overflows: usize,
}

/// `|xᵀy - fl(xᵀy)| / |x|ᵀ|y|` for `count` random vector pairs of length `m`.
///
/// Trial `i` draws from stream `i` of `seed`. Output has one row per trial and
/// a final `summary` row; overflowed trials show `nan` and are left out of the
/// statistics.
pub fn run_dot_experiment(
    count: usize,
    m: usize,
    dist: Distribution,
    arith: DotArithmetic,
    seed: u64,
    threads: usize,
    out: impl Write,
) -> Result<(Vec<Option<f64>>, DotSummary)> {
    if count == 0 || m == 0 {
        return Err(Error::InvalidArgument(
            "count and m must be positive".into(),
        ));
    }
    let storage = arith.storage();
    let trials: Vec<usize> = (0..count).collect();
    let errors = run_parallel(threads, &trials, |&i| {
        let mut rng = rng_for(seed, i as u64);
        let mut draw = || -> f64 {
            match dist {
                Distribution::Normal => StandardNormal.sample(&mut rng),
                Distribution::Uniform => rng.random::<f64>(),
            }
        };
        let mut x = Vec::with_capacity(m);
        let mut y = Vec::with_capacity(m);
        for _ in 0..m {
            x.push(storage.round(draw(), OverflowPolicy::Signal)?);
            y.push(storage.round(draw(), OverflowPolicy::Signal)?);
        }
        // Products of storage values are exact in f64; the f64 sum is the reference.
        let exact: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let scale: f64 = x.iter().zip(&y).map(|(a, b)| (a * b).abs()).sum();
        match arith.dot(&x, &y) {
            Ok(v) if scale == 0.0 => Ok(Some(if v == exact { 0.0 } else { f64::INFINITY })),
            Ok(v) => Ok(Some((exact - v).abs() / scale)),
            Err(Error::Overflow { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    })?;

    let kept: Vec<f64> = errors.iter().flatten().copied().collect();
    let k = kept.len() as f64;
    let average = kept.iter().sum::<f64>() / k;
    let sd = if kept.len() > 1 {
        (kept.iter().map(|e| (e - average).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    let summary = DotSummary {
        average,
        sd,
        max: kept.iter().fold(f64::NAN, |a, &b| a.max(b)),
        overflows: count - kept.len(),
    };

    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "rel_error", "average", "sd", "max", "overflows"])?;
    for (i, e) in errors.iter().enumerate() {
        let (err, ovf) = match e {
            Some(e) => (e.to_string(), "0"),
            None => (f64::NAN.to_string(), "1"),
        };
        w.write_record([
            i.to_string(),
            err,
            String::new(),
            String::new(),
            String::new(),
            ovf.into(),
        ])?;
    }
    w.write_record([
        "summary".to_string(),
        String::new(),
        summary.average.to_string(),
        summary.sd.to_string(),
        summary.max.to_string(),
        summary.overflows.to_string(),
    ])?;
    w.flush()?;
    Ok((errors, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(threads: usize) -> SweepConfig {
        SweepConfig {
            seed: 11,
            samples: 2,
            threads,
            ..SweepConfig::default()
        }
    }

    #[test]
    fn default_sizes_are_geometric() {
        let m = default_size_list(5);
        assert_eq!(m.first(), Some(&1000));
        assert_eq!(m.last(), Some(&13949));
        assert!(m.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn size_sweep_shape_and_determinism() {
        let mut one = Vec::new();
        let rows = run_size_sweep(&cfg(1), &[64, 96], 8, 3, 1, &mut one).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 8);
        assert!(rows.iter().all(|r| r.report.is_some()));
        let mut four = Vec::new();
        run_size_sweep(&cfg(4), &[64, 96], 8, 3, 1, &mut four).unwrap();
        assert_eq!(one, four);
        let text = String::from_utf8(one).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), SWEEP_HEADER.join(","));
        assert!(lines.next().unwrap().starts_with("hqr,fp32,64,8,,,,11,"));
        assert_eq!(text.lines().count(), 1 + rows.len());
    }

    #[test]
    fn sweeps_respect_bounds() {
        let mut sink = Vec::new();
        let rows = run_condition_sweep(&cfg(2), 200, 10, &[1e-3, 1.0], &[1, 2], &mut sink).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 3);
        assert!(rows.iter().all(|r| r.report.unwrap().within_bounds()));
        assert!(String::from_utf8(sink).unwrap().contains(",0.001,"));
        let rows = run_block_sweep(&cfg(2), 64, 16, &[2, 8], &mut Vec::new()).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2);
        assert!(rows.iter().all(|r| r.report.unwrap().within_bounds()));
    }

    #[test]
    fn overflow_cell_is_reported() {
        let a = Matrix::from_fn(8, 2, |i, j| if i == j { 60000.0 } else { 1.0 });
        let c = SweepConfig {
            threads: 1,
            ..SweepConfig::default()
        };
        let regime = Regime::Mixed2(PrecisionPair::FP16_FP32);
        assert_eq!(run_cell(&a, Algorithm::Hqr, regime, &c).unwrap(), None);
        let row = SweepRow {
            algorithm: Algorithm::Hqr,
            regime,
            m: 8,
            n: 2,
            alpha: None,
            seed: 0,
            report: None,
        };
        assert_eq!(row.record()[8], "NaN");
        assert_eq!(row.overflows(), 1);
        let sat = SweepConfig {
            policy: OverflowPolicy::Saturate,
            ..c
        };
        assert!(
            run_cell(&a, Algorithm::Hqr, regime, &sat)
                .unwrap()
                .unwrap()
                .overflows
                > 0
        );
    }

    #[test]
    fn dot_experiment_rows() {
        let mut out = Vec::new();
        let arith = DotArithmetic::Uniform(FpFormat::FP16);
        let (errs, s) =
            run_dot_experiment(50, 64, Distribution::Normal, arith, 3, 2, &mut out).unwrap();
        assert_eq!(errs.len(), 50);
        assert_eq!(s.overflows, 0);
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 52);
        assert!(text.lines().last().unwrap().starts_with("summary,,"));
        let max = errs.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
        assert_eq!(s.max, max);
        // |error| ≤ γ_m relative to |x|ᵀ|y|.
        let u = FpFormat::FP16.unit_roundoff();
        assert!(s.max <= 64.0 * u / (1.0 - 64.0 * u));

        let mut again = Vec::new();
        run_dot_experiment(50, 64, Distribution::Normal, arith, 3, 1, &mut again).unwrap();
        assert_eq!(text.as_bytes(), &again[..]);
    }

    #[test]
    fn dot_overflow_trials_are_excluded() {
        // Sums of 1024 uniform products pass the largest value of 16 well before the end.
        let tiny = FpFormat::custom("tiny", 11, -14, 3).unwrap();
        let arith = DotArithmetic::Uniform(tiny);
        let (errs, s) =
            run_dot_experiment(3, 1024, Distribution::Uniform, arith, 0, 1, std::io::sink())
                .unwrap();
        assert!(errs.iter().all(Option::is_none));
        assert_eq!(s.overflows, 3);
        assert!(s.average.is_nan());
    }
}
