use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mpqr::bounds::{self, Algorithm, BoundSpec, Regime, Scheme};
use mpqr::harness::csvio::{read_matrix, write_matrix};
use mpqr::harness::experiments::{
    default_size_list, run_block_sweep, run_condition_sweep, run_dot_experiment, run_size_sweep,
    threads_from_env, write_sweep, Distribution, DotArithmetic, SweepConfig, SweepRow,
};
use mpqr::harness::measure::measure;
use mpqr::mixed;
use mpqr::{Error, FpFormat, OverflowPolicy, PrecisionPair};

#[derive(Parser)]
#[command(
    name = "mpqr",
    version,
    about = "Mixed-precision QR factorization laboratory"
)]
struct Cli {
    /// Master seed; per-trial seeds derive from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for output files; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Policy::Signal)]
    overflow_policy: Policy,
    /// Constant inside every gamma-tilde.
    #[arg(long, global = true, default_value_t = 1.0)]
    c_constant: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Signal,
    Saturate,
}

#[derive(Clone, Copy, ValueEnum)]
enum Alg {
    Hqr,
    Bqr,
    Tsqr,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Uniform,
    Mixed2,
    Mixed3,
    Castdown,
}

#[derive(Clone, Copy, ValueEnum)]
enum Prec {
    Fp16,
    Fp32,
    Fp64,
}

impl From<Prec> for FpFormat {
    fn from(p: Prec) -> FpFormat {
        match p {
            Prec::Fp16 => FpFormat::FP16,
            Prec::Fp32 => FpFormat::FP32,
            Prec::Fp64 => FpFormat::FP64,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Dist {
    Normal,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum DotMode {
    Uniform,
    Mixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Hqr,
    Tsqr,
}

/// Algorithm and arithmetic selection shared by `factor` and `bounds`.
#[derive(Args)]
struct Method {
    #[arg(long, value_enum)]
    alg: Alg,
    /// Block size for bqr.
    #[arg(long, default_value_t = 16)]
    r: usize,
    /// Levels for tsqr.
    #[arg(long = "L", default_value_t = 1)]
    levels: u32,
    #[arg(long, value_enum, default_value_t = RegimeArg::Uniform)]
    regime: RegimeArg,
    /// Working precision of the uniform regime.
    #[arg(long, value_enum, default_value_t = Prec::Fp64)]
    prec: Prec,
    #[arg(long, value_enum, default_value_t = Prec::Fp16)]
    low: Prec,
    #[arg(long, value_enum, default_value_t = Prec::Fp32)]
    high: Prec,
}

impl Method {
    fn algorithm(&self) -> Algorithm {
        match self.alg {
            Alg::Hqr => Algorithm::Hqr,
            Alg::Bqr => Algorithm::Bqr { r: self.r },
            Alg::Tsqr => Algorithm::Tsqr {
                levels: self.levels,
            },
        }
    }

    fn regime(&self) -> mpqr::Result<Regime> {
        if let RegimeArg::Uniform = self.regime {
            return Ok(Regime::Uniform(self.prec.into()));
        }
        let pair = PrecisionPair::new(self.low.into(), self.high.into())?;
        Ok(match self.regime {
            RegimeArg::Mixed2 => Regime::Mixed2(pair),
            RegimeArg::Mixed3 => Regime::Mixed3(pair),
            _ => Regime::HighThenCastdown(pair),
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Factor a matrix read as CSV and report its errors.
    Factor {
        #[command(flatten)]
        method: Method,
        /// Input CSV; stdin when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Print the error bounds for a shape.
    Bounds {
        #[command(flatten)]
        method: Method,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
    },
    /// Grid of log10 Q bounds over shapes; `inf` marks infeasible cells.
    Feasibility {
        #[arg(long, value_enum, default_value_t = SchemeArg::Hqr)]
        scheme: SchemeArg,
        #[arg(long = "L", default_value_t = 2)]
        levels: u32,
        #[arg(long, value_enum, default_value_t = Prec::Fp32)]
        prec: Prec,
        #[arg(long, value_delimiter = ',', required = true)]
        m_list: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
    },
    /// Relative errors of random inner products.
    DotExp {
        #[arg(long, value_enum, default_value_t = Dist::Normal)]
        dist: Dist,
        #[arg(long, default_value_t = 100_000)]
        count: usize,
        #[arg(long, default_value_t = 1024)]
        m: usize,
        #[arg(long, value_enum, default_value_t = DotMode::Uniform)]
        arith: DotMode,
    },
    /// Every algorithm and regime over growing row counts.
    SizeSweep {
        /// Defaults to five geometric steps from 1000 to 13949.
        #[arg(long, value_delimiter = ',')]
        m_list: Vec<usize>,
        #[arg(long, default_value_t = 250)]
        n: usize,
        #[arg(long, default_value_t = 63)]
        r: usize,
        #[arg(long = "L", default_value_t = 2)]
        levels: u32,
        #[arg(long, default_value_t = 10)]
        samples: usize,
    },
    /// Uniform fp32 and block-FMA BQR over block sizes.
    BlockSweep {
        #[arg(long, default_value_t = 2048)]
        m: usize,
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64,128,256")]
        r_list: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        samples: usize,
    },
    /// Mixed HQR against mixed TSQR over condition numbers.
    CondSweep {
        #[arg(long, default_value_t = 4000)]
        m: usize,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "1e-4,1e-3,1e-2,1e-1,1")]
        alpha_list: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long = "L-list", value_delimiter = ',', default_value = "1,2,3,4,5")]
        levels_list: Vec<u32>,
    },
}

/// `--out DIR` selects `DIR/name`, otherwise stdout.
fn output(out: &Option<PathBuf>, name: &str) -> mpqr::Result<Box<dyn Write>> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Ok(Box::new(BufWriter::new(File::create(dir.join(name))?)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn write_file(
    dir: &Path,
    name: &str,
    f: impl FnOnce(File) -> mpqr::Result<()>,
) -> mpqr::Result<()> {
    fs::create_dir_all(dir)?;
    f(File::create(dir.join(name))?)
}

fn run(cli: Cli) -> mpqr::Result<()> {
    let policy = match cli.overflow_policy {
        Policy::Signal => OverflowPolicy::Signal,
        Policy::Saturate => OverflowPolicy::Saturate,
    };
    let cfg = |samples: usize| SweepConfig {
        seed: cli.seed,
        samples,
        policy,
        c: cli.c_constant,
        threads: threads_from_env(),
        pair: PrecisionPair::FP16_FP32,
    };
    match cli.command {
        Command::Factor { method, input } => {
            let algorithm = method.algorithm();
            let regime = method.regime()?;
            let storage = match regime {
                Regime::Uniform(fmt) => fmt,
                Regime::Mixed2(p) | Regime::Mixed3(p) | Regime::HighThenCastdown(p) => p.low(),
            };
            let a = match input {
                Some(path) => read_matrix(File::open(path)?, storage)?,
                None => {
                    let mut text = Vec::new();
                    io::stdin().lock().read_to_end(&mut text)?;
                    read_matrix(&text[..], storage)?
                }
            };
            let (m, n) = a.shape();
            let f = mixed::factor(&a, algorithm, regime, policy)?;
            let spec = BoundSpec::new(algorithm, regime, m, n).with_c(cli.c_constant);
            let mut report = measure(&a, &f.factors, Some(&spec))?;
            report.overflows = f.saturations;
            if let Some(dir) = &cli.out {
                write_file(dir, "Q.csv", |w| write_matrix(&f.factors.q, w))?;
                write_file(dir, "R.csv", |w| write_matrix(&f.factors.r, w))?;
            }
            let row = SweepRow {
                algorithm,
                regime,
                m,
                n,
                alpha: None,
                seed: cli.seed,
                report: Some(report),
            };
            write_sweep(&[row], output(&cli.out, "report.csv")?)
        }
        Command::Bounds { method, m, n } => {
            let spec =
                BoundSpec::new(method.algorithm(), method.regime()?, m, n).with_c(cli.c_constant);
            let col = bounds::column_coefficient(&spec)?;
            let q = bounds::bound_q(&spec)?;
            let (backward, orth) = bounds::measurable_bounds(&spec)?;
            let mut w = output(&cli.out, "bounds.txt")?;
            writeln!(w, "bound_q={}", q.value)?;
            writeln!(w, "column={}", col.value)?;
            writeln!(w, "backward={}", backward.value)?;
            writeln!(w, "orth={}", orth.value)?;
            writeln!(w, "stable={}", q.stable)?;
            w.flush()?;
            Ok(())
        }
        Command::Feasibility {
            scheme,
            levels,
            prec,
            m_list,
            n_list,
        } => {
            let scheme = match scheme {
                SchemeArg::Hqr => Scheme::Hqr,
                SchemeArg::Tsqr => Scheme::Tsqr { levels },
            };
            let cells =
                bounds::feasibility_map(scheme, prec.into(), cli.c_constant, &m_list, &n_list);
            let mut w = output(&cli.out, "feasibility.dat")?;
            bounds::write_feasibility(&cells, &mut w)?;
            w.flush()?;
            Ok(())
        }
        Command::DotExp {
            dist,
            count,
            m,
            arith,
        } => {
            let dist = match dist {
                Dist::Normal => Distribution::Normal,
                Dist::Uniform => Distribution::Uniform,
            };
            let arith = match arith {
                DotMode::Uniform => DotArithmetic::Uniform(FpFormat::FP16),
                DotMode::Mixed => DotArithmetic::Mixed(PrecisionPair::FP16_FP32),
            };
            let mut w = output(&cli.out, "dot.csv")?;
            run_dot_experiment(count, m, dist, arith, cli.seed, threads_from_env(), &mut w)?;
            w.flush()?;
            Ok(())
        }
        Command::SizeSweep {
            m_list,
            n,
            r,
            levels,
            samples,
        } => {
            let m_list = if m_list.is_empty() {
                default_size_list(5)
            } else {
                m_list
            };
            let mut w = output(&cli.out, "size_sweep.csv")?;
            run_size_sweep(&cfg(samples), &m_list, n, r, levels, &mut w)?;
            w.flush()?;
            Ok(())
        }
        Command::BlockSweep {
            m,
            n,
            r_list,
            samples,
        } => {
            let mut w = output(&cli.out, "block_sweep.csv")?;
            run_block_sweep(&cfg(samples), m, n, &r_list, &mut w)?;
            w.flush()?;
            Ok(())
        }
        Command::CondSweep {
            m,
            n,
            alpha_list,
            samples,
            levels_list,
        } => {
            let mut w = output(&cli.out, "cond_sweep.csv")?;
            run_condition_sweep(&cfg(samples), m, n, &alpha_list, &levels_list, &mut w)?;
            w.flush()?;
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Overflow { .. } => 3,
        Error::InvalidArgument(_)
        | Error::InvalidLevels { .. }
        | Error::Dimension(_)
        | Error::Domain(_)
        | Error::Parse(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
