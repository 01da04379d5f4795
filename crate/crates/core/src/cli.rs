//! Command line front end. Every subcommand writes CSV (header row, full
//! round-trip precision) to `-o PATH` or standard output.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dims::{closed_form_dq, estimate_d1, estimate_dq, MomentTable};
use crate::discretize::{histogram_pushforward, HistogramOptions, DEFAULT_EXTRA_DEPTH};
use crate::ekscan::{self, CountSpec, EkKind, EkSpec, SweepParam};
use crate::error::{Error, Result};
use crate::fourier::{decay_fit, first_factor, ft_eval, DecayPlan, FourierMeasure};
use crate::ifs::{check_strong_separation, similarity_dimension, AmbientDim, Orientation, Point, DEFAULT_WORD_BUDGET};
use crate::scalar::fmt_real;
use crate::spec::{load_measure, load_measure_spec, Measure, MeasureSpec, Part};
use crate::transforms::{self, DerivedMeasure};

#[derive(Debug, Parser)]
#[command(name = "selfsim", version, about = "Numerical experiments on homogeneous self-similar measures")]
pub struct Cli {
    /// Worker threads.
    #[arg(long, global = true, env = "SELFSIM_JOBS", default_value_t = default_jobs())]
    pub jobs: usize,
    /// Seed for sampling offsets.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[derive(Debug, Args)]
pub struct Output {
    /// Output file; standard output when absent.
    #[arg(short = 'o', long = "output")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HistArgs {
    /// Levels, `a..b` (inclusive) or a single level.
    #[arg(long, default_value = "4..16")]
    pub levels: String,
    #[arg(long, default_value_t = DEFAULT_EXTRA_DEPTH)]
    pub extra_depth: u32,
    #[arg(long, default_value_t = DEFAULT_WORD_BUDGET)]
    pub budget: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Translations,
    Projections,
    Convolutions,
}

#[derive(Debug, Args)]
pub struct KindParams {
    #[arg(value_enum)]
    pub kind: KindArg,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub u: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    #[arg(long)]
    pub theta1: Option<f64>,
    #[arg(long)]
    pub theta2: Option<f64>,
    /// Drop the `r_N` rescaling of the convolution residuals.
    #[arg(long)]
    pub no_rescale: bool,
    #[arg(long, default_value_t = ekscan::DEFAULT_C)]
    pub c: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// L^q moment sums per level with running dimension estimates.
    Dim {
        #[arg(long)]
        ifs: PathBuf,
        /// Comma separated q values; 1 selects the entropy rows.
        #[arg(long, default_value = "2")]
        q: String,
        #[command(flatten)]
        hist: HistArgs,
        #[command(flatten)]
        out: Output,
    },
    /// Entropy sums per level with the running entropy dimension.
    Entropy {
        #[arg(long)]
        ifs: PathBuf,
        #[command(flatten)]
        hist: HistArgs,
        #[command(flatten)]
        out: Output,
    },
    /// Fourier decay profile (band maxima and fitted exponent).
    Fourier {
        #[arg(long)]
        ifs: PathBuf,
        #[arg(long, default_value_t = 20)]
        bands: u32,
        #[arg(long, default_value_t = 64)]
        samples: u32,
        #[arg(long, default_value_t = 2.0)]
        base: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Direction for planar measures.
        #[arg(long)]
        beta: Option<f64>,
        /// Also write every sample here.
        #[arg(long)]
        samples_out: Option<PathBuf>,
        #[command(flatten)]
        out: Output,
    },
    /// Projection of a planar measure: the merged line system, or a
    /// histogram of the pushforward with `--level`.
    Project {
        #[arg(long)]
        ifs: PathBuf,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        level: Option<u32>,
        #[arg(long, default_value_t = DEFAULT_EXTRA_DEPTH)]
        extra_depth: u32,
        /// Write the merged system as a JSON document.
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        out: Output,
    },
    /// Histogram (with `--level`) or moment table of `μ_1 * T_u μ_2`.
    Convolve {
        #[arg(long)]
        ifs: PathBuf,
        #[arg(long)]
        other: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        u: f64,
        #[arg(long)]
        level: Option<u32>,
        #[arg(long, default_value = "2")]
        q: String,
        #[command(flatten)]
        hist: HistArgs,
        #[command(flatten)]
        out: Output,
    },
    /// Skip/keep decomposition: maps of `ν_k` and of `T^{k−1} η_k`.
    Skipkeep {
        #[arg(long)]
        ifs: PathBuf,
        #[arg(long)]
        k: u32,
        /// Write the chosen part as a JSON document.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PartArg::Skip)]
        part: PartArg,
        #[command(flatten)]
        out: Output,
    },
    /// Erdős–Kahane badness; any `--<param>-range a:b:steps` turns it into a
    /// sweep.
    Ekscan {
        #[command(flatten)]
        params: KindParams,
        #[arg(long = "N")]
        n: u32,
        #[arg(long, default_value_t = ekscan::DEFAULT_T_GRID)]
        t_grid: u32,
        #[arg(long)]
        lambda_range: Option<String>,
        #[arg(long)]
        u_range: Option<String>,
        #[arg(long)]
        theta_range: Option<String>,
        #[arg(long)]
        alpha_range: Option<String>,
        #[arg(long)]
        beta_range: Option<String>,
        #[arg(long)]
        theta1_range: Option<String>,
        #[arg(long)]
        theta2_range: Option<String>,
        #[command(flatten)]
        out: Output,
    },
    /// Counts of the integer sequences behind the EK covering.
    Ekcount {
        #[command(flatten)]
        params: KindParams,
        /// `a..b` or a single N.
        #[arg(long = "N", default_value = "8..18")]
        n: String,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        slack: f64,
        #[command(flatten)]
        out: Output,
    },
    /// Dimension estimates across a parameter family of measures.
    Sweep {
        #[arg(long)]
        ifs: PathBuf,
        #[arg(long, value_enum)]
        param: SweepArg,
        /// `a:b:steps`.
        #[arg(long)]
        range: String,
        #[arg(long, default_value = "2")]
        q: f64,
        #[command(flatten)]
        hist: HistArgs,
        #[command(flatten)]
        out: Output,
    },
    /// Separation certificate and invariant checks on a measure.
    Check {
        #[arg(long)]
        ifs: PathBuf,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PartArg {
    Skip,
    Keep,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SweepArg {
    /// Contraction ratio of the base system.
    Ratio,
    /// Projection direction of a planar base system.
    Beta,
    /// Scale of the second factor of a convolution document.
    U,
}

/// Parses `a..b` (inclusive) or a single integer.
pub fn parse_levels(s: &str) -> Result<Vec<u32>> {
    let bad = || Error::Usage(format!("cannot parse range {s:?}; expected a..b"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| bad())?;
        let b: u32 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(Error::Usage(format!("empty range {s:?}")));
        }
        Ok((a..=b).collect())
    } else {
        Ok(vec![s.trim().parse().map_err(|_| bad())?])
    }
}

/// Parses `a:b:steps`.
pub fn parse_range(s: &str) -> Result<(f64, f64, u32)> {
    let bad = || Error::Usage(format!("cannot parse {s:?}; expected lo:hi:steps"));
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts[..] else { return Err(bad()) };
    let (a, b): (f64, f64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
    let n: u32 = n.parse().map_err(|_| bad())?;
    if n == 0 || !a.is_finite() || !b.is_finite() || a > b {
        return Err(bad());
    }
    Ok((a, b, n))
}

fn parse_qs(s: &str) -> Result<Vec<f64>> {
    let qs = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| Error::Usage(format!("cannot parse q {x:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if qs.is_empty() || qs.iter().any(|q| !(*q > 0.0)) {
        return Err(Error::Usage("q values must be positive".into()));
    }
    Ok(qs)
}

fn hist_opts(h: &HistArgs) -> HistogramOptions {
    HistogramOptions {
        extra_depth: h.extra_depth,
        budget: h.budget,
    }
}

fn emit(out: &Output, bytes: &[u8]) -> Result<()> {
    match &out.output {
        Some(path) => write_file(path, bytes),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(bytes).and_then(|_| so.flush()).map_err(|source| Error::Io {
                path: "<stdout>".into(),
                source,
            })
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn io_err(source: std::io::Error) -> Error {
    Error::Io {
        path: "<buffer>".into(),
        source,
    }
}

fn derived(path: &Path) -> Result<DerivedMeasure<f64>> {
    DerivedMeasure::resolve(&load_measure_spec::<f64>(path)?)
}

fn moment_table(m: &DerivedMeasure<f64>, qs: &[f64], h: &HistArgs) -> Result<MomentTable<f64>> {
    let levels = parse_levels(&h.levels)?;
    let hists = m.histograms(&levels, &hist_opts(h))?;
    MomentTable::from_histograms(&hists, qs)
}

fn table_csv(table: &MomentTable<f64>, include_entropy: bool) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    table.write_csv(&mut buf, include_entropy)?;
    Ok(buf)
}

/// Rows `part, ratio, orientation, translation_x, translation_y, weight`;
/// `orientation` is the sign on the line and the rotation in turns in the plane.
fn measure_rows<W: Write>(w: &mut csv::Writer<W>, part: &str, m: &Measure<f64>) -> Result<()> {
    let orient = match m.ifs.map().orientation() {
        Orientation::Line(s) => s.as_i32().to_string(),
        Orientation::Plane { alpha } => fmt_real(alpha),
    };
    for (a, p) in m.ifs.translations().iter().zip(m.weights.as_slice()) {
        w.write_record([
            part.to_string(),
            fmt_real(m.ifs.ratio()),
            orient.clone(),
            fmt_real(a.re),
            fmt_real(a.im),
            fmt_real(*p),
        ])?;
    }
    Ok(())
}

const MEASURE_HEADER: [&str; 6] = ["part", "ratio", "orientation", "translation_x", "translation_y", "weight"];

fn measure_json(m: &Measure<f64>) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(&m.to_document()).map_err(|source| Error::Json {
        context: "serialising measure".into(),
        source,
    })?;
    v.push(b'\n');
    Ok(v)
}

fn ek_kind(p: &KindParams) -> Result<EkKind<f64>> {
    let need = |x: Option<f64>, name: &str| x.ok_or_else(|| Error::Usage(format!("--{name} is required for this kind")));
    Ok(match p.kind {
        KindArg::Translations => EkKind::Translations {
            lambda: need(p.lambda, "lambda")?,
            u: p.u.unwrap_or(1.0),
        },
        KindArg::Projections => EkKind::Projections {
            theta: need(p.theta, "theta")?,
            alpha: need(p.alpha, "alpha")?,
            beta: p.beta,
        },
        KindArg::Convolutions => EkKind::Convolutions {
            theta1: need(p.theta1, "theta1")?,
            theta2: need(p.theta2, "theta2")?,
            u: p.u.unwrap_or(1.0),
            rescale: !p.no_rescale,
        },
    })
}

/// Fills absent parameters of `p` with the low end of the swept range so the
/// base kind can be built.
fn with_placeholder(p: &KindParams, param: SweepParam, lo: f64) -> KindParams {
    let some = |x: Option<f64>, hit: bool| if hit { Some(x.unwrap_or(lo)) } else { x };
    KindParams {
        kind: p.kind,
        lambda: some(p.lambda, param == SweepParam::Lambda),
        u: some(p.u, param == SweepParam::U),
        theta: some(p.theta, param == SweepParam::Theta),
        alpha: some(p.alpha, param == SweepParam::Alpha),
        beta: if param == SweepParam::Beta { lo } else { p.beta },
        theta1: some(p.theta1, param == SweepParam::Theta1),
        theta2: some(p.theta2, param == SweepParam::Theta2),
        no_rescale: p.no_rescale,
        c: p.c,
    }
}

/// Parses the arguments and runs; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("selfsim: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command inside a pool of `jobs` workers.
pub fn run(cli: &Cli) -> Result<()> {
    if cli.jobs == 0 {
        return Err(Error::Usage("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {} workers: {e}", cli.jobs)))?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Dim { ifs, q, hist, out } => {
            let qs = parse_qs(q)?;
            let include_entropy = qs.contains(&1.0);
            let table = moment_table(&derived(ifs)?, &qs, hist)?;
            emit(out, &table_csv(&table, include_entropy)?)
        }
        Command::Entropy { ifs, hist, out } => {
            let table = moment_table(&derived(ifs)?, &[], hist)?;
            emit(out, &table_csv(&table, true)?)
        }
        Command::Fourier {
            ifs,
            bands,
            samples,
            base,
            tol,
            beta,
            samples_out,
            out,
        } => {
            let d = derived(ifs)?;
            let measure = match (&d, beta) {
                (DerivedMeasure::SelfSimilar(m), Some(b)) if m.ifs.dim() == AmbientDim::Two => FourierMeasure::Projected {
                    ifs: m.ifs.clone(),
                    p: m.weights.clone(),
                    beta: *b,
                },
                (DerivedMeasure::SelfSimilar(m), None) if m.ifs.dim() == AmbientDim::Two => {
                    return Err(Error::Usage("planar measures need --beta".into()))
                }
                _ => d.fourier(),
            };
            let plan = DecayPlan {
                bands: *bands,
                samples_per_band: *samples,
                base: *base,
                tol: *tol,
                seed: cli.seed,
            };
            let profile = decay_fit(&measure, &plan)?;
            if let Some(path) = samples_out {
                let mut buf = Vec::new();
                profile.write_samples_csv(&mut buf)?;
                write_file(path, &buf)?;
            }
            let mut buf = Vec::new();
            profile.write_bands_csv(&mut buf)?;
            emit(out, &buf)
        }
        Command::Project {
            ifs,
            beta,
            level,
            extra_depth,
            json,
            out,
        } => {
            let m = load_measure::<f64>(ifs)?;
            if let Some(n) = level {
                let opts = HistogramOptions {
                    extra_depth: *extra_depth,
                    ..HistogramOptions::default()
                };
                let h = histogram_pushforward(&m.ifs, &m.weights, *beta, &[*n], &opts)?.pop().expect("one level");
                let mut buf = Vec::new();
                h.write_csv(&mut buf)?;
                return emit(out, &buf);
            }
            let proj = transforms::project_ifs(&m.ifs, &m.weights, *beta)?;
            if let Some(path) = json {
                write_file(path, &measure_json(&proj)?)?;
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(MEASURE_HEADER)?;
            measure_rows(&mut w, "projection", &proj)?;
            emit(out, &w.into_inner().map_err(|e| io_err(e.into_error()))?)
        }
        Command::Convolve {
            ifs,
            other,
            u,
            level,
            q,
            hist,
            out,
        } => {
            let a = load_measure::<f64>(ifs)?;
            let b = load_measure::<f64>(other)?;
            let spec = MeasureSpec {
                base: a.clone(),
                derive: Some(crate::spec::Derivation::Convolution {
                    other: Box::new(b.clone()),
                    u: *u,
                }),
            };
            let d = DerivedMeasure::resolve(&spec)?;
            if let Some(n) = level {
                let h = transforms::convolution_histograms(&a, &b, *u, &[*n], &hist_opts(hist))?.pop().expect("one level");
                let mut buf = Vec::new();
                h.write_csv(&mut buf)?;
                return emit(out, &buf);
            }
            let qs = parse_qs(q)?;
            let table = moment_table(&d, &qs, hist)?;
            emit(out, &table_csv(&table, qs.contains(&1.0))?)
        }
        Command::Skipkeep { ifs, k, json, part, out } => {
            let m = load_measure::<f64>(ifs)?;
            let sk = transforms::skip_keep(&m, *k, DEFAULT_WORD_BUDGET)?;
            let keep = sk.scaled_eta()?;
            if let Some(path) = json {
                let chosen = match part {
                    PartArg::Skip => sk.part(Part::Skip)?,
                    PartArg::Keep => sk.part(Part::Keep)?,
                };
                write_file(path, &measure_json(&chosen)?)?;
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(MEASURE_HEADER)?;
            measure_rows(&mut w, "skip", &sk.nu)?;
            measure_rows(&mut w, "keep", &keep)?;
            emit(out, &w.into_inner().map_err(|e| io_err(e.into_error()))?)
        }
        Command::Ekscan {
            params,
            n,
            t_grid,
            lambda_range,
            u_range,
            theta_range,
            alpha_range,
            beta_range,
            theta1_range,
            theta2_range,
            out,
        } => {
            let ranges = [
                (SweepParam::Lambda, lambda_range),
                (SweepParam::U, u_range),
                (SweepParam::Theta, theta_range),
                (SweepParam::Alpha, alpha_range),
                (SweepParam::Beta, beta_range),
                (SweepParam::Theta1, theta1_range),
                (SweepParam::Theta2, theta2_range),
            ];
            let given: Vec<_> = ranges.iter().filter_map(|(p, r)| r.as_ref().map(|r| (*p, r))).collect();
            if given.len() > 1 {
                return Err(Error::Usage("sweep one parameter at a time".into()));
            }
            let mut buf = Vec::new();
            if let Some(&(param, range)) = given.first() {
                let (lo, hi, steps) = parse_range(range)?;
                let kind = ek_kind(&with_placeholder(params, param, lo))?;
                let spec = EkSpec {
                    kind,
                    n: *n,
                    c: params.c,
                    t_grid: *t_grid,
                };
                let rows = ekscan::ek_sweep(&spec, param, lo, hi, steps)?;
                ekscan::write_sweep_csv(&rows, &mut buf)?;
            } else {
                let spec = EkSpec {
                    kind: ek_kind(params)?,
                    n: *n,
                    c: params.c,
                    t_grid: *t_grid,
                };
                let r = ekscan::ek_badness(&spec)?;
                let mut w = csv::Writer::from_writer(&mut buf);
                w.write_record(["n", "eps", "delta", "good", "badness", "witness_t"])?;
                for x in &r.residuals {
                    w.write_record([
                        x.n.to_string(),
                        fmt_real(x.eps),
                        x.delta.map(fmt_real).unwrap_or_default(),
                        (x.good as u8).to_string(),
                        fmt_real(r.badness),
                        fmt_real(r.witness_t),
                    ])?;
                }
                w.flush().map_err(io_err)?;
            }
            emit(out, &buf)
        }
        Command::Ekcount {
            params,
            n,
            delta,
            slack,
            out,
        } => {
            let ns = parse_levels(n)?;
            let spec = CountSpec {
                slack: *slack,
                ..CountSpec::new(ek_kind(params)?, params.c, *delta)
            };
            let report = ekscan::ek_count_sequences(&spec, &ns)?;
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            emit(out, &buf)
        }
        Command::Sweep {
            ifs,
            param,
            range,
            q,
            hist,
            out,
        } => {
            let (lo, hi, steps) = parse_range(range)?;
            let spec = load_measure_spec::<f64>(ifs)?;
            let qs = [*q];
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["parameter", "D_lo", "D_point", "D_hi"])?;
            for v in ekscan::linspace(lo, hi, steps) {
                let d = sweep_member(&spec, *param, v)?;
                let table = moment_table(&d, &qs, hist)?;
                let est = if *q == 1.0 { estimate_d1(&table)? } else { estimate_dq(&table, *q)? };
                w.write_record([fmt_real(v), fmt_real(est.lo), fmt_real(est.point), fmt_real(est.hi)])?;
            }
            emit(out, &w.into_inner().map_err(|e| io_err(e.into_error()))?)
        }
        Command::Check { ifs, out } => {
            let d = derived(ifs)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["measure", "check", "passed", "value"])?;
            match &d {
                DerivedMeasure::SelfSimilar(m) => check_measure(&mut w, "measure", m)?,
                DerivedMeasure::Projected { base, .. } => check_measure(&mut w, "base", base)?,
                DerivedMeasure::Convolved { first, second, .. } => {
                    check_measure(&mut w, "first", first)?;
                    check_measure(&mut w, "second", second)?;
                }
            }
            emit(out, &w.into_inner().map_err(|e| io_err(e.into_error()))?)
        }
    }
}

fn sweep_member(spec: &MeasureSpec<f64>, param: SweepArg, v: f64) -> Result<DerivedMeasure<f64>> {
    use crate::ifs::{HomogeneousIfs, Similarity};
    use crate::spec::Derivation;
    let mut spec = spec.clone();
    match param {
        SweepArg::Ratio => {
            let map = match spec.base.ifs.map().orientation() {
                Orientation::Line(s) => Similarity::line(v, s)?,
                Orientation::Plane { alpha } => Similarity::plane(v, alpha)?,
            };
            let ifs = HomogeneousIfs::new(map, spec.base.ifs.translations().to_vec(), spec.base.ifs.label())?;
            spec.base = Measure::new(ifs, spec.base.weights.clone())?;
        }
        SweepArg::Beta => {
            if spec.base.ifs.dim() != AmbientDim::Two {
                return Err(Error::Usage("a beta sweep needs a planar base system".into()));
            }
            spec.derive = Some(Derivation::Projection { beta: v });
        }
        SweepArg::U => match &mut spec.derive {
            Some(Derivation::Convolution { u, .. }) => *u = v,
            _ => return Err(Error::Usage("a u sweep needs a convolution document".into())),
        },
    }
    DerivedMeasure::resolve(&spec)
}

fn check_row<W: Write>(w: &mut csv::Writer<W>, who: &str, name: &str, ok: bool, value: String) -> Result<()> {
    w.write_record([who, name, if ok { "true" } else { "false" }, value.as_str()])?;
    Ok(())
}

fn check_measure<W: Write>(w: &mut csv::Writer<W>, who: &str, m: &Measure<f64>) -> Result<()> {
    let ifs = &m.ifs;
    let p = &m.weights;
    let sum: f64 = p.as_slice().iter().sum();
    check_row(w, who, "weights_sum", (sum - 1.0).abs() < 1e-12, fmt_real(sum))?;

    let h = p.entropy();
    let hmax = (ifs.maps() as f64).log2();
    check_row(w, who, "entropy_bound", (0.0..=hmax + 1e-12).contains(&h), fmt_real(h))?;
    check_row(w, who, "similarity_dimension", true, fmt_real(similarity_dimension(ifs, p)?))?;

    let depth = ((16.0 / (ifs.maps() as f64).log2()).floor() as u32).clamp(1, 12);
    let ssc = match check_strong_separation(ifs, depth, 1 << 17)? {
        crate::ifs::SeparationCertificate::Separated => "separated".to_string(),
        crate::ifs::SeparationCertificate::Inconclusive { first, second } => format!("inconclusive:{first}:{second}"),
    };
    check_row(w, who, "strong_separation", ssc == "separated", ssc)?;
    let cf = closed_form_dq(ifs, p, 2.0)?;
    check_row(w, who, "closed_form_d2", cf.separated, fmt_real(cf.value))?;

    let hist = crate::discretize::histogram(ifs, p, 6, DEFAULT_EXTRA_DEPTH)?;
    let (lo, hi) = (hist.total_lower(), hist.total_upper());
    check_row(w, who, "histogram_mass", lo <= 1.0 + 1e-12 && hi >= 1.0 - 1e-12, format!("{}:{}", fmt_real(lo), fmt_real(hi)))?;

    let tol = 1e-10;
    let xis: [Point<f64>; 4] = [
        Point::new(0.37, 0.0),
        Point::new(1.9, -0.4),
        Point::new(7.3, 2.2),
        Point::new(31.1, 0.0),
    ];
    let xis: Vec<Point<f64>> = xis
        .iter()
        .map(|z| if ifs.dim() == AmbientDim::One { Point::new(z.re, 0.0) } else { *z })
        .collect();
    let mut worst_mod: f64 = 0.0;
    let mut worst_conj: f64 = 0.0;
    let mut worst_ref: f64 = 0.0;
    let mut ok = (true, true, true);
    for xi in xis {
        let f = ft_eval(ifs, p, xi, tol)?;
        worst_mod = worst_mod.max(f.abs());
        ok.0 &= f.abs() <= 1.0 + f.error;
        let g = ft_eval(ifs, p, -xi, tol)?;
        let d = (g.value - f.value.conj()).norm();
        worst_conj = worst_conj.max(d);
        ok.1 &= d <= f.error + g.error;
        let tail = ft_eval(ifs, p, ifs.map().apply_adjoint(xi), tol)?;
        let r = (first_factor(ifs, p, xi) * tail.value - f.value).norm();
        worst_ref = worst_ref.max(r);
        ok.2 &= r <= 2.0 * tol;
    }
    check_row(w, who, "fourier_modulus", ok.0, fmt_real(worst_mod))?;
    check_row(w, who, "fourier_conjugate", ok.1, fmt_real(worst_conj))?;
    check_row(w, who, "fourier_refinement", ok.2, fmt_real(worst_ref))?;
    Ok(())
}
