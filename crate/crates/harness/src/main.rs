use std::fs::{self, File};
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ssbcs_core::config::{big_to_f64, r64_to_f64, ConfigError};
use ssbcs_core::scenario::{Scenario, CONFIG_ENV};
use ssbcs_core::sim::adversary::Strategy;
use ssbcs_core::sim::trace::{parse_trace, Trace, TraceEvent};
use ssbcs_core::sim::InitPolicy;
use ssbcs_harness::lemma1::coin_model;
use ssbcs_harness::run::ALPHA;
use ssbcs_harness::{run_monte_carlo, run_once, Campaign, RunMode, RunResult};

#[derive(Parser)]
#[command(name = "ssbcs", version, about = "Simulator and Monte Carlo harness for two-dimensional clock synchronization")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario file; the built-in reference scenario when absent.
    #[arg(short, long, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Reject unknown keys in the scenario file.
    #[arg(long)]
    strict: bool,
    /// Override the adversary strategy.
    #[arg(long)]
    strategy: Option<Strategy>,
    /// Override the initial-state policy.
    #[arg(long, value_enum)]
    init: Option<Init>,
    /// Override the horizon in windows.
    #[arg(long)]
    horizon: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    Synchronized,
    Random,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// One JSON record per line.
    Jsonl,
    /// Aligned text.
    Table,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a scenario and print its derived parameters.
    Validate {
        #[command(flatten)]
        sc: ScenarioArgs,
    },
    /// Simulate one seed, writing its trace and result.
    Run {
        #[command(flatten)]
        sc: ScenarioArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep simulating after stabilization until the horizon.
        #[arg(long)]
        full: bool,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Jsonl)]
        format: Format,
    },
    /// Run many seeds and compare against the theoretical bounds.
    Campaign {
        #[command(flatten)]
        sc: ScenarioArgs,
        /// Number of seeds, starting at the scenario's seed base.
        #[arg(long, conflicts_with = "seed_list")]
        seeds: Option<u64>,
        /// Explicit comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seed_list: Option<Vec<u64>>,
        #[arg(long)]
        full: bool,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Coin-only check of the resynchronization-point frequency.
    Lemma1 {
        #[command(flatten)]
        sc: ScenarioArgs,
        #[arg(long, default_value_t = 100_000)]
        windows: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Nonfaulty MWS nodes; defaults to n1 - f1.
        #[arg(long)]
        planes: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Re-run the seed recorded in a trace and compare byte for byte.
    Replay {
        #[command(flatten)]
        sc: ScenarioArgs,
        trace: PathBuf,
        /// The trace was recorded with --full.
        #[arg(long)]
        full: bool,
    },
}

fn load(a: &ScenarioArgs) -> Result<Scenario, ConfigError> {
    let mut sc = match &a.config {
        Some(p) => Scenario::load(p, a.strict)?,
        None => Scenario::reference(Strategy::SplitBrain, InitPolicy::Random),
    };
    let mut file = sc.file.clone();
    if let Some(s) = a.strategy {
        file.adversary.strategy = s;
    }
    if let Some(i) = a.init {
        file.run.init = match i {
            Init::Synchronized => InitPolicy::Synchronized,
            Init::Random => InitPolicy::Random,
        };
    }
    if let Some(h) = a.horizon {
        file.run.horizon_windows = h;
    }
    if file != sc.file {
        sc = Scenario::from_file(file)?;
    }
    Ok(sc)
}

fn mode(full: bool) -> RunMode {
    if full {
        RunMode::FullHorizon
    } else {
        RunMode::UntilStable
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

fn result_row(r: &RunResult) -> String {
    format!(
        "{:>8} {:>12} {:>8} {:>8} {:>8} {:>8} {:>8}",
        r.seed,
        r.strategy,
        opt(r.stabilization_window),
        r.windows,
        opt(r.max_precision_after_stb),
        r.precision_violations + r.accuracy_violations,
        r.resync_point_count
    )
}

const RESULT_HEADER: &str = "    seed     strategy      stb  windows  prec_stb  violat.   resync";

fn write_runs(w: &mut dyn Write, runs: &[RunResult], fmt: Format) -> io::Result<()> {
    match fmt {
        Format::Jsonl => {
            for r in runs {
                serde_json::to_writer(&mut *w, r)?;
                writeln!(w)?;
            }
        }
        Format::Table => {
            writeln!(w, "{RESULT_HEADER}")?;
            for r in runs {
                writeln!(w, "{}", result_row(r))?;
            }
        }
    }
    Ok(())
}

fn write_summary(w: &mut dyn Write, c: &Campaign, fmt: Format) -> io::Result<()> {
    let s = &c.summary;
    if fmt == Format::Jsonl {
        serde_json::to_writer(&mut *w, s)?;
        return writeln!(w);
    }
    let pf = |b: bool| if b { "PASS" } else { "FAIL" };
    writeln!(w, "strategy                {}", s.strategy)?;
    writeln!(w, "runs                    {} ({} aborted)", s.runs, c.aborted.len())?;
    writeln!(w, "stabilized              {}/{}  all: {}", s.stabilized, s.runs, pf(s.all_stabilized))?;
    writeln!(
        w,
        "per-attempt frequency   {}/{} = {:.4}  lower({}) = {:.4}  q1 bound = {:.3e}  {}",
        s.per_attempt.successes,
        s.per_attempt.trials,
        s.per_attempt.frequency,
        1.0 - ALPHA,
        s.per_attempt.lower,
        s.q1_bound,
        pf(s.per_attempt_pass)
    )?;
    writeln!(w, "q1 closed form          {:.3e}", s.q1_closed_form)?;
    if let Some(d) = &s.stabilization {
        writeln!(
            w,
            "stabilization window    mean {:.2}  min {}  median {}  p95 {}  max {}",
            d.mean, d.min, d.median, d.p95, d.max
        )?;
    }
    writeln!(
        w,
        "expected bound          {:.1} windows (+{:.0}%)  {}",
        s.expected_bound,
        s.mean_slack * 100.0,
        pf(s.mean_pass)
    )?;
    writeln!(
        w,
        "resync windows          {}/{} = {:.4}  lower = {:.4}  lemma bound = {:.4}",
        s.resync.successes, s.resync.trials, s.resync.frequency, s.resync.lower, s.resync_bound
    )?;
    writeln!(w, "max precision after stb {}", opt(s.max_precision_after_stb))?;
    writeln!(w, "horizon failure bound   {:.3e}", s.horizon_failure_bound)?;
    Ok(())
}

fn first_difference(a: &[u8], b: &[u8]) -> Option<usize> {
    let (la, lb): (Vec<&[u8]>, Vec<&[u8]>) = (a.split(|&c| c == b'\n').collect(), b.split(|&c| c == b'\n').collect());
    (0..la.len().max(lb.len())).find(|&i| la.get(i) != lb.get(i)).map(|i| i + 1)
}

fn real_main(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Validate { sc } => {
            let sc = match load(&sc) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(ExitCode::from(2));
                }
            };
            let d = &sc.params.derived;
            println!("valid");
            println!("ring modulus     {}", d.ring.modulus());
            println!("T                {} ticks", d.t);
            println!("eps0/eps1/eps2   {}/{}/{}", d.eps0, d.eps1, d.eps2);
            println!("c0 k0 g0         {} {} {}", d.c0, d.k0, d.g0);
            println!("q0 p0            {} ({:.5}) {} ({:.5})", d.q0, r64_to_f64(d.q0), d.p0, r64_to_f64(d.p0));
            println!("delta_tt0..3     {} {} {} {}", d.delta_tt0, d.delta_tt1, d.delta_tt2, d.delta_tt3);
            println!("q1 bound         {:.6e}", big_to_f64(&d.q1_bound));
            println!("q1 closed form   {:.6e}", d.q1_closed_form);
            println!("expected stb     {:.1} windows", d.stb_exp_windows);
            println!("window           {} sim units", d.window_sim);
            for w in &d.warnings {
                println!("warning: {w}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Run {
            sc,
            seed,
            full,
            out,
            format,
        } => {
            let sc = load(&sc)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let tpath = out.join(format!("trace-{seed}.jsonl"));
            let f = File::create(&tpath).with_context(|| format!("creating {}", tpath.display()))?;
            let (r, _) = run_once(&sc, seed, Trace::writer(Box::new(f)), mode(full))?;
            let rpath = out.join(format!("result-{seed}.json"));
            fs::write(&rpath, serde_json::to_string_pretty(&r)? + "\n")?;
            write_runs(&mut io::stdout().lock(), std::slice::from_ref(&r), format)?;
            log::info!("trace {}, result {}", tpath.display(), rpath.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Campaign {
            sc,
            seeds,
            seed_list,
            full,
            out,
            format,
        } => {
            let sc = load(&sc)?;
            let seeds = match (seed_list, seeds) {
                (Some(l), _) => l,
                (None, Some(n)) => (sc.file.run.seed_base..sc.file.run.seed_base + n).collect(),
                (None, None) => sc.seeds(),
            };
            let c = run_monte_carlo(&sc, &seeds, mode(full));
            for a in &c.aborted {
                eprintln!("seed {} aborted: {}", a.seed, a.error);
            }
            if let Some(dir) = &out {
                fs::create_dir_all(dir)?;
                let mut f = io::BufWriter::new(File::create(dir.join("runs.jsonl"))?);
                write_runs(&mut f, &c.runs, Format::Jsonl)?;
                f.flush()?;
                fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&c.summary)? + "\n")?;
            }
            let mut so = io::stdout().lock();
            if format == Format::Table && c.runs.len() <= 50 {
                write_runs(&mut so, &c.runs, format)?;
                writeln!(so)?;
            }
            write_summary(&mut so, &c, format)?;
            Ok(if c.summary.incomplete {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            })
        }
        Cmd::Lemma1 {
            sc,
            windows,
            seed,
            planes,
            format,
        } => {
            let sc = load(&sc)?;
            let s = &sc.params.system;
            let planes = planes.unwrap_or(s.n1 - s.f1);
            if planes < 2 {
                bail!("the coin model needs at least two nonfaulty MWS nodes");
            }
            let r = coin_model(&sc.params, planes, windows, seed, ALPHA);
            if format == Format::Jsonl {
                println!("{}", serde_json::to_string(&r)?);
            } else {
                println!(
                    "windows {}  with resync point {}  frequency {:.5}  lower({}) {:.5}  bound {:.5}  {}",
                    r.resync.trials,
                    r.resync.successes,
                    r.resync.frequency,
                    1.0 - ALPHA,
                    r.resync.lower,
                    r.bound,
                    if r.pass { "PASS" } else { "FAIL" }
                );
            }
            Ok(if r.pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Cmd::Replay { sc, trace, full } => {
            let sc = load(&sc)?;
            let original = fs::read(&trace).with_context(|| format!("reading {}", trace.display()))?;
            let text = std::str::from_utf8(&original).context("trace is not UTF-8")?;
            let first = text.lines().next().unwrap_or_default();
            let Some(TraceEvent::Start { seed, strategy, .. }) = parse_trace(first)?.into_iter().next() else {
                bail!("{} does not start with a start record", trace.display());
            };
            if strategy != sc.strategy().name() {
                bail!("trace was recorded with strategy {strategy}, scenario uses {}", sc.strategy());
            }
            let (_, t) = run_once(&sc, seed, Trace::Memory(Vec::new()), mode(full))?;
            let again = t.into_bytes();
            match first_difference(&original, &again) {
                None => {
                    println!("identical ({} bytes, seed {seed})", again.len());
                    Ok(ExitCode::SUCCESS)
                }
                Some(line) => {
                    println!("traces differ from line {line}");
                    Ok(ExitCode::from(1))
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match real_main(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
