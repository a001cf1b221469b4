//! `boltzmann`: simulate the billiard, construct arcs and periodic orbits,
//! estimate the threshold on `beta` and run parameter sweeps.
//!
//! Exit codes: 0 ok, 1 I/O, 2 escape or collision, 3 solver failure, 64 usage.

mod check;
mod config;
mod error;
mod output;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use boltzmann::orbits::find_periodic_orbit;
use boltzmann::variational::{minimize_arc, ode_residual, ArcOptions};
use boltzmann::{billiard_map, check_semiconjugacy, realize_word, State, SymbolWord, Vec2};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{BetaBarConfig, OrbitConfig, ParamsConfig, RunConfig};
use error::CliError;
use output::{OrbitRecord, TrajectoryWriter, SCHEMA_VERSION};

#[derive(Debug, Parser)]
#[command(name = "boltzmann", version, about = "Boltzmann billiard toolkit")]
struct Cli {
    /// TOML config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct ParamFlags {
    /// Energy h > 0.
    #[arg(long)]
    h: Option<f64>,
    /// Distance L from the centre to the wall.
    #[arg(long)]
    l: Option<f64>,
    /// Coefficient of the inverse-square term.
    #[arg(long)]
    beta: Option<f64>,
}

impl ParamFlags {
    fn config(&self) -> ParamsConfig {
        ParamsConfig { h: self.h, l: self.l, beta: self.beta }
    }
}

#[derive(Debug, Args, Default)]
struct OrbitFlags {
    /// Bounce points are kept in [-X, X] with X = half_width * L.
    #[arg(long)]
    half_width: Option<f64>,
    /// Segments of each discretized arc.
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    residual_tol: Option<f64>,
    #[arg(long)]
    closure_tol: Option<f64>,
    /// Samples per arc in trajectory files.
    #[arg(long)]
    samples: Option<usize>,
}

impl OrbitFlags {
    fn config(&self) -> OrbitConfig {
        OrbitConfig {
            half_width: self.half_width,
            nodes: self.nodes,
            grad_tol: self.grad_tol,
            residual_tol: self.residual_tol,
            closure_tol: self.closure_tol,
            samples: self.samples,
            ..Default::default()
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Iterate the billiard map from a launch and write the trajectory CSV.
    Simulate {
        #[command(flatten)]
        params: ParamFlags,
        /// Launch abscissa on the wall.
        #[arg(long, allow_hyphen_values = true)]
        x: Option<f64>,
        /// Launch direction from the +x axis, in (0, pi).
        #[arg(long)]
        angle: Option<f64>,
        /// Launch from the periodic orbit of this word instead of --x/--angle.
        #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["x", "angle"])]
        word: Option<String>,
        #[arg(long)]
        bounces: Option<usize>,
        /// Samples per arc.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Minimize the Maupertuis functional between two wall points.
    Arc {
        #[command(flatten)]
        params: ParamFlags,
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        x1: Option<f64>,
        /// Winding number, nonzero.
        #[arg(long, allow_hyphen_values = true)]
        k: Option<i64>,
        #[command(flatten)]
        orbit: OrbitFlags,
        /// Directory for arc.json and trajectory.csv.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Find the periodic orbit of a word and write orbit.json and trajectory.csv.
    Periodic {
        #[command(flatten)]
        params: ParamFlags,
        /// Comma-separated windings, e.g. 1,-2.
        #[arg(long, allow_hyphen_values = true)]
        word: Option<String>,
        #[command(flatten)]
        orbit: OrbitFlags,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Realize a finite word inside padding periods and check its symbols.
    Word {
        #[command(flatten)]
        params: ParamFlags,
        #[arg(long, allow_hyphen_values = true)]
        word: Option<String>,
        /// Copies of the word on each side.
        #[arg(long)]
        n_pad: Option<usize>,
        /// Symbols compared in the semi-conjugacy check.
        #[arg(long)]
        window: Option<usize>,
        #[command(flatten)]
        orbit: OrbitFlags,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Estimate the largest beta for which the symbolic construction applies.
    BetaBar {
        #[command(flatten)]
        params: ParamFlags,
        #[arg(long)]
        c_points: Option<usize>,
        #[arg(long)]
        phi_points: Option<usize>,
        #[arg(long)]
        rel_tol: Option<f64>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Resumable sweep over an (h, L, beta) grid, one JSON line per cell.
    Sweep {
        /// Comma-separated energies.
        #[arg(long, value_delimiter = ',')]
        h: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        l: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        beta: Option<Vec<f64>>,
        /// Count periodic words up to this length.
        #[arg(long)]
        word_length: Option<usize>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        symbols: Option<Vec<i64>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        /// Stop after this many new cells; a later run resumes.
        #[arg(long)]
        max_cells: Option<usize>,
        #[command(flatten)]
        orbit: OrbitFlags,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run invariant suites.
    Check {
        #[command(flatten)]
        params: ParamFlags,
        /// Suites to run (default all): energy, ode, mirror, gradient, periodic, beta-bar.
        #[arg(long = "suite")]
        suites: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(64) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit()
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate { params, x, angle, word, bounces, samples, out } => {
            let p = config::params(&params.config(), &cfg.params)?;
            let s = &cfg.simulate;
            let bounces = bounces.or(s.bounces).unwrap_or(5);
            let samples = samples.or(s.samples).unwrap_or(boltzmann::propagator::DEFAULT_SAMPLES).max(2);
            let out = path_or(out, &s.out, "trajectory.csv");
            let start = match word.or(if x.is_none() && angle.is_none() { s.word.clone() } else { None }) {
                Some(w) => {
                    let w = SymbolWord::periodic(config::parse_word(&w)?).map_err(CliError::from_core)?;
                    let opts = config::orbit_options(&OrbitConfig::default(), &cfg.orbit)?;
                    find_periodic_orbit(&w, &p, &opts).map_err(CliError::from_solver)?.initial_state()
                }
                None => {
                    let x = x.or(s.x).unwrap_or(0.5);
                    let angle = angle.or(s.angle).unwrap_or(std::f64::consts::FRAC_PI_2);
                    if !(angle > 0.0 && angle < std::f64::consts::PI) {
                        return Err(CliError::Usage(format!("launch angle must lie in (0, pi), got {angle}")));
                    }
                    State::launch(x, angle, &p).map_err(CliError::from_core)?
                }
            };
            simulate(&start, &p, bounces, samples, &out)
        }
        Command::Arc { params, x0, x1, k, orbit, out_dir } => {
            let p = config::params(&params.config(), &cfg.params)?;
            let a = &cfg.arc;
            let x0 = x0.or(a.x0).unwrap_or(0.0);
            let x1 = x1.or(a.x1).unwrap_or(0.0);
            let k = k.or(a.k).unwrap_or(1);
            if k == 0 {
                return Err(CliError::Usage("winding 0 is not a symbol".into()));
            }
            let opts = config::orbit_options(&orbit.config(), &cfg.orbit)?;
            let dir = path_or(out_dir, &a.out_dir, ".");
            arc(x0, x1, k, &p, &opts.arc, &dir)
        }
        Command::Periodic { params, word, orbit, out_dir } => {
            let p = config::params(&params.config(), &cfg.params)?;
            let word = word_arg(word, &cfg.orbit)?;
            let opts = config::orbit_options(&orbit.config(), &cfg.orbit)?;
            let dir = path_or(out_dir, &cfg.orbit.out_dir, ".");
            guarded("periodic", &dir, || periodic(&word, &p, &opts, &dir))
        }
        Command::Word { params, word, n_pad, window, orbit, out_dir } => {
            let p = config::params(&params.config(), &cfg.params)?;
            let word = word_arg(word, &cfg.orbit)?;
            let opts = config::orbit_options(&orbit.config(), &cfg.orbit)?;
            let n_pad = n_pad.or(cfg.orbit.n_pad).unwrap_or(1);
            let window = window.or(cfg.orbit.window).unwrap_or(4);
            let dir = path_or(out_dir, &cfg.orbit.out_dir, ".");
            guarded("word", &dir, || realize(&word, &p, n_pad, window, &opts, &dir))
        }
        Command::BetaBar { params, c_points, phi_points, rel_tol, out } => {
            let p = config::params(&params.config(), &cfg.params)?;
            let opts = config::beta_bar_options(&BetaBarConfig { c_points, phi_points, rel_tol }, &cfg.beta_bar)?;
            let b = boltzmann::estimate_beta_bar(&p, &opts).map_err(CliError::from_core)?;
            #[derive(Serialize)]
            struct Record {
                schema_version: u32,
                h: f64,
                l: f64,
                beta_bar: f64,
                cap: f64,
                capped: bool,
                options: boltzmann::orbits::BetaBarOptions,
            }
            let rec = Record {
                schema_version: SCHEMA_VERSION,
                h: p.h,
                l: p.l,
                beta_bar: b.beta_bar,
                cap: b.cap,
                capped: b.capped,
                options: opts,
            };
            match out {
                Some(path) => output::write_json(&path, &rec)?,
                None => println!("{}", serde_json::to_string(&rec).map_err(|e| CliError::Io(e.to_string()))?),
            }
            Ok(())
        }
        Command::Sweep { h, l, beta, word_length, symbols, seed, threads, max_cells, orbit, out } => {
            let s = &cfg.sweep;
            let spec = sweep::SweepSpec {
                h: h.or(s.h.clone()).unwrap_or_else(|| vec![1.0]),
                l: l.or(s.l.clone()).unwrap_or_else(|| vec![1.0]),
                beta: beta.or(s.beta.clone()).unwrap_or_else(|| vec![0.01]),
                word_length: word_length.or(s.word_length).unwrap_or(1),
                symbols: symbols.or(s.symbols.clone()).unwrap_or_else(|| vec![1, -1]),
                seed: seed.or(s.seed).unwrap_or(0),
                orbit: config::orbit_options(&orbit.config(), &cfg.orbit)?,
                beta_bar: config::beta_bar_options(&BetaBarConfig::default(), &cfg.beta_bar)?,
                threads: threads.or(s.threads),
                max_cells,
            };
            let out = path_or(out, &s.out, "sweep.jsonl");
            let sum = sweep::run_sweep(&spec, &out)?;
            println!(
                "sweep: {} cells, {} already done, {} computed, {} remaining -> {}",
                sum.total,
                sum.already_done,
                sum.computed,
                sum.remaining,
                out.display()
            );
            Ok(())
        }
        Command::Check { params, suites } => {
            let p = config::params(&params.config(), &cfg.params)?;
            let opts = config::orbit_options(&OrbitConfig::default(), &cfg.orbit)?;
            let suites: Vec<String> =
                if suites.is_empty() { check::SUITES.iter().map(|s| s.to_string()).collect() } else { suites };
            let mut failed = Vec::new();
            for name in &suites {
                let r = check::run(name, &p, &opts)
                    .ok_or_else(|| CliError::Usage(format!("unknown suite {name:?}; known: {:?}", check::SUITES)))?;
                println!("check {}: {} {}", r.name, if r.pass { "PASS" } else { "FAIL" }, r.detail);
                if !r.pass {
                    failed.push(r.name);
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Solver { message: format!("failed suites {failed:?}"), diagnostics: None })
            }
        }
    }
}

fn path_or(flag: Option<PathBuf>, cfg: &Option<String>, default: &str) -> PathBuf {
    flag.or_else(|| cfg.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from(default))
}

fn word_arg(flag: Option<String>, cfg: &OrbitConfig) -> Result<Vec<i64>, CliError> {
    let w = flag.or(cfg.word.clone()).ok_or_else(|| CliError::Usage("a word is required (--word 1,-2)".into()))?;
    config::parse_word(&w)
}

/// Run a solver command; on solver failure also write `diagnostics.json`.
fn guarded(command: &str, dir: &Path, f: impl FnOnce() -> Result<(), CliError>) -> Result<(), CliError> {
    let r = f();
    if let Err(e @ CliError::Solver { .. }) = &r {
        let diagnostics = match e {
            CliError::Solver { diagnostics, .. } => diagnostics.clone(),
            _ => None,
        };
        let d = output::Diagnostics { schema_version: SCHEMA_VERSION, command, error: e.to_string(), diagnostics };
        output::write_json(&dir.join("diagnostics.json"), &d)?;
        println!("{}", serde_json::to_string(&d).unwrap_or_default());
    }
    r
}

fn simulate(start: &State, p: &boltzmann::Params, bounces: usize, samples: usize, out: &Path) -> Result<(), CliError> {
    let mut w = TrajectoryWriter::create(out)?;
    let mut s = *start;
    for i in 0..bounces {
        let arc = match boltzmann::propagator::propagate_to_wall_sampled(&s, p, samples) {
            Ok(a) => a,
            Err(e) => {
                w.finish()?;
                println!("simulate: stopped after {i} of {bounces} arcs: {e}");
                return Err(CliError::from_core(e));
            }
        };
        w.push(&arc)?;
        s = boltzmann::reflect(&arc.end, p).map_err(CliError::from_core)?;
    }
    let n = w.finish()?;
    println!("simulate: {n} arcs -> {}", out.display());
    Ok(())
}

fn arc(x0: f64, x1: f64, k: i64, p: &boltzmann::Params, opts: &ArcOptions, dir: &Path) -> Result<(), CliError> {
    let z0 = Vec2::new(x0, -p.l);
    let z1 = Vec2::new(x1, -p.l);
    let a = guarded_arc(minimize_arc(z0, z1, k, p, opts), dir)?;
    #[derive(Serialize)]
    struct Record {
        schema_version: u32,
        params: boltzmann::Params,
        x0: f64,
        x1: f64,
        k: i64,
        maupertuis: f64,
        jacobi_length: f64,
        exact_jacobi_length: f64,
        omega: f64,
        flight_time: f64,
        winding: i64,
        min_radius: f64,
        ode_residual: f64,
        iterations: usize,
    }
    let rec = Record {
        schema_version: SCHEMA_VERSION,
        params: *p,
        x0,
        x1,
        k,
        maupertuis: a.m_value,
        jacobi_length: a.l_value,
        exact_jacobi_length: a.exact_jacobi_length(),
        omega: a.omega,
        flight_time: a.solution.flight_time,
        winding: a.solution.winding,
        min_radius: a.solution.min_radius(),
        ode_residual: ode_residual(&a.solution, p).map_err(CliError::from_solver)?,
        iterations: a.iterations,
    };
    output::write_json(&dir.join("arc.json"), &rec)?;
    output::write_trajectory(&dir.join("trajectory.csv"), [&a.solution])?;
    println!("arc: L = {}, M = {} -> {}", rec.jacobi_length, rec.maupertuis, dir.display());
    Ok(())
}

fn guarded_arc<T>(r: boltzmann::Result<T>, dir: &Path) -> Result<T, CliError> {
    r.map_err(CliError::from_core).map_err(|e| {
        if let CliError::Solver { diagnostics, .. } = &e {
            let d = output::Diagnostics {
                schema_version: SCHEMA_VERSION,
                command: "arc",
                error: e.to_string(),
                diagnostics: diagnostics.clone(),
            };
            if let Err(io) = output::write_json(&dir.join("diagnostics.json"), &d) {
                return io;
            }
        }
        e
    })
}

fn periodic(word: &[i64], p: &boltzmann::Params, opts: &boltzmann::OrbitOptions, dir: &Path) -> Result<(), CliError> {
    let w = SymbolWord::periodic(word.to_vec()).map_err(CliError::from_core)?;
    let o = find_periodic_orbit(&w, p, opts).map_err(CliError::from_solver)?;
    o.certify(opts).map_err(CliError::from_solver)?;
    output::write_json(&dir.join("orbit.json"), &OrbitRecord::new(&o, p))?;
    output::write_trajectory(&dir.join("trajectory.csv"), o.arcs.iter().map(|a| &a.solution))?;
    println!("periodic: {w}: W = {}, max residual {:.3e} -> {}", o.w_value, o.max_residual(), dir.display());
    Ok(())
}

fn realize(
    word: &[i64],
    p: &boltzmann::Params,
    n_pad: usize,
    window: usize,
    opts: &boltzmann::OrbitOptions,
    dir: &Path,
) -> Result<(), CliError> {
    let seg = realize_word(word, p, n_pad, opts).map_err(CliError::from_solver)?;
    seg.orbit.certify(opts).map_err(CliError::from_solver)?;
    let report = check_semiconjugacy(&seg.start, p, window).map_err(|e| e.to_string());
    let agree = report.as_ref().is_ok_and(|r| r.agree);
    let mut rec = OrbitRecord::new(&seg.orbit, p);
    rec.semiconjugacy = Some(report);
    output::write_json(&dir.join("orbit.json"), &rec)?;
    let periods = 2 * n_pad + 1;
    let arcs = (0..periods).flat_map(|_| seg.arcs.iter());
    output::write_trajectory(&dir.join("trajectory.csv"), arcs)?;
    println!(
        "word: {}: {} periods, semi-conjugacy over window {window}: {} -> {}",
        seg.context,
        periods,
        if agree { "agrees" } else { "differs" },
        dir.display()
    );
    // replaying one period must also reproduce the word
    let mut s = seg.start;
    for &k in word {
        let (next, a) = billiard_map(&s, p).map_err(CliError::from_core)?;
        if a.winding != k {
            return Err(CliError::Solver { message: format!("replay read {} for {k}", a.winding), diagnostics: None });
        }
        s = next;
    }
    Ok(())
}
