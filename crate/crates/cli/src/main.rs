//! Command-line surface for the compile-and-verify pipeline. Subcommands map
//! one-to-one onto the library stages; every artifact is written atomically
//! and all randomized sampling is seed-pinned for reproducible runs.
//!
//! Exit codes: 0 verdict produced and oracle-consistent, 1 usage or parse
//! error, 2 verdict-oracle inconsistency, 3 numerical failure, 4 robustness
//! certification failure.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tm2flow_core::analytic;
use tm2flow_core::config::PipelineConfig;
use tm2flow_core::corpus;
use tm2flow_core::euler;
use tm2flow_core::flow::{self, EvalField, FlowError, PathMode};
use tm2flow_core::pivp;
use tm2flow_core::poly::PolyVectorField;
use tm2flow_core::scalar::Ctx;
use tm2flow_core::sphere;
use tm2flow_core::tm::{self, Tape};

#[derive(Parser)]
#[command(
    name = "tm2flow",
    about = "Compile Turing machines to polynomial vector fields and verify reachability against the exact simulator",
    version
)]
struct Cli {
    /// key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// machine-readable JSON on stdout
    #[arg(long, global = true)]
    json: bool,
    /// output file for the main artifact
    #[arg(short, long, global = true)]
    out_file: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    #[arg(long, global = true)]
    precision_bits: Option<usize>,
    #[arg(long, global = true)]
    k0: Option<usize>,
    #[arg(long, global = true)]
    epsilon: Option<String>,
    #[arg(long, global = true)]
    delta_v: Option<String>,
    #[arg(long, global = true)]
    gain_c: Option<String>,
    #[arg(long, global = true)]
    sharpness: Option<u32>,
    #[arg(long, global = true)]
    sigma_in: Option<u32>,
    #[arg(long, global = true)]
    sigma_out: Option<u32>,
    #[arg(long, global = true)]
    rel_tol: Option<String>,
    #[arg(long, global = true)]
    abs_tol: Option<String>,
    #[arg(long, global = true)]
    horizon: Option<String>,
    #[arg(long, global = true)]
    repa_exponent: Option<u32>,
    #[arg(long, global = true)]
    robust_samples: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Discrete-machine operations
    Tm {
        #[command(subcommand)]
        sub: TmCommand,
    },
    /// Build pipeline artifacts
    Compile {
        #[command(subcommand)]
        sub: CompileCommand,
    },
    /// Stereographic lift of a field JSON with verification report
    Lift {
        #[arg(long)]
        field: PathBuf,
        /// prefactor degree (defaults to the field degree)
        #[arg(long)]
        degree: Option<u32>,
    },
    /// Integrate a field JSON from an initial point; writes trajectory CSV
    Integrate {
        #[arg(long)]
        field: PathBuf,
        /// comma-separated decimal initial point
        #[arg(long)]
        initial: String,
        #[arg(long)]
        t_end: String,
    },
    /// Full pipeline: encode, certify, compile, integrate, verdict
    HaltCheck {
        #[arg(long)]
        machine: PathBuf,
        #[arg(long)]
        tape: String,
        /// output window digits, length 2k+1
        #[arg(long)]
        out: String,
        #[arg(long, default_value_t = 0)]
        k: usize,
        #[arg(long, default_value = "chart")]
        path: String,
    },
    /// Time-δ map path of the reparametrized field
    IterateMap {
        #[arg(long)]
        machine: PathBuf,
        #[arg(long)]
        tape: String,
        #[arg(long)]
        out: String,
        #[arg(long, default_value_t = 0)]
        k: usize,
    },
    /// Euler-embedding dimension accounting
    EulerDim {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        d: u64,
    },
}

#[derive(Subcommand)]
enum TmCommand {
    /// Run the discrete simulator
    Run {
        #[arg(long)]
        machine: PathBuf,
        #[arg(long)]
        tape: String,
        #[arg(long, default_value_t = 64)]
        max_steps: usize,
    },
    /// Encode a tape/state pair into the natural-number triple
    Encode {
        #[arg(long)]
        tape: String,
        #[arg(long, default_value_t = 1)]
        state: u32,
    },
}

#[derive(Subcommand)]
enum CompileCommand {
    /// Robust analytic step map (JSON DAG) with its certificate
    Map {
        #[arg(long)]
        machine: PathBuf,
    },
    /// Autonomous polynomial system with initial template
    Ode {
        #[arg(long)]
        machine: PathBuf,
        #[arg(long, default_value = "|")]
        tape: String,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Inconsistency(String),
    Numerical(String),
    Certification(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Inconsistency(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Certification(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m)
            | CliError::Inconsistency(m)
            | CliError::Numerical(m)
            | CliError::Certification(m) => m,
        }
    }
}

fn classify_flow(e: FlowError) -> CliError {
    match e {
        FlowError::OracleInconsistency(m) => CliError::Inconsistency(m),
        FlowError::StepUnderflow { .. } | FlowError::PoleProximity(_) | FlowError::LegBudget(_) => {
            CliError::Numerical(e.to_string())
        }
        FlowError::Pivp(pivp::PivpError::MissingCertificate) => {
            CliError::Certification(e.to_string())
        }
        FlowError::Pivp(pivp::PivpError::Analytic(analytic::AnalyticError::Certificate(m))) => {
            CliError::Certification(m)
        }
        other => CliError::Usage(other.to_string()),
    }
}

fn atomic_write(path: &Path, contents: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)
        .and_then(|_| std::fs::rename(&tmp, path))
        .map_err(|e| CliError::Usage(format!("write {}: {e}", path.display())))
}

fn load_machine(path: &Path) -> Result<tm::TuringMachine, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("read {}: {e}", path.display())))?;
    tm::parse_machine(&text).map_err(|e| CliError::Usage(e.to_string()))
}

fn build_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("read {}: {e}", path.display())))?;
        cfg.apply_file(&text).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    cfg.apply_env();
    let o = &cli.overrides;
    let mut set = |key: &str, val: Option<String>| -> Result<(), CliError> {
        if let Some(v) = val {
            cfg.set(key, &v).map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Ok(())
    };
    set("precision_bits", o.precision_bits.map(|v| v.to_string()))?;
    set("k0", o.k0.map(|v| v.to_string()))?;
    set("epsilon", o.epsilon.clone())?;
    set("delta_v", o.delta_v.clone())?;
    set("gain_c", o.gain_c.clone())?;
    set("sharpness", o.sharpness.map(|v| v.to_string()))?;
    set("sigma_in", o.sigma_in.map(|v| v.to_string()))?;
    set("sigma_out", o.sigma_out.map(|v| v.to_string()))?;
    set("rel_tol", o.rel_tol.clone())?;
    set("abs_tol", o.abs_tol.clone())?;
    set("horizon_unknown", o.horizon.clone())?;
    set("repa_exponent", o.repa_exponent.map(|v| v.to_string()))?;
    set("robust_samples", o.robust_samples.map(|v| v.to_string()))?;
    set("seed", o.seed.map(|v| v.to_string()))?;
    Ok(cfg)
}

fn parse_window(s: &str) -> Result<Vec<u8>, CliError> {
    tm::parse_window(s).map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = build_config(cli)?;
    match &cli.command {
        Command::Tm { sub } => match sub {
            TmCommand::Run { machine, tape, max_steps } => {
                let m = load_machine(machine)?;
                let t = Tape::parse(tape, cfg.k0).map_err(|e| CliError::Usage(e.to_string()))?;
                let outcome =
                    tm::run(&m, t, *max_steps).map_err(|e| CliError::Numerical(e.to_string()))?;
                match outcome {
                    tm::RunOutcome::Halted { steps, tape } => {
                        if cli.json {
                            println!(
                                "{}",
                                serde_json::json!({
                                    "verdict": "halted", "steps": steps,
                                    "tape": tape.literal(),
                                })
                            );
                        } else {
                            println!("HALTED after {steps} steps; tape {}", tape.literal());
                        }
                    }
                    tm::RunOutcome::Running(c) => {
                        if cli.json {
                            println!(
                                "{}",
                                serde_json::json!({
                                    "verdict": "running", "state": c.state,
                                    "tape": c.tape.literal(),
                                })
                            );
                        } else {
                            println!(
                                "RUNNING after {max_steps} steps; state {} tape {}",
                                c.state,
                                c.tape.literal()
                            );
                        }
                    }
                }
            }
            TmCommand::Encode { tape, state } => {
                let t = Tape::parse(tape, cfg.k0).map_err(|e| CliError::Usage(e.to_string()))?;
                let enc = tm::encode(&tm::Configuration { state: *state, tape: t });
                if cli.json {
                    println!(
                        "{}",
                        serde_json::json!({
                            "y1": enc.y1.to_string(), "y2": enc.y2.to_string(), "q": enc.q,
                        })
                    );
                } else {
                    println!("{enc}");
                }
            }
        },
        Command::Compile { sub } => match sub {
            CompileCommand::Map { machine } => {
                let m = load_machine(machine)?;
                let map = analytic::build_robust_step(&m, cfg.sigma_in, cfg.sigma_out);
                let ctx = Ctx::new(cfg.precision_bits.min(192));
                let configs = corpus::reachable_encodings(&m, cfg.k0, 12);
                let cert = analytic::verify_robustness(
                    &map,
                    &m,
                    &configs,
                    &cfg.epsilon,
                    cfg.robust_samples,
                    &ctx,
                    cfg.seed,
                )
                .map_err(|e| CliError::Numerical(e.to_string()))?;
                if !cert.pass {
                    return Err(CliError::Certification(format!(
                        "robustness FAIL: worst {} witness {:?}",
                        cert.worst_error, cert.witness
                    )));
                }
                let artifact = map.to_json_string();
                if let Some(path) = &cli.out_file {
                    atomic_write(path, &artifact)?;
                }
                if cli.json {
                    println!("{}", serde_json::to_string_pretty(&cert).unwrap());
                } else {
                    println!(
                        "analytic step map for {}: {} nodes, sigma stages ({}, {}), cert worst error {}",
                        m.name,
                        map.graph.len(),
                        map.sigma_in,
                        map.sigma_out,
                        cert.worst_error
                    );
                }
            }
            CompileCommand::Ode { machine, tape } => {
                let m = load_machine(machine)?;
                let t = Tape::parse(tape, cfg.k0).map_err(|e| CliError::Usage(e.to_string()))?;
                let enc = tm::encode(&tm::Configuration::initial(t));
                let configs = corpus::reachable_encodings(&m, cfg.k0, 12);
                let (clocked, cert) = pivp::certified_clocked_system(&m, &cfg, &configs)
                    .map_err(|e| match e {
                        pivp::PivpError::Analytic(analytic::AnalyticError::Certificate(msg)) => {
                            CliError::Certification(msg)
                        }
                        other => CliError::Numerical(other.to_string()),
                    })?;
                let ode = pivp::autonomize(&clocked)
                    .map_err(|e| CliError::Numerical(e.to_string()))?;
                let artifact = ode.to_json_string(Some(&enc));
                if let Some(path) = &cli.out_file {
                    atomic_write(path, &artifact)?;
                }
                if cli.json {
                    println!(
                        "{}",
                        serde_json::json!({
                            "machine": m.name,
                            "dimension": ode.dim(),
                            "degree": ode.degree,
                            "terms": ode.field.total_terms(),
                            "initial": enc.to_string(),
                            "cert_worst_error": cert.worst_error,
                        })
                    );
                } else {
                    println!(
                        "autonomous system for {}: dimension {}, degree {}, {} monomials (initial {})",
                        m.name,
                        ode.dim(),
                        ode.degree,
                        ode.field.total_terms(),
                        enc
                    );
                }
            }
        },
        Command::Lift { field, degree } => {
            let text = std::fs::read_to_string(field)
                .map_err(|e| CliError::Usage(format!("read {}: {e}", field.display())))?;
            let f = PolyVectorField::from_json_str(&text)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let d = degree.unwrap_or_else(|| f.degree());
            // deterministic rational sample points
            let samples: Vec<Vec<num_rational::BigRational>> = (0..20)
                .map(|i| {
                    (0..f.dim())
                        .map(|j| {
                            tm2flow_core::scalar::rat(
                                ((i * 7 + j * 3) % 19) as i64 - 9,
                                (1 + (i + j) % 7) as i64,
                            )
                        })
                        .collect()
                })
                .collect();
            let (lifted, report) = sphere::lift_with_report(&f, d, &samples)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            if let Some(path) = &cli.out_file {
                atomic_write(path, &lifted.ambient.to_json_string())?;
            }
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&report).unwrap());
            } else {
                println!(
                    "lift: chart degree {} -> ambient degree {}; tangent: {}; pole fixed: {}; consistency {}/{}",
                    report.source_degree,
                    report.lifted_degree,
                    report.tangent,
                    report.north_pole_zero,
                    report.consistency_samples - report.consistency_failures,
                    report.consistency_samples
                );
            }
            if !report.tangent || !report.north_pole_zero || report.consistency_failures > 0 {
                return Err(CliError::Numerical("lift verification failed".into()));
            }
        }
        Command::Integrate { field, initial, t_end } => {
            let text = std::fs::read_to_string(field)
                .map_err(|e| CliError::Usage(format!("read {}: {e}", field.display())))?;
            let f = PolyVectorField::from_json_str(&text)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let ctx = Ctx::new(cfg.precision_bits);
            let y0: Vec<_> = initial
                .split(',')
                .map(|s| {
                    ctx.parse_decimal(s.trim())
                        .ok_or_else(|| CliError::Usage(format!("bad initial value `{s}`")))
                })
                .collect::<Result<_, _>>()?;
            if y0.len() != f.dim() {
                return Err(CliError::Usage(format!(
                    "initial point has {} coordinates, field has {}",
                    y0.len(),
                    f.dim()
                )));
            }
            let t = ctx
                .parse_decimal(t_end)
                .ok_or_else(|| CliError::Usage(format!("bad t_end `{t_end}`")))?;
            let sys = EvalField::new(&ctx, &f);
            let traj = flow::integrate(&sys, &ctx, &cfg, y0, &t)
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            let csv = traj.to_csv(&ctx);
            if let Some(path) = &cli.out_file {
                atomic_write(path, &csv)?;
            } else {
                print!("{csv}");
            }
            eprintln!("integrated: {} steps, {} rejected", traj.steps, traj.rejected);
        }
        Command::HaltCheck { machine, tape, out, k, path } => {
            let m = load_machine(machine)?;
            let t_star = parse_window(out)?;
            let mode = match path.as_str() {
                "chart" => PathMode::Chart,
                "sphere" => PathMode::Sphere,
                "map" => PathMode::Map,
                other => return Err(CliError::Usage(format!("unknown path `{other}`"))),
            };
            let report = halt_check_classified(&m, tape, &t_star, *k, mode, &cfg)?;
            emit_halt_report(cli, &report)?;
        }
        Command::IterateMap { machine, tape, out, k } => {
            let m = load_machine(machine)?;
            let t_star = parse_window(out)?;
            let report = halt_check_classified(&m, tape, &t_star, *k, PathMode::Map, &cfg)?;
            emit_halt_report(cli, &report)?;
        }
        Command::EulerDim { n, d } => {
            let report =
                euler::headline_report(*n, *d).map_err(|e| CliError::Usage(e.to_string()))?;
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&report).unwrap());
            } else {
                println!(
                    "N({n},{d}) = {}\ndim SO(N)xT^N = {} ~ {}\nwithin 1e35: {}",
                    report.capacity, report.dim_m, report.dim_m_scientific, report.headline_check
                );
            }
            if let Some(path) = &cli.out_file {
                atomic_write(path, &serde_json::to_string_pretty(&report).unwrap())?;
            }
        }
    }
    Ok(())
}

fn halt_check_classified(
    m: &tm::TuringMachine,
    tape: &str,
    t_star: &[u8],
    k: usize,
    mode: PathMode,
    cfg: &PipelineConfig,
) -> Result<flow::HaltReport, CliError> {
    flow::halt_check(m, tape, t_star, k, mode, cfg).map_err(classify_flow)
}

fn emit_halt_report(cli: &Cli, report: &flow::HaltReport) -> Result<(), CliError> {
    if let Some(path) = &cli.out_file {
        atomic_write(path, &report.to_json_string())?;
    }
    if cli.json {
        println!("{}", report.to_json_string());
    } else {
        match &report.report.verdict {
            flow::Verdict::Halted { window, t_lo, t_hi, decoded_tape, .. } => {
                println!(
                    "HALTED: machine {} with input {} enters the region at window {} (t in [{}, {}]); output {}",
                    report.machine,
                    report.input,
                    window,
                    t_lo,
                    t_hi,
                    decoded_tape.as_deref().unwrap_or("?")
                );
            }
            flow::Verdict::Unknown { horizon, .. } => {
                println!(
                    "UNKNOWN: machine {} with input {} did not enter the region by horizon {}",
                    report.machine, report.input, horizon
                );
            }
        }
        println!(
            "oracle: halts = {:?}, output matches = {:?}, agreement = {:?}",
            report.oracle_halts, report.oracle_output_matches, report.report.oracle_agrees
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if e.kind() == clap::error::ErrorKind::DisplayHelp
                || e.kind() == clap::error::ErrorKind::DisplayVersion
            {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
