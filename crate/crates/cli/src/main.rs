//! `sfe-lab`: command-line front end for the exact two-party SFE analysis
//! library. File ingestion, pipeline orchestration, and JSON reports.
//!
//! Commands: decompose, classify, synthesize, simulate, eve-audit, frontier,
//! attack, security. Function tables are `.fn` JSON files; protocols are
//! `.sfe` s-expression files; reports are JSON with exact rationals rendered
//! as "num/den" strings (float annotations are display-only).
//!
//! Exit codes: 0 success or secure verdict, 2 negative verdict, 3 hypothesis
//! violation, 1 usage or parse error.

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use sfe_core::attack::{
    run_alice_message_distinguisher, run_curious_bob, run_curious_bob_sampled, select_minor,
    switch_identity_pairs, verify_switch_identity, AttackError, MinorSelection, Segment,
};
use sfe_core::dsl::{self, ProtocolSpec};
use sfe_core::eve::{audit_independence, audit_likely_input_lemmas, lightness_holds, max_residual};
use sfe_core::exec::{
    build_tree, measure_semihonest_error, node_id_str, run_once, announced_output, EvePolicy,
    TranscriptTree,
};
use sfe_core::frontier::{
    check_frontier_fullness, check_frontier_ordering, check_minvsnomin, compute_frontier, Flavor,
    FrontierParams,
};
use sfe_core::func::{classify, decompose, synthesize_protocol, Decomposition, FunctionTable};
use sfe_core::ratio::{parse_ratio, ratio_str, to_f64};
use sfe_core::Rational;
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_NEGATIVE: u8 = 2;
const EXIT_HYPOTHESIS: u8 = 3;

fn rational_arg(s: &str) -> Result<Rational, String> {
    parse_ratio(s).ok_or_else(|| format!("expected a rational like \"1/8\" or \"3\", got {s:?}"))
}

#[derive(Parser)]
#[command(name = "sfe-lab", version, about = "Exact analysis lab for two-party SFE protocols with a random oracle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every pipeline that builds a transcript tree.
#[derive(Args, Clone)]
struct TreeArgs {
    /// Eavesdropper heaviness threshold; omit to disable the eavesdropper.
    #[arg(long, value_parser = rational_arg)]
    eve_eps: Option<Rational>,
}

#[derive(Args, Clone)]
struct FrontierArgs {
    /// Frontier likelihood threshold theta (default 1/(32|X||Y|)).
    #[arg(long, value_parser = rational_arg)]
    theta: Option<Rational>,
    /// Frontier ratio slack delta (default 1/N).
    #[arg(long, value_parser = rational_arg)]
    delta: Option<Rational>,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose a function table into alternating cuts, or report the stuck
    /// sub-rectangle.
    Decompose {
        function: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Classify a function table by realizability.
    Classify {
        function: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Synthesize a plain protocol from a decomposable function table.
    Synthesize {
        function: PathBuf,
        /// Write the protocol text here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a protocol against a function table: exact security summary, or
    /// seeded sampled executions.
    Simulate {
        protocol: PathBuf,
        #[arg(long)]
        function: PathBuf,
        #[command(flatten)]
        tree: TreeArgs,
        /// "exact" (default) or "sample".
        #[arg(long, default_value = "exact")]
        mode: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sender input index for sampled runs.
        #[arg(long, default_value_t = 0)]
        x: usize,
        /// Receiver input index for sampled runs.
        #[arg(long, default_value_t = 0)]
        y: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Audit the eavesdropper contract: per-round independence, lightness,
    /// and (optionally) the likely-input lemmas.
    EveAudit {
        protocol: PathBuf,
        #[arg(long)]
        function: PathBuf,
        /// Heaviness threshold (default 1/8). Use --no-eve to audit the bare
        /// protocol without an eavesdropper.
        #[arg(long, value_parser = rational_arg)]
        eve_eps: Option<Rational>,
        #[arg(long)]
        no_eve: bool,
        /// Inputs (x, y, y') for the likely-input lemma audit.
        #[arg(long)]
        x: Option<usize>,
        #[arg(long)]
        y: Option<usize>,
        #[arg(long)]
        y_prime: Option<usize>,
        #[arg(long, value_parser = rational_arg)]
        eps_prime: Option<Rational>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compute all frontier flavors and evaluate the exact frontier claims.
    Frontier {
        function: PathBuf,
        protocol: PathBuf,
        #[command(flatten)]
        tree: TreeArgs,
        #[command(flatten)]
        frontier: FrontierArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Select a 2x2 minor and run both distinguishers plus the
    /// switch-identity sweep.
    Attack {
        function: PathBuf,
        protocol: PathBuf,
        #[command(flatten)]
        tree: TreeArgs,
        #[command(flatten)]
        frontier: FrontierArgs,
        /// Run even when no frontier-driven minor exists (falls back to a
        /// table minor; advantage is then 0 by construction).
        #[arg(long)]
        force: bool,
        /// "exact" (default) or "sample" for the curious explorer.
        #[arg(long, default_value = "exact")]
        mode: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Exact semi-honest security verdict: secure iff every error is zero.
    Security {
        function: PathBuf,
        protocol: PathBuf,
        #[command(flatten)]
        tree: TreeArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    if let Err(msg) = validate_threads() {
        eprintln!("{msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version are success; everything else is a usage error.
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::from(EXIT_OK)
                }
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

/// SFE_LAB_THREADS caps parallelism; the engine is deterministic and
/// single-threaded, so any valid cap (>= 1) is trivially respected.
fn validate_threads() -> Result<(), String> {
    match std::env::var("SFE_LAB_THREADS") {
        Err(_) => Ok(()),
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(()),
            _ => Err(format!("SFE_LAB_THREADS must be an integer >= 1, got {v:?}")),
        },
    }
}

fn load_function(path: &PathBuf) -> Result<FunctionTable> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading function file {}", path.display()))?;
    FunctionTable::from_json(&text)
        .map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn load_protocol(path: &PathBuf) -> Result<ProtocolSpec> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading protocol file {}", path.display()))?;
    dsl::parse(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn build(spec: &ProtocolSpec, f: &FunctionTable, tree: &TreeArgs) -> Result<TranscriptTree> {
    let eve = tree.eve_eps.clone().map(EvePolicy::new);
    build_tree(spec, f.x_labels.len(), f.y_labels.len(), eve).map_err(Into::into)
}

fn params_for(
    tree: &TranscriptTree,
    frontier: &FrontierArgs,
) -> FrontierParams {
    let defaults = FrontierParams::defaults(tree);
    FrontierParams::new(
        tree,
        frontier.theta.clone().unwrap_or_else(|| defaults.theta.clone()),
        frontier.delta.clone().unwrap_or_else(|| defaults.delta.clone()),
    )
}

/// Print the report to stdout and optionally write it to a file.
fn emit(report: &str, output: &Option<PathBuf>) -> Result<()> {
    println!("{report}");
    if let Some(path) = output {
        std::fs::write(path, format!("{report}\n"))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Decompose { function, output } => {
            let f = load_function(&function)?;
            let d = decompose(&f)?;
            let report = serde_json::to_string_pretty(&d)?;
            emit(&report, &output)?;
            Ok(match d {
                Decomposition::Tree(_) => EXIT_OK,
                Decomposition::Undecomposable { .. } => EXIT_NEGATIVE,
            })
        }
        Command::Classify { function, output } => {
            let f = load_function(&function)?;
            let report = serde_json::to_string_pretty(&classify(&f))?;
            emit(&report, &output)?;
            Ok(EXIT_OK)
        }
        Command::Synthesize { function, output } => {
            let f = load_function(&function)?;
            match decompose(&f)? {
                Decomposition::Tree(tree) => {
                    let text = dsl::print(&synthesize_protocol(&tree));
                    match &output {
                        Some(path) => std::fs::write(path, &text)
                            .with_context(|| format!("writing {}", path.display()))?,
                        None => print!("{text}"),
                    }
                    Ok(EXIT_OK)
                }
                d @ Decomposition::Undecomposable { .. } => {
                    emit(&serde_json::to_string_pretty(&d)?, &output)?;
                    eprintln!("cannot synthesize: the table is not decomposable");
                    Ok(EXIT_NEGATIVE)
                }
            }
        }
        Command::Simulate { protocol, function, tree, mode, samples, seed, x, y, output } => {
            let f = load_function(&function)?;
            let spec = load_protocol(&protocol)?;
            let t = build(&spec, &f, &tree)?;
            match mode.as_str() {
                "exact" => {
                    let summary = measure_semihonest_error(&t, &f)?;
                    let report = serde_json::to_string_pretty(&serde_json::json!({
                        "mode": "exact",
                        "rounds": t.rounds,
                        "leaves": t.leaves.len(),
                        "max_eve_queries": t.max_eve_queries,
                        "alice_error": ratio_str(&summary.alice_error),
                        "bob_error": ratio_str(&summary.bob_error),
                        "correctness_error": ratio_str(&summary.correctness_error),
                        "nu0": ratio_str(&summary.nu0()),
                        "nu0_f64": to_f64(&summary.nu0()),
                    }))?;
                    emit(&report, &output)?;
                    Ok(EXIT_OK)
                }
                "sample" => {
                    let outputs = f.outputs_sorted();
                    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
                    for i in 0..samples {
                        let trace = run_once(
                            &spec,
                            x,
                            y,
                            tree.eve_eps.as_ref().map(|_| &t),
                            seed.wrapping_add(i as u64),
                        )?;
                        let world = sfe_core::exec::World {
                            xi: x,
                            yi: y,
                            ra: trace.alice.tape.clone(),
                            rb: trace.bob.tape.clone(),
                            oracle: trace.oracle.clone(),
                            weight: num::One::one(),
                            msgs: trace.msgs.clone(),
                            pa: trace.alice.pairs.clone(),
                            pb: trace.bob.pairs.clone(),
                        };
                        let key = announced_output(&world, &outputs)
                            .unwrap_or("<out-of-range>")
                            .to_owned();
                        *counts.entry(key).or_insert(0) += 1;
                    }
                    let report = serde_json::to_string_pretty(&serde_json::json!({
                        "mode": "sample",
                        "x": x,
                        "y": y,
                        "seed": seed,
                        "samples": samples,
                        "announced_output_counts": counts,
                        "expected_output": f.sym(x, y),
                    }))?;
                    emit(&report, &output)?;
                    Ok(EXIT_OK)
                }
                other => Err(anyhow!("unknown mode {other:?}; expected \"exact\" or \"sample\"")),
            }
        }
        Command::EveAudit {
            protocol, function, eve_eps, no_eve, x, y, y_prime, eps_prime, output,
        } => {
            let f = load_function(&function)?;
            let spec = load_protocol(&protocol)?;
            let epsilon = eve_eps.unwrap_or_else(|| sfe_core::ratio::rat(1, 8));
            let eve = if no_eve { None } else { Some(EvePolicy::new(epsilon.clone())) };
            let t = build_tree(&spec, f.x_labels.len(), f.y_labels.len(), eve)?;
            let independence = audit_independence(&t, &epsilon);
            let lightness = lightness_holds(&t);
            let likely = match (x, y, y_prime) {
                (Some(x), Some(y), Some(yp)) => Some(audit_likely_input_lemmas(
                    &t, x, y, yp, &epsilon, eps_prime,
                )),
                _ => None,
            };
            let pass = independence.pass && lightness && likely.as_ref().map_or(true, |l| l.pass);
            let report = serde_json::to_string_pretty(&serde_json::json!({
                "eve_enabled": !no_eve,
                "epsilon": ratio_str(&epsilon),
                "independence": serde_json::from_str::<serde_json::Value>(&independence.to_json())?,
                "lightness": lightness,
                "max_residual": ratio_str(&max_residual(&t)),
                "max_eve_queries": t.max_eve_queries,
                "likely_input": likely
                    .map(|l| serde_json::from_str::<serde_json::Value>(&l.to_json()))
                    .transpose()?,
                "pass": pass,
            }))?;
            emit(&report, &output)?;
            Ok(if pass { EXIT_OK } else { EXIT_NEGATIVE })
        }
        Command::Frontier { function, protocol, tree, frontier, output } => {
            let f = load_function(&function)?;
            let spec = load_protocol(&protocol)?;
            let t = build(&spec, &f, &tree)?;
            let params = params_for(&t, &frontier);
            let fullness = check_frontier_fullness(&t, &f, &params)?;
            let minvsnomin = check_minvsnomin(&t, &params);
            let ordering = check_frontier_ordering(&t, &params);
            let holds = fullness.holds && minvsnomin.holds && ordering.holds;
            let mut sets = serde_json::Map::new();
            for flavor in [Flavor::FxTheta, Flavor::FyTheta, Flavor::FxZero, Flavor::FyZero] {
                let set = compute_frontier(&t, &params, flavor);
                sets.insert(
                    format!("{flavor:?}"),
                    serde_json::from_str(&set.to_json(&t))?,
                );
            }
            let report = serde_json::to_string_pretty(&serde_json::json!({
                "theta": ratio_str(&params.theta),
                "delta": ratio_str(&params.delta),
                "note": if params.theta == num::Zero::zero() {
                    Some("degenerate mode: theta = 0, thresholded and zero flavors coincide")
                } else {
                    None
                },
                "frontiers": sets,
                "fullness": serde_json::from_str::<serde_json::Value>(&fullness.to_json())?,
                "min_vs_nomin": serde_json::from_str::<serde_json::Value>(&minvsnomin.to_json())?,
                "ordering": serde_json::from_str::<serde_json::Value>(&ordering.to_json())?,
                "holds": holds,
            }))?;
            emit(&report, &output)?;
            Ok(if holds { EXIT_OK } else { EXIT_NEGATIVE })
        }
        Command::Attack {
            function, protocol, tree, frontier, force, mode, samples, seed, output,
        } => {
            let f = load_function(&function)?;
            let spec = load_protocol(&protocol)?;
            let t = build(&spec, &f, &tree)?;
            let params = params_for(&t, &frontier);
            let segment = match select_minor(&t, &f, &params) {
                Ok(seg) => seg,
                Err(e @ (AttackError::EmptySegment | AttackError::HypothesisViolated(_))) => {
                    if !force {
                        eprintln!("{e}; rerun with --force to attack a table minor anyway");
                        return Ok(EXIT_HYPOTHESIS);
                    }
                    match fallback_segment(&f) {
                        Some(seg) => seg,
                        None => {
                            eprintln!("no 2x2 minor exists in the table at all");
                            return Ok(EXIT_HYPOTHESIS);
                        }
                    }
                }
                Err(e) => return Err(e.into()),
            };
            let report = attack_report(&t, &f, &segment, &params, &mode, samples, seed)?;
            emit(&report, &output)?;
            Ok(EXIT_OK)
        }
        Command::Security { function, protocol, tree, output } => {
            let f = load_function(&function)?;
            let spec = load_protocol(&protocol)?;
            let t = build(&spec, &f, &tree)?;
            let summary = measure_semihonest_error(&t, &f)?;
            let nu0 = summary.nu0();
            let secure = num::Zero::is_zero(&nu0);
            let report = serde_json::to_string_pretty(&serde_json::json!({
                "alice_error": ratio_str(&summary.alice_error),
                "bob_error": ratio_str(&summary.bob_error),
                "correctness_error": ratio_str(&summary.correctness_error),
                "nu0": ratio_str(&nu0),
                "nu0_f64": to_f64(&nu0),
                "secure": secure,
            }))?;
            emit(&report, &output)?;
            Ok(if secure { EXIT_OK } else { EXIT_NEGATIVE })
        }
    }
}

/// When no frontier-driven minor exists, fall back to the lexicographically
/// least table minor: f(x0,y0) = f(x1,y0) with f(x0,y1) != f(x1,y1). The
/// resulting segment is empty, so both strategies report advantage 0.
fn fallback_segment(f: &FunctionTable) -> Option<Segment> {
    let nx = f.x_labels.len();
    let ny = f.y_labels.len();
    for x0 in 0..nx {
        for x1 in (x0 + 1)..nx {
            for y0 in 0..ny {
                if f.sym(x0, y0) != f.sym(x1, y0) {
                    continue;
                }
                for y1 in 0..ny {
                    if f.sym(x0, y1) != f.sym(x1, y1) {
                        return Some(Segment {
                            minor: MinorSelection { x0, x1, y0, y1 },
                            f_hat: Vec::new(),
                            s_hat: Vec::new(),
                            r_hat: Vec::new(),
                            mass: num::Zero::zero(),
                        });
                    }
                }
            }
        }
    }
    None
}

fn attack_report(
    t: &TranscriptTree,
    f: &FunctionTable,
    segment: &Segment,
    params: &FrontierParams,
    mode: &str,
    samples: usize,
    seed: u64,
) -> Result<String> {
    let zero_report = |strategy: &str| {
        serde_json::json!({
            "strategy": strategy,
            "advantage": "0/1",
            "advantage_f64": 0.0,
            "note": "empty target segment: the strategy never fires",
        })
    };
    let message = if segment.s_hat.is_empty() {
        zero_report("alice-message-distinguisher")
    } else {
        let r = run_alice_message_distinguisher(t, f, segment, params)?;
        serde_json::from_str(&r.to_json())?
    };
    let curious = if segment.s_hat.is_empty() && segment.r_hat.is_empty() {
        zero_report("curious-explorer")
    } else {
        let r = match mode {
            "exact" => run_curious_bob(t, segment, params)?,
            "sample" => run_curious_bob_sampled(t, segment, params, seed, samples)?,
            other => {
                return Err(anyhow!("unknown mode {other:?}; expected \"exact\" or \"sample\""))
            }
        };
        serde_json::from_str(&r.to_json())?
    };
    // Switch-identity sweep over every eligible (w, u) pair.
    let mut checked = 0usize;
    let mut held = 0usize;
    let mut zero_cond = 0usize;
    let mut failures: Vec<String> = Vec::new();
    for (w, u) in switch_identity_pairs(t, params) {
        match verify_switch_identity(t, &segment.minor, &w, &u) {
            Ok(check) => {
                checked += 1;
                if check.holds {
                    held += 1;
                } else {
                    failures.push(format!("w={} u={}", node_id_str(&w), node_id_str(&u)));
                }
            }
            Err(AttackError::ZeroConditioning) => zero_cond += 1,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(serde_json::to_string_pretty(&serde_json::json!({
        "minor": segment.minor,
        "segment": {
            "nodes": segment.f_hat.iter().map(|u| node_id_str(u)).collect::<Vec<_>>(),
            "under_alice_nodes": segment.s_hat.len(),
            "under_alice_children": segment.r_hat.len(),
            "mass": ratio_str(&segment.mass),
        },
        "message_distinguisher": message,
        "curious_explorer": curious,
        "switch_identity": {
            "checked": checked,
            "held": held,
            "zero_conditioning": zero_cond,
            "failures": failures,
        },
    }))?)
}
