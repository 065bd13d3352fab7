//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when a requested check fails, 2 on invalid
//! configuration or input.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::beliefs::{
    agent_type_utilities, agent_utilities, blocking_pair_search, expected_outcome, is_group_stable,
    is_pareto_improving, is_persuasive, Conditioning, Scheme, SignalTable, Verdict,
};
use crate::canon::CanonicalScheme;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::experiments::{impossibility_audit, regret_experiment, EpsChoice, RegretOptions, TypicalSet};
use crate::lp::{
    build_dual_lp, build_full_lp, build_relaxed_lp, build_self_aware_lp, expected_fb_c_classes, solve_program,
    verify_dual_certificate, ParetoOptions, ProgramKind, SolveOptions,
};
use crate::model::{Awareness, Instance};
use crate::numeric::{fmt_q, parse_rational, to_f64, Q};
use crate::schemes::SchemeKind;

#[derive(Debug, Parser)]
#[command(name = "teamform", version, about = "Signaling schemes for team formation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Instance description in JSON.
    #[arg(long)]
    pub instance: PathBuf,
    /// Largest enumeration (profiles, orderings or LP columns) attempted.
    #[arg(long, default_value_t = 1_000_000)]
    pub lp_cap: u128,
    /// Where to write the main artifact.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Welfare and per-agent utilities of a scheme.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// A scheme kind (noinfo, fullinfo, fb, fbc) or a scheme JSON file.
        #[arg(long)]
        scheme: String,
    },
    /// Persuasiveness, Pareto improvement and stability of a scheme.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scheme: String,
        /// Comma-separated subset of persuasive, pareto, stable.
        #[arg(long, default_value = "persuasive,pareto,stable")]
        checks: String,
    },
    /// Solves one of the canonical programs exactly.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "relaxed")]
        program: String,
    },
    /// Builds and checks the explicit dual certificate.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Typical-set tolerance: a rational, or `log` for the √(ln n/n) schedule.
        #[arg(long)]
        eps: Option<String>,
    },
    /// Regret sandwich report; `--out` receives CSV.
    Regret {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        eps: Option<String>,
        #[arg(long, default_value_t = 100_000)]
        mc_samples: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Self-aware program value against the no-information baseline.
    AuditImpossibility {
        #[command(flatten)]
        common: Common,
    },
}

/// What a successful command reports.
#[derive(Debug)]
pub struct Outcome {
    pub report: Value,
    pub passed: bool,
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out.report).unwrap_or_default());
            ExitCode::from(if out.passed { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_instance(path: &Path) -> Result<Instance> {
    Instance::from_json(&fs::read_to_string(path)?)
}

/// Writes through a temporary sibling so readers never see a partial file.
fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

enum LoadedScheme {
    Canonical(SchemeKind, CanonicalScheme),
    Explicit(String, Scheme),
}

fn load_scheme(inst: &Instance, scheme_arg: &str, cap: u128) -> Result<LoadedScheme> {
    match scheme_arg.parse::<SchemeKind>() {
        Ok(kind) => Ok(match kind.build_canonical(inst)? {
            Some(c) => LoadedScheme::Canonical(kind, c),
            None => LoadedScheme::Explicit(kind.to_string(), kind.build(inst, cap)?),
        }),
        Err(_) if Path::new(scheme_arg).exists() => {
            let scheme = Scheme::from_json(&fs::read_to_string(scheme_arg)?)?;
            if scheme.n() != inst.n() {
                return Err(Error::Config(format!("scheme has {} agents, instance has {}", scheme.n(), inst.n())));
            }
            Ok(LoadedScheme::Explicit(scheme_arg.to_string(), scheme))
        }
        Err(e) => Err(e),
    }
}

fn q_json(x: &Q) -> Value {
    json!({ "exact": fmt_q(x), "approx": to_f64(x) })
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Evaluate { common, scheme } => evaluate(common, scheme),
        Command::Verify { common, scheme, checks } => verify(common, scheme, checks),
        Command::Solve { common, program } => solve(common, program),
        Command::Certify { common, eps } => certify(common, eps.as_deref()),
        Command::Regret { common, eps, mc_samples, seed } => regret(common, eps.as_deref(), *mc_samples, *seed),
        Command::AuditImpossibility { common } => {
            let inst = load_instance(&common.instance)?;
            let report = impossibility_audit(&inst, common.lp_cap, Exec::default())?;
            let value = serde_json::to_value(&report)?;
            if let Some(out) = &common.out {
                write_atomic(out, &serde_json::to_string_pretty(&value)?)?;
            }
            Ok(Outcome { passed: report.equal, report: value })
        }
    }
}

fn evaluate(common: &Common, scheme_arg: &str) -> Result<Outcome> {
    let inst = load_instance(&common.instance)?;
    let report = match load_scheme(&inst, scheme_arg, common.lp_cap)? {
        LoadedScheme::Canonical(kind, c) => {
            let per_agent: Vec<Value> = (0..inst.n())
                .map(|i| {
                    let k = inst.cluster_of(i);
                    match inst.awareness() {
                        Awareness::SelfAgnostic => q_json(&c.cluster_utilities(&inst)[k]),
                        Awareness::SelfAware => json!(c.cluster_type_utilities(&inst)[k]
                            .iter()
                            .map(|u| u.as_ref().map(q_json))
                            .collect::<Vec<_>>()),
                    }
                })
                .collect();
            json!({
                "scheme": kind.to_string(),
                "welfare": q_json(&c.welfare(&inst)),
                "expected_matches": c.expected_counts(&inst).iter().map(q_json).collect::<Vec<_>>(),
                "agent_utilities": per_agent,
            })
        }
        LoadedScheme::Explicit(name, s) => {
            let (m, w) = expected_outcome(&inst, &s)?;
            let per_agent: Vec<Value> = match inst.awareness() {
                Awareness::SelfAgnostic => agent_utilities(&inst, &s)?.iter().map(q_json).collect(),
                Awareness::SelfAware => agent_type_utilities(&inst, &s)?
                    .iter()
                    .map(|u| json!(u.iter().map(|v| v.as_ref().map(q_json)).collect::<Vec<_>>()))
                    .collect(),
            };
            json!({
                "scheme": name,
                "welfare": q_json(&w),
                "expected_matches": m.iter().map(q_json).collect::<Vec<_>>(),
                "agent_utilities": per_agent,
            })
        }
    };
    if let Some(out) = &common.out {
        write_atomic(out, &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(Outcome { report, passed: true })
}

/// Stability of every supported signal: blocking pairs for pairs, group
/// deviations for larger teams.
fn stability(inst: &Instance, scheme: &Scheme) -> Result<Option<String>> {
    let table = SignalTable::build(inst, scheme)?;
    for signal in table.signals() {
        if inst.team_size() == 2 {
            if let Verdict::Fail(w) = blocking_pair_search(inst, signal)? {
                return Ok(Some(format!("signal {:?}: blocking pair {w:?}", signal.ordering.slots())));
            }
        } else {
            let post = signal
                .posterior(Conditioning::Public)
                .ok_or_else(|| Error::UndefinedPosterior("signal has zero mass".into()))?;
            let teams = signal.ordering.teams(inst.team_size());
            if let Verdict::Fail(w) = is_group_stable(inst, &teams, &post)? {
                return Ok(Some(format!("signal {:?}: {w}", signal.ordering.slots())));
            }
        }
    }
    Ok(None)
}

fn verify(common: &Common, scheme_arg: &str, checks: &str) -> Result<Outcome> {
    let inst = load_instance(&common.instance)?;
    let (name, scheme) = match load_scheme(&inst, scheme_arg, common.lp_cap)? {
        LoadedScheme::Canonical(kind, c) => (kind.to_string(), c.expand(&inst, common.lp_cap)?),
        LoadedScheme::Explicit(name, s) => (name, s),
    };
    let mut results = serde_json::Map::new();
    let mut passed = true;
    for check in checks.split(',').map(str::trim).filter(|c| !c.is_empty()) {
        let outcome: std::result::Result<(), String> = match check {
            "persuasive" => match is_persuasive(&inst, &scheme)? {
                Verdict::Pass => Ok(()),
                Verdict::Fail(w) => Err(w.to_string()),
            },
            "pareto" => match is_pareto_improving(&inst, &scheme) {
                Ok(Verdict::Pass) => Ok(()),
                Ok(Verdict::Fail(w)) => Err(w.to_string()),
                Err(e @ Error::Precondition(_)) => Err(format!("precondition failed: {e}")),
                Err(e) => return Err(e),
            },
            "stable" => stability(&inst, &scheme)?.map_or(Ok(()), Err),
            other => return Err(Error::Config(format!("unknown check `{other}`"))),
        };
        passed &= outcome.is_ok();
        results.insert(
            check.to_string(),
            match outcome {
                Ok(()) => json!({ "pass": true }),
                Err(w) => json!({ "pass": false, "witness": w }),
            },
        );
    }
    let report = json!({ "scheme": name, "checks": results });
    if let Some(out) = &common.out {
        write_atomic(out, &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(Outcome { report, passed })
}

fn solve(common: &Common, program: &str) -> Result<Outcome> {
    let inst = load_instance(&common.instance)?;
    let kind: ProgramKind = program.parse()?;
    let prog = match kind {
        ProgramKind::Relaxed => build_relaxed_lp(&inst, common.lp_cap)?,
        ProgramKind::Full => build_full_lp(&inst, common.lp_cap, ParetoOptions::default())?,
        ProgramKind::SelfAware => build_self_aware_lp(&inst, common.lp_cap, ParetoOptions::default())?,
        ProgramKind::Dual => build_dual_lp(&inst, common.lp_cap, None)?,
    };
    let sol = solve_program(&inst, &prog, SolveOptions::default())?;
    let mut report = json!({
        "program": program,
        "rows": prog.model.num_rows(),
        "columns": prog.model.num_vars(),
        "value": q_json(&sol.value),
        "pivots": sol.lp.pivots,
    });
    if let Some(scheme) = &sol.scheme {
        report["support_size"] = json!(scheme.support_size());
        if let Some(out) = &common.out {
            let explicit = scheme.expand(&inst, common.lp_cap)?;
            write_atomic(out, &explicit.to_json()?)?;
            report["scheme_file"] = json!(out.display().to_string());
        }
    }
    Ok(Outcome { report, passed: true })
}

fn typical_set(inst: &Instance, eps: Option<&str>) -> Result<TypicalSet> {
    match eps {
        Some("log") => TypicalSet::log_schedule(inst),
        Some(e) => TypicalSet::uniform(inst, parse_rational(e)?),
        None => TypicalSet::log_schedule(inst).or_else(|_| {
            let half = Q::new(1.into(), 2.into());
            let room = inst.clusters().iter().map(|c| num::Signed::abs(&(&c.p - &half))).collect();
            TypicalSet::rational(inst, room)
        }),
    }
}

fn certify(common: &Common, eps: Option<&str>) -> Result<Outcome> {
    let inst = load_instance(&common.instance)?;
    let set = typical_set(&inst, eps)?;
    let report = verify_dual_certificate(&inst, &set, common.lp_cap, Exec::default())?;
    let mut value = serde_json::to_value(&report)?;
    value["upper_bound"] = q_json(&expected_fb_c_classes(&inst));
    value["epsilons"] = json!(set.epsilons(&inst));
    if let Some(out) = &common.out {
        write_atomic(out, &serde_json::to_string_pretty(&value)?)?;
    }
    Ok(Outcome { passed: report.is_feasible(), report: value })
}

fn regret(common: &Common, eps: Option<&str>, mc_samples: u64, seed: u64) -> Result<Outcome> {
    let inst = load_instance(&common.instance)?;
    let eps = match eps {
        None | Some("log") => EpsChoice::Log,
        Some(e) => EpsChoice::Uniform(parse_rational(e)?),
    };
    let opts = RegretOptions { eps, lp_cap: common.lp_cap.min(20_000), mc_samples, seed, ..Default::default() };
    let report = regret_experiment(&inst, &opts)?;
    if let Some(out) = &common.out {
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        write_atomic(out, &String::from_utf8_lossy(&buf))?;
    }
    Ok(Outcome { report: serde_json::to_value(&report)?, passed: true })
}
