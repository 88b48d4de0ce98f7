use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adapt_core::behaviour_goal::BehaviourGoal;
use adapt_core::config::TargetSpec;
use adapt_core::lts::{compose, Lts};
use adapt_core::planner::plan_reconfiguration;
use adapt_core::predicate::Predicate;
use adapt_core::scenario::Scenario;
use adapt_core::scheduler::{run, Outcome};
use adapt_core::solver::{solve, GameProblem, Synthesis};
use adapt_core::trace::{check_property, parse_properties, parse_trace, render_trace};
use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

const EXIT_ERROR: u8 = 1;
const EXIT_UNREALIZABLE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "adaptctl",
    version,
    about = "Run, verify and synthesise adaptive mission controllers"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write its trace.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        max_ticks: u64,
        /// Trace output file; stdout when absent.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Check a trace against a property file.
    Verify { trace: PathBuf, properties: PathBuf },
    /// Synthesise a strategy for the composition of the given models.
    Solve {
        #[arg(required = true)]
        models: Vec<PathBuf>,
        #[arg(long, value_enum)]
        kind: Kind,
        /// Predicate over state names and propositions: the states to avoid
        /// for `safety`, the target for `reach`, the accepting states for `buchi`.
        #[arg(long)]
        goal: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan a reconfiguration of a scenario's initial architecture.
    Plan {
        scenario: PathBuf,
        /// Capability tags the target architecture must provide.
        #[arg(long = "require", value_delimiter = ',')]
        require: Vec<String>,
        /// Instances the target must not keep.
        #[arg(long = "forbid", value_delimiter = ',')]
        forbid: Vec<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Safety,
    Reach,
    Buchi,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn cmd_run(scenario: &Path, seed: u64, max_ticks: u64, trace: Option<&Path>) -> Result<u8> {
    let sc = Scenario::parse(&read(scenario)?).with_context(|| scenario.display().to_string())?;
    let res = run(&sc, seed, max_ticks)?;
    let text = render_trace(&res.trace);
    match trace {
        Some(p) => fs::write(p, &text).with_context(|| format!("cannot write {}", p.display()))?,
        None => print!("{text}"),
    }
    let summary = match &res.outcome {
        Outcome::Complete => "mission complete".to_string(),
        Outcome::Aborted(why) => format!("aborted: {why}"),
        Outcome::Timeout => format!("timeout after {max_ticks} ticks"),
    };
    eprintln!("{summary}");
    Ok(res.outcome.exit_code() as u8)
}

fn cmd_verify(trace: &Path, properties: &Path) -> Result<u8> {
    let records = parse_trace(&read(trace)?).with_context(|| trace.display().to_string())?;
    let props = parse_properties(&read(properties)?).with_context(|| properties.display().to_string())?;
    let base = properties.parent().unwrap_or(Path::new("."));
    let mut failed = 0;
    for p in &props {
        let other = match &p {
            adapt_core::trace::Property::ProjectionEqual(path, _) => {
                let path = base.join(path);
                Some(parse_trace(&read(&path)?).with_context(|| path.display().to_string())?)
            }
            _ => None,
        };
        let r = check_property(p, &records, other.as_deref());
        if r.passed {
            println!("PASS {}", r.property);
        } else {
            failed += 1;
            println!("FAIL {}: {}", r.property, r.message);
        }
    }
    println!("{} of {} properties hold", props.len() - failed, props.len());
    Ok(if failed == 0 { 0 } else { EXIT_ERROR })
}

fn cmd_solve(models: &[PathBuf], kind: Kind, goal: &str, out: Option<&Path>) -> Result<u8> {
    let mut arena: Option<Lts> = None;
    for m in models {
        let l = Lts::parse(&read(m)?).with_context(|| m.display().to_string())?;
        arena = Some(match arena {
            None => l,
            Some(a) => compose(&a, &l)?,
        });
    }
    let arena = arena.ok_or_else(|| anyhow!("no models given"))?;
    let pred = Predicate::parse(goal).map_err(|e| anyhow!("goal: {e}"))?;
    let goal = match kind {
        Kind::Safety => BehaviourGoal::safety("goal", pred),
        Kind::Reach => BehaviourGoal::reach("goal", pred),
        Kind::Buchi => BehaviourGoal::buchi("goal", pred),
    };
    match solve(&GameProblem::new(arena, goal)) {
        Synthesis::Realizable(s) => {
            let text = s.to_text();
            match out {
                Some(p) => fs::write(p, text)?,
                None => print!("{text}"),
            }
            Ok(0)
        }
        Synthesis::Unrealizable => {
            println!("unrealizable");
            Ok(EXIT_UNREALIZABLE)
        }
    }
}

fn cmd_plan(scenario: &Path, require: &[String], forbid: &[String]) -> Result<u8> {
    let sc = Scenario::parse(&read(scenario)?).with_context(|| scenario.display().to_string())?;
    let current = sc.configuration();
    let mut target = TargetSpec::requiring(require.iter().cloned());
    target.forbidden = forbid.iter().cloned().collect();
    match plan_reconfiguration(&current, &target, &sc.constraints) {
        Ok(s) => {
            for c in &s.plan {
                println!("{c}");
            }
            Ok(0)
        }
        Err(e) => {
            println!("infeasible: {e}");
            Ok(EXIT_UNREALIZABLE)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { 0 });
        }
    };
    let r = match &cli.cmd {
        Cmd::Run {
            scenario,
            seed,
            max_ticks,
            trace,
        } => cmd_run(scenario, *seed, *max_ticks, trace.as_deref()),
        Cmd::Verify { trace, properties } => cmd_verify(trace, properties),
        Cmd::Solve {
            models,
            kind,
            goal,
            out,
        } => cmd_solve(models, *kind, goal, out.as_deref()),
        Cmd::Plan {
            scenario,
            require,
            forbid,
        } => cmd_plan(scenario, require, forbid),
    };
    match r {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
