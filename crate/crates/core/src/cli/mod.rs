//! Batch front end: `scmdp <command> --input scenario.json [--output report.json]`.
//!
//! Exit codes: 0 when the checks pass (or a sought witness was found),
//! 1 when a violation or discrepancy was witnessed, 2 for invalid input.

pub mod report;
pub mod scenario_file;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::axioms::{
    check_cuc_invariance, check_functional_anonymity, check_iia, check_pareto_swf, verify_theorem2, CheckMode,
    EquivalenceVerdict, GenerativeConfig,
};
use crate::model::Policy;
use crate::scalar::{format_rational, parse_rational, Rational, Scalar};
use crate::scenarios::{find_pareto_scf_violation, gen_drift_mdp, DriftParams};
use crate::solver::{
    brute_force_optimal_policies, value_iteration, verify_theorem3, verify_theorem4, DiscountFactor, SolveConfig,
    TabularMdp,
};

use report::{AxiomRecord, ExitRecord, Report};
use scenario_file::{load_scenario, Scenario, ScenarioFile};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "scmdp", version, about = "Axiom checks and discounted solvers for Social Choice MDPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check Pareto, IIA, CUC-invariance and functional anonymity of the scenario's reward
    CheckAxioms(CommonArgs),
    /// Optimal values, greedy policy and tie sets
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// Also enumerate every optimal deterministic policy
        #[arg(long)]
        brute_force: bool,
    },
    /// Check one of the representation, Bellman or optimality results on the scenario
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_parser = clap::value_parser!(u8).range(2..=4))]
        theorem: u8,
        /// Policy for theorem 3 as comma-separated alternatives per state (default: greedy optimal)
        #[arg(long)]
        policy: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        trajectories: usize,
    },
    /// Look for a state where an optimal policy picks a unanimously dominated alternative
    FindViolation {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        generator: GeneratorArgs,
        /// Write the generated scenario here (only without --input)
        #[arg(long)]
        save_scenario: Option<PathBuf>,
    },
    /// Write a seeded preference-drift scenario file
    GenScenario {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        generator: GeneratorArgs,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Discount factor, rational or decimal; overrides the scenario's
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub tie_tolerance: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::Both)]
    pub mode: Mode,
    /// Largest number of policies to enumerate
    #[arg(long)]
    pub cap: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct GeneratorArgs {
    #[arg(long, default_value_t = 2)]
    pub members: usize,
    #[arg(long, default_value_t = 2)]
    pub alternatives: usize,
    #[arg(long, default_value_t = 4)]
    pub states: usize,
    #[arg(long, default_value = "1/2")]
    pub stickiness: String,
    #[arg(long, default_value = "1/2")]
    pub attraction: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Pair,
    Generative,
    Both,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Pair => "pair",
            Mode::Generative => "generative",
            Mode::Both => "both",
        }
    }

    fn check_mode(self, seed: u64) -> CheckMode<Rational> {
        let cfg = GenerativeConfig {
            seed,
            ..GenerativeConfig::default()
        };
        match self {
            Mode::Pair => CheckMode::Pair,
            Mode::Generative => CheckMode::Generative(cfg),
            Mode::Both => CheckMode::Both(cfg),
        }
    }
}

/// What a command found; invalid input is reported as an error instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Pass,
    Violation,
    Found,
    NotFound,
}

impl Status {
    fn code(self) -> i32 {
        match self {
            Status::Pass | Status::Found => EXIT_PASS,
            Status::Violation | Status::NotFound => EXIT_VIOLATION,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Violation => "violation",
            Status::Found => "found",
            Status::NotFound => "not-found",
        }
    }
}

struct Run {
    command: &'static str,
    digest: Option<String>,
    config: Map<String, Value>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_PASS };
        }
    };
    let started = Instant::now();
    let mut run = Run {
        command: command_name(&cli.command),
        digest: None,
        config: Map::new(),
    };
    let outcome = execute(&cli.command, &mut run);
    let (code, status, message, results) = match outcome {
        Ok((status, results)) => (status.code(), status.name(), None, results),
        Err(e) => {
            eprintln!("error: {e:#}");
            (EXIT_INVALID, "invalid-input", Some(format!("{e:#}")), Value::Null)
        }
    };
    if matches!(cli.command, Command::GenScenario { .. }) {
        return code;
    }
    let report = Report {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        input_digest: run.digest,
        command: run.command.to_string(),
        config: Value::Object(run.config),
        results,
        exit: ExitRecord {
            code,
            status: status.to_string(),
            message,
        },
        wall_clock_ms: started.elapsed().as_millis() as u64,
    };
    let mut text = serde_json::to_string_pretty(&report).expect("reports always serialize");
    text.push('\n');
    let output = common_args(&cli.command).output.as_deref();
    match output {
        Some(path) => {
            if let Err(e) = write_atomically(path, &text) {
                eprintln!("error: {e:#}");
                return EXIT_INVALID;
            }
        }
        None => print!("{text}"),
    }
    code
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::CheckAxioms(_) => "check-axioms",
        Command::Solve { .. } => "solve",
        Command::Verify { .. } => "verify",
        Command::FindViolation { .. } => "find-violation",
        Command::GenScenario { .. } => "gen-scenario",
    }
}

fn common_args(command: &Command) -> &CommonArgs {
    match command {
        Command::CheckAxioms(common)
        | Command::Solve { common, .. }
        | Command::Verify { common, .. }
        | Command::FindViolation { common, .. }
        | Command::GenScenario { common, .. } => common,
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomically(path: &Path, text: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(text.as_bytes())?;
    tmp.persist(path)
        .map_err(|e| anyhow!(e.error))
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn execute(command: &Command, run: &mut Run) -> Result<(Status, Value)> {
    match command {
        Command::CheckAxioms(common) => {
            let scenario = load_input(common, run)?;
            cmd_check_axioms(&scenario, common, run)
        }
        Command::Solve { common, brute_force } => {
            let scenario = load_input(common, run)?;
            run.config.insert("brute_force".into(), json!(brute_force));
            cmd_solve(&scenario, common, *brute_force, run)
        }
        Command::Verify {
            common,
            theorem,
            policy,
            trajectories,
        } => {
            let scenario = load_input(common, run)?;
            run.config.insert("theorem".into(), json!(theorem));
            match theorem {
                2 => cmd_verify2(&scenario, common, run),
                3 => cmd_verify3(&scenario, common, policy.as_deref(), *trajectories, run),
                _ => cmd_verify4(&scenario, common, run),
            }
        }
        Command::FindViolation {
            common,
            generator,
            save_scenario,
        } => {
            let scenario = match &common.input {
                Some(_) => load_input(common, run)?,
                None => {
                    let scenario = generate(generator, common, run)?;
                    if let Some(path) = save_scenario {
                        write_atomically(path, &scenario.to_canonical_json())?;
                    }
                    scenario
                }
            };
            cmd_find_violation(&scenario, common, run)
        }
        Command::GenScenario { common, generator } => {
            let scenario = generate(generator, common, run)?;
            let text = scenario.to_canonical_json();
            match &common.output {
                Some(path) => write_atomically(path, &text)?,
                None => print!("{text}"),
            }
            Ok((Status::Pass, Value::Null))
        }
    }
}

fn load_input(common: &CommonArgs, run: &mut Run) -> Result<Scenario> {
    let path = common
        .input
        .as_ref()
        .ok_or_else(|| anyhow!("--input is required"))?;
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    run.digest = Some(format!("sha256:{}", hex::encode(Sha256::digest(&bytes))));
    run.config.insert("input".into(), json!(path.display().to_string()));
    let text = String::from_utf8(bytes).context("scenario file is not UTF-8")?;
    let scenario = load_scenario(&text).with_context(|| format!("in {}", path.display()))?;
    echo_scenario(&scenario, run);
    Ok(scenario)
}

fn echo_scenario(scenario: &Scenario, run: &mut Run) {
    let file = ScenarioFile::from_scenario(scenario);
    run.config.insert(
        "scenario".into(),
        serde_json::to_value(&file).expect("scenario files always serialize"),
    );
}

fn generate(generator: &GeneratorArgs, common: &CommonArgs, run: &mut Run) -> Result<Scenario> {
    let stickiness = parse_rational(&generator.stickiness).context("--stickiness")?;
    let attraction = parse_rational(&generator.attraction).context("--attraction")?;
    run.config.insert(
        "generator".into(),
        json!({
            "family": "drift",
            "members": generator.members,
            "alternatives": generator.alternatives,
            "states": generator.states,
            "stickiness": format_rational(&stickiness),
            "attraction": format_rational(&attraction),
            "seed": common.seed,
        }),
    );
    let params = DriftParams::new(stickiness, attraction, common.seed);
    let mdp = gen_drift_mdp(generator.members, generator.alternatives, generator.states, &params)?;
    let gamma = common
        .gamma
        .as_deref()
        .map(parse_rational)
        .transpose()
        .context("--gamma")?;
    let scenario = Scenario::from_mdp(mdp, gamma);
    echo_scenario(&scenario, run);
    Ok(scenario)
}

fn discount(common: &CommonArgs, scenario: &Scenario, run: &mut Run) -> Result<DiscountFactor<f64>> {
    let gamma = match &common.gamma {
        Some(text) => parse_rational(text).context("--gamma")?,
        None => scenario
            .gamma
            .clone()
            .ok_or_else(|| anyhow!("no discount factor: pass --gamma or set \"gamma\" in the scenario"))?,
    };
    run.config.insert("gamma".into(), json!(format_rational(&gamma)));
    Ok(DiscountFactor::new(gamma.to_f64())?)
}

fn solve_config(common: &CommonArgs, run: &mut Run) -> Result<SolveConfig<f64>> {
    let mut cfg = SolveConfig::<f64> {
        seed: common.seed,
        ..SolveConfig::default()
    };
    if let Some(eps) = common.epsilon {
        if !(eps > 0.0 && eps.is_finite()) {
            bail!("--epsilon must be positive");
        }
        cfg.epsilon = eps;
    }
    if let Some(tol) = common.tie_tolerance {
        if !(tol > 0.0 && tol.is_finite()) {
            bail!("--tie-tolerance must be positive");
        }
        cfg.tie_tolerance = tol;
    }
    if let Some(cap) = common.cap {
        cfg.enumeration_cap = cap;
    }
    run.config.insert("epsilon".into(), json!(cfg.epsilon));
    run.config.insert("tie_tolerance".into(), json!(cfg.tie_tolerance));
    run.config.insert("seed".into(), json!(cfg.seed));
    run.config.insert("cap".into(), json!(cfg.enumeration_cap));
    Ok(cfg)
}

fn labels(scenario: &Scenario) -> Vec<String> {
    scenario.mdp.alternatives.iter().map(|a| a.label.clone()).collect()
}

fn policy_json(policy: &Policy, alternatives: &[String]) -> Value {
    json!(policy.choice.iter().map(|a| alternatives[*a].clone()).collect::<Vec<_>>())
}

fn parse_policy(text: &str, scenario: &Scenario) -> Result<Policy> {
    let alternatives = labels(scenario);
    let choice = text
        .split(',')
        .map(|part| {
            let part = part.trim();
            alternatives
                .iter()
                .position(|a| a == part)
                .or_else(|| part.parse::<usize>().ok().filter(|i| *i < alternatives.len()))
                .ok_or_else(|| anyhow!("unknown alternative `{part}` in --policy"))
        })
        .collect::<Result<Vec<_>>>()?;
    if choice.len() != scenario.mdp.num_states() {
        bail!(
            "--policy names {} alternatives but the scenario has {} states",
            choice.len(),
            scenario.mdp.num_states()
        );
    }
    Ok(Policy::new(choice))
}

fn cmd_check_axioms(scenario: &Scenario, common: &CommonArgs, run: &mut Run) -> Result<(Status, Value)> {
    run.config.insert("mode".into(), json!(common.mode.name()));
    run.config.insert("seed".into(), json!(common.seed));
    let reward = &scenario.mdp.reward;
    let profiles = &scenario.mdp.states;
    let mode = common.mode.check_mode(common.seed);
    let reports = [
        check_pareto_swf(reward, profiles)?,
        check_iia(reward, profiles)?,
        check_cuc_invariance(reward, profiles, &mode)?,
        check_functional_anonymity(reward, profiles, &mode)?,
    ];
    let passed = reports.iter().all(|r| r.passed);
    let results = json!({
        "all_passed": passed,
        "axioms": reports.iter().map(AxiomRecord::from).collect::<Vec<_>>(),
    });
    Ok((if passed { Status::Pass } else { Status::Violation }, results))
}

fn cmd_solve(scenario: &Scenario, common: &CommonArgs, brute_force: bool, run: &mut Run) -> Result<(Status, Value)> {
    let gamma = discount(common, scenario, run)?;
    let cfg = solve_config(common, run)?;
    let tabular = TabularMdp::from_mdp(&scenario.mdp)?;
    let solution = value_iteration(&tabular, gamma, &cfg)?;
    let alternatives = labels(scenario);
    let states: Vec<Value> = (0..scenario.mdp.num_states())
        .map(|s| {
            json!({
                "state": scenario.state_names[s],
                "value": solution.values.get(s),
                "greedy": alternatives[solution.policy.action(s)],
                "optimal_actions": solution.optimal_actions[s].iter().map(|a| alternatives[*a].clone()).collect::<Vec<_>>(),
            })
        })
        .collect();
    let mut results = json!({
        "states": states,
        "greedy_policy": policy_json(&solution.policy, &alternatives),
        "iterations": solution.iterations,
    });
    if brute_force {
        let optimal = brute_force_optimal_policies(&tabular, gamma, &cfg)?;
        results["optimal_policies"] = json!(optimal
            .iter()
            .map(|p| policy_json(p, &alternatives))
            .collect::<Vec<_>>());
    }
    Ok((Status::Pass, results))
}

fn cmd_verify2(scenario: &Scenario, common: &CommonArgs, run: &mut Run) -> Result<(Status, Value)> {
    run.config.insert("mode".into(), json!(common.mode.name()));
    run.config.insert("seed".into(), json!(common.seed));
    let mode = common.mode.check_mode(common.seed);
    let report = verify_theorem2(&scenario.mdp.reward, &scenario.mdp.states, &mode)?;
    let results = json!({
        "verdict": report.verdict.name(),
        "axioms_hold": report.axioms_hold,
        "agreement_holds": report.agreement_holds,
        "axioms": report.axiom_reports().into_iter().map(AxiomRecord::from).collect::<Vec<_>>(),
        "agreement": AxiomRecord::from(&report.agreement),
        "extended_agreement": report.extended_agreement.as_ref().map(AxiomRecord::from),
    });
    let status = if report.verdict == EquivalenceVerdict::Contradiction {
        Status::Violation
    } else {
        Status::Pass
    };
    Ok((status, results))
}

fn cmd_verify3(
    scenario: &Scenario,
    common: &CommonArgs,
    policy: Option<&str>,
    trajectories: usize,
    run: &mut Run,
) -> Result<(Status, Value)> {
    let gamma = discount(common, scenario, run)?;
    let mut cfg = solve_config(common, run)?;
    if trajectories == 0 {
        bail!("--trajectories must be positive");
    }
    cfg.trajectories = trajectories;
    run.config.insert("trajectories".into(), json!(trajectories));
    let tabular = TabularMdp::from_mdp(&scenario.mdp)?;
    let policy = match policy {
        Some(text) => parse_policy(text, scenario)?,
        None => value_iteration(&tabular, gamma, &cfg)?.policy,
    };
    let alternatives = labels(scenario);
    run.config.insert("policy".into(), policy_json(&policy, &alternatives));
    let report = verify_theorem3(&tabular, &policy, gamma, &cfg)?;
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "state": scenario.state_names[r.state],
                "bellman_value": r.bellman_value,
                "monte_carlo_mean": r.monte_carlo.mean,
                "std_error": r.monte_carlo.std_error,
                "half_width": r.monte_carlo.half_width,
                "horizon": r.monte_carlo.horizon,
                "tolerance": r.tolerance,
                "discrepancy": r.discrepancy,
                "agrees": r.agrees,
            })
        })
        .collect();
    let results = json!({
        "all_agree": report.all_agree,
        "family_size": report.family_size,
        "states": rows,
    });
    Ok((if report.all_agree { Status::Pass } else { Status::Violation }, results))
}

fn cmd_verify4(scenario: &Scenario, common: &CommonArgs, run: &mut Run) -> Result<(Status, Value)> {
    let gamma = discount(common, scenario, run)?;
    let cfg = solve_config(common, run)?;
    let report = verify_theorem4(&scenario.mdp, gamma, &cfg)?;
    let alternatives = labels(scenario);
    let set = |ps: &[Policy]| ps.iter().map(|p| policy_json(p, &alternatives)).collect::<Vec<_>>();
    let results = json!({
        "transform": report.transform,
        "agree": report.agree,
        "value_iteration_set": set(&report.value_iteration_set),
        "brute_force_set": set(&report.brute_force_set),
        "only_value_iteration": set(&report.only_value_iteration),
        "only_brute_force": set(&report.only_brute_force),
    });
    Ok((if report.agree { Status::Pass } else { Status::Violation }, results))
}

fn cmd_find_violation(scenario: &Scenario, common: &CommonArgs, run: &mut Run) -> Result<(Status, Value)> {
    let gamma = discount(common, scenario, run)?;
    let cfg = solve_config(common, run)?;
    let found = find_pareto_scf_violation(&scenario.mdp, gamma, &cfg)?;
    let alternatives = labels(scenario);
    Ok(match found {
        Some(v) => {
            let witness = crate::axioms::Witness::ParetoScf {
                state: v.state,
                profile: v.profile.clone(),
                dominating: v.dominating,
                chosen: v.chosen,
            };
            (
                Status::Found,
                json!({
                    "found": true,
                    "state": scenario.state_names[v.state],
                    "dominating": alternatives[v.dominating],
                    "chosen": alternatives[v.chosen],
                    "dominating_value": v.dominating_value,
                    "chosen_value": v.chosen_value,
                    "policy": policy_json(&v.policy, &alternatives),
                    "witness": report::WitnessRecord::from(&witness),
                }),
            )
        }
        None => (Status::NotFound, json!({ "found": false })),
    })
}
