//! Command-line front end of the long-run CVaR solver.

mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cvar_mdp::chain::check_ergodicity;
use cvar_mdp::mdp::{induced_matrix, validate_model, Policy};
use cvar_mdp::optimize::{
    deterministic_policies, maximize_cvar, multi_start_with, seeded_initials, solve_average_mdp, solve_cvar,
    solve_global_bruteforce, solve_mean_cvar, MultiStartResult, Sense, SolveResult,
};
use cvar_mdp::portfolio::{describe_policy, CostModel, PortfolioConfig};
use cvar_mdp::risk::{evaluate, RiskParams};
use serde::Serialize;

use error::{CliError, CliResult};
use io::{LoadedModel, OutDir};

/// Exhaustive ergodicity checks up to this many deterministic policies, sampling beyond.
const EXHAUSTIVE_CHECK_LIMIT: usize = 1024;
const SAMPLED_CHECKS: usize = 64;

#[derive(Parser)]
#[command(name = "cvar-mdp", version, about = "Long-run CVaR optimization of finite Markov decision processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Scenario {
    Portfolio,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CostModelArg {
    Realized,
    Expected,
}

impl From<CostModelArg> for CostModel {
    fn from(c: CostModelArg) -> Self {
        match c {
            CostModelArg::Realized => CostModel::Realized,
            CostModelArg::Expected => CostModel::Expected,
        }
    }
}

#[derive(Args, Debug)]
pub struct InputArgs {
    /// Model document (JSON).
    model: Option<PathBuf>,
    /// Use a built-in scenario instead of a model file.
    #[arg(long, value_enum)]
    scenario: Option<Scenario>,
    /// Portfolio configuration document replacing the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    risk_free_rate: Option<f64>,
    #[arg(long)]
    transaction_cost: Option<f64>,
    #[arg(long)]
    wealth_scale: Option<f64>,
    #[arg(long, value_enum)]
    cost_model: Option<CostModelArg>,
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Directory receiving the result documents, CSV files and the run manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a model's invariants and spot-check ergodicity under deterministic policies.
    Validate {
        #[command(flatten)]
        input: InputArgs,
        /// Seed of the sampled policies for large models.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Steady-state risk report of one deterministic policy.
    Evaluate {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        /// Policy file: one action index per state.
        #[arg(long, required_unless_present = "mean_optimal", conflicts_with = "mean_optimal")]
        policy: Option<PathBuf>,
        /// Evaluate the average-cost optimal policy instead of a policy file.
        #[arg(long)]
        mean_optimal: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Local CVaR (or mean-CVaR with --beta) optimization from one or many initial policies.
    Solve {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// Start from this policy file instead of seeded random policies.
        #[arg(long, conflicts_with_all = ["seed", "starts"])]
        initial: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        starts: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Global CVaR minimum by solving an average-cost MDP for every candidate VaR.
    Global {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        alpha: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Mean-CVaR multi-start solves over a list of mean weights.
    SweepBeta {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        betas: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Largest long-run CVaR over all policies.
    Maximize {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        alpha: Option<f64>,
        /// Search stops once the bracket is narrower than tol times the cost range.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Serialize, Default)]
struct Inputs {
    model: Option<PathBuf>,
    scenario: Option<Scenario>,
    config: Option<PathBuf>,
    policy: Option<PathBuf>,
    initial: Option<PathBuf>,
}

#[derive(Serialize, Default)]
struct Params {
    alpha: Option<f64>,
    beta: Option<f64>,
    betas: Option<Vec<f64>>,
    seed: Option<u64>,
    n_starts: Option<usize>,
    tol: Option<f64>,
    mean_optimal: Option<bool>,
    /// Resolved scenario configuration, overrides included.
    scenario_config: Option<PortfolioConfig<f64>>,
}

#[derive(Serialize)]
struct Manifest {
    command: &'static str,
    inputs: Inputs,
    params: Params,
    out_dir: PathBuf,
    version: &'static str,
    duration_secs: f64,
    status: String,
}

/// Collects what the manifest records while a command runs.
struct Run {
    command: &'static str,
    inputs: Inputs,
    params: Params,
    out: OutDir,
}

impl Run {
    fn new(command: &'static str, input: &InputArgs, out: &OutArgs) -> CliResult<Self> {
        Ok(Self {
            command,
            inputs: Inputs {
                model: input.model.clone(),
                scenario: input.scenario,
                config: input.config.clone(),
                ..Inputs::default()
            },
            params: Params::default(),
            out: OutDir::create(&out.out)?,
        })
    }

    fn load(&mut self, input: &InputArgs) -> CliResult<LoadedModel> {
        let loaded = io::load(input)?;
        self.params.scenario_config = loaded.portfolio.as_ref().map(|(c, _)| c.clone());
        Ok(loaded)
    }

    fn risk_params(&mut self, loaded: &LoadedModel, alpha: Option<f64>, beta: f64) -> CliResult<RiskParams<f64>> {
        let alpha = loaded.alpha(alpha)?;
        self.params.alpha = Some(alpha);
        self.params.beta = Some(beta);
        Ok(RiskParams::new(alpha, beta)?)
    }

    fn finish(self, started: Instant, result: &CliResult<()>) -> CliResult<()> {
        let manifest = Manifest {
            command: self.command,
            inputs: self.inputs,
            params: self.params,
            out_dir: self.out.path().to_path_buf(),
            version: env!("CARGO_PKG_VERSION"),
            duration_secs: started.elapsed().as_secs_f64(),
            status: match result {
                Ok(()) => "ok".into(),
                Err(e) => e.to_string(),
            },
        };
        self.out.json("manifest.json", &manifest)
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn actions_field(actions: &[usize]) -> String {
    actions.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

fn write_trace(out: &OutDir, name: &str, run: &SolveResult<f64>) -> CliResult<()> {
    out.csv(
        name,
        &["iteration", "objective", "var"],
        run.trace.iter().map(|t| vec![t.iteration.to_string(), num(t.objective), opt_num(t.var)]),
    )
}

fn write_policy(out: &OutDir, loaded: &LoadedModel, actions: &[usize]) -> CliResult<()> {
    out.text("policy.txt", &io::policy_text(actions))?;
    if let Some((config, labels)) = &loaded.portfolio {
        let table = describe_policy(actions, labels)?;
        let mut header = vec!["weight".to_string()];
        header.extend((0..config.n_conditions()).map(|e| format!("condition_{e}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        out.csv(
            "policy_matrix.csv",
            &header,
            table
                .weights
                .iter()
                .zip(&table.rows)
                .map(|(w, row)| std::iter::once(num(*w)).chain(row.iter().map(|&v| num(v))).collect()),
        )?;
    }
    Ok(())
}

fn write_optima(out: &OutDir, r: &MultiStartResult<f64>) -> CliResult<()> {
    out.csv(
        "optima.csv",
        &["objective", "cvar", "var", "mean", "hits", "n_policies"],
        r.optima.iter().map(|o| {
            vec![
                num(o.objective),
                num(o.cvar),
                num(o.var),
                num(o.mean),
                o.hits.to_string(),
                o.policies.len().to_string(),
            ]
        }),
    )
}

fn validate(run: &mut Run, input: &InputArgs, seed: u64) -> CliResult<()> {
    let model = match &input.model {
        Some(path) if input.scenario.is_none() => io::read_model_unchecked(path)?,
        _ => run.load(input)?.model,
    };
    run.params.seed = Some(seed);
    let report = validate_model(&model);
    for v in &report.violations {
        eprintln!("violation: {v}");
    }
    #[derive(Serialize)]
    struct Validation<'a> {
        valid: bool,
        violations: &'a [cvar_mdp::mdp::Violation],
        policies_checked: usize,
        exhaustive: bool,
        non_ergodic_policies: Vec<Vec<usize>>,
    }
    if !report.is_valid() {
        run.out.json(
            "validation.json",
            &Validation {
                valid: false,
                violations: &report.violations,
                policies_checked: 0,
                exhaustive: false,
                non_ergodic_policies: Vec::new(),
            },
        )?;
        return Err(CliError::Model(anyhow::anyhow!("{} violation(s)", report.violations.len())));
    }

    let exhaustive = model.deterministic_policy_count() <= EXHAUSTIVE_CHECK_LIMIT;
    let policies: Vec<Vec<usize>> = if exhaustive {
        deterministic_policies(&model).collect()
    } else {
        let constant = (0..model.n_actions()).map(|a| vec![a; model.n_states()]);
        constant.chain(seeded_initials(&model, SAMPLED_CHECKS, seed)?).collect()
    };
    let mut bad = Vec::new();
    for actions in &policies {
        let p = induced_matrix(&model, &Policy::Deterministic(actions.clone()))?;
        if !check_ergodicity(&p).is_ergodic() {
            bad.push(actions.clone());
        }
    }
    let valid = bad.is_empty();
    println!(
        "{} states, {} actions; {} of {} {} policies ergodic",
        model.n_states(),
        model.n_actions(),
        policies.len() - bad.len(),
        policies.len(),
        if exhaustive { "deterministic" } else { "sampled" }
    );
    for actions in bad.iter().take(5) {
        eprintln!("not ergodic under policy [{}]", actions_field(actions));
    }
    run.out.json(
        "validation.json",
        &Validation { valid, violations: &[], policies_checked: policies.len(), exhaustive, non_ergodic_policies: bad },
    )?;
    if valid {
        Ok(())
    } else {
        Err(CliError::Model(anyhow::anyhow!("model is not ergodic under every checked policy")))
    }
}

fn evaluate_cmd(
    run: &mut Run,
    input: &InputArgs,
    alpha: Option<f64>,
    beta: f64,
    policy: Option<&PathBuf>,
    mean_optimal: bool,
) -> CliResult<()> {
    let loaded = run.load(input)?;
    let params = run.risk_params(&loaded, alpha, beta)?;
    run.params.mean_optimal = Some(mean_optimal);
    run.inputs.policy = policy.cloned();
    let actions = match policy {
        Some(path) => io::read_policy(path)?,
        None => solve_average_mdp(&loaded.model, &loaded.model.expected_costs(), Sense::Min)?.converged_policy,
    };
    let report = evaluate(&loaded.model, &Policy::Deterministic(actions.clone()), &params)?;
    println!("mean    {}", report.mean_cost);
    println!("std     {}", report.std_dev);
    println!("VaR     {}", report.var);
    println!("CVaR    {}", report.cvar);
    if beta != 0.0 {
        println!("CVaR + beta * mean  {}", report.mean_cvar);
    }
    run.out.json("evaluation.json", &report)?;
    write_policy(&run.out, &loaded, &actions)
}

fn solve_cmd(
    run: &mut Run,
    input: &InputArgs,
    alpha: Option<f64>,
    beta: Option<f64>,
    initial: Option<&PathBuf>,
    seed: u64,
    starts: usize,
) -> CliResult<()> {
    let loaded = run.load(input)?;
    let params = run.risk_params(&loaded, alpha, beta.unwrap_or(0.0))?;
    let model = &loaded.model;
    let single = |d: &Policy<f64>| {
        if params.beta == 0.0 {
            solve_cvar(model, &params, d)
        } else {
            solve_mean_cvar(model, &params, d)
        }
    };

    let best = if let Some(path) = initial {
        run.inputs.initial = Some(path.clone());
        let r = single(&Policy::Deterministic(io::read_policy(path)?))?;
        println!("objective {} after {} iterations", r.objective(), r.iterations);
        r
    } else {
        run.params.seed = Some(seed);
        run.params.n_starts = Some(starts);
        let initials = seeded_initials(model, starts, seed)?;
        let r = multi_start_with(model, &params, initials, seed);
        write_optima(&run.out, &r)?;
        run.out.csv(
            "runs.csv",
            &["start", "iteration", "objective", "var"],
            r.starts.iter().enumerate().flat_map(|(k, s)| {
                s.result.iter().flat_map(move |run| {
                    run.trace
                        .iter()
                        .map(move |t| vec![k.to_string(), t.iteration.to_string(), num(t.objective), opt_num(t.var)])
                })
            }),
        )?;
        run.out.json("multistart.json", &r)?;
        for o in &r.optima {
            println!(
                "local optimum {} (CVaR {}, mean {}) reached by {} of {} starts",
                o.objective, o.cvar, o.mean, o.hits, starts
            );
        }
        for (k, s) in r.starts.iter().enumerate() {
            if let Err(e) = &s.result {
                eprintln!("start {k} failed: {e}");
            }
        }
        let failures = r.failures();
        match r.best {
            Some(best) if failures == 0 => best,
            _ => return Err(CliError::Solver(anyhow::anyhow!("{failures} of {starts} starts failed"))),
        }
    };
    run.out.json("result.json", &best)?;
    write_trace(&run.out, "trace.csv", &best)?;
    write_policy(&run.out, &loaded, &best.converged_policy)
}

fn global_cmd(run: &mut Run, input: &InputArgs, alpha: Option<f64>) -> CliResult<()> {
    let loaded = run.load(input)?;
    let params = run.risk_params(&loaded, alpha, 0.0)?;
    let g = solve_global_bruteforce(&loaded.model, &params)?;
    println!("global minimum CVaR {} at y = {}", g.best_cvar, g.argmin_y);
    run.out.csv(
        "per_y.csv",
        &["y", "pseudo_cvar", "policy"],
        g.per_y.iter().map(|r| vec![num(r.y), num(r.pseudo_cvar), actions_field(&r.policy)]),
    )?;
    run.out.json("global.json", &g)?;
    write_policy(&run.out, &loaded, &g.best_policy)
}

fn sweep_cmd(
    run: &mut Run,
    input: &InputArgs,
    alpha: Option<f64>,
    betas: &[f64],
    starts: usize,
    seed: u64,
) -> CliResult<()> {
    let loaded = run.load(input)?;
    let alpha = loaded.alpha(alpha)?;
    run.params.alpha = Some(alpha);
    run.params.betas = Some(betas.to_vec());
    run.params.seed = Some(seed);
    run.params.n_starts = Some(starts);
    let initials = seeded_initials(&loaded.model, starts, seed)?;

    #[derive(Serialize)]
    struct SweepEntry {
        beta: f64,
        result: Option<MultiStartResult<f64>>,
        error: Option<String>,
    }
    let mut entries = Vec::new();
    for &beta in betas {
        let entry = match RiskParams::new(alpha, beta) {
            Ok(params) => {
                let r = multi_start_with(&loaded.model, &params, initials.clone(), seed);
                let error = (r.failures() > 0).then(|| format!("{} of {starts} starts failed", r.failures()));
                SweepEntry { beta, result: Some(r), error }
            }
            Err(e) => SweepEntry { beta, result: None, error: Some(e.to_string()) },
        };
        entries.push(entry);
    }
    let rows = entries.iter().map(|e| match e.result.as_ref().and_then(|r| r.optima.first().map(|o| (r, o))) {
        Some((r, o)) => vec![num(e.beta), num(o.cvar), num(o.mean), num(o.objective), r.optima.len().to_string()],
        None => vec![num(e.beta), String::new(), String::new(), String::new(), "0".into()],
    });
    run.out.csv("sweep.csv", &["beta", "cvar", "eta", "combined", "n_distinct_optima"], rows)?;
    run.out.json("sweep.json", &entries)?;
    for e in &entries {
        match (&e.result, &e.error) {
            (_, Some(err)) => eprintln!("beta {}: {err}", e.beta),
            (Some(r), None) => {
                let o = &r.optima[0];
                println!(
                    "beta {}: CVaR {} mean {} combined {} ({} optima)",
                    e.beta,
                    o.cvar,
                    o.mean,
                    o.objective,
                    r.optima.len()
                )
            }
            (None, None) => {}
        }
    }
    let failed = entries.iter().filter(|e| e.error.is_some()).count();
    if failed > 0 {
        return Err(CliError::Solver(anyhow::anyhow!("{failed} of {} beta values had failures", betas.len())));
    }
    Ok(())
}

fn maximize_cmd(run: &mut Run, input: &InputArgs, alpha: Option<f64>, tol: f64) -> CliResult<()> {
    let loaded = run.load(input)?;
    let params = run.risk_params(&loaded, alpha, 0.0)?;
    run.params.tol = Some(tol);
    let r = maximize_cvar(&loaded.model, &params, tol)?;
    println!("maximum CVaR {} at y = {}", r.max_cvar, r.outer_y);
    if r.saddle.left != r.saddle.right {
        println!("attained by a randomized policy (weight {} on the left policy)", r.saddle.weight_left);
    }
    run.out.csv("search_trace.csv", &["y", "h"], r.search_trace.iter().map(|p| vec![num(p.y), num(p.value)]))?;
    run.out.json("maximize.json", &r)
}

fn dispatch(command: &Command) -> CliResult<()> {
    let started = Instant::now();
    let (name, input, out) = match command {
        Command::Validate { input, out, .. } => ("validate", input, out),
        Command::Evaluate { input, out, .. } => ("evaluate", input, out),
        Command::Solve { input, out, .. } => ("solve", input, out),
        Command::Global { input, out, .. } => ("global", input, out),
        Command::SweepBeta { input, out, .. } => ("sweep-beta", input, out),
        Command::Maximize { input, out, .. } => ("maximize", input, out),
    };
    let mut run = Run::new(name, input, out)?;
    let result = match command {
        Command::Validate { input, seed, .. } => validate(&mut run, input, *seed),
        Command::Evaluate { input, alpha, beta, policy, mean_optimal, .. } => {
            evaluate_cmd(&mut run, input, *alpha, *beta, policy.as_ref(), *mean_optimal)
        }
        Command::Solve { input, alpha, beta, initial, seed, starts, .. } => {
            solve_cmd(&mut run, input, *alpha, *beta, initial.as_ref(), *seed, *starts)
        }
        Command::Global { input, alpha, .. } => global_cmd(&mut run, input, *alpha),
        Command::SweepBeta { input, alpha, betas, starts, seed, .. } => {
            sweep_cmd(&mut run, input, *alpha, betas, *starts, *seed)
        }
        Command::Maximize { input, alpha, tol, .. } => maximize_cmd(&mut run, input, *alpha, *tol),
    };
    run.finish(started, &result)?;
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
