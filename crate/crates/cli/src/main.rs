//! Command-line front end for the tabrl toolkit.
//!
//! Exit codes: 0 on success, 1 on validation or usage errors, 2 when
//! `verify-lemmas` finds a failed assertion.

use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use tabrl::bounds::{
    auxiliary_sequence, bernstein_condition_check, default_depth, eval_bound_report,
};
use tabrl::families::MdpFamily;
use tabrl::perturb::{
    end_to_end, perturbation_scale, MethodChoice, PerturbationConfig, PlannerConfig,
};
use tabrl::sampling::sample_empirical_kernel;
use tabrl::solver::{solve_optimal, solve_optimal_oracle, Method};
use tabrl::sweep::{run_sweep, to_csv, write_csv, ExperimentSpec};
use tabrl::tiebreak::certify_tie_breaking;
use tabrl::types::{Policy, TabularMdp};
use tabrl::verify::run_lemma_battery;
use tabrl::{generate_mdp, Error};

#[derive(Parser)]
#[command(name = "tabrl", version, about = "Tabular MDP planning and evaluation from a generative model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an MDP exactly and print the optimal policy and values.
    Solve(SolveArgs),
    /// Plug-in policy evaluation on a sampled empirical model, with bounds.
    Evaluate(EvaluateArgs),
    /// Sample, perturb, plan, and score the learned policy on the true MDP.
    Plan(PlanArgs),
    /// Run an experiment sweep from a JSON spec and emit CSV.
    Sweep(SweepArgs),
    /// Run the hard lemma battery over seeded instances.
    VerifyLemmas(VerifyArgs),
    /// Monte-Carlo certification of perturbation tie-breaking.
    CertifyTiebreak(TiebreakArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Path to the MDP JSON file.
    mdp: String,
    #[arg(long, default_value = "pi")]
    method: String,
    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Path to the MDP JSON file.
    mdp: String,
    /// Policy JSON (`{"actions": [...]}`); defaults to the optimal policy
    /// of the true MDP.
    #[arg(long)]
    policy: Option<String>,
    /// Samples per state-action pair.
    #[arg(long, default_value_t = 1000)]
    n: u64,
    #[arg(long, default_value_t = 0)]
    sample_seed: u64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
}

#[derive(Args)]
struct PlanArgs {
    /// Path to the MDP JSON file.
    mdp: String,
    /// Planner config JSON (fields: epsilon, delta, c0, c2, method, xi,
    /// alpha, c1, seed, sample_seed). CLI flags override file values.
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    sample_seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment spec JSON.
    #[arg(long)]
    config: String,
    /// CSV destination; falls back to the spec's output_path, then stdout.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Number of seeded instances per check.
    #[arg(long, default_value_t = 100)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TiebreakArgs {
    /// Path to an MDP JSON file; omit to generate a family instance.
    mdp: Option<String>,
    #[arg(long, default_value = "symmetric-adversarial")]
    family: String,
    #[arg(long, default_value_t = 4)]
    num_states: usize,
    #[arg(long, default_value_t = 3)]
    num_actions: usize,
    #[arg(long, default_value_t = 0.9)]
    discount: f64,
    #[arg(long, default_value_t = 0)]
    instance_seed: u64,
    #[arg(long, default_value_t = 0.1)]
    xi: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// On-disk planner configuration for `plan`.
#[derive(Serialize, Deserialize, Default)]
struct PlanFileConfig {
    epsilon: Option<f64>,
    delta: Option<f64>,
    c0: Option<f64>,
    c1: Option<f64>,
    c2: Option<f64>,
    method: Option<String>,
    xi: Option<f64>,
    alpha: Option<f64>,
    seed: Option<u64>,
    sample_seed: Option<u64>,
}

#[derive(Serialize)]
struct SolveOutput {
    policy: Vec<usize>,
    value: Vec<f64>,
    q: Vec<f64>,
    iters: usize,
    converged: bool,
}

#[derive(Serialize)]
struct PlanOutput {
    policy: Vec<usize>,
    achieved_gap: f64,
    q_gap: f64,
    samples_per_pair: u64,
    total_samples: u64,
    iters: usize,
    xi: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are successes; everything else is a
            // usage error and exits 1.
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve(args) => {
            let mdp = load_mdp(&args.mdp)?;
            let method: Method = args.method.parse().map_err(anyhow::Error::from)?;
            let out = solve_optimal(&mdp, method, args.max_iters, args.tol)?;
            let output = SolveOutput {
                policy: out.policy.actions().to_vec(),
                value: out.value.0.iter().copied().collect(),
                q: out.q.0.iter().copied().collect(),
                iters: out.iters,
                converged: out.converged,
            };
            println!("{}", serde_json::to_string_pretty(&output)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate(args) => {
            let mdp = load_mdp(&args.mdp)?;
            let pi = match &args.policy {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading policy file {path}"))?;
                    let pi: Policy = serde_json::from_str(&text)?;
                    pi.validate_for(&mdp)?;
                    pi
                }
                None => solve_optimal_oracle(&mdp)?.policy,
            };
            let em = sample_empirical_kernel(&mdp, args.n, args.sample_seed)?;
            let report = eval_bound_report(&mdp, &em, &pi, args.delta)?;

            let m = default_depth(mdp.discount());
            let aux = auxiliary_sequence(&mdp, &pi, m)?;
            let beta1 = 2.0 * (4.0 * m as f64 * mdp.num_states() as f64 / args.delta).ln();
            let bernstein = bernstein_condition_check(
                mdp.kernel(),
                em.kernel_hat(),
                &pi,
                &aux,
                beta1,
                args.n,
            )?;

            let combined = serde_json::json!({
                "policy": pi.actions(),
                "report": report,
                "bernstein": bernstein,
            });
            println!("{}", serde_json::to_string_pretty(&combined)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Plan(args) => {
            let mdp = load_mdp(&args.mdp)?;
            let mut file_cfg = PlanFileConfig::default();
            if let Some(path) = &args.config {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config file {path}"))?;
                file_cfg = serde_json::from_str(&text)?;
            }
            let epsilon = args.epsilon.or(file_cfg.epsilon).unwrap_or(0.1);
            let delta = args.delta.or(file_cfg.delta).unwrap_or(0.1);
            let method_name = args.method.or(file_cfg.method).unwrap_or_else(|| "pi".into());
            let method = match method_name.as_str() {
                "qvi" => MethodChoice::Qvi,
                "pi" => MethodChoice::Pi,
                other => bail!("unknown method `{other}` (use qvi|pi)"),
            };
            let cfg = PlannerConfig {
                epsilon,
                delta,
                c0: file_cfg.c0.unwrap_or(4.0),
                c2: file_cfg.c2.unwrap_or(4.0),
                method,
            };
            let alpha = args.alpha.or(file_cfg.alpha).unwrap_or(1.0);
            let c1 = file_cfg.c1.unwrap_or(1.0);
            let xi = match args.xi.or(file_cfg.xi) {
                Some(xi) => xi,
                None => perturbation_scale(
                    mdp.num_states(),
                    mdp.num_actions(),
                    mdp.discount(),
                    epsilon,
                    c1,
                    alpha,
                )?,
            };
            let pcfg = PerturbationConfig { xi, alpha, c1, seed: file_cfg.seed.unwrap_or(0) };
            let sample_seed = args.sample_seed.or(file_cfg.sample_seed).unwrap_or(0);
            let outcome = end_to_end(&mdp, &cfg, &pcfg, sample_seed)?;
            let total = outcome.samples_per_pair
                * mdp.num_states() as u64
                * mdp.num_actions() as u64;
            let output = PlanOutput {
                policy: outcome.policy.actions().to_vec(),
                achieved_gap: outcome.achieved_gap,
                q_gap: outcome.q_gap,
                samples_per_pair: outcome.samples_per_pair,
                total_samples: total,
                iters: outcome.iters,
                xi,
            };
            println!("{}", serde_json::to_string_pretty(&output)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep(args) => {
            let text = std::fs::read_to_string(&args.config)
                .with_context(|| format!("reading sweep spec {}", args.config))?;
            let spec = ExperimentSpec::from_json_str(&text)?;
            let records = run_sweep(&spec)?;
            let dest = args.out.clone().unwrap_or_else(|| spec.output_path.clone());
            if dest.is_empty() {
                print!("{}", to_csv(&records));
            } else {
                write_csv(&records, &dest)?;
                eprintln!("wrote {} records to {dest}", records.len());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyLemmas(args) => {
            if args.seeds == 0 {
                bail!("--seeds must be positive");
            }
            let report = run_lemma_battery(args.seeds, args.seed)?;
            println!("{:<28} {:>10} {:>10} {:>14}", "check", "instances", "failures", "worst margin");
            for c in &report.checks {
                println!(
                    "{:<28} {:>10} {:>10} {:>14.3e}  {}",
                    c.name,
                    c.instances,
                    c.failures,
                    c.worst_margin,
                    if c.failures == 0 { "ok" } else { "FAIL" }
                );
            }
            if report.all_pass {
                println!("all checks passed");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("lemma battery FAILED");
                Ok(ExitCode::from(2))
            }
        }
        Command::CertifyTiebreak(args) => {
            let mdp = match &args.mdp {
                Some(path) => load_mdp(path)?,
                None => {
                    let family: MdpFamily = args.family.parse()?;
                    generate_mdp(
                        family,
                        args.num_states,
                        args.num_actions,
                        args.discount,
                        args.instance_seed,
                    )?
                }
            };
            let report = certify_tie_breaking(&mdp, args.xi, args.delta, args.trials, args.seed)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_mdp(path: &str) -> Result<TabularMdp> {
    TabularMdp::from_json_path(path).map_err(|e| match e {
        Error::Io(io) => anyhow::Error::from(io).context(format!("reading MDP file {path}")),
        other => anyhow::Error::from(other),
    })
}
