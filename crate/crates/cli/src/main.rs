//! `slsreg`: synthesize safe output-feedback controllers and reproduce
//! the benchmark sweeps.
//!
//! Exit codes: 0 success, 1 at least one synthesis was infeasible,
//! 2 usage error, 3 solver failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sls_regret::conic::SolveStatus;
use sls_regret_cli::config::{
    load_config, parse_controller_list, parse_noise_list, ControllerKind, Scenario, ScenarioConfig,
};
use sls_regret_cli::csv_out::{
    emit_records_csv, emit_summary_csv, emit_synthesis_csv, read_summary_csv,
};
use sls_regret_cli::plot::emit_plot;
use sls_regret_cli::records::summarize;
use sls_regret_cli::sweep::run_sweep;
use sls_regret_cli::verify::run_verify;
use sls_regret_cli::{dump, CliError};

#[derive(Parser)]
#[command(
    name = "slsreg",
    about = "Safe regret-optimal output-feedback synthesis benchmarks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Scenario: synthetic-stable, synthetic-unstable, quadrotor, custom.
    #[arg(long)]
    scenario: Option<Scenario>,

    /// Spectral scale of the synthetic system.
    #[arg(long)]
    rho: Option<f64>,

    /// Smallest horizon in the sweep.
    #[arg(long)]
    horizon_min: Option<usize>,

    /// Largest horizon in the sweep.
    #[arg(long)]
    horizon_max: Option<usize>,

    /// Monte-Carlo trials per (controller, horizon, noise).
    #[arg(long)]
    trials: Option<usize>,

    /// Comma-separated noise kinds, or `all`.
    #[arg(long, value_delimiter = ',')]
    noise: Option<Vec<String>>,

    /// Comma-separated controllers, or `all`.
    #[arg(long, value_delimiter = ',')]
    controller: Option<Vec<String>>,

    /// Base RNG seed; trial k uses seed + k.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Solver feasibility tolerance.
    #[arg(long)]
    tol: Option<f64>,

    /// Extend horizons to the full-scale caps (30 synthetic, 25 quadrotor).
    #[arg(long)]
    full_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize one controller at one horizon and dump its gains and
    /// response blocks as text matrices.
    Synthesize {
        #[command(flatten)]
        common: CommonOpts,
        /// Horizon to synthesize at.
        #[arg(long)]
        horizon: usize,
    },
    /// Run the full benchmark sweep and write records.csv, summary.csv,
    /// synthesis.csv, and costs.svg.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Render an SVG cost plot from a summary.csv.
    Plot {
        /// Summary CSV produced by `sweep`.
        #[arg(long)]
        summary: PathBuf,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the property suite on a scenario and print one line per check.
    Verify {
        #[command(flatten)]
        common: CommonOpts,
        /// Horizon for the checks.
        #[arg(long, default_value_t = 4)]
        horizon: usize,
    },
}

fn resolve_config(common: &CommonOpts) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match (&common.config, common.scenario) {
        (Some(path), _) => load_config(path)?,
        (None, Some(scenario)) => ScenarioConfig::defaults(scenario),
        (None, None) => ScenarioConfig::defaults(Scenario::SyntheticStable),
    };
    if let Some(scenario) = common.scenario {
        if common.config.is_some() {
            // Flag wins over the file's scenario: restart from defaults
            // of the flag scenario, then re-apply the file on top would
            // be ambiguous; keep it simple and just switch the scenario.
            cfg.scenario = scenario;
        }
    }
    if let Some(rho) = common.rho {
        cfg.rho = rho;
    }
    if common.horizon_min.is_some() || common.horizon_max.is_some() {
        let min = common
            .horizon_min
            .unwrap_or_else(|| cfg.horizons.iter().copied().min().unwrap_or(2));
        let max = common
            .horizon_max
            .unwrap_or_else(|| cfg.horizons.iter().copied().max().unwrap_or(min));
        if min > max {
            return Err(CliError::Config(format!(
                "horizon-min {min} exceeds horizon-max {max}"
            )));
        }
        cfg.horizons = (min..=max).collect();
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    if let Some(noise) = &common.noise {
        cfg.noise = parse_noise_list(noise)?;
    }
    if let Some(ctrl) = &common.controller {
        cfg.controllers = parse_controller_list(ctrl)?;
    }
    if let Some(seed) = common.seed {
        cfg.base_seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(tol) = common.tol {
        cfg.tol = tol;
    }
    if common.full_scale {
        cfg.full_scale();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Synthesize { common, horizon } => {
            let cfg = resolve_config(&common)?;
            let controllers = if common.controller.is_some() {
                cfg.controllers.clone()
            } else {
                vec![ControllerKind::Regret]
            };
            let mut single = cfg.clone();
            single.horizons = vec![horizon];
            single.controllers = controllers.clone();
            single.validate()?;
            let data = single.problem(horizon)?;
            let clair = sls_regret::synthesis::solve_clairvoyant(&data.lifted, &data.cost)?;
            let mut any_infeasible = false;
            for controller in controllers {
                let opts = sls_regret::synthesis::SynthesisOptions {
                    tol: single.tol,
                    ..Default::default()
                };
                let result = match controller {
                    ControllerKind::Regret => sls_regret::synthesis::solve_regret_optimal_with(
                        &data.lifted,
                        &data.cost,
                        &data.safety,
                        &data.bounds,
                        opts,
                    )?,
                    ControllerKind::H2 => sls_regret::synthesis::solve_safe_h2_with(
                        &data.lifted,
                        &data.cost,
                        &data.safety,
                        &data.bounds,
                        opts,
                    )?,
                    ControllerKind::Hinf => sls_regret::synthesis::solve_safe_hinf_with(
                        &data.lifted,
                        &data.cost,
                        &data.safety,
                        &data.bounds,
                        opts,
                    )?,
                    ControllerKind::Clairvoyant => {
                        let dir = single
                            .out_dir
                            .join(format!("{}-T{horizon}", single.scenario));
                        dump::write_matrix(&dir.join("clairvoyant_phi_xw.txt"), &clair.phi_xw)?;
                        dump::write_matrix(&dir.join("clairvoyant_phi_uw.txt"), &clair.phi_uw)?;
                        dump::write_matrix(&dir.join("clairvoyant_gram.txt"), &clair.gram)?;
                        println!("clairvoyant T={horizon}: dumped closed-form response");
                        continue;
                    }
                };
                println!(
                    "{controller} T={horizon}: status={} objective={:.6e}{}{} ({} iterations, {:.2}s)",
                    result.status,
                    result.objective,
                    result
                        .lambda
                        .map(|l| format!(" lambda={l:.6e}"))
                        .unwrap_or_default(),
                    result
                        .gamma
                        .map(|g| format!(" gamma={g:.6e}"))
                        .unwrap_or_default(),
                    result.iterations,
                    result.solve_time,
                );
                if result.status == SolveStatus::Optimal {
                    let dir = single
                        .out_dir
                        .join(format!("{}-T{horizon}", single.scenario));
                    let phi = result.phi.as_ref().expect("optimal synthesis has phi");
                    let gains = result.gains.as_ref().expect("optimal synthesis has gains");
                    dump::write_matrix(
                        &dir.join(format!("{controller}_gains.txt")),
                        gains.matrix(),
                    )?;
                    dump::write_matrix(&dir.join(format!("{controller}_phi.txt")), &phi.stacked())?;
                } else {
                    any_infeasible = true;
                }
            }
            Ok(if any_infeasible {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Sweep { common } => {
            let cfg = resolve_config(&common)?;
            cfg.validate()?;
            let output = run_sweep(&cfg)?;
            let records_path = cfg.out_dir.join("records.csv");
            let summary_path = cfg.out_dir.join("summary.csv");
            let synthesis_path = cfg.out_dir.join("synthesis.csv");
            let plot_path = cfg.out_dir.join("costs.svg");
            emit_records_csv(&output.records, &records_path)?;
            let summary = summarize(&output.records)?;
            emit_summary_csv(&summary, &summary_path)?;
            emit_synthesis_csv(&output.synthesis, &synthesis_path)?;
            emit_plot(&summary, &plot_path)?;
            let infeasible = output
                .synthesis
                .iter()
                .filter(|s| s.status != SolveStatus::Optimal)
                .count();
            let failures = output
                .synthesis
                .iter()
                .filter(|s| s.status == SolveStatus::NumericalFailure)
                .count();
            println!(
                "sweep complete: {} records, {} syntheses ({} non-optimal) -> {}",
                output.records.len(),
                output.synthesis.len(),
                infeasible,
                cfg.out_dir.display()
            );
            Ok(if failures > 0 {
                ExitCode::from(3)
            } else if infeasible > 0 {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Plot { summary, out } => {
            let rows = read_summary_csv(&summary)?;
            emit_plot(&rows, &out)?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { common, horizon } => {
            let cfg = resolve_config(&common)?;
            let ok = run_verify(&cfg, horizon)?;
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}
