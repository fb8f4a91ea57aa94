//! The benchmark sweep: synthesize every configured controller at every
//! horizon, roll out the configured noise families over Monte-Carlo
//! trials, and collect records.
//!
//! Synthesis jobs run in parallel; rollouts are cheap and deterministic
//! given the per-trial seeds, and the final record order is canonical,
//! so identical configurations produce identical record files.

use rayon::prelude::*;

use sls_regret::conic::SolveStatus;
use sls_regret::evaluation::{
    evaluate_regret, rollout, sample_noise, worst_case_noise, NoiseKind, NoiseModel,
    NoiseRealization,
};
use sls_regret::synthesis::{
    solve_clairvoyant, solve_regret_optimal_with, solve_safe_h2_with, solve_safe_hinf_with,
    ClairvoyantResponse, SynthesisOptions, SynthesisResult,
};
use sls_regret::{ControlGains, ResponseMatrix};

use crate::config::{ControllerKind, ProblemData, ScenarioConfig};
use crate::records::{ExperimentRecord, SynthesisRecord};
use crate::{CliError, Result};

/// Everything a sweep produces.
pub struct SweepOutput {
    pub records: Vec<ExperimentRecord>,
    pub synthesis: Vec<SynthesisRecord>,
}

struct SynthesizedController {
    controller: ControllerKind,
    horizon: usize,
    status: SolveStatus,
    phi: Option<ResponseMatrix>,
    gains: Option<ControlGains>,
    record: SynthesisRecord,
}

fn synthesize_one(
    cfg: &ScenarioConfig,
    data: &ProblemData,
    controller: ControllerKind,
    horizon: usize,
) -> Result<SynthesizedController> {
    let opts = SynthesisOptions {
        tol: cfg.tol,
        ..Default::default()
    };
    let scenario = cfg.scenario.to_string();
    let result: SynthesisResult = match controller {
        ControllerKind::Regret => {
            solve_regret_optimal_with(&data.lifted, &data.cost, &data.safety, &data.bounds, opts)?
        }
        ControllerKind::H2 => {
            solve_safe_h2_with(&data.lifted, &data.cost, &data.safety, &data.bounds, opts)?
        }
        ControllerKind::Hinf => {
            solve_safe_hinf_with(&data.lifted, &data.cost, &data.safety, &data.bounds, opts)?
        }
        ControllerKind::Clairvoyant => {
            // The clairvoyant is closed-form; report it in the same shape.
            let start = std::time::Instant::now();
            let _ = solve_clairvoyant(&data.lifted, &data.cost)?;
            let solve_time = start.elapsed().as_secs_f64();
            return Ok(SynthesizedController {
                controller,
                horizon,
                status: SolveStatus::Optimal,
                phi: None,
                gains: None,
                record: SynthesisRecord {
                    scenario,
                    controller,
                    horizon,
                    status: SolveStatus::Optimal,
                    iterations: 0,
                    solve_time,
                    lambda: None,
                    gamma: None,
                    objective: f64::NAN,
                },
            });
        }
    };
    Ok(SynthesizedController {
        controller,
        horizon,
        status: result.status,
        phi: result.phi,
        gains: result.gains,
        record: SynthesisRecord {
            scenario,
            controller,
            horizon,
            status: result.status,
            iterations: result.iterations,
            solve_time: result.solve_time,
            lambda: result.lambda,
            gamma: result.gamma,
            objective: result.objective,
        },
    })
}

/// Clairvoyant trajectories for one noise realization: `x = Φ_xw^c w`,
/// `u = Φ_uw^c w`, with cost equal to the Gram quadratic form.
fn clairvoyant_rollout(
    clair: &ClairvoyantResponse,
    data: &ProblemData,
    noise: &NoiseRealization,
) -> (f64, f64) {
    let x = &clair.phi_xw * &noise.w;
    let u = &clair.phi_uw * &noise.w;
    let cost = data.cost.evaluate(&x, &u);
    let margin = if data.safety.rows() == 0 {
        f64::INFINITY
    } else {
        let mut z = nalgebra::DVector::zeros(x.len() + u.len());
        z.rows_mut(0, x.len()).copy_from(&x);
        z.rows_mut(x.len(), u.len()).copy_from(&u);
        let vals = &data.safety.matrix * z;
        vals.iter()
            .zip(data.safety.bound.iter())
            .map(|(lhs, rhs)| rhs - lhs)
            .fold(f64::INFINITY, f64::min)
    };
    (cost, margin)
}

/// Runs the full sweep for a validated configuration.
pub fn run_sweep(cfg: &ScenarioConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let scenario_name = cfg.scenario.to_string();

    // Synthesis jobs in parallel over (horizon, controller).
    let jobs: Vec<(usize, ControllerKind)> = cfg
        .horizons
        .iter()
        .flat_map(|&t| cfg.controllers.iter().map(move |&c| (t, c)))
        .collect();
    let synthesized: Vec<Result<SynthesizedController>> = jobs
        .par_iter()
        .map(|&(horizon, controller)| {
            let data = cfg.problem(horizon)?;
            synthesize_one(cfg, &data, controller, horizon)
        })
        .collect();
    let mut controllers: Vec<SynthesizedController> = Vec::with_capacity(synthesized.len());
    for s in synthesized {
        controllers.push(s?);
    }

    let mut records = Vec::new();
    let mut synthesis = Vec::new();
    for sc in &controllers {
        synthesis.push(sc.record.clone());
    }

    for &horizon in &cfg.horizons {
        let data = cfg.problem(horizon)?;
        let clair = solve_clairvoyant(&data.lifted, &data.cost)?;
        for &controller in &cfg.controllers {
            let sc = controllers
                .iter()
                .find(|s| s.horizon == horizon && s.controller == controller)
                .ok_or_else(|| CliError::Solver("missing synthesis job".into()))?;
            for &noise_kind in &cfg.noise {
                // Adversarial noise is deterministic per controller.
                let adversarial: Option<NoiseRealization> = if noise_kind == NoiseKind::WorstCase {
                    match (controller, &sc.phi) {
                        (ControllerKind::Clairvoyant, _) => None,
                        (_, Some(phi)) => {
                            let (real, _) =
                                worst_case_noise(phi, &data.cost, &clair.gram, &data.bounds)?;
                            Some(real)
                        }
                        _ => None,
                    }
                } else {
                    None
                };
                for trial in 0..cfg.trials {
                    let seed = cfg.base_seed.wrapping_add(trial as u64);
                    let mut record = ExperimentRecord {
                        scenario: scenario_name.clone(),
                        controller,
                        horizon,
                        noise: noise_kind,
                        trial,
                        seed,
                        cost: f64::NAN,
                        regret: f64::NAN,
                        safety_margin: f64::NAN,
                        solve_time: 0.0,
                        status: sc.status,
                    };
                    if sc.status == SolveStatus::Optimal {
                        let noise = if noise_kind == NoiseKind::WorstCase {
                            match (&adversarial, controller) {
                                (_, ControllerKind::Clairvoyant) => {
                                    // Its own regret matrix is zero; the
                                    // maximizing admissible noise is zero.
                                    NoiseRealization {
                                        w: nalgebra::DVector::zeros(
                                            data.lifted.dims().state_total(),
                                        ),
                                        e: nalgebra::DVector::zeros(
                                            data.lifted.dims().meas_total(),
                                        ),
                                        model: NoiseModel::new(NoiseKind::WorstCase, 0),
                                    }
                                }
                                (Some(real), _) => real.clone(),
                                (None, _) => {
                                    return Err(CliError::Solver(
                                        "missing adversarial noise".into(),
                                    ))
                                }
                            }
                        } else {
                            sample_noise(&NoiseModel::new(noise_kind, seed), &data.bounds)?
                        };
                        match controller {
                            ControllerKind::Clairvoyant => {
                                let (cost, margin) = clairvoyant_rollout(&clair, &data, &noise);
                                record.cost = cost;
                                record.regret = 0.0;
                                record.safety_margin = margin;
                            }
                            _ => {
                                let gains = sc
                                    .gains
                                    .as_ref()
                                    .ok_or_else(|| CliError::Solver("missing gains".into()))?;
                                let out =
                                    rollout(&data.system, gains, &noise, &data.safety, &data.cost)?;
                                record.cost = out.cost;
                                record.regret = evaluate_regret(out.cost, &noise.w, &clair.gram);
                                record.safety_margin = out.safety_margin;
                            }
                        }
                    }
                    records.push(record);
                }
            }
        }
    }
    records.sort_by_key(|r| r.sort_key());
    Ok(SweepOutput { records, synthesis })
}
