//! The `verify` subcommand: run the library's property checks on a
//! configured scenario and print one pass/fail line per check.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use sls_regret::conic::SolveStatus;
use sls_regret::evaluation::circumscribed_radius;
use sls_regret::evaluation::{
    rollout, sample_noise, verify_safety_exact, worst_case_noise, worst_case_regret_value,
    NoiseKind, NoiseModel,
};
use sls_regret::sls::{
    affine_residuals, apply_response, causality_violation, gains_from_response,
    response_from_gains, ControlGains,
};
use sls_regret::synthesis::{
    solve_clairvoyant, solve_regret_optimal_with, solve_safe_h2_with, solve_safe_hinf_with, Route,
    SynthesisOptions, SynthesisResult,
};
use sls_regret::{Dims, SafetySpec};

use crate::config::ScenarioConfig;
use crate::Result;

fn random_gains(dims: Dims, rng: &mut impl Rng) -> ControlGains {
    let mut k = DMatrix::zeros(dims.input_total(), dims.meas_total());
    for t in 0..dims.horizon {
        for s in 0..=t {
            for i in 0..dims.input {
                for j in 0..dims.meas {
                    k[(t * dims.input + i, s * dims.meas + j)] = rng.random::<f64>() * 2.0 - 1.0;
                }
            }
        }
    }
    ControlGains::new(k, dims).expect("random gains are causal")
}

pub fn run_verify(cfg: &ScenarioConfig, horizon: usize) -> Result<bool> {
    let data = cfg.problem(horizon)?;
    let dims = data.lifted.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.base_seed);
    let mut all_ok = true;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{}: {name} ({detail})", if ok { "PASS" } else { "FAIL" });
        all_ok &= ok;
    };

    // Response/gain round trip.
    let mut worst_gain = 0.0f64;
    let mut worst_affine = 0.0f64;
    for _ in 0..50 {
        let gains = random_gains(dims, &mut rng);
        let phi = response_from_gains(&data.lifted, &gains);
        let rec = gains_from_response(&phi)?;
        worst_gain = worst_gain.max(
            (rec.matrix() - gains.matrix())
                .iter()
                .fold(0.0f64, |a, v| a.max(v.abs())),
        );
        let (r1, r2) = affine_residuals(&data.lifted, &phi);
        let scale = 1.0 + phi.max_abs();
        let err = r1
            .iter()
            .chain(r2.iter())
            .fold(0.0f64, |a, v| a.max(v.abs()))
            / scale;
        worst_affine = worst_affine.max(err);
    }
    check(
        "gain recovery round trip",
        worst_gain <= 1e-8,
        format!("max error {worst_gain:.2e}"),
    );
    check(
        "affine feasibility of constructed responses",
        worst_affine <= 1e-9,
        format!("max residual {worst_affine:.2e}"),
    );

    // Rollout equals the response prediction.
    let mut worst_traj = 0.0f64;
    for trial in 0..50u64 {
        let gains = random_gains(dims, &mut rng);
        let phi = response_from_gains(&data.lifted, &gains);
        let noise = sample_noise(
            &NoiseModel::new(NoiseKind::Uniform, cfg.base_seed.wrapping_add(trial)),
            &data.bounds,
        )?;
        let (x, u) = apply_response(&phi, &noise.w, &noise.e)?;
        let out = rollout(
            &data.system,
            &gains,
            &noise,
            &SafetySpec::unconstrained(dims),
            &data.cost,
        )?;
        worst_traj = worst_traj.max((&out.x - x).amax()).max((&out.u - u).amax());
    }
    check(
        "rollout matches response prediction",
        worst_traj <= 1e-8,
        format!("max deviation {worst_traj:.2e}"),
    );

    // Sampled noise respects the boxes.
    let mut violations = 0usize;
    for kind in NoiseKind::STOCHASTIC {
        for trial in 0..200u64 {
            let real = sample_noise(
                &NoiseModel::new(kind, cfg.base_seed.wrapping_add(trial)),
                &data.bounds,
            )?;
            if !data.bounds.process.contains(&real.w, 0.0)
                || !data.bounds.measurement.contains(&real.e, 0.0)
            {
                violations += 1;
            }
        }
    }
    check(
        "sampled noise stays inside the boxes",
        violations == 0,
        format!("{violations} violations"),
    );

    // Syntheses: solve, verify safety exactly, check causality, and
    // compare the two program constructions.
    let clair = solve_clairvoyant(&data.lifted, &data.cost)?;
    let opts_reduced = SynthesisOptions {
        tol: cfg.tol,
        route: Route::Reduced,
    };
    let opts_explicit = SynthesisOptions {
        tol: cfg.tol,
        route: Route::Explicit,
    };
    type Solver<'a> = Box<dyn Fn(SynthesisOptions) -> sls_regret::Result<SynthesisResult> + 'a>;
    let solvers: [(&str, Solver); 3] = [
        (
            "regret",
            Box::new(|o| {
                solve_regret_optimal_with(&data.lifted, &data.cost, &data.safety, &data.bounds, o)
            }),
        ),
        (
            "h2",
            Box::new(|o| {
                solve_safe_h2_with(&data.lifted, &data.cost, &data.safety, &data.bounds, o)
            }),
        ),
        (
            "hinf",
            Box::new(|o| {
                solve_safe_hinf_with(&data.lifted, &data.cost, &data.safety, &data.bounds, o)
            }),
        ),
    ];
    for (name, solver) in &solvers {
        let reduced = solver(opts_reduced)?;
        if reduced.status != SolveStatus::Optimal {
            check(
                &format!("{name} synthesis"),
                false,
                format!("status {}", reduced.status),
            );
            continue;
        }
        let phi = reduced.phi.as_ref().expect("optimal");
        let margins = verify_safety_exact(phi, &data.safety, &data.bounds)?;
        let min_margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);
        check(
            &format!("{name} robust safety"),
            min_margin >= -1e-6,
            format!("min margin {min_margin:.2e}"),
        );
        let causality = causality_violation(phi);
        check(
            &format!("{name} causality"),
            causality <= 1e-9,
            format!("violation {causality:.2e}"),
        );
        let explicit = solver(opts_explicit)?;
        let agree = if explicit.status == SolveStatus::Optimal {
            let (a, b) = (reduced.objective, explicit.objective);
            (a - b).abs() <= 1e-5 * (1.0 + a.abs().max(b.abs()))
        } else {
            false
        };
        check(
            &format!("{name} reduced/explicit agreement"),
            agree,
            format!(
                "objectives {:.6e} / {:.6e}",
                reduced.objective, explicit.objective
            ),
        );
        // Adversarial noise never beats the analytic bound.
        let r = circumscribed_radius(&data.bounds)?;
        let (_, realized) = worst_case_noise(phi, &data.cost, &clair.gram, &data.bounds)?;
        let bound = worst_case_regret_value(phi, &data.cost, &clair.gram, r);
        check(
            &format!("{name} adversarial noise under analytic bound"),
            realized <= bound + 1e-8,
            format!("realized {realized:.4e} <= bound {bound:.4e}"),
        );
    }
    Ok(all_ok)
}
