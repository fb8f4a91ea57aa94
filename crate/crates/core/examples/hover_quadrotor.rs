//! Synthesize the worst-case-regret controller for the hovering
//! quadrotor and compare it with the safe H2 and H-infinity baselines
//! under a few sampled disturbances.

use nalgebra::{dvector, DMatrix, DVector};
use sls_regret::evaluation::{
    circumscribed_radius, evaluate_regret, rollout, sample_noise, worst_case_regret_value,
    NoiseKind, NoiseModel,
};
use sls_regret::ltv::{build_cost, build_quadrotor_system, lift, uniform_box_bounds, SafetySpec};
use sls_regret::synthesis::{
    solve_clairvoyant, solve_regret_optimal, solve_safe_h2, solve_safe_hinf,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let horizon = 6;
    let system = build_quadrotor_system(horizon)?;
    let lifted = lift(&system);
    let dims = lifted.dims();
    let cost = build_cost(
        &DMatrix::identity(dims.state, dims.state),
        &DMatrix::identity(dims.input, dims.input),
        dims,
    )?;
    let safety = SafetySpec::state_input_box(
        &DVector::from_element(6, 5.0),
        &dvector![std::f64::consts::PI, std::f64::consts::PI, 20.0],
        dims,
    )?;
    let bounds = uniform_box_bounds(0.1, 0.1, dims)?;

    let clairvoyant = solve_clairvoyant(&lifted, &cost)?;
    let r = circumscribed_radius(&bounds)?;

    let regret = solve_regret_optimal(&lifted, &cost, &safety, &bounds)?;
    let h2 = solve_safe_h2(&lifted, &cost, &safety, &bounds)?;
    let hinf = solve_safe_hinf(&lifted, &cost, &safety, &bounds)?;

    println!("quadrotor, T = {horizon}, noise radius r = {r:.3}");
    for (name, result) in [("regret", &regret), ("h2", &h2), ("hinf", &hinf)] {
        let phi = result.phi.as_ref().expect("optimal synthesis");
        let wc = worst_case_regret_value(phi, &cost, &clairvoyant.gram, r);
        println!(
            "  {name:6} status={} worst-case regret (ball) = {wc:.4}",
            result.status
        );
    }

    println!("sampled gaussian disturbances:");
    for seed in 0..5 {
        let noise = sample_noise(&NoiseModel::new(NoiseKind::Gaussian, seed), &bounds)?;
        print!("  seed {seed}:");
        for (name, result) in [("regret", &regret), ("h2", &h2), ("hinf", &hinf)] {
            let gains = result.gains.as_ref().expect("optimal synthesis");
            let out = rollout(&system, gains, &noise, &safety, &cost)?;
            let reg = evaluate_regret(out.cost, &noise.w, &clairvoyant.gram);
            print!(" {name} cost={:.4} regret={:.4}", out.cost, reg);
        }
        println!();
    }
    Ok(())
}
