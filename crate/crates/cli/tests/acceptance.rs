//! Acceptance suite for the benchmark harness: desk-scale reproduction
//! of the cost-versus-horizon orderings under every noise family, and
//! byte determinism of the sweep outputs.
//!
//! The sweep runs twice with the same seed; the first run feeds the
//! statistical checks and the second must reproduce the record and
//! summary files byte for byte.

use std::collections::HashMap;
use std::time::Instant;

use sls_regret::conic::SolveStatus;
use sls_regret::evaluation::NoiseKind;

use sls_regret_cli::config::{ControllerKind, Scenario, ScenarioConfig};
use sls_regret_cli::csv_out::{emit_records_csv, emit_summary_csv};
use sls_regret_cli::plot::emit_plot;
use sls_regret_cli::records::{summarize, ExperimentRecord};
use sls_regret_cli::sweep::run_sweep;

fn sweep_config() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::defaults(Scenario::SyntheticStable);
    cfg.horizons = (2..=15).collect();
    cfg.trials = 100;
    cfg.noise = NoiseKind::ALL.to_vec();
    cfg.controllers = ControllerKind::ALL.to_vec();
    cfg.base_seed = 1;
    cfg
}

/// Paired per-trial costs of one (controller, horizon, noise) cell.
fn costs(records: &[ExperimentRecord]) -> HashMap<(ControllerKind, usize, NoiseKind), Vec<f64>> {
    let mut map: HashMap<(ControllerKind, usize, NoiseKind), Vec<f64>> = HashMap::new();
    for r in records {
        assert_eq!(r.status, SolveStatus::Optimal, "non-optimal synthesis row");
        map.entry((r.controller, r.horizon, r.noise))
            .or_default()
            .push(r.cost);
    }
    map
}

/// `lhs <= rhs` within two standard errors of the paired difference
/// plus a small relative allowance for numerically coincident
/// controllers (ties at figure resolution).
fn leq_within_2se(lhs: &[f64], rhs: &[f64], label: &str) {
    assert_eq!(lhs.len(), rhs.len(), "{label}: unpaired samples");
    let n = lhs.len() as f64;
    let diffs: Vec<f64> = lhs.iter().zip(rhs.iter()).map(|(a, b)| a - b).collect();
    let mean_d = diffs.iter().sum::<f64>() / n;
    let sd_d = if diffs.len() > 1 {
        (diffs
            .iter()
            .map(|d| (d - mean_d) * (d - mean_d))
            .sum::<f64>()
            / (n - 1.0))
            .sqrt()
    } else {
        0.0
    };
    let se = sd_d / n.sqrt();
    let rhs_mean = rhs.iter().sum::<f64>() / n;
    let tie_allowance = 1e-4 * (1.0 + rhs_mean.abs());
    assert!(
        mean_d <= 2.0 * se + tie_allowance,
        "{label}: mean difference {mean_d:.6e} exceeds 2se {:.6e} + tie {tie_allowance:.2e}",
        2.0 * se
    );
}

/// Quadrotor at T = 10 under Gaussian noise: the regret controller's
/// mean cost lies between the H2 and H-infinity baselines.
#[test]
fn quadrotor_gaussian_cost_lies_between_baselines() {
    let mut cfg = ScenarioConfig::defaults(Scenario::Quadrotor);
    cfg.horizons = vec![10];
    cfg.trials = 100;
    cfg.noise = vec![NoiseKind::Gaussian];
    cfg.controllers = vec![
        ControllerKind::Regret,
        ControllerKind::H2,
        ControllerKind::Hinf,
    ];
    cfg.base_seed = 1;
    let output = run_sweep(&cfg).expect("quadrotor sweep");
    let by_cell = costs(&output.records);
    let cell = |c: ControllerKind| -> &Vec<f64> {
        by_cell.get(&(c, 10, NoiseKind::Gaussian)).expect("cell")
    };
    leq_within_2se(
        cell(ControllerKind::H2),
        cell(ControllerKind::Regret),
        "quadrotor gaussian h2<=regret",
    );
    leq_within_2se(
        cell(ControllerKind::Regret),
        cell(ControllerKind::Hinf),
        "quadrotor gaussian regret<=hinf",
    );
    println!("quadrotor benchmark ordering (T=10, gaussian): PASS");
}

#[test]
fn criteria_6_and_7_figure_reproduction_and_determinism() {
    let cfg = sweep_config();
    let start = Instant::now();
    let first = run_sweep(&cfg).expect("sweep");
    let sweep_seconds = start.elapsed().as_secs_f64();
    assert!(
        sweep_seconds < 1800.0,
        "sweep took {sweep_seconds:.0}s, over the 30 minute target"
    );

    // Cardinality: horizons x controllers x noise kinds x trials.
    assert_eq!(
        first.records.len(),
        14 * cfg.controllers.len() * cfg.noise.len() * cfg.trials
    );

    // Row-level invariants: every optimal row is safe and never beats
    // the clairvoyant by more than numerical noise.
    for r in &first.records {
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!(
            r.safety_margin >= -1e-6,
            "unsafe row: {:?} T={} {} trial {} margin {:.3e}",
            r.controller,
            r.horizon,
            r.noise,
            r.trial,
            r.safety_margin
        );
        assert!(
            r.regret >= -1e-6,
            "negative regret: {:?} T={} {} trial {} regret {:.3e}",
            r.controller,
            r.horizon,
            r.noise,
            r.trial,
            r.regret
        );
    }

    let by_cell = costs(&first.records);
    let cell = |c: ControllerKind, t: usize, k: NoiseKind| -> &Vec<f64> {
        by_cell.get(&(c, t, k)).expect("cell present")
    };

    for &t in &cfg.horizons {
        // (a) Gaussian: mean(h2) <= mean(regret) <= mean(hinf).
        leq_within_2se(
            cell(ControllerKind::H2, t, NoiseKind::Gaussian),
            cell(ControllerKind::Regret, t, NoiseKind::Gaussian),
            &format!("gaussian h2<=regret at T={t}"),
        );
        leq_within_2se(
            cell(ControllerKind::Regret, t, NoiseKind::Gaussian),
            cell(ControllerKind::Hinf, t, NoiseKind::Gaussian),
            &format!("gaussian regret<=hinf at T={t}"),
        );
        // (b) Adversarial: mean(regret) <= mean(h2).
        leq_within_2se(
            cell(ControllerKind::Regret, t, NoiseKind::WorstCase),
            cell(ControllerKind::H2, t, NoiseKind::WorstCase),
            &format!("adversarial regret<=h2 at T={t}"),
        );
        // (c) Best of both worlds for every noise kind.
        for &kind in &cfg.noise {
            let regret = cell(ControllerKind::Regret, t, kind);
            let h2 = cell(ControllerKind::H2, t, kind);
            let hinf = cell(ControllerKind::Hinf, t, kind);
            let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
            let better = if mean(h2) >= mean(hinf) { hinf } else { h2 };
            let worse = if mean(h2) >= mean(hinf) { h2 } else { hinf };
            let _ = better;
            leq_within_2se(
                regret,
                worse,
                &format!("best-of-both-worlds under {kind} at T={t}"),
            );
        }
    }
    println!("acceptance criterion 6 (figure orderings at desk scale, {sweep_seconds:.0}s): PASS");

    // Criterion 7: rerun and compare bytes.
    let dir = std::env::temp_dir().join("slsreg-acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    let paths = [
        dir.join("records-1.csv"),
        dir.join("summary-1.csv"),
        dir.join("records-2.csv"),
        dir.join("summary-2.csv"),
    ];
    emit_records_csv(&first.records, &paths[0]).unwrap();
    let summary = summarize(&first.records).unwrap();
    emit_summary_csv(&summary, &paths[1]).unwrap();
    emit_plot(&summary, &dir.join("costs.svg")).unwrap();

    let second = run_sweep(&cfg).expect("second sweep");
    emit_records_csv(&second.records, &paths[2]).unwrap();
    emit_summary_csv(&summarize(&second.records).unwrap(), &paths[3]).unwrap();

    let records_1 = std::fs::read(&paths[0]).unwrap();
    let records_2 = std::fs::read(&paths[2]).unwrap();
    assert_eq!(records_1, records_2, "record files differ between reruns");
    let summary_1 = std::fs::read(&paths[1]).unwrap();
    let summary_2 = std::fs::read(&paths[3]).unwrap();
    assert_eq!(summary_1, summary_2, "summary files differ between reruns");
    println!("acceptance criterion 7 (byte-identical rerun): PASS");
}
