//! Experiment records and summary statistics.

use sls_regret::conic::SolveStatus;
use sls_regret::evaluation::NoiseKind;

use crate::config::ControllerKind;
use crate::{CliError, Result};

/// One rollout row of a sweep. Synthesis wall-clock lives in the
/// separate synthesis metadata table so that record files are
/// byte-reproducible; the `solve_time` column of rollout rows is zero.
#[derive(Clone, Debug)]
pub struct ExperimentRecord {
    pub scenario: String,
    pub controller: ControllerKind,
    pub horizon: usize,
    pub noise: NoiseKind,
    pub trial: usize,
    pub seed: u64,
    pub cost: f64,
    pub regret: f64,
    pub safety_margin: f64,
    pub solve_time: f64,
    pub status: SolveStatus,
}

impl ExperimentRecord {
    /// Canonical ordering key: controller, horizon, noise, trial.
    pub fn sort_key(&self) -> (u8, usize, u8, usize) {
        (
            controller_rank(self.controller),
            self.horizon,
            noise_rank(self.noise),
            self.trial,
        )
    }
}

pub(crate) fn controller_rank(c: ControllerKind) -> u8 {
    match c {
        ControllerKind::Regret => 0,
        ControllerKind::H2 => 1,
        ControllerKind::Hinf => 2,
        ControllerKind::Clairvoyant => 3,
    }
}

pub(crate) fn noise_rank(n: NoiseKind) -> u8 {
    NoiseKind::ALL
        .iter()
        .position(|k| *k == n)
        .map(|p| p as u8)
        .unwrap_or(u8::MAX)
}

/// Per-(controller, horizon, noise) summary of a record set.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub controller: ControllerKind,
    pub horizon: usize,
    pub noise: NoiseKind,
    pub mean_cost: f64,
    pub sd_cost: f64,
    pub trials: usize,
    pub infeasible: usize,
}

/// Groups records and computes mean and sample standard deviation of
/// the cost over successful trials; rows that did not synthesize count
/// as infeasible.
pub fn summarize(records: &[ExperimentRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(CliError::Config("no records to summarize".into()));
    }
    type GroupKey = (u8, usize, u8);
    let mut groups: Vec<(GroupKey, Vec<&ExperimentRecord>)> = Vec::new();
    let mut index: std::collections::HashMap<GroupKey, usize> = std::collections::HashMap::new();
    for r in records {
        let key = (
            controller_rank(r.controller),
            r.horizon,
            noise_rank(r.noise),
        );
        let slot = *index.entry(key).or_insert_with(|| {
            groups.push((key, Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(r);
    }
    groups.sort_by_key(|(key, _)| *key);

    let mut out = Vec::with_capacity(groups.len());
    for (_, rows) in groups {
        let ok: Vec<f64> = rows
            .iter()
            .filter(|r| r.status == SolveStatus::Optimal && r.cost.is_finite())
            .map(|r| r.cost)
            .collect();
        let infeasible = rows.len() - ok.len();
        let (mean, sd) = if ok.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let n = ok.len() as f64;
            let mean = ok.iter().sum::<f64>() / n;
            let sd = if ok.len() > 1 {
                (ok.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            (mean, sd)
        };
        let first = rows[0];
        out.push(SummaryRow {
            scenario: first.scenario.clone(),
            controller: first.controller,
            horizon: first.horizon,
            noise: first.noise,
            mean_cost: mean,
            sd_cost: sd,
            trials: rows.len(),
            infeasible,
        });
    }
    Ok(out)
}

/// Synthesis metadata for one (controller, horizon): wall-clock and
/// solver diagnostics. Kept apart from rollout records because wall
/// times are not reproducible byte-for-byte.
#[derive(Clone, Debug)]
pub struct SynthesisRecord {
    pub scenario: String,
    pub controller: ControllerKind,
    pub horizon: usize,
    pub status: SolveStatus,
    pub iterations: usize,
    pub solve_time: f64,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub objective: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(cost: f64) -> ExperimentRecord {
        ExperimentRecord {
            scenario: "synthetic-stable".into(),
            controller: ControllerKind::Regret,
            horizon: 5,
            noise: NoiseKind::Gaussian,
            trial: 0,
            seed: 1,
            cost,
            regret: 0.0,
            safety_margin: 1.0,
            solve_time: 0.0,
            status: SolveStatus::Optimal,
        }
    }

    #[test]
    fn single_record_summary() {
        let rows = summarize(&[record(3.0)]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].mean_cost, 3.0);
        assert_eq!(rows[0].sd_cost, 0.0);
        assert_eq!(rows[0].trials, 1);
        assert_eq!(rows[0].infeasible, 0);
    }

    #[test]
    fn two_record_sample_sd() {
        let mut a = record(2.0);
        let mut b = record(4.0);
        a.trial = 0;
        b.trial = 1;
        let rows = summarize(&[a, b]).unwrap();
        assert_eq!(rows[0].mean_cost, 3.0);
        assert!((rows[0].sd_cost - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn group_cardinality() {
        let mut records = Vec::new();
        for ctrl in [ControllerKind::Regret, ControllerKind::H2] {
            for horizon in [2usize, 3] {
                for (ni, noise) in [NoiseKind::Gaussian, NoiseKind::Uniform].iter().enumerate() {
                    for trial in 0..5 {
                        let mut r = record(1.0 + trial as f64);
                        r.controller = ctrl;
                        r.horizon = horizon;
                        r.noise = *noise;
                        r.trial = trial;
                        r.seed = ni as u64;
                        records.push(r);
                    }
                }
            }
        }
        let rows = summarize(&records).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2);
        assert!(rows.iter().all(|r| r.trials == 5));
    }

    #[test]
    fn infeasible_rows_counted() {
        let mut a = record(2.0);
        let mut b = record(f64::NAN);
        b.status = SolveStatus::Infeasible;
        a.trial = 0;
        b.trial = 1;
        let rows = summarize(&[a, b]).unwrap();
        assert_eq!(rows[0].infeasible, 1);
        assert_eq!(rows[0].mean_cost, 2.0);
    }
}
