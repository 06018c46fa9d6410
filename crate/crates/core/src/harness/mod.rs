//! Monte Carlo experiments over the sparsity level.
//!
//! A sweep draws `trials_per_K` instances for every `K` in the grid and runs
//! each listed solver on the same instance. Trial `t` at sparsity `K` uses
//! the instance seed `derive_seed(master_seed, (K << 32) | t)`, so results do
//! not depend on the order in which trials run.

mod container;

pub use container::{read_dictionary, write_dictionary, CONTAINER_MAGIC};

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::solvers::{solve, Problem, SolverConfig, SolverKind, StopReason};
use crate::synthetic::{gen_instance, relative_error, Instance, InstanceSpec, DEFAULT_SUCCESS_THRESHOLD};

fn default_trials() -> usize {
    100
}

fn default_true() -> bool {
    true
}

/// Experiment description, read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub m: usize,
    pub p: usize,
    /// Sparsity levels; [`default_k_grid`] when omitted.
    #[serde(rename = "K_grid", default)]
    pub k_grid: Vec<usize>,
    #[serde(rename = "trials_per_K", default = "default_trials")]
    pub trials_per_k: usize,
    pub solvers: Vec<SolverKind>,
    #[serde(default)]
    pub noise_level: f64,
    #[serde(default)]
    pub master_seed: u64,
    /// Per-solver iteration budgets overriding [`SolverKind::default_max_iters`].
    #[serde(default)]
    pub max_iters: BTreeMap<SolverKind, usize>,
    /// When false, `mean_time_s` is written as 0 so that reruns produce
    /// identical files.
    #[serde(default = "default_true")]
    pub timing: bool,
}

/// `K = K₀, K₀ + s, …` up to `0.55m`, with `K₀ = m/10` and `s = m/40`
/// (20, 25, …, 110 for `m = 200`).
pub fn default_k_grid(m: usize) -> Vec<usize> {
    let start = (m / 10).max(1);
    let step = (m / 40).max(1);
    let end = m * 55 / 100;
    (start..=end).step_by(step).collect()
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut spec: SweepSpec = serde_json::from_str(text)?;
        if spec.k_grid.is_empty() {
            spec.k_grid = default_k_grid(spec.m);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 || self.p < 2 {
            return Err(Error::InvalidDimension(format!(
                "need m ≥ 2 and p ≥ 2, got m = {}, p = {}",
                self.m, self.p
            )));
        }
        if self.solvers.is_empty() {
            return Err(Error::InvalidArgument("solver list is empty".into()));
        }
        if self.k_grid.is_empty() {
            return Err(Error::InvalidArgument("K grid is empty".into()));
        }
        if self.trials_per_k == 0 {
            return Err(Error::InvalidArgument("trials_per_K must be at least 1".into()));
        }
        if let Some(&k) = self.k_grid.iter().find(|&&k| k == 0 || k > self.m * self.p) {
            return Err(Error::InvalidArgument(format!(
                "K = {k} outside 1..={}",
                self.m * self.p
            )));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::InvalidArgument("noise_level must be finite and ≥ 0".into()));
        }
        for &kind in &self.solvers {
            if !kind.supports_blocks(self.p) {
                return Err(Error::WrongSolver {
                    solver: kind.name(),
                    p: self.p,
                });
            }
        }
        Ok(())
    }

    pub fn max_iters_for(&self, kind: SolverKind) -> usize {
        self.max_iters
            .get(&kind)
            .copied()
            .unwrap_or_else(|| kind.default_max_iters())
    }

    /// Instance used by trial `trial` at sparsity `k`.
    pub fn instance_spec(&self, k: usize, trial: usize) -> InstanceSpec {
        let seed = derive_seed(self.master_seed, ((k as u64) << 32) | trial as u64);
        InstanceSpec::new(seed, self.m, self.p, k, self.noise_level)
    }

    fn work_items(&self) -> Vec<(usize, usize)> {
        self.k_grid
            .iter()
            .flat_map(|&k| (0..self.trials_per_k).map(move |t| (k, t)))
            .collect()
    }
}

/// Outcome of one solver on one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    #[serde(rename = "K")]
    pub k: usize,
    pub trial_index: usize,
    pub solver: SolverKind,
    pub success: bool,
    pub iterations: usize,
    pub wall_time_seconds: f64,
    /// `NaN` when the solver failed.
    pub final_relative_error: f64,
    /// `None` when the solver returned an error.
    pub stop_reason: Option<StopReason>,
    pub error: Option<String>,
}

/// Aggregate for one `(solver, K)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub solver: SolverKind,
    #[serde(rename = "K")]
    pub k: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_time_s: f64,
    pub mean_iters: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepReport {
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
    pub records: Vec<TrialRecord>,
}

impl SweepReport {
    pub fn row(&self, solver: SolverKind, k: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.solver == solver && r.k == k)
    }

    pub fn success_rate(&self, solver: SolverKind, k: usize) -> Option<f64> {
        self.row(solver, k).map(|r| r.success_rate)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
    }
}

fn run_trial(spec: &SweepSpec, inst: &Instance, kind: SolverKind, trial: usize) -> TrialRecord {
    let k = inst.spec.k;
    let cfg = SolverConfig::new(k).with_max_iters(spec.max_iters_for(kind));
    let problem = Problem::new(&inst.dict, &inst.y);
    let start = Instant::now();
    let outcome = solve(kind, problem, &cfg);
    let elapsed = start.elapsed().as_secs_f64();
    let wall_time_seconds = if spec.timing { elapsed } else { 0.0 };
    match outcome {
        Ok(res) => {
            let err = relative_error(&res.x_hat, &inst.x_star);
            TrialRecord {
                k,
                trial_index: trial,
                solver: kind,
                success: err <= DEFAULT_SUCCESS_THRESHOLD,
                iterations: res.iterations,
                wall_time_seconds,
                final_relative_error: err,
                stop_reason: Some(res.stop_reason),
                error: None,
            }
        }
        Err(e) => TrialRecord {
            k,
            trial_index: trial,
            solver: kind,
            success: false,
            iterations: 0,
            wall_time_seconds,
            final_relative_error: f64::NAN,
            stop_reason: None,
            error: Some(e.to_string()),
        },
    }
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepReport> {
    spec.validate()?;
    let per_item = spec
        .work_items()
        .into_par_iter()
        .map(|(k, t)| {
            let inst = gen_instance(&spec.instance_spec(k, t))?;
            Ok(spec
                .solvers
                .iter()
                .map(|&kind| run_trial(spec, &inst, kind, t))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<TrialRecord> = per_item.into_iter().flatten().collect();

    let mut rows = Vec::new();
    for &kind in &spec.solvers {
        for &k in &spec.k_grid {
            let cell: Vec<&TrialRecord> =
                records.iter().filter(|r| r.solver == kind && r.k == k).collect();
            let trials = cell.len();
            let successes = cell.iter().filter(|r| r.success).count();
            let n = trials as f64;
            rows.push(SweepRow {
                solver: kind,
                k,
                trials,
                successes,
                success_rate: successes as f64 / n,
                mean_time_s: cell.iter().map(|r| r.wall_time_seconds).sum::<f64>() / n,
                mean_iters: cell.iter().map(|r| r.iterations as f64).sum::<f64>() / n,
            });
        }
    }
    Ok(SweepReport {
        spec: spec.clone(),
        rows,
        records,
    })
}

/// Success rate after exactly `budget` iterations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FewIterationRow {
    pub budget: usize,
    pub solver: SolverKind,
    #[serde(rename = "K")]
    pub k: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FewIterationReport {
    pub spec: SweepSpec,
    pub budgets: Vec<usize>,
    pub rows: Vec<FewIterationRow>,
}

impl FewIterationReport {
    pub fn success_rate(&self, budget: usize, solver: SolverKind, k: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.budget == budget && r.solver == solver && r.k == k)
            .map(|r| r.success_rate)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const DEFAULT_BUDGETS: [usize; 5] = [3, 4, 5, 6, 7];

/// Success rate of every solver in `spec` when stopped after exactly each of
/// `budgets` iterations, with no residual or iterate-change rule. Each trial
/// runs once to the largest budget and is scored at every intermediate one.
/// OMP always stops after `K` selections.
pub fn run_few_iteration_study(spec: &SweepSpec, budgets: &[usize]) -> Result<FewIterationReport> {
    spec.validate()?;
    if budgets.is_empty() {
        return Err(Error::InvalidArgument("budget list is empty".into()));
    }
    let longest = budgets.iter().copied().max().unwrap_or(0);
    // successes[(solver index, K, budget index)] per work item.
    let per_item = spec
        .work_items()
        .into_par_iter()
        .map(|(k, t)| {
            let inst = gen_instance(&spec.instance_spec(k, t))?;
            let norm = crate::linalg::norm2(&inst.x_star);
            let mut hits = Vec::with_capacity(spec.solvers.len());
            for &kind in &spec.solvers {
                let cfg = SolverConfig::new(k).fixed_budget(longest).with_trace(true);
                let problem = Problem::new(&inst.dict, &inst.y).with_truth(&inst.x_star);
                let trace = solve(kind, problem, &cfg).ok().and_then(|r| r.trace);
                let per_budget: Vec<bool> = budgets
                    .iter()
                    .map(|&b| match &trace {
                        Some(tr) => {
                            let entry = &tr[b.min(tr.len() - 1)];
                            entry.error.is_some_and(|e| e / norm <= DEFAULT_SUCCESS_THRESHOLD)
                        }
                        None => false,
                    })
                    .collect();
                hits.push(per_budget);
            }
            Ok((k, hits))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (bi, &budget) in budgets.iter().enumerate() {
        for (si, &kind) in spec.solvers.iter().enumerate() {
            for &k in &spec.k_grid {
                let cell: Vec<bool> = per_item
                    .iter()
                    .filter(|(kk, _)| *kk == k)
                    .map(|(_, hits)| hits[si][bi])
                    .collect();
                let successes = cell.iter().filter(|h| **h).count();
                rows.push(FewIterationRow {
                    budget,
                    solver: kind,
                    k,
                    trials: cell.len(),
                    successes,
                    success_rate: successes as f64 / cell.len() as f64,
                });
            }
        }
    }
    Ok(FewIterationReport {
        spec: spec.clone(),
        budgets: budgets.to_vec(),
        rows,
    })
}

/// Fraction of adjacent grid pairs where a solver's success rate rises by
/// more than `3 / trials`. Phase-transition curves should keep this small.
pub fn rising_pair_fraction(report: &SweepReport, solver: SolverKind) -> f64 {
    let slack = 3.0 / report.spec.trials_per_k as f64;
    let rates: Vec<f64> = report
        .spec
        .k_grid
        .iter()
        .filter_map(|&k| report.success_rate(solver, k))
        .collect();
    if rates.len() < 2 {
        return 0.0;
    }
    let rising = rates.windows(2).filter(|w| w[1] - w[0] > slack).count();
    rising as f64 / (rates.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(solvers: &[SolverKind]) -> SweepSpec {
        SweepSpec {
            m: 16,
            p: 2,
            k_grid: vec![1, 2, 4],
            trials_per_k: 4,
            solvers: solvers.to_vec(),
            noise_level: 0.0,
            master_seed: 5,
            max_iters: BTreeMap::new(),
            timing: false,
        }
    }

    #[test]
    fn default_grid_at_desk_scale() {
        let g = default_k_grid(200);
        assert_eq!(g.first(), Some(&20));
        assert_eq!(g.last(), Some(&110));
        assert_eq!(g[1] - g[0], 5);
    }

    #[test]
    fn spec_json_defaults() {
        let s = SweepSpec::from_json(r#"{"m": 40, "p": 2, "solvers": ["TSAA", "IHT"]}"#).unwrap();
        assert_eq!(s.trials_per_k, 100);
        assert_eq!(s.k_grid, default_k_grid(40));
        assert!(s.timing);
        assert_eq!(s.max_iters_for(SolverKind::Iht), 3000);
        let s = SweepSpec::from_json(
            r#"{"m": 40, "p": 2, "K_grid": [3], "solvers": ["HTP"], "max_iters": {"HTP": 7}}"#,
        )
        .unwrap();
        assert_eq!(s.max_iters_for(SolverKind::Htp), 7);
    }

    #[test]
    fn spec_rejections() {
        assert!(SweepSpec::from_json(r#"{"m": 40, "p": 2, "solvers": []}"#).is_err());
        assert!(SweepSpec::from_json(r#"{"m": 40, "p": 3, "solvers": ["TSAA"]}"#).is_err());
        assert!(SweepSpec::from_json(r#"{"m": 40, "p": 2, "solvers": ["MSAA"]}"#).is_err());
        assert!(SweepSpec::from_json(r#"{"m": 40, "p": 2, "K_grid": [0], "solvers": ["IHT"]}"#).is_err());
        assert!(SweepSpec::from_json(r#"{"m": 40, "p": 2, "trials_per_K": 0, "solvers": ["IHT"]}"#).is_err());
        assert!(SweepSpec::from_json("{").is_err());
    }

    #[test]
    fn rows_are_consistent() {
        let report = run_sweep(&spec(&[SolverKind::Tsaa, SolverKind::Omp])).unwrap();
        assert_eq!(report.rows.len(), 6);
        for row in &report.rows {
            assert_eq!(row.trials, 4);
            assert!(row.successes <= row.trials);
            assert_eq!(row.success_rate, row.successes as f64 / row.trials as f64);
            assert_eq!(row.mean_time_s, 0.0);
        }
        assert_eq!(report.success_rate(SolverKind::Tsaa, 1), Some(1.0));
    }

    #[test]
    fn csv_is_reproducible() {
        let s = spec(&[SolverKind::Tsaa, SolverKind::Htp]);
        let a = run_sweep(&s).unwrap().to_csv_string().unwrap();
        let b = run_sweep(&s).unwrap().to_csv_string().unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("solver,K,trials,successes,success_rate,mean_time_s,mean_iters\n"));
    }

    #[test]
    fn solver_failures_do_not_abort() {
        // 2K > m makes the TSAA projection ill-posed.
        let mut s = spec(&[SolverKind::Tsaa]);
        s.k_grid = vec![12];
        let report = run_sweep(&s).unwrap();
        assert_eq!(report.rows[0].successes, 0);
        assert!(report.records.iter().all(|r| r.error.is_some() && r.stop_reason.is_none()));
    }

    #[test]
    fn budget_zero_fails_and_budgets_are_monotone() {
        let s = spec(&[SolverKind::Tsaa, SolverKind::Htp]);
        let report = run_few_iteration_study(&s, &[0, 3, 7]).unwrap();
        for &kind in &s.solvers {
            for &k in &s.k_grid {
                assert_eq!(report.success_rate(0, kind, k), Some(0.0));
                assert!(report.success_rate(3, kind, k) <= report.success_rate(7, kind, k));
            }
        }
    }
}
