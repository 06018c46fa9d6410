//! Sparse-recovery solvers behind one driver.
//!
//! Every method is expressed as a [`SolverRun`] that can be advanced one
//! iteration at a time; [`solve`] wraps it with the shared stopping rules
//! (residual, then relative iterate change, then iteration budget) and the
//! optional per-iteration trace.

mod baselines;
mod splitting;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{self, BlockDictionary};

pub use baselines::baseline_solve;
pub use splitting::{msaa_solve, msaa_step, tsaa_solve, tsaa_step, InitialPoint, SolverState};

/// Default `λ` for FISTA.
pub const DEFAULT_FISTA_LAMBDA: f64 = 4e-5;
/// Default relative iterate-change tolerance.
pub const DEFAULT_ITERATE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SolverKind {
    #[serde(rename = "TSAA")]
    Tsaa,
    #[serde(rename = "MSAA")]
    Msaa,
    #[serde(rename = "IHT")]
    Iht,
    #[serde(rename = "HTP")]
    Htp,
    #[serde(rename = "SP")]
    Sp,
    #[serde(rename = "CoSaMP")]
    Cosamp,
    #[serde(rename = "OMP")]
    Omp,
    #[serde(rename = "FISTA")]
    Fista,
}

impl SolverKind {
    pub const ALL: [SolverKind; 8] = [
        SolverKind::Tsaa,
        SolverKind::Msaa,
        SolverKind::Iht,
        SolverKind::Htp,
        SolverKind::Sp,
        SolverKind::Cosamp,
        SolverKind::Omp,
        SolverKind::Fista,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Tsaa => "TSAA",
            SolverKind::Msaa => "MSAA",
            SolverKind::Iht => "IHT",
            SolverKind::Htp => "HTP",
            SolverKind::Sp => "SP",
            SolverKind::Cosamp => "CoSaMP",
            SolverKind::Omp => "OMP",
            SolverKind::Fista => "FISTA",
        }
    }

    /// Iteration budget used by sweeps when the spec does not override it.
    pub fn default_max_iters(self) -> usize {
        match self {
            SolverKind::Iht | SolverKind::Fista => 3000,
            _ => 100,
        }
    }

    /// Whether the method can run on a dictionary with `p` blocks.
    pub fn supports_blocks(self, p: usize) -> bool {
        match self {
            SolverKind::Tsaa => p == 2,
            SolverKind::Msaa => p > 2,
            _ => p >= 2,
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown solver kind {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Target sparsity `K`.
    pub sparsity: usize,
    /// Number of entries kept from the splitting estimate in the first
    /// projection; `K ≤ τ ≤ 2K`, the remaining `2K − τ` come from the gradient.
    pub tau: usize,
    pub max_iters: usize,
    /// Stop once `‖y − Ax‖₂` falls to this value.
    pub residual_tol: Option<f64>,
    /// Stop once `‖x⁽ᵏ⁾ − x⁽ᵏ⁻¹⁾‖₂ / ‖x⁽ᵏ⁾‖₂` falls to this value.
    pub iterate_tol: Option<f64>,
    pub record_trace: bool,
    /// `λ` of the FISTA objective `‖y − Ax‖₂² + λ‖x‖₁`.
    pub fista_lambda: f64,
}

impl SolverConfig {
    /// `τ = K`, 100 iterations, iterate-change tolerance `1e-8`, no residual rule.
    pub fn new(sparsity: usize) -> Self {
        Self {
            sparsity,
            tau: sparsity,
            max_iters: 100,
            residual_tol: None,
            iterate_tol: Some(DEFAULT_ITERATE_TOL),
            record_trace: false,
            fista_lambda: DEFAULT_FISTA_LAMBDA,
        }
    }

    pub fn with_tau(mut self, tau: usize) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_residual_tol(mut self, tol: Option<f64>) -> Self {
        self.residual_tol = tol;
        self
    }

    pub fn with_iterate_tol(mut self, tol: Option<f64>) -> Self {
        self.iterate_tol = tol;
        self
    }

    pub fn with_trace(mut self, record: bool) -> Self {
        self.record_trace = record;
        self
    }

    /// Runs exactly `max_iters` iterations.
    pub fn fixed_budget(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self.residual_tol = None;
        self.iterate_tol = None;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.sparsity;
        if self.tau < k || self.tau > 2 * k {
            return Err(Error::InvalidArgument(format!(
                "tau = {} outside [K, 2K] = [{k}, {}]",
                self.tau,
                2 * k
            )));
        }
        for (name, tol) in [("residual_tol", self.residual_tol), ("iterate_tol", self.iterate_tol)] {
            if let Some(t) = tol {
                if t.is_nan() || t < 0.0 {
                    return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {t}")));
                }
            }
        }
        if self.fista_lambda.is_nan() || self.fista_lambda < 0.0 {
            return Err(Error::InvalidArgument("fista_lambda must be >= 0".into()));
        }
        Ok(())
    }
}

/// A linear system `y = Ax` and, optionally, the vector it was built from.
#[derive(Clone, Copy, Debug)]
pub struct Problem<'a> {
    pub dict: &'a BlockDictionary,
    pub y: &'a [f64],
    pub truth: Option<&'a [f64]>,
}

impl<'a> Problem<'a> {
    pub fn new(dict: &'a BlockDictionary, y: &'a [f64]) -> Self {
        Self { dict, y, truth: None }
    }

    pub fn with_truth(mut self, truth: &'a [f64]) -> Self {
        self.truth = Some(truth);
        self
    }

    fn validate(&self) -> Result<()> {
        check_len(self.y.len(), self.dict.m())?;
        if !linalg::all_finite(self.y) {
            return Err(Error::InvalidArgument("measurement vector has non-finite entries".into()));
        }
        if let Some(t) = self.truth {
            check_len(t.len(), self.dict.n())?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Residual,
    IterateChange,
    MaxIters,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Residual => "residual",
            StopReason::IterateChange => "iterate-change",
            StopReason::MaxIters => "max-iters",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub residual_norm: f64,
    pub nonzeros: usize,
    /// `‖x⁽ᵏ⁾ − x*‖₂` when the truth is known.
    pub error: Option<f64>,
    /// `max_i ‖x_i⁽ᵏ⁾ − x_i*‖₂`, the block-wise (p,∞) error.
    pub block_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub solver: SolverKind,
    pub x_hat: Vec<f64>,
    pub iterations: usize,
    pub final_residual: f64,
    pub stop_reason: StopReason,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEntry>>,
}

/// `max_i ‖z_i‖₂` over the length-`m` blocks of `z`.
pub fn block_max_norm(z: &[f64], m: usize) -> f64 {
    z.chunks_exact(m).map(linalg::norm2).fold(0.0, f64::max)
}

pub(crate) enum Method {
    Splitting(SolverState),
    Iht { x: Vec<f64> },
    Htp { x: Vec<f64> },
    Sp { x: Vec<f64>, support: linalg::IndexSet },
    Cosamp { x: Vec<f64> },
    Omp { x: Vec<f64>, support: linalg::IndexSet },
    Fista { x: Vec<f64>, z: Vec<f64>, t: f64 },
}

/// One solver execution that can be advanced an iteration at a time.
pub struct SolverRun<'a> {
    kind: SolverKind,
    problem: Problem<'a>,
    cfg: SolverConfig,
    method: Method,
    iteration: usize,
}

impl<'a> SolverRun<'a> {
    /// Starts `kind` from the zero vector (and `yᵢ⁽⁰⁾ = y/p` for the
    /// splitting methods).
    pub fn new(kind: SolverKind, problem: Problem<'a>, cfg: &SolverConfig) -> Result<Self> {
        Self::with_initial(kind, problem, cfg, &InitialPoint::default())
    }

    pub fn with_initial(
        kind: SolverKind,
        problem: Problem<'a>,
        cfg: &SolverConfig,
        init: &InitialPoint,
    ) -> Result<Self> {
        problem.validate()?;
        cfg.validate()?;
        let dict = problem.dict;
        if !kind.supports_blocks(dict.p()) {
            return Err(Error::WrongSolver {
                solver: kind.name(),
                p: dict.p(),
            });
        }
        if cfg.sparsity > dict.n() {
            return Err(Error::InvalidArgument(format!(
                "sparsity {} exceeds {} columns",
                cfg.sparsity,
                dict.n()
            )));
        }
        let x0 = match &init.x {
            Some(x) => {
                check_len(x.len(), dict.n())?;
                x.clone()
            }
            None => vec![0.0; dict.n()],
        };
        let method = match kind {
            SolverKind::Tsaa | SolverKind::Msaa => {
                Method::Splitting(SolverState::initial(dict, problem.y, init)?)
            }
            SolverKind::Iht => Method::Iht { x: x0 },
            SolverKind::Htp => Method::Htp { x: x0 },
            SolverKind::Sp => Method::Sp {
                support: linalg::support(&x0),
                x: x0,
            },
            SolverKind::Cosamp => Method::Cosamp { x: x0 },
            SolverKind::Omp => Method::Omp {
                support: linalg::support(&x0),
                x: x0,
            },
            SolverKind::Fista => Method::Fista {
                z: x0.clone(),
                x: x0,
                t: 1.0,
            },
        };
        Ok(Self {
            kind,
            problem,
            cfg: cfg.clone(),
            method,
            iteration: 0,
        })
    }

    pub fn kind(&self) -> SolverKind {
        self.kind
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Performs one iteration.
    pub fn step(&mut self) -> Result<()> {
        let Problem { dict, y, .. } = self.problem;
        match &mut self.method {
            Method::Splitting(state) => {
                *state = splitting::splitting_step(state, dict, y, &self.cfg)?;
            }
            other => baselines::step(other, dict, y, &self.cfg)?,
        }
        self.iteration += 1;
        Ok(())
    }

    /// The raw iterate `x⁽ᵏ⁾` (for FISTA, the un-thresholded sequence).
    pub fn iterate(&self) -> &[f64] {
        match &self.method {
            Method::Splitting(s) => &s.x,
            Method::Iht { x }
            | Method::Htp { x }
            | Method::Sp { x, .. }
            | Method::Cosamp { x }
            | Method::Omp { x, .. }
            | Method::Fista { x, .. } => x,
        }
    }

    /// The solver's current answer: the iterate, hard-thresholded to `K` for FISTA.
    pub fn estimate(&self) -> Result<Vec<f64>> {
        match &self.method {
            Method::Fista { x, .. } => linalg::hard_threshold(x, self.cfg.sparsity),
            _ => Ok(self.iterate().to_vec()),
        }
    }

    /// Splitting-method state, if this run is TSAA or MSAA.
    pub fn splitting_state(&self) -> Option<&SolverState> {
        match &self.method {
            Method::Splitting(s) => Some(s),
            _ => None,
        }
    }

    fn trace_entry(&self, estimate: &[f64], residual_norm: f64) -> TraceEntry {
        let m = self.problem.dict.m();
        let (error, block_error) = match self.problem.truth {
            Some(t) => {
                let diff = linalg::sub(estimate, t);
                (Some(linalg::norm2(&diff)), Some(block_max_norm(&diff, m)))
            }
            None => (None, None),
        };
        TraceEntry {
            iteration: self.iteration,
            residual_norm,
            nonzeros: linalg::count_nonzeros(estimate),
            error,
            block_error,
        }
    }

    /// Runs to completion under the configured stopping rules.
    pub fn finish(mut self) -> Result<SolveResult> {
        let Problem { dict, y, .. } = self.problem;
        let cfg = self.cfg.clone();
        // OMP performs exactly K selections.
        let (budget, iterate_rule) = match self.kind {
            SolverKind::Omp => (cfg.sparsity, None),
            _ => (cfg.max_iters, cfg.iterate_tol),
        };
        let mut estimate = self.estimate()?;
        let mut residual = linalg::norm2(&dict.residual(y, &estimate)?);
        let mut trace = cfg.record_trace.then(Vec::new);
        if let Some(t) = trace.as_mut() {
            t.push(self.trace_entry(&estimate, residual));
        }
        let mut stop_reason = StopReason::MaxIters;
        if cfg.residual_tol.is_some_and(|tol| residual <= tol) {
            stop_reason = StopReason::Residual;
        } else {
            while self.iteration < budget {
                let previous = self.iterate().to_vec();
                self.step()?;
                estimate = self.estimate()?;
                residual = linalg::norm2(&dict.residual(y, &estimate)?);
                if let Some(t) = trace.as_mut() {
                    t.push(self.trace_entry(&estimate, residual));
                }
                if cfg.residual_tol.is_some_and(|tol| residual <= tol) {
                    stop_reason = StopReason::Residual;
                    break;
                }
                if let Some(tol) = iterate_rule {
                    let current = self.iterate();
                    let norm = linalg::norm2(current);
                    if norm > 0.0 && linalg::distance(current, &previous) / norm <= tol {
                        stop_reason = StopReason::IterateChange;
                        break;
                    }
                }
            }
        }
        if !linalg::all_finite(&estimate) {
            return Err(Error::Numerical(format!("{} produced non-finite values", self.kind)));
        }
        Ok(SolveResult {
            solver: self.kind,
            x_hat: estimate,
            iterations: self.iteration,
            final_residual: residual,
            stop_reason,
            trace,
        })
    }
}

/// Runs `kind` on `problem` from the default initial point.
pub fn solve(kind: SolverKind, problem: Problem<'_>, cfg: &SolverConfig) -> Result<SolveResult> {
    SolverRun::new(kind, problem, cfg)?.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for kind in SolverKind::ALL {
            assert_eq!(kind.name().parse::<SolverKind>().unwrap(), kind);
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{}\"", kind.name()));
        }
        assert_eq!("cosamp".parse::<SolverKind>().unwrap(), SolverKind::Cosamp);
        assert!("lasso".parse::<SolverKind>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(3).validate().is_ok());
        assert!(SolverConfig::new(3).with_tau(6).validate().is_ok());
        assert!(SolverConfig::new(3).with_tau(7).validate().is_err());
        assert!(SolverConfig::new(3).with_tau(2).validate().is_err());
        assert!(SolverConfig::new(3).with_residual_tol(Some(-1.0)).validate().is_err());
        assert!(SolverConfig::new(3).with_iterate_tol(Some(f64::NAN)).validate().is_err());
    }

    #[test]
    fn stop_reason_spelling() {
        assert_eq!(StopReason::IterateChange.to_string(), "iterate-change");
        assert_eq!(
            serde_json::to_string(&StopReason::MaxIters).unwrap(),
            "\"max-iters\""
        );
    }
}
