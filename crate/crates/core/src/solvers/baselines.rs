//! Reference methods: IHT, HTP, SP, CoSaMP, OMP and FISTA.
//!
//! IHT and HTP use a unit step. FISTA minimizes `‖y − Ax‖₂² + λ‖x‖₁` with
//! step `1/L` on `Aᵀ(Ax − y)` and soft threshold `λ/(2L)`, where `L = p` is
//! `λ_max(AᵀA)` for any concatenation of `p` orthogonal blocks.

use crate::error::{Error, Result};
use crate::linalg::{
    self, hard_threshold, least_squares_on_support, restricted_least_squares, top_k_indices,
    BlockDictionary, IndexSet,
};

use super::{Method, Problem, SolveResult, SolverConfig, SolverKind, SolverRun};

/// Runs one of the reference methods. TSAA and MSAA are rejected here.
pub fn baseline_solve(
    kind: SolverKind,
    problem: Problem<'_>,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    if matches!(kind, SolverKind::Tsaa | SolverKind::Msaa) {
        return Err(Error::InvalidArgument(format!("{kind} is not a baseline method")));
    }
    SolverRun::new(kind, problem, cfg)?.finish()
}

fn gradient_step(dict: &BlockDictionary, y: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let mut g = dict.adjoint(&dict.residual(y, x)?)?;
    linalg::axpy(1.0, x, &mut g);
    Ok(g)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub(super) fn step(
    method: &mut Method,
    dict: &BlockDictionary,
    y: &[f64],
    cfg: &SolverConfig,
) -> Result<()> {
    let k = cfg.sparsity;
    match method {
        Method::Iht { x } => {
            *x = hard_threshold(&gradient_step(dict, y, x)?, k)?;
        }
        Method::Htp { x } => {
            let support = top_k_indices(&gradient_step(dict, y, x)?, k)?;
            *x = restricted_least_squares(dict, y, &support)?;
        }
        Method::Sp { x, support } => {
            let correlation = dict.adjoint(&dict.residual(y, x)?)?;
            let candidates = support.union(&top_k_indices(&correlation, k)?);
            let merged = least_squares_on_support(dict, y, &candidates)?;
            *support = top_k_indices(&merged, k)?;
            *x = restricted_least_squares(dict, y, support)?;
        }
        Method::Cosamp { x } => {
            let correlation = dict.adjoint(&dict.residual(y, x)?)?;
            let budget = (2 * k).min(correlation.len());
            let candidates = top_k_indices(&correlation, budget)?.union(&linalg::support(x));
            let merged = least_squares_on_support(dict, y, &candidates)?;
            *x = hard_threshold(&merged, k)?;
        }
        Method::Omp { x, support } => {
            let correlation = dict.adjoint(&dict.residual(y, x)?)?;
            let mut best: Option<(usize, f64)> = None;
            for (j, c) in correlation.iter().enumerate() {
                if support.contains(j) {
                    continue;
                }
                if best.is_none_or(|(_, b)| c.abs() > b) {
                    best = Some((j, c.abs()));
                }
            }
            if let Some((j, _)) = best {
                let mut grown = support.as_slice().to_vec();
                grown.push(j);
                *support = IndexSet::new(grown);
                *x = restricted_least_squares(dict, y, support)?;
            }
        }
        Method::Fista { x, z, t } => {
            let lipschitz = dict.p() as f64;
            let threshold = cfg.fista_lambda / (2.0 * lipschitz);
            // Gradient of ½‖y − Az‖² is −Aᵀ(y − Az).
            let ascent = dict.adjoint(&dict.residual(y, z)?)?;
            let next: Vec<f64> = z
                .iter()
                .zip(&ascent)
                .map(|(zi, gi)| soft_threshold(zi + gi / lipschitz, threshold))
                .collect();
            let t_next = (1.0 + (1.0 + 4.0 * *t * *t).sqrt()) / 2.0;
            let momentum = (*t - 1.0) / t_next;
            *z = next
                .iter()
                .zip(x.iter())
                .map(|(n, o)| n + momentum * (n - o))
                .collect();
            *x = next;
            *t = t_next;
        }
        Method::Splitting(_) => unreachable!("splitting methods are stepped by the splitting module"),
    }
    Ok(())
}
