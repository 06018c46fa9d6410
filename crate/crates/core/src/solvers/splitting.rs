//! Two-block (TSAA) and multi-block (MSAA) splitting alternating iterations.
//!
//! Both keep a partition `y ≈ y₁ + … + y_p` of the measurements. One
//! iteration sweeps the blocks in order, solving each small orthogonal
//! subsystem `uᵢ = Φᵢxᵢ` by `Φᵢᵀuᵢ` followed by `H_K`, with `uᵢ` formed from
//! the freshly updated parts of earlier blocks and the previous parts of
//! later ones. The concatenated estimate is then refined by two restricted
//! projections: one over at most `2K` columns (the `τ` largest entries of the
//! estimate plus the `2K − τ` largest entries of the gradient `Aᵀ(y − Ax)`)
//! and one over the `K` largest entries of that projection. The parts of
//! blocks `2…p` are finally reset to `Φᵢxᵢ` of the new iterate.

use crate::error::{check_len, Error, Result};
use crate::linalg::{self, restricted_least_squares, top_k_indices, BlockDictionary, IndexSet};

use super::{Problem, SolveResult, SolverConfig, SolverKind, SolverRun};

/// Iterate and measurement partition of a splitting method.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    /// Current iterate `x⁽ᵏ⁾` of length `pm`.
    pub x: Vec<f64>,
    /// `y₂⁽ᵏ⁾, …, y_p⁽ᵏ⁾`; entry `i` belongs to block `i + 1`. The first
    /// block's part is implicit.
    pub partitions: Vec<Vec<f64>>,
    pub iteration: usize,
    /// `‖y − Ax⁽ᵏ⁾‖₂`
    pub residual_norm: f64,
    /// Columns of the first projection in the step that produced this
    /// state; empty initially.
    pub candidates: IndexSet,
}

/// Optional starting values; missing pieces default to `x⁽⁰⁾ = 0` and
/// `yᵢ⁽⁰⁾ = y/p`.
#[derive(Clone, Debug, Default)]
pub struct InitialPoint {
    pub x: Option<Vec<f64>>,
    /// Parts for blocks `2…p`, in order.
    pub partitions: Option<Vec<Vec<f64>>>,
}

impl SolverState {
    pub fn initial(dict: &BlockDictionary, y: &[f64], init: &InitialPoint) -> Result<Self> {
        let (m, p) = (dict.m(), dict.p());
        check_len(y.len(), m)?;
        let x = match &init.x {
            Some(x) => {
                check_len(x.len(), dict.n())?;
                x.clone()
            }
            None => vec![0.0; dict.n()],
        };
        let partitions = match &init.partitions {
            Some(parts) => {
                if parts.len() != p - 1 {
                    return Err(Error::InvalidArgument(format!(
                        "expected {} initial partitions, got {}",
                        p - 1,
                        parts.len()
                    )));
                }
                for part in parts {
                    check_len(part.len(), m)?;
                }
                parts.clone()
            }
            None => {
                let share: Vec<f64> = y.iter().map(|v| v / p as f64).collect();
                vec![share; p - 1]
            }
        };
        let residual_norm = linalg::norm2(&dict.residual(y, &x)?);
        Ok(Self {
            x,
            partitions,
            iteration: 0,
            residual_norm,
            candidates: IndexSet::empty(),
        })
    }
}

/// One full S2–S4 pass shared by TSAA and MSAA.
pub(crate) fn splitting_step(
    state: &SolverState,
    dict: &BlockDictionary,
    y: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverState> {
    let (m, p, k) = (dict.m(), dict.p(), cfg.sparsity);
    check_len(y.len(), m)?;
    check_len(state.x.len(), dict.n())?;
    if state.partitions.len() != p - 1 {
        return Err(Error::InvalidArgument(format!(
            "state carries {} partitions for p = {p}",
            state.partitions.len()
        )));
    }

    // Alternating sweep over blocks.
    let mut estimate = vec![0.0; dict.n()];
    let mut updated_sum = vec![0.0; m];
    for i in 0..p {
        // uᵢ = y − Σ_{j<i} ỹⱼ − Σ_{j>i} yⱼ
        let mut u = linalg::sub(y, &updated_sum);
        for part in &state.partitions[i..] {
            for (ui, pi) in u.iter_mut().zip(part) {
                *ui -= pi;
            }
        }
        let block_estimate = linalg::hard_threshold(&dict.block_adjoint(i, &u)?, k)?;
        if i + 1 < p {
            let refreshed = dict.block_apply(i, &block_estimate)?;
            linalg::axpy(1.0, &refreshed, &mut updated_sum);
        }
        estimate[i * m..(i + 1) * m].copy_from_slice(&block_estimate);
    }

    // Projection onto the merged estimate/gradient support.
    let gradient = dict.adjoint(&dict.residual(y, &state.x)?)?;
    let candidates =
        top_k_indices(&estimate, cfg.tau)?.union(&top_k_indices(&gradient, 2 * k - cfg.tau)?);
    let projected = restricted_least_squares(dict, y, &candidates)?;

    // Projection onto the K largest entries.
    let support = top_k_indices(&projected, k)?;
    let x = restricted_least_squares(dict, y, &support)?;

    let partitions = (1..p)
        .map(|i| dict.block_apply(i, &x[i * m..(i + 1) * m]))
        .collect::<Result<Vec<_>>>()?;
    let residual_norm = linalg::norm2(&dict.residual(y, &x)?);
    Ok(SolverState {
        x,
        partitions,
        iteration: state.iteration + 1,
        residual_norm,
        candidates,
    })
}

/// One TSAA iteration; requires `p = 2`.
pub fn tsaa_step(
    state: &SolverState,
    dict: &BlockDictionary,
    y: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverState> {
    if dict.p() != 2 {
        return Err(Error::WrongSolver {
            solver: "TSAA",
            p: dict.p(),
        });
    }
    cfg.validate()?;
    splitting_step(state, dict, y, cfg)
}

/// One MSAA iteration; requires `p > 2`.
pub fn msaa_step(
    state: &SolverState,
    dict: &BlockDictionary,
    y: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverState> {
    if dict.p() <= 2 {
        return Err(Error::WrongSolver {
            solver: "MSAA",
            p: dict.p(),
        });
    }
    cfg.validate()?;
    splitting_step(state, dict, y, cfg)
}

pub fn tsaa_solve(problem: Problem<'_>, cfg: &SolverConfig, init: &InitialPoint) -> Result<SolveResult> {
    SolverRun::with_initial(SolverKind::Tsaa, problem, cfg, init)?.finish()
}

pub fn msaa_solve(problem: Problem<'_>, cfg: &SolverConfig, init: &InitialPoint) -> Result<SolveResult> {
    SolverRun::with_initial(SolverKind::Msaa, problem, cfg, init)?.finish()
}
