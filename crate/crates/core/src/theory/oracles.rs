//! Randomized checks of the inequalities behind the convergence guarantees,
//! plus an exhaustive sparsest-solution search for tiny systems.
//!
//! Each `check_*` function evaluates both sides of one inequality on seeded
//! random samples and counts violations. Trial `t` draws from its own stream
//! `derive_seed(seed, t)`, so reports do not depend on scheduling.

use faer::Mat;
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{
    self, hard_threshold, make_orthogonal_block, mutual_coherence, restricted_least_squares,
    BlockDictionary, IndexSet,
};
use crate::seed::{derive_seed, rng_from_seed, stream};

use super::ConvergenceConstants;

/// Relative slack granted to the right-hand side for rounding.
const SLACK: f64 = 1e-10;

/// Outcome of one oracle suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    pub trials: usize,
    pub violations: usize,
    /// Samples that did not meet the inequality's hypotheses.
    pub skipped: usize,
    /// Largest observed `lhs / rhs` over evaluated samples.
    pub max_ratio: f64,
}

impl OracleReport {
    pub fn evaluated(&self) -> usize {
        self.trials - self.skipped
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

enum Sample {
    Skipped,
    Checked { lhs: f64, rhs: f64 },
}

fn exceeds(lhs: f64, rhs: f64) -> bool {
    lhs > rhs * (1.0 + SLACK) + 1e-13
}

fn run_trials<F>(name: &str, trials: usize, seed: u64, sample: F) -> Result<OracleReport>
where
    F: Fn(&mut ChaCha20Rng, usize) -> Result<Vec<Sample>> + Sync,
{
    let base = derive_seed(seed, stream::LEMMA_ORACLE);
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(base, t as u64));
            sample(&mut rng, t)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = OracleReport {
        name: name.to_string(),
        trials,
        violations: 0,
        skipped: 0,
        max_ratio: 0.0,
    };
    for samples in outcomes {
        let mut skipped = true;
        let mut violated = false;
        for s in samples {
            if let Sample::Checked { lhs, rhs } = s {
                skipped = false;
                violated |= exceeds(lhs, rhs);
                if rhs > 0.0 {
                    report.max_ratio = report.max_ratio.max(lhs / rhs);
                }
            }
        }
        if skipped {
            report.skipped += 1;
        }
        if violated {
            report.violations += 1;
        }
    }
    Ok(report)
}

fn gaussian_vec(rng: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn random_sparse(rng: &mut ChaCha20Rng, n: usize, k: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for j in index::sample(rng, n, k) {
        x[j] = StandardNormal.sample(rng);
    }
    x
}

fn random_subset(rng: &mut ChaCha20Rng, n: usize, size: usize) -> IndexSet {
    IndexSet::new(index::sample(rng, n, size).into_vec())
}

// ---------------------------------------------------------------------------
// Hard thresholding

/// `(‖x − H_K(z)‖₂, ω‖(x − z)_{S ∪ S*}‖₂)` with `S = supp(x)` and
/// `S* = supp(H_K(z))`.
pub fn hk_bound_sides(x: &[f64], z: &[f64], k: usize) -> Result<(f64, f64)> {
    check_len(z.len(), x.len())?;
    let hz = hard_threshold(z, k)?;
    let lhs = linalg::distance(x, &hz);
    let union = linalg::support(x).union(&linalg::support(&hz));
    let diff = linalg::sub(x, z);
    let rhs = ConvergenceConstants::new().omega * linalg::norm2(&linalg::restrict(&diff, &union));
    Ok((lhs, rhs))
}

/// Hard-thresholding error bound against random `K`-sparse `x`.
///
/// Trials cycle through a small perturbation of `x`, an unrelated `z`, and a
/// near-tie where off-support entries of `z` compete with the smallest
/// entries of `x`.
pub fn check_hk_bound(trials: usize, n: usize, k: usize, seed: u64) -> Result<OracleReport> {
    if k > n {
        return Err(Error::InvalidArgument(format!("K = {k} exceeds length {n}")));
    }
    run_trials("hard-threshold", trials, seed, |rng, t| {
        let x = random_sparse(rng, n, k);
        let z = match t % 3 {
            0 => {
                let scale = 10f64.powf(rng.random_range(-3.0..1.0));
                x.iter().map(|v| v + scale * rng.sample::<f64, _>(StandardNormal)).collect()
            }
            1 => gaussian_vec(rng, n),
            _ => {
                let floor = x.iter().filter(|v| **v != 0.0).fold(f64::INFINITY, |a, v| a.min(v.abs()));
                let floor = if floor.is_finite() { floor } else { 1.0 };
                x.iter()
                    .map(|&v| {
                        let jitter = 1.0 + rng.random_range(-0.1..0.1);
                        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                        if v == 0.0 {
                            sign * floor * jitter
                        } else {
                            v * jitter
                        }
                    })
                    .collect()
            }
        };
        let (lhs, rhs) = hk_bound_sides(&x, &z, k)?;
        Ok(vec![Sample::Checked { lhs, rhs }])
    })
}

// ---------------------------------------------------------------------------
// Bounded-entry matrices

/// Both bounds on `‖Mu‖₂` for a matrix with entries bounded by `alpha`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowBoundSides {
    pub lhs: f64,
    /// `√(ℓ₁ℓ₂)·α·‖u‖₂`
    pub geometric: f64,
    /// `((ℓ₁ + ℓ₂)/2)·α·‖u‖₂`
    pub arithmetic: f64,
}

pub fn row_bound_sides(matrix: &Mat<f64>, u: &[f64], alpha: f64) -> Result<RowBoundSides> {
    let (l1, l2) = matrix.shape();
    check_len(u.len(), l2)?;
    let mut mu = vec![0.0; l1];
    for (j, &uj) in u.iter().enumerate() {
        linalg::axpy(uj, matrix.col_as_slice(j), &mut mu);
    }
    let un = linalg::norm2(u);
    Ok(RowBoundSides {
        lhs: linalg::norm2(&mu),
        geometric: ((l1 * l2) as f64).sqrt() * alpha * un,
        arithmetic: (l1 + l2) as f64 / 2.0 * alpha * un,
    })
}

/// Norm bound for `ℓ₁ × ℓ₂` matrices with `|mᵢⱼ| ≤ α`. Every fourth trial
/// uses entries `±α` only, which pushes `‖Mu‖` toward the bound.
pub fn check_row_bound(
    trials: usize,
    l1: usize,
    l2: usize,
    alpha: f64,
    seed: u64,
) -> Result<OracleReport> {
    if l1 == 0 || l2 == 0 || alpha.is_nan() || alpha < 0.0 {
        return Err(Error::InvalidArgument("need positive dimensions and α ≥ 0".into()));
    }
    run_trials("bounded-entries", trials, seed, |rng, t| {
        let extreme = t % 4 == 3;
        let matrix = Mat::from_fn(l1, l2, |_, _| {
            if extreme {
                if rng.random_bool(0.5) { alpha } else { -alpha }
            } else {
                rng.random_range(-1.0..=1.0) * alpha
            }
        });
        let u = gaussian_vec(rng, l2);
        let sides = row_bound_sides(&matrix, &u, alpha)?;
        Ok(vec![
            Sample::Checked { lhs: sides.lhs, rhs: sides.geometric },
            Sample::Checked { lhs: sides.lhs, rhs: sides.arithmetic },
        ])
    })
}

// ---------------------------------------------------------------------------
// Off-diagonal Gram bound

/// Dictionary `[Q, QH, QR₃, …]` with `Q`, `Rᵢ` random orthogonal and `H` a
/// normalized Hadamard matrix (or orthonormal DCT when `m` is not a power of
/// two). The first pair attains coherence `1/√m` in the Hadamard case.
pub fn low_coherence_dictionary(seed: u64, m: usize, p: usize) -> Result<BlockDictionary> {
    let q = make_orthogonal_block(derive_seed(seed, stream::BLOCK_BASE), m)?;
    let spread = if m.is_power_of_two() {
        let scale = 1.0 / (m as f64).sqrt();
        Mat::from_fn(m, m, |i, j| {
            if (i & j).count_ones() % 2 == 0 { scale } else { -scale }
        })
    } else {
        let mf = m as f64;
        Mat::from_fn(m, m, |i, j| {
            let w = if i == 0 { (1.0 / mf).sqrt() } else { (2.0 / mf).sqrt() };
            w * (std::f64::consts::PI * (j as f64 + 0.5) * i as f64 / mf).cos()
        })
    };
    let mut blocks = vec![q.clone(), &q * &spread];
    for i in 2..p {
        let r = make_orthogonal_block(derive_seed(seed, stream::BLOCK_BASE + i as u64), m)?;
        blocks.push(&q * &r);
    }
    BlockDictionary::new(blocks)
}

fn sample_dictionary(rng: &mut ChaCha20Rng, t: usize, m: usize, p: usize) -> Result<BlockDictionary> {
    let seed: u64 = rng.random();
    if t % 2 == 0 {
        low_coherence_dictionary(seed, m, p)
    } else {
        let seeds: Vec<u64> = (0..p).map(|i| derive_seed(seed, stream::BLOCK_BASE + i as u64)).collect();
        BlockDictionary::from_block_seeds(&seeds, m)
    }
}

/// `(‖[(AᵀA − I)u]_Λ‖₂, μ(|Λ|‖u_Λ‖₂ + ½pm‖u_Λ̄‖₂))`. For `p = 2` the second
/// coefficient is `m`.
pub fn offdiag_bound_sides(
    dict: &BlockDictionary,
    mu: f64,
    u: &[f64],
    set: &IndexSet,
) -> Result<(f64, f64)> {
    check_len(u.len(), dict.n())?;
    let gram_u = dict.adjoint(&dict.apply(u)?)?;
    let off = linalg::sub(&gram_u, u);
    let lhs = linalg::norm2(&linalg::restrict(&off, set));
    let inside = linalg::norm2(&linalg::restrict(u, set));
    let outside = linalg::norm2(&linalg::restrict(u, &set.complement(dict.n())));
    let half_pm = dict.p() as f64 * dict.m() as f64 / 2.0;
    Ok((lhs, mu * (set.len() as f64 * inside + half_pm * outside)))
}

/// Off-diagonal Gram bound for index sets smaller than `m`. `lam_size = None`
/// draws `|Λ|` uniformly from `1..m` on each trial. Every third trial puts
/// `u` inside `Λ`.
pub fn check_offdiag_bound(
    trials: usize,
    m: usize,
    p: usize,
    lam_size: Option<usize>,
    seed: u64,
) -> Result<OracleReport> {
    if let Some(s) = lam_size {
        if s >= m {
            return Err(Error::InvalidArgument(format!("|Λ| = {s} must be below m = {m}")));
        }
    }
    run_trials("offdiag-gram", trials, seed, |rng, t| {
        let dict = sample_dictionary(rng, t, m, p)?;
        let mu = mutual_coherence(&dict);
        let size = lam_size.unwrap_or_else(|| rng.random_range(1..m));
        let set = random_subset(rng, dict.n(), size);
        let mut u = gaussian_vec(rng, dict.n());
        if t % 3 == 0 {
            u = linalg::restrict(&u, &set);
        }
        let (lhs, rhs) = offdiag_bound_sides(&dict, mu, &u, &set)?;
        Ok(vec![Sample::Checked { lhs, rhs }])
    })
}

// ---------------------------------------------------------------------------
// Restricted least-squares error

/// Error bound for the projection onto `Λ` of noiseless `y = Ax*`, with
/// `K ≤ |Λ| < 1/μ`. Samples where no such `Λ` exists are skipped. Every
/// fourth trial forces `supp(x*) ⊆ Λ`.
pub fn check_ls_error_bound(
    trials: usize,
    m: usize,
    p: usize,
    k: usize,
    seed: u64,
) -> Result<OracleReport> {
    run_trials("ls-error", trials, seed, |rng, t| {
        let dict = sample_dictionary(rng, t, m, p)?;
        let mu = mutual_coherence(&dict);
        let n = dict.n();
        // Largest |Λ| with |Λ|μ < 1 and |Λ| < m.
        let mut widest = (1.0 / mu).ceil() as usize;
        while widest > 0 && widest as f64 * mu >= 1.0 {
            widest -= 1;
        }
        let widest = widest.min(m - 1);
        if k == 0 || widest < k {
            return Ok(vec![Sample::Skipped]);
        }
        let x_star = random_sparse(rng, n, k);
        let y = dict.apply(&x_star)?;
        let size = rng.random_range(k..=widest);
        let set = if t % 4 == 0 {
            let truth = linalg::support(&x_star);
            let extra = random_subset(rng, n, size);
            let mut merged = truth.as_slice().to_vec();
            merged.extend(extra.iter().filter(|j| !truth.contains(*j)).take(size - k));
            IndexSet::new(merged)
        } else {
            random_subset(rng, n, size)
        };
        let z = restricted_least_squares(&dict, &y, &set)?;
        let err = linalg::sub(&z, &x_star);
        let lhs = linalg::norm2(&err);
        let outside = linalg::norm2(&linalg::restrict(&err, &set.complement(n)));
        let shrink = 1.0 - set.len() as f64 * mu;
        let mut out = Vec::with_capacity(2);
        let general = dict.p() as f64 * m as f64 * mu / (2.0 * shrink);
        out.push(Sample::Checked { lhs, rhs: (1.0 + general * general).sqrt() * outside });
        if dict.p() == 2 {
            let two = m as f64 * mu / shrink;
            out.push(Sample::Checked { lhs, rhs: (1.0 + two * two).sqrt() * outside });
        }
        Ok(out)
    })
}

// ---------------------------------------------------------------------------
// Exhaustive search

const BRUTE_FORCE_MAX_COLUMNS: usize = 24;
const BRUTE_FORCE_MAX_SPARSITY: usize = 3;
const BRUTE_FORCE_RESIDUAL: f64 = 1e-8;

/// Sparsest `x` with `‖y − Ax‖₂ ≤ 1e−8‖y‖₂` among supports of size at most
/// `k_max`, trying sizes in increasing order and supports lexicographically.
/// `y = 0` yields the zero vector.
pub fn brute_force_sparsest(
    dict: &BlockDictionary,
    y: &[f64],
    k_max: usize,
) -> Result<Option<Vec<f64>>> {
    let n = dict.n();
    if n > BRUTE_FORCE_MAX_COLUMNS || k_max > BRUTE_FORCE_MAX_SPARSITY {
        return Err(Error::TooLarge(format!(
            "exhaustive search limited to n ≤ {BRUTE_FORCE_MAX_COLUMNS} and K ≤ {BRUTE_FORCE_MAX_SPARSITY}, got n = {n}, K = {k_max}"
        )));
    }
    check_len(y.len(), dict.m())?;
    let target = BRUTE_FORCE_RESIDUAL * linalg::norm2(y);
    if linalg::norm2(y) == 0.0 {
        return Ok(Some(vec![0.0; n]));
    }
    for size in 1..=k_max.min(dict.m()) {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            let set = IndexSet::new(combo.clone());
            let x = restricted_least_squares(dict, y, &set)?;
            if linalg::norm2(&dict.residual(y, &x)?) <= target {
                return Ok(Some(x));
            }
            // Advance to the next combination in lexicographic order.
            let mut i = size;
            while i > 0 && combo[i - 1] == n - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            combo[i - 1] += 1;
            for j in i..size {
                combo[j] = combo[j - 1] + 1;
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hk_sides_vanish_when_z_is_x() {
        let x = [0.0, 2.0, 0.0, -1.0];
        assert_eq!(hk_bound_sides(&x, &x, 2).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn hk_suite_has_no_violations() {
        let r = check_hk_bound(1000, 32, 5, 11).unwrap();
        assert_eq!(r.violations, 0);
        assert_eq!(r.skipped, 0);
        assert!(r.max_ratio <= 1.0 && r.max_ratio > 0.3, "{r:?}");
    }

    #[test]
    fn row_bound_zero_matrix_and_equality_case() {
        let zero = Mat::<f64>::zeros(3, 4);
        let s = row_bound_sides(&zero, &[1.0, 2.0, 3.0, 4.0], 0.5).unwrap();
        assert_eq!(s.lhs, 0.0);
        assert!(s.arithmetic > 0.0);

        let alpha = 0.3;
        let full = Mat::from_fn(5, 5, |_, _| alpha);
        let s = row_bound_sides(&full, &[1.0; 5], alpha).unwrap();
        assert!((s.lhs - s.geometric).abs() < 1e-12 * s.geometric);
        assert!((s.geometric - s.arithmetic).abs() < 1e-12);
    }

    #[test]
    fn row_suite_has_no_violations() {
        let r = check_row_bound(1000, 7, 12, 0.4, 5).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn low_coherence_pair_reaches_the_floor() {
        let d = low_coherence_dictionary(3, 16, 2).unwrap();
        assert!((mutual_coherence(&d) - 0.25).abs() < 1e-12);
        let d = low_coherence_dictionary(3, 12, 3).unwrap();
        assert_eq!(d.p(), 3);
    }

    #[test]
    fn offdiag_cases() {
        let d = low_coherence_dictionary(1, 8, 2).unwrap();
        let mu = mutual_coherence(&d);
        let set = IndexSet::new(vec![1, 9]);
        assert_eq!(offdiag_bound_sides(&d, mu, &[0.0; 16], &set).unwrap(), (0.0, 0.0));

        let mut u = vec![0.0; 16];
        u[1] = 1.5;
        u[9] = -0.5;
        let (_, rhs) = offdiag_bound_sides(&d, mu, &u, &set).unwrap();
        let inside = (1.5f64 * 1.5 + 0.25).sqrt();
        assert!((rhs - mu * 2.0 * inside).abs() < 1e-12);
    }

    #[test]
    fn offdiag_suites_have_no_violations() {
        for p in [2, 3, 5] {
            let r = check_offdiag_bound(300, 16, p, None, 2).unwrap();
            assert!(r.passed(), "{r:?}");
        }
        assert!(check_offdiag_bound(1, 16, 2, Some(16), 2).is_err());
    }

    #[test]
    fn ls_suite_has_no_violations() {
        let r = check_ls_error_bound(500, 16, 2, 1, 9).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.evaluated() > 0);
    }

    #[test]
    fn ls_suite_reports_infeasible_sparsity() {
        // 1/μ ≤ 4 for m = 16, so K = 8 never fits.
        let r = check_ls_error_bound(20, 16, 2, 8, 9).unwrap();
        assert_eq!(r.skipped, 20);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn brute_force_finds_single_columns() {
        let d = low_coherence_dictionary(4, 4, 2).unwrap();
        let y = d.column(6).to_vec();
        let x = brute_force_sparsest(&d, &y, 2).unwrap().unwrap();
        assert_eq!(linalg::support(&x).as_slice(), &[6]);
        assert!((x[6] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn brute_force_rejects_generic_targets() {
        let d = low_coherence_dictionary(4, 8, 2).unwrap();
        let mut rng = rng_from_seed(17);
        let y = gaussian_vec(&mut rng, 8);
        assert!(brute_force_sparsest(&d, &y, 3).unwrap().is_none());
    }

    #[test]
    fn brute_force_guard() {
        let d = low_coherence_dictionary(4, 16, 2).unwrap();
        assert!(matches!(brute_force_sparsest(&d, &[0.0; 16], 1), Err(Error::TooLarge(_))));
        let d = low_coherence_dictionary(4, 8, 2).unwrap();
        assert!(matches!(brute_force_sparsest(&d, &[0.0; 8], 4), Err(Error::TooLarge(_))));
    }
}
