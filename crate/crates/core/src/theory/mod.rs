//! Closed-form recovery guarantees for concatenated orthogonal dictionaries.
//!
//! The two-block guarantee certifies convergence of TSAA when
//! `K < (1/(2μ))·min{c, c(1−c)²/(m²μ²)}` and contracts the error by `ρ`
//! per iteration. The multi-block guarantee certifies MSAA when
//! `K < (1/μ)·min{τ₁(p), τ₂(p)/(m²μ²)}` with contraction `η`.
//!
//! `τ₂` and `η` are printed in two slightly different forms in the source
//! derivation. [`BoundVariant::Proof`] is the form the contraction argument
//! actually relies on and is the default; [`BoundVariant::Statement`] keeps
//! the alternative for comparison.
//!
//! Since `μ ≥ 1/√m` for any pair of orthogonal `m × m` blocks, both
//! conditions are only satisfiable for very small `K` relative to `m`; see
//! [`coherence_lower_bound`].

mod oracles;

pub use oracles::{
    brute_force_sparsest, check_hk_bound, check_ls_error_bound, check_offdiag_bound,
    check_row_bound, hk_bound_sides, low_coherence_dictionary, offdiag_bound_sides,
    row_bound_sides, OracleReport, RowBoundSides,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which printed form of `τ₂` and `η` to evaluate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundVariant {
    /// `(1 − 2τ₁)²` in `τ₂` and `(1 − 2Kμ)` in the first factor of `η`.
    #[default]
    Proof,
    /// `(1 − 3τ₁)²` in `τ₂` and `(1 − 3Kμ)` in the first factor of `η`.
    Statement,
}

/// The constants `ω`, `c`, `τ₁(p)` and `τ₂(p)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceConstants {
    pub omega: f64,
    pub c: f64,
}

impl Default for ConvergenceConstants {
    fn default() -> Self {
        Self::new()
    }
}

impl ConvergenceConstants {
    pub fn new() -> Self {
        let omega = (5f64.sqrt() + 1.0) / 2.0;
        let c = 2f64.sqrt() / (3.0 * omega.powi(3));
        Self { omega, c }
    }

    pub fn tau1(&self, p: usize) -> f64 {
        let w = self.omega;
        let p = p as f64;
        2.0 / (w * (1.0 + 2.0 * w * w * (3.0 * p - 2.0) * p.sqrt()))
    }

    pub fn tau2(&self, p: usize, variant: BoundVariant) -> f64 {
        let w = self.omega;
        let t1 = self.tau1(p);
        let shrink = match variant {
            BoundVariant::Proof => 1.0 - 2.0 * t1,
            BoundVariant::Statement => 1.0 - 3.0 * t1,
        };
        let pf = p as f64;
        2.0 * (2.0 - w * t1) * shrink * shrink / (w.powi(3) * (3.0 * pf - 2.0) * pf * pf * pf.sqrt())
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidArgument(format!("coherence must be positive, got {mu}")));
    }
    Ok(())
}

fn check_m(m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::InvalidDimension(format!("block size must be at least 2, got {m}")));
    }
    Ok(())
}

fn check_p(p: usize) -> Result<()> {
    if p < 2 {
        return Err(Error::InvalidDimension(format!("block count must be at least 2, got {p}")));
    }
    Ok(())
}

/// Smallest coherence any `[Φ₁, Φ₂]` with orthogonal `m × m` blocks can have.
///
/// `Φ₁ᵀΦ₂` is orthogonal, so each of its columns has unit norm and an entry
/// of magnitude at least `1/√m`.
pub fn coherence_lower_bound(m: usize) -> f64 {
    1.0 / (m as f64).sqrt()
}

/// `½(1 + 1/μ)`: any solution with fewer nonzeros is the unique sparsest.
pub fn uniqueness_bound(mu: f64) -> Result<f64> {
    check_mu(mu)?;
    if mu > 1.0 {
        return Err(Error::InvalidArgument(format!("coherence cannot exceed 1, got {mu}")));
    }
    Ok(0.5 * (1.0 + 1.0 / mu))
}

/// Right-hand side of the TSAA sparsity condition.
pub fn tsaa_condition_rhs(mu: f64, m: usize) -> Result<f64> {
    check_mu(mu)?;
    check_m(m)?;
    let c = ConvergenceConstants::new().c;
    let mf = m as f64;
    let tail = c * (1.0 - c).powi(2) / (mf * mf * mu * mu);
    Ok(c.min(tail) / (2.0 * mu))
}

/// TSAA per-iteration contraction factor `ρ`.
pub fn tsaa_contraction_ratio(k: usize, mu: f64, m: usize) -> Result<f64> {
    check_mu(mu)?;
    check_m(m)?;
    if k == 0 {
        return Ok(0.0);
    }
    let km = k as f64 * mu;
    if 2.0 * km >= 1.0 {
        return Err(Error::UndefinedRatio(format!("2Kμ = {} is not below 1", 2.0 * km)));
    }
    let w = ConvergenceConstants::new().omega;
    let mm = m as f64 * mu;
    let a = mm / (1.0 - km);
    let b = mm / (1.0 - 2.0 * km);
    let d = 1.5 * w * km;
    Ok(1.5 * km * w.powi(3) * ((1.0 + a * a) * (1.0 + b * b) * (1.0 + d * d)).sqrt())
}

/// Right-hand side of the MSAA sparsity condition.
pub fn msaa_condition_rhs(mu: f64, m: usize, p: usize, variant: BoundVariant) -> Result<f64> {
    check_mu(mu)?;
    check_m(m)?;
    check_p(p)?;
    let consts = ConvergenceConstants::new();
    let mf = m as f64;
    let tail = consts.tau2(p, variant) / (mf * mf * mu * mu);
    Ok(consts.tau1(p).min(tail) / mu)
}

/// MSAA contraction factor `η` against the largest per-block error.
pub fn msaa_contraction_ratio(
    k: usize,
    mu: f64,
    m: usize,
    p: usize,
    variant: BoundVariant,
) -> Result<f64> {
    check_mu(mu)?;
    check_m(m)?;
    check_p(p)?;
    if k == 0 {
        return Ok(0.0);
    }
    let w = ConvergenceConstants::new().omega;
    let km = k as f64 * mu;
    let first_denominator = match variant {
        BoundVariant::Proof => 1.0 - 2.0 * km,
        BoundVariant::Statement => 1.0 - 3.0 * km,
    };
    if first_denominator <= 0.0 || 1.0 - 2.0 * km <= 0.0 || 2.0 - w * km <= 0.0 {
        return Err(Error::UndefinedRatio(format!("Kμ = {km} leaves a nonpositive denominator")));
    }
    let pf = p as f64;
    let half_pm = pf * m as f64 * mu / 2.0;
    let a = half_pm / first_denominator;
    let b = half_pm / (1.0 - km);
    let lead = w.powi(3) * km * (3.0 * pf - 2.0) * pf.sqrt() / (2.0 - w * km);
    Ok(lead * ((1.0 + a * a) * (1.0 + b * b)).sqrt())
}

/// Guarantee summary for one `(μ, m, p, K)`.
///
/// For `p = 2` the condition and ratio are the TSAA ones (`ρ`); for `p > 2`
/// they are the MSAA ones (`η`, proof form).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub mu: f64,
    pub m: usize,
    pub p: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub uniqueness_bound: f64,
    pub unique: bool,
    /// `"TSAA"` or `"MSAA"`.
    pub method: String,
    pub condition_rhs: f64,
    pub condition_holds: bool,
    /// `ρ` or `η`; absent when a denominator is nonpositive.
    pub ratio: Option<f64>,
}

pub fn bound_report(mu: f64, m: usize, p: usize, k: usize) -> Result<BoundReport> {
    let uniqueness = uniqueness_bound(mu)?;
    check_p(p)?;
    let (method, rhs, ratio) = if p == 2 {
        ("TSAA", tsaa_condition_rhs(mu, m)?, tsaa_contraction_ratio(k, mu, m))
    } else {
        (
            "MSAA",
            msaa_condition_rhs(mu, m, p, BoundVariant::Proof)?,
            msaa_contraction_ratio(k, mu, m, p, BoundVariant::Proof),
        )
    };
    let ratio = match ratio {
        Ok(r) => Some(r),
        Err(Error::UndefinedRatio(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(BoundReport {
        mu,
        m,
        p,
        k,
        uniqueness_bound: uniqueness,
        unique: (k as f64) < uniqueness,
        method: method.to_string(),
        condition_rhs: rhs,
        condition_holds: (k as f64) < rhs,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn constants_by_two_routes() {
        let k = ConvergenceConstants::new();
        assert!(k.omega > 1.618 && k.omega < 1.6181);
        // ω² = ω + 1, so ω³ = ω·ω² = 2ω + 1.
        let cubed = 2.0 * k.omega + 1.0;
        assert_relative_eq!(k.omega * k.omega * k.omega, cubed, max_relative = 1e-12);
        assert_relative_eq!(k.c, 2f64.sqrt() / (3.0 * cubed), max_relative = 1e-12);
        assert!((k.c - 0.111_283_5).abs() < 1e-7);
    }

    #[test]
    fn uniqueness_examples() {
        assert_eq!(uniqueness_bound(1.0).unwrap(), 1.0);
        assert_relative_eq!(
            uniqueness_bound(0.7071067811865475).unwrap(),
            1.2071067811865475,
            max_relative = 1e-15
        );
        assert_relative_eq!(uniqueness_bound(0.01).unwrap(), 50.5, max_relative = 1e-15);
        assert!(uniqueness_bound(0.0).is_err());
        assert!(uniqueness_bound(1.5).is_err());
        assert!(uniqueness_bound(-0.1).is_err());
    }

    #[test]
    fn tsaa_rhs_reference_point() {
        let rhs = tsaa_condition_rhs(0.01, 100).unwrap();
        assert!((rhs - 4.394_680_452_146_82).abs() < 1e-12);
        assert!(tsaa_condition_rhs(0.02, 100).unwrap() < rhs);
        assert!(tsaa_condition_rhs(0.0, 100).is_err());
    }

    #[test]
    fn rho_matches_log_sum_and_factored_forms() {
        let (k, mu, m) = (4usize, 0.01, 100usize);
        let rho = tsaa_contraction_ratio(k, mu, m).unwrap();

        let w = (5f64.sqrt() + 1.0) / 2.0;
        let (kf, mf) = (k as f64, m as f64);
        let terms = [
            (1.5f64).ln(),
            kf.ln(),
            3.0 * w.ln(),
            mu.ln(),
            0.5 * (1.0 + (mf * mu / (1.0 - kf * mu)).powi(2)).ln(),
            0.5 * (1.0 + (mf * mu / (1.0 - 2.0 * kf * mu)).powi(2)).ln(),
            0.5 * (1.0 + (1.5 * kf * w * mu).powi(2)).ln(),
        ];
        let by_logs: f64 = terms.iter().sum::<f64>().exp();
        assert_relative_eq!(rho, by_logs, max_relative = 1e-12);

        let rho1 = (1.0 + (mf * mu / (1.0 - kf * mu)).powi(2)).sqrt();
        let rho2 = (1.0 + (mf * mu / (1.0 - 2.0 * kf * mu)).powi(2)).sqrt();
        let factored =
            w.powi(3) * rho1 * rho2 * mu * (1.5 * kf) * (1.0 + (1.5 * kf * w * mu).powi(2)).sqrt();
        assert_relative_eq!(rho, factored, max_relative = 1e-12);

        assert!((rho - 0.544_611_130_595_857_9).abs() < 1e-12);
        assert!(rho < 1.0);
    }

    #[test]
    fn ratios_vanish_at_zero_sparsity() {
        assert_eq!(tsaa_contraction_ratio(0, 0.3, 10).unwrap(), 0.0);
        assert_eq!(msaa_contraction_ratio(0, 0.3, 10, 4, BoundVariant::Proof).unwrap(), 0.0);
    }

    #[test]
    fn ratios_reject_large_sparsity() {
        assert!(matches!(
            tsaa_contraction_ratio(50, 0.01, 100),
            Err(Error::UndefinedRatio(_))
        ));
        assert!(matches!(
            msaa_contraction_ratio(40, 0.01, 100, 3, BoundVariant::Statement),
            Err(Error::UndefinedRatio(_))
        ));
        assert!(msaa_contraction_ratio(40, 0.01, 100, 3, BoundVariant::Proof).is_ok());
    }

    #[test]
    fn msaa_reference_point() {
        let rhs = msaa_condition_rhs(0.005, 100, 5, BoundVariant::Proof).unwrap();
        assert!((rhs - 0.999_642_893_607_848).abs() < 1e-9);
        assert_eq!(rhs.floor(), 0.0);
    }

    #[test]
    fn remark_constants_at_two_blocks() {
        let k = ConvergenceConstants::new();
        assert!(k.tau1(2) < k.c / 2.0);
        assert!(k.tau2(2, BoundVariant::Proof) < k.c * (1.0 - k.c).powi(2) / 2.0);
        assert!((k.tau1(2) - 0.040_368_424_633_091).abs() < 1e-12);
        assert!((k.tau2(2, BoundVariant::Proof) - 0.034_113_124_910_272).abs() < 1e-12);
    }

    #[test]
    fn tau_constants_decrease_in_p() {
        let k = ConvergenceConstants::new();
        for p in 2..=20 {
            let t1 = k.tau1(p);
            assert!(t1 < 2.0 / (k.omega * (1.0 + 3.0 * p as f64)));
            assert!(2.0 / (k.omega * (1.0 + 3.0 * p as f64)) < 0.2);
            assert!(k.tau1(p + 1) < t1);
            for v in [BoundVariant::Proof, BoundVariant::Statement] {
                assert!(k.tau2(p + 1, v) < k.tau2(p, v));
            }
            assert!(k.tau2(p, BoundVariant::Statement) < k.tau2(p, BoundVariant::Proof));
        }
    }

    #[test]
    fn msaa_rhs_decreases_in_p() {
        for p in 2..12 {
            let a = msaa_condition_rhs(0.005, 100, p, BoundVariant::Proof).unwrap();
            let b = msaa_condition_rhs(0.005, 100, p + 1, BoundVariant::Proof).unwrap();
            assert!(b < a);
        }
    }

    #[test]
    fn conditions_are_vacuous_for_realizable_coherence() {
        // At the smallest coherence two orthogonal blocks can have, neither
        // condition admits K = 1.
        for m in 2..=10_000 {
            let mu = coherence_lower_bound(m);
            assert!(tsaa_condition_rhs(mu, m).unwrap() < 1.0, "m = {m}");
            assert!(msaa_condition_rhs(mu, m, 2, BoundVariant::Proof).unwrap() < 1.0, "m = {m}");
        }
    }

    #[test]
    fn report_picks_method_by_block_count() {
        let r = bound_report(0.01, 100, 2, 4).unwrap();
        assert_eq!(r.method, "TSAA");
        assert!(r.condition_holds);
        assert!(r.ratio.unwrap() < 1.0);
        assert!(r.unique);

        let r = bound_report(0.01, 100, 3, 60).unwrap();
        assert_eq!(r.method, "MSAA");
        assert!(!r.condition_holds);
        assert!(r.ratio.is_none());
    }

    proptest! {
        #[test]
        fn conservative_chain(mu in 1e-4f64..=1.0, m in 2usize..5000) {
            let c = ConvergenceConstants::new().c;
            let rhs = tsaa_condition_rhs(mu, m).unwrap();
            prop_assert!(rhs <= c / (2.0 * mu));
            prop_assert!(c / (2.0 * mu) < uniqueness_bound(mu).unwrap());
        }

        #[test]
        fn condition_implies_contraction(
            mu in 1e-5f64..0.2,
            m in 2usize..500,
            p in 2usize..8,
            k in 1usize..200,
        ) {
            if (k as f64) < tsaa_condition_rhs(mu, m).unwrap() {
                prop_assert!(tsaa_contraction_ratio(k, mu, m).unwrap() < 1.0);
            }
            if (k as f64) < msaa_condition_rhs(mu, m, p, BoundVariant::Proof).unwrap() {
                let eta = msaa_contraction_ratio(k, mu, m, p, BoundVariant::Proof).unwrap();
                prop_assert!(eta < 1.0);
                let rho = tsaa_contraction_ratio(k, mu, m).unwrap();
                prop_assert!(rho < 3.0 / (4.0 * 2f64.sqrt()) * eta);
            }
        }
    }
}
