//! Seeded problem instances `y = Ax* + εh` and the recovery criterion.
//!
//! Blocks, the sparse truth and the noise use separate streams derived from
//! the instance seed (see [`crate::seed`]): block `i` from
//! `BLOCK_BASE + i`, `x*` from `SPARSE_VECTOR`, `h` from `NOISE`.

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, BlockDictionary};
use crate::seed::{derive_seed, rng_from_seed, stream};

/// Relative error below which a recovery counts as exact.
pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub seed: u64,
    pub m: usize,
    pub p: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub noise_level: f64,
}

impl InstanceSpec {
    pub fn new(seed: u64, m: usize, p: usize, k: usize, noise_level: f64) -> Self {
        Self {
            seed,
            m,
            p,
            k,
            noise_level,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k > self.m * self.p {
            return Err(Error::InvalidArgument(format!(
                "K = {} exceeds n = {}",
                self.k,
                self.m * self.p
            )));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise level must be finite and nonnegative, got {}",
                self.noise_level
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub spec: InstanceSpec,
    pub dict: BlockDictionary,
    pub x_star: Vec<f64>,
    pub y: Vec<f64>,
}

/// Length-`n` vector with exactly `k` standard-Gaussian nonzeros on a
/// uniformly drawn support.
pub fn gen_sparse_vector(seed: u64, n: usize, k: usize) -> Result<Vec<f64>> {
    if k > n {
        return Err(Error::InvalidArgument(format!("K = {k} exceeds length {n}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut x = vec![0.0; n];
    let mut support = index::sample(&mut rng, n, k).into_vec();
    support.sort_unstable();
    for j in support {
        // An exact zero would shrink the support; draw again.
        x[j] = loop {
            let v: f64 = StandardNormal.sample(&mut rng);
            if v != 0.0 {
                break v;
            }
        };
    }
    Ok(x)
}

pub fn gen_instance(spec: &InstanceSpec) -> Result<Instance> {
    spec.validate()?;
    let block_seeds: Vec<u64> = (0..spec.p)
        .map(|i| derive_seed(spec.seed, stream::BLOCK_BASE + i as u64))
        .collect();
    let dict = BlockDictionary::from_block_seeds(&block_seeds, spec.m)?;
    let x_star = gen_sparse_vector(
        derive_seed(spec.seed, stream::SPARSE_VECTOR),
        dict.n(),
        spec.k,
    )?;
    let mut y = dict.apply(&x_star)?;
    if spec.noise_level > 0.0 {
        let mut rng = rng_from_seed(derive_seed(spec.seed, stream::NOISE));
        for v in &mut y {
            let h: f64 = StandardNormal.sample(&mut rng);
            *v += spec.noise_level * h;
        }
    }
    Ok(Instance {
        spec: spec.clone(),
        dict,
        x_star,
        y,
    })
}

pub fn relative_error(x_hat: &[f64], x_star: &[f64]) -> f64 {
    linalg::distance(x_hat, x_star) / linalg::norm2(x_star)
}

/// `‖x̂ − x*‖₂/‖x*‖₂ ≤ threshold`. Requires `x* ≠ 0`.
pub fn recovery_success_with(x_hat: &[f64], x_star: &[f64], threshold: f64) -> Result<bool> {
    crate::error::check_len(x_hat.len(), x_star.len())?;
    if linalg::norm2(x_star) == 0.0 {
        return Err(Error::InvalidArgument("recovery is undefined for a zero truth".into()));
    }
    Ok(relative_error(x_hat, x_star) <= threshold)
}

pub fn recovery_success(x_hat: &[f64], x_star: &[f64]) -> Result<bool> {
    recovery_success_with(x_hat, x_star, DEFAULT_SUCCESS_THRESHOLD)
}

/// JSON form of an [`Instance`]: blocks as row-major nested arrays.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub spec: InstanceSpec,
    pub blocks: Vec<Vec<Vec<f64>>>,
    pub x_star: Vec<f64>,
    pub y: Vec<f64>,
}

impl From<&Instance> for InstanceRecord {
    fn from(inst: &Instance) -> Self {
        let m = inst.dict.m();
        let blocks = inst
            .dict
            .blocks()
            .iter()
            .map(|b| (0..m).map(|r| (0..m).map(|c| b[(r, c)]).collect()).collect())
            .collect();
        Self {
            spec: inst.spec.clone(),
            blocks,
            x_star: inst.x_star.clone(),
            y: inst.y.clone(),
        }
    }
}

impl TryFrom<InstanceRecord> for Instance {
    type Error = Error;

    fn try_from(rec: InstanceRecord) -> Result<Self> {
        let blocks = rec
            .blocks
            .iter()
            .map(|rows| {
                let m = rows.len();
                if rows.iter().any(|r| r.len() != m) {
                    return Err(Error::Format("block rows have unequal length".into()));
                }
                Ok(faer::Mat::from_fn(m, m, |r, c| rows[r][c]))
            })
            .collect::<Result<Vec<_>>>()?;
        let dict = BlockDictionary::new(blocks)?;
        crate::error::check_len(rec.x_star.len(), dict.n())?;
        crate::error::check_len(rec.y.len(), dict.m())?;
        Ok(Self {
            spec: rec.spec,
            dict,
            x_star: rec.x_star,
            y: rec.y,
        })
    }
}
