//! Random optimal maps with identity expectation.
//!
//! The noise family is a finite mixture of the smooth maps
//! `zeta_k(x) = x - sin(pi k x) / (|k| pi)` indexed by a random integer `k`
//! whose law is symmetric about zero. Since `zeta_k + zeta_{-k} = 2 id`,
//! the expectation of a sampled map is the identity exactly.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::transport::UnitMap;

/// Mixture specification for the random maps.
///
/// The component count `J` maps are drawn i.i.d. from the law of `K`
/// (`K = 0` with probability `include_identity_prob`, otherwise uniform on
/// `±{1, ..., k_max}`) and blended with the given weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub k_max: u32,
    pub n_components: usize,
    pub weights: Vec<f64>,
    pub include_identity_prob: f64,
}

impl Default for NoiseSpec {
    /// Calibrated defaults: two components, equal weights, `K` uniform on
    /// `±{1, ..., 4}`. Mean-identity with Lipschitz bound 2.
    fn default() -> Self {
        Self {
            k_max: 4,
            n_components: 2,
            weights: vec![0.5, 0.5],
            include_identity_prob: 0.0,
        }
    }
}

impl NoiseSpec {
    /// Spec whose draws are always the identity map (noiseless runs).
    pub fn noiseless() -> Self {
        Self {
            k_max: 1,
            n_components: 1,
            weights: vec![1.0],
            include_identity_prob: 1.0,
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.include_identity_prob >= 1.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_components == 0 {
            return Err(Error::Config("noise needs at least one component".into()));
        }
        if self.weights.len() != self.n_components {
            return Err(Error::Config(format!(
                "{} weights for {} components",
                self.weights.len(),
                self.n_components
            )));
        }
        if self.weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Config("negative mixture weight".into()));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("weights sum to {sum}, not 1")));
        }
        if !(0.0..=1.0).contains(&self.include_identity_prob) {
            return Err(Error::Config("identity probability outside [0, 1]".into()));
        }
        if self.k_max == 0 && self.include_identity_prob < 1.0 {
            return Err(Error::Config("k_max = 0 requires identity probability 1".into()));
        }
        Ok(())
    }

    /// Support of the law of `K` with point probabilities.
    pub fn k_law(&self) -> Vec<(i32, f64)> {
        let mut law = Vec::new();
        if self.include_identity_prob > 0.0 {
            law.push((0, self.include_identity_prob));
        }
        if self.include_identity_prob < 1.0 {
            let p = (1.0 - self.include_identity_prob) / (2.0 * self.k_max as f64);
            for k in 1..=self.k_max as i32 {
                law.push((-k, p));
                law.push((k, p));
            }
        }
        law
    }

    fn sample_k(&self, rng: &mut ChaCha8Rng) -> i32 {
        if self.include_identity_prob > 0.0 && rng.random::<f64>() < self.include_identity_prob {
            return 0;
        }
        let idx = rng.random_range(0..2 * self.k_max as i32);
        if idx < self.k_max as i32 {
            idx + 1
        } else {
            -(idx - self.k_max as i32 + 1)
        }
    }
}

/// `zeta_k(x)`: the identity for `k = 0`, else `x - sin(pi k x) / (|k| pi)`.
pub fn zeta<T: Scalar>(k: i32, x: T) -> T {
    if k == 0 {
        return x;
    }
    let pi = T::from_f(std::f64::consts::PI);
    let kf = T::from_f(f64::from(k));
    x - (pi * kf * x).sin() / (kf.abs() * pi)
}

/// Grid sampling of `zeta_k`.
pub fn zeta_map<T: Scalar>(k: i32, m: usize) -> UnitMap<T> {
    UnitMap::from_fn(m, |x| zeta(k, x)).expect("zeta maps are strictly increasing")
}

/// Draws one random map: components `K_1..K_J` i.i.d. from the law of `K`,
/// blended with the spec weights and sampled on the grid.
pub fn sample_noise_map<T: Scalar>(
    spec: &NoiseSpec,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<UnitMap<T>> {
    spec.validate()?;
    let ks: Vec<i32> = (0..spec.n_components).map(|_| spec.sample_k(rng)).collect();
    if ks.iter().all(|&k| k == 0) {
        return Ok(UnitMap::identity(m));
    }
    let weights: Vec<T> = spec.weights.iter().map(|&w| T::from_f(w)).collect();
    UnitMap::from_fn(m, |x| {
        ks.iter()
            .zip(&weights)
            .map(|(&k, &w)| w * zeta(k, x))
            .fold(T::zero(), |acc, v| acc + v)
    })
}

/// Exact expectation of a sampled map on the grid: the mixture average of
/// `zeta_k` under the discrete law of `K`. Equals the identity because the
/// law is symmetric and `sin` is odd.
pub fn mean_map<T: Scalar>(spec: &NoiseSpec, m: usize) -> Result<UnitMap<T>> {
    spec.validate()?;
    let law = spec.k_law();
    UnitMap::from_fn(m, |x| {
        law.iter()
            .map(|&(k, p)| T::from_f(p) * zeta(k, x))
            .fold(T::zero(), |acc, v| acc + v)
    })
}

/// A valid mean-square Lipschitz constant for the noise maps: the maximum,
/// over realizable component draws, of the sup of the mixture derivative
/// `sum_j w_j (1 - sign(k_j) cos(pi k_j x))`. At most 2 for this family.
pub fn lipschitz_bound(spec: &NoiseSpec) -> Result<f64> {
    spec.validate()?;
    let support: Vec<i32> = spec.k_law().iter().map(|&(k, _)| k).collect();
    // The sup over x is attained at a multiple of 1/k for some component;
    // a grid divisible by every k up to 10 hits those points exactly.
    let grid: usize = 5040;
    let mut assignment = vec![0usize; spec.n_components];
    let mut best: f64 = 1.0;
    loop {
        let ks: Vec<i32> = assignment.iter().map(|&i| support[i]).collect();
        let mut sup = 0.0f64;
        for g in 0..=grid {
            let x = g as f64 / grid as f64;
            let d: f64 = ks
                .iter()
                .zip(&spec.weights)
                .map(|(&k, &w)| {
                    if k == 0 {
                        w
                    } else {
                        w * (1.0 - f64::from(k.signum()) * (std::f64::consts::PI * f64::from(k) * x).cos())
                    }
                })
                .sum();
            sup = sup.max(d);
        }
        best = best.max(sup);
        // odometer over support^J
        let mut pos = 0;
        loop {
            if pos == spec.n_components {
                return Ok(best);
            }
            assignment[pos] += 1;
            if assignment[pos] < support.len() {
                break;
            }
            assignment[pos] = 0;
            pos += 1;
        }
    }
}
