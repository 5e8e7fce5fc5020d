//! Scripted studies: the simulation grid over `(alpha, S)` cells, the
//! estimator convergence-rate study, the inverse-map inequality sweep, and
//! the increment-vs-quantile model comparison for observed curve series.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    check_stationarity_condition, maps_from_distributions, simulate_chain, ChainConfig,
    ModelKind, ModelParams, StationarityReport, SystemKind,
};
use crate::error::{Error, Result};
use crate::estimation::{fit, FitConfig};
use crate::ingest::EmpiricalSeries;
use crate::noise::{zeta_map, NoiseSpec};
use crate::rng::Seed;
use crate::scalar::Scalar;
use crate::transport::{trapezoid_unit, UnitMap};

/// Resolves a named deterministic map: `id`, `zeta:K` (integer `K`),
/// `kinked` (piecewise-linear with a slope break at 1/2), or `steps`
/// (two near-flat plateaus joined by a steep ramp).
pub fn builtin_map<T: Scalar>(name: &str, m: usize) -> Result<UnitMap<T>> {
    if name == "id" {
        return Ok(UnitMap::identity(m));
    }
    if let Some(k) = name.strip_prefix("zeta:") {
        let k: i32 = k
            .parse()
            .map_err(|_| Error::Config(format!("bad frequency in map name '{name}'")))?;
        return Ok(zeta_map(k, m));
    }
    match name {
        "kinked" => UnitMap::from_fn(m, |x| {
            let half = T::from_f(0.5);
            if x <= half {
                half * x
            } else {
                T::from_f(0.25) + T::from_f(1.5) * (x - half)
            }
        }),
        "steps" => UnitMap::from_fn(m, |x| {
            // Slopes 0.2 / 8.2 / 0.2 on [0, 0.45], [0.45, 0.55], [0.55, 1].
            let (b1, b2) = (T::from_f(0.45), T::from_f(0.55));
            let flat = T::from_f(0.2);
            if x <= b1 {
                flat * x
            } else if x <= b2 {
                T::from_f(0.09) + T::from_f(8.2) * (x - b1)
            } else {
                T::from_f(0.91) + flat * (x - b2)
            }
        }),
        _ => Err(Error::Config(format!("unknown map name '{name}'"))),
    }
}

/// Names accepted by [`builtin_map`], for help text and error messages.
pub const BUILTIN_MAP_NAMES: &[&str] = &["id", "zeta:K", "kinked", "steps"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T> {
    pub alphas: Vec<f64>,
    pub s_choices: Vec<(String, UnitMap<T>)>,
    pub n_steps: usize,
    pub burn_in: usize,
    pub replicates: usize,
    pub seed: Seed,
    pub noise: NoiseSpec,
    pub fit: FitConfig,
}

impl<T: Scalar> GridSpec<T> {
    /// The canonical grid: `alpha` in `{-0.9, -0.5, 0, 0.5, 0.9}` crossed
    /// with three smooth maps plus the kinked and stepped ones, 300 steps
    /// with 100 burned in.
    pub fn canonical(m: usize, seed: Seed) -> Self {
        let s_choices = ["zeta:-6", "zeta:-4", "zeta:-2", "kinked", "steps"]
            .iter()
            .map(|&name| (name.to_string(), builtin_map(name, m).unwrap()))
            .collect();
        Self {
            alphas: vec![-0.9, -0.5, 0.0, 0.5, 0.9],
            s_choices,
            n_steps: 300,
            burn_in: 100,
            replicates: 20,
            seed,
            noise: NoiseSpec::default(),
            fit: FitConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("grid needs at least one replicate".into()));
        }
        if self.alphas.is_empty() || self.s_choices.is_empty() {
            return Err(Error::Config("grid needs at least one alpha and one map".into()));
        }
        let m = self.s_choices[0].1.grid_m();
        for (name, s) in &self.s_choices {
            if s.grid_m() != m {
                return Err(Error::GridMismatch(m, s.grid_m()))
                    .map_err(|e| Error::Config(format!("map '{name}': {e}")));
            }
        }
        self.noise.validate()?;
        self.fit.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReplicate {
    pub replicate: usize,
    pub alpha_hat: f64,
    /// `L^2` distance of the fitted map from the cell's true map.
    pub s_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub alpha_true: f64,
    pub s_name: String,
    pub alpha_hat_median: f64,
    pub alpha_hat_iqr: f64,
    pub s_error_median: f64,
    pub stationarity: StationarityReport,
    /// True when the sufficient stationarity condition holds with no
    /// caveat flags.
    pub in_theory_region: bool,
    pub replicates: Vec<GridReplicate>,
    /// Failed replicates, as error strings; the run continues past them.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub cells: Vec<GridCell>,
}

/// Empirical quantile of a sorted slice by the order-statistic blend.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let k = (pos.floor() as usize).min(n - 2);
    let t = pos - k as f64;
    sorted[k] + t * (sorted[k + 1] - sorted[k])
}

fn median(sorted: &[f64]) -> f64 {
    quantile_sorted(sorted, 0.5)
}

/// Simulates and fits every `(alpha, S)` cell of the grid, `replicates`
/// chains per cell on dedicated rng substreams, and aggregates medians.
/// Deterministic given the spec, independent of thread scheduling.
pub fn run_simulation_grid<T: Scalar>(spec: &GridSpec<T>) -> Result<GridReport> {
    spec.validate()?;
    let m = spec.s_choices[0].1.grid_m();
    let n_cells = spec.alphas.len() * spec.s_choices.len();
    let cells: Vec<GridCell> = (0..n_cells)
        .map(|ci| {
            let alpha = spec.alphas[ci / spec.s_choices.len()];
            let (s_name, s_true) = &spec.s_choices[ci % spec.s_choices.len()];
            let params = ModelParams {
                alpha: T::from_f(alpha),
                s: s_true.clone(),
                system: SystemKind::PerturbThenMap,
            };
            let outcomes: Vec<std::result::Result<GridReplicate, String>> = (0..spec
                .replicates)
                .into_par_iter()
                .map(|rep| {
                    let cfg = ChainConfig {
                        n_steps: spec.n_steps,
                        burn_in: spec.burn_in,
                        init: UnitMap::identity(m),
                        seed: spec.seed,
                        stream: (ci * spec.replicates + rep) as u64,
                    };
                    let run = || -> Result<GridReplicate> {
                        let series = simulate_chain(&params, &cfg, &spec.noise)?;
                        let result = fit(&series, &spec.fit)?;
                        Ok(GridReplicate {
                            replicate: rep,
                            alpha_hat: result.alpha_hat.to_f(),
                            s_error: result.s_hat.lp_distance(s_true, T::from_f(2.0))?.to_f(),
                        })
                    };
                    run().map_err(|e| format!("replicate {rep}: {e}"))
                })
                .collect();
            let mut replicates = Vec::new();
            let mut failures = Vec::new();
            for outcome in outcomes {
                match outcome {
                    Ok(r) => replicates.push(r),
                    Err(e) => failures.push(e),
                }
            }
            let mut alpha_hats: Vec<f64> = replicates.iter().map(|r| r.alpha_hat).collect();
            let mut s_errors: Vec<f64> = replicates.iter().map(|r| r.s_error).collect();
            alpha_hats.sort_by(|a, b| a.partial_cmp(b).unwrap());
            s_errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let stationarity = check_stationarity_condition(&params, &spec.noise)?;
            let in_theory_region = stationarity.satisfied && !stationarity.negative_alpha_caveat;
            Ok(GridCell {
                alpha_true: alpha,
                s_name: s_name.clone(),
                alpha_hat_median: if alpha_hats.is_empty() {
                    f64::NAN
                } else {
                    median(&alpha_hats)
                },
                alpha_hat_iqr: if alpha_hats.is_empty() {
                    f64::NAN
                } else {
                    quantile_sorted(&alpha_hats, 0.75) - quantile_sorted(&alpha_hats, 0.25)
                },
                s_error_median: if s_errors.is_empty() { f64::NAN } else { median(&s_errors) },
                stationarity,
                in_theory_region,
                replicates,
                failures,
            })
        })
        .collect::<Result<_>>()?;
    Ok(GridReport { cells })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub rmse_alpha: f64,
    pub mean_s_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub slope: f64,
    /// 95% bootstrap band over replicate resampling.
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub points: Vec<RatePoint>,
    pub alpha_slope: Option<SlopeEstimate>,
    pub s_slope: Option<SlopeEstimate>,
    /// Errors at machine scale (e.g. noiseless chains): slopes meaningless
    /// and withheld.
    pub degenerate: bool,
    pub replicates: usize,
}

const BOOTSTRAP_RESAMPLES: usize = 200;
const DEGENERATE_RMSE: f64 = 1e-3;

fn log_log_slope(ns: &[usize], values: &[f64]) -> f64 {
    let k = ns.len() as f64;
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|&v| v.max(1e-300).ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

/// Monte Carlo study of how the estimation errors shrink with the chain
/// length: RMSE of `alpha_hat` and mean map error per `N`, with least
/// squares slopes on log-log axes and bootstrap bands.
#[allow(clippy::too_many_arguments)]
pub fn run_rate_experiment<T: Scalar>(
    ns: &[usize],
    replicates: usize,
    params: &ModelParams<T>,
    noise: &NoiseSpec,
    fit_cfg: &FitConfig,
    burn_in: usize,
    seed: Seed,
) -> Result<RateReport> {
    let mut distinct = ns.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Input(format!(
            "need at least 3 distinct chain lengths, got {:?}",
            ns
        )));
    }
    if replicates < 20 {
        return Err(Error::Input(format!("need at least 20 replicates, got {replicates}")));
    }
    params.validate()?;
    let m = params.s.grid_m();
    let alpha_true = params.alpha.to_f();

    // errors[point][replicate] = (alpha error, map error)
    let errors: Vec<Vec<(f64, f64)>> = ns
        .iter()
        .enumerate()
        .map(|(ni, &n)| {
            (0..replicates)
                .into_par_iter()
                .map(|rep| {
                    let cfg = ChainConfig {
                        n_steps: n + burn_in,
                        burn_in,
                        init: UnitMap::identity(m),
                        seed,
                        stream: (ni * replicates + rep) as u64,
                    };
                    let series = simulate_chain(params, &cfg, noise)?;
                    let result = fit(&series, fit_cfg)?;
                    let a_err = result.alpha_hat.to_f() - alpha_true;
                    let s_err = result.s_hat.lp_distance(&params.s, T::from_f(2.0))?.to_f();
                    Ok((a_err, s_err))
                })
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;

    let summarize = |pick: &[Vec<usize>]| -> (Vec<f64>, Vec<f64>) {
        let mut rmse = Vec::with_capacity(ns.len());
        let mut mean_s = Vec::with_capacity(ns.len());
        for (ni, idxs) in pick.iter().enumerate() {
            let k = idxs.len() as f64;
            let msq: f64 = idxs.iter().map(|&r| errors[ni][r].0.powi(2)).sum::<f64>() / k;
            let ms: f64 = idxs.iter().map(|&r| errors[ni][r].1).sum::<f64>() / k;
            rmse.push(msq.sqrt());
            mean_s.push(ms);
        }
        (rmse, mean_s)
    };

    let full: Vec<Vec<usize>> = (0..ns.len()).map(|_| (0..replicates).collect()).collect();
    let (rmse, mean_s) = summarize(&full);
    let points: Vec<RatePoint> = ns
        .iter()
        .zip(rmse.iter().zip(&mean_s))
        .map(|(&n, (&rmse_alpha, &mean_s_error))| RatePoint { n, rmse_alpha, mean_s_error })
        .collect();

    let degenerate = rmse.iter().any(|&v| v < DEGENERATE_RMSE);
    let (alpha_slope, s_slope) = if degenerate {
        (None, None)
    } else {
        let mut rng = seed.substream((ns.len() * replicates) as u64 + 1);
        let mut alpha_slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
        let mut s_slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
        for _ in 0..BOOTSTRAP_RESAMPLES {
            let pick: Vec<Vec<usize>> = (0..ns.len())
                .map(|_| (0..replicates).map(|_| rng.random_range(0..replicates)).collect())
                .collect();
            let (r, s) = summarize(&pick);
            alpha_slopes.push(log_log_slope(ns, &r));
            s_slopes.push(log_log_slope(ns, &s));
        }
        alpha_slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        s_slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let band = |sorted: &[f64], point: f64| SlopeEstimate {
            slope: point,
            ci_lo: quantile_sorted(sorted, 0.025),
            ci_hi: quantile_sorted(sorted, 0.975),
        };
        (
            Some(band(&alpha_slopes, log_log_slope(ns, &rmse))),
            Some(band(&s_slopes, log_log_slope(ns, &mean_s))),
        )
    };

    Ok(RateReport { points, alpha_slope, s_slope, degenerate, replicates })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseSweepReport {
    pub n_pairs: usize,
    pub slope_band: (f64, f64),
    /// The asserted bound `L_u / L_l` on the distance ratio.
    pub bound: f64,
    /// Largest observed `‖T⁻¹ - S⁻¹‖₂ / ‖T - S‖₂` over well-separated pairs.
    pub max_ratio: f64,
    /// Pairs violating `lhs <= bound · rhs + 4/M` (expected 0).
    pub n_violations: usize,
    /// Calibrated constant for the square-root inequality
    /// `‖T⁻¹ - S⁻¹‖₂ <= C √‖T - S‖₂`; reported, not asserted.
    pub sqrt_constant: f64,
}

/// Draws a random map whose piecewise slopes all lie in `[l_l, l_u]`:
/// two slope levels bracketing 1 assigned to randomly shuffled cells, with
/// one adjustment cell so the slopes average to exactly 1.
fn band_map<T: Scalar>(
    m: usize,
    l_l: f64,
    l_u: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> UnitMap<T> {
    let a = rng.random_range(l_l..=1.0);
    let b = rng.random_range(1.0..=l_u);
    let (a, b) = if b - a < 1e-9 { (l_l, l_u) } else { (a, b) };
    let mf = m as f64;
    let k = ((mf * (b - 1.0) / (b - a)).floor() as usize).min(m - 1);
    let c = mf - (k as f64 * a + (m - 1 - k) as f64 * b);
    let mut slopes: Vec<f64> = Vec::with_capacity(m);
    slopes.resize(k, a);
    slopes.resize(m - 1, b);
    slopes.push(c);
    slopes.shuffle(rng);
    let mut values = Vec::with_capacity(m + 1);
    let mut acc = 0.0f64;
    values.push(T::zero());
    for &s in &slopes {
        acc += s / mf;
        values.push(T::from_f(acc));
    }
    values[m] = T::one();
    UnitMap::new(values).expect("band slopes are positive")
}

/// Samples random map pairs with slopes confined to the band and checks
/// the inverse-distance inequality `‖T⁻¹-S⁻¹‖₂ <= (L_u/L_l)‖T-S‖₂ + 4/M`
/// on every pair.
pub fn run_inverse_inequality_sweep<T: Scalar>(
    n_pairs: usize,
    slope_band: (f64, f64),
    m: usize,
    seed: Seed,
) -> Result<InverseSweepReport> {
    let (l_l, l_u) = slope_band;
    if !(l_l > 0.0 && l_l < l_u && l_u.is_finite()) {
        return Err(Error::Input(format!("invalid slope band ({l_l}, {l_u})")));
    }
    if !(l_l <= 1.0 && l_u >= 1.0) {
        // Slopes of a unit map average to exactly 1, so the band must
        // straddle 1 to be realizable.
        return Err(Error::Input(format!("slope band ({l_l}, {l_u}) excludes slope 1")));
    }
    let bound = l_u / l_l;
    let tol = T::from_f(4.0 / m as f64);
    let two = T::from_f(2.0);
    let results: Vec<(f64, f64, bool)> = (0..n_pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.substream(i as u64);
            let t: UnitMap<T> = band_map(m, l_l, l_u, &mut rng);
            let s: UnitMap<T> = band_map(m, l_l, l_u, &mut rng);
            let dist = t.lp_distance(&s, two)?;
            let inv_dist = t.invert().lp_distance(&s.invert(), two)?;
            let violated = inv_dist > T::from_f(bound) * dist + tol;
            Ok((dist.to_f(), inv_dist.to_f(), violated))
        })
        .collect::<Result<_>>()?;
    let mut max_ratio = 0.0f64;
    let mut sqrt_constant = 0.0f64;
    let mut n_violations = 0usize;
    for (dist, inv_dist, violated) in results {
        if violated {
            n_violations += 1;
        }
        if dist > 1e-9 {
            max_ratio = max_ratio.max(inv_dist / dist);
            sqrt_constant = sqrt_constant.max(inv_dist / dist.sqrt());
        }
    }
    Ok(InverseSweepReport {
        n_pairs,
        slope_band,
        bound,
        max_ratio,
        n_violations,
        sqrt_constant,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    PreferUniformQuantile,
    PreferIncrement,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison<T> {
    pub alpha_increment: T,
    pub alpha_uniform_quantile: T,
    pub objective_min_increment: T,
    pub objective_min_uniform_quantile: T,
    /// The two sides of `M^(I)(0) = M^(UQ)(1)`, evaluated through the two
    /// parameterizations but sharing the averaged increment map.
    pub bridging_increment_at_zero: T,
    pub bridging_quantile_at_one: T,
    pub bridging_gap_rel: f64,
    pub verdict: Verdict,
}

/// `alpha_hat` magnitudes below this count as "essentially zero" for the
/// comparison verdict.
const ALPHA_NEAR_ZERO: f64 = 0.05;
/// `alpha_hat` above this counts as "essentially one".
const ALPHA_NEAR_ONE: f64 = 0.95;

/// Mean squared `L^2` dispersion of increment maps about their average:
/// the common value of the increment objective at `alpha = 0` and the
/// quantile objective at `alpha = 1` after changing variables.
fn increment_dispersion<T: Scalar>(increments: &[UnitMap<T>]) -> Result<T> {
    let g = UnitMap::mean(increments)?;
    let mut total = T::zero();
    for inc in increments {
        let sq: Vec<T> = g
            .values()
            .iter()
            .zip(inc.values())
            .map(|(&a, &b)| (a - b) * (a - b))
            .collect();
        total += trapezoid_unit(&sq);
    }
    Ok(total / T::from_usize(increments.len()).unwrap())
}

fn profile_min<T: Scalar>(profile: &[(T, T)]) -> T {
    profile.iter().map(|&(_, v)| v).fold(T::infinity(), T::min)
}

/// Fits the increment and uniform-quantile readings of one curve series,
/// verifies the bridging identity between their objectives, and issues the
/// heuristic verdict: the quantile model when the increment fit needs no
/// dependence, the increment model when the quantile fit saturates.
pub fn compare_models<T: Scalar>(
    series: &EmpiricalSeries<T>,
    cfg: &FitConfig,
) -> Result<ModelComparison<T>> {
    if series.curves.len() < 3 {
        return Err(Error::Input(format!(
            "model comparison needs at least 3 curves, got {}",
            series.curves.len()
        )));
    }
    let inc_series = maps_from_distributions(&series.curves, &ModelKind::Increment)?;
    let uq_series = maps_from_distributions(&series.curves, &ModelKind::UniformQuantile)?;

    // Increments of exchangeable curves share each q_{i-1} factor with their
    // neighbour, which shows up as spurious negative dependence; the
    // increment reading is therefore scanned over nonnegative alpha only.
    let inc_cfg = FitConfig {
        alpha_bounds: (0.0, cfg.alpha_bounds.1),
        ..cfg.clone()
    };
    let fit_inc = fit(&inc_series, &inc_cfg)?;
    let fit_uq = fit(&uq_series, cfg)?;

    // Increment side of the bridging identity, from the increment maps.
    let side_inc = increment_dispersion(&inc_series.maps)?;
    // Quantile side: the same increments re-derived from the quantile maps.
    let uq_increments: Vec<UnitMap<T>> = uq_series
        .maps
        .windows(2)
        .map(|w| w[1].compose(&w[0].invert()))
        .collect::<Result<_>>()?;
    let side_uq = increment_dispersion(&uq_increments)?;
    let gap = (side_inc - side_uq).abs().to_f();
    let scale = side_inc.abs().max(side_uq.abs()).to_f().max(1e-300);
    let bridging_gap_rel = gap / scale;

    let alpha_inc = fit_inc.alpha_hat;
    let alpha_uq = fit_uq.alpha_hat;
    let verdict = if alpha_inc.abs().to_f() <= ALPHA_NEAR_ZERO {
        Verdict::PreferUniformQuantile
    } else if alpha_uq.to_f() >= ALPHA_NEAR_ONE {
        Verdict::PreferIncrement
    } else {
        Verdict::Inconclusive
    };
    Ok(ModelComparison {
        alpha_increment: alpha_inc,
        alpha_uniform_quantile: alpha_uq,
        objective_min_increment: profile_min(&fit_inc.objective_profile),
        objective_min_uniform_quantile: profile_min(&fit_uq.objective_profile),
        bridging_increment_at_zero: side_inc,
        bridging_quantile_at_one: side_uq,
        bridging_gap_rel,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::sample_noise_map;
    use crate::transport::{Interval, QuantileCurve};
    use approx::assert_abs_diff_eq;

    const M: usize = 200;

    #[test]
    fn builtin_names_resolve() {
        assert!(builtin_map::<f64>("id", M).unwrap().is_identity());
        let z = builtin_map::<f64>("zeta:-2", M).unwrap();
        assert_eq!(z, zeta_map::<f64>(-2, M));
        let kinked = builtin_map::<f64>("kinked", M).unwrap();
        assert_abs_diff_eq!(kinked.evaluate(0.5).unwrap(), 0.25, epsilon = 1e-12);
        let steps = builtin_map::<f64>("steps", M).unwrap();
        assert_abs_diff_eq!(steps.evaluate(0.45).unwrap(), 0.09, epsilon = 1e-9);
        assert_abs_diff_eq!(steps.evaluate(0.55).unwrap(), 0.91, epsilon = 1e-9);
        assert!(builtin_map::<f64>("nope", M).is_err());
        assert!(builtin_map::<f64>("zeta:x", M).is_err());
    }

    #[test]
    fn grid_single_noiseless_cell_recovers_map() {
        let spec: GridSpec<f64> = GridSpec {
            alphas: vec![0.5],
            s_choices: vec![("zeta:-2".into(), zeta_map::<f64>(-2, M))],
            n_steps: 60,
            burn_in: 0,
            replicates: 1,
            seed: Seed(3),
            noise: NoiseSpec::noiseless(),
            fit: FitConfig::default(),
        };
        let report = run_simulation_grid(&spec).unwrap();
        assert_eq!(report.cells.len(), 1);
        let cell = &report.cells[0];
        assert!(cell.failures.is_empty());
        assert!(cell.s_error_median <= 5.0 / M as f64, "error {}", cell.s_error_median);
        assert!((cell.alpha_hat_median - 0.5).abs() <= 1e-3);
    }

    #[test]
    fn grid_matches_direct_call_and_is_deterministic() {
        let spec: GridSpec<f64> = GridSpec {
            alphas: vec![0.3],
            s_choices: vec![("id".into(), UnitMap::identity(M))],
            n_steps: 40,
            burn_in: 10,
            replicates: 1,
            seed: Seed(11),
            noise: NoiseSpec::default(),
            fit: FitConfig { alpha_grid_step: 0.05, ..FitConfig::default() },
        };
        let report = run_simulation_grid(&spec).unwrap();
        let report2 = run_simulation_grid(&spec).unwrap();
        assert_eq!(
            serde_json::to_string(&report).unwrap(),
            serde_json::to_string(&report2).unwrap()
        );

        let params = ModelParams {
            alpha: 0.3,
            s: UnitMap::identity(M),
            system: SystemKind::PerturbThenMap,
        };
        let cfg = ChainConfig {
            n_steps: 40,
            burn_in: 10,
            init: UnitMap::identity(M),
            seed: Seed(11),
            stream: 0,
        };
        let series = simulate_chain(&params, &cfg, &NoiseSpec::default()).unwrap();
        let direct = fit(&series, &spec.fit).unwrap();
        assert_eq!(report.cells[0].replicates[0].alpha_hat, direct.alpha_hat);
    }

    #[test]
    fn grid_in_theory_region_logic() {
        let spec: GridSpec<f64> = GridSpec {
            alphas: vec![-0.3, 0.3, 0.9],
            s_choices: vec![("id".into(), UnitMap::identity(M))],
            n_steps: 12,
            burn_in: 2,
            replicates: 1,
            seed: Seed(1),
            noise: NoiseSpec::default(),
            fit: FitConfig { alpha_grid_step: 0.25, ..FitConfig::default() },
        };
        let report = run_simulation_grid(&spec).unwrap();
        let regions: Vec<bool> = report.cells.iter().map(|c| c.in_theory_region).collect();
        // Negative alpha carries the caveat; 0.9 * 1 * 2 > 1 fails outright.
        assert_eq!(regions, vec![false, true, false]);
    }

    #[test]
    fn rate_preconditions() {
        let params = ModelParams {
            alpha: 0.3,
            s: UnitMap::<f64>::identity(M),
            system: SystemKind::PerturbThenMap,
        };
        let err = run_rate_experiment(
            &[100, 200],
            20,
            &params,
            &NoiseSpec::default(),
            &FitConfig::default(),
            0,
            Seed(1),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Input(_)));
        let err = run_rate_experiment(
            &[100, 200, 400],
            5,
            &params,
            &NoiseSpec::default(),
            &FitConfig::default(),
            0,
            Seed(1),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn rate_noiseless_degenerate() {
        let params = ModelParams {
            alpha: 0.3,
            s: zeta_map::<f64>(-2, 400),
            system: SystemKind::PerturbThenMap,
        };
        let report = run_rate_experiment(
            &[20, 40, 80],
            20,
            &params,
            &NoiseSpec::noiseless(),
            &FitConfig { alpha_grid_step: 0.05, ..FitConfig::default() },
            0,
            Seed(5),
        )
        .unwrap();
        assert!(report.degenerate);
        assert!(report.alpha_slope.is_none());
        assert!(report.s_slope.is_none());
        for p in &report.points {
            assert!(p.rmse_alpha <= 1e-3, "rmse {}", p.rmse_alpha);
        }
    }

    #[test]
    fn band_map_slopes_stay_in_band() {
        let mut rng = Seed(2).rng();
        for _ in 0..20 {
            let map: UnitMap<f64> = band_map(M, 0.5, 2.0, &mut rng);
            assert!(map.min_slope() >= 0.5 - 1e-9, "min {}", map.min_slope());
            assert!(map.max_slope() <= 2.0 + 1e-9, "max {}", map.max_slope());
        }
    }

    #[test]
    fn inverse_sweep_identical_pair_trivial() {
        let map: UnitMap<f64> = band_map(M, 0.5, 2.0, &mut Seed(1).rng());
        let d = map.invert().lp_distance(&map.invert(), 2.0).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn inverse_sweep_band_holds() {
        let report =
            run_inverse_inequality_sweep::<f64>(200, (0.5, 2.0), M, Seed(7)).unwrap();
        assert_eq!(report.n_violations, 0);
        assert!(report.max_ratio <= 4.0 + 0.1, "ratio {}", report.max_ratio);
        assert!(report.sqrt_constant > 0.0);
    }

    #[test]
    fn inverse_sweep_rejects_bad_bands() {
        assert!(run_inverse_inequality_sweep::<f64>(10, (2.0, 0.5), M, Seed(1)).is_err());
        assert!(run_inverse_inequality_sweep::<f64>(10, (1.5, 2.0), M, Seed(1)).is_err());
    }

    fn curves_from_maps(maps: Vec<UnitMap<f64>>) -> EmpiricalSeries<f64> {
        let domain = Interval::unit();
        EmpiricalSeries {
            periods: (0..maps.len()).map(|i| format!("t{i}")).collect(),
            curves: maps
                .into_iter()
                .map(|m| QuantileCurve::new(domain, m))
                .collect(),
            domain,
            repaired: vec![],
        }
    }

    #[test]
    fn compare_models_iid_series() {
        let mut rng = Seed(13).rng();
        let maps: Vec<UnitMap<f64>> = (0..40)
            .map(|_| sample_noise_map(&NoiseSpec::default(), M, &mut rng).unwrap())
            .collect();
        let series = curves_from_maps(maps);
        let cfg = FitConfig { alpha_grid_step: 0.05, ..FitConfig::default() };
        let cmp = compare_models(&series, &cfg).unwrap();
        assert!(cmp.bridging_gap_rel <= 1e-8, "gap {}", cmp.bridging_gap_rel);
        assert!(cmp.alpha_uniform_quantile.abs() <= 0.2, "uq {}", cmp.alpha_uniform_quantile);
        assert!(cmp.alpha_increment.abs() <= 0.2, "inc {}", cmp.alpha_increment);
    }

    #[test]
    fn compare_models_uq_dynamics_prefers_uq() {
        let params = ModelParams {
            alpha: 0.5,
            s: UnitMap::<f64>::identity(M),
            system: SystemKind::PerturbThenMap,
        };
        let cfg = ChainConfig {
            n_steps: 120,
            burn_in: 20,
            init: UnitMap::identity(M),
            seed: Seed(21),
            stream: 0,
        };
        let chain = simulate_chain(&params, &cfg, &NoiseSpec::default()).unwrap();
        let series = curves_from_maps(chain.maps);
        let fit_cfg = FitConfig { alpha_grid_step: 0.05, ..FitConfig::default() };
        let cmp = compare_models(&series, &fit_cfg).unwrap();
        assert!(cmp.bridging_gap_rel <= 1e-8, "gap {}", cmp.bridging_gap_rel);
        assert!(
            (cmp.alpha_uniform_quantile - 0.5).abs() <= 0.2,
            "uq {}",
            cmp.alpha_uniform_quantile
        );
        assert_eq!(cmp.verdict, Verdict::PreferUniformQuantile);
    }

    #[test]
    fn compare_models_too_short() {
        let series = curves_from_maps(vec![UnitMap::identity(M), UnitMap::identity(M)]);
        assert!(compare_models(&series, &FitConfig::default()).is_err());
    }
}
