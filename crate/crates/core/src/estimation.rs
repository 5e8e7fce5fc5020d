//! Plug-in least-squares estimation of `(alpha, S)` from an observed map
//! chain.
//!
//! For the perturb-then-map system the map estimate at a candidate `alpha`
//! is the ergodic average `S_{N,alpha} = (1/N) sum_j T_j ∘ [alpha T_{j-1}]^{-1}`,
//! and `alpha` is chosen by minimizing the mean squared `L^2` residual of
//! `S_{N,alpha} ∘ [alpha T_{i-1}]` against `T_i`. For the contract-about
//! system the map estimate is simply the pointwise average of the chain.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MapSeries, SystemKind};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::transport::{contract_about_raw, trapezoid_unit, UnitMap};

/// Two scanned objective values closer than this tie toward smaller |alpha|.
const TIE_EPS: f64 = 1e-12;
/// Objective spread below which the profile is reported as flat.
const FLAT_EPS: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Coarse scan resolution over alpha.
    pub alpha_grid_step: f64,
    /// Scan bounds, clipped inside (-1, 1); the exact endpoints ±1 are
    /// additionally evaluated for the perturb-then-map system.
    pub alpha_bounds: (f64, f64),
    /// Width of the golden-section bracket at which refinement stops.
    pub refine_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { alpha_grid_step: 0.01, alpha_bounds: (-0.999, 0.999), refine_tol: 1e-4 }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_grid_step > 0.0 && self.alpha_grid_step < 1.0) {
            return Err(Error::Config(format!(
                "alpha_grid_step {} outside (0, 1)",
                self.alpha_grid_step
            )));
        }
        if self.refine_tol <= 0.0 {
            return Err(Error::Config("refine_tol must be positive".into()));
        }
        let (lo, hi) = self.alpha_bounds;
        if !(lo < hi && lo > -1.0 && hi < 1.0) {
            return Err(Error::Config(format!("alpha bounds ({lo}, {hi}) invalid")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitFlags {
    /// Objective indistinguishable from constant; alpha defaulted to 0.
    pub flat_objective: bool,
    /// The minimum sits at an exact boundary alpha in {-1, 1}.
    pub boundary_minimum: bool,
    /// Some contracted map was near-flat at grid scale, making the
    /// inversion in the ergodic average ill-conditioned.
    pub ill_conditioned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult<T> {
    pub alpha_hat: T,
    pub s_hat: UnitMap<T>,
    /// Every (alpha, objective) pair evaluated, scan and refinement alike,
    /// sorted by alpha.
    pub objective_profile: Vec<(T, T)>,
    /// Number of transition pairs used.
    pub n_used: usize,
    /// Analytic objective derivative at the optimum (`None` at alpha = 0,
    /// where the contraction operator switches branches).
    pub derivative_at_opt: Option<T>,
    pub system: SystemKind,
    pub flags: FitFlags,
}

fn require_pairs<T: Scalar>(series: &MapSeries<T>) -> Result<usize> {
    if series.len() < 2 {
        return Err(Error::Input(format!(
            "need at least 2 maps to form transitions, got {}",
            series.len()
        )));
    }
    Ok(series.len() - 1)
}

/// Ergodic-average estimate of the deterministic map at a fixed `alpha`.
pub fn ergodic_s<T: Scalar>(series: &MapSeries<T>, alpha: T) -> Result<UnitMap<T>> {
    require_pairs(series)?;
    if alpha.abs() > T::one() {
        return Err(Error::Domain(format!("alpha {alpha} outside [-1, 1]")));
    }
    let terms: Vec<UnitMap<T>> = series
        .maps
        .windows(2)
        .map(|w| w[1].compose(&w[0].contract(alpha)?.invert()))
        .collect::<Result<_>>()?;
    UnitMap::mean(&terms)
}

/// Mean squared `L^2` residual of the plug-in model at `alpha`.
pub fn objective<T: Scalar>(series: &MapSeries<T>, alpha: T) -> Result<T> {
    let (value, _) = objective_inner(series, alpha)?;
    Ok(value)
}

fn objective_inner<T: Scalar>(series: &MapSeries<T>, alpha: T) -> Result<(T, bool)> {
    let n = require_pairs(series)?;
    let mut ill = false;
    let contracted: Vec<UnitMap<T>> = series.maps[..n]
        .iter()
        .map(|t| t.contract(alpha))
        .collect::<Result<_>>()?;
    let flat_tol = T::from_f(1e-6);
    let terms: Vec<UnitMap<T>> = contracted
        .iter()
        .zip(&series.maps[1..])
        .map(|(c, t_next)| {
            if c.min_slope() < flat_tol {
                ill = true;
            }
            t_next.compose(&c.invert())
        })
        .collect::<Result<_>>()?;
    let s_n = UnitMap::mean(&terms)?;
    let mut total = T::zero();
    for (c, t_next) in contracted.iter().zip(&series.maps[1..]) {
        let fitted = s_n.compose(c)?;
        let sq: Vec<T> = fitted
            .values()
            .iter()
            .zip(t_next.values())
            .map(|(&a, &b)| (a - b) * (a - b))
            .collect();
        total += trapezoid_unit(&sq);
    }
    Ok((total / T::from_usize(n).unwrap(), ill))
}

/// Mean squared residual of the contract-about model at `alpha`, with the
/// map estimate fixed to the chain average.
fn objective_alt<T: Scalar>(series: &MapSeries<T>, s_n: &UnitMap<T>, alpha: T) -> Result<T> {
    let n = require_pairs(series)?;
    let mut total = T::zero();
    for w in series.maps.windows(2) {
        let raw = contract_about_raw(&w[0], alpha, s_n);
        let sq: Vec<T> = raw
            .iter()
            .zip(w[1].values())
            .map(|(&a, &b)| (a - b) * (a - b))
            .collect();
        total += trapezoid_unit(&sq);
    }
    Ok(total / T::from_usize(n).unwrap())
}

/// Linear interpolation of per-node grid data at an interior point.
#[inline]
fn interp_grid<T: Scalar>(data: &[T], x: T) -> T {
    let m = data.len() - 1;
    let xm = x * T::from_usize(m).unwrap();
    let k = match xm.floor().to_usize() {
        Some(k) if k < m => k,
        _ => m - 1,
    };
    let t = xm - T::from_usize(k).unwrap();
    data[k] + t * (data[k + 1] - data[k])
}

/// Analytic derivative of the perturb-then-map objective with respect to
/// `alpha`, via the closed-form derivative of the ergodic average composed
/// with the contraction. Map slopes are estimated by central differences on
/// the grid.
pub fn objective_derivative<T: Scalar>(series: &MapSeries<T>, alpha: T) -> Result<T> {
    let n = require_pairs(series)?;
    if alpha == T::zero() {
        return Err(Error::Domain(
            "objective not differentiable at alpha = 0 (contraction branch boundary)".into(),
        ));
    }
    if alpha.abs() >= T::one() {
        return Err(Error::Domain(format!("alpha {alpha} outside (-1, 0) ∪ (0, 1)")));
    }
    let m = series.grid_m();
    let mf = T::from_usize(m).unwrap();
    let one = T::one();
    let positive = alpha > T::zero();

    let contracted: Vec<UnitMap<T>> = series.maps[..n]
        .iter()
        .map(|t| t.contract(alpha))
        .collect::<Result<_>>()?;
    let inverses: Vec<UnitMap<T>> = contracted.iter().map(UnitMap::invert).collect();
    let slopes: Vec<Vec<T>> = series.maps.iter().map(UnitMap::node_slopes).collect();
    // Negative branch needs the inverses of the conditioning maps themselves.
    let inv_prev: Vec<Option<UnitMap<T>>> = if positive {
        vec![None; n]
    } else {
        series.maps[..n].iter().map(|t| Some(t.invert())).collect()
    };
    let inv_prev_slopes: Vec<Option<Vec<T>>> = inv_prev
        .iter()
        .map(|o| o.as_ref().map(UnitMap::node_slopes))
        .collect();

    // Grid functions of y: the alpha-derivative and the y-derivative of the
    // ergodic average, accumulated over transition pairs.
    let mut d_alpha = vec![T::zero(); m + 1];
    let mut d_y = vec![T::zero(); m + 1];
    for i in 0..n {
        let inv_c = &inverses[i];
        let t_prev = &series.maps[i];
        let slope_next = &slopes[i + 1];
        for k in 0..=m {
            let z = inv_c.values()[k];
            let tp_next = interp_grid(slope_next, z);
            let (denom, shift) = if positive {
                let tp_prev = interp_grid(&slopes[i], z);
                (one + alpha * (tp_prev - one), z - t_prev.eval_inner(z))
            } else {
                let inv = inv_prev[i].as_ref().unwrap();
                let ip = interp_grid(inv_prev_slopes[i].as_ref().unwrap(), z);
                (one + alpha * (one - ip), inv.eval_inner(z) - z)
            };
            let w = tp_next / denom;
            d_alpha[k] += w * shift;
            d_y[k] += w;
        }
    }
    let nf = T::from_usize(n).unwrap();
    for k in 0..=m {
        d_alpha[k] /= nf;
        d_y[k] /= nf;
    }

    // Ergodic average itself, for the residual factor.
    let terms: Vec<UnitMap<T>> = series.maps[1..]
        .iter()
        .zip(&inverses)
        .map(|(t_next, inv)| t_next.compose(inv))
        .collect::<Result<_>>()?;
    let s_n = UnitMap::mean(&terms)?;

    let two = T::from_f(2.0);
    let mut total = T::zero();
    for i in 0..n {
        let c = &contracted[i];
        let t_prev = &series.maps[i];
        let t_next = &series.maps[i + 1];
        let mut integrand = Vec::with_capacity(m + 1);
        for k in 0..=m {
            let x = T::from_usize(k).unwrap() / mf;
            let y = c.values()[k];
            let residual = s_n.eval_inner(y) - t_next.values()[k];
            let shift = if positive {
                t_prev.values()[k] - x
            } else {
                x - inv_prev[i].as_ref().unwrap().values()[k]
            };
            let deriv = interp_grid(&d_alpha, y) + interp_grid(&d_y, y) * shift;
            integrand.push(two * residual * deriv);
        }
        total += trapezoid_unit(&integrand);
    }
    Ok(total / nf)
}

/// Golden-section minimization of `f` on `[a, b]` down to bracket width
/// `tol`; records every evaluation in `profile`.
fn golden_section<T: Scalar>(
    mut f: impl FnMut(T) -> Result<T>,
    mut a: T,
    mut b: T,
    tol: T,
    profile: &mut Vec<(T, T)>,
) -> Result<(T, T)> {
    let invphi = T::from_f(0.618_033_988_749_894_9);
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    profile.push((c, fc));
    profile.push((d, fd));
    while (b - a) > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c)?;
            profile.push((c, fc));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d)?;
            profile.push((d, fd));
        }
    }
    if fc <= fd {
        Ok((c, fc))
    } else {
        Ok((d, fd))
    }
}

fn scan_alphas(cfg: &FitConfig, include_exact_endpoints: bool) -> Vec<f64> {
    let (lo, hi) = cfg.alpha_bounds;
    let mut alphas = Vec::new();
    // Exact endpoints are scanned only when the clipped bounds reach far
    // enough toward them; a deliberately one-sided fit stays one-sided.
    if include_exact_endpoints && lo <= -0.999 {
        alphas.push(-1.0);
    }
    let mut a = lo;
    while a < hi - 1e-15 {
        alphas.push(a);
        a += cfg.alpha_grid_step;
    }
    alphas.push(hi);
    if lo <= 0.0 && hi >= 0.0 {
        alphas.push(0.0);
    }
    if include_exact_endpoints && hi >= 0.999 {
        alphas.push(1.0);
    }
    alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    alphas.dedup();
    alphas
}

/// Shared scan + refine scheme over a 1-D objective.
fn minimize_profile<T: Scalar>(
    eval: &(dyn Fn(T) -> Result<T> + Sync),
    cfg: &FitConfig,
    include_exact_endpoints: bool,
) -> Result<(T, Vec<(T, T)>, FitFlags)> {
    cfg.validate()?;
    let alphas = scan_alphas(cfg, include_exact_endpoints);
    let mut profile: Vec<(T, T)> = alphas
        .par_iter()
        .map(|&a| {
            let a = T::from_f(a);
            Ok((a, eval(a)?))
        })
        .collect::<Result<_>>()?;

    let mut flags = FitFlags::default();
    let (mut best_a, mut best_v) = profile[0];
    let mut worst = best_v;
    for &(a, v) in &profile[1..] {
        if v > worst {
            worst = v;
        }
        let tie = T::from_f(TIE_EPS);
        if v < best_v - tie || ((v - best_v).abs() <= tie && a.abs() < best_a.abs()) {
            best_a = a;
            best_v = v;
        }
    }
    if worst - best_v <= T::from_f(FLAT_EPS) {
        flags.flat_objective = true;
        profile.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        return Ok((T::zero(), profile, flags));
    }

    let (lo, hi) = (T::from_f(cfg.alpha_bounds.0), T::from_f(cfg.alpha_bounds.1));
    let alpha_hat = if best_a.abs() >= T::one() {
        flags.boundary_minimum = true;
        best_a
    } else {
        // Refine inside the scan bracket around the best point, staying
        // within the clipped bounds.
        let step = T::from_f(cfg.alpha_grid_step);
        let a = (best_a - step).max(lo);
        let b = (best_a + step).min(hi);
        let (refined, refined_v) =
            golden_section(|x| eval(x), a, b, T::from_f(cfg.refine_tol), &mut profile)?;
        if refined_v < best_v {
            refined
        } else {
            best_a
        }
    };
    profile.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    Ok((alpha_hat, profile, flags))
}

/// Fits the perturb-then-map system by scanning the plug-in objective over
/// `alpha` and refining by golden section.
pub fn fit<T: Scalar>(series: &MapSeries<T>, cfg: &FitConfig) -> Result<FitResult<T>> {
    let n = require_pairs(series)?;
    cfg.validate()?;
    if all_equal(series) {
        // A constant chain carries no information about alpha: every alpha
        // reproduces it with a matching map estimate. Report the simplest
        // reading and flag the flat objective.
        let alpha_hat = T::zero();
        let s_hat = ergodic_s(series, alpha_hat)?;
        let profile = vec![(alpha_hat, objective(series, alpha_hat)?)];
        return Ok(FitResult {
            alpha_hat,
            s_hat,
            objective_profile: profile,
            n_used: n,
            derivative_at_opt: None,
            system: SystemKind::PerturbThenMap,
            flags: FitFlags { flat_objective: true, ..FitFlags::default() },
        });
    }
    let ill = std::sync::atomic::AtomicBool::new(false);
    let eval = |a: T| -> Result<T> {
        let (v, bad) = objective_inner(series, a)?;
        if bad {
            ill.store(true, std::sync::atomic::Ordering::Relaxed);
        }
        Ok(v)
    };
    let (alpha_hat, profile, mut flags) = minimize_profile(&eval, cfg, true)?;
    flags.ill_conditioned = ill.load(std::sync::atomic::Ordering::Relaxed);
    let s_hat = ergodic_s(series, alpha_hat)?;
    let derivative_at_opt = if alpha_hat != T::zero() && alpha_hat.abs() < T::one() {
        Some(objective_derivative(series, alpha_hat)?)
    } else {
        None
    };
    let result = FitResult {
        alpha_hat,
        s_hat,
        objective_profile: profile,
        n_used: n,
        derivative_at_opt,
        system: SystemKind::PerturbThenMap,
        flags,
    };
    debug_assert!(profile_minimal(&result));
    Ok(result)
}

/// Fits the contract-about system: the map estimate is the chain average
/// and only `alpha` is scanned.
pub fn fit_alt<T: Scalar>(series: &MapSeries<T>, cfg: &FitConfig) -> Result<FitResult<T>> {
    let n = require_pairs(series)?;
    cfg.validate()?;
    let s_n = UnitMap::mean(&series.maps)?;
    if all_equal(series) {
        let alpha_hat = T::zero();
        let profile = vec![(alpha_hat, objective_alt(series, &s_n, alpha_hat)?)];
        return Ok(FitResult {
            alpha_hat,
            s_hat: s_n,
            objective_profile: profile,
            n_used: n,
            derivative_at_opt: None,
            system: SystemKind::ContractAbout,
            flags: FitFlags { flat_objective: true, ..FitFlags::default() },
        });
    }
    let eval = |a: T| objective_alt(series, &s_n, a);
    let (alpha_hat, profile, flags) = minimize_profile(&eval, cfg, false)?;
    // Central-difference derivative; the closed form belongs to the other
    // system.
    let derivative_at_opt = if alpha_hat != T::zero() && !flags.flat_objective {
        let h = T::from_f(1e-5);
        let up = objective_alt(series, &s_n, alpha_hat + h)?;
        let down = objective_alt(series, &s_n, alpha_hat - h)?;
        Some((up - down) / (h + h))
    } else {
        None
    };
    let result = FitResult {
        alpha_hat,
        s_hat: s_n,
        objective_profile: profile,
        n_used: n,
        derivative_at_opt,
        system: SystemKind::ContractAbout,
        flags,
    };
    debug_assert!(profile_minimal(&result));
    Ok(result)
}

fn all_equal<T: Scalar>(series: &MapSeries<T>) -> bool {
    series.maps.windows(2).all(|w| w[0] == w[1])
}

fn profile_minimal<T: Scalar>(result: &FitResult<T>) -> bool {
    if result.flags.flat_objective {
        return true;
    }
    let best = result
        .objective_profile
        .iter()
        .map(|&(_, v)| v)
        .fold(T::infinity(), T::min);
    result
        .objective_profile
        .iter()
        .any(|&(a, v)| a == result.alpha_hat && v <= best + T::from_f(TIE_EPS))
}
