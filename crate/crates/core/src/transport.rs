//! Algebra of strictly increasing maps of the unit interval onto itself,
//! plus the explicit one-dimensional Wasserstein metric between
//! distributions represented by their quantile functions.
//!
//! Maps are sampled on a uniform grid of `M + 1` points and interpreted as
//! their piecewise-linear interpolants. Inversion and composition of
//! piecewise-linear monotone functions are exact up to resampling, and all
//! integrals reduce to trapezoid sums with `O(1/M^2)` error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Total perturbation applied when repairing ties in monotone data.
pub const EPS_RAMP: f64 = 1e-9;

/// Strictly increasing map of `[0, 1]` onto itself, sampled at `k / M`.
///
/// Invariants: `values[0] == 0`, `values[M] == 1`, strictly increasing,
/// all values in `[0, 1]`. Checked on every construction in debug builds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitMap<T> {
    values: Vec<T>,
}

impl<T: Scalar> UnitMap<T> {
    /// Builds a map from grid samples, enforcing all invariants.
    pub fn new(values: Vec<T>) -> Result<Self> {
        Self::check_values(&values)?;
        Ok(Self { values })
    }

    /// Construction for results whose monotonicity is guaranteed
    /// algebraically (convex combinations, compositions of valid maps).
    /// Invariants are still verified in debug builds.
    fn new_unchecked(values: Vec<T>) -> Self {
        debug_assert!(Self::check_values(&values).is_ok(), "UnitMap invariant violated");
        Self { values }
    }

    fn check_values(values: &[T]) -> Result<()> {
        let m = values.len().saturating_sub(1);
        if m < 1 {
            return Err(Error::Domain("UnitMap needs at least 2 grid values".into()));
        }
        if values[0] != T::zero() || values[m] != T::one() {
            return Err(Error::DegenerateMap(format!(
                "endpoints not pinned: ({}, {})",
                values[0], values[m]
            )));
        }
        for k in 0..m {
            if !(values[k + 1] > values[k]) {
                return Err(Error::DegenerateMap(format!(
                    "not strictly increasing at grid index {k}"
                )));
            }
        }
        Ok(())
    }

    /// Repairs a non-decreasing sample vector into a valid map: rescales to
    /// `[0, 1]`, separates ties by an `EPS_RAMP` linear tilt and renormalizes
    /// to pin the endpoints. Returns the map and whether a repair was needed.
    pub fn from_monotone(raw: &[T]) -> Result<(Self, bool)> {
        let m = raw.len().saturating_sub(1);
        if m < 1 {
            return Err(Error::Input("need at least 2 samples".into()));
        }
        let (lo, hi) = (raw[0], raw[m]);
        for k in 0..m {
            if raw[k + 1] < raw[k] {
                return Err(Error::Input(format!("samples decrease at index {k}")));
            }
        }
        let span = hi - lo;
        let mut values: Vec<T> = if span > T::zero() {
            raw.iter().map(|&v| (v - lo) / span).collect()
        } else {
            // Fully degenerate (constant) input: repair from a flat line.
            vec![T::zero(); m + 1]
        };
        values[0] = T::zero();
        values[m] = T::one();
        let strict = (0..m).all(|k| values[k + 1] > values[k]);
        if !strict {
            let eps = T::from_f(EPS_RAMP);
            let mf = T::from_usize(m).unwrap();
            let scale = T::one() + eps;
            for (k, v) in values.iter_mut().enumerate() {
                let ramp = eps * T::from_usize(k).unwrap() / mf;
                *v = (*v + ramp) / scale;
            }
            values[0] = T::zero();
            values[m] = T::one();
        }
        Ok((Self::new_unchecked(values), !strict))
    }

    pub fn identity(m: usize) -> Self {
        let mf = T::from_usize(m).unwrap();
        let mut values: Vec<T> = (0..=m).map(|k| T::from_usize(k).unwrap() / mf).collect();
        values[m] = T::one();
        Self::new_unchecked(values)
    }

    /// Samples `f` on the grid. `f` must be strictly increasing with
    /// `f(0) = 0` and `f(1) = 1`.
    pub fn from_fn(m: usize, f: impl Fn(T) -> T) -> Result<Self> {
        let mf = T::from_usize(m).unwrap();
        let mut values: Vec<T> = (0..=m)
            .map(|k| f(T::from_usize(k).unwrap() / mf))
            .collect();
        values[0] = T::zero();
        values[m] = T::one();
        Self::new(values)
    }

    /// Number of grid cells `M`.
    pub fn grid_m(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn is_identity(&self) -> bool {
        let mf = T::from_usize(self.grid_m()).unwrap();
        self.values
            .iter()
            .enumerate()
            .all(|(k, &v)| v == T::from_usize(k).unwrap() / mf)
    }

    fn require_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid_m() != other.grid_m() {
            return Err(Error::GridMismatch(self.grid_m(), other.grid_m()));
        }
        Ok(())
    }

    /// Piecewise-linear interpolation; exact at grid points.
    pub fn evaluate(&self, x: T) -> Result<T> {
        if !(x >= T::zero() && x <= T::one()) {
            return Err(Error::Domain(format!("evaluation point {x} outside [0, 1]")));
        }
        Ok(self.eval_inner(x))
    }

    #[inline]
    pub(crate) fn eval_inner(&self, x: T) -> T {
        let m = self.grid_m();
        let xm = x * T::from_usize(m).unwrap();
        let k = match xm.floor().to_usize() {
            Some(k) if k < m => k,
            _ => m - 1,
        };
        let t = xm - T::from_usize(k).unwrap();
        let v = self.values[k];
        v + t * (self.values[k + 1] - v)
    }

    /// `self` after `g`: returns the grid sampling of `self ∘ g`.
    pub fn compose(&self, g: &Self) -> Result<Self> {
        self.require_same_grid(g)?;
        // Exact no-op composition; keeps identities like `f ∘ id = f` free
        // of interpolation rounding.
        if g.is_identity() {
            return Ok(self.clone());
        }
        if self.is_identity() {
            return Ok(g.clone());
        }
        let mut values: Vec<T> = g.values.iter().map(|&y| self.eval_inner(y)).collect();
        let m = self.grid_m();
        values[0] = T::zero();
        values[m] = T::one();
        let bump = T::epsilon() * T::from_f(4.0);
        for k in 0..m - 1 {
            // FP rounding can collapse cells where both slopes are tiny.
            if values[k + 1] <= values[k] {
                values[k + 1] = values[k] + bump;
            }
        }
        let mut k = m - 1;
        while k > 0 && values[k] >= values[k + 1] {
            values[k] = values[k + 1] - bump;
            k -= 1;
        }
        Ok(Self::new_unchecked(values))
    }

    /// Exact inverse of the piecewise-linear interpolant, resampled on the
    /// uniform grid. `invert(invert(m))` matches `m` within `2 / M` in sup
    /// norm.
    pub fn invert(&self) -> Self {
        let m = self.grid_m();
        let mf = T::from_usize(m).unwrap();
        let mut values = Vec::with_capacity(m + 1);
        let mut j = 0usize;
        for k in 0..=m {
            let y = T::from_usize(k).unwrap() / mf;
            while j + 1 < m && self.values[j + 1] <= y {
                j += 1;
            }
            let (v0, v1) = (self.values[j], self.values[j + 1]);
            let x = (T::from_usize(j).unwrap() + (y - v0) / (v1 - v0)) / mf;
            values.push(x);
        }
        values[0] = T::zero();
        values[m] = T::one();
        for k in 0..m {
            // FP rounding can collapse cells under extreme slopes.
            if values[k + 1] <= values[k] {
                values[k + 1] = values[k] + T::epsilon() * T::from_f(4.0);
            }
        }
        Self::new_unchecked(values)
    }

    /// Contraction toward the identity: `x + alpha (T(x) - x)` for positive
    /// `alpha`, `x + alpha (x - T^{-1}(x))` for negative.
    pub fn contract(&self, alpha: T) -> Result<Self> {
        if alpha.abs() > T::one() {
            return Err(Error::Domain(format!("contraction factor {alpha} outside [-1, 1]")));
        }
        if alpha == T::zero() {
            return Ok(Self::identity(self.grid_m()));
        }
        if alpha == T::one() {
            return Ok(self.clone());
        }
        if alpha == -T::one() {
            return Ok(self.invert());
        }
        let id = Self::identity(self.grid_m());
        let values: Vec<T> = if alpha > T::zero() {
            id.values
                .iter()
                .zip(&self.values)
                .map(|(&x, &t)| x + alpha * (t - x))
                .collect()
        } else {
            let inv = self.invert();
            id.values
                .iter()
                .zip(&inv.values)
                .map(|(&x, &w)| x + alpha * (x - w))
                .collect()
        };
        let mut values = values;
        let m = self.grid_m();
        values[0] = T::zero();
        values[m] = T::one();
        Ok(Self::new_unchecked(values))
    }

    /// Contraction toward an arbitrary map `s` instead of the identity.
    /// `|alpha| >= 1` is rejected: at the endpoints the chain carries no
    /// information about `s`.
    pub fn contract_about(&self, alpha: T, s: &Self) -> Result<Self> {
        if alpha.abs() >= T::one() {
            return Err(Error::Domain(format!(
                "contraction about a map needs |alpha| < 1, got {alpha}"
            )));
        }
        self.require_same_grid(s)?;
        if alpha == T::zero() {
            return Ok(s.clone());
        }
        let mut values = contract_about_raw(self, alpha, s);
        let m = self.grid_m();
        values[0] = T::zero();
        values[m] = T::one();
        // Validated rather than repaired: the operator is undefined off the
        // space of increasing maps.
        Self::new(values)
    }

    /// `(∫ |f - g|^p dx)^(1/p)` by the composite trapezoid rule.
    pub fn lp_distance(&self, other: &Self, p: T) -> Result<T> {
        if p < T::one() {
            return Err(Error::Domain(format!("Lp exponent {p} < 1")));
        }
        self.require_same_grid(other)?;
        let two = T::from_f(2.0);
        let integrand: Vec<T> = if p == two {
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| (a - b) * (a - b))
                .collect()
        } else {
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| (a - b).abs().powf(p))
                .collect()
        };
        Ok(trapezoid_unit(&integrand).powf(T::one() / p))
    }

    pub fn sup_distance(&self, other: &Self) -> Result<T> {
        self.require_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max))
    }

    /// Largest per-cell slope `M (v[k+1] - v[k])`.
    pub fn max_slope(&self) -> T {
        let mf = T::from_usize(self.grid_m()).unwrap();
        self.values
            .windows(2)
            .map(|w| (w[1] - w[0]) * mf)
            .fold(T::zero(), T::max)
    }

    pub fn min_slope(&self) -> T {
        let mf = T::from_usize(self.grid_m()).unwrap();
        self.values
            .windows(2)
            .map(|w| (w[1] - w[0]) * mf)
            .fold(T::infinity(), T::min)
    }

    /// Node slopes by central differences, one-sided at the endpoints.
    pub fn node_slopes(&self) -> Vec<T> {
        let m = self.grid_m();
        let mf = T::from_usize(m).unwrap();
        let half = T::from_f(0.5);
        let v = &self.values;
        (0..=m)
            .map(|k| {
                if k == 0 {
                    (v[1] - v[0]) * mf
                } else if k == m {
                    (v[m] - v[m - 1]) * mf
                } else {
                    (v[k + 1] - v[k - 1]) * mf * half
                }
            })
            .collect()
    }

    /// Pointwise mean of a non-empty set of maps (increasing, so valid).
    pub fn mean(maps: &[Self]) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| Error::Input("mean of empty map set".into()))?;
        let m = first.grid_m();
        let mut acc = vec![T::zero(); m + 1];
        for map in maps {
            first.require_same_grid(map)?;
            for (a, &v) in acc.iter_mut().zip(&map.values) {
                *a += v;
            }
        }
        let n = T::from_usize(maps.len()).unwrap();
        for a in acc.iter_mut() {
            *a /= n;
        }
        acc[0] = T::zero();
        acc[m] = T::one();
        Ok(Self::new_unchecked(acc))
    }
}

/// Raw pointwise values of the contraction of `t` about `s`, without
/// constructing (or validating) a map. Used where only residual norms are
/// needed.
pub(crate) fn contract_about_raw<T: Scalar>(t: &UnitMap<T>, alpha: T, s: &UnitMap<T>) -> Vec<T> {
    if alpha > T::zero() {
        s.values
            .iter()
            .zip(&t.values)
            .map(|(&sv, &tv)| sv + alpha * (tv - sv))
            .collect()
    } else if alpha == T::zero() {
        s.values.clone()
    } else {
        let inv = t.invert();
        s.values
            .iter()
            .zip(inv.values())
            .map(|(&sv, &w)| sv + alpha * (sv - w))
            .collect()
    }
}

/// Composite trapezoid rule over the uniform unit grid.
pub fn trapezoid_unit<T: Scalar>(values: &[T]) -> T {
    let m = values.len() - 1;
    let half = T::from_f(0.5);
    let mut sum = half * (values[0] + values[m]);
    for &v in &values[1..m] {
        sum += v;
    }
    sum / T::from_usize(m).unwrap()
}

/// Closed interval of the real line carrying the physical units of the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::Domain(format!("empty interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn unit() -> Self {
        Self { lo: T::zero(), hi: T::one() }
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }
}

/// A distribution's quantile function: a monotone map from `[0, 1]` onto a
/// physical domain, stored as a unit map plus the domain interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileCurve<T> {
    pub domain: Interval<T>,
    pub unit: UnitMap<T>,
}

impl<T: Scalar> QuantileCurve<T> {
    pub fn new(domain: Interval<T>, unit: UnitMap<T>) -> Self {
        Self { domain, unit }
    }

    pub fn from_unit_map(unit: UnitMap<T>) -> Self {
        Self { domain: Interval::unit(), unit }
    }

    /// De-normalized quantile at probability level `p`.
    pub fn evaluate(&self, p: T) -> Result<T> {
        Ok(self.domain.lo + self.domain.width() * self.unit.evaluate(p)?)
    }

    /// Explicit 1-D Wasserstein distance: the `L^2` distance between
    /// quantile functions, in original units.
    pub fn wasserstein(&self, other: &Self) -> Result<T> {
        if self.domain != other.domain {
            return Err(Error::Domain(format!(
                "mismatched domains [{}, {}] vs [{}, {}]",
                self.domain.lo, self.domain.hi, other.domain.lo, other.domain.hi
            )));
        }
        Ok(self.domain.width() * self.unit.lp_distance(&other.unit, T::from_f(2.0))?)
    }
}
