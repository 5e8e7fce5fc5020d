//! Turning raw scalar samples into quantile curves.
//!
//! Input is a long-format table of (period, value) rows. Each period's
//! sample is converted to an empirical quantile function on a shared
//! domain, then rescaled to a unit map.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::transport::{Interval, QuantileCurve, UnitMap};

/// Long-format sample table grouped by period, periods in sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable<T> {
    pub periods: Vec<String>,
    pub samples: Vec<Vec<T>>,
    /// Rows dropped because the value failed to parse or was not finite.
    pub n_dropped: usize,
}

/// Quantile curves extracted from a sample table, one per period, all
/// sharing one domain interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSeries<T> {
    pub periods: Vec<String>,
    pub curves: Vec<QuantileCurve<T>>,
    pub domain: Interval<T>,
    /// Periods whose raw quantiles had ties and needed monotonicity repair.
    pub repaired: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct IngestConfig {
    pub period_column: String,
    pub value_column: String,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { period_column: "period".into(), value_column: "value".into() }
    }
}

/// Reads a CSV of (period, value) rows. Periods keep their lexicographic
/// order; non-finite or unparseable values are dropped and counted.
pub fn load_samples<T: Scalar>(path: &Path, cfg: &IngestConfig) -> Result<SampleTable<T>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Input(format!("column '{name}' not found in {path:?}")))
    };
    let period_idx = find(&cfg.period_column)?;
    let value_idx = find(&cfg.value_column)?;

    let mut groups: BTreeMap<String, Vec<T>> = BTreeMap::new();
    let mut n_dropped = 0usize;
    for record in reader.records() {
        let record = record?;
        let period = record
            .get(period_idx)
            .ok_or_else(|| Error::Input("short record".into()))?;
        let raw = record
            .get(value_idx)
            .ok_or_else(|| Error::Input("short record".into()))?;
        match raw.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => {
                groups.entry(period.to_string()).or_default().push(T::from_f(v));
            }
            _ => n_dropped += 1,
        }
    }
    if groups.is_empty() {
        return Err(Error::Input(format!("no usable rows in {path:?}")));
    }
    let (periods, samples) = groups.into_iter().unzip();
    Ok(SampleTable { periods, samples, n_dropped })
}

/// Empirical quantile at probability `p` of a sorted sample: linear
/// interpolation between order statistics at fractional index `p (n - 1)`.
fn order_stat_quantile<T: Scalar>(sorted: &[T], p: T) -> T {
    let n = sorted.len();
    let pos = p * T::from_usize(n - 1).unwrap();
    let k = match pos.floor().to_usize() {
        Some(k) if k < n - 1 => k,
        _ => n - 2,
    };
    let t = pos - T::from_usize(k).unwrap();
    sorted[k] + t * (sorted[k + 1] - sorted[k])
}

/// Converts each period's sample to a quantile curve on `m + 1` grid
/// points over a shared domain: the given interval, or the global sample
/// range padded by 1% of its width on each side (absolute pad 0.5 if the
/// range is degenerate).
///
/// Interior grid values are the normalized empirical quantiles; the two
/// endpoint values are pinned to the domain ends, so any gap between a
/// period's range and the domain shows up as steep end cells rather than an
/// affine distortion of the curve.
pub fn empirical_quantiles<T: Scalar>(
    table: &SampleTable<T>,
    m: usize,
    domain: Option<Interval<T>>,
) -> Result<EmpiricalSeries<T>> {
    if m < 2 {
        return Err(Error::Input(format!("grid size m = {m} too small")));
    }
    for (period, sample) in table.periods.iter().zip(&table.samples) {
        if sample.len() < 2 {
            return Err(Error::Input(format!(
                "period '{period}' has {} samples, need at least 2",
                sample.len()
            )));
        }
    }
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for sample in &table.samples {
        for &v in sample {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let domain = match domain {
        Some(d) => {
            if lo < d.lo || hi > d.hi {
                return Err(Error::Input(format!(
                    "samples span [{lo}, {hi}], outside the given domain [{}, {}]",
                    d.lo, d.hi
                )));
            }
            d
        }
        None => {
            let pad = if hi > lo {
                T::from_f(0.01) * (hi - lo)
            } else {
                T::from_f(0.5)
            };
            Interval::new(lo - pad, hi + pad)?
        }
    };
    let width = domain.width();

    let mut curves = Vec::with_capacity(table.periods.len());
    let mut repaired = Vec::new();
    for (period, sample) in table.periods.iter().zip(&table.samples) {
        let mut sorted = sample.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mf = T::from_usize(m).unwrap();
        let mut raw: Vec<T> = (0..=m)
            .map(|k| {
                let p = T::from_usize(k).unwrap() / mf;
                (order_stat_quantile(&sorted, p) - domain.lo) / width
            })
            .collect();
        raw[0] = T::zero();
        raw[m] = T::one();
        let (unit, was_repaired) = UnitMap::from_monotone(&raw)?;
        if was_repaired {
            repaired.push(period.clone());
        }
        curves.push(QuantileCurve { domain, unit });
    }
    Ok(EmpiricalSeries { periods: table.periods.clone(), curves, domain, repaired })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::io::Write as _;

    fn table(samples: Vec<Vec<f64>>) -> SampleTable<f64> {
        let periods = (0..samples.len()).map(|i| format!("p{i}")).collect();
        SampleTable { periods, samples, n_dropped: 0 }
    }

    #[test]
    fn two_point_sample_given_domain() {
        // {0, 1} on the unit domain at m = 2: quantiles 0, 0.5, 1.
        let series = empirical_quantiles(
            &table(vec![vec![0.0, 1.0]]),
            2,
            Some(Interval::new(0.0, 1.0).unwrap()),
        )
        .unwrap();
        let q: Vec<f64> = (0..=2)
            .map(|k| series.curves[0].evaluate(k as f64 / 2.0).unwrap())
            .collect();
        assert_abs_diff_eq!(q[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q[1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(q[2], 1.0, epsilon = 1e-12);
        assert!(series.repaired.is_empty());
    }

    #[test]
    fn default_domain_is_padded_range() {
        let series = empirical_quantiles(&table(vec![vec![0.0, 1.0]]), 10, None).unwrap();
        assert_abs_diff_eq!(series.domain.lo, -0.01, epsilon = 1e-12);
        assert_abs_diff_eq!(series.domain.hi, 1.01, epsilon = 1e-12);
        // The interior quantiles are unchanged by the padding.
        assert_abs_diff_eq!(series.curves[0].evaluate(0.5).unwrap(), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn uniform_grid_close_to_identity() {
        let n = 400;
        let sample: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let series = empirical_quantiles(
            &table(vec![sample]),
            100,
            Some(Interval::new(0.0, 1.0).unwrap()),
        )
        .unwrap();
        let id = UnitMap::identity(100);
        let err = series.curves[0].unit.sup_distance(&id).unwrap();
        assert!(err <= 2.0 / n as f64, "sup error {err}");
    }

    #[test]
    fn permutation_invariant() {
        let a = empirical_quantiles(&table(vec![vec![3.0, 1.0, 2.0, 5.0]]), 100, None).unwrap();
        let b = empirical_quantiles(&table(vec![vec![5.0, 2.0, 1.0, 3.0]]), 100, None).unwrap();
        assert_eq!(a.curves, b.curves);
    }

    #[test]
    fn affine_equivariant_unit_map() {
        // Affine rescaling of the data moves the default domain but leaves
        // the unit map unchanged.
        let base = vec![1.0, 2.0, 4.0, 8.0];
        let scaled: Vec<f64> = base.iter().map(|v| 3.0 * v - 5.0).collect();
        let a = empirical_quantiles(&table(vec![base]), 50, None).unwrap();
        let b = empirical_quantiles(&table(vec![scaled]), 50, None).unwrap();
        assert!(a.curves[0].unit.sup_distance(&b.curves[0].unit).unwrap() <= 1e-12);
        assert_abs_diff_eq!(b.domain.lo, 3.0 * a.domain.lo - 5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b.domain.hi, 3.0 * a.domain.hi - 5.0, epsilon = 1e-9);
    }

    #[test]
    fn constant_sample_repaired_point_mass() {
        let series = empirical_quantiles(&table(vec![vec![2.0, 2.0, 2.0]]), 10, None).unwrap();
        assert_eq!(series.repaired, vec!["p0".to_string()]);
        // Degenerate range gets the absolute pad; the mass stays at 2.
        assert_abs_diff_eq!(series.domain.lo, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(series.domain.hi, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(series.curves[0].evaluate(0.5).unwrap(), 2.0, epsilon = 1e-6);
    }

    #[test]
    fn shared_domain_across_periods() {
        let series =
            empirical_quantiles(&table(vec![vec![0.0, 1.0], vec![10.0, 11.0]]), 20, None)
                .unwrap();
        assert_eq!(series.curves[0].domain, series.curves[1].domain);
        assert_eq!(series.curves[0].domain, series.domain);
        // The second period's mass sits near the top of the shared domain.
        assert!(series.curves[1].evaluate(0.5).unwrap() > 10.0);
    }

    #[test]
    fn samples_outside_given_domain_rejected() {
        let err = empirical_quantiles(
            &table(vec![vec![0.0, 2.0]]),
            10,
            Some(Interval::new(0.0, 1.0).unwrap()),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn single_value_period_rejected() {
        let err = empirical_quantiles(&table(vec![vec![1.0]]), 10, None).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn csv_load_drops_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "period,value").unwrap();
        writeln!(f, "2001,1.5").unwrap();
        writeln!(f, "2001,oops").unwrap();
        writeln!(f, "2002,NaN").unwrap();
        writeln!(f, "2002,2.5").unwrap();
        writeln!(f, "2000,0.5").unwrap();
        drop(f);
        let table: SampleTable<f64> = load_samples(&path, &IngestConfig::default()).unwrap();
        assert_eq!(table.periods, vec!["2000", "2001", "2002"]);
        assert_eq!(table.samples, vec![vec![0.5], vec![1.5], vec![2.5]]);
        assert_eq!(table.n_dropped, 2);
    }

    #[test]
    fn csv_missing_column_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "year,value\n2001,1.0\n").unwrap();
        let err = load_samples::<f64>(&path, &IngestConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }
}
