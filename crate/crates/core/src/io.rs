//! File formats: unit maps as CSV or JSON, map chains and curve series as
//! a JSON header plus CSV matrix, fit results as JSON with CSV side files.
//!
//! All floating-point text is written with the shortest representation
//! that parses back to the same double, so every format round-trips
//! bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{MapSeries, SeriesMeta, SystemKind};
use crate::error::{Error, Result};
use crate::estimation::{FitFlags, FitResult};
use crate::ingest::EmpiricalSeries;
use crate::rng::Seed;
use crate::transport::{Interval, QuantileCurve, UnitMap};

type Map64 = UnitMap<f64>;

fn parse_f64(field: &str, context: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Input(format!("bad number '{field}' in {context}")))
}

/// Writes a unit map as `x,value` rows, `x = k/M`.
pub fn write_unit_map_csv(path: &Path, map: &Map64) -> Result<()> {
    let m = map.grid_m();
    let mut out = String::with_capacity((m + 1) * 24);
    out.push_str("x,value\n");
    for (k, &v) in map.values().iter().enumerate() {
        writeln!(out, "{},{}", k as f64 / m as f64, v).expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_unit_map_csv(path: &Path) -> Result<Map64> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("x,value") => {}
        other => {
            return Err(Error::Input(format!(
                "expected 'x,value' header in {path:?}, got {other:?}"
            )))
        }
    }
    let mut values = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (_, v) = line
            .split_once(',')
            .ok_or_else(|| Error::Input(format!("malformed row '{line}' in {path:?}")))?;
        values.push(parse_f64(v, "unit map CSV")?);
    }
    UnitMap::new(values)
}

#[derive(Debug, Serialize, Deserialize)]
struct UnitMapJson {
    m: usize,
    values: Vec<f64>,
}

pub fn write_unit_map_json(path: &Path, map: &Map64) -> Result<()> {
    let doc = UnitMapJson { m: map.grid_m(), values: map.values().to_vec() };
    fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

pub fn read_unit_map_json(path: &Path) -> Result<Map64> {
    let doc: UnitMapJson = serde_json::from_str(&fs::read_to_string(path)?)?;
    if doc.values.len() != doc.m + 1 {
        return Err(Error::Input(format!(
            "declared m = {} but {} values in {path:?}",
            doc.m,
            doc.values.len()
        )));
    }
    UnitMap::new(doc.values)
}

/// Reads a unit map from either format, keyed on the file extension.
pub fn read_unit_map(path: &Path) -> Result<Map64> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_unit_map_json(path),
        _ => read_unit_map_csv(path),
    }
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut name = stem.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    stem.with_file_name(name)
}

fn write_matrix_csv(path: &Path, rows: impl Iterator<Item = Vec<f64>>, m: usize) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (0..=m).map(|k| format!("v{k}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            write!(out, "{v}").expect("string write");
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn read_matrix_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|f| parse_f64(f, "matrix CSV"))
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Serialize, Deserialize)]
struct MapSeriesHeader {
    m: usize,
    n: usize,
    burn_in: usize,
    seed: Option<Seed>,
    alpha: Option<f64>,
    system: Option<SystemKind>,
    /// Name of the CSV matrix file next to this header.
    csv: String,
}

/// Writes `<stem>.json` (header) and `<stem>.csv` (one map per row).
pub fn write_map_series(stem: &Path, series: &MapSeries<f64>) -> Result<()> {
    let csv_path = with_suffix(stem, ".csv");
    let header = MapSeriesHeader {
        m: series.grid_m(),
        n: series.len(),
        burn_in: series.meta.burn_in,
        seed: series.meta.seed,
        alpha: series.meta.alpha,
        system: series.meta.system,
        csv: csv_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    fs::write(with_suffix(stem, ".json"), serde_json::to_string_pretty(&header)?)?;
    write_matrix_csv(
        &csv_path,
        series.maps.iter().map(|map| map.values().to_vec()),
        series.grid_m(),
    )
}

pub fn read_map_series(stem: &Path) -> Result<MapSeries<f64>> {
    let json_path = with_suffix(stem, ".json");
    let header: MapSeriesHeader = serde_json::from_str(&fs::read_to_string(&json_path)?)?;
    let csv_path = json_path.with_file_name(&header.csv);
    let rows = read_matrix_csv(&csv_path)?;
    if rows.len() != header.n {
        return Err(Error::Input(format!(
            "header declares {} maps, CSV has {}",
            header.n,
            rows.len()
        )));
    }
    let maps: Vec<Map64> = rows.into_iter().map(UnitMap::new).collect::<Result<_>>()?;
    let series = MapSeries::new(
        maps,
        SeriesMeta {
            burn_in: header.burn_in,
            seed: header.seed,
            alpha: header.alpha,
            system: header.system,
        },
    )?;
    if series.grid_m() != header.m {
        return Err(Error::Input(format!(
            "header declares grid {} but rows have {}",
            header.m,
            series.grid_m()
        )));
    }
    Ok(series)
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveSeriesHeader {
    m: usize,
    n: usize,
    domain: Interval<f64>,
    periods: Vec<String>,
    repaired: Vec<String>,
    csv: String,
}

/// Writes a curve series in the map-series container layout with a periods
/// index in the header.
pub fn write_empirical_series(stem: &Path, series: &EmpiricalSeries<f64>) -> Result<()> {
    let first = series
        .curves
        .first()
        .ok_or_else(|| Error::Input("empty curve series".into()))?;
    let csv_path = with_suffix(stem, ".csv");
    let header = CurveSeriesHeader {
        m: first.unit.grid_m(),
        n: series.curves.len(),
        domain: series.domain,
        periods: series.periods.clone(),
        repaired: series.repaired.clone(),
        csv: csv_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    fs::write(with_suffix(stem, ".json"), serde_json::to_string_pretty(&header)?)?;
    write_matrix_csv(
        &csv_path,
        series.curves.iter().map(|c| c.unit.values().to_vec()),
        header.m,
    )
}

pub fn read_empirical_series(stem: &Path) -> Result<EmpiricalSeries<f64>> {
    let json_path = with_suffix(stem, ".json");
    let header: CurveSeriesHeader = serde_json::from_str(&fs::read_to_string(&json_path)?)?;
    let rows = read_matrix_csv(&json_path.with_file_name(&header.csv))?;
    if rows.len() != header.n || header.periods.len() != header.n {
        return Err(Error::Input(format!(
            "curve series header/CSV length mismatch: n = {}, {} periods, {} rows",
            header.n,
            header.periods.len(),
            rows.len()
        )));
    }
    let curves: Vec<QuantileCurve<f64>> = rows
        .into_iter()
        .map(|row| Ok(QuantileCurve::new(header.domain, UnitMap::new(row)?)))
        .collect::<Result<_>>()?;
    Ok(EmpiricalSeries {
        periods: header.periods,
        curves,
        domain: header.domain,
        repaired: header.repaired,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct FitResultHeader {
    alpha_hat: f64,
    n_used: usize,
    derivative_at_opt: Option<f64>,
    system: SystemKind,
    flags: FitFlags,
    s_hat_csv: String,
    profile_csv: String,
}

/// Writes `<stem>.json` plus the fitted map (`<stem>_s_hat.csv`) and the
/// objective profile (`<stem>_profile.csv`, rows `alpha,objective`).
pub fn write_fit_result(stem: &Path, result: &FitResult<f64>) -> Result<()> {
    let s_hat_path = with_suffix(stem, "_s_hat.csv");
    let profile_path = with_suffix(stem, "_profile.csv");
    let header = FitResultHeader {
        alpha_hat: result.alpha_hat,
        n_used: result.n_used,
        derivative_at_opt: result.derivative_at_opt,
        system: result.system,
        flags: result.flags,
        s_hat_csv: s_hat_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        profile_csv: profile_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    fs::write(with_suffix(stem, ".json"), serde_json::to_string_pretty(&header)?)?;
    write_unit_map_csv(&s_hat_path, &result.s_hat)?;
    let mut out = String::from("alpha,objective\n");
    for &(a, v) in &result.objective_profile {
        writeln!(out, "{a},{v}").expect("string write");
    }
    fs::write(profile_path, out)?;
    Ok(())
}

/// Generic JSON helpers for report types.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{fit, FitConfig};
    use crate::noise::{zeta_map, NoiseSpec};

    fn sample_map() -> Map64 {
        // Irrational-valued samples exercise shortest-repr round-tripping.
        zeta_map(-3, 57)
    }

    #[test]
    fn unit_map_csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.csv");
        let map = sample_map();
        write_unit_map_csv(&path, &map).unwrap();
        let back = read_unit_map_csv(&path).unwrap();
        assert_eq!(map, back);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x,value\n0,0\n"));
    }

    #[test]
    fn unit_map_json_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.json");
        let map = sample_map();
        write_unit_map_json(&path, &map).unwrap();
        assert_eq!(read_unit_map_json(&path).unwrap(), map);
        assert_eq!(read_unit_map(&path).unwrap(), map);
    }

    #[test]
    fn unit_map_json_length_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, r#"{"m": 3, "values": [0.0, 0.5, 1.0]}"#).unwrap();
        assert!(read_unit_map_json(&path).is_err());
    }

    #[test]
    fn map_series_round_trip() {
        use crate::dynamics::{simulate_chain, ChainConfig, ModelParams};
        let params = ModelParams {
            alpha: 0.4,
            s: zeta_map::<f64>(-2, 80),
            system: SystemKind::PerturbThenMap,
        };
        let cfg = ChainConfig {
            n_steps: 12,
            burn_in: 4,
            init: UnitMap::identity(80),
            seed: Seed(3),
            stream: 2,
        };
        let series = simulate_chain(&params, &cfg, &NoiseSpec::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("chain");
        write_map_series(&stem, &series).unwrap();
        let back = read_map_series(&stem).unwrap();
        assert_eq!(series, back);
    }

    #[test]
    fn empirical_series_round_trip() {
        use crate::ingest::{empirical_quantiles, SampleTable};
        let table = SampleTable {
            periods: vec!["a".into(), "b".into()],
            samples: vec![vec![0.0, 1.0, 2.0], vec![1.0, 3.0, 3.0]],
            n_dropped: 0,
        };
        let series = empirical_quantiles(&table, 40, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("curves");
        write_empirical_series(&stem, &series).unwrap();
        let back = read_empirical_series(&stem).unwrap();
        assert_eq!(series, back);
    }

    #[test]
    fn fit_result_files_exist_and_parse() {
        use crate::dynamics::{MapSeries, SeriesMeta};
        let maps = vec![
            zeta_map::<f64>(2, 60),
            zeta_map::<f64>(-2, 60),
            zeta_map::<f64>(3, 60),
            zeta_map::<f64>(-1, 60),
        ];
        let series = MapSeries::new(maps, SeriesMeta::default()).unwrap();
        let result = fit(
            &series,
            &FitConfig { alpha_grid_step: 0.2, ..FitConfig::default() },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("fit");
        write_fit_result(&stem, &result).unwrap();

        let header: serde_json::Value = read_json(&with_suffix(&stem, ".json")).unwrap();
        assert_eq!(header["alpha_hat"].as_f64().unwrap(), result.alpha_hat);
        let s_hat = read_unit_map_csv(&with_suffix(&stem, "_s_hat.csv")).unwrap();
        assert_eq!(s_hat, result.s_hat);
        let profile = fs::read_to_string(with_suffix(&stem, "_profile.csv")).unwrap();
        assert!(profile.starts_with("alpha,objective\n"));
        assert_eq!(profile.lines().count(), result.objective_profile.len() + 1);
    }
}
