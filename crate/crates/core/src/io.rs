//! File formats: series, matrix and indicator CSVs plus the flat
//! `key = value` project config.
//!
//! CSVs are comma separated with a mandatory header row. Canonical output
//! writes every float with 9 decimals, so `save(load(save(x)))` is
//! byte-identical to `save(x)`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::ahp::PairwiseMatrix;
use crate::allocation::{Direction, IndicatorTable};
use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Pairs whose product deviates from 1 by more than this are rejected.
pub const RECIPROCITY_REPAIR_TOL: f64 = 1e-6;

pub fn format_float(v: f64) -> String {
    format!("{v:.9}")
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Accepts plain decimals and `p/q` fractions.
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let (num, den): (f64, f64) = (num.trim().parse().ok()?, den.trim().parse().ok()?);
        return (den != 0.0).then(|| num / den);
    }
    s.parse().ok()
}

// ---------------------------------------------------------------------------
// series

/// `period,value` rows in file order; every value must be positive.
pub fn parse_series(text: &str) -> Result<TimeSeries> {
    let mut rdr = reader(text);
    let mut values = Vec::new();
    let mut periods = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields (period,value), got {}", rec.len()),
            });
        }
        let value = parse_number(&rec[1]).ok_or_else(|| Error::Parse {
            line,
            message: format!("'{}' is not a number", &rec[1]),
        })?;
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::NonPositiveValue { line, value });
        }
        periods.push(rec[0].to_string());
        values.push(value);
    }
    TimeSeries::with_periods(values, periods)
}

pub fn load_series(path: impl AsRef<Path>) -> Result<TimeSeries> {
    parse_series(&read(path.as_ref())?)
}

pub fn save_series(series: &TimeSeries) -> String {
    let mut out = String::from("period,value\n");
    for (i, v) in series.values.iter().enumerate() {
        out.push_str(&format!("{},{}\n", series.period_label(i), format_float(*v)));
    }
    out
}

// ---------------------------------------------------------------------------
// matrix

/// An entry rewritten to restore exact reciprocity (1-based position).
#[derive(Debug, Clone, PartialEq)]
pub struct Repair {
    pub row: usize,
    pub col: usize,
    pub from: f64,
    pub to: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedMatrix {
    pub matrix: PairwiseMatrix,
    pub repairs: Vec<Repair>,
}

/// Label header row, then one label-first row per criterion.
///
/// Reciprocal pairs within [`RECIPROCITY_REPAIR_TOL`] are snapped to exact
/// reciprocals, keeping whichever side of the pair is ≥ 1.
pub fn parse_matrix(text: &str) -> Result<LoadedMatrix> {
    let mut rdr = reader(text);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let cols = labels.len();
    let mut entries = Vec::new();
    let mut row_labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != cols + 1 {
            return Err(Error::NotSquare {
                rows: entries.len() + 1,
                cols: rec.len().saturating_sub(1),
            });
        }
        row_labels.push(rec[0].to_string());
        let row = rec
            .iter()
            .skip(1)
            .map(|cell| {
                parse_number(cell).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("'{cell}' is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        entries.push(row);
    }
    if entries.len() != cols {
        return Err(Error::NotSquare {
            rows: entries.len(),
            cols,
        });
    }
    if row_labels != labels {
        return Err(Error::LabelMismatch(format!(
            "row labels {row_labels:?} differ from column labels {labels:?}"
        )));
    }

    let mut repairs = Vec::new();
    for i in 0..cols {
        for j in i + 1..cols {
            let (upper, lower) = (entries[i][j], entries[j][i]);
            if !(upper > 0.0 && lower > 0.0) || (upper * lower - 1.0).abs() > RECIPROCITY_REPAIR_TOL {
                return Err(Error::ReciprocityViolation {
                    i: i + 1,
                    j: j + 1,
                    upper,
                    lower,
                });
            }
            let (keep, fix) = if upper >= 1.0 { ((i, j), (j, i)) } else { ((j, i), (i, j)) };
            let exact = 1.0 / entries[keep.0][keep.1];
            let current = entries[fix.0][fix.1];
            if current != exact {
                log::warn!(
                    "matrix entry ({}, {}) repaired from {current} to {exact}",
                    fix.0 + 1,
                    fix.1 + 1
                );
                repairs.push(Repair {
                    row: fix.0 + 1,
                    col: fix.1 + 1,
                    from: current,
                    to: exact,
                });
                entries[fix.0][fix.1] = exact;
            }
        }
    }
    Ok(LoadedMatrix {
        matrix: PairwiseMatrix::new(labels, entries)?,
        repairs,
    })
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<LoadedMatrix> {
    parse_matrix(&read(path.as_ref())?)
}

pub fn save_matrix(matrix: &PairwiseMatrix) -> String {
    let mut out = String::from("criterion");
    for l in matrix.labels() {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for (label, row) in matrix.labels().iter().zip(matrix.entries()) {
        out.push_str(label);
        for v in row {
            out.push(',');
            out.push_str(&format_float(*v));
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// indicators

/// Directions for `criteria`, defaulting to benefit. Overrides naming an
/// unknown criterion are rejected.
pub fn resolve_directions(
    criteria: &[String],
    overrides: &BTreeMap<String, Direction>,
) -> Result<BTreeMap<String, Direction>> {
    if let Some(k) = overrides.keys().find(|k| !criteria.contains(k)) {
        return Err(Error::UnknownCriterion(k.clone()));
    }
    Ok(criteria
        .iter()
        .map(|c| (c.clone(), overrides.get(c).copied().unwrap_or_default()))
        .collect())
}

/// Header `entity,<criterion>...`; `directions` must name every criterion
/// exactly once.
pub fn parse_indicators(
    text: &str,
    directions: &BTreeMap<String, Direction>,
) -> Result<IndicatorTable> {
    let mut rdr = reader(text);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let criteria: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if let Some(k) = directions.keys().find(|k| !criteria.contains(k)) {
        return Err(Error::UnknownCriterion(k.clone()));
    }
    let dirs = criteria
        .iter()
        .map(|c| {
            directions
                .get(c)
                .copied()
                .ok_or_else(|| Error::UnknownCriterion(c.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut entities = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let entity = rec.get(0).unwrap_or_default().to_string();
        let mut row = Vec::with_capacity(criteria.len());
        for (c, criterion) in criteria.iter().enumerate() {
            let cell = rec.get(c + 1).unwrap_or("");
            if cell.is_empty() {
                return Err(Error::MissingCell {
                    entity,
                    criterion: criterion.clone(),
                });
            }
            row.push(parse_number(cell).ok_or_else(|| Error::Parse {
                line,
                message: format!("'{cell}' is not a number"),
            })?);
        }
        if rec.len() > criteria.len() + 1 {
            return Err(Error::Parse {
                line,
                message: format!("{} fields for {} criteria", rec.len() - 1, criteria.len()),
            });
        }
        entities.push(entity);
        values.push(row);
    }
    IndicatorTable::new(entities, criteria, dirs, values)
}

pub fn load_indicators(
    path: impl AsRef<Path>,
    directions: &BTreeMap<String, Direction>,
) -> Result<IndicatorTable> {
    parse_indicators(&read(path.as_ref())?, directions)
}

/// Criterion names from an indicators file header.
pub fn indicator_criteria(text: &str) -> Result<Vec<String>> {
    let mut rdr = reader(text);
    let header = rdr.headers().map_err(csv_err)?;
    Ok(header.iter().skip(1).map(str::to_string).collect())
}

pub fn save_indicators(table: &IndicatorTable) -> String {
    let mut out = String::from("entity");
    for c in &table.criteria {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (e, row) in table.entities.iter().zip(&table.values) {
        out.push_str(e);
        for v in row {
            out.push(',');
            out.push_str(&format_float(*v));
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// project config

/// Run configuration from a flat `key = value` file with dotted keys.
///
/// ```text
/// series = series.csv
/// matrix = matrix.csv
/// indicators = indicators.csv
/// indicators.prenormalized = false
/// direction.unemployment = cost
/// gamma.land_area = -0.000002
/// forecast.eps = 1e-4
/// simulate.inflows = 100000, 80000, 60000
/// max_share.Germany = 0.2
/// ```
///
/// Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProjectConfig {
    pub base_dir: PathBuf,
    pub series: Option<String>,
    pub matrix: Option<String>,
    pub indicators: Option<String>,
    pub prenormalized: bool,
    pub directions: BTreeMap<String, Direction>,
    pub gamma: BTreeMap<String, f64>,
    pub forecast_eps: Option<f64>,
    pub forecast_horizon: Option<usize>,
    pub ahp_tol: Option<f64>,
    pub ahp_max_iter: Option<usize>,
    pub inflows: Vec<f64>,
    pub max_share: BTreeMap<String, f64>,
}

impl ProjectConfig {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg = ProjectConfig {
            base_dir: base_dir.into(),
            ..Default::default()
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: String| Error::Parse {
                line: idx as u64 + 1,
                message: m,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| parse_number(v).ok_or_else(|| err(format!("'{v}' is not a number")));
            let int = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| err(format!("'{v}' is not a non-negative integer")))
            };
            match key {
                "series" => cfg.series = Some(value.to_string()),
                "matrix" => cfg.matrix = Some(value.to_string()),
                "indicators" => cfg.indicators = Some(value.to_string()),
                "indicators.prenormalized" => {
                    cfg.prenormalized = value
                        .parse()
                        .map_err(|_| err(format!("'{value}' is not true/false")))?
                }
                "forecast.eps" => cfg.forecast_eps = Some(num(value)?),
                "forecast.horizon" => cfg.forecast_horizon = Some(int(value)?),
                "ahp.tol" => cfg.ahp_tol = Some(num(value)?),
                "ahp.max_iter" => cfg.ahp_max_iter = Some(int(value)?),
                "simulate.inflows" => {
                    cfg.inflows = value
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(num)
                        .collect::<Result<_>>()?
                }
                _ => {
                    if let Some(c) = key.strip_prefix("direction.") {
                        cfg.directions.insert(c.to_string(), value.parse()?);
                    } else if let Some(c) = key.strip_prefix("gamma.") {
                        cfg.gamma.insert(c.to_string(), num(value)?);
                    } else if let Some(e) = key.strip_prefix("max_share.") {
                        cfg.max_share.insert(e.to_string(), num(value)?);
                    } else {
                        return Err(err(format!("unknown key '{key}'")));
                    }
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&read(path)?, base)
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Every referenced file must exist.
    pub fn check_files(&self) -> Result<()> {
        for p in [&self.series, &self.matrix, &self.indicators].into_iter().flatten() {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(Error::Io {
                    path: full.display().to_string(),
                    message: "file not found".into(),
                });
            }
        }
        Ok(())
    }

    /// Sorted `key = value` lines; floats use their shortest exact form.
    pub fn to_canonical_string(&self) -> String {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        if let Some(s) = &self.series {
            kv.insert("series".into(), s.clone());
        }
        if let Some(s) = &self.matrix {
            kv.insert("matrix".into(), s.clone());
        }
        if let Some(s) = &self.indicators {
            kv.insert("indicators".into(), s.clone());
        }
        if self.prenormalized {
            kv.insert("indicators.prenormalized".into(), "true".into());
        }
        for (c, d) in &self.directions {
            let d = match d {
                Direction::Benefit => "benefit",
                Direction::Cost => "cost",
            };
            kv.insert(format!("direction.{c}"), d.into());
        }
        for (c, g) in &self.gamma {
            kv.insert(format!("gamma.{c}"), g.to_string());
        }
        for (e, m) in &self.max_share {
            kv.insert(format!("max_share.{e}"), m.to_string());
        }
        if let Some(v) = self.forecast_eps {
            kv.insert("forecast.eps".into(), v.to_string());
        }
        if let Some(v) = self.forecast_horizon {
            kv.insert("forecast.horizon".into(), v.to_string());
        }
        if let Some(v) = self.ahp_tol {
            kv.insert("ahp.tol".into(), v.to_string());
        }
        if let Some(v) = self.ahp_max_iter {
            kv.insert("ahp.max_iter".into(), v.to_string());
        }
        if !self.inflows.is_empty() {
            let list: Vec<String> = self.inflows.iter().map(f64::to_string).collect();
            kv.insert("simulate.inflows".into(), list.join(", "));
        }
        kv.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const REFERENCE_MATRIX: &str = "\
criterion,land,gdp,unemployment,welfare
land,1,1/2,1/4,2
gdp,2,1,1/2,3
unemployment,4,2,1,5
welfare,1/2,1/3,1/5,1
";

    #[test]
    fn series_in_file_order() {
        let s = parse_series("period,value\n2015-01,10\n2015-02,30\n2015-03,20\n").unwrap();
        assert_eq!(s.values, vec![10.0, 30.0, 20.0]);
        assert_eq!(s.t0_label(), "2015-01");
    }

    #[test]
    fn negative_series_value_has_line() {
        let err = parse_series("period,value\na,1\nb,-5\n").unwrap_err();
        assert_eq!(err, Error::NonPositiveValue { line: 3, value: -5.0 });
    }

    #[test]
    fn garbage_series_value_has_line() {
        assert!(matches!(
            parse_series("period,value\na,1\nb,xx\n"),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn three_rows_load_but_do_not_fit() {
        let s = parse_series("period,value\na,1\nb,2\nc,4\n").unwrap();
        assert_eq!(s.len(), 3);
        assert!(matches!(
            crate::verhulst::fit(&s),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn reference_matrix_loads_consistent() {
        let m = parse_matrix(REFERENCE_MATRIX).unwrap();
        assert!(m.repairs.is_empty());
        assert_eq!(m.matrix.labels()[2], "unemployment");
        assert!(crate::ahp::consistency(&m.matrix).unwrap().consistent);
    }

    #[test]
    fn far_from_reciprocal_is_rejected() {
        let text = "c,a,b\na,1,0.34\nb,3,1\n";
        assert!(matches!(
            parse_matrix(text),
            Err(Error::ReciprocityViolation { i: 1, j: 2, .. })
        ));
    }

    #[test]
    fn near_reciprocal_is_repaired() {
        let text = "c,a,b\na,1,0.3333333\nb,3,1\n";
        let m = parse_matrix(text).unwrap();
        assert_eq!(m.matrix.get(0, 1), 1.0 / 3.0);
        assert_eq!(m.repairs.len(), 1);
        assert_eq!(m.repairs[0].row, 1);
    }

    #[test]
    fn non_square_matrix() {
        let text = "c,a,b,c,d\na,1,1,1,1\nb,1,1,1,1\nc,1,1,1,1\n";
        assert!(matches!(parse_matrix(text), Err(Error::NotSquare { rows: 3, cols: 4 })));
    }

    fn dirs(pairs: &[(&str, Direction)]) -> BTreeMap<String, Direction> {
        pairs.iter().map(|(k, d)| (k.to_string(), *d)).collect()
    }

    #[test]
    fn country_rows_load_verbatim() {
        let text = "\
entity,gdp,land,unemployment,welfare
Ireland,0.491458621,0.061869,0.41602317,0.928571429
Estonia,0.548413195,0.006428,0.26447876,0.285714286
Austria,0.46310015,0.117199,0.19208494,0.821428571
";
        let d = dirs(&[
            ("gdp", Direction::Benefit),
            ("land", Direction::Benefit),
            ("unemployment", Direction::Benefit),
            ("welfare", Direction::Benefit),
        ]);
        let t = parse_indicators(text, &d).unwrap();
        assert_eq!(t.entities, vec!["Ireland", "Estonia", "Austria"]);
        assert_eq!(t.values[0], vec![0.491458621, 0.061869, 0.41602317, 0.928571429]);
        assert_eq!(t.values[2][0], 0.46310015);
    }

    #[test]
    fn empty_cell_and_direction_guards() {
        let d = dirs(&[("x", Direction::Benefit), ("y", Direction::Cost)]);
        let err = parse_indicators("entity,x,y\nA,1,\n", &d).unwrap_err();
        assert_eq!(
            err,
            Error::MissingCell {
                entity: "A".into(),
                criterion: "y".into()
            }
        );
        let partial = dirs(&[("x", Direction::Benefit)]);
        assert_eq!(
            parse_indicators("entity,x,y\nA,1,2\n", &partial).unwrap_err(),
            Error::UnknownCriterion("y".into())
        );
        let extra = dirs(&[("x", Direction::Benefit), ("y", Direction::Cost), ("z", Direction::Cost)]);
        assert_eq!(
            parse_indicators("entity,x,y\nA,1,2\n", &extra).unwrap_err(),
            Error::UnknownCriterion("z".into())
        );
    }

    #[test]
    fn resolve_directions_defaults_to_benefit() {
        let crit = vec!["a".to_string(), "b".to_string()];
        let r = resolve_directions(&crit, &dirs(&[("b", Direction::Cost)])).unwrap();
        assert_eq!(r["a"], Direction::Benefit);
        assert_eq!(r["b"], Direction::Cost);
        assert!(resolve_directions(&crit, &dirs(&[("q", Direction::Cost)])).is_err());
    }

    #[test]
    fn matrix_roundtrip_is_canonical() {
        let m = parse_matrix(REFERENCE_MATRIX).unwrap().matrix;
        let once = save_matrix(&m);
        let twice = save_matrix(&parse_matrix(&once).unwrap().matrix);
        assert_eq!(once, twice);
    }

    #[test]
    fn config_parses_and_canonicalises() {
        let text = "\
# sample
matrix = m.csv
indicators = i.csv
direction.unemployment = cost
gamma.land = -2e-6
simulate.inflows = 100, 200,300
max_share.Germany = 0.2
forecast.eps = 1e-4
";
        let c = ProjectConfig::parse(text, "/tmp/x").unwrap();
        assert_eq!(c.inflows, vec![100.0, 200.0, 300.0]);
        assert_eq!(c.directions["unemployment"], Direction::Cost);
        assert_eq!(c.resolve("m.csv"), PathBuf::from("/tmp/x/m.csv"));
        let canon = c.to_canonical_string();
        let again = ProjectConfig::parse(&canon, "/tmp/x").unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_canonical_string(), canon);
        let keys: Vec<&str> = canon.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(ProjectConfig::parse("bogus.key = 1", ".").is_err());
        assert!(c.check_files().is_err());
    }

    proptest! {
        #[test]
        fn series_roundtrip(v in prop::collection::vec(1e-3f64..1e9, 1..30)) {
            let s = TimeSeries::new(v);
            let once = save_series(&s);
            let twice = save_series(&parse_series(&once).unwrap());
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn indicator_roundtrip(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 2..10)) {
            let t = IndicatorTable::new(
                (0..rows.len()).map(|i| format!("e{i}")).collect(),
                vec!["a".into(), "b".into(), "c".into()],
                vec![Direction::Benefit, Direction::Cost, Direction::Benefit],
                rows,
            ).unwrap();
            let d: BTreeMap<String, Direction> = t.criteria.iter().cloned().zip(t.directions.iter().cloned()).collect();
            let once = save_indicators(&t);
            let twice = save_indicators(&parse_indicators(&once, &d).unwrap());
            prop_assert_eq!(once, twice);
        }
    }
}
