//! CSV ingestion of performance tables.
//!
//! Format: header row, first column `id`, remaining columns numeric criterion
//! performances (`.` decimal separator). An optional JSON sidecar declares per
//! criterion direction, sub-interval count, and scale overrides. Cost criteria
//! are negated so that larger is always better inside the engine.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Criterion, PerformanceTable};

pub const DEFAULT_SUBINTERVALS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Gain,
    Cost,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CriterionConfig {
    pub name: String,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default)]
    pub subintervals: Option<usize>,
    /// Scale bounds in raw units (before cost negation).
    #[serde(default)]
    pub scale_min: Option<f64>,
    #[serde(default)]
    pub scale_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    #[serde(default)]
    pub criteria: Vec<CriterionConfig>,
    #[serde(default = "default_subintervals")]
    pub default_subintervals: usize,
}

fn default_subintervals() -> usize {
    DEFAULT_SUBINTERVALS
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            criteria: Vec::new(),
            default_subintervals: DEFAULT_SUBINTERVALS,
        }
    }
}

impl DatasetConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    fn for_column(&self, name: &str) -> Option<&CriterionConfig> {
        self.criteria.iter().find(|c| c.name == name)
    }
}

pub fn load_csv(path: impl AsRef<Path>, config: &DatasetConfig) -> Result<PerformanceTable> {
    read_csv(std::fs::File::open(path)?, config)
}

pub fn read_csv<R: Read>(reader: R, config: &DatasetConfig) -> Result<PerformanceTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::InvalidTable(
            "CSV needs an `id` column and at least one criterion column".into(),
        ));
    }
    if !headers[0].eq_ignore_ascii_case("id") {
        return Err(Error::InvalidTable(format!(
            "first column must be `id`, found `{}`",
            &headers[0]
        )));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    for c in &config.criteria {
        if !names.contains(&c.name) {
            return Err(Error::InvalidTable(format!(
                "config names unknown criterion `{}`",
                c.name
            )));
        }
    }

    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(Error::InvalidTable(format!(
                "row {}: expected {} fields",
                line + 2,
                headers.len()
            )));
        }
        ids.push(rec[0].to_owned());
        let row = rec
            .iter()
            .skip(1)
            .zip(&names)
            .map(|(field, name)| {
                field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Error::InvalidTable(format!(
                        "row {}: `{}` is not a number (column `{}`)",
                        line + 2,
                        field,
                        name
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    build_table(ids, &names, rows, config)
}

/// Applies direction and scale rules to raw rows.
pub fn build_table(
    ids: Vec<String>,
    names: &[String],
    mut rows: Vec<Vec<f64>>,
    config: &DatasetConfig,
) -> Result<PerformanceTable> {
    if rows.is_empty() {
        return Err(Error::InvalidTable("no alternatives".into()));
    }
    let mut criteria = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let cc = config.for_column(name);
        let direction = cc.map(|c| c.direction).unwrap_or_default();
        let sign = if direction == Direction::Cost { -1.0 } else { 1.0 };
        for row in rows.iter_mut() {
            row[j] *= sign;
        }
        let observed_min = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
        let observed_max = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
        // raw-unit overrides flip under negation
        let (o_lo, o_hi) = match direction {
            Direction::Gain => (cc.and_then(|c| c.scale_min), cc.and_then(|c| c.scale_max)),
            Direction::Cost => (
                cc.and_then(|c| c.scale_max).map(|v| -v),
                cc.and_then(|c| c.scale_min).map(|v| -v),
            ),
        };
        let lo = o_lo.unwrap_or(observed_min);
        let hi = o_hi.unwrap_or(observed_max);
        let subintervals = cc.and_then(|c| c.subintervals).unwrap_or(config.default_subintervals);
        criteria.push(Criterion::new(name.clone(), lo, hi, subintervals)?);
    }
    PerformanceTable::new(ids, criteria, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "id,price,quality\ncar1, 20000, 3\ncar2,15000,4.5\ncar3,30000,5\n";

    #[test]
    fn reads_gain_table_with_observed_scales() {
        let t = read_csv(CSV.as_bytes(), &DatasetConfig::default()).unwrap();
        assert_eq!(t.ids(), &["car1", "car2", "car3"]);
        assert_eq!(t.criteria()[1].scale_min, 3.0);
        assert_eq!(t.criteria()[1].scale_max, 5.0);
        assert_eq!(t.dimension(), 4);
    }

    #[test]
    fn cost_columns_are_negated() {
        let cfg: DatasetConfig = serde_json::from_str(
            r#"{"criteria":[{"name":"price","direction":"cost","subintervals":3}],"default_subintervals":1}"#,
        )
        .unwrap();
        let t = read_csv(CSV.as_bytes(), &cfg).unwrap();
        assert_eq!(t.performance(1, 0), -15000.0);
        assert_eq!(t.criteria()[0].scale_max, -15000.0);
        assert_eq!(t.criteria()[0].scale_min, -30000.0);
        assert_eq!(t.dimension(), 4);
    }

    #[test]
    fn scale_override_in_raw_units() {
        let cfg: DatasetConfig = serde_json::from_str(
            r#"{"criteria":[{"name":"price","direction":"cost","scale_min":0,"scale_max":40000}]}"#,
        )
        .unwrap();
        let t = read_csv(CSV.as_bytes(), &cfg).unwrap();
        assert_eq!(t.criteria()[0].scale_min, -40000.0);
        assert_eq!(t.criteria()[0].scale_max, 0.0);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(read_csv("name,a\nx,1\ny,2\n".as_bytes(), &DatasetConfig::default()).is_err());
        assert!(read_csv("id,a\nx,1\ny,abc\n".as_bytes(), &DatasetConfig::default()).is_err());
        // constant column has no usable scale unless overridden
        assert!(read_csv("id,a\nx,1\ny,1\n".as_bytes(), &DatasetConfig::default()).is_err());
        let cfg: DatasetConfig = serde_json::from_str(r#"{"criteria":[{"name":"zzz"}]}"#).unwrap();
        assert!(read_csv(CSV.as_bytes(), &cfg).is_err());
    }
}
