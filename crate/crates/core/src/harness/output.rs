//! Report serialization.
//!
//! JSON documents have the shape
//! `{meta, paths: {name: [values]}, grid: [times], diagnostics: {name: value}}`;
//! wide CSV files have one `time` column and one column per path.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::decomposition::DecompositionReport;
use crate::error::{Error, Result};
use crate::paths::CumulativePath;

#[derive(Debug, Serialize)]
pub struct PathDocument<'a> {
    pub meta: Map<String, Value>,
    pub paths: BTreeMap<&'a str, &'a [f64]>,
    pub grid: &'a [f64],
    pub diagnostics: &'a BTreeMap<String, f64>,
}

pub fn report_document<'a>(report: &'a DecompositionReport, meta: Map<String, Value>) -> PathDocument<'a> {
    let named = report.named_paths();
    PathDocument {
        meta,
        grid: named[0].1.grid().times(),
        paths: named.iter().map(|(name, p)| (*name, p.values())).collect(),
        diagnostics: &report.diagnostics,
    }
}

pub fn to_json(doc: &impl Serialize) -> String {
    let mut text = serde_json::to_string_pretty(doc).expect("report serializes");
    text.push('\n');
    text
}

/// `time,<name>,...` with one row per grid point.
pub fn wide_csv(columns: &[(&str, &CumulativePath)]) -> String {
    let mut out = String::from("time");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let times = columns[0].1.grid().times();
    for (k, t) in times.iter().enumerate() {
        out.push_str(&t.to_string());
        for (_, p) in columns {
            out.push(',');
            out.push_str(&p.values()[k].to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<PathBuf> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::WeightRule;
    use crate::market::{simulate_gbm, GbmSpec};

    #[test]
    fn json_has_expected_shape() {
        let m = simulate_gbm(&GbmSpec::diagonal(vec![1.0, 2.0, 3.0], 0.04, 1.0, 8, 1)).unwrap();
        let report = WeightRule::Generated("entropy".parse().unwrap()).decompose(&m).unwrap();
        let mut meta = Map::new();
        meta.insert("command".into(), "decompose".into());
        let value: Value = serde_json::from_str(&to_json(&report_document(&report, meta))).unwrap();
        assert_eq!(value["grid"].as_array().unwrap().len(), 9);
        let paths = value["paths"].as_object().unwrap();
        for name in ["rel", "structural", "trading", "drift", "generator_log_change"] {
            assert_eq!(paths[name].as_array().unwrap().len(), 9, "{name}");
        }
        assert!(value["diagnostics"]["identity_residual"].is_number());
        assert_eq!(value["meta"]["command"], "decompose");
    }

    #[test]
    fn wide_csv_values_round_trip() {
        let m = simulate_gbm(&GbmSpec::diagonal(vec![1.0, 2.0], 0.04, 1.0, 5, 2)).unwrap();
        let report = WeightRule::Generated("geom".parse().unwrap()).decompose(&m).unwrap();
        let text = wide_csv(&report.named_paths());
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "time,rel,structural,trading,drift,generator_log_change");
        for (k, line) in lines.enumerate() {
            let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            assert_eq!(cells[0], m.grid().times()[k]);
            assert_eq!(cells[3], report.trading.values()[k]);
        }
    }
}
