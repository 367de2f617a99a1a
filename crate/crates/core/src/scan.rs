// Copyright 2026 The shb-sim Authors
// SPDX-License-Identifier: Apache-2.0

//! Scalar fields over parameter grids.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(name: impl Into<String>, unit: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgMax {
    pub index: Vec<usize>,
    pub coords: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanMetadata {
    pub ensemble_digest: String,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub t_max: Option<f64>,
    pub observable: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub axes: Vec<Axis>,
    /// Row-major over `axes` (last axis fastest).
    pub values: Vec<f64>,
    pub argmax: ArgMax,
    pub metadata: ScanMetadata,
}

impl ScanResult {
    pub fn new(axes: Vec<Axis>, values: Vec<f64>, metadata: ScanMetadata) -> Result<Self> {
        let expected: usize = axes.iter().map(|a| a.values.len()).product();
        if axes.is_empty() || expected == 0 {
            return Err(Error::invalid(
                "scan",
                "every axis needs at least one value",
            ));
        }
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: values.len(),
            });
        }
        // first occurrence of the maximum; NaN never wins
        let mut best = 0;
        for (k, v) in values.iter().enumerate() {
            if *v > values[best] || values[best].is_nan() {
                best = k;
            }
        }
        let index = unravel(best, &axes);
        let coords = index.iter().zip(&axes).map(|(&i, a)| a.values[i]).collect();
        Ok(Self {
            argmax: ArgMax {
                index,
                coords,
                value: values[best],
            },
            axes,
            values,
            metadata,
        })
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.values.len()).collect()
    }

    /// Value at a multi-index.
    pub fn at(&self, index: &[usize]) -> f64 {
        let mut flat = 0;
        for (i, a) in index.iter().zip(&self.axes) {
            flat = flat * a.values.len() + i;
        }
        self.values[flat]
    }

    /// Long format: one column per axis, then `value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self
            .axes
            .iter()
            .map(|a| format!("{}_{}", a.name, a.unit))
            .collect();
        header.push(if self.metadata.observable.is_empty() {
            "value".into()
        } else {
            self.metadata.observable.clone()
        });
        w.write_record(&header)?;
        for (k, v) in self.values.iter().enumerate() {
            let idx = unravel(k, &self.axes);
            let mut row: Vec<String> = idx
                .iter()
                .zip(&self.axes)
                .map(|(&i, a)| format!("{:.10}", a.values[i]))
                .collect();
            row.push(format!("{v:.12e}"));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Grids, argmax and metadata (the field itself lives in the CSV).
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let doc = serde_json::json!({
            "axes": self.axes,
            "argmax": self.argmax,
            "metadata": self.metadata,
        });
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }
}

fn unravel(mut flat: usize, axes: &[Axis]) -> Vec<usize> {
    let mut idx = vec![0; axes.len()];
    for (k, a) in axes.iter().enumerate().rev() {
        let n = a.values.len();
        idx[k] = flat % n;
        flat /= n;
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> ScanResult {
        let axes = vec![
            Axis::new("omega", "ev", vec![1.9, 2.0, 2.1]),
            Axis::new("period", "fs", vec![30.0, 40.0]),
        ];
        ScanResult::new(
            axes,
            vec![1.0, 2.0, 3.0, 7.0, 5.0, 7.0],
            ScanMetadata::default(),
        )
        .unwrap()
    }

    #[test]
    fn argmax_is_first_maximum() {
        let s = grid();
        assert_eq!(s.argmax.index, vec![1, 1]);
        assert_eq!(s.argmax.coords, vec![2.0, 40.0]);
        assert_eq!(s.argmax.value, 7.0);
        assert_eq!(s.at(&[2, 0]), 5.0);
        assert_eq!(s.shape(), vec![3, 2]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let axes = vec![Axis::new("x", "ev", vec![1.0, 2.0])];
        assert!(ScanResult::new(axes.clone(), vec![1.0], ScanMetadata::default()).is_err());
        assert!(ScanResult::new(
            vec![Axis::new("x", "ev", vec![])],
            vec![],
            ScanMetadata::default()
        )
        .is_err());
    }

    #[test]
    fn nan_never_wins() {
        let axes = vec![Axis::new("x", "ev", vec![1.0, 2.0, 3.0])];
        let s = ScanResult::new(axes, vec![f64::NAN, 1.0, 0.5], ScanMetadata::default()).unwrap();
        assert_eq!(s.argmax.index, vec![1]);
    }

    #[test]
    fn long_csv_layout() {
        let s = grid();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scan.csv");
        s.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "omega_ev,period_fs,value");
        assert_eq!(lines.len(), 7);
        assert!(lines[4].starts_with("2.0000000000,40.0000000000,7.0"));
        let j = dir.path().join("scan.json");
        s.write_json(&j).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(j).unwrap()).unwrap();
        assert_eq!(v["argmax"]["value"], 7.0);
    }
}
