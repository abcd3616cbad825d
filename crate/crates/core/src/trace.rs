//! Detector traces: per-detector intensities sampled on a grid of the
//! platform phase `phi`, with a fixed `phi,d0,d1,d2` CSV layout.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const CSV_HEADER: [&str; 4] = ["phi", "d0", "d1", "d2"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorTrace {
    phi: Vec<f64>,
    intensities: Vec<[f64; 3]>,
}

impl DetectorTrace {
    /// The grid must be strictly increasing and every intensity finite and
    /// non-negative.
    pub fn new(phi: Vec<f64>, intensities: Vec<[f64; 3]>) -> Result<Self> {
        if phi.len() != intensities.len() {
            return Err(Error::Trace(format!(
                "{} grid points but {} intensity rows",
                phi.len(),
                intensities.len()
            )));
        }
        if phi.iter().any(|p| !p.is_finite()) {
            return Err(Error::Trace("non-finite phi".into()));
        }
        if let Some(w) = phi.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Trace(format!(
                "phi grid not strictly increasing at row {}",
                w + 1
            )));
        }
        for (row, triple) in intensities.iter().enumerate() {
            if triple.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Trace(format!(
                    "negative or non-finite intensity at row {row}"
                )));
            }
        }
        Ok(Self { phi, intensities })
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn intensities(&self) -> &[[f64; 3]] {
        &self.intensities
    }

    /// Column of one detector.
    pub fn detector(&self, i: usize) -> Vec<f64> {
        self.intensities.iter().map(|row| row[i]).collect()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.phi.clone(),
            self.intensities
                .iter()
                .map(|r| [r[0] * factor, r[1] * factor, r[2] * factor])
                .collect(),
        )
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for (phi, row) in self.phi.iter().zip(&self.intensities) {
            w.write_record([
                phi.to_string(),
                row[0].to_string(),
                row[1].to_string(),
                row[2].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.iter().ne(CSV_HEADER) {
            return Err(Error::Trace(format!(
                "expected header `phi,d0,d1,d2`, found `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut phi = Vec::new();
        let mut intensities = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let parse = |k: usize| -> Result<f64> {
                record[k].trim().parse::<f64>().map_err(|e| {
                    Error::Trace(format!("row {}, column {}: {e}", line + 1, CSV_HEADER[k]))
                })
            };
            phi.push(parse(0)?);
            intensities.push([parse(1)?, parse(2)?, parse(3)?]);
        }
        Self::new(phi, intensities)
    }
}
