use std::fmt::Write as _;

use crate::device::{correct_counts, Device, ExperimentalSetting, ShotRecord};
use crate::error::{PecError, Result};
use crate::linalg::Matrix;
use crate::pauli::GateLabel;
use crate::rng::{stream_rng, substream};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

/// Tomography records plus the readout calibration used to correct them.
#[derive(Clone, Debug, PartialEq)]
pub struct GstDataset {
    pub n: usize,
    /// Column-stochastic readout confusion (assumed calibrated beforehand).
    pub confusion: Matrix<f64>,
    pub records: Vec<ShotRecord>,
}

impl GstDataset {
    /// Runs every setting on its own substream of `stream`.
    pub fn collect(device: &Device, settings: &[ExperimentalSetting], stream: u64) -> Result<Self> {
        let records = settings
            .iter()
            .enumerate()
            .map(|(idx, s)| {
                let mut rng = stream_rng(device.spec().seed, substream(stream, &[idx as u64]));
                device.run_setting_with(s, &mut rng)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            n: device.n(),
            confusion: device.spec().readout.clone(),
            records,
        })
    }

    pub fn readout_inverse(&self) -> Result<Matrix<f64>> {
        self.confusion.inverse()
    }

    /// Readout-corrected frequencies of each record.
    pub fn corrected(&self) -> Result<Vec<Vec<f64>>> {
        let inv = self.readout_inverse()?;
        self.records.iter().map(|r| correct_counts(&inv, &r.counts)).collect()
    }

    /// Line-oriented text: `i j k shots c_0 [c_1 c_2 c_3]`, `j` indexing the gate set.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# pec-lab gst dataset");
        let _ = writeln!(out, "# schema_version {DATASET_SCHEMA_VERSION}");
        let _ = writeln!(out, "# n {}", self.n);
        for r in 0..self.confusion.rows() {
            let row: Vec<String> = self.confusion.row(r).iter().map(|x| format!("{x:?}")).collect();
            let _ = writeln!(out, "# confusion {}", row.join(" "));
        }
        if self.n == 1 {
            let _ = writeln!(out, "# columns: i j k shots zeros_count");
        } else {
            let _ = writeln!(out, "# columns: i j k shots zeros_count c01 c10 c11");
        }
        for rec in &self.records {
            let s = &rec.setting;
            let j = s.gates.first().map_or(0, |g| g.dense_index());
            let k = s.meas.unwrap_or(0);
            let _ = write!(out, "{} {} {} {}", s.init, j, k, rec.shots());
            if self.n == 1 {
                let _ = write!(out, " {}", rec.zeros_count());
            } else {
                for c in &rec.counts {
                    let _ = write!(out, " {c}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut n = None;
        let mut confusion_rows: Vec<Vec<f64>> = Vec::new();
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let err = |message: String| PecError::Parse {
                line: line_no,
                message,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let mut parts = comment.split_whitespace();
                match parts.next() {
                    Some("schema_version") => {
                        let v: u32 = parts
                            .next()
                            .and_then(|v| v.parse().ok())
                            .ok_or_else(|| err("bad schema_version".into()))?;
                        if v != DATASET_SCHEMA_VERSION {
                            return Err(err(format!("unsupported schema_version {v}")));
                        }
                    }
                    Some("n") => {
                        n = Some(
                            parts
                                .next()
                                .and_then(|v| v.parse::<usize>().ok())
                                .filter(|v| (1..=2).contains(v))
                                .ok_or_else(|| err("bad qubit count".into()))?,
                        );
                    }
                    Some("confusion") => confusion_rows.push(
                        parts
                            .map(|x| x.parse::<f64>().map_err(|e| err(e.to_string())))
                            .collect::<Result<_>>()?,
                    ),
                    _ => {}
                }
                continue;
            }
            let n = n.ok_or_else(|| err("data before the `# n` header".into()))?;
            let fields: Vec<u64> = line
                .split_whitespace()
                .map(|x| x.parse::<u64>().map_err(|e| err(format!("`{x}`: {e}"))))
                .collect::<Result<_>>()?;
            let expected = if n == 1 { 5 } else { 8 };
            if fields.len() != expected {
                return Err(err(format!("expected {expected} columns, found {}", fields.len())));
            }
            let gate = GateLabel::from_dense_index(n, fields[1] as usize).map_err(|e| err(e.to_string()))?;
            GateLabel::prep_fiducial(n, fields[0] as usize).map_err(|e| err(e.to_string()))?;
            GateLabel::measurement_fiducial(n, fields[2] as usize).map_err(|e| err(e.to_string()))?;
            let shots = fields[3];
            let counts = if n == 1 {
                if fields[4] > shots {
                    return Err(err("zeros_count exceeds shots".into()));
                }
                vec![fields[4], shots - fields[4]]
            } else {
                fields[4..].to_vec()
            };
            if counts.iter().sum::<u64>() != shots || shots == 0 {
                return Err(err("counts do not add up to shots".into()));
            }
            records.push(ShotRecord {
                setting: ExperimentalSetting::new(fields[0] as usize, vec![gate], Some(fields[2] as usize), shots),
                counts,
            });
        }
        let n = n.ok_or_else(|| PecError::Parse {
            line: 0,
            message: "missing `# n` header".into(),
        })?;
        let confusion = if confusion_rows.is_empty() {
            Matrix::identity(1 << n)
        } else {
            Matrix::from_rows(&confusion_rows)?
        };
        if confusion.rows() != 1 << n || confusion.cols() != 1 << n {
            return Err(PecError::Parse {
                line: 0,
                message: "confusion matrix has the wrong size".into(),
            });
        }
        Ok(Self { n, confusion, records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceSpec;
    use crate::gst::design_experiments;

    #[test]
    fn text_round_trip() {
        for n in 1..=2 {
            let mut spec = DeviceSpec::noiseless(n);
            if n == 2 {
                let c = Matrix::from_rows(&[vec![0.98, 0.03], vec![0.02, 0.97]]).unwrap();
                spec.readout = c.kron(&c);
            }
            let dev = Device::new(spec).unwrap();
            let settings = design_experiments(n, 50).unwrap();
            let data = GstDataset::collect(&dev, &settings, 11).unwrap();
            let back = GstDataset::from_text(&data.to_text()).unwrap();
            assert_eq!(back, data);
        }
    }

    #[test]
    fn malformed_lines_name_their_line() {
        let text = "# schema_version 1\n# n 1\n0 0 0 10 4\n0 0 0 10 11\n";
        match GstDataset::from_text(text) {
            Err(PecError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }
}
