//! In-memory datasets and their CSV form.
//!
//! Header row `x0,...,x{d-1}[,label]`, then one sample per row.

use crate::error::{Error, Result};
use crate::spd::format_f64 as fmt;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    samples: Vec<Vec<f64>>,
    labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(samples: Vec<Vec<f64>>) -> Result<Self> {
        let dim = samples.first().map_or(0, |s| s.len());
        Self::build(dim, samples, None)
    }

    pub fn with_labels(samples: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::DimMismatch {
                expected: samples.len(),
                found: labels.len(),
            });
        }
        let dim = samples.first().map_or(0, |s| s.len());
        Self::build(dim, samples, Some(labels))
    }

    /// An empty dataset of known dimension.
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            samples: Vec::new(),
            labels: None,
        }
    }

    fn build(dim: usize, samples: Vec<Vec<f64>>, labels: Option<Vec<usize>>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::Parse(format!(
                    "sample {i} has {} features, expected {dim}",
                    s.len()
                )));
            }
            if s.iter().any(|x| !x.is_finite()) {
                return Err(Error::Parse(format!("sample {i} has a non-finite feature")));
            }
        }
        Ok(Self {
            dim,
            samples,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i]
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Samples whose label equals `label`.
    pub fn filter_label(&self, label: usize) -> Dataset {
        let samples = match &self.labels {
            Some(labels) => self
                .samples
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == label)
                .map(|(s, _)| s.clone())
                .collect(),
            None => Vec::new(),
        };
        let n = samples.len();
        Dataset {
            dim: self.dim,
            samples,
            labels: Some(vec![label; n]),
        }
    }

    /// Concatenation of two datasets of equal dimension.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut samples = self.samples.clone();
        samples.extend(other.samples.iter().cloned());
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Ok(Dataset {
            dim: self.dim,
            samples,
            labels,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut header: Vec<String> = (0..self.dim).map(|i| format!("x{i}")).collect();
        if self.labels.is_some() {
            header.push("label".into());
        }
        let mut out = header.join(",");
        out.push('\n');
        for (i, s) in self.samples.iter().enumerate() {
            let mut fields: Vec<String> = s.iter().map(|&x| fmt(x)).collect();
            if let Some(labels) = &self.labels {
                fields.push(labels[i].to_string());
            }
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse("line 1: missing header".into()))?;
        let columns: Vec<&str> = header.split(',').map(str::trim).collect();
        let has_label = columns.last() == Some(&"label");
        let dim = columns.len() - usize::from(has_label);
        for (i, c) in columns[..dim].iter().enumerate() {
            if *c != format!("x{i}") {
                return Err(Error::Parse(format!(
                    "line 1: expected column 'x{i}', found '{c}'"
                )));
            }
        }
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != columns.len() {
                return Err(Error::Parse(format!(
                    "line {}: expected {} fields, found {}",
                    lineno + 1,
                    columns.len(),
                    fields.len()
                )));
            }
            let row = fields[..dim]
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: '{f}': {e}", lineno + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            if has_label {
                let l = fields[dim].parse::<usize>().map_err(|e| {
                    Error::Parse(format!("line {}: label '{}': {e}", lineno + 1, fields[dim]))
                })?;
                labels.push(l);
            }
            samples.push(row);
        }
        if has_label {
            Self::build(dim, samples, Some(labels))
        } else {
            Self::build(dim, samples, None)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_labels() {
        let d = Dataset::with_labels(vec![vec![0.1, -2.0], vec![3.5, 1e-9]], vec![1, 0]).unwrap();
        let text = d.to_csv();
        assert!(text.starts_with("x0,x1,label\n"));
        assert_eq!(Dataset::from_csv(&text).unwrap(), d);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let err = Dataset::from_csv("x0,x1\n1,2\n3,oops\n").unwrap_err();
        assert!(matches!(err, Error::Parse(ref m) if m.contains("line 3")));
        let err = Dataset::from_csv("x0,x1\n1\n").unwrap_err();
        assert!(matches!(err, Error::Parse(ref m) if m.contains("line 2")));
        assert!(Dataset::from_csv("a,b\n").is_err());
    }

    #[test]
    fn header_only_is_empty() {
        let d = Dataset::from_csv("x0,x1,x2\n").unwrap();
        assert!(d.is_empty());
        assert_eq!(d.dim(), 3);
    }

    #[test]
    fn filter_and_concat() {
        let d = Dataset::with_labels(vec![vec![1.0], vec![2.0], vec![3.0]], vec![0, 1, 0]).unwrap();
        assert_eq!(d.filter_label(0).samples(), &[vec![1.0], vec![3.0]]);
        assert_eq!(d.concat(&d).unwrap().len(), 6);
    }
}
