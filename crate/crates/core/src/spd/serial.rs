//! JSON (`{"k": k, "entries": [row-major]}`) and CSV (`k` rows of `k`
//! comma-separated values) encodings. Both round-trip exactly: floats are
//! written with the shortest representation that parses back to the same bits.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{SpdMatrix, SymMatrix};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    k: usize,
    entries: Vec<f64>,
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr {
            k: self.dim(),
            entries: self.to_row_major(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(d)?;
        SymMatrix::from_row_major(repr.k, &repr.entries).map_err(serde::de::Error::custom)
    }
}

impl Serialize for SpdMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.as_sym().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpdMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let sym = SymMatrix::deserialize(d)?;
        SpdMatrix::new(sym).map_err(serde::de::Error::custom)
    }
}

/// Shortest round-trip decimal form of a float.
pub fn format_f64(x: f64) -> String {
    format!("{x:?}")
}

impl SymMatrix {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.to_rows() {
            let line: Vec<String> = row.into_iter().map(format_f64).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|field| {
                    field.trim().parse::<f64>().map_err(|e| {
                        Error::Parse(format!("line {}: '{}': {e}", lineno + 1, field.trim()))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        SymMatrix::from_rows(&rows)
    }
}

impl SpdMatrix {
    pub fn to_csv(&self) -> String {
        self.as_sym().to_csv()
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        SpdMatrix::new(SymMatrix::from_csv(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_psd, seeded};
    use proptest::prelude::*;

    #[test]
    fn json_shape() {
        let m = SymMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 2.0]]).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(text, r#"{"k":2,"entries":[1.0,0.5,0.5,2.0]}"#);
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(matches!(SymMatrix::from_csv("1,2\n3,x\n"), Err(Error::Parse(_))));
        assert!(matches!(SymMatrix::from_csv("1,2\n3\n"), Err(Error::DimMismatch { .. })));
        assert!(SpdMatrix::from_csv("1,0\n0,-1\n").is_err());
    }

    proptest! {
        #[test]
        fn round_trips_are_lossless(seed in any::<u64>(), k in 1usize..7, scale in -20i32..20) {
            let mut rng = seeded(seed);
            let m = random_psd(&mut rng, k, k).scaled(10f64.powi(scale));
            let via_json: SymMatrix = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
            let via_csv = SymMatrix::from_csv(&m.to_csv()).unwrap();
            for (x, y) in m.to_row_major().iter().zip(via_json.to_row_major()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in m.to_row_major().iter().zip(via_csv.to_row_major()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
