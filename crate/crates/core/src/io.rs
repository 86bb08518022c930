//! Matrix file formats.
//!
//! Text form:
//!
//! ```text
//! n 2
//! re
//! 1 0
//! 0 1
//! im
//! 0 0.5
//! -0.5 0
//! ```
//!
//! The `im` block may be omitted for real matrices. The same data is also
//! accepted as JSON `{"n": 2, "re": [[..]], "im": [[..]]}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub n: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&ComplexMatrix> for MatrixJson {
    fn from(m: &ComplexMatrix) -> Self {
        Self { n: m.n(), re: m.re(), im: m.im() }
    }
}

impl TryFrom<MatrixJson> for ComplexMatrix {
    type Error = Error;

    fn try_from(j: MatrixJson) -> Result<Self> {
        if j.re.len() != j.n {
            return Err(Error::Input(format!("`re` has {} rows, expected {}", j.re.len(), j.n)));
        }
        ComplexMatrix::from_re_im(&j.re, &j.im)
    }
}

impl Serialize for ComplexMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        MatrixJson::deserialize(d)?.try_into().map_err(serde::de::Error::custom)
    }
}

/// Reads either format, choosing by the first non-blank character.
pub fn read_matrix(text: &str) -> Result<ComplexMatrix> {
    if text.trim_start().starts_with('{') {
        let j: MatrixJson = serde_json::from_str(text).map_err(|e| Error::Input(format!("matrix JSON: {e}")))?;
        return j.try_into();
    }
    read_text(text)
}

fn read_text(text: &str) -> Result<ComplexMatrix> {
    let mut toks = text.split_whitespace().peekable();
    if toks.peek() == Some(&"n") {
        toks.next();
    }
    let n: usize = toks
        .next()
        .and_then(|t| t.parse().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Input("matrix file must start with a positive dimension".into()))?;
    let mut block = |name: &str, required: bool| -> Result<Vec<Vec<f64>>> {
        match toks.next() {
            Some(t) if t == name => {}
            None if !required => return Ok(vec![vec![0.0; n]; n]),
            other => return Err(Error::Input(format!("expected `{name}` block, found {other:?}"))),
        }
        let mut rows = vec![vec![0.0; n]; n];
        for row in rows.iter_mut() {
            for x in row.iter_mut() {
                let t = toks.next().ok_or_else(|| Error::Input(format!("`{name}` block is short")))?;
                *x = t.parse().map_err(|_| Error::Input(format!("bad number `{t}` in `{name}` block")))?;
            }
        }
        Ok(rows)
    };
    let re = block("re", true)?;
    let im = block("im", false)?;
    if let Some(t) = toks.next() {
        return Err(Error::Input(format!("trailing content `{t}` in matrix file")));
    }
    ComplexMatrix::from_re_im(&re, &im)
}

/// Text form with 17 significant digits, which round-trips `f64` exactly.
pub fn write_matrix_text(m: &ComplexMatrix) -> String {
    let mut out = format!("n {}\n", m.n());
    for (name, rows) in [("re", m.re()), ("im", m.im())] {
        out.push_str(name);
        out.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn write_matrix_json(m: &ComplexMatrix) -> String {
    serde_json::to_string_pretty(&MatrixJson::from(m)).expect("matrix JSON is always serializable")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;

    fn sample() -> ComplexMatrix {
        ComplexMatrix::from_fn(3, |i, j| C64::new(1.0 / (1.0 + i as f64 + j as f64), (i as f64 - j as f64) / 7.0))
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = sample();
        assert_eq!(read_matrix(&write_matrix_text(&m)).unwrap(), m);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = sample();
        assert_eq!(read_matrix(&write_matrix_json(&m)).unwrap(), m);
    }

    #[test]
    fn real_matrix_without_im_block() {
        let m = read_matrix("2\nre\n1 2\n3 4\n").unwrap();
        assert_eq!(m[(1, 0)], C64::new(3.0, 0.0));
        assert!(read_matrix("2\nre\n1 2\n3\n").is_err());
        assert!(read_matrix("0\nre\n").is_err());
    }
}
