//! Plain-text matrix format for QP regression fixtures.
//!
//! ```text
//! qp <n> <m>
//! H
//! <n rows of n values>
//! g
//! <n values>
//! G
//! <m rows of n values>
//! lower
//! <m values>
//! upper
//! <m values>
//! ```
//!
//! Values are whitespace separated; `inf` and `-inf` are accepted. Lines
//! starting with `#` are comments.

use std::fmt::Write;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::{QpError, QpProblem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unexpected end of input while reading {0}")]
    Eof(&'static str),
    #[error(transparent)]
    Invalid(#[from] QpError),
}

impl QpProblem {
    /// Serialize with round-trip exact floats.
    pub fn to_text(&self) -> String {
        let (n, m) = (self.num_vars(), self.num_rows());
        let mut out = String::new();
        let _ = writeln!(out, "qp {n} {m}");
        let row = |out: &mut String, vals: &mut dyn Iterator<Item = f64>| {
            let parts: Vec<String> = vals.map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", parts.join(" "));
        };
        out.push_str("H\n");
        for r in 0..n {
            row(&mut out, &mut self.h.row(r).iter().copied());
        }
        out.push_str("g\n");
        row(&mut out, &mut self.g.iter().copied());
        out.push_str("G\n");
        for r in 0..m {
            row(&mut out, &mut self.a.row(r).iter().copied());
        }
        out.push_str("lower\n");
        row(&mut out, &mut self.lower.iter().copied());
        out.push_str("upper\n");
        row(&mut out, &mut self.upper.iter().copied());
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ParseError> {
        let mut cur = Cursor {
            lines: text
                .lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
                .collect(),
            pos: 0,
        };
        let (ln, header) = cur.next("header")?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 || fields[0] != "qp" {
            return Err(syntax(ln, "expected `qp <n> <m>`"));
        }
        let n: usize = fields[1].parse().map_err(|_| syntax(ln, "bad n"))?;
        let m: usize = fields[2].parse().map_err(|_| syntax(ln, "bad m"))?;

        cur.tag("H")?;
        let mut h = Vec::with_capacity(n * n);
        for _ in 0..n {
            h.extend(cur.values(n, "H")?);
        }
        cur.tag("g")?;
        let g = cur.values(n, "g")?;
        cur.tag("G")?;
        let mut a = Vec::with_capacity(m * n);
        for _ in 0..m {
            a.extend(cur.values(n, "G")?);
        }
        cur.tag("lower")?;
        let lower = cur.values(m, "lower")?;
        cur.tag("upper")?;
        let upper = cur.values(m, "upper")?;
        if let Some(&(ln, _)) = cur.lines.get(cur.pos) {
            return Err(syntax(ln, "trailing content"));
        }
        Ok(QpProblem::new(
            DMatrix::from_row_slice(n, n, &h),
            DVector::from_vec(g),
            DMatrix::from_row_slice(m, n, &a),
            DVector::from_vec(lower),
            DVector::from_vec(upper),
        )?)
    }
}

fn syntax(line: usize, msg: &str) -> ParseError {
    ParseError::Syntax {
        line,
        msg: msg.to_string(),
    }
}

struct Cursor<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn next(&mut self, what: &'static str) -> Result<(usize, &'a str), ParseError> {
        let item = self.lines.get(self.pos).copied().ok_or(ParseError::Eof(what))?;
        self.pos += 1;
        Ok(item)
    }

    fn tag(&mut self, name: &'static str) -> Result<(), ParseError> {
        let (ln, l) = self.next(name)?;
        if l != name {
            return Err(syntax(ln, &format!("expected `{name}`")));
        }
        Ok(())
    }

    /// One row of `count` values; empty rows are omitted from the text.
    fn values(&mut self, count: usize, what: &'static str) -> Result<Vec<f64>, ParseError> {
        if count == 0 {
            return Ok(Vec::new());
        }
        let (ln, l) = self.next(what)?;
        let v = l
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|_| syntax(ln, "bad number"))?;
        if v.len() != count {
            return Err(syntax(ln, &format!("expected {count} values for {what}")));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn finite_or_inf() -> impl Strategy<Value = f64> {
        prop_oneof![
            8 => -1e6..1e6f64,
            1 => Just(f64::INFINITY),
            1 => Just(f64::NEG_INFINITY),
        ]
    }

    proptest! {
        #[test]
        fn text_round_trip_is_exact(
            n in 1usize..5,
            m in 0usize..5,
            seed in proptest::collection::vec(-1e3..1e3f64, 64),
            bounds in proptest::collection::vec(finite_or_inf(), 10),
        ) {
            let h = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 + seed[i].abs() } else { seed[(i + j) % 64] * 1e-3 });
            let h = (&h + h.transpose()) * 0.5;
            let g = DVector::from_fn(n, |i, _| seed[10 + i]);
            let a = DMatrix::from_fn(m, n, |i, j| seed[20 + 5 * i + j] / 7.0);
            let lower = DVector::from_fn(m, |i, _| bounds[i].min(bounds[5 + i]));
            let upper = DVector::from_fn(m, |i, _| bounds[i].max(bounds[5 + i]));
            let p = QpProblem::new(h, g, a, lower, upper).unwrap();
            let back = QpProblem::from_text(&p.to_text()).unwrap();
            prop_assert_eq!(back, p);
        }
    }

    #[test]
    fn reports_line_of_bad_number() {
        let text = "qp 1 0\nH\nabc\ng\n0\nG\nlower\nupper\n";
        assert_eq!(
            QpProblem::from_text(text),
            Err(ParseError::Syntax { line: 3, msg: "bad number".into() })
        );
    }

    #[test]
    fn truncated_input_is_an_error() {
        assert_eq!(QpProblem::from_text("qp 2 0\nH\n1 0\n"), Err(ParseError::Eof("H")));
    }
}
