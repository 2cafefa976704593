//! Counting-number sidecar file.
//!
//! ```text
//! COUNTS
//! c_0 … c_{n−1}            (one value per variable)
//! c_0 … c_{m−1}            (one value per factor)
//! i α c_iα                  (one line per incidence, any order)
//! ```

use thiserror::Error;

use super::CountingNumbers;
use crate::graph::FactorGraph;
use crate::textio::{TokenError, Tokens};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CountsIoError {
    #[error("parse error at line {line}, column {col}: {message}")]
    Parse {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("incidence ({var}, {factor}) is not an edge of the graph")]
    UnknownIncidence { var: usize, factor: usize },
    #[error("incidence ({var}, {factor}) appears more than once")]
    DuplicateIncidence { var: usize, factor: usize },
    #[error("{missing} incidence entries are missing")]
    MissingIncidences { missing: usize },
}

impl From<TokenError> for CountsIoError {
    fn from(e: TokenError) -> Self {
        CountsIoError::Parse {
            line: e.line,
            col: e.col,
            message: e.message,
        }
    }
}

pub fn parse_counts(text: &str, graph: &FactorGraph) -> Result<CountingNumbers, CountsIoError> {
    let mut t = Tokens::new(text);
    t.expect_literal("COUNTS")?;
    let mut c_var = Vec::with_capacity(graph.num_variables());
    for _ in 0..graph.num_variables() {
        c_var.push(t.f64("variable counting number")?);
    }
    let mut c_fac = Vec::with_capacity(graph.num_factors());
    for _ in 0..graph.num_factors() {
        c_fac.push(t.f64("factor counting number")?);
    }
    let mut c_inc = vec![f64::NAN; graph.num_incidences()];
    while !t.at_end() {
        let var = t.usize("incidence variable id")?;
        let fac = t.usize("incidence factor id")?;
        let value = t.f64("incidence counting number")?;
        if var >= graph.num_variables() || fac >= graph.num_factors() {
            return Err(CountsIoError::UnknownIncidence { var, factor: fac });
        }
        let e = graph
            .factors_of(var)
            .iter()
            .find(|&&(a, _)| a == fac)
            .map(|&(_, e)| e)
            .ok_or(CountsIoError::UnknownIncidence { var, factor: fac })?;
        if !c_inc[e].is_nan() {
            return Err(CountsIoError::DuplicateIncidence { var, factor: fac });
        }
        c_inc[e] = value;
    }
    let missing = c_inc.iter().filter(|v| v.is_nan()).count();
    if missing > 0 {
        return Err(CountsIoError::MissingIncidences { missing });
    }
    Ok(CountingNumbers { c_var, c_fac, c_inc })
}

pub fn serialize_counts(counting: &CountingNumbers, graph: &FactorGraph) -> String {
    let join = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.17e}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = String::from("COUNTS\n");
    out.push_str(&join(&counting.c_var));
    out.push('\n');
    out.push_str(&join(&counting.c_fac));
    out.push('\n');
    for (e, &(i, a)) in graph.incidences().iter().enumerate() {
        out.push_str(&format!("{i} {a} {:.17e}\n", counting.c_inc[e]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::test_graphs::chain3;
    use super::*;

    #[test]
    fn round_trip() {
        let g = chain3();
        let c = CountingNumbers {
            c_var: vec![0.25, 0.0, 0.125],
            c_fac: vec![0.5, 0.75],
            c_inc: vec![0.1, 0.2, 0.3, 0.4],
        };
        let text = serialize_counts(&c, &g);
        let back = parse_counts(&text, &g).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn missing_incidence_is_reported() {
        let g = chain3();
        let text = "COUNTS\n0 0 0\n0.5 0.5\n0 0 0.1\n";
        assert_eq!(
            parse_counts(text, &g).unwrap_err(),
            CountsIoError::MissingIncidences { missing: 3 }
        );
    }

    #[test]
    fn unknown_incidence_is_reported() {
        let g = chain3();
        let text = "COUNTS\n0 0 0\n0.5 0.5\n0 1 0.1\n";
        assert_eq!(
            parse_counts(text, &g).unwrap_err(),
            CountsIoError::UnknownIncidence { var: 0, factor: 1 }
        );
    }
}
