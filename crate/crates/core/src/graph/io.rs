//! Plain-text model format.
//!
//! ```text
//! MARKOV
//! n
//! card_0 … card_{n−1}
//! m
//! scope_size v_1 … v_k        (one line per factor)
//! entry_count
//! ψ_1 … ψ_entry_count          (one block per factor, row-major,
//!                               last scope variable fastest)
//! ```
//!
//! UTF-8, whitespace separated. Values are emitted with 17 significant
//! digits so serialize → parse is an identity. For binary Ising-style models
//! state index 0 encodes spin −1 and index 1 encodes spin +1.

use thiserror::Error;

use super::{build_graph, Factor, FactorGraph, GraphError, PotentialTable, Variable};
use crate::textio::{TokenError, Tokens};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelIoError {
    #[error("parse error at line {line}, column {col}: {message}")]
    Parse {
        line: usize,
        col: usize,
        message: String,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl From<TokenError> for ModelIoError {
    fn from(e: TokenError) -> Self {
        ModelIoError::Parse {
            line: e.line,
            col: e.col,
            message: e.message,
        }
    }
}

/// Parses the text model format and validates the resulting graph.
pub fn parse_model(text: &str) -> Result<FactorGraph, ModelIoError> {
    let mut t = Tokens::new(text);
    t.expect_literal("MARKOV")?;
    let n = t.usize("variable count")?;
    let mut vars = Vec::with_capacity(n);
    for id in 0..n {
        let cardinality = t.usize("variable cardinality")?;
        vars.push(Variable { id, cardinality });
    }
    let m = t.usize("factor count")?;
    let mut scopes = Vec::with_capacity(m);
    for _ in 0..m {
        let k = t.usize("scope size")?;
        let mut scope = Vec::with_capacity(k);
        for _ in 0..k {
            scope.push(t.usize("scope variable id")?);
        }
        scopes.push(scope);
    }
    let mut factors = Vec::with_capacity(m);
    for (id, scope) in scopes.into_iter().enumerate() {
        let count = t.usize("table entry count")?;
        let expected: usize = scope
            .iter()
            .map(|&v| vars.get(v).map_or(0, |x| x.cardinality))
            .product();
        if expected != 0 && count != expected {
            return Err(ModelIoError::Graph(GraphError::TableSizeMismatch {
                factor: id,
                expected,
                got: count,
            }));
        }
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(t.f64("table entry")?);
        }
        factors.push(Factor {
            id,
            scope,
            table: PotentialTable::new(values),
        });
    }
    t.expect_end()?;
    Ok(build_graph(vars, factors)?)
}

/// Serializes a graph in the text model format with round-trip precision.
pub fn serialize_model(graph: &FactorGraph) -> String {
    let mut out = String::from("MARKOV\n");
    out.push_str(&format!("{}\n", graph.num_variables()));
    let cards: Vec<String> = graph
        .variables()
        .iter()
        .map(|v| v.cardinality.to_string())
        .collect();
    out.push_str(&cards.join(" "));
    out.push('\n');
    out.push_str(&format!("{}\n", graph.num_factors()));
    for f in graph.factors() {
        let mut line = f.scope.len().to_string();
        for &v in &f.scope {
            line.push(' ');
            line.push_str(&v.to_string());
        }
        out.push_str(&line);
        out.push('\n');
    }
    for f in graph.factors() {
        out.push_str(&format!("{}\n", f.table.len()));
        let vals: Vec<String> = f.table.values().iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&vals.join(" "));
        out.push('\n');
    }
    out
}
