//! Constellation Query Language: lexer, parser, validator and canonical
//! renderer. See `docs/cql.md` for the grammar.

mod ast;
mod lexer;
mod parser;
mod render;

use thiserror::Error;

pub use ast::*;
pub use parser::{is_keyword, parse_query};
pub use render::{is_identifier, render_query};

/// Offsets are 1-based character positions into the statement text.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CqlError {
    #[error("syntax error at offset {offset}: expected {}, found {found}", expected.join(" | "))]
    Syntax {
        offset: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("validation error at offset {offset}: {message}")]
    Validation { offset: usize, message: String },
}

impl CqlError {
    pub fn offset(&self) -> usize {
        match self {
            CqlError::Syntax { offset, .. } | CqlError::Validation { offset, .. } => *offset,
        }
    }

    pub fn is_syntax(&self) -> bool {
        matches!(self, CqlError::Syntax { .. })
    }
}
