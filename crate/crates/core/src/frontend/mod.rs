//! C-subset frontend: lexer, parser and the per-function sample type.

mod ast;
mod lexer;
mod parser;

pub use ast::{Ast, AstNode, NodeId, NodeKind};
pub use lexer::{lex, LexError, Token, TokenKind, KEYWORDS};
pub use parser::{parse, ParseError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("lex error: {0}")]
    Lex(#[from] LexError),
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
}

/// Lexes and parses a single function definition.
pub fn parse_source(source: &str) -> Result<Ast, FrontendError> {
    let tokens = lex(source)?;
    Ok(parse(source, &tokens)?)
}

/// One C function and its vulnerability label, the unit of classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFunction {
    pub name: String,
    pub source: String,
    /// 1 = vulnerable, 0 = not; `None` for inference inputs.
    pub label: Option<u8>,
    pub token_count: usize,
}

impl SourceFunction {
    /// Builds a sample, counting tokens with the crate lexer. The name is
    /// taken from the parsed definition when the source parses, else left empty.
    pub fn new(source: impl Into<String>, label: Option<u8>) -> Result<Self, LexError> {
        let source = source.into();
        let tokens = lex(&source)?;
        let name = parse(&source, &tokens)
            .map(|ast| ast.function_name().to_string())
            .unwrap_or_default();
        Ok(SourceFunction {
            name,
            token_count: tokens.len(),
            source,
            label,
        })
    }
}

pub fn token_count(f: &SourceFunction) -> Result<usize, LexError> {
    Ok(lex(&f.source)?.len())
}
