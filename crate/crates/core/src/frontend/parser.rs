//! Recursive-descent parser for the supported C subset.
//!
//! The subset covers single function definitions with primitive-typed
//! parameters, declarations with optional initializers, assignment (plain
//! and compound), `if`/`else`, `while`, `for`, `return`, calls, the usual
//! arithmetic, relational and logical binary operators, unary `-`, `!`,
//! `++` and `--`, and integer, float and string literals. Pointers, arrays,
//! structs, `switch`, `goto`, casts and the preprocessor are rejected.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::ast::{Ast, AstNode, NodeId, NodeKind};
use super::lexer::{Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    /// Offending token text, or `None` at end of input.
    pub found: Option<String>,
    pub line: usize,
    pub column: usize,
    pub expected: Vec<String>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.found {
            Some(tok) => write!(f, "unexpected {tok:?} at {}:{}", self.line, self.column)?,
            None => write!(f, "unexpected end of input")?,
        }
        if !self.expected.is_empty() {
            write!(f, ", expected one of: {}", self.expected.join(", "))?;
        }
        Ok(())
    }
}

const TYPE_KEYWORDS: &[&str] = &[
    "void", "char", "short", "int", "long", "float", "double", "signed", "unsigned", "_Bool",
];
const QUALIFIERS: &[&str] = &[
    "const", "volatile", "static", "register", "inline", "extern", "auto", "restrict",
];
const ASSIGN_OPS: &[&str] = &["=", "+=", "-=", "*=", "/=", "%="];

// Binary operator precedence levels, loosest first.
const BINARY_LEVELS: &[&[&str]] = &[
    &["||"],
    &["&&"],
    &["==", "!="],
    &["<", "<=", ">", ">="],
    &["+", "-"],
    &["*", "/", "%"],
];

struct Builder {
    kind: NodeKind,
    span: (usize, usize),
    children: Vec<usize>,
    attrs: BTreeMap<String, String>,
}

struct Parser<'a> {
    src: &'a str,
    toks: &'a [Token],
    pos: usize,
    nodes: Vec<Builder>,
}

type PResult<T> = Result<T, ParseError>;

/// Parses one complete function definition. `source` must be the text the
/// tokens were lexed from; node `code` fields are slices of it.
pub fn parse(source: &str, tokens: &[Token]) -> Result<Ast, ParseError> {
    let mut p = Parser {
        src: source,
        toks: tokens,
        pos: 0,
        nodes: Vec::new(),
    };
    let root = p.function()?;
    if let Some(tok) = p.peek() {
        return Err(p.error_at(tok, &["end of input"]));
    }
    Ok(p.finish(root))
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn peek_nth(&self, n: usize) -> Option<&'a Token> {
        self.toks.get(self.pos + n)
    }

    fn at(&self, text: &str) -> bool {
        self.peek()
            .is_some_and(|t| t.text == text && t.kind != TokenKind::StringLiteral)
    }

    fn at_keyword(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.is(TokenKind::Keyword, text))
    }

    fn advance(&mut self) -> &'a Token {
        let tok = &self.toks[self.pos];
        self.pos += 1;
        tok
    }

    fn error_at(&self, tok: &Token, expected: &[&str]) -> ParseError {
        ParseError {
            found: Some(tok.text.clone()),
            line: tok.line,
            column: tok.column,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        match self.peek() {
            Some(tok) => self.error_at(tok, expected),
            None => {
                let (line, column) = self
                    .toks
                    .last()
                    .map(|t| (t.line, t.column + t.text.chars().count()))
                    .unwrap_or((1, 1));
                ParseError {
                    found: None,
                    line,
                    column,
                    expected: expected.iter().map(|s| s.to_string()).collect(),
                }
            }
        }
    }

    fn expect(&mut self, text: &str) -> PResult<&'a Token> {
        if self.at(text) {
            Ok(self.advance())
        } else {
            Err(self.error(&[text]))
        }
    }

    fn expect_ident(&mut self) -> PResult<&'a Token> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => Ok(self.advance()),
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn prev_end(&self) -> usize {
        self.toks[self.pos - 1].end
    }

    fn push(&mut self, kind: NodeKind, span: (usize, usize), children: Vec<usize>) -> usize {
        self.nodes.push(Builder {
            kind,
            span,
            children,
            attrs: BTreeMap::new(),
        });
        self.nodes.len() - 1
    }

    fn set_attr(&mut self, node: usize, key: &str, value: impl Into<String>) {
        self.nodes[node].attrs.insert(key.to_string(), value.into());
    }

    fn span(&self, node: usize) -> (usize, usize) {
        self.nodes[node].span
    }

    /// Renumbers nodes in pre-order and materializes the arena.
    fn finish(self, root: usize) -> Ast {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            order.push(n);
            stack.extend(self.nodes[n].children.iter().rev());
        }
        let mut new_id = vec![usize::MAX; self.nodes.len()];
        for (i, &old) in order.iter().enumerate() {
            new_id[old] = i;
        }
        let mut slots: Vec<Option<Builder>> = self.nodes.into_iter().map(Some).collect();
        let nodes = order
            .iter()
            .enumerate()
            .map(|(id, &old)| {
                let b = slots[old].take().expect("each node visited once");
                AstNode {
                    id,
                    kind: b.kind,
                    code: self.src[b.span.0..b.span.1].to_string(),
                    children: b.children.iter().map(|&c| new_id[c]).collect::<Vec<NodeId>>(),
                    attrs: b.attrs,
                    span: b.span,
                }
            })
            .collect();
        Ast::from_nodes(nodes)
    }

    // ---- declarations -------------------------------------------------

    fn at_type_start(&self) -> bool {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Keyword => {
                TYPE_KEYWORDS.contains(&t.text.as_str()) || QUALIFIERS.contains(&t.text.as_str())
            }
            // `name name` can only start a declaration with a typedef'd type.
            Some(t) if t.kind == TokenKind::Identifier => self
                .peek_nth(1)
                .is_some_and(|n| n.kind == TokenKind::Identifier),
            _ => false,
        }
    }

    /// Parses a type specifier sequence and returns it normalized to single spaces.
    fn type_spec(&mut self) -> PResult<String> {
        let mut words = Vec::new();
        while let Some(t) = self.peek() {
            let is_type_kw = t.kind == TokenKind::Keyword
                && (TYPE_KEYWORDS.contains(&t.text.as_str())
                    || QUALIFIERS.contains(&t.text.as_str()));
            let is_typedef = words.is_empty()
                && t.kind == TokenKind::Identifier
                && self
                    .peek_nth(1)
                    .is_some_and(|n| n.kind == TokenKind::Identifier);
            if !(is_type_kw || is_typedef) {
                break;
            }
            words.push(self.advance().text.clone());
        }
        if words.is_empty() {
            return Err(self.error(&["type specifier"]));
        }
        if self.at("*") {
            return Err(self.error(&["identifier"]));
        }
        Ok(words.join(" "))
    }

    fn identifier_node(&mut self, tok: &Token) -> usize {
        let id = self.push(NodeKind::Identifier, (tok.start, tok.end), vec![]);
        self.set_attr(id, "name", tok.text.clone());
        id
    }

    fn function(&mut self) -> PResult<usize> {
        let start = self.peek().ok_or_else(|| self.error(&["type specifier"]))?.start;
        let ret = self.type_spec()?;
        let name = self.expect_ident()?;
        let params = self.param_list()?;
        let body = self.block()?;
        let id = self.push(NodeKind::Function, (start, self.prev_end()), vec![params, body]);
        self.set_attr(id, "name", name.text.clone());
        self.set_attr(id, "return_type", ret);
        Ok(id)
    }

    fn param_list(&mut self) -> PResult<usize> {
        let open = self.expect("(")?;
        let mut params = Vec::new();
        let only_void = self.at_keyword("void")
            && self.peek_nth(1).is_some_and(|t| t.text == ")");
        if only_void {
            self.advance();
        } else if !self.at(")") {
            loop {
                let start = self.peek().ok_or_else(|| self.error(&["type specifier"]))?.start;
                let ty = self.type_spec()?;
                let name = self.expect_ident()?;
                let ident = self.identifier_node(name);
                let decl = self.push(NodeKind::Decl, (start, name.end), vec![ident]);
                self.set_attr(decl, "name", name.text.clone());
                self.set_attr(decl, "type", ty);
                params.push(decl);
                if self.at(",") {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect(")")?;
        Ok(self.push(NodeKind::ParamList, (open.start, self.prev_end()), params))
    }

    /// `type a = 1, b;` yields one Decl node per declarator.
    fn declaration(&mut self) -> PResult<Vec<usize>> {
        let start = self.peek().ok_or_else(|| self.error(&["type specifier"]))?.start;
        let ty = self.type_spec()?;
        let mut decls = Vec::new();
        let mut decl_start = start;
        loop {
            let name = self.expect_ident()?;
            if self.at("[") {
                return Err(self.error(&["=", ",", ";"]));
            }
            let ident = self.identifier_node(name);
            let mut children = vec![ident];
            if self.at("=") {
                self.advance();
                children.push(self.assignment()?);
            }
            let decl = self.push(NodeKind::Decl, (decl_start, self.prev_end()), children);
            self.set_attr(decl, "name", name.text.clone());
            self.set_attr(decl, "type", ty.clone());
            decls.push(decl);
            if self.at(",") {
                self.advance();
                decl_start = self.peek().map(|t| t.start).unwrap_or(self.prev_end());
            } else {
                break;
            }
        }
        Ok(decls)
    }

    // ---- statements ---------------------------------------------------

    fn block(&mut self) -> PResult<usize> {
        let open = self.expect("{")?;
        let mut stmts = Vec::new();
        while !self.at("}") {
            if self.peek().is_none() {
                return Err(self.error(&["}"]));
            }
            stmts.extend(self.statement()?);
        }
        self.advance();
        Ok(self.push(NodeKind::Block, (open.start, self.prev_end()), stmts))
    }

    /// A statement in body position: always exactly one node.
    fn body(&mut self) -> PResult<usize> {
        let start = self.peek().map(|t| t.start).unwrap_or(self.src.len());
        let nodes = self.statement()?;
        if nodes.len() == 1 {
            Ok(nodes[0])
        } else {
            Ok(self.push(NodeKind::Block, (start, self.prev_end()), nodes))
        }
    }

    fn statement(&mut self) -> PResult<Vec<usize>> {
        let tok = self.peek().ok_or_else(|| self.error(&["statement"]))?;
        match (tok.kind, tok.text.as_str()) {
            (TokenKind::Punctuation, "{") => Ok(vec![self.block()?]),
            (TokenKind::Punctuation, ";") => {
                self.advance();
                Ok(vec![])
            }
            (TokenKind::Keyword, "if") => Ok(vec![self.if_stmt()?]),
            (TokenKind::Keyword, "while") => Ok(vec![self.while_stmt()?]),
            (TokenKind::Keyword, "for") => Ok(vec![self.for_stmt()?]),
            (TokenKind::Keyword, "return") => Ok(vec![self.return_stmt()?]),
            (TokenKind::Keyword, kw)
                if !TYPE_KEYWORDS.contains(&kw) && !QUALIFIERS.contains(&kw) =>
            {
                Err(self.error_at(tok, &["statement"]))
            }
            _ if self.at_type_start() => {
                let decls = self.declaration()?;
                self.expect(";")?;
                Ok(decls)
            }
            _ => {
                let expr = self.expression()?;
                self.expect(";")?;
                Ok(vec![expr])
            }
        }
    }

    fn condition(&mut self) -> PResult<usize> {
        self.expect("(")?;
        let expr = self.expression()?;
        self.expect(")")?;
        let span = self.span(expr);
        Ok(self.push(NodeKind::Condition, span, vec![expr]))
    }

    fn if_stmt(&mut self) -> PResult<usize> {
        let kw = self.advance();
        let cond = self.condition()?;
        let then = self.body()?;
        let mut children = vec![cond, then];
        if self.at_keyword("else") {
            self.advance();
            children.push(self.body()?);
        }
        Ok(self.push(NodeKind::If, (kw.start, self.prev_end()), children))
    }

    fn while_stmt(&mut self) -> PResult<usize> {
        let kw = self.advance();
        let cond = self.condition()?;
        let body = self.body()?;
        Ok(self.push(NodeKind::While, (kw.start, self.prev_end()), vec![cond, body]))
    }

    /// Children are `[init.., Condition, update?, body]`; the `init` and
    /// `update` attributes record how many of each are present.
    fn for_stmt(&mut self) -> PResult<usize> {
        let kw = self.advance();
        self.expect("(")?;
        let init = if self.at(";") {
            vec![]
        } else if self.at_type_start() {
            self.declaration()?
        } else {
            vec![self.expression()?]
        };
        self.expect(";")?;
        let expr = self.expression()?;
        let span = self.span(expr);
        let cond = self.push(NodeKind::Condition, span, vec![expr]);
        self.expect(";")?;
        let update = if self.at(")") {
            None
        } else {
            Some(self.expression()?)
        };
        self.expect(")")?;
        let body = self.body()?;

        let n_init = init.len();
        let mut children = init;
        children.push(cond);
        children.extend(update);
        children.push(body);
        let id = self.push(NodeKind::For, (kw.start, self.prev_end()), children);
        self.set_attr(id, "init", n_init.to_string());
        self.set_attr(id, "update", if update.is_some() { "1" } else { "0" });
        Ok(id)
    }

    fn return_stmt(&mut self) -> PResult<usize> {
        let kw = self.advance();
        let children = if self.at(";") {
            vec![]
        } else {
            vec![self.expression()?]
        };
        let end = self.prev_end();
        self.expect(";")?;
        Ok(self.push(NodeKind::Return, (kw.start, end), children))
    }

    // ---- expressions --------------------------------------------------

    fn expression(&mut self) -> PResult<usize> {
        self.assignment()
    }

    fn assignment(&mut self) -> PResult<usize> {
        let lhs = self.binary(0)?;
        let op = match self.peek() {
            Some(t) if t.kind == TokenKind::Operator && ASSIGN_OPS.contains(&t.text.as_str()) => {
                t
            }
            _ => return Ok(lhs),
        };
        if self.nodes[lhs].kind != NodeKind::Identifier {
            return Err(self.error_at(op, &[";", ")", ","]));
        }
        self.advance();
        let rhs = self.assignment()?;
        let span = (self.span(lhs).0, self.span(rhs).1);
        let id = self.push(NodeKind::Assign, span, vec![lhs, rhs]);
        self.set_attr(id, "operator", op.text.clone());
        Ok(id)
    }

    fn binary(&mut self, level: usize) -> PResult<usize> {
        if level == BINARY_LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        while let Some(t) = self.peek() {
            if t.kind != TokenKind::Operator || !BINARY_LEVELS[level].contains(&t.text.as_str()) {
                break;
            }
            let op = self.advance();
            let rhs = self.binary(level + 1)?;
            let span = (self.span(lhs).0, self.span(rhs).1);
            let id = self.push(NodeKind::BinaryOp, span, vec![lhs, rhs]);
            self.set_attr(id, "operator", op.text.clone());
            lhs = id;
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<usize> {
        if let Some(t) = self.peek() {
            if t.kind == TokenKind::Operator && matches!(t.text.as_str(), "-" | "!" | "++" | "--")
            {
                let op = self.advance();
                let operand = self.unary()?;
                if matches!(op.text.as_str(), "++" | "--")
                    && self.nodes[operand].kind != NodeKind::Identifier
                {
                    return Err(ParseError {
                        found: Some(op.text.clone()),
                        line: op.line,
                        column: op.column,
                        expected: vec!["identifier operand".to_string()],
                    });
                }
                let id = self.push(NodeKind::UnaryOp, (op.start, self.span(operand).1), vec![operand]);
                self.set_attr(id, "operator", op.text.clone());
                self.set_attr(id, "fixity", "prefix");
                return Ok(id);
            }
        }
        let mut expr = self.primary()?;
        while let Some(t) = self.peek() {
            if t.kind == TokenKind::Operator && matches!(t.text.as_str(), "++" | "--") {
                if self.nodes[expr].kind != NodeKind::Identifier {
                    return Err(self.error_at(t, &[";"]));
                }
                let op = self.advance();
                let id = self.push(NodeKind::UnaryOp, (self.span(expr).0, op.end), vec![expr]);
                self.set_attr(id, "operator", op.text.clone());
                self.set_attr(id, "fixity", "postfix");
                expr = id;
            } else {
                break;
            }
        }
        Ok(expr)
    }

    fn primary(&mut self) -> PResult<usize> {
        const EXPECTED: &[&str] = &["identifier", "literal", "("];
        let tok = match self.peek() {
            Some(t) => t,
            None => return Err(self.error(EXPECTED)),
        };
        match tok.kind {
            TokenKind::Identifier => {
                self.advance();
                if self.at("(") {
                    self.call(tok)
                } else if self.at("[") || self.at(".") || self.at("->") {
                    Err(self.error(&[";", "operator"]))
                } else {
                    Ok(self.identifier_node(tok))
                }
            }
            TokenKind::IntegerLiteral | TokenKind::FloatLiteral | TokenKind::StringLiteral => {
                self.advance();
                let id = self.push(NodeKind::Literal, (tok.start, tok.end), vec![]);
                let kind = match tok.kind {
                    TokenKind::IntegerLiteral => "int",
                    TokenKind::FloatLiteral => "float",
                    _ => "string",
                };
                self.set_attr(id, "kind", kind);
                self.set_attr(id, "value", tok.text.clone());
                Ok(id)
            }
            TokenKind::Punctuation if tok.text == "(" => {
                self.advance();
                // A parenthesized type name would be a cast.
                if self.at_type_start() {
                    return Err(self.error(&["expression"]));
                }
                let inner = self.expression()?;
                self.expect(")")?;
                Ok(inner)
            }
            _ => Err(self.error_at(tok, EXPECTED)),
        }
    }

    fn call(&mut self, name: &Token) -> PResult<usize> {
        self.expect("(")?;
        let mut args = Vec::new();
        if !self.at(")") {
            loop {
                args.push(self.assignment()?);
                if self.at(",") {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect(")")?;
        let id = self.push(NodeKind::Call, (name.start, self.prev_end()), args);
        self.set_attr(id, "name", name.text.clone());
        Ok(id)
    }
}
