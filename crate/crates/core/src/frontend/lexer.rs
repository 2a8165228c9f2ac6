use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenKind {
    Keyword,
    Identifier,
    IntegerLiteral,
    FloatLiteral,
    StringLiteral,
    Operator,
    Punctuation,
}

/// A lexeme with its 1-based position and byte span in the source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: usize,
    pub column: usize,
    #[serde(skip)]
    pub start: usize,
    #[serde(skip)]
    pub end: usize,
}

impl Token {
    pub fn is(&self, kind: TokenKind, text: &str) -> bool {
        self.kind == kind && self.text == text
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexError {
    #[error("unrecognized character {ch:?} at {line}:{column}")]
    UnrecognizedChar { ch: char, line: usize, column: usize },
    #[error("unterminated {what} starting at {line}:{column}")]
    Unterminated {
        what: &'static str,
        line: usize,
        column: usize,
    },
}

pub const KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef",
    "union", "unsigned", "void", "volatile", "while", "_Bool",
];

// Longest first: the scanner takes the first entry that matches.
const OPERATORS: &[&str] = &[
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=",
    "-=", "*=", "/=", "%=", "&=", "|=", "^=", "+", "-", "*", "/", "%", "<", ">", "=", "!", "~",
    "&", "|", "^", "?", ":",
];

const PUNCTUATION: &[char] = &['(', ')', '{', '}', '[', ']', ';', ',', '.', '#'];

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    column: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn bump(&mut self) -> Option<char> {
        let ch = self.peek()?;
        self.pos += ch.len_utf8();
        if ch == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(ch)
    }

    fn bump_n(&mut self, bytes: usize) {
        let target = self.pos + bytes;
        while self.pos < target {
            self.bump();
        }
    }

    fn eat_while(&mut self, pred: impl Fn(char) -> bool) {
        while let Some(ch) = self.peek() {
            if !pred(ch) {
                break;
            }
            self.bump();
        }
    }
}

/// Maximal-munch tokenization of C source. Comments and whitespace are dropped.
pub fn lex(source: &str) -> Result<Vec<Token>, LexError> {
    let mut cur = Cursor {
        src: source,
        pos: 0,
        line: 1,
        column: 1,
    };
    let mut tokens = Vec::new();

    while let Some(ch) = cur.peek() {
        if ch.is_whitespace() {
            cur.bump();
            continue;
        }
        let (line, column, start) = (cur.line, cur.column, cur.pos);

        if cur.rest().starts_with("//") {
            cur.eat_while(|c| c != '\n');
            continue;
        }
        if cur.rest().starts_with("/*") {
            match cur.rest()[2..].find("*/") {
                Some(off) => cur.bump_n(off + 4),
                None => {
                    return Err(LexError::Unterminated {
                        what: "block comment",
                        line,
                        column,
                    })
                }
            }
            continue;
        }

        let kind = if ch.is_ascii_alphabetic() || ch == '_' {
            cur.eat_while(|c| c.is_ascii_alphanumeric() || c == '_');
            if KEYWORDS.contains(&&source[start..cur.pos]) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            }
        } else if ch.is_ascii_digit()
            || (ch == '.' && cur.peek_at(1).is_some_and(|c| c.is_ascii_digit()))
        {
            lex_number(&mut cur)
        } else if ch == '"' || ch == '\'' {
            lex_quoted(&mut cur, ch)?;
            // Character constants have type int in C.
            if ch == '"' {
                TokenKind::StringLiteral
            } else {
                TokenKind::IntegerLiteral
            }
        } else if let Some(op) = OPERATORS.iter().find(|op| cur.rest().starts_with(**op)) {
            cur.bump_n(op.len());
            TokenKind::Operator
        } else if PUNCTUATION.contains(&ch) {
            cur.bump();
            TokenKind::Punctuation
        } else {
            return Err(LexError::UnrecognizedChar { ch, line, column });
        };

        tokens.push(Token {
            kind,
            text: source[start..cur.pos].to_string(),
            line,
            column,
            start,
            end: cur.pos,
        });
    }
    Ok(tokens)
}

fn lex_number(cur: &mut Cursor<'_>) -> TokenKind {
    let rest = cur.rest();
    if rest.starts_with("0x") || rest.starts_with("0X") {
        cur.bump_n(2);
        cur.eat_while(|c| c.is_ascii_hexdigit());
        cur.eat_while(|c| matches!(c, 'u' | 'U' | 'l' | 'L'));
        return TokenKind::IntegerLiteral;
    }
    let mut is_float = false;
    cur.eat_while(|c| c.is_ascii_digit());
    if cur.peek() == Some('.') {
        is_float = true;
        cur.bump();
        cur.eat_while(|c| c.is_ascii_digit());
    }
    if matches!(cur.peek(), Some('e' | 'E')) {
        let sign = matches!(cur.peek_at(1), Some('+' | '-'));
        let digit_at = if sign { 2 } else { 1 };
        if cur.peek_at(digit_at).is_some_and(|c| c.is_ascii_digit()) {
            is_float = true;
            cur.bump_n(digit_at);
            cur.eat_while(|c| c.is_ascii_digit());
        }
    }
    if is_float {
        cur.eat_while(|c| matches!(c, 'f' | 'F' | 'l' | 'L'));
        TokenKind::FloatLiteral
    } else {
        cur.eat_while(|c| matches!(c, 'u' | 'U' | 'l' | 'L'));
        TokenKind::IntegerLiteral
    }
}

fn lex_quoted(cur: &mut Cursor<'_>, quote: char) -> Result<(), LexError> {
    let (line, column) = (cur.line, cur.column);
    cur.bump();
    loop {
        match cur.bump() {
            Some('\\') => {
                cur.bump();
            }
            Some('\n') | None => {
                return Err(LexError::Unterminated {
                    what: if quote == '"' {
                        "string literal"
                    } else {
                        "character literal"
                    },
                    line,
                    column,
                })
            }
            Some(c) if c == quote => return Ok(()),
            Some(_) => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(src: &str) -> Vec<String> {
        lex(src).unwrap().into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn declaration_with_call() {
        assert_eq!(
            texts("int x = source();"),
            ["int", "x", "=", "source", "(", ")", ";"]
        );
    }

    #[test]
    fn empty_source() {
        assert!(lex("").unwrap().is_empty());
    }

    #[test]
    fn division_operands() {
        let toks = lex("10 / x").unwrap();
        assert_eq!(toks.len(), 3);
        assert_eq!(toks[0].kind, TokenKind::IntegerLiteral);
        assert_eq!(toks[1].kind, TokenKind::Operator);
        assert_eq!(toks[2].kind, TokenKind::Identifier);
    }

    #[test]
    fn maximal_munch() {
        assert_eq!(texts("a<=b&&c!=d||e<<=1"), [
            "a", "<=", "b", "&&", "c", "!=", "d", "||", "e", "<<=", "1"
        ]);
        assert_eq!(texts("i++ + ++j"), ["i", "++", "+", "++", "j"]);
    }

    #[test]
    fn comments_are_dropped() {
        let toks = lex("a /* b \n c */ + // d\n e").unwrap();
        let t: Vec<_> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(t, ["a", "+", "e"]);
        assert_eq!((toks[2].line, toks[2].column), (3, 2));
    }

    #[test]
    fn literals() {
        let toks = lex(r#"1.5e3 0x1F 42u 'a' "s\"q" .5"#).unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.kind).collect();
        assert_eq!(kinds, [
            TokenKind::FloatLiteral,
            TokenKind::IntegerLiteral,
            TokenKind::IntegerLiteral,
            TokenKind::IntegerLiteral,
            TokenKind::StringLiteral,
            TokenKind::FloatLiteral,
        ]);
        assert_eq!(toks[4].text, r#""s\"q""#);
    }

    #[test]
    fn positions() {
        let toks = lex("int\n  x;").unwrap();
        assert_eq!((toks[0].line, toks[0].column), (1, 1));
        assert_eq!((toks[1].line, toks[1].column), (2, 3));
        assert_eq!((toks[2].line, toks[2].column), (2, 4));
    }

    #[test]
    fn unrecognized_character() {
        assert_eq!(
            lex("int x = 1 @ 2;"),
            Err(LexError::UnrecognizedChar {
                ch: '@',
                line: 1,
                column: 11
            })
        );
        assert!(matches!(lex("\"abc"), Err(LexError::Unterminated { .. })));
        assert!(matches!(lex("/* abc"), Err(LexError::Unterminated { .. })));
    }

    #[test]
    fn keywords_versus_identifiers() {
        let toks = lex("while whilex _if if").unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.kind).collect();
        assert_eq!(kinds, [
            TokenKind::Keyword,
            TokenKind::Identifier,
            TokenKind::Identifier,
            TokenKind::Keyword,
        ]);
    }
}
