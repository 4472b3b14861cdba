//! The context-condition expression language.
//!
//! ```text
//! or      := and ( ("||" | "OR") and )*
//! and     := unary ( ("&&" | "AND") unary )*
//! unary   := ("!" | "NOT") unary | primary
//! primary := "(" or ")" | operand ( cmp operand )?
//! operand := "true" | "false" | call | IDENT | ENUM_NAME | NUMBER | STRING
//! call    := ("near" | "zone") "(" operand ( "," operand )* ")"
//! cmp     := "==" | "!=" | "<" | "<=" | ">" | ">="
//! ```
//!
//! Identifiers with a lowercase letter are variables, all-uppercase names are
//! enum literals. Comparisons do not chain.

use std::fmt;

use thiserror::Error;

use crate::context::ContextState;
use crate::fingerprint::{ssid_matches, Fingerprint, Mac, DEFAULT_MIN_RSSI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Ident,
    EnumName,
    Number,
    Str,
    LParen,
    RParen,
    Comma,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Not,
    True,
    False,
    Eof,
}

impl TokenKind {
    fn describe(self) -> &'static str {
        match self {
            TokenKind::Ident => "identifier",
            TokenKind::EnumName => "enum name",
            TokenKind::Number => "number",
            TokenKind::Str => "string",
            TokenKind::LParen => "'('",
            TokenKind::RParen => "')'",
            TokenKind::Comma => "','",
            TokenKind::Eq => "'=='",
            TokenKind::Ne => "'!='",
            TokenKind::Lt => "'<'",
            TokenKind::Le => "'<='",
            TokenKind::Gt => "'>'",
            TokenKind::Ge => "'>='",
            TokenKind::And => "'&&'",
            TokenKind::Or => "'||'",
            TokenKind::Not => "'!'",
            TokenKind::True => "'true'",
            TokenKind::False => "'false'",
            TokenKind::Eof => "end of input",
        }
    }

    fn compare_op(self) -> Option<CompareOp> {
        Some(match self {
            TokenKind::Eq => CompareOp::Eq,
            TokenKind::Ne => CompareOp::Ne,
            TokenKind::Lt => CompareOp::Lt,
            TokenKind::Le => CompareOp::Le,
            TokenKind::Gt => CompareOp::Gt,
            TokenKind::Ge => CompareOp::Ge,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    /// Source text; for strings, the unescaped contents.
    pub lexeme: String,
    pub offset: usize,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("lex error at byte {offset}: {message}")]
    Lex { offset: usize, message: String },
    #[error("syntax error at byte {offset}: {message}{}", expected_suffix(.expected))]
    Syntax { offset: usize, message: String, expected: Vec<String> },
}

fn expected_suffix(expected: &[String]) -> String {
    if expected.is_empty() {
        String::new()
    } else {
        format!(" (expected {})", expected.join(", "))
    }
}

impl RuleError {
    pub fn offset(&self) -> usize {
        match self {
            RuleError::Lex { offset, .. } | RuleError::Syntax { offset, .. } => *offset,
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// True for `[A-Za-z_][A-Za-z0-9_]*` names that are not reserved words.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if is_ident_start(c))
        && chars.all(is_ident_char)
        && !matches!(s, "true" | "false" | "AND" | "OR" | "NOT")
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, RuleError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = text[i..].chars().next().unwrap();
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        let start = i;
        let two = text.get(i..i + 2).unwrap_or("");
        let simple = match two {
            "==" => Some((TokenKind::Eq, 2)),
            "!=" => Some((TokenKind::Ne, 2)),
            "<=" => Some((TokenKind::Le, 2)),
            ">=" => Some((TokenKind::Ge, 2)),
            "&&" => Some((TokenKind::And, 2)),
            "||" => Some((TokenKind::Or, 2)),
            _ => match c {
                '(' => Some((TokenKind::LParen, 1)),
                ')' => Some((TokenKind::RParen, 1)),
                ',' => Some((TokenKind::Comma, 1)),
                '<' => Some((TokenKind::Lt, 1)),
                '>' => Some((TokenKind::Gt, 1)),
                '!' => Some((TokenKind::Not, 1)),
                _ => None,
            },
        };
        if let Some((kind, len)) = simple {
            i += len;
            tokens.push(Token { kind, lexeme: text[start..i].to_string(), offset: start });
            continue;
        }

        if c == '"' {
            i += 1;
            let mut value = String::new();
            loop {
                let Some(ch) = text[i..].chars().next() else {
                    return Err(RuleError::Lex { offset: start, message: "unterminated string".into() });
                };
                match ch {
                    '"' => {
                        i += 1;
                        break;
                    }
                    '\\' => {
                        match text[i + 1..].chars().next() {
                            Some(e @ ('"' | '\\')) => value.push(e),
                            Some(_) => {
                                return Err(RuleError::Lex { offset: i, message: "unsupported escape".into() });
                            }
                            None => {
                                return Err(RuleError::Lex { offset: start, message: "unterminated string".into() });
                            }
                        }
                        i += 2;
                    }
                    other => {
                        value.push(other);
                        i += other.len_utf8();
                    }
                }
            }
            tokens.push(Token { kind: TokenKind::Str, lexeme: value, offset: start });
            continue;
        }

        let negative_number = c == '-' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit);
        if c.is_ascii_digit() || negative_number {
            i += 1;
            while bytes.get(i).is_some_and(u8::is_ascii_digit) {
                i += 1;
            }
            if bytes.get(i) == Some(&b'.') && bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
                i += 1;
                while bytes.get(i).is_some_and(u8::is_ascii_digit) {
                    i += 1;
                }
            }
            tokens.push(Token { kind: TokenKind::Number, lexeme: text[start..i].to_string(), offset: start });
            continue;
        }

        if is_ident_start(c) {
            while text[i..].chars().next().is_some_and(is_ident_char) {
                i += 1;
            }
            let word = &text[start..i];
            let kind = match word {
                "true" => TokenKind::True,
                "false" => TokenKind::False,
                "AND" => TokenKind::And,
                "OR" => TokenKind::Or,
                "NOT" => TokenKind::Not,
                w if w.chars().any(|ch| ch.is_ascii_lowercase()) => TokenKind::Ident,
                _ => TokenKind::EnumName,
            };
            tokens.push(Token { kind, lexeme: word.to_string(), offset: start });
            continue;
        }

        return Err(RuleError::Lex { offset: start, message: format!("illegal character {c:?}") });
    }
    tokens.push(Token { kind: TokenKind::Eof, lexeme: String::new(), offset: text.len() });
    Ok(tokens)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "==",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }

    fn is_equality(self) -> bool {
        matches!(self, CompareOp::Eq | CompareOp::Ne)
    }

    fn apply<T: PartialOrd>(self, a: &T, b: &T) -> bool {
        match self {
            CompareOp::Eq => a == b,
            CompareOp::Ne => a != b,
            CompareOp::Lt => a < b,
            CompareOp::Le => a <= b,
            CompareOp::Gt => a > b,
            CompareOp::Ge => a >= b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Bool(bool),
    Number(f64),
    Text(String),
    Enum(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Or(Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Compare(CompareOp, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
    Var(String),
    Lit(Literal),
}

/// A parsed rule node. Equality compares structure only; `offset` is the
/// source position used in diagnostics.
#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub offset: usize,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

/// Parsed form of one condition expression.
pub type RuleAst = Expr;

impl Expr {
    pub fn new(kind: ExprKind) -> Self {
        Expr { kind, offset: 0 }
    }

    pub fn lit_bool(b: bool) -> Self {
        Self::new(ExprKind::Lit(Literal::Bool(b)))
    }
    pub fn lit_number(n: f64) -> Self {
        Self::new(ExprKind::Lit(Literal::Number(n)))
    }
    pub fn lit_text(s: impl Into<String>) -> Self {
        Self::new(ExprKind::Lit(Literal::Text(s.into())))
    }
    pub fn lit_enum(s: impl Into<String>) -> Self {
        Self::new(ExprKind::Lit(Literal::Enum(s.into())))
    }
    pub fn var(s: impl Into<String>) -> Self {
        Self::new(ExprKind::Var(s.into()))
    }
    pub fn call(name: impl Into<String>, args: Vec<Expr>) -> Self {
        Self::new(ExprKind::Call(name.into(), args))
    }
    pub fn not(e: Expr) -> Self {
        Self::new(ExprKind::Not(Box::new(e)))
    }
    pub fn and(a: Expr, b: Expr) -> Self {
        Self::new(ExprKind::And(Box::new(a), Box::new(b)))
    }
    pub fn or(a: Expr, b: Expr) -> Self {
        Self::new(ExprKind::Or(Box::new(a), Box::new(b)))
    }
    pub fn compare(op: CompareOp, a: Expr, b: Expr) -> Self {
        Self::new(ExprKind::Compare(op, Box::new(a), Box::new(b)))
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

const OPERAND_START: &[TokenKind] = &[
    TokenKind::True,
    TokenKind::False,
    TokenKind::Ident,
    TokenKind::EnumName,
    TokenKind::Number,
    TokenKind::Str,
];

fn names(kinds: &[TokenKind]) -> Vec<String> {
    kinds.iter().map(|k| k.describe().to_string()).collect()
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.kind != TokenKind::Eof {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: impl Into<String>, expected: &[TokenKind]) -> RuleError {
        RuleError::Syntax { offset: self.peek().offset, message: message.into(), expected: names(expected) }
    }

    fn expect(&mut self, kind: TokenKind) -> Result<Token, RuleError> {
        if self.peek().kind == kind {
            Ok(self.bump())
        } else {
            Err(self.error(format!("unexpected {}", self.peek().kind.describe()), &[kind]))
        }
    }

    fn or(&mut self) -> Result<Expr, RuleError> {
        let mut lhs = self.and()?;
        while self.peek().kind == TokenKind::Or {
            let offset = self.bump().offset;
            let rhs = self.and()?;
            lhs = Expr { kind: ExprKind::Or(Box::new(lhs), Box::new(rhs)), offset };
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, RuleError> {
        let mut lhs = self.unary()?;
        while self.peek().kind == TokenKind::And {
            let offset = self.bump().offset;
            let rhs = self.unary()?;
            lhs = Expr { kind: ExprKind::And(Box::new(lhs), Box::new(rhs)), offset };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, RuleError> {
        if self.peek().kind == TokenKind::Not {
            let offset = self.bump().offset;
            let inner = self.unary()?;
            return Ok(Expr { kind: ExprKind::Not(Box::new(inner)), offset });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, RuleError> {
        if self.peek().kind == TokenKind::LParen {
            self.bump();
            let inner = self.or()?;
            self.expect(TokenKind::RParen)?;
            return Ok(inner);
        }
        let lhs = self.operand()?;
        let Some(op) = self.peek().kind.compare_op() else {
            return Ok(lhs);
        };
        let offset = self.bump().offset;
        let rhs = self.operand()?;
        if self.peek().kind.compare_op().is_some() {
            return Err(RuleError::Syntax {
                offset: self.peek().offset,
                message: "comparison chain".into(),
                expected: vec![],
            });
        }
        Ok(Expr { kind: ExprKind::Compare(op, Box::new(lhs), Box::new(rhs)), offset })
    }

    fn operand(&mut self) -> Result<Expr, RuleError> {
        let tok = self.peek().clone();
        let kind = match tok.kind {
            TokenKind::True => ExprKind::Lit(Literal::Bool(true)),
            TokenKind::False => ExprKind::Lit(Literal::Bool(false)),
            TokenKind::EnumName => ExprKind::Lit(Literal::Enum(tok.lexeme.clone())),
            TokenKind::Str => ExprKind::Lit(Literal::Text(tok.lexeme.clone())),
            TokenKind::Number => {
                let n: f64 = tok.lexeme.parse().map_err(|_| self.error("bad number", &[]))?;
                ExprKind::Lit(Literal::Number(n))
            }
            TokenKind::Ident if self.tokens[self.pos + 1].kind == TokenKind::LParen => {
                return self.call();
            }
            TokenKind::Ident => ExprKind::Var(tok.lexeme.clone()),
            _ => {
                let mut expected = vec![TokenKind::LParen, TokenKind::Not];
                expected.extend_from_slice(OPERAND_START);
                return Err(self.error(format!("unexpected {}", tok.kind.describe()), &expected));
            }
        };
        self.bump();
        Ok(Expr { kind, offset: tok.offset })
    }

    fn call(&mut self) -> Result<Expr, RuleError> {
        let name_tok = self.bump();
        self.expect(TokenKind::LParen)?;
        let mut args = Vec::new();
        if self.peek().kind != TokenKind::RParen {
            loop {
                args.push(self.operand()?);
                if self.peek().kind == TokenKind::Comma {
                    self.bump();
                    continue;
                }
                break;
            }
        }
        self.expect(TokenKind::RParen)?;
        check_call(&name_tok.lexeme, &args).map_err(|message| RuleError::Syntax {
            offset: name_tok.offset,
            message,
            expected: vec![],
        })?;
        Ok(Expr { kind: ExprKind::Call(name_tok.lexeme, args), offset: name_tok.offset })
    }
}

/// Call shape rules: `near(text[, number])`, `zone(identifier | text)`.
fn check_call(name: &str, args: &[Expr]) -> Result<(), String> {
    match name {
        "near" => {
            let ok = match args {
                [a] => matches!(a.kind, ExprKind::Lit(Literal::Text(_))),
                [a, b] => {
                    matches!(a.kind, ExprKind::Lit(Literal::Text(_))) && matches!(b.kind, ExprKind::Lit(Literal::Number(_)))
                }
                _ => false,
            };
            if ok {
                Ok(())
            } else {
                Err("near expects (\"mac-or-ssid\"[, min_rssi])".into())
            }
        }
        "zone" => match args {
            [a] if zone_arg(a).is_some() => Ok(()),
            _ => Err("zone expects one identifier or string".into()),
        },
        other => Err(format!("unknown function {other:?}")),
    }
}

fn zone_arg(e: &Expr) -> Option<&str> {
    match &e.kind {
        ExprKind::Var(s) | ExprKind::Lit(Literal::Enum(s)) | ExprKind::Lit(Literal::Text(s)) => Some(s),
        _ => None,
    }
}

pub fn parse(text: &str) -> Result<RuleAst, RuleError> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, pos: 0 };
    let ast = p.or()?;
    if p.peek().kind != TokenKind::Eof {
        let mut expected = vec![TokenKind::And, TokenKind::Or, TokenKind::Eof];
        if p.peek().kind == TokenKind::RParen {
            expected.retain(|k| *k != TokenKind::Eof);
        }
        return Err(p.error(format!("unexpected {}", p.peek().kind.describe()), &expected));
    }
    Ok(ast)
}

fn format_number(n: f64) -> String {
    format!("{n}")
}

fn format_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// Canonical fully parenthesized text; `parse(&format(a)) == a`.
pub fn format(ast: &RuleAst) -> String {
    ast.to_string()
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Or(a, b) => write!(f, "({a} || {b})"),
            ExprKind::And(a, b) => write!(f, "({a} && {b})"),
            ExprKind::Not(e) => write!(f, "!{e}"),
            ExprKind::Compare(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            ExprKind::Call(name, args) => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            ExprKind::Var(v) => f.write_str(v),
            ExprKind::Lit(Literal::Bool(b)) => write!(f, "{b}"),
            ExprKind::Lit(Literal::Number(n)) => f.write_str(&format_number(*n)),
            ExprKind::Lit(Literal::Text(s)) => f.write_str(&format_text(s)),
            ExprKind::Lit(Literal::Enum(e)) => f.write_str(e),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("type mismatch at byte {offset}: {message}")]
    Type { offset: usize, message: String },
    #[error("unknown variable {name:?} at byte {offset}")]
    UnknownVariable { offset: usize, name: String },
    #[error("unknown function {name:?} at byte {offset}")]
    UnknownFunction { offset: usize, name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    Bool,
    Number,
    Text,
    Enum,
}

impl Tag {
    fn name(self) -> &'static str {
        match self {
            Tag::Bool => "bool",
            Tag::Number => "number",
            Tag::Text => "text",
            Tag::Enum => "enum",
        }
    }
}

/// Runtime value; `Absent` carries the variable's declared type.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalValue {
    Bool(bool),
    Number(f64),
    Text(String),
    Enum(String),
    Absent(&'static str),
}

impl EvalValue {
    fn tag(&self) -> Tag {
        match self {
            EvalValue::Bool(_) => Tag::Bool,
            EvalValue::Number(_) => Tag::Number,
            EvalValue::Text(_) => Tag::Text,
            EvalValue::Enum(_) => Tag::Enum,
            EvalValue::Absent(t) => match *t {
                "bool" => Tag::Bool,
                "number" => Tag::Number,
                "text" => Tag::Text,
                _ => Tag::Enum,
            },
        }
    }
}

/// Names bound by [`evaluate`].
pub const VARIABLES: &[&str] =
    &["user_movement_type", "noise_level", "noise_db", "stable_surface", "rotating", "light_level", "lux"];

fn lookup_var(name: &str, state: &ContextState) -> Option<EvalValue> {
    let absent_or = |v: Option<EvalValue>, tag: &'static str| v.unwrap_or(EvalValue::Absent(tag));
    Some(match name {
        "user_movement_type" => EvalValue::Enum(state.movement.as_str().into()),
        "noise_level" => EvalValue::Enum(state.noise.as_str().into()),
        "light_level" => EvalValue::Enum(state.light.as_str().into()),
        "noise_db" => absent_or(state.noise_db.map(EvalValue::Number), "number"),
        "lux" => absent_or(state.lux.map(EvalValue::Number), "number"),
        "stable_surface" => absent_or(state.stable_surface.map(EvalValue::Bool), "bool"),
        "rotating" => absent_or(state.rotating.map(EvalValue::Bool), "bool"),
        _ => return None,
    })
}

struct Evaluator<'a> {
    state: &'a ContextState,
    networks: &'a Fingerprint,
}

impl Evaluator<'_> {
    fn value(&self, e: &Expr) -> Result<EvalValue, EvalError> {
        match &e.kind {
            ExprKind::Lit(Literal::Bool(b)) => Ok(EvalValue::Bool(*b)),
            ExprKind::Lit(Literal::Number(n)) => Ok(EvalValue::Number(*n)),
            ExprKind::Lit(Literal::Text(s)) => Ok(EvalValue::Text(s.clone())),
            ExprKind::Lit(Literal::Enum(s)) => Ok(EvalValue::Enum(s.clone())),
            ExprKind::Var(name) => lookup_var(name, self.state)
                .ok_or_else(|| EvalError::UnknownVariable { offset: e.offset, name: name.clone() }),
            ExprKind::Call(name, args) => self.call(e.offset, name, args).map(EvalValue::Bool),
            _ => self.truth(e).map(EvalValue::Bool),
        }
    }

    fn truth(&self, e: &Expr) -> Result<bool, EvalError> {
        match &e.kind {
            ExprKind::Or(a, b) => {
                let (x, y) = (self.truth(a)?, self.truth(b)?);
                Ok(x || y)
            }
            ExprKind::And(a, b) => {
                let (x, y) = (self.truth(a)?, self.truth(b)?);
                Ok(x && y)
            }
            ExprKind::Not(inner) => Ok(!self.truth(inner)?),
            ExprKind::Compare(op, a, b) => self.compare(e.offset, *op, a, b),
            _ => match self.value(e)? {
                EvalValue::Bool(b) => Ok(b),
                EvalValue::Absent("bool") => Ok(false),
                other => Err(EvalError::Type {
                    offset: e.offset,
                    message: format!("expected bool, found {}", other.tag().name()),
                }),
            },
        }
    }

    fn compare(&self, offset: usize, op: CompareOp, a: &Expr, b: &Expr) -> Result<bool, EvalError> {
        let (x, y) = (self.value(a)?, self.value(b)?);
        let (tx, ty) = (x.tag(), y.tag());
        if tx != ty {
            return Err(EvalError::Type { offset, message: format!("cannot compare {} with {}", tx.name(), ty.name()) });
        }
        if tx != Tag::Number && !op.is_equality() {
            return Err(EvalError::Type { offset, message: format!("{} only supports == and !=", tx.name()) });
        }
        Ok(match (&x, &y) {
            (EvalValue::Absent(_), _) | (_, EvalValue::Absent(_)) => false,
            (EvalValue::Number(p), EvalValue::Number(q)) => op.apply(p, q),
            (EvalValue::Bool(p), EvalValue::Bool(q)) => op.apply(p, q),
            (EvalValue::Text(p), EvalValue::Text(q)) | (EvalValue::Enum(p), EvalValue::Enum(q)) => op.apply(p, q),
            _ => unreachable!("tags checked above"),
        })
    }

    fn call(&self, offset: usize, name: &str, args: &[Expr]) -> Result<bool, EvalError> {
        let shape_err = |message: String| EvalError::Type { offset, message };
        match name {
            "near" => {
                check_call(name, args).map_err(shape_err)?;
                let ExprKind::Lit(Literal::Text(pattern)) = &args[0].kind else { unreachable!() };
                let min = match args.get(1).map(|a| &a.kind) {
                    Some(ExprKind::Lit(Literal::Number(n))) => *n,
                    _ => DEFAULT_MIN_RSSI as f64,
                };
                Ok(near(self.networks, pattern, min))
            }
            "zone" => {
                check_call(name, args).map_err(shape_err)?;
                let id = zone_arg(&args[0]).unwrap_or_default();
                Ok(self.state.zones.get(id).copied().unwrap_or(false))
            }
            _ => Err(EvalError::UnknownFunction { offset, name: name.to_string() }),
        }
    }
}

/// `pattern` is treated as a MAC when it parses as one, otherwise as an SSID
/// pattern (with optional `*` suffix).
fn near(networks: &Fingerprint, pattern: &str, min_rssi: f64) -> bool {
    let mac = Mac::parse(pattern).ok();
    networks.observations().iter().any(|o| {
        let hit = match &mac {
            Some(m) => &o.mac == m,
            None => ssid_matches(pattern, &o.ssid),
        };
        hit && o.rssi as f64 >= min_rssi
    })
}

/// Evaluates a rule against a state and the fingerprint used for `near()`.
/// Comparisons touching absent data are false; an absent bool is false.
pub fn evaluate(ast: &RuleAst, state: &ContextState, networks: &Fingerprint) -> Result<bool, EvalError> {
    Evaluator { state, networks }.truth(ast)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::Movement;
    use crate::fingerprint::{NetworkKind, NetworkObservation};

    fn kinds(text: &str) -> Vec<TokenKind> {
        tokenize(text).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn token_examples() {
        use TokenKind::*;
        assert_eq!(kinds("user_movement_type == VEHICLE"), vec![Ident, Eq, EnumName, Eof]);
        assert_eq!(kinds(""), vec![Eof]);
        assert_eq!(
            kinds(r#"near("aa:bb:cc:dd:ee:ff", -75)"#),
            vec![Ident, LParen, Str, Comma, Number, RParen, Eof]
        );
        assert_eq!(kinds("a AND b && c OR d || NOT e !f"), vec![
            Ident, And, Ident, And, Ident, Or, Ident, Or, Not, Ident, Not, Ident, Eof
        ]);
        assert_eq!(kinds("<= < >= > != =="), vec![Le, Lt, Ge, Gt, Ne, Eq, Eof]);
    }

    #[test]
    fn token_offsets_and_strings() {
        let toks = tokenize(r#"x == "a\"b\\c""#).unwrap();
        assert_eq!(toks[2].lexeme, "a\"b\\c");
        assert_eq!(toks.iter().map(|t| t.offset).collect::<Vec<_>>(), vec![0, 2, 5, 14]);
    }

    #[test]
    fn lex_errors() {
        assert_eq!(tokenize(r#"x == "abc"#).unwrap_err().offset(), 5);
        assert_eq!(tokenize("a = b").unwrap_err().offset(), 2);
        assert_eq!(tokenize("a & b").unwrap_err().offset(), 2);
        assert!(tokenize("é").is_err());
    }

    #[test]
    fn parse_examples() {
        assert_eq!(
            parse("user_movement_type == VEHICLE").unwrap(),
            Expr::compare(CompareOp::Eq, Expr::var("user_movement_type"), Expr::lit_enum("VEHICLE"))
        );
        assert_eq!(parse("true").unwrap(), Expr::lit_bool(true));
        assert_eq!(
            parse("!zone(BIG_MALL) && lux > 100").unwrap(),
            Expr::and(
                Expr::not(Expr::call("zone", vec![Expr::lit_enum("BIG_MALL")])),
                Expr::compare(CompareOp::Gt, Expr::var("lux"), Expr::lit_number(100.0))
            )
        );
    }

    #[test]
    fn precedence_and_over_or() {
        let a = parse("a || b && c").unwrap();
        assert_eq!(a, Expr::or(Expr::var("a"), Expr::and(Expr::var("b"), Expr::var("c"))));
        let a = parse("NOT a OR b").unwrap();
        assert_eq!(a, Expr::or(Expr::not(Expr::var("a")), Expr::var("b")));
    }

    #[test]
    fn parse_errors() {
        let e = parse("a < b < c").unwrap_err();
        assert!(e.to_string().contains("comparison chain"), "{e}");
        assert_eq!(e.offset(), 6);
        let e = parse("(a && b").unwrap_err();
        assert_eq!(e.offset(), 7);
        assert!(matches!(e, RuleError::Syntax { ref expected, .. } if expected == &vec!["')'".to_string()]));
        assert!(parse("").is_err());
        assert!(parse("a b").is_err());
        assert!(parse("foo(1)").unwrap_err().to_string().contains("unknown function"));
        assert!(parse("near(1)").is_err());
        assert!(parse("zone(A, B)").is_err());
        assert!(parse("(a == 1) == true").is_err());
    }

    #[test]
    fn format_examples() {
        assert_eq!(format(&Expr::lit_bool(true)), "true");
        let a = Expr::and(Expr::var("a"), Expr::or(Expr::var("b"), Expr::var("c")));
        assert_eq!(format(&a), "(a && (b || c))");
        let c = Expr::compare(CompareOp::Eq, Expr::var("user_movement_type"), Expr::lit_enum("VEHICLE"));
        assert_eq!(format(&c), "(user_movement_type == VEHICLE)");
        let n = parse(r#"near("x\"y", -75.5)"#).unwrap();
        assert_eq!(format(&n), r#"near("x\"y", -75.5)"#);
        assert_eq!(parse(&format(&n)).unwrap(), n);
    }

    fn state(movement: Movement) -> ContextState {
        ContextState { movement, ..Default::default() }
    }

    fn eval(text: &str, s: &ContextState) -> Result<bool, EvalError> {
        evaluate(&parse(text).unwrap(), s, &s.networks)
    }

    #[test]
    fn evaluate_examples() {
        assert!(eval("user_movement_type == VEHICLE", &state(Movement::Vehicle)).unwrap());
        assert!(!eval("user_movement_type == VEHICLE", &state(Movement::Walking)).unwrap());
        assert!(eval("!false", &ContextState::default()).unwrap());

        let mac = Mac::parse("aa:bb:cc:dd:ee:ff").unwrap();
        let s = ContextState {
            noise_db: Some(-32.0),
            networks: Fingerprint::from_observations([NetworkObservation::new("m", mac, -60, NetworkKind::Wifi, 0)]),
            ..Default::default()
        };
        assert!(eval(r#"near("aa:bb:cc:dd:ee:ff", -75) && noise_db < -20"#, &s).unwrap());
        assert!(!eval(r#"near("aa:bb:cc:dd:ee:ff", -50)"#, &s).unwrap());
        assert!(eval(r#"near("AA:BB:CC:DD:EE:FF")"#, &s).unwrap());
        assert!(eval(r#"near("m*", -70)"#, &s).unwrap());
    }

    #[test]
    fn absent_values_collapse_to_false() {
        let s = ContextState::default();
        assert!(!eval("noise_db < -20", &s).unwrap());
        assert!(!eval("noise_db >= -20", &s).unwrap());
        assert!(!eval("rotating", &s).unwrap());
        assert!(!eval("stable_surface == true", &s).unwrap());
        assert!(eval("user_movement_type == UNKNOWN", &s).unwrap());
    }

    #[test]
    fn zones() {
        let mut s = ContextState::default();
        assert!(!eval("zone(BIG_MALL)", &s).unwrap());
        s.zones.insert("BIG_MALL".into(), true);
        s.zones.insert("cafe".into(), true);
        assert!(eval("zone(BIG_MALL)", &s).unwrap());
        assert!(eval(r#"zone("BIG_MALL")"#, &s).unwrap());
        assert!(eval("zone(cafe)", &s).unwrap());
    }

    #[test]
    fn eval_errors() {
        let s = ContextState::default();
        assert!(matches!(eval("lux == VEHICLE", &s), Err(EvalError::Type { offset: 4, .. })));
        assert!(matches!(eval("user_movement_type < VEHICLE", &s), Err(EvalError::Type { .. })));
        assert!(matches!(eval("speed > 1", &s), Err(EvalError::UnknownVariable { .. })));
        assert!(matches!(eval("lux && true", &s), Err(EvalError::Type { .. })));
        assert!(matches!(eval("VEHICLE", &s), Err(EvalError::Type { .. })));
        let bogus = Expr::call("teleport", vec![]);
        assert!(matches!(evaluate(&bogus, &s, &s.networks), Err(EvalError::UnknownFunction { .. })));
    }

    #[test]
    fn identifier_rules() {
        assert!(is_identifier("BIG_MALL"));
        assert!(is_identifier("_x1"));
        assert!(!is_identifier("1x"));
        assert!(!is_identifier("a-b"));
        assert!(!is_identifier("true"));
        assert!(!is_identifier(""));
    }
}
