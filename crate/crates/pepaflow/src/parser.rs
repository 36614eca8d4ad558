//! Textual model language: a lexer, a recursive-descent parser, and a
//! canonical serializer.
//!
//! The grammar (identifiers `[A-Za-z][A-Za-z0-9_]*`, comments `//` to end
//! of line, `infty` spells the passive rate):
//!
//! ```text
//! model     := {def | binding} system ;
//! def       := IDENT "=" choice ";" ;
//! choice    := seq {"+" seq} ;
//! seq       := "(" IDENT "," rate ")" "." seq | IDENT ;
//! rate      := IDENT | NUMBER | "infty" ;
//! binding   := IDENT "=" NUMBER ";"  |  IDENT ":=" INT ";" ;
//! system    := "system" "=" coop ";" ;
//! coop      := pop {"<" [IDENT {"," IDENT}] ">" pop}    (left-associative)
//! pop       := IDENT "[" countexpr "]" | "(" coop ")" ;
//! countexpr := term {"*" term} ;  term := IDENT | INT ;
//! ```
//!
//! Choice binds looser than the prefix dot; cooperation binds loosest;
//! parentheses override. `serialize_model` emits a canonical form that
//! parses back to a structurally identical [`Model`].

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::ast::{
    fmt_number, CooperationSet, CountExpr, CountFactor, Definition, Model, ProcessExpr, RateSpec,
};

/// Model source text plus its origin, for error reporting.
#[derive(Debug, Clone)]
pub struct SourceModel {
    pub text: String,
    pub origin: String,
}

impl SourceModel {
    pub fn inline(text: &str) -> Self {
        SourceModel { text: text.to_string(), origin: "<inline>".to_string() }
    }

    pub fn from_file(path: &str, text: String) -> Self {
        SourceModel { text, origin: path.to_string() }
    }
}

/// Syntax error with a 1-based source position.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{origin}:{line}:{column}: expected {expected}, found {found}")]
pub struct ParseError {
    pub origin: String,
    pub line: u32,
    pub column: u32,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number { value: f64, is_int: bool },
    LParen,
    RParen,
    LBracket,
    RBracket,
    Lt,
    Gt,
    Comma,
    Dot,
    Plus,
    Star,
    Semi,
    Eq,
    ColonEq,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Number { value, .. } => write!(f, "number `{}`", fmt_number(*value)),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::Lt => write!(f, "`<`"),
            Tok::Gt => write!(f, "`>`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Dot => write!(f, "`.`"),
            Tok::Plus => write!(f, "`+`"),
            Tok::Star => write!(f, "`*`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Eq => write!(f, "`=`"),
            Tok::ColonEq => write!(f, "`:=`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: u32,
    column: u32,
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    line: u32,
    column: u32,
    origin: &'a str,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str, origin: &'a str) -> Self {
        Lexer { src, bytes: src.as_bytes(), pos: 0, line: 1, column: 1, origin }
    }

    fn error(&self, expected: &str, found: String, line: u32, column: u32) -> ParseError {
        ParseError {
            origin: self.origin.to_string(),
            line,
            column,
            expected: expected.to_string(),
            found,
        }
    }

    fn bump(&mut self) -> u8 {
        let c = self.bytes[self.pos];
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        c
    }

    fn skip_trivia(&mut self) {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.bump();
            }
            if self.pos + 1 < self.bytes.len()
                && self.bytes[self.pos] == b'/'
                && self.bytes[self.pos + 1] == b'/'
            {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn tokenize(mut self) -> Result<Vec<Spanned>, ParseError> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia();
            let (line, column) = (self.line, self.column);
            if self.pos >= self.bytes.len() {
                out.push(Spanned { tok: Tok::Eof, line, column });
                return Ok(out);
            }
            let c = self.bytes[self.pos];
            let tok = match c {
                b'(' => { self.bump(); Tok::LParen }
                b')' => { self.bump(); Tok::RParen }
                b'[' => { self.bump(); Tok::LBracket }
                b']' => { self.bump(); Tok::RBracket }
                b'<' => { self.bump(); Tok::Lt }
                b'>' => { self.bump(); Tok::Gt }
                b',' => { self.bump(); Tok::Comma }
                b'.' => { self.bump(); Tok::Dot }
                b'+' => { self.bump(); Tok::Plus }
                b'*' => { self.bump(); Tok::Star }
                b';' => { self.bump(); Tok::Semi }
                b'=' => { self.bump(); Tok::Eq }
                b':' => {
                    self.bump();
                    if self.pos < self.bytes.len() && self.bytes[self.pos] == b'=' {
                        self.bump();
                        Tok::ColonEq
                    } else {
                        return Err(self.error("`:=`", "`:`".to_string(), line, column));
                    }
                }
                b'0'..=b'9' => {
                    let start = self.pos;
                    let mut is_int = true;
                    while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                        self.bump();
                    }
                    if self.pos + 1 < self.bytes.len()
                        && self.bytes[self.pos] == b'.'
                        && self.bytes[self.pos + 1].is_ascii_digit()
                    {
                        is_int = false;
                        self.bump();
                        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                            self.bump();
                        }
                    }
                    if self.pos < self.bytes.len()
                        && (self.bytes[self.pos] == b'e' || self.bytes[self.pos] == b'E')
                    {
                        let mut ahead = self.pos + 1;
                        if ahead < self.bytes.len()
                            && (self.bytes[ahead] == b'+' || self.bytes[ahead] == b'-')
                        {
                            ahead += 1;
                        }
                        if ahead < self.bytes.len() && self.bytes[ahead].is_ascii_digit() {
                            is_int = false;
                            while self.pos < ahead {
                                self.bump();
                            }
                            while self.pos < self.bytes.len()
                                && self.bytes[self.pos].is_ascii_digit()
                            {
                                self.bump();
                            }
                        }
                    }
                    let text = &self.src[start..self.pos];
                    let value: f64 = text.parse().map_err(|_| {
                        self.error("a number", format!("`{text}`"), line, column)
                    })?;
                    Tok::Number { value, is_int }
                }
                b'A'..=b'Z' | b'a'..=b'z' => {
                    let start = self.pos;
                    while self.pos < self.bytes.len()
                        && (self.bytes[self.pos].is_ascii_alphanumeric()
                            || self.bytes[self.pos] == b'_')
                    {
                        self.bump();
                    }
                    Tok::Ident(self.src[start..self.pos].to_string())
                }
                other => {
                    return Err(self.error(
                        "a token",
                        format!("`{}`", other as char),
                        line,
                        column,
                    ));
                }
            };
            out.push(Spanned { tok, line, column });
        }
    }
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    origin: String,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.tokens[self.pos]
    }

    fn peek2(&self) -> &Spanned {
        &self.tokens[(self.pos + 1).min(self.tokens.len() - 1)]
    }

    fn advance(&mut self) -> Spanned {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, at: &Spanned, expected: &str) -> ParseError {
        ParseError {
            origin: self.origin.clone(),
            line: at.line,
            column: at.column,
            expected: expected.to_string(),
            found: at.tok.to_string(),
        }
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<Spanned, ParseError> {
        if self.peek().tok == tok {
            Ok(self.advance())
        } else {
            Err(self.error_at(&self.peek().clone(), expected))
        }
    }

    fn ident(&mut self, expected: &str) -> Result<String, ParseError> {
        match &self.peek().tok {
            Tok::Ident(name) => {
                let name = name.clone();
                self.advance();
                Ok(name)
            }
            _ => Err(self.error_at(&self.peek().clone(), expected)),
        }
    }

    fn model(&mut self) -> Result<Model, ParseError> {
        let mut definitions = Vec::new();
        let mut rate_bindings = BTreeMap::new();
        let mut count_bindings = BTreeMap::new();
        let mut system = None;

        loop {
            match &self.peek().tok {
                Tok::Eof => break,
                Tok::Ident(name) if name == "system" => {
                    self.advance();
                    self.expect(Tok::Eq, "`=` after `system`")?;
                    let coop = self.coop()?;
                    self.expect(Tok::Semi, "`;` after the system equation")?;
                    if system.is_some() {
                        let at = self.peek().clone();
                        return Err(self.error_at(&at, "at most one system equation"));
                    }
                    system = Some(coop);
                }
                Tok::Ident(_) => {
                    let name = self.ident("an identifier")?;
                    match &self.peek().tok {
                        Tok::Eq => {
                            self.advance();
                            // NUMBER => rate binding, anything else => definition.
                            if let Tok::Number { value, .. } = self.peek().tok {
                                self.advance();
                                self.expect(Tok::Semi, "`;` after a rate binding")?;
                                rate_bindings.insert(name, value);
                            } else {
                                let body = self.choice()?;
                                self.expect(Tok::Semi, "`;` after a definition")?;
                                definitions.push(Definition { name, body });
                            }
                        }
                        Tok::ColonEq => {
                            self.advance();
                            let at = self.peek().clone();
                            match at.tok {
                                Tok::Number { value, is_int: true } => {
                                    self.advance();
                                    self.expect(Tok::Semi, "`;` after a count binding")?;
                                    count_bindings.insert(name, value as u64);
                                }
                                _ => return Err(self.error_at(&at, "an integer")),
                            }
                        }
                        _ => {
                            let at = self.peek().clone();
                            return Err(self.error_at(&at, "`=` or `:=`"));
                        }
                    }
                }
                _ => {
                    let at = self.peek().clone();
                    return Err(self.error_at(&at, "a definition, a binding, or `system`"));
                }
            }
        }

        let system = system.ok_or_else(|| {
            let at = self.peek().clone();
            self.error_at(&at, "a system equation")
        })?;
        Ok(Model { definitions, rate_bindings, count_bindings, system })
    }

    fn choice(&mut self) -> Result<ProcessExpr, ParseError> {
        let mut expr = self.seq()?;
        while self.peek().tok == Tok::Plus {
            self.advance();
            let rhs = self.seq()?;
            expr = ProcessExpr::Choice(Box::new(expr), Box::new(rhs));
        }
        Ok(expr)
    }

    fn seq(&mut self) -> Result<ProcessExpr, ParseError> {
        match &self.peek().tok {
            Tok::LParen => {
                self.advance();
                let action = self.ident("an action name")?;
                self.expect(Tok::Comma, "`,` between action and rate")?;
                let rate = self.rate()?;
                self.expect(Tok::RParen, "`)` after the rate")?;
                self.expect(Tok::Dot, "`.` after a prefix")?;
                let continuation = self.seq()?;
                Ok(ProcessExpr::Prefix { action, rate, continuation: Box::new(continuation) })
            }
            Tok::Ident(_) => {
                let name = self.ident("a constant")?;
                Ok(ProcessExpr::Constant(name))
            }
            _ => {
                let at = self.peek().clone();
                Err(self.error_at(&at, "a prefix `(action, rate)` or a constant"))
            }
        }
    }

    fn rate(&mut self) -> Result<RateSpec, ParseError> {
        let at = self.peek().clone();
        match at.tok {
            Tok::Ident(name) => {
                self.advance();
                if name == "infty" {
                    Ok(RateSpec::Passive)
                } else {
                    Ok(RateSpec::Named(name))
                }
            }
            Tok::Number { value, .. } => {
                self.advance();
                Ok(RateSpec::Literal(value))
            }
            _ => Err(self.error_at(&at, "a rate (name, number, or `infty`)")),
        }
    }

    fn coop(&mut self) -> Result<ProcessExpr, ParseError> {
        let mut expr = self.pop()?;
        while self.peek().tok == Tok::Lt {
            self.advance();
            let mut actions = Vec::new();
            if let Tok::Ident(_) = self.peek().tok {
                actions.push(self.ident("an action name")?);
                while self.peek().tok == Tok::Comma {
                    self.advance();
                    actions.push(self.ident("an action name")?);
                }
            }
            self.expect(Tok::Gt, "`>` closing the cooperation set")?;
            let rhs = self.pop()?;
            expr = ProcessExpr::Cooperation {
                left: Box::new(expr),
                set: CooperationSet { actions },
                right: Box::new(rhs),
            };
        }
        Ok(expr)
    }

    fn pop(&mut self) -> Result<ProcessExpr, ParseError> {
        match &self.peek().tok {
            Tok::LParen => {
                self.advance();
                let inner = self.coop()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(_) if self.peek2().tok == Tok::LBracket => {
                let constant = self.ident("a constant")?;
                self.expect(Tok::LBracket, "`[`")?;
                let count = self.countexpr()?;
                self.expect(Tok::RBracket, "`]` closing the population count")?;
                Ok(ProcessExpr::Population { constant, count })
            }
            _ => {
                let at = self.peek().clone();
                Err(self.error_at(&at, "a population `Name[count]` or `(`"))
            }
        }
    }

    fn countexpr(&mut self) -> Result<CountExpr, ParseError> {
        let mut factors = vec![self.count_factor()?];
        while self.peek().tok == Tok::Star {
            self.advance();
            factors.push(self.count_factor()?);
        }
        Ok(CountExpr { factors })
    }

    fn count_factor(&mut self) -> Result<CountFactor, ParseError> {
        let at = self.peek().clone();
        match at.tok {
            Tok::Ident(name) => {
                self.advance();
                Ok(CountFactor::Name(name))
            }
            Tok::Number { value, is_int: true } => {
                self.advance();
                Ok(CountFactor::Literal(value as u64))
            }
            _ => Err(self.error_at(&at, "a count (name or integer)")),
        }
    }
}

/// Parses model text. Validation is not run here; see
/// [`crate::ast::validate_model`].
pub fn parse_model(src: &SourceModel) -> Result<Model, ParseError> {
    let tokens = Lexer::new(&src.text, &src.origin).tokenize()?;
    let mut parser = Parser { tokens, pos: 0, origin: src.origin.clone() };
    parser.model()
}

fn write_seq(out: &mut String, expr: &ProcessExpr) {
    match expr {
        ProcessExpr::Prefix { action, rate, continuation } => {
            out.push('(');
            out.push_str(action);
            out.push_str(", ");
            out.push_str(&rate.to_string());
            out.push_str(").");
            write_seq(out, continuation);
        }
        ProcessExpr::Constant(name) => out.push_str(name),
        ProcessExpr::Choice(l, r) => {
            // Choice is flattened; the grammar has no parentheses inside
            // sequential terms, so nesting order is not representable.
            write_seq(out, l);
            out.push_str(" + ");
            write_seq(out, r);
        }
        _ => unreachable!("composite term inside a sequential body"),
    }
}

fn write_coop(out: &mut String, expr: &ProcessExpr) {
    match expr {
        ProcessExpr::Population { constant, count } => {
            out.push_str(constant);
            out.push('[');
            out.push_str(&count.to_string());
            out.push(']');
        }
        ProcessExpr::Cooperation { left, set, right } => {
            // Left-associative: no parentheses on left-nested cooperation.
            write_coop(out, left);
            out.push_str(" <");
            out.push_str(&set.actions.join(", "));
            out.push_str("> ");
            if matches!(**right, ProcessExpr::Cooperation { .. }) {
                out.push('(');
                write_coop(out, right);
                out.push(')');
            } else {
                write_coop(out, right);
            }
        }
        _ => unreachable!("sequential term at population position"),
    }
}

/// Emits the canonical text for a model. `parse_model` maps the result back
/// to a structurally identical [`Model`].
pub fn serialize_model(model: &Model) -> String {
    let mut out = String::new();
    for (name, v) in &model.rate_bindings {
        out.push_str(name);
        out.push_str(" = ");
        out.push_str(&fmt_number(*v));
        out.push_str(";\n");
    }
    for (name, v) in &model.count_bindings {
        out.push_str(name);
        out.push_str(" := ");
        out.push_str(&v.to_string());
        out.push_str(";\n");
    }
    for def in &model.definitions {
        out.push_str(&def.name);
        out.push_str(" = ");
        write_seq(&mut out, &def.body);
        out.push_str(";\n");
    }
    out.push_str("system = ");
    write_coop(&mut out, &model.system);
    out.push_str(";\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::RateSpec;

    #[test]
    fn parses_prefix_chain() {
        let m = parse_model(&SourceModel::inline(
            "Ue1 = (acc_uep, r_a).(process, r_iat).Ue2;\n\
             Ue2 = (req_pduse, r_r).(rep_pduse, r_r).Ue1;\n\
             system = Ue1[n] <> Ue2[1];",
        ))
        .unwrap();
        let body = &m.definitions[0].body;
        match body {
            ProcessExpr::Prefix { action, rate, continuation } => {
                assert_eq!(action, "acc_uep");
                assert_eq!(*rate, RateSpec::Named("r_a".into()));
                match &**continuation {
                    ProcessExpr::Prefix { action, continuation, .. } => {
                        assert_eq!(action, "process");
                        assert_eq!(**continuation, ProcessExpr::Constant("Ue2".into()));
                    }
                    other => panic!("unexpected {other:?}"),
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_cooperation_set_is_interleaving() {
        let m = parse_model(&SourceModel::inline(
            "Uep1 = (a, 1).Uep1;\nPssfp1 = (b, 2).Pssfp1;\nsystem = Uep1[n] <> Pssfp1[2];",
        ))
        .unwrap();
        match &m.system {
            ProcessExpr::Cooperation { set, .. } => assert!(set.is_empty()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_rate_is_an_error() {
        let err = parse_model(&SourceModel::inline("P = (a, ).Q;\nsystem = P[1];")).unwrap_err();
        assert_eq!(err.line, 1);
        assert!(err.expected.contains("rate"), "{err}");
    }

    #[test]
    fn choice_parses_left_associated() {
        let m = parse_model(&SourceModel::inline(
            "M2 = (horeq, r).M1 + (reconfig, r).M1 + (pathswitch, r).M1;\n\
             M1 = (acc, r).M2;\nsystem = M1[1];",
        ))
        .unwrap();
        match &m.definitions[0].body {
            ProcessExpr::Choice(l, _) => {
                assert!(matches!(**l, ProcessExpr::Choice(_, _)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bindings_and_comments() {
        let m = parse_model(&SourceModel::inline(
            "// rates\nr_a = 200;\nN_t := 8;\nP = (a, r_a).P;\nsystem = P[N_t*2];",
        ))
        .unwrap();
        assert_eq!(m.rate_bindings["r_a"], 200.0);
        assert_eq!(m.count_bindings["N_t"], 8);
    }

    #[test]
    fn infty_is_passive() {
        let m =
            parse_model(&SourceModel::inline("P = (a, infty).P;\nsystem = P[1];")).unwrap();
        match &m.definitions[0].body {
            ProcessExpr::Prefix { rate, .. } => assert_eq!(*rate, RateSpec::Passive),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn roundtrip_is_structural_identity() {
        let text = "r_r = 100;\nA = (go, r_r).(back, 2.5).A;\nB = (go, r_r).B + (stop, 1).B;\n\
                    system = (A[3] <go> B[2]) <> A[1];";
        let m = parse_model(&SourceModel::inline(text)).unwrap();
        let s = serialize_model(&m);
        let m2 = parse_model(&SourceModel::inline(&s)).unwrap();
        assert_eq!(m, m2);
    }
}
