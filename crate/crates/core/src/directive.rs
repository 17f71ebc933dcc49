//! Directive strings such as `"parallel for reduction(+:count) schedule(static, 2)"`.
//!
//! The grammar is LL(1) over a small character cursor. `num_threads` and `if`
//! payloads are kept as raw, balanced-parenthesis expression text; evaluating
//! them is left to whoever binds the directive to a host program.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use thiserror::Error;

use crate::schedule::{ScheduleKind, ScheduleSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DirectiveName {
    Parallel,
    For,
    Sections,
    Section,
    Single,
    Task,
    Taskwait,
    Barrier,
    Critical,
}

impl DirectiveName {
    pub const ALL: [DirectiveName; 9] = [
        DirectiveName::Parallel,
        DirectiveName::For,
        DirectiveName::Sections,
        DirectiveName::Section,
        DirectiveName::Single,
        DirectiveName::Task,
        DirectiveName::Taskwait,
        DirectiveName::Barrier,
        DirectiveName::Critical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DirectiveName::Parallel => "parallel",
            DirectiveName::For => "for",
            DirectiveName::Sections => "sections",
            DirectiveName::Section => "section",
            DirectiveName::Single => "single",
            DirectiveName::Task => "task",
            DirectiveName::Taskwait => "taskwait",
            DirectiveName::Barrier => "barrier",
            DirectiveName::Critical => "critical",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.as_str() == word)
    }
}

impl fmt::Display for DirectiveName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReductionOp {
    Add,
    Mul,
    Sub,
    Min,
    Max,
    BitAnd,
    BitOr,
    BitXor,
    LogicalAnd,
    LogicalOr,
}

impl ReductionOp {
    pub const ALL: [ReductionOp; 10] = [
        ReductionOp::Add,
        ReductionOp::Mul,
        ReductionOp::Sub,
        ReductionOp::Min,
        ReductionOp::Max,
        ReductionOp::BitAnd,
        ReductionOp::BitOr,
        ReductionOp::BitXor,
        ReductionOp::LogicalAnd,
        ReductionOp::LogicalOr,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            ReductionOp::Add => "+",
            ReductionOp::Mul => "*",
            ReductionOp::Sub => "-",
            ReductionOp::Min => "min",
            ReductionOp::Max => "max",
            ReductionOp::BitAnd => "&",
            ReductionOp::BitOr => "|",
            ReductionOp::BitXor => "^",
            ReductionOp::LogicalAnd => "&&",
            ReductionOp::LogicalOr => "||",
        }
    }
}

impl fmt::Display for ReductionOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for ReductionOp {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Self::ALL.into_iter().find(|op| op.symbol() == s).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DefaultKind {
    Shared,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClauseKind {
    NumThreads,
    If,
    Private,
    FirstPrivate,
    LastPrivate,
    Shared,
    Default,
    Reduction,
    Schedule,
    Collapse,
    Nowait,
    CopyPrivate,
    Name,
}

impl ClauseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClauseKind::NumThreads => "num_threads",
            ClauseKind::If => "if",
            ClauseKind::Private => "private",
            ClauseKind::FirstPrivate => "firstprivate",
            ClauseKind::LastPrivate => "lastprivate",
            ClauseKind::Shared => "shared",
            ClauseKind::Default => "default",
            ClauseKind::Reduction => "reduction",
            ClauseKind::Schedule => "schedule",
            ClauseKind::Collapse => "collapse",
            ClauseKind::Nowait => "nowait",
            ClauseKind::CopyPrivate => "copyprivate",
            ClauseKind::Name => "name",
        }
    }

    /// Clause keywords as written in directive text. `Name` has no keyword; it is
    /// the parenthesised identifier after `critical`.
    fn from_keyword(word: &str) -> Option<Self> {
        use ClauseKind::*;
        [
            NumThreads,
            If,
            Private,
            FirstPrivate,
            LastPrivate,
            Shared,
            Default,
            Reduction,
            Schedule,
            Collapse,
            Nowait,
            CopyPrivate,
        ]
        .into_iter()
        .find(|k| k.as_str() == word)
    }

    fn is_data_sharing(self) -> bool {
        matches!(
            self,
            ClauseKind::Private
                | ClauseKind::FirstPrivate
                | ClauseKind::LastPrivate
                | ClauseKind::Shared
                | ClauseKind::Reduction
                | ClauseKind::CopyPrivate
        )
    }
}

impl fmt::Display for ClauseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Clause {
    NumThreads(String),
    If(String),
    Private(Vec<String>),
    FirstPrivate(Vec<String>),
    LastPrivate(Vec<String>),
    Shared(Vec<String>),
    Default(DefaultKind),
    Reduction(ReductionOp, Vec<String>),
    Schedule(ScheduleSpec),
    Collapse(u32),
    Nowait,
    CopyPrivate(Vec<String>),
    Name(String),
}

impl Clause {
    pub fn kind(&self) -> ClauseKind {
        match self {
            Clause::NumThreads(_) => ClauseKind::NumThreads,
            Clause::If(_) => ClauseKind::If,
            Clause::Private(_) => ClauseKind::Private,
            Clause::FirstPrivate(_) => ClauseKind::FirstPrivate,
            Clause::LastPrivate(_) => ClauseKind::LastPrivate,
            Clause::Shared(_) => ClauseKind::Shared,
            Clause::Default(_) => ClauseKind::Default,
            Clause::Reduction(..) => ClauseKind::Reduction,
            Clause::Schedule(_) => ClauseKind::Schedule,
            Clause::Collapse(_) => ClauseKind::Collapse,
            Clause::Nowait => ClauseKind::Nowait,
            Clause::CopyPrivate(_) => ClauseKind::CopyPrivate,
            Clause::Name(_) => ClauseKind::Name,
        }
    }

    /// The variable list carried by a data-sharing clause.
    pub fn vars(&self) -> Option<&[String]> {
        match self {
            Clause::Private(v)
            | Clause::FirstPrivate(v)
            | Clause::LastPrivate(v)
            | Clause::Shared(v)
            | Clause::CopyPrivate(v)
            | Clause::Reduction(_, v) => Some(v),
            _ => None,
        }
    }

    fn vars_mut(&mut self) -> Option<&mut Vec<String>> {
        match self {
            Clause::Private(v)
            | Clause::FirstPrivate(v)
            | Clause::LastPrivate(v)
            | Clause::Shared(v)
            | Clause::CopyPrivate(v)
            | Clause::Reduction(_, v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Clause::NumThreads(e) => write!(f, "num_threads({e})"),
            Clause::If(e) => write!(f, "if({e})"),
            Clause::Private(v) => write!(f, "private({})", v.join(", ")),
            Clause::FirstPrivate(v) => write!(f, "firstprivate({})", v.join(", ")),
            Clause::LastPrivate(v) => write!(f, "lastprivate({})", v.join(", ")),
            Clause::Shared(v) => write!(f, "shared({})", v.join(", ")),
            Clause::Default(DefaultKind::Shared) => f.write_str("default(shared)"),
            Clause::Default(DefaultKind::None) => f.write_str("default(none)"),
            Clause::Reduction(op, v) => write!(f, "reduction({op}:{})", v.join(", ")),
            Clause::Schedule(s) => match s.chunk {
                Some(c) => write!(f, "schedule({}, {c})", s.kind),
                None => write!(f, "schedule({})", s.kind),
            },
            Clause::Collapse(n) => write!(f, "collapse({n})"),
            Clause::Nowait => f.write_str("nowait"),
            Clause::CopyPrivate(v) => write!(f, "copyprivate({})", v.join(", ")),
            Clause::Name(n) => write!(f, "({n})"),
        }
    }
}

/// A parsed and validated directive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Directive {
    names: Vec<DirectiveName>,
    clauses: Vec<Clause>,
}

impl Directive {
    pub fn names(&self) -> &[DirectiveName] {
        &self.names
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn has(&self, name: DirectiveName) -> bool {
        self.names.contains(&name)
    }

    pub fn is_combined(&self) -> bool {
        self.names.len() > 1
    }

    pub fn clause(&self, kind: ClauseKind) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.kind() == kind)
    }

    pub fn num_threads(&self) -> Option<&str> {
        match self.clause(ClauseKind::NumThreads) {
            Some(Clause::NumThreads(e)) => Some(e),
            _ => None,
        }
    }

    pub fn if_expr(&self) -> Option<&str> {
        match self.clause(ClauseKind::If) {
            Some(Clause::If(e)) => Some(e),
            _ => None,
        }
    }

    pub fn schedule(&self) -> Option<ScheduleSpec> {
        match self.clause(ClauseKind::Schedule) {
            Some(Clause::Schedule(s)) => Some(*s),
            _ => None,
        }
    }

    pub fn collapse(&self) -> u32 {
        match self.clause(ClauseKind::Collapse) {
            Some(Clause::Collapse(n)) => *n,
            _ => 1,
        }
    }

    pub fn nowait(&self) -> bool {
        self.clause(ClauseKind::Nowait).is_some()
    }

    pub fn default_kind(&self) -> Option<DefaultKind> {
        match self.clause(ClauseKind::Default) {
            Some(Clause::Default(d)) => Some(*d),
            _ => None,
        }
    }

    pub fn critical_name(&self) -> Option<&str> {
        match self.clause(ClauseKind::Name) {
            Some(Clause::Name(n)) => Some(n),
            _ => None,
        }
    }

    /// Variables listed in clauses of `kind`, in order of appearance.
    pub fn vars(&self, kind: ClauseKind) -> Vec<&str> {
        self.clauses
            .iter()
            .filter(|c| c.kind() == kind)
            .flat_map(|c| c.vars().unwrap_or_default())
            .map(String::as_str)
            .collect()
    }

    pub fn reductions(&self) -> impl Iterator<Item = (ReductionOp, &[String])> {
        self.clauses.iter().filter_map(|c| match c {
            Clause::Reduction(op, v) => Some((*op, v.as_slice())),
            _ => None,
        })
    }
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.names.iter().map(|n| n.as_str()).collect();
        f.write_str(&names.join(" "))?;
        for clause in &self.clauses {
            match clause {
                Clause::Name(_) => write!(f, "{clause}")?,
                _ => write!(f, " {clause}")?,
            }
        }
        Ok(())
    }
}

impl FromStr for Directive {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, ParseError> {
        parse(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at offset {offset}: {message}")]
pub struct ParseError {
    /// 0-based character offset into the directive text.
    pub offset: usize,
    pub message: String,
}

impl ParseError {
    fn new(offset: usize, message: impl Into<String>) -> Self {
        ParseError {
            offset,
            message: message.into(),
        }
    }
}

/// Clause kinds accepted by each directive name.
pub fn validity_table() -> &'static BTreeMap<DirectiveName, BTreeSet<ClauseKind>> {
    static TABLE: OnceLock<BTreeMap<DirectiveName, BTreeSet<ClauseKind>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        use ClauseKind::*;
        let entries: [(DirectiveName, &[ClauseKind]); 9] = [
            (
                DirectiveName::Parallel,
                &[NumThreads, If, Private, FirstPrivate, Shared, Default, Reduction],
            ),
            (
                DirectiveName::For,
                &[
                    Private,
                    FirstPrivate,
                    LastPrivate,
                    Reduction,
                    Schedule,
                    Collapse,
                    Nowait,
                ],
            ),
            (
                DirectiveName::Sections,
                &[Private, FirstPrivate, LastPrivate, Reduction, Nowait],
            ),
            (DirectiveName::Single, &[Private, FirstPrivate, CopyPrivate, Nowait]),
            (DirectiveName::Task, &[If, Default, Private, FirstPrivate, Shared]),
            (DirectiveName::Critical, &[Name]),
            (DirectiveName::Taskwait, &[]),
            (DirectiveName::Barrier, &[]),
            (DirectiveName::Section, &[]),
        ];
        entries
            .into_iter()
            .map(|(name, kinds)| (name, kinds.iter().copied().collect()))
            .collect()
    })
}

/// Whether `kind` may appear on a directive with the given names. Combined
/// constructs accept the union of their parts, except `nowait`.
fn clause_allowed(names: &[DirectiveName], kind: ClauseKind) -> bool {
    let table = validity_table();
    if names.len() > 1 && kind == ClauseKind::Nowait {
        return false;
    }
    names.iter().any(|n| table[n].contains(&kind))
}

pub fn parse(text: &str) -> Result<Directive, ParseError> {
    Parser::new(text).parse()
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Int(String),
    LParen,
    RParen,
    Comma,
    Colon,
    Op(&'static str),
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Ident(s) => format!("identifier `{s}`"),
            Token::Int(s) => format!("integer `{s}`"),
            Token::LParen => "`(`".into(),
            Token::RParen => "`)`".into(),
            Token::Comma => "`,`".into(),
            Token::Colon => "`:`".into(),
            Token::Op(o) => format!("operator `{o}`"),
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

impl Parser {
    fn new(text: &str) -> Self {
        Parser {
            chars: text.chars().collect(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    /// Returns the next token and its starting offset without consuming it.
    fn peek(&mut self) -> Result<Option<(usize, Token)>, ParseError> {
        let save = self.pos;
        let tok = self.next_token();
        self.pos = save;
        tok
    }

    fn next_token(&mut self) -> Result<Option<(usize, Token)>, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let Some(&c) = self.chars.get(start) else {
            return Ok(None);
        };
        let next = self.chars.get(start + 1).copied();
        let tok = match c {
            '(' => {
                self.pos += 1;
                Token::LParen
            }
            ')' => {
                self.pos += 1;
                Token::RParen
            }
            ',' => {
                self.pos += 1;
                Token::Comma
            }
            ':' => {
                self.pos += 1;
                Token::Colon
            }
            '&' if next == Some('&') => {
                self.pos += 2;
                Token::Op("&&")
            }
            '|' if next == Some('|') => {
                self.pos += 2;
                Token::Op("||")
            }
            '+' | '*' | '-' | '&' | '|' | '^' => {
                self.pos += 1;
                Token::Op(match c {
                    '+' => "+",
                    '*' => "*",
                    '-' => "-",
                    '&' => "&",
                    '|' => "|",
                    _ => "^",
                })
            }
            c if c.is_ascii_digit() => {
                while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                Token::Int(self.chars[start..self.pos].iter().collect())
            }
            c if is_ident_start(c) => {
                while self.pos < self.chars.len() && is_ident_continue(self.chars[self.pos]) {
                    self.pos += 1;
                }
                Token::Ident(self.chars[start..self.pos].iter().collect())
            }
            other => return Err(ParseError::new(start, format!("unexpected character `{other}`"))),
        };
        Ok(Some((start, tok)))
    }

    fn end_offset(&self) -> usize {
        self.chars.len()
    }

    fn expect(&mut self, want: Token, context: &str) -> Result<usize, ParseError> {
        match self.next_token()? {
            Some((at, tok)) if tok == want => Ok(at),
            Some((at, tok)) => Err(ParseError::new(
                at,
                format!("expected {} {context}, found {}", want.describe(), tok.describe()),
            )),
            None => Err(ParseError::new(
                self.end_offset(),
                format!("expected {} {context}, found end of input", want.describe()),
            )),
        }
    }

    fn parse(mut self) -> Result<Directive, ParseError> {
        let names = self.parse_names()?;
        let mut parsed: Vec<(usize, Clause)> = Vec::new();

        if names == [DirectiveName::Critical] {
            if let Some((_, Token::LParen)) = self.peek()? {
                let open = self.expect(Token::LParen, "after `critical`")?;
                let (_, name) = self.ident("as critical name")?;
                self.expect(Token::RParen, "to close critical name")?;
                parsed.push((open, Clause::Name(name)));
            }
        }

        while let Some((at, tok)) = self.next_token()? {
            let Token::Ident(word) = tok else {
                return Err(ParseError::new(
                    at,
                    format!("expected a clause, found {}", tok.describe()),
                ));
            };
            let kind = ClauseKind::from_keyword(&word)
                .ok_or_else(|| ParseError::new(at, format!("unknown clause `{word}`")))?;
            if !clause_allowed(&names, kind) {
                let shown: Vec<&str> = names.iter().map(|n| n.as_str()).collect();
                return Err(ParseError::new(
                    at,
                    format!("clause `{kind}` is not valid on `{}`", shown.join(" ")),
                ));
            }
            let clause = self.parse_clause_body(kind, &word)?;
            parsed.push((at, clause));
        }

        let clauses = merge_and_validate(&names, parsed)?;
        Ok(Directive { names, clauses })
    }

    fn parse_names(&mut self) -> Result<Vec<DirectiveName>, ParseError> {
        let (at, first) = match self.next_token()? {
            Some((at, Token::Ident(w))) => (at, w),
            Some((at, tok)) => {
                return Err(ParseError::new(
                    at,
                    format!("expected a directive name, found {}", tok.describe()),
                ))
            }
            None => return Err(ParseError::new(self.end_offset(), "empty directive")),
        };
        let first = DirectiveName::from_keyword(&first)
            .ok_or_else(|| ParseError::new(at, format!("unknown directive `{first}`")))?;
        let mut names = vec![first];
        if first == DirectiveName::Parallel {
            if let Some((_, Token::Ident(w))) = self.peek()? {
                if let Some(second @ (DirectiveName::For | DirectiveName::Sections)) = DirectiveName::from_keyword(&w) {
                    self.next_token()?;
                    names.push(second);
                }
            }
        }
        if let Some((at, Token::Ident(w))) = self.peek()? {
            if let Some(extra) = DirectiveName::from_keyword(&w) {
                return Err(ParseError::new(
                    at,
                    format!(
                        "`{extra}` cannot be combined here; only `parallel for` and `parallel sections` are combined forms"
                    ),
                ));
            }
        }
        Ok(names)
    }

    fn ident(&mut self, context: &str) -> Result<(usize, String), ParseError> {
        match self.next_token()? {
            Some((at, Token::Ident(w))) => Ok((at, w)),
            Some((at, tok)) => Err(ParseError::new(
                at,
                format!("expected identifier {context}, found {}", tok.describe()),
            )),
            None => Err(ParseError::new(
                self.end_offset(),
                format!("expected identifier {context}, found end of input"),
            )),
        }
    }

    fn positive_int(&mut self, context: &str) -> Result<(usize, u64), ParseError> {
        match self.next_token()? {
            Some((at, Token::Int(digits))) => {
                let n: u64 = digits
                    .parse()
                    .map_err(|_| ParseError::new(at, format!("integer `{digits}` out of range")))?;
                if n == 0 {
                    return Err(ParseError::new(at, format!("{context} must be positive")));
                }
                Ok((at, n))
            }
            Some((at, tok)) => Err(ParseError::new(
                at,
                format!("expected integer {context}, found {}", tok.describe()),
            )),
            None => Err(ParseError::new(
                self.end_offset(),
                format!("expected integer {context}, found end of input"),
            )),
        }
    }

    fn var_list(&mut self, clause: &str) -> Result<Vec<String>, ParseError> {
        let mut vars: Vec<String> = Vec::new();
        loop {
            let (at, name) = self.ident(&format!("in `{clause}` list"))?;
            if vars.contains(&name) {
                return Err(ParseError::new(
                    at,
                    format!("variable `{name}` listed twice in `{clause}`"),
                ));
            }
            vars.push(name);
            match self.next_token()? {
                Some((_, Token::Comma)) => continue,
                Some((_, Token::RParen)) => return Ok(vars),
                Some((at, tok)) => {
                    return Err(ParseError::new(
                        at,
                        format!("expected `,` or `)` in `{clause}` list, found {}", tok.describe()),
                    ))
                }
                None => {
                    return Err(ParseError::new(
                        self.end_offset(),
                        format!("unterminated `{clause}` list"),
                    ))
                }
            }
        }
    }

    /// Captures raw text up to the matching `)`; the opening `(` is already consumed.
    fn raw_expression(&mut self, clause: &str, open: usize) -> Result<String, ParseError> {
        let start = self.pos;
        let mut depth = 1usize;
        while self.pos < self.chars.len() {
            match self.chars[self.pos] {
                '(' => depth += 1,
                ')' => {
                    depth -= 1;
                    if depth == 0 {
                        let raw: String = self.chars[start..self.pos].iter().collect();
                        self.pos += 1;
                        let raw = raw.trim().to_string();
                        if raw.is_empty() {
                            return Err(ParseError::new(open, format!("`{clause}` requires an expression")));
                        }
                        return Ok(raw);
                    }
                }
                _ => {}
            }
            self.pos += 1;
        }
        Err(ParseError::new(open, format!("unbalanced parentheses in `{clause}`")))
    }

    fn parse_clause_body(&mut self, kind: ClauseKind, word: &str) -> Result<Clause, ParseError> {
        if kind == ClauseKind::Nowait {
            return Ok(Clause::Nowait);
        }
        let open = self.expect(Token::LParen, &format!("after `{word}`"))?;
        let clause = match kind {
            ClauseKind::NumThreads => Clause::NumThreads(self.raw_expression(word, open)?),
            ClauseKind::If => Clause::If(self.raw_expression(word, open)?),
            ClauseKind::Private => Clause::Private(self.var_list(word)?),
            ClauseKind::FirstPrivate => Clause::FirstPrivate(self.var_list(word)?),
            ClauseKind::LastPrivate => Clause::LastPrivate(self.var_list(word)?),
            ClauseKind::Shared => Clause::Shared(self.var_list(word)?),
            ClauseKind::CopyPrivate => Clause::CopyPrivate(self.var_list(word)?),
            ClauseKind::Default => {
                let (at, value) = self.ident("in `default`")?;
                let d = match value.as_str() {
                    "shared" => DefaultKind::Shared,
                    "none" => DefaultKind::None,
                    other => {
                        return Err(ParseError::new(
                            at,
                            format!("`default` accepts `shared` or `none`, found `{other}`"),
                        ))
                    }
                };
                self.expect(Token::RParen, "to close `default`")?;
                Clause::Default(d)
            }
            ClauseKind::Reduction => {
                let op = match self.next_token()? {
                    Some((_, Token::Op(sym))) => sym.parse::<ReductionOp>().ok(),
                    Some((_, Token::Ident(w))) if w == "min" || w == "max" => w.parse::<ReductionOp>().ok(),
                    Some((at, tok)) => {
                        return Err(ParseError::new(
                            at,
                            format!("expected reduction operator, found {}", tok.describe()),
                        ))
                    }
                    None => None,
                };
                let op = op.ok_or_else(|| ParseError::new(self.end_offset(), "expected reduction operator"))?;
                self.expect(Token::Colon, "after reduction operator")?;
                Clause::Reduction(op, self.var_list(word)?)
            }
            ClauseKind::Schedule => {
                let (at, kind_word) = self.ident("as schedule kind")?;
                let sk = ScheduleKind::from_keyword(&kind_word)
                    .ok_or_else(|| ParseError::new(at, format!("unknown schedule kind `{kind_word}`")))?;
                let spec = match self.next_token()? {
                    Some((_, Token::RParen)) => ScheduleSpec::new(sk),
                    Some((_, Token::Comma)) => {
                        let (_, chunk) = self.positive_int("as schedule chunk")?;
                        self.expect(Token::RParen, "to close `schedule`")?;
                        ScheduleSpec::with_chunk(sk, chunk)
                    }
                    Some((at, tok)) => {
                        return Err(ParseError::new(
                            at,
                            format!("expected `,` or `)` in `schedule`, found {}", tok.describe()),
                        ))
                    }
                    None => return Err(ParseError::new(self.end_offset(), "unterminated `schedule`")),
                };
                Clause::Schedule(spec)
            }
            ClauseKind::Collapse => {
                let (at, n) = self.positive_int("in `collapse`")?;
                if n < 2 {
                    return Err(ParseError::new(at, "`collapse` requires at least 2 loops"));
                }
                let n = u32::try_from(n).map_err(|_| ParseError::new(at, "`collapse` depth out of range"))?;
                self.expect(Token::RParen, "to close `collapse`")?;
                Clause::Collapse(n)
            }
            ClauseKind::Nowait | ClauseKind::Name => unreachable!(),
        };
        Ok(clause)
    }
}

/// Merges repeated list clauses of one kind and rejects conflicting combinations.
fn merge_and_validate(names: &[DirectiveName], parsed: Vec<(usize, Clause)>) -> Result<Vec<Clause>, ParseError> {
    let mut out: Vec<Clause> = Vec::new();
    // variable -> (clause kind, offset of first listing)
    let mut sharing: BTreeMap<String, (ClauseKind, usize)> = BTreeMap::new();

    for (at, clause) in parsed {
        let kind = clause.kind();
        if kind.is_data_sharing() {
            for var in clause.vars().unwrap_or_default() {
                if let Some(&(prev, _)) = sharing.get(var) {
                    // firstprivate + lastprivate on the same variable is permitted.
                    let pair = [prev, kind];
                    let fp_lp = pair.contains(&ClauseKind::FirstPrivate)
                        && pair.contains(&ClauseKind::LastPrivate)
                        && prev != kind;
                    if !fp_lp {
                        return Err(ParseError::new(
                            at,
                            format!("variable `{var}` already appears in `{prev}`"),
                        ));
                    }
                } else {
                    sharing.insert(var.clone(), (kind, at));
                }
            }
            let slot = out.iter_mut().find(|c| match (&**c, &clause) {
                (Clause::Reduction(a, _), Clause::Reduction(b, _)) => a == b,
                (c, _) => c.kind() == kind,
            });
            match slot {
                Some(existing) => existing
                    .vars_mut()
                    .expect("data-sharing clause has a list")
                    .extend(clause.vars().unwrap_or_default().iter().cloned()),
                None => out.push(clause),
            }
        } else {
            if out.iter().any(|c| c.kind() == kind) {
                return Err(ParseError::new(at, format!("duplicate `{kind}` clause")));
            }
            out.push(clause);
        }
    }

    if names == [DirectiveName::Single]
        && out.iter().any(|c| c.kind() == ClauseKind::CopyPrivate)
        && out.iter().any(|c| c.kind() == ClauseKind::Nowait)
    {
        return Err(ParseError::new(
            0,
            "`copyprivate` and `nowait` cannot be used together on `single`",
        ));
    }
    Ok(out)
}
