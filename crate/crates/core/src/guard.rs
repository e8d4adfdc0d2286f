//! Guard and assignment expressions attached to model transitions.
//!
//! The language is deliberately tiny: integer and double-quoted string
//! literals, identifiers bound to the model's global variables, the reserved
//! `__input__` symbol (the text chosen by the agent), `+`/`-` on integers, the
//! six comparisons and the `and`/`or`/`not` connectives.
//!
//! Precedence, tightest first: unary (`not`, `-`), `+`/`-` (left associative),
//! comparisons (non associative), `and`, `or`.
//!
//! Identifiers are resolved and type checked while parsing, so a successfully
//! parsed expression can only fail at evaluation time when `__input__` is
//! referenced without an input string.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved identifier for the text selected by the second action dimension.
pub const INPUT_SYMBOL: &str = "__input__";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GuardError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unbound identifier `{name}` at position {pos}")]
    Unbound { name: String, pos: usize },
    #[error("type mismatch at position {pos}: {msg}")]
    TypeMismatch { pos: usize, msg: String },
    #[error("expression references {INPUT_SYMBOL} but no input string was supplied")]
    MissingInput,
    #[error("variable slot {slot} (`{name}`) is not bound in the store")]
    UnboundSlot { name: String, slot: usize },
    #[error("duplicate global variable `{0}`")]
    DuplicateVariable(String),
}

pub type Result<T> = std::result::Result<T, GuardError>;

/// A global variable value. Booleans are modeled as integers 0/1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Text(String),
}

impl Value {
    pub fn value_type(&self) -> ValueType {
        match self {
            Value::Int(_) => ValueType::Int,
            Value::Text(_) => ValueType::Text,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Text(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueType {
    Int,
    Text,
}

/// Static type of an expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExprType {
    Int,
    Text,
    Bool,
}

impl From<ValueType> for ExprType {
    fn from(t: ValueType) -> Self {
        match t {
            ValueType::Int => ExprType::Int,
            ValueType::Text => ExprType::Text,
        }
    }
}

impl fmt::Display for ExprType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExprType::Int => "int",
            ExprType::Text => "text",
            ExprType::Bool => "bool",
        })
    }
}

/// The declared global variables of a model, in declaration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Declarations {
    names: Vec<String>,
    initial: Vec<Value>,
    index: HashMap<String, usize>,
}

impl Declarations {
    pub fn new<I, S>(vars: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Value)>,
        S: Into<String>,
    {
        let mut decls = Declarations::default();
        for (name, value) in vars {
            let name = name.into();
            if decls.index.contains_key(&name) {
                return Err(GuardError::DuplicateVariable(name));
            }
            decls.index.insert(name.clone(), decls.names.len());
            decls.names.push(name);
            decls.initial.push(value);
        }
        Ok(decls)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn lookup(&self, name: &str) -> Option<(usize, ValueType)> {
        self.index
            .get(name)
            .map(|&slot| (slot, self.initial[slot].value_type()))
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.initial.iter())
    }
}

/// Per-run variable values, indexed like the declarations they came from.
#[derive(Debug, Clone)]
pub struct VarStore {
    decls: Arc<Declarations>,
    values: Vec<Value>,
}

impl PartialEq for VarStore {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values && self.decls.names == other.decls.names
    }
}

impl Eq for VarStore {}

impl std::hash::Hash for VarStore {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.values.hash(state);
    }
}

impl VarStore {
    /// A store holding every variable's declared initial value.
    pub fn initial(decls: Arc<Declarations>) -> Self {
        let values = decls.initial.clone();
        VarStore { decls, values }
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.decls.lookup(name).map(|(slot, _)| &self.values[slot])
    }

    /// Overwrites a variable. The new value must keep the declared type.
    pub fn set(&mut self, name: &str, value: Value) -> Result<()> {
        let (slot, ty) = self.decls.lookup(name).ok_or_else(|| GuardError::Unbound {
            name: name.to_string(),
            pos: 0,
        })?;
        if value.value_type() != ty {
            return Err(GuardError::TypeMismatch {
                pos: 0,
                msg: format!("`{name}` is declared {}", ExprType::from(ty)),
            });
        }
        self.values[slot] = value;
        Ok(())
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn declarations(&self) -> &Arc<Declarations> {
        &self.decls
    }

    fn slot(&self, name: &str, slot: usize) -> Result<&Value> {
        self.values
            .get(slot)
            .ok_or_else(|| GuardError::UnboundSlot {
                name: name.to_string(),
                slot,
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 3,
            BinOp::Add | BinOp::Sub => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(i64),
    Text(String),
    Var {
        name: String,
        slot: usize,
    },
    Input,
    Not(Box<Expr>),
    Neg(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

const PREC_UNARY: u8 = 5;
const PREC_ATOM: u8 = 6;

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Not(_) | Expr::Neg(_) => PREC_UNARY,
            _ => PREC_ATOM,
        }
    }

    pub fn references_input(&self) -> bool {
        match self {
            Expr::Input => true,
            Expr::Int(_) | Expr::Text(_) | Expr::Var { .. } => false,
            Expr::Not(e) | Expr::Neg(e) => e.references_input(),
            Expr::Binary { lhs, rhs, .. } => lhs.references_input() || rhs.references_input(),
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Int(v) => write!(f, "{v}"),
            Expr::Text(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            Expr::Var { name, .. } => f.write_str(name),
            Expr::Input => f.write_str(INPUT_SYMBOL),
            Expr::Not(e) => {
                f.write_str("not ")?;
                e.fmt_child(f, PREC_UNARY)
            }
            Expr::Neg(e) => {
                f.write_str("-")?;
                e.fmt_child(f, PREC_UNARY)
            }
            Expr::Binary { op, lhs, rhs } => {
                let p = op.precedence();
                // Comparisons do not chain, so both sides bind tighter.
                let lhs_min = if p == 3 { p + 1 } else { p };
                lhs.fmt_child(f, lhs_min)?;
                write!(f, " {} ", op.symbol())?;
                rhs.fmt_child(f, p + 1)
            }
        }
    }
}

/// A parsed, resolved and type-checked expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GuardExpr {
    root: Expr,
    ty: ExprType,
}

impl GuardExpr {
    pub fn root(&self) -> &Expr {
        &self.root
    }

    pub fn ty(&self) -> ExprType {
        self.ty
    }

    /// Evaluates a boolean expression. Non-boolean expressions are rejected
    /// when a guard is parsed, so this only fails on a missing input.
    pub fn holds(&self, vars: &VarStore, input: Option<&str>) -> Result<bool> {
        eval_bool(&self.root, vars, input)
    }
}

impl fmt::Display for GuardExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

/// `target = expr`
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    pub target: String,
    slot: usize,
    pub expr: Expr,
}

impl Assignment {
    pub fn references_input(&self) -> bool {
        self.expr.references_input()
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.target, self.expr)
    }
}

/// Result of evaluating an arbitrary expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scalar {
    Bool(bool),
    Int(i64),
    Text(String),
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Str(String),
    Ident(String),
    And,
    Or,
    Not,
    Op(BinOp),
    Minus,
    Plus,
    Assign,
    LParen,
    RParen,
    Eof,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let syntax = |pos: usize, msg: &str| GuardError::Syntax {
        pos,
        msg: msg.to_string(),
    };
    while i < chars.len() {
        let (pos, c) = chars[i];
        let peek = chars.get(i + 1).map(|&(_, c)| c);
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => {
                out.push((Tok::LParen, pos));
                i += 1;
            }
            ')' => {
                out.push((Tok::RParen, pos));
                i += 1;
            }
            '+' => {
                out.push((Tok::Plus, pos));
                i += 1;
            }
            '-' => {
                out.push((Tok::Minus, pos));
                i += 1;
            }
            '=' if peek == Some('=') => {
                out.push((Tok::Op(BinOp::Eq), pos));
                i += 2;
            }
            '=' => {
                out.push((Tok::Assign, pos));
                i += 1;
            }
            '!' if peek == Some('=') => {
                out.push((Tok::Op(BinOp::Ne), pos));
                i += 2;
            }
            '<' | '>' => {
                let (op, len) = match (c, peek) {
                    ('<', Some('=')) => (BinOp::Le, 2),
                    ('<', _) => (BinOp::Lt, 1),
                    ('>', Some('=')) => (BinOp::Ge, 2),
                    _ => (BinOp::Gt, 1),
                };
                out.push((Tok::Op(op), pos));
                i += len;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(syntax(pos, "unterminated string literal")),
                        Some(&(_, '"')) => {
                            i += 1;
                            break;
                        }
                        Some(&(esc_pos, '\\')) => match chars.get(i + 1) {
                            Some(&(_, e @ ('"' | '\\'))) => {
                                s.push(e);
                                i += 2;
                            }
                            _ => return Err(syntax(esc_pos, "invalid escape sequence")),
                        },
                        Some(&(_, c)) => {
                            s.push(c);
                            i += 1;
                        }
                    }
                }
                out.push((Tok::Str(s), pos));
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].1.is_ascii_digit() {
                    i += 1;
                }
                let end = chars.get(i).map_or(text.len(), |&(p, _)| p);
                let lit = &text[pos..end];
                let v = lit
                    .parse::<i64>()
                    .map_err(|_| syntax(chars[start].0, "integer literal out of range"))?;
                out.push((Tok::Int(v), pos));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < chars.len() && (chars[i].1.is_ascii_alphanumeric() || chars[i].1 == '_') {
                    i += 1;
                }
                let end = chars.get(i).map_or(text.len(), |&(p, _)| p);
                let word = &text[pos..end];
                let tok = match word {
                    "and" => Tok::And,
                    "or" => Tok::Or,
                    "not" => Tok::Not,
                    _ => Tok::Ident(word.to_string()),
                };
                out.push((tok, pos));
            }
            other => return Err(syntax(pos, &format!("unexpected character `{other}`"))),
        }
    }
    out.push((Tok::Eof, text.len()));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    at: usize,
    decls: &'a Declarations,
}

type Typed = (Expr, ExprType);

impl<'a> Parser<'a> {
    fn new(text: &str, decls: &'a Declarations) -> Result<Self> {
        Ok(Parser {
            toks: lex(text)?,
            at: 0,
            decls,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(GuardError::Syntax {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn expect_eof(&self) -> Result<()> {
        match self.peek() {
            Tok::Eof => Ok(()),
            t => self.error(format!("unexpected trailing token {t:?}")),
        }
    }

    fn or_expr(&mut self) -> Result<Typed> {
        let start = self.pos();
        let mut lhs = self.and_expr()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let rhs_pos = self.pos();
            let rhs = self.and_expr()?;
            lhs = logical(BinOp::Or, lhs, rhs, start, rhs_pos)?;
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Typed> {
        let start = self.pos();
        let mut lhs = self.cmp_expr()?;
        while *self.peek() == Tok::And {
            self.bump();
            let rhs_pos = self.pos();
            let rhs = self.cmp_expr()?;
            lhs = logical(BinOp::And, lhs, rhs, start, rhs_pos)?;
        }
        Ok(lhs)
    }

    fn cmp_expr(&mut self) -> Result<Typed> {
        let start = self.pos();
        let lhs = self.add_expr()?;
        let Tok::Op(op) = *self.peek() else {
            return Ok(lhs);
        };
        let op_pos = self.pos();
        self.bump();
        let rhs = self.add_expr()?;
        if let Tok::Op(_) = self.peek() {
            return self.error("comparisons cannot be chained");
        }
        let ordered = !matches!(op, BinOp::Eq | BinOp::Ne);
        let ok = lhs.1 == rhs.1 && (!ordered || lhs.1 == ExprType::Int);
        if !ok {
            return Err(GuardError::TypeMismatch {
                pos: op_pos,
                msg: format!(
                    "cannot apply `{}` to {} (at {start}) and {}",
                    op.symbol(),
                    lhs.1,
                    rhs.1
                ),
            });
        }
        Ok((binary(op, lhs.0, rhs.0), ExprType::Bool))
    }

    fn add_expr(&mut self) -> Result<Typed> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let op_pos = self.pos();
            self.bump();
            let rhs = self.unary()?;
            if lhs.1 != ExprType::Int || rhs.1 != ExprType::Int {
                return Err(GuardError::TypeMismatch {
                    pos: op_pos,
                    msg: format!(
                        "`{}` needs int operands, got {} and {}",
                        op.symbol(),
                        lhs.1,
                        rhs.1
                    ),
                });
            }
            lhs = (binary(op, lhs.0, rhs.0), ExprType::Int);
        }
    }

    fn unary(&mut self) -> Result<Typed> {
        let pos = self.pos();
        match self.peek() {
            Tok::Not => {
                self.bump();
                let (e, ty) = self.unary()?;
                if ty != ExprType::Bool {
                    return Err(GuardError::TypeMismatch {
                        pos,
                        msg: format!("`not` needs a bool operand, got {ty}"),
                    });
                }
                Ok((Expr::Not(Box::new(e)), ExprType::Bool))
            }
            Tok::Minus => {
                self.bump();
                let (e, ty) = self.unary()?;
                if ty != ExprType::Int {
                    return Err(GuardError::TypeMismatch {
                        pos,
                        msg: format!("unary `-` needs an int operand, got {ty}"),
                    });
                }
                Ok((Expr::Neg(Box::new(e)), ExprType::Int))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Typed> {
        let (tok, pos) = self.bump();
        match tok {
            Tok::Int(v) => Ok((Expr::Int(v), ExprType::Int)),
            Tok::Str(s) => Ok((Expr::Text(s), ExprType::Text)),
            Tok::Ident(name) if name == INPUT_SYMBOL => Ok((Expr::Input, ExprType::Text)),
            Tok::Ident(name) => match self.decls.lookup(&name) {
                Some((slot, ty)) => Ok((Expr::Var { name, slot }, ty.into())),
                None => Err(GuardError::Unbound { name, pos }),
            },
            Tok::LParen => {
                let inner = self.or_expr()?;
                match self.bump() {
                    (Tok::RParen, _) => Ok(inner),
                    (_, pos) => Err(GuardError::Syntax {
                        pos,
                        msg: "expected `)`".into(),
                    }),
                }
            }
            Tok::Eof => Err(GuardError::Syntax {
                pos,
                msg: "unexpected end of expression".into(),
            }),
            t => Err(GuardError::Syntax {
                pos,
                msg: format!("unexpected token {t:?}"),
            }),
        }
    }
}

fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
    Expr::Binary {
        op,
        lhs: Box::new(lhs),
        rhs: Box::new(rhs),
    }
}

fn logical(op: BinOp, lhs: Typed, rhs: Typed, lhs_pos: usize, rhs_pos: usize) -> Result<Typed> {
    for (ty, pos) in [(lhs.1, lhs_pos), (rhs.1, rhs_pos)] {
        if ty != ExprType::Bool {
            return Err(GuardError::TypeMismatch {
                pos,
                msg: format!("`{}` needs bool operands, got {ty}", op.symbol()),
            });
        }
    }
    Ok((binary(op, lhs.0, rhs.0), ExprType::Bool))
}

/// Parses any expression, resolving identifiers against `decls`.
pub fn parse_expr(text: &str, decls: &Declarations) -> Result<GuardExpr> {
    let mut p = Parser::new(text, decls)?;
    let (root, ty) = p.or_expr()?;
    p.expect_eof()?;
    Ok(GuardExpr { root, ty })
}

/// Parses an expression that must be boolean.
pub fn parse_guard(text: &str, decls: &Declarations) -> Result<GuardExpr> {
    let g = parse_expr(text, decls)?;
    if g.ty != ExprType::Bool {
        return Err(GuardError::TypeMismatch {
            pos: 0,
            msg: format!("guard must be bool, got {}", g.ty),
        });
    }
    Ok(g)
}

/// Parses `target = expr`.
pub fn parse_assignment(text: &str, decls: &Declarations) -> Result<Assignment> {
    let mut p = Parser::new(text, decls)?;
    let (target, pos) = match p.bump() {
        (Tok::Ident(name), pos) if name != INPUT_SYMBOL => (name, pos),
        (_, pos) => {
            return Err(GuardError::Syntax {
                pos,
                msg: "assignment must start with a variable name".into(),
            })
        }
    };
    let Some((slot, target_ty)) = decls.lookup(&target) else {
        return Err(GuardError::Unbound { name: target, pos });
    };
    match p.bump() {
        (Tok::Assign, _) => {}
        (_, pos) => {
            return Err(GuardError::Syntax {
                pos,
                msg: "expected `=`".into(),
            })
        }
    }
    let expr_pos = p.pos();
    let (expr, ty) = p.or_expr()?;
    p.expect_eof()?;
    if ty != ExprType::from(target_ty) {
        return Err(GuardError::TypeMismatch {
            pos: expr_pos,
            msg: format!(
                "cannot assign {ty} to `{target}` declared {}",
                ExprType::from(target_ty)
            ),
        });
    }
    Ok(Assignment { target, slot, expr })
}

// ---------------------------------------------------------------------------
// Evaluation

fn eval_int(e: &Expr, vars: &VarStore) -> Result<i64> {
    match e {
        Expr::Int(v) => Ok(*v),
        Expr::Var { name, slot } => match vars.slot(name, *slot)? {
            Value::Int(v) => Ok(*v),
            Value::Text(_) => Err(GuardError::UnboundSlot {
                name: name.clone(),
                slot: *slot,
            }),
        },
        Expr::Neg(inner) => Ok(eval_int(inner, vars)?.wrapping_neg()),
        Expr::Binary { op, lhs, rhs } => {
            let (a, b) = (eval_int(lhs, vars)?, eval_int(rhs, vars)?);
            Ok(match op {
                BinOp::Add => a.wrapping_add(b),
                BinOp::Sub => a.wrapping_sub(b),
                _ => unreachable!("type checker admits only +/- on ints"),
            })
        }
        _ => unreachable!("type checker admits only int expressions here"),
    }
}

fn eval_text<'a>(e: &'a Expr, vars: &'a VarStore, input: Option<&'a str>) -> Result<&'a str> {
    match e {
        Expr::Text(s) => Ok(s),
        Expr::Input => input.ok_or(GuardError::MissingInput),
        Expr::Var { name, slot } => match vars.slot(name, *slot)? {
            Value::Text(s) => Ok(s),
            Value::Int(_) => Err(GuardError::UnboundSlot {
                name: name.clone(),
                slot: *slot,
            }),
        },
        _ => unreachable!("type checker admits only text atoms here"),
    }
}

fn operand_type(e: &Expr, vars: &VarStore) -> ExprType {
    match e {
        Expr::Int(_) | Expr::Neg(_) => ExprType::Int,
        Expr::Text(_) | Expr::Input => ExprType::Text,
        Expr::Var { slot, .. } => match vars.values.get(*slot) {
            Some(Value::Text(_)) => ExprType::Text,
            _ => ExprType::Int,
        },
        Expr::Not(_) => ExprType::Bool,
        Expr::Binary { op, .. } => match op {
            BinOp::Add | BinOp::Sub => ExprType::Int,
            _ => ExprType::Bool,
        },
    }
}

fn eval_bool(e: &Expr, vars: &VarStore, input: Option<&str>) -> Result<bool> {
    match e {
        Expr::Not(inner) => Ok(!eval_bool(inner, vars, input)?),
        Expr::Binary { op, lhs, rhs } => match op {
            BinOp::And => Ok(eval_bool(lhs, vars, input)? && eval_bool(rhs, vars, input)?),
            BinOp::Or => Ok(eval_bool(lhs, vars, input)? || eval_bool(rhs, vars, input)?),
            BinOp::Eq | BinOp::Ne => {
                let equal = match operand_type(lhs, vars) {
                    ExprType::Int => eval_int(lhs, vars)? == eval_int(rhs, vars)?,
                    ExprType::Text => eval_text(lhs, vars, input)? == eval_text(rhs, vars, input)?,
                    ExprType::Bool => eval_bool(lhs, vars, input)? == eval_bool(rhs, vars, input)?,
                };
                Ok(equal == (*op == BinOp::Eq))
            }
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                let (a, b) = (eval_int(lhs, vars)?, eval_int(rhs, vars)?);
                Ok(match op {
                    BinOp::Lt => a < b,
                    BinOp::Le => a <= b,
                    BinOp::Gt => a > b,
                    _ => a >= b,
                })
            }
            BinOp::Add | BinOp::Sub => unreachable!("arithmetic is never boolean"),
        },
        _ => unreachable!("type checker admits only boolean expressions here"),
    }
}

fn eval_scalar(e: &Expr, ty: ExprType, vars: &VarStore, input: Option<&str>) -> Result<Scalar> {
    Ok(match ty {
        ExprType::Bool => Scalar::Bool(eval_bool(e, vars, input)?),
        ExprType::Int => Scalar::Int(eval_int(e, vars)?),
        ExprType::Text => Scalar::Text(eval_text(e, vars, input)?.to_string()),
    })
}

/// Evaluates `expr` without touching `vars`.
pub fn eval_expr(expr: &GuardExpr, vars: &VarStore, input: Option<&str>) -> Result<Scalar> {
    eval_scalar(&expr.root, expr.ty, vars, input)
}

/// Applies assignments in order, each one seeing the effects of the previous
/// ones, and returns the updated copy.
pub fn exec_set(
    assignments: &[Assignment],
    vars: &VarStore,
    input: Option<&str>,
) -> Result<VarStore> {
    let mut out = vars.clone();
    exec_set_in_place(assignments, &mut out, input)?;
    Ok(out)
}

pub(crate) fn exec_set_in_place(
    assignments: &[Assignment],
    vars: &mut VarStore,
    input: Option<&str>,
) -> Result<()> {
    for a in assignments {
        let current = vars.slot(&a.target, a.slot)?;
        let value = match current {
            Value::Int(_) => Value::Int(eval_int(&a.expr, vars)?),
            Value::Text(_) => Value::Text(eval_text(&a.expr, vars, input)?.to_string()),
        };
        vars.values[a.slot] = value;
    }
    Ok(())
}
