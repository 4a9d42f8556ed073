//! SMT-LIB2 export of a path's predicate system over the reals (QF_NRA).
//!
//! Every step `i` gets one symbol per touched storage slot, `|S{i}_{slot}|`,
//! and every action one free input `|P{i}|`. Constant-product fees are folded
//! into the transition as integer constants, so they do not appear as slots.
//! [`evaluate`] interprets the same assertions numerically, which is how the
//! exporter is tested against the simulator.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::market::{ActionSpec, AssetId, MarketError, StorageKey, VenueKind, WorldState};
use crate::Real;

/// Largest integer Bancor exponent written out as a product.
pub const MAX_EXPONENT: u32 = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmtError {
    #[error("venue {venue} ({kind}) has no closed-form predicate")]
    UnsupportedVenue { venue: String, kind: String },
    #[error("symbol {0:?} cannot be quoted")]
    BadSymbol(String),
    #[error("expected {expected} params, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error(transparent)]
    Market(#[from] MarketError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Var(String),
    Num(Real),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Vec<Expr>),
    Div(Box<Expr>, Box<Expr>),
}

fn var(s: &str) -> Expr {
    Expr::Var(s.to_string())
}
fn num(v: Real) -> Expr {
    Expr::Num(v)
}
fn add(a: Expr, b: Expr) -> Expr {
    Expr::Add(Box::new(a), Box::new(b))
}
fn sub(a: Expr, b: Expr) -> Expr {
    Expr::Sub(Box::new(a), Box::new(b))
}
fn div(a: Expr, b: Expr) -> Expr {
    Expr::Div(Box::new(a), Box::new(b))
}

/// Decimal literal accepted by SMT-LIB2 readers; negatives use `(- x)`.
pub fn literal(v: Real) -> String {
    let mut s = format!("{}", v.abs());
    if !s.contains('.') {
        s.push_str(".0");
    }
    if v < 0.0 {
        format!("(- {s})")
    } else {
        s
    }
}

impl Expr {
    pub fn eval(&self, env: &BTreeMap<String, Real>) -> Option<Real> {
        Some(match self {
            Expr::Var(v) => *env.get(v)?,
            Expr::Num(x) => *x,
            Expr::Add(a, b) => a.eval(env)? + b.eval(env)?,
            Expr::Sub(a, b) => a.eval(env)? - b.eval(env)?,
            Expr::Mul(xs) => {
                let mut p = 1.0;
                for x in xs {
                    p *= x.eval(env)?;
                }
                p
            }
            Expr::Div(a, b) => a.eval(env)? / b.eval(env)?,
        })
    }

    fn vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Var(v) => out.push(v),
            Expr::Num(_) => {}
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Div(a, b) => {
                a.vars(out);
                b.vars(out);
            }
            Expr::Mul(xs) => xs.iter().for_each(|x| x.vars(out)),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(v) => write!(f, "|{v}|"),
            Expr::Num(x) => f.write_str(&literal(*x)),
            Expr::Add(a, b) => write!(f, "(+ {a} {b})"),
            Expr::Sub(a, b) => write!(f, "(- {a} {b})"),
            Expr::Mul(xs) => {
                f.write_str("(*")?;
                for x in xs {
                    write!(f, " {x}")?;
                }
                f.write_str(")")
            }
            Expr::Div(a, b) => write!(f, "(/ {a} {b})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Eq,
    Ge,
    Le,
}

/// Which part of the encoding an assertion belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Initial,
    Range,
    Transition,
    Frame,
    Objective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    pub group: Group,
    pub rel: Rel,
    pub lhs: Expr,
    pub rhs: Expr,
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.rel {
            Rel::Eq => "=",
            Rel::Ge => ">=",
            Rel::Le => "<=",
        };
        write!(f, "(assert ({op} {} {}))", self.lhs, self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmtProblem {
    pub block: u64,
    pub path: Vec<String>,
    pub params: Vec<String>,
    pub slots: Vec<StorageKey>,
    pub assertions: Vec<Assertion>,
}

pub fn state_symbol(step: usize, slot: &StorageKey) -> String {
    format!("S{step}_{slot}")
}

fn param_symbol(i: usize) -> String {
    format!("P{}", i + 1)
}

/// Slots the encoding tracks: every key of the path except constant-product fees.
fn slots_for(path: &[&ActionSpec], state: &WorldState) -> Vec<StorageKey> {
    let mut out = BTreeSet::new();
    for a in path {
        for k in &a.storage_keys {
            let cp_fee = k.field == "fee"
                && matches!(
                    state.venues.get(&crate::market::VenueId::new(k.scope.clone())).map(|v| &v.kind),
                    Some(VenueKind::ConstantProduct { .. })
                );
            if !cp_fee {
                out.insert(k.clone());
            }
        }
    }
    out.into_iter().collect()
}

/// Builds the predicate system asking whether `path` earns at least `z` of `base`.
pub fn build_problem(
    path: &[&ActionSpec],
    state: &WorldState,
    base: &AssetId,
    z: Real,
) -> Result<SmtProblem, SmtError> {
    let slots = slots_for(path, state);
    for s in &slots {
        let sym = state_symbol(0, s);
        if sym.contains('|') || sym.contains('\\') {
            return Err(SmtError::BadSymbol(sym));
        }
    }
    let mut asserts = Vec::new();
    let mut push = |group, rel, lhs, rhs| asserts.push(Assertion { group, rel, lhs, rhs });
    for s in &slots {
        let v = state.read_key(s).ok_or_else(|| MarketError::UnknownAsset(format!("no value for {s}")))?;
        push(Group::Initial, Rel::Eq, var(&state_symbol(0, s)), num(v));
    }
    for (i, a) in path.iter().enumerate() {
        let p = var(&param_symbol(i));
        let prev = |k: &StorageKey| var(&state_symbol(i, k));
        let trader_in = StorageKey::trader(&a.input_asset);
        push(Group::Range, Rel::Ge, p.clone(), num(0.0));
        push(Group::Range, Rel::Le, p.clone(), prev(&trader_in));

        let venue = state.venue(&a.venue)?;
        let unsupported =
            || SmtError::UnsupportedVenue { venue: a.venue.0.clone(), kind: venue.kind.tag().to_string() };
        let out_asset = a.output_asset.as_ref().ok_or_else(unsupported)?;
        let r_in = StorageKey::venue(&a.venue, a.input_asset.as_str());
        let r_out = StorageKey::venue(&a.venue, out_asset.as_str());
        let received = match &venue.kind {
            VenueKind::ConstantProduct { fee_num, fee_den } => {
                let fp = Expr::Mul(vec![num(*fee_num as Real), p.clone()]);
                div(
                    Expr::Mul(vec![num(*fee_num as Real), p.clone(), prev(&r_out)]),
                    add(Expr::Mul(vec![prev(&r_in), num(*fee_den as Real)]), fp),
                )
            }
            VenueKind::BancorConverter { ratios, .. } => {
                let (wi, wo) = (ratios.get(&a.input_asset), ratios.get(out_asset));
                let e = match (wi, wo) {
                    (Some(&wi), Some(&wo)) if wo > 0 && wi % wo == 0 && wi / wo <= MAX_EXPONENT => wi / wo,
                    _ => return Err(unsupported()),
                };
                let base_ratio = div(prev(&r_in), add(prev(&r_in), p.clone()));
                let pow = if e == 1 { base_ratio } else { Expr::Mul(vec![base_ratio; e as usize]) };
                let fee = StorageKey::venue(&a.venue, "fee");
                let keep = sub(num(1e6), prev(&fee));
                div(Expr::Mul(vec![prev(&r_out), sub(num(1.0), pow), keep.clone(), keep]), num(1e12))
            }
            VenueKind::OneToOne => p.clone(),
            VenueKind::OracleShort { .. } => return Err(unsupported()),
        };
        let trader_out = StorageKey::trader(out_asset);
        let next = |k: &StorageKey| var(&state_symbol(i + 1, k));
        for s in &slots {
            let rhs = if *s == trader_in {
                sub(prev(s), p.clone())
            } else if *s == trader_out {
                add(prev(s), received.clone())
            } else if *s == r_in {
                add(prev(s), p.clone())
            } else if *s == r_out {
                sub(prev(s), received.clone())
            } else {
                push(Group::Frame, Rel::Eq, next(s), prev(s));
                continue;
            };
            push(Group::Transition, Rel::Eq, next(s), rhs);
        }
        push(Group::Range, Rel::Ge, next(&r_out), num(0.0));
    }
    let n = path.len();
    for s in slots.iter().filter(|s| s.scope == StorageKey::TRADER) {
        let fin = var(&state_symbol(n, s));
        let init = var(&state_symbol(0, s));
        if s.field == base.as_str() {
            push(Group::Objective, Rel::Ge, fin, add(init, num(z)));
        } else {
            push(Group::Objective, Rel::Eq, fin, init);
        }
    }
    Ok(SmtProblem {
        block: state.block_height,
        path: path.iter().map(|a| a.action_id.clone()).collect(),
        params: (0..n).map(param_symbol).collect(),
        slots,
        assertions: asserts,
    })
}

impl SmtProblem {
    /// Number of state symbols per step.
    pub fn slots_per_step(&self) -> usize {
        self.slots.len()
    }

    pub fn to_smtlib(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "; block {}", self.block);
        let _ = writeln!(out, "; path {}", self.path.join(" "));
        out.push_str("(set-logic QF_NRA)\n");
        for p in &self.params {
            let _ = writeln!(out, "(declare-fun |{p}| () Real)");
        }
        for step in 0..=self.path.len() {
            for s in &self.slots {
                let _ = writeln!(out, "(declare-fun |{}| () Real)", state_symbol(step, s));
            }
        }
        for a in &self.assertions {
            let _ = writeln!(out, "{a}");
        }
        out.push_str("(check-sat)\n(get-model)\n");
        out
    }
}

/// Exported text for `path` at target revenue `z`.
pub fn export_smtlib(path: &[&ActionSpec], state: &WorldState, base: &AssetId, z: Real) -> Result<String, SmtError> {
    Ok(build_problem(path, state, base, z)?.to_smtlib())
}

/// `<block>_<first 12 hex digits of sha256(path ids)>.smt2`
pub fn file_name(block: u64, path: &[String]) -> String {
    let digest = Sha256::digest(path.join("\n").as_bytes());
    format!("{block}_{}.smt2", &hex::encode(digest)[..12])
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub values: BTreeMap<String, Real>,
    /// Indices of assertions that do not hold.
    pub violated: Vec<usize>,
}

impl Evaluation {
    pub fn holds(&self) -> bool {
        self.violated.is_empty()
    }

    pub fn slot(&self, step: usize, slot: &StorageKey) -> Option<Real> {
        self.values.get(&state_symbol(step, slot)).copied()
    }
}

/// Interprets the assertions at the given params. An equality whose left
/// side is a still-unbound symbol defines it; every other assertion is checked
/// with slack `tol` times the largest magnitude any slot it mentions takes
/// along the path, so rounding dust on emptied balances is not a violation.
pub fn evaluate(problem: &SmtProblem, params: &[Real], tol: Real) -> Result<Evaluation, SmtError> {
    if params.len() != problem.params.len() {
        return Err(SmtError::ParamCount { expected: problem.params.len(), got: params.len() });
    }
    let mut env: BTreeMap<String, Real> = problem.params.iter().cloned().zip(params.iter().copied()).collect();
    let mut violated = Vec::new();
    let mut checks = Vec::new();
    for (i, a) in problem.assertions.iter().enumerate() {
        if let (Rel::Eq, Expr::Var(name)) = (a.rel, &a.lhs) {
            if !env.contains_key(name) {
                match a.rhs.eval(&env) {
                    Some(v) => {
                        env.insert(name.clone(), v);
                    }
                    None => violated.push(i),
                }
                continue;
            }
        }
        checks.push(i);
    }
    // slot name (symbol minus its step prefix) -> largest magnitude seen
    let slot_of = |sym: &str| -> String {
        match sym.split_once('_') {
            Some((step, slot)) if step.starts_with('S') => slot.to_string(),
            _ => sym.to_string(),
        }
    };
    let mut scale: BTreeMap<String, Real> = BTreeMap::new();
    for (sym, v) in &env {
        let e = scale.entry(slot_of(sym)).or_insert(0.0);
        *e = e.max(v.abs());
    }
    for i in checks {
        let a = &problem.assertions[i];
        let ok = match (a.lhs.eval(&env), a.rhs.eval(&env)) {
            (Some(l), Some(r)) => {
                let mut names = Vec::new();
                a.lhs.vars(&mut names);
                a.rhs.vars(&mut names);
                let m = names
                    .iter()
                    .filter_map(|n| scale.get(&slot_of(n)))
                    .fold(l.abs().max(r.abs()).max(1.0), |m, s| m.max(*s));
                let slack = tol * m;
                match a.rel {
                    Rel::Eq => (l - r).abs() <= slack,
                    Rel::Ge => l >= r - slack,
                    Rel::Le => l <= r + slack,
                }
            }
            _ => false,
        };
        if !ok {
            violated.push(i);
        }
    }
    violated.sort_unstable();
    Ok(Evaluation { values: env, violated })
}
