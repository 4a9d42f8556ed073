//! Per-path revenue maximization and path ranking.
//!
//! Feasibility of a revenue target is answered by forward simulation: a path
//! reaches `Z` iff the best parameter vector found by the 1-D search does.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::catalog::Catalog;
use crate::market::{apply_action, check_restored, ActionId, ActionSpec, AssetId, MarketError, Strategy, WorldState};
use crate::search::{maximize, SearchConfig};
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptError {
    #[error("no profitable path among {0} candidates")]
    NoProfitablePath(usize),
    #[error("empty candidate list")]
    NoPaths,
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// How amounts are assigned along a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamPolicy {
    /// One free amount shared by every entering action; later actions spend
    /// everything acquired so far.
    #[default]
    Chained,
    /// Each entering action gets its own amount, found by coordinate descent.
    Free,
}

const FREE_SWEEPS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathOptimum {
    pub revenue: Real,
    pub params: Vec<Real>,
    pub evaluations: usize,
}

/// Runs `actions` with the given entering amounts (one per entering action,
/// in path order); other actions spend their full acquired input. Returns the
/// params used and the final state.
pub fn run_with_entries(
    state: &WorldState,
    actions: &[&ActionSpec],
    base: &AssetId,
    entries: &[Real],
) -> Result<(Vec<Real>, WorldState), MarketError> {
    let mut s = state.clone();
    let mut params = Vec::with_capacity(actions.len());
    let mut k = 0;
    for a in actions {
        let x = if a.is_entering(base) {
            k += 1;
            entries[k - 1]
        } else {
            (s.balance(&a.input_asset) - state.balance(&a.input_asset)).max(0.0)
        };
        s = apply_action(&s, a, x)?;
        params.push(x);
    }
    Ok((params, s))
}

/// Revenue for the given entering amounts, `-inf` when infeasible.
pub fn revenue_with_entries(state: &WorldState, actions: &[&ActionSpec], base: &AssetId, entries: &[Real]) -> Real {
    match run_with_entries(state, actions, base, entries) {
        Ok((_, fin)) if check_restored(state, &fin, base).is_ok() => fin.balance(base) - state.balance(base),
        _ => Real::NEG_INFINITY,
    }
}

/// Chained policy revenue at entry amount `x`.
pub fn chained_revenue(state: &WorldState, actions: &[&ActionSpec], base: &AssetId, x: Real) -> Real {
    let n = actions.iter().filter(|a| a.is_entering(base)).count();
    revenue_with_entries(state, actions, base, &vec![x; n])
}

/// Largest revenue the path can reach from `state`, `None` if the path has no
/// entering action or the trader holds no base asset.
pub fn maximize_path(
    state: &WorldState,
    actions: &[&ActionSpec],
    base: &AssetId,
    policy: ParamPolicy,
) -> Option<PathOptimum> {
    let n = actions.iter().filter(|a| a.is_entering(base)).count();
    let cap = state.balance(base);
    if n == 0 || !(cap > 0.0) {
        return None;
    }
    let cfg = SearchConfig::new(cap / n as Real);
    let peak = maximize(|x| chained_revenue(state, actions, base, x), &cfg);
    let mut evaluations = peak.evaluations;
    let mut entries = vec![peak.x; n];
    let mut best = peak.value;
    if policy == ParamPolicy::Free && n > 1 {
        for _ in 0..FREE_SWEEPS {
            for i in 0..n {
                let spent: Real = entries.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v).sum();
                let room = cap - spent;
                if !(room > 0.0) {
                    continue;
                }
                let mut trial = entries.clone();
                let p = maximize(
                    |x| {
                        trial[i] = x;
                        revenue_with_entries(state, actions, base, &trial)
                    },
                    &SearchConfig::new(room),
                );
                evaluations += p.evaluations;
                if p.value > best {
                    best = p.value;
                    entries[i] = p.x;
                }
            }
        }
    }
    if !best.is_finite() {
        return None;
    }
    let (params, _) = run_with_entries(state, actions, base, &entries).ok()?;
    Some(PathOptimum { revenue: best, params, evaluations })
}

/// A revenue target to test against a path.
#[derive(Debug, Clone)]
pub struct FeasibilityQuery<'a> {
    pub path: &'a [&'a ActionSpec],
    pub initial_state: &'a WorldState,
    pub base: &'a AssetId,
    pub target_revenue: Real,
    pub policy: ParamPolicy,
}

/// Params reaching the target with every non-base balance restored, if any.
pub fn is_sat(q: &FeasibilityQuery) -> Option<Vec<Real>> {
    let best = maximize_path(q.initial_state, q.path, q.base, q.policy)?;
    (best.revenue >= q.target_revenue).then_some(best.params)
}

/// Answers repeated feasibility probes on one path from a single search.
struct Oracle {
    best: Option<PathOptimum>,
    probes: usize,
}

impl Oracle {
    fn probe(&mut self, z: Real) -> Option<Vec<Real>> {
        self.probes += 1;
        match &self.best {
            Some(b) if b.revenue >= z => Some(b.params.clone()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerResult {
    pub revenue: Real,
    pub params: Vec<Real>,
    pub sat_probes: usize,
    /// `(lower, upper)` after each bisection step.
    pub bounds_history: Vec<(Real, Real)>,
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizerConfig {
    pub min_target: Real,
    /// Bisection stops once `upper - lower <= rel_tol * upper`.
    pub rel_tol: Real,
    pub policy: ParamPolicy,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { min_target: 0.1, rel_tol: 1e-3, policy: ParamPolicy::Chained }
    }
}

/// Coarse x10 growth of the upper bound followed by bisection on the target.
pub fn optimize_revenue(
    path: &[&ActionSpec],
    state: &WorldState,
    base: &AssetId,
    cfg: &OptimizerConfig,
) -> Option<OptimizerResult> {
    let mut oracle = Oracle { best: maximize_path(state, path, base, cfg.policy), probes: 0 };
    let m = cfg.min_target;
    let mut witness = oracle.probe(m)?;
    let (mut lo, mut hi) = (m, m * 10.0);
    while let Some(p) = oracle.probe(hi) {
        witness = p;
        lo = hi;
        hi *= 10.0;
    }
    let mut history = vec![(lo, hi)];
    while hi - lo > cfg.rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        match oracle.probe(mid) {
            Some(p) => {
                witness = p;
                lo = mid;
            }
            None => hi = mid,
        }
        history.push((lo, hi));
    }
    let fin = crate::market::execute(state, path, &witness).ok()?;
    let revenue = fin.balance(base) - state.balance(base);
    Some(OptimizerResult { revenue, params: witness, sat_probes: oracle.probes, bounds_history: history })
}

fn cmp_candidates(a: &Strategy, b: &Strategy) -> Ordering {
    b.revenue
        .partial_cmp(&a.revenue)
        .unwrap_or(Ordering::Equal)
        .then(a.path.len().cmp(&b.path.len()))
        .then_with(|| a.path.cmp(&b.path))
}

/// Optimizes every path against the same state and returns the best.
pub fn rank_paths(
    paths: &[Vec<ActionId>],
    state: &WorldState,
    catalog: &Catalog,
    base: &AssetId,
    policy: ParamPolicy,
) -> Result<Strategy, OptError> {
    if paths.is_empty() {
        return Err(OptError::NoPaths);
    }
    let resolved = paths.iter().map(|p| catalog.resolve(p)).collect::<Result<Vec<_>, _>>()?;
    let mut found: Vec<Strategy> = resolved
        .par_iter()
        .zip(paths.par_iter())
        .filter_map(|(acts, ids)| {
            let best = maximize_path(state, acts, base, policy)?;
            (best.revenue > 0.0).then(|| Strategy {
                path: ids.clone(),
                params: best.params,
                revenue: best.revenue,
                block_height: state.block_height,
            })
        })
        .collect();
    found.sort_by(cmp_candidates);
    found.into_iter().next().ok_or(OptError::NoProfitablePath(paths.len()))
}
