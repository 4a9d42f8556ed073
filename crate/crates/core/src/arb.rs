//! Negative-cycle arbitrage: the `-ln(price)` graph, Bellman-Ford-Moore with
//! a walk back along parent links, and the greedy extraction loop.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::catalog::Catalog;
use crate::market::{execute, ActionId, AssetId, MarketError, Strategy, VenueId, WorldState};
use crate::optimize::{self, ParamPolicy};
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArbError {
    #[error("no route between {base} and the cycle")]
    NoRoute { base: String },
    #[error("no profitable input amount")]
    NoProfit,
    #[error("stopped after {0} cycles")]
    IterationCapExceeded(usize),
    #[error(transparent)]
    Market(#[from] MarketError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub venue: VenueId,
    pub action: ActionId,
    pub price: Real,
    pub weight: Real,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketGraph {
    pub nodes: Vec<AssetId>,
    /// Sorted by `(from, to)`, at most one edge per ordered pair.
    pub edges: Vec<Edge>,
    pub built_at: u64,
}

impl MarketGraph {
    pub fn node(&self, a: &AssetId) -> Option<usize> {
        self.nodes.binary_search(a).ok()
    }

    pub fn edge(&self, from: usize, to: usize) -> Option<&Edge> {
        self.edges.binary_search_by(|e| (e.from, e.to).cmp(&(from, to))).ok().map(|i| &self.edges[i])
    }

    /// Builds a graph from raw weighted edges; used for synthetic graphs.
    pub fn from_weights(n: usize, edges: &[(usize, usize, Real)]) -> Self {
        let nodes = (0..n).map(|i| AssetId::of(&format!("A{i}"))).collect();
        let mut best: BTreeMap<(usize, usize), Real> = BTreeMap::new();
        for &(u, v, w) in edges {
            let e = best.entry((u, v)).or_insert(w);
            *e = e.min(w);
        }
        let edges = best
            .into_iter()
            .map(|((from, to), weight)| Edge {
                from,
                to,
                venue: VenueId::new(format!("v{from}_{to}")),
                action: format!("v{from}_{to}:A{from}->A{to}"),
                price: (-weight).exp(),
                weight,
            })
            .collect();
        MarketGraph { nodes, edges, built_at: 0 }
    }
}

/// One node per asset with a live venue; each directed pair keeps the venue
/// quoting the highest spot price.
pub fn build_graph(state: &WorldState, catalog: &Catalog) -> MarketGraph {
    let mut best: BTreeMap<(AssetId, AssetId), (Real, &str, &VenueId)> = BTreeMap::new();
    for a in catalog.actions() {
        let Some(out) = &a.output_asset else { continue };
        let Some(v) = state.venues.get(&a.venue) else { continue };
        if !v.is_live() {
            continue;
        }
        let Ok(p) = state.spot_price(&a.venue, &a.input_asset, out) else { continue };
        if !(p > 0.0) || !p.is_finite() {
            continue;
        }
        let key = (a.input_asset.clone(), out.clone());
        match best.get(&key) {
            Some((q, id, _)) if *q > p || (*q == p && *id <= a.action_id.as_str()) => {}
            _ => {
                best.insert(key, (p, &a.action_id, &a.venue));
            }
        }
    }
    let mut nodes: Vec<AssetId> = best.keys().flat_map(|(a, b)| [a.clone(), b.clone()]).collect();
    nodes.sort();
    nodes.dedup();
    let idx = |a: &AssetId| nodes.binary_search(a).expect("node present");
    let mut edges: Vec<Edge> = best
        .iter()
        .map(|((a, b), (p, id, venue))| Edge {
            from: idx(a),
            to: idx(b),
            venue: (*venue).clone(),
            action: id.to_string(),
            price: *p,
            weight: -p.ln(),
        })
        .collect();
    edges.sort_by_key(|e| (e.from, e.to));
    MarketGraph { nodes, edges, built_at: state.block_height }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NegCycle {
    /// Closed walk: first == last.
    pub assets: Vec<AssetId>,
    pub venues: Vec<VenueId>,
    pub actions: Vec<ActionId>,
    pub weight_sum: Real,
}

impl NegCycle {
    pub fn price_product(&self, g: &MarketGraph) -> Real {
        self.assets.windows(2).map(|w| g.edge(g.node(&w[0]).unwrap(), g.node(&w[1]).unwrap()).unwrap().price).product()
    }
}

/// Bellman-Ford-Moore from a virtual source linked to every node. A
/// relaxation must improve a distance by more than `eps`.
pub fn find_negative_cycle(g: &MarketGraph, eps: Real) -> Option<NegCycle> {
    let n = g.nodes.len();
    if n == 0 {
        return None;
    }
    let mut dist = vec![0.0; n];
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut last = None;
    for _ in 0..n {
        last = None;
        for (ei, e) in g.edges.iter().enumerate() {
            let cand = dist[e.from] + e.weight;
            if cand < dist[e.to] - eps {
                dist[e.to] = cand;
                parent[e.to] = Some(ei);
                last = Some(e.to);
            }
        }
        last?;
    }
    // a relaxation in the n-th pass: step back n times to land on the cycle
    let mut v = last?;
    for _ in 0..n {
        v = g.edges[parent[v]?].from;
    }
    let mut hops = Vec::new();
    let mut u = v;
    loop {
        let ei = parent[u]?;
        hops.push(ei);
        u = g.edges[ei].from;
        if u == v {
            break;
        }
        if hops.len() > n {
            return None;
        }
    }
    hops.reverse();
    let weight_sum: Real = hops.iter().map(|&i| g.edges[i].weight).sum();
    if weight_sum >= 0.0 {
        return None;
    }
    let mut assets = vec![g.nodes[g.edges[hops[0]].from].clone()];
    assets.extend(hops.iter().map(|&i| g.nodes[g.edges[i].to].clone()));
    Some(NegCycle {
        assets,
        venues: hops.iter().map(|&i| g.edges[i].venue.clone()).collect(),
        actions: hops.iter().map(|&i| g.edges[i].action.clone()).collect(),
        weight_sum,
    })
}

/// Turns a cycle into an executable path starting and ending at `base`.
pub fn connect_to_base(cycle: &NegCycle, g: &MarketGraph, base: &AssetId) -> Result<Vec<ActionId>, ArbError> {
    let k = cycle.actions.len();
    if let Some(pos) = cycle.assets[..k].iter().position(|a| a == base) {
        return Ok((0..k).map(|i| cycle.actions[(pos + i) % k].clone()).collect());
    }
    let no_route = || ArbError::NoRoute { base: base.to_string() };
    let b = g.node(base).ok_or_else(no_route)?;
    let hop_price = |i: usize| -> Real {
        let (u, v) = (g.node(&cycle.assets[i]).unwrap(), g.node(&cycle.assets[i + 1]).unwrap());
        g.edge(u, v).map_or(0.0, |e| e.price)
    };
    let mut best: Option<(Real, Vec<ActionId>)> = None;
    for e in 0..k {
        let Some(enter) = g.edge(b, g.node(&cycle.assets[e]).unwrap()) else { continue };
        for f in 0..k {
            let Some(exit) = g.edge(g.node(&cycle.assets[f]).unwrap(), b) else { continue };
            // walk from e to f; a full loop when they coincide
            let steps = if f == e { k } else { (f + k - e) % k };
            let mut product = enter.price * exit.price;
            let mut path = vec![enter.action.clone()];
            for s in 0..steps {
                let i = (e + s) % k;
                product *= hop_price(i);
                path.push(cycle.actions[i].clone());
            }
            path.push(exit.action.clone());
            if best.as_ref().is_none_or(|(p, _)| product > *p) {
                best = Some((product, path));
            }
        }
    }
    best.map(|(_, p)| p).ok_or_else(no_route)
}

/// Maximizes revenue over the entry amount, every later hop spending what it
/// received.
pub fn greedy_param_search(
    state: &WorldState,
    catalog: &Catalog,
    path: &[ActionId],
    base: &AssetId,
) -> Result<(Real, Vec<Real>), ArbError> {
    let actions = catalog.resolve(path)?;
    match optimize::maximize_path(state, &actions, base, ParamPolicy::Chained) {
        Some(best) if best.revenue > 0.0 => Ok((best.revenue, best.params)),
        _ => Err(ArbError::NoProfit),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ArbConfig {
    pub min_revenue: Real,
    pub max_cycles: usize,
    pub cycle_epsilon: Real,
}

impl Default for ArbConfig {
    fn default() -> Self {
        ArbConfig { min_revenue: 0.1, max_cycles: 50, cycle_epsilon: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    NoCycle,
    BelowThreshold,
    NoProfit,
    NoRoute,
    IterationCap,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PhaseTimes {
    pub graph_ms: f64,
    pub cycle_ms: f64,
    pub search_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArbOutcome {
    pub strategies: Vec<Strategy>,
    pub total_revenue: Real,
    pub cycles_examined: usize,
    pub termination: Termination,
    #[serde(skip)]
    pub final_state: WorldState,
    pub times: PhaseTimes,
}

impl ArbOutcome {
    /// The cap error when the loop was cut short; results are still usable.
    pub fn cap_error(&self) -> Option<ArbError> {
        (self.termination == Termination::IterationCap).then_some(ArbError::IterationCapExceeded(self.cycles_examined))
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Greedy loop: find a cycle, route it through `base`, size it, commit it if
/// it clears `min_revenue`, rebuild the graph on the new state. A cycle that
/// does not clear the threshold ends the run.
pub fn run_arb(state: &WorldState, catalog: &Catalog, base: &AssetId, cfg: &ArbConfig) -> Result<ArbOutcome, ArbError> {
    let mut cur = state.clone();
    let mut strategies = Vec::new();
    let mut times = PhaseTimes::default();
    let mut termination = Termination::IterationCap;
    let mut examined = 0;
    for _ in 0..cfg.max_cycles {
        let t = Instant::now();
        let g = build_graph(&cur, catalog);
        times.graph_ms += ms(t);
        let t = Instant::now();
        let cycle = find_negative_cycle(&g, cfg.cycle_epsilon);
        times.cycle_ms += ms(t);
        let Some(cycle) = cycle else {
            termination = Termination::NoCycle;
            break;
        };
        examined += 1;
        let path = match connect_to_base(&cycle, &g, base) {
            Ok(p) => p,
            Err(ArbError::NoRoute { .. }) => {
                termination = Termination::NoRoute;
                break;
            }
            Err(e) => return Err(e),
        };
        let t = Instant::now();
        let found = greedy_param_search(&cur, catalog, &path, base);
        times.search_ms += ms(t);
        let (revenue, params) = match found {
            Ok(r) => r,
            Err(ArbError::NoProfit) => {
                termination = Termination::NoProfit;
                break;
            }
            Err(e) => return Err(e),
        };
        log::debug!("cycle {:?} revenue {revenue}", cycle.assets);
        if revenue <= cfg.min_revenue {
            termination = Termination::BelowThreshold;
            break;
        }
        let actions = catalog.resolve(&path)?;
        cur = execute(&cur, &actions, &params)?;
        strategies.push(Strategy { path, params, revenue, block_height: state.block_height });
    }
    let total_revenue = strategies.iter().map(|s| s.revenue).sum();
    Ok(ArbOutcome { strategies, total_revenue, cycles_examined: examined, termination, final_state: cur, times })
}
