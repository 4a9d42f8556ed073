//! Independent oracles and random instance builders shared by the
//! integration tests and the acceptance run.
#![allow(dead_code)]

use mevsearch_core::{ActionId, ActionSpec, AssetId, Catalog, Venue, VenueKind, WorldState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random digraph on `n` nodes, weights on a 0.01 grid so that no simple
/// cycle sums to a tiny nonzero value.
pub fn random_graph(r: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize, f64)> {
    let density = r.gen_range(0.2..0.9);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && r.gen_bool(density) {
                edges.push((u, v, r.gen_range(-30i32..80) as f64 / 100.0));
            }
        }
    }
    edges
}

/// Exhaustive search over simple cycles for one with negative weight.
pub fn has_negative_simple_cycle(n: usize, edges: &[(usize, usize, f64)]) -> bool {
    let mut w = vec![vec![None; n]; n];
    for &(u, v, x) in edges {
        let e: &mut Option<f64> = &mut w[u][v];
        *e = Some(e.map_or(x, |y: f64| y.min(x)));
    }
    // cycles are enumerated from their smallest node
    fn dfs(w: &[Vec<Option<f64>>], start: usize, u: usize, seen: &mut Vec<bool>, sum: f64) -> bool {
        for v in 0..w.len() {
            let Some(x) = w[u][v] else { continue };
            if v == start && sum + x < -1e-9 {
                return true;
            }
            if v > start && !seen[v] {
                seen[v] = true;
                if dfs(w, start, v, seen, sum + x) {
                    return true;
                }
                seen[v] = false;
            }
        }
        false
    }
    (0..n).any(|s| {
        let mut seen = vec![false; n];
        seen[s] = true;
        dfs(&w, s, s, &mut seen, 0.0)
    })
}

/// One constant-product hop: input reserve, output reserve, fee factor.
#[derive(Debug, Clone, Copy)]
pub struct Hop {
    pub x: f64,
    pub y: f64,
    pub fee: f64,
}

/// Chained revenue written out from `x * y = k`, without the crate's model.
pub fn chained_oracle(hops: &[Hop], amount: f64) -> f64 {
    let mut a = amount;
    for h in hops {
        a = h.y - h.x * h.y / (h.x + h.fee * a);
    }
    a - amount
}

/// Best value over `points` evenly spaced amounts in `(0, cap]`.
pub fn grid_max(f: impl Fn(f64) -> f64, cap: f64, points: usize) -> (f64, f64) {
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 1..=points {
        let x = cap * i as f64 / points as f64;
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

/// A mispriced ETH loop over 2 or 3 constant-product pools.
pub struct LoopInstance {
    pub state: WorldState,
    pub catalog: Catalog,
    pub path: Vec<ActionId>,
    pub hops: Vec<Hop>,
    pub cap: f64,
}

pub fn random_loop(r: &mut ChaCha8Rng) -> LoopInstance {
    let len = r.gen_range(2..=3);
    let assets: Vec<&str> = ["ETH", "TKA", "TKB"][..len].to_vec();
    let cap = r.gen_range(10.0..500.0);
    let mut state = WorldState::new(r.gen_range(1..1_000_000)).with_balance("ETH", cap);
    let mut hops = Vec::new();
    let mut path = Vec::new();
    let mut actions = Vec::new();
    for i in 0..len {
        let (a, b) = (assets[i], assets[(i + 1) % len]);
        let x = r.gen_range(100.0..5000.0);
        let y = x * r.gen_range(0.5..3.0) * r.gen_range(0.85..1.2);
        let fee = if r.gen_bool(0.5) { (997, 1000) } else { (1, 1) };
        let v = Venue::new(
            &format!("p{i}"),
            VenueKind::ConstantProduct { fee_num: fee.0, fee_den: fee.1 },
            &[(a, x), (b, y)],
        );
        let spec = ActionSpec::for_venue(&v.id, &v.kind, &AssetId::of(a), Some(&AssetId::of(b)));
        path.push(spec.action_id.clone());
        actions.push(spec);
        hops.push(Hop { x, y, fee: fee.0 as f64 / fee.1 as f64 });
        state = state.with_venue(v);
    }
    let catalog = Catalog::new(actions).expect("distinct ids");
    LoopInstance { state, catalog, path, hops, cap }
}

/// Up to `max_actions` actions drawn from random pools over four assets.
pub fn random_catalog(r: &mut ChaCha8Rng, max_actions: usize) -> (WorldState, Catalog) {
    let assets = ["ETH", "TKA", "TKB", "TKC"];
    let mut state = WorldState::new(1).with_balance("ETH", 100.0);
    let pools = r.gen_range(2..=5);
    for i in 0..pools {
        let a = r.gen_range(0..assets.len());
        let mut b = r.gen_range(0..assets.len() - 1);
        if b >= a {
            b += 1;
        }
        let kind = if r.gen_bool(0.8) { VenueKind::uniswap() } else { VenueKind::OneToOne };
        state = state.with_venue(Venue::new(&format!("v{i}"), kind, &[(assets[a], 1000.0), (assets[b], 1000.0)]));
    }
    let all = Catalog::from_state(&state);
    let mut acts: Vec<ActionSpec> = all.actions().to_vec();
    // random subset, order kept
    while acts.len() > max_actions || (acts.len() > 2 && r.gen_bool(0.2)) {
        let i = r.gen_range(0..acts.len());
        acts.remove(i);
    }
    (state, Catalog::new(acts).expect("subset of a valid catalog"))
}
