//! Path enumeration over an action catalog with heuristic pruning.
//!
//! Heuristics, checked in this order:
//!
//! 1. a path has at least two actions;
//! 2. it starts with an entering action (input is the base asset);
//! 3. it ends with an exiting action (output is the base asset);
//! 4. every non-entering action reads a storage key some earlier action touched;
//!    crediting the action's own output balance is a blind increment and does
//!    not count as a read;
//! 5. no action is immediately followed by its reverse on the same venue;
//! 6. no asset flows out along two actions (no branching);
//! 7. the asset flow graph has no cycle that avoids the base asset (no loops).
//!
//! Actions without an output asset take no part in 6 and 7.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::catalog::Catalog;
use crate::market::{ActionId, ActionSpec, AssetId, MarketError, StorageKey};

/// Accepted-path counts for the bundled 96-action catalog with base ETH,
/// lengths 2 to 5.
pub const BUNDLED_AFTER_TARGET: [(usize, u64); 4] = [(2, 2), (3, 90), (4, 466), (5, 42)];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("expansion budget of {0} nodes exceeded")]
    CombinatorialBudgetExceeded(u64),
    #[error("max_len must be at least 1")]
    BadLength,
    #[error(transparent)]
    Market(#[from] MarketError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected(u8),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeuristicReport {
    pub path: Vec<ActionId>,
    pub verdict: Verdict,
    pub rejected_reason: String,
}

impl HeuristicReport {
    pub fn accepted(&self) -> bool {
        self.verdict == Verdict::Accepted
    }
}

/// True iff the two actions touch no common storage key.
pub fn actions_independent(a: &ActionSpec, b: &ActionSpec) -> bool {
    a.storage_keys.is_disjoint(&b.storage_keys)
}

/// Keys `a` depends on: all of its keys except its own output balance.
pub fn dependency_keys(a: &ActionSpec) -> BTreeSet<StorageKey> {
    let credit = a.output_asset.as_ref().map(StorageKey::trader);
    a.storage_keys.iter().filter(|k| Some(*k) != credit.as_ref()).cloned().collect()
}

/// Whole-path check, independent of the incremental enumerator.
pub fn check_heuristics(path: &[&ActionSpec], base: &AssetId) -> HeuristicReport {
    let ids: Vec<ActionId> = path.iter().map(|a| a.action_id.clone()).collect();
    let reject =
        |h: u8, why: String| HeuristicReport { path: ids.clone(), verdict: Verdict::Rejected(h), rejected_reason: why };
    if path.len() <= 1 {
        return reject(1, "fewer than two actions".into());
    }
    if !path[0].is_entering(base) {
        return reject(2, format!("{} does not spend {base}", path[0].action_id));
    }
    let last = path[path.len() - 1];
    if !last.is_exiting(base) {
        return reject(3, format!("{} does not return {base}", last.action_id));
    }
    let mut seen = path[0].storage_keys.clone();
    for a in &path[1..] {
        if !a.is_entering(base) && dependency_keys(a).is_disjoint(&seen) {
            return reject(4, format!("{} depends on no earlier action", a.action_id));
        }
        seen.extend(a.storage_keys.iter().cloned());
    }
    for w in path.windows(2) {
        if w[1].reverses(w[0]) {
            return reject(5, format!("{} reverses {}", w[1].action_id, w[0].action_id));
        }
    }
    let flows: Vec<(&AssetId, &AssetId)> =
        path.iter().filter_map(|a| a.output_asset.as_ref().map(|o| (&a.input_asset, o))).collect();
    let mut out_deg: HashMap<&AssetId, usize> = HashMap::new();
    for (i, _) in &flows {
        *out_deg.entry(i).or_default() += 1;
    }
    let mut branched: Vec<&AssetId> = out_deg.iter().filter(|(_, d)| **d >= 2).map(|(a, _)| *a).collect();
    branched.sort();
    if let Some(a) = branched.first() {
        return reject(6, format!("flow branches at {a}"));
    }
    // every asset now has at most one successor
    let next: HashMap<&AssetId, &AssetId> = flows.iter().copied().collect();
    let mut starts: Vec<&AssetId> = next.keys().copied().collect();
    starts.sort();
    for s in starts {
        let mut cur = s;
        let mut on_cycle = vec![s];
        while let Some(n) = next.get(cur) {
            if *n == s {
                if !on_cycle.contains(&base) {
                    return reject(7, format!("loop through {s} avoids {base}"));
                }
                break;
            }
            if on_cycle.len() > flows.len() {
                break;
            }
            cur = n;
            on_cycle.push(cur);
        }
    }
    HeuristicReport { path: ids, verdict: Verdict::Accepted, rejected_reason: String::new() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LengthStats {
    pub len: usize,
    /// Ordered selections of `len` distinct actions.
    pub before: u128,
    pub after: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PruneStats {
    pub rows: Vec<LengthStats>,
    pub expansions: u64,
}

impl PruneStats {
    pub fn total_after(&self) -> u64 {
        self.rows.iter().map(|r| r.after).sum()
    }

    pub fn after(&self, len: usize) -> Option<u64> {
        self.rows.iter().find(|r| r.len == len).map(|r| r.after)
    }
}

impl fmt::Display for PruneStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>6} {:>16} {:>10}", "length", "before", "after")?;
        for r in &self.rows {
            writeln!(f, "{:>6} {:>16} {:>10}", r.len, r.before, r.after)?;
        }
        write!(f, "{:>6} {:>16} {:>10}", "total", self.rows.iter().map(|r| r.before).sum::<u128>(), self.total_after())
    }
}

/// `n! / (n - k)!`, zero when `k > n`.
pub fn permutations(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    ((n - k + 1)..=n).map(|v| v as u128).product()
}

/// Lines describing where `stats` differs from `targets`; empty on a match.
pub fn deviation_report(stats: &PruneStats, targets: &[(usize, u64)]) -> Vec<String> {
    targets
        .iter()
        .filter_map(|&(len, want)| {
            let got = stats.after(len).unwrap_or(0);
            (got != want)
                .then(|| format!("length {len}: {got} accepted, target {want} ({:+})", got as i64 - want as i64))
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct EnumConfig {
    pub max_len: usize,
    pub max_expansions: u64,
}

impl Default for EnumConfig {
    fn default() -> Self {
        EnumConfig { max_len: 5, max_expansions: 100_000_000 }
    }
}

/// Catalog compiled to dense indices.
struct Compiled {
    n: usize,
    words: usize,
    keys: Vec<Vec<u64>>,
    dep_keys: Vec<Vec<u64>>,
    input: Vec<usize>,
    output: Vec<Option<usize>>,
    entering: Vec<bool>,
    exiting: Vec<bool>,
    reverse_of: Vec<Vec<bool>>,
    n_assets: usize,
    base: usize,
}

impl Compiled {
    fn new(catalog: &Catalog, base: &AssetId) -> Self {
        let acts = catalog.actions();
        let mut key_ix = HashMap::new();
        for a in acts {
            for k in &a.storage_keys {
                let next = key_ix.len();
                key_ix.entry(k.clone()).or_insert(next);
            }
        }
        let words = key_ix.len().div_ceil(64).max(1);
        let mut assets: Vec<AssetId> = catalog.assets();
        if !assets.contains(base) {
            assets.push(base.clone());
        }
        assets.sort();
        let ax = |a: &AssetId| assets.binary_search(a).unwrap();
        let bits = |ks: &BTreeSet<StorageKey>| {
            let mut b = vec![0u64; words];
            for k in ks {
                let i = key_ix[k];
                b[i / 64] |= 1 << (i % 64);
            }
            b
        };
        Compiled {
            n: acts.len(),
            words,
            keys: acts.iter().map(|a| bits(&a.storage_keys)).collect(),
            dep_keys: acts.iter().map(|a| bits(&dependency_keys(a))).collect(),
            input: acts.iter().map(|a| ax(&a.input_asset)).collect(),
            output: acts.iter().map(|a| a.output_asset.as_ref().map(ax)).collect(),
            entering: acts.iter().map(|a| a.is_entering(base)).collect(),
            exiting: acts.iter().map(|a| a.is_exiting(base)).collect(),
            reverse_of: acts.iter().map(|a| acts.iter().map(|b| b.reverses(a)).collect()).collect(),
            n_assets: assets.len(),
            base: ax(base),
        }
    }
}

/// Mutable DFS state for one shard.
struct Prefix {
    path: Vec<usize>,
    used: Vec<bool>,
    key_stack: Vec<Vec<u64>>,
    out_deg: Vec<u8>,
    next: Vec<Option<usize>>,
}

impl Prefix {
    /// Whether appending `a` keeps every prefix heuristic satisfied.
    fn admits(&self, c: &Compiled, a: usize) -> bool {
        if self.used[a] {
            return false;
        }
        let Some(&last) = self.path.last() else {
            return c.entering[a];
        };
        if !c.entering[a] {
            let seen = self.key_stack.last().unwrap();
            if !c.dep_keys[a].iter().zip(seen).any(|(x, y)| x & y != 0) {
                return false;
            }
        }
        if c.reverse_of[last][a] {
            return false;
        }
        if let Some(o) = c.output[a] {
            let i = c.input[a];
            if self.out_deg[i] >= 1 {
                return false;
            }
            // adding i -> o closes a loop iff o already reaches i
            if i != c.base && o != c.base {
                let mut cur = o;
                for _ in 0..c.n_assets {
                    if cur == c.base {
                        break;
                    }
                    if cur == i {
                        return false;
                    }
                    match self.next[cur] {
                        Some(nx) => cur = nx,
                        None => break,
                    }
                }
            }
        }
        true
    }

    fn push(&mut self, c: &Compiled, a: usize) {
        let mut bits = self.key_stack.last().cloned().unwrap_or_else(|| vec![0; c.words]);
        for (b, k) in bits.iter_mut().zip(&c.keys[a]) {
            *b |= k;
        }
        self.key_stack.push(bits);
        self.used[a] = true;
        self.path.push(a);
        if let Some(o) = c.output[a] {
            let i = c.input[a];
            self.out_deg[i] += 1;
            self.next[i] = Some(o);
        }
    }

    fn pop(&mut self, c: &Compiled) {
        let a = self.path.pop().unwrap();
        self.key_stack.pop();
        self.used[a] = false;
        if c.output[a].is_some() {
            let i = c.input[a];
            self.out_deg[i] -= 1;
            self.next[i] = None;
        }
    }
}

struct Shard {
    paths: Vec<Vec<usize>>,
    after: Vec<u64>,
}

fn dfs(
    c: &Compiled,
    p: &mut Prefix,
    max_len: usize,
    out: &mut Shard,
    budget: &AtomicU64,
    cap: u64,
    blown: &AtomicBool,
) {
    let len = p.path.len();
    if len >= 2 && c.exiting[*p.path.last().unwrap()] {
        out.after[len] += 1;
        out.paths.push(p.path.clone());
    }
    if len == max_len || blown.load(Ordering::Relaxed) {
        return;
    }
    for a in 0..c.n {
        if !p.admits(c, a) {
            continue;
        }
        if budget.fetch_add(1, Ordering::Relaxed) >= cap {
            blown.store(true, Ordering::Relaxed);
            return;
        }
        p.push(c, a);
        dfs(c, p, max_len, out, budget, cap, blown);
        p.pop(c);
    }
}

/// All accepted paths of length `2..=max_len`, in catalog order of their
/// actions, and per-length counts.
pub fn enumerate_pruned(
    catalog: &Catalog,
    base: &AssetId,
    cfg: &EnumConfig,
) -> Result<(Vec<Vec<ActionId>>, PruneStats), PathError> {
    if cfg.max_len < 1 {
        return Err(PathError::BadLength);
    }
    let c = Compiled::new(catalog, base);
    let budget = AtomicU64::new(0);
    let blown = AtomicBool::new(false);
    let shards: Vec<Shard> = (0..c.n)
        .into_par_iter()
        .filter(|&a| c.entering[a])
        .map(|first| {
            let mut p = Prefix {
                path: Vec::with_capacity(cfg.max_len),
                used: vec![false; c.n],
                key_stack: Vec::with_capacity(cfg.max_len),
                out_deg: vec![0; c.n_assets],
                next: vec![None; c.n_assets],
            };
            let mut out = Shard { paths: Vec::new(), after: vec![0; cfg.max_len + 1] };
            if budget.fetch_add(1, Ordering::Relaxed) >= cfg.max_expansions {
                blown.store(true, Ordering::Relaxed);
                return out;
            }
            p.push(&c, first);
            dfs(&c, &mut p, cfg.max_len, &mut out, &budget, cfg.max_expansions, &blown);
            out
        })
        .collect();
    if blown.load(Ordering::Relaxed) {
        return Err(PathError::CombinatorialBudgetExceeded(cfg.max_expansions));
    }
    let mut after = vec![0u64; cfg.max_len + 1];
    let mut paths = Vec::new();
    for s in shards {
        for (i, n) in s.after.iter().enumerate() {
            after[i] += n;
        }
        paths.extend(
            s.paths.into_iter().map(|p| p.into_iter().map(|i| catalog.actions()[i].action_id.clone()).collect()),
        );
    }
    let rows =
        (2..=cfg.max_len).map(|len| LengthStats { len, before: permutations(c.n, len), after: after[len] }).collect();
    Ok((paths, PruneStats { rows, expansions: budget.load(Ordering::Relaxed) }))
}

/// Every ordered selection of distinct actions of length `1..=max_len` that
/// passes [`check_heuristics`]. Exponential; meant as a reference for small
/// catalogs.
pub fn brute_force(catalog: &Catalog, base: &AssetId, max_len: usize) -> BTreeSet<Vec<ActionId>> {
    fn rec<'a>(
        acts: &'a [ActionSpec],
        base: &AssetId,
        max_len: usize,
        cur: &mut Vec<&'a ActionSpec>,
        out: &mut BTreeSet<Vec<ActionId>>,
    ) {
        if !cur.is_empty() && check_heuristics(cur, base).accepted() {
            out.insert(cur.iter().map(|a| a.action_id.clone()).collect());
        }
        if cur.len() == max_len {
            return;
        }
        for a in acts {
            if cur.iter().any(|b| b.action_id == a.action_id) {
                continue;
            }
            cur.push(a);
            rec(acts, base, max_len, cur, out);
            cur.pop();
        }
    }
    let mut out = BTreeSet::new();
    rec(catalog.actions(), base, max_len, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{VenueId, VenueKind};

    fn act(venue: &str, i: &str, o: &str) -> ActionSpec {
        ActionSpec::for_venue(&VenueId::new(venue), &VenueKind::uniswap(), &AssetId::of(i), Some(&AssetId::of(o)))
    }

    #[test]
    fn permutation_counts() {
        assert_eq!(permutations(96, 2), 9_120);
        assert_eq!(permutations(96, 5), 7_334_887_680);
        assert_eq!(permutations(3, 4), 0);
        assert_eq!(permutations(5, 0), 1);
    }

    #[test]
    fn independence() {
        let a = act("u1", "ETH", "SAI");
        let b = ActionSpec::for_venue(
            &VenueId::new("b1"),
            &VenueKind::BancorConverter { fee_ppm: 1000, ratios: Default::default() },
            &AssetId::of("BNT"),
            Some(&AssetId::of("SAI")),
        );
        assert!(!actions_independent(&a, &b));
        assert!(actions_independent(&act("u1", "AAA", "BBB"), &act("u2", "CCC", "DDD")));
        assert!(!actions_independent(&a, &a));
    }

    #[test]
    fn named_rejections() {
        let eth = AssetId::of("ETH");
        let v = |p: &[&ActionSpec]| check_heuristics(p, &eth).verdict;
        let (a, b) = (act("m1", "ETH", "XYZ"), act("m1", "XYZ", "ETH"));
        assert_eq!(v(&[&a]), Verdict::Rejected(1));
        assert_eq!(v(&[&a, &b]), Verdict::Rejected(5));
        assert_eq!(v(&[&b, &a]), Verdict::Rejected(2));
        let c = act("m2", "XYZ", "ETH");
        assert_eq!(v(&[&a, &c]), Verdict::Accepted);
        // two routes from ETH into C4
        let p = [
            act("x1", "ETH", "CB"),
            act("x2", "CB", "CD"),
            act("x3", "ETH", "CC"),
            act("x4", "CC", "CD"),
            act("x5", "CD", "ETH"),
        ];
        assert_eq!(v(&p.iter().collect::<Vec<_>>()), Verdict::Rejected(6));
    }

    #[test]
    fn loop_off_base_rejected() {
        let eth = AssetId::of("ETH");
        let p = [act("v1", "ETH", "AA"), act("v2", "AA", "ETH"), act("v3", "ETH", "BB")];
        assert_eq!(check_heuristics(&p.iter().collect::<Vec<_>>(), &eth).verdict, Verdict::Rejected(3));
        // BB -> CC -> BB hangs off the base loop; a shared key makes it dependent
        let mut bc = act("v3", "BB", "CC");
        bc.storage_keys.insert(StorageKey::trader(&AssetId::of("AA")));
        let q = [act("v1", "ETH", "AA"), bc, act("v4", "CC", "BB"), act("v2", "AA", "ETH")];
        let r = check_heuristics(&q.iter().collect::<Vec<_>>(), &eth);
        assert_eq!(r.verdict, Verdict::Rejected(7), "{}", r.rejected_reason);
    }

    #[test]
    fn reversing_pair_yields_nothing() {
        let c = Catalog::new(vec![act("m", "ETH", "TKN"), act("m", "TKN", "ETH")]).unwrap();
        let (paths, stats) =
            enumerate_pruned(&c, &AssetId::of("ETH"), &EnumConfig { max_len: 4, ..Default::default() }).unwrap();
        assert!(paths.is_empty());
        assert_eq!(stats.total_after(), 0);
    }

    #[test]
    fn budget_enforced() {
        let c = Catalog::bundled_96();
        let r = enumerate_pruned(&c, &AssetId::of("ETH"), &EnumConfig { max_len: 5, max_expansions: 100 });
        assert_eq!(r, Err(PathError::CombinatorialBudgetExceeded(100)));
    }
}
