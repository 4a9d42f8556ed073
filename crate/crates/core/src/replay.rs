//! Block-by-block replay with dependency-based state reduction.
//!
//! A path is searched again at block `h` only when one of its storage keys
//! differs from block `h - 1`; the first block has no predecessor and counts
//! as changed. Every candidate is re-executed on a fresh copy of the block
//! state before it is committed, and costs are netted out per strategy.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::arb::{run_arb, ArbConfig};
use crate::catalog::Catalog;
use crate::market::{execute, strategy_revenue, ActionSpec, AssetId, MarketError, StorageKey, Strategy, WorldState};
use crate::optimize::{rank_paths, OptError, ParamPolicy};
use crate::paths::{enumerate_pruned, EnumConfig, PathError};
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("empty block series")]
    Empty,
    #[error("block heights must increase: {prev} then {next}")]
    NotIncreasing { prev: u64, next: u64 },
    #[error("block {0} is not in the series")]
    MissingBlock(u64),
    #[error("invalid cost model: {0}")]
    BadCost(String),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// Snapshots ordered by strictly increasing height.
#[derive(Debug, Clone)]
pub struct BlockSeries {
    states: Vec<WorldState>,
}

impl BlockSeries {
    pub fn new(states: Vec<WorldState>) -> Result<Self, ReplayError> {
        if states.is_empty() {
            return Err(ReplayError::Empty);
        }
        for w in states.windows(2) {
            if w[1].block_height <= w[0].block_height {
                return Err(ReplayError::NotIncreasing { prev: w[0].block_height, next: w[1].block_height });
            }
        }
        Ok(BlockSeries { states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[WorldState] {
        &self.states
    }

    pub fn get(&self, height: u64) -> Option<&WorldState> {
        self.states.binary_search_by_key(&height, |s| s.block_height).ok().map(|i| &self.states[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostModel {
    pub gas_gwei: Real,
    pub gas_per_action: u64,
    /// Flat fee per strategy, base units.
    pub flash_loan_fee: Real,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { gas_gwei: 32.0, gas_per_action: 150_000, flash_loan_fee: 0.0 }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<(), ReplayError> {
        if !(self.gas_gwei >= 0.0) || !(self.flash_loan_fee >= 0.0) {
            return Err(ReplayError::BadCost(format!("{self:?}")));
        }
        Ok(())
    }

    /// Base-asset cost of a strategy with `actions` steps.
    pub fn cost(&self, actions: usize) -> Real {
        self.gas_gwei * 1e-9 * (self.gas_per_action * actions as u64) as Real + self.flash_loan_fee
    }
}

fn keys_differ<'a>(keys: impl IntoIterator<Item = &'a StorageKey>, a: &WorldState, b: &WorldState) -> bool {
    keys.into_iter().any(|k| a.read_key(k) != b.read_key(k))
}

/// Whether any storage key of `path` differs between block `h - 1` and `h`.
pub fn state_changed(path: &[&ActionSpec], series: &BlockSeries, h: u64) -> Result<bool, ReplayError> {
    let cur = series.get(h).ok_or(ReplayError::MissingBlock(h))?;
    let prev_h = h.checked_sub(1).ok_or(ReplayError::MissingBlock(0))?;
    let prev = series.get(prev_h).ok_or(ReplayError::MissingBlock(prev_h))?;
    Ok(keys_differ(path.iter().flat_map(|a| a.storage_keys.iter()), prev, cur))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Arb,
    Search,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Arb => "arb",
            Mode::Search => "search",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "arb" => Ok(Mode::Arb),
            "search" => Ok(Mode::Search),
            _ => Err(format!("unknown mode {s:?}, expected arb or search")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayConfig {
    pub mode: Mode,
    pub cost: CostModel,
    pub min_revenue: Real,
    pub enumeration: EnumConfig,
    pub policy: ParamPolicy,
    pub arb: ArbConfig,
    /// Wall-clock columns are zero unless set, so reports stay reproducible.
    pub record_timing: bool,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            mode: Mode::Search,
            cost: CostModel::default(),
            min_revenue: 0.1,
            enumeration: EnumConfig::default(),
            policy: ParamPolicy::Chained,
            arb: ArbConfig::default(),
            record_timing: false,
        }
    }
}

/// One committed strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayRow {
    pub block: u64,
    pub mode: Mode,
    pub path: String,
    pub revenue: Real,
    pub cost: Real,
    pub net: Real,
    pub ms_prune: f64,
    pub ms_search: f64,
    pub ms_validate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockSummary {
    pub block: u64,
    /// Paths (search) or graphs (arb) handed to discovery at this block.
    pub invocations: usize,
    pub gross: Real,
    pub net: Real,
    pub cumulative_gross: Real,
    pub cumulative_net: Real,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub rows: Vec<ReplayRow>,
    pub blocks: Vec<BlockSummary>,
    pub discovery_invocations: usize,
    /// Blocks at which discovery ran at all.
    pub discovery_blocks: usize,
    pub candidates: usize,
    pub validated: usize,
}

impl ReplayReport {
    pub fn total_net(&self) -> Real {
        self.blocks.last().map_or(0.0, |b| b.cumulative_net)
    }
}

struct Clock(bool);

impl Clock {
    fn since(&self, t: Instant) -> f64 {
        if self.0 {
            t.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        }
    }
}

struct Candidate {
    strategy: Strategy,
    state: WorldState,
}

/// Replays `series`, running discovery only where state changed.
pub fn replay(
    series: &BlockSeries,
    catalog: &Catalog,
    base: &AssetId,
    cfg: &ReplayConfig,
) -> Result<ReplayReport, ReplayError> {
    cfg.cost.validate()?;
    let clock = Clock(cfg.record_timing);
    let mut ms_prune = 0.0;
    let paths = if cfg.mode == Mode::Search {
        let t = Instant::now();
        let (p, _) = enumerate_pruned(catalog, base, &cfg.enumeration)?;
        ms_prune = clock.since(t);
        p
    } else {
        Vec::new()
    };
    let resolved: Vec<Vec<&ActionSpec>> = paths.iter().map(|p| catalog.resolve(p)).collect::<Result<_, _>>()?;
    let all_keys: BTreeSet<&StorageKey> = catalog.actions().iter().flat_map(|a| a.storage_keys.iter()).collect();

    let mut report = ReplayReport {
        rows: Vec::new(),
        blocks: Vec::new(),
        discovery_invocations: 0,
        discovery_blocks: 0,
        candidates: 0,
        validated: 0,
    };
    let (mut cum_gross, mut cum_net) = (0.0, 0.0);
    let states = series.states();
    for (i, state) in states.iter().enumerate() {
        let prev = i.checked_sub(1).map(|j| &states[j]);
        let t_search = Instant::now();
        let mut error = None;
        let (invocations, found): (usize, Vec<Candidate>) = match cfg.mode {
            Mode::Search => {
                let changed: Vec<Vec<String>> = paths
                    .iter()
                    .zip(&resolved)
                    .filter(|(_, acts)| {
                        prev.is_none_or(|p| keys_differ(acts.iter().flat_map(|a| a.storage_keys.iter()), p, state))
                    })
                    .map(|(ids, _)| ids.clone())
                    .collect();
                let found = if changed.is_empty() {
                    Vec::new()
                } else {
                    match rank_paths(&changed, state, catalog, base, cfg.policy) {
                        Ok(s) => vec![Candidate { strategy: s, state: state.clone() }],
                        Err(OptError::NoProfitablePath(_)) | Err(OptError::NoPaths) => Vec::new(),
                        Err(e) => {
                            error = Some(e.to_string());
                            Vec::new()
                        }
                    }
                };
                (changed.len(), found)
            }
            Mode::Arb => {
                if prev.is_none_or(|p| keys_differ(all_keys.iter().copied(), p, state)) {
                    let acfg = ArbConfig { min_revenue: cfg.min_revenue, ..cfg.arb };
                    let found = match run_arb(state, catalog, base, &acfg) {
                        Ok(out) => {
                            // each strategy is validated on the state left by its predecessors
                            let mut s = state.clone();
                            let mut v = Vec::new();
                            for st in out.strategies {
                                let next = catalog.resolve(&st.path).and_then(|acts| execute(&s, &acts, &st.params));
                                let here = s.clone();
                                match next {
                                    Ok(n) => s = n,
                                    Err(e) => {
                                        error = Some(e.to_string());
                                        break;
                                    }
                                }
                                v.push(Candidate { strategy: st, state: here });
                            }
                            v
                        }
                        Err(e) => {
                            error = Some(e.to_string());
                            Vec::new()
                        }
                    };
                    (1, found)
                } else {
                    (0, Vec::new())
                }
            }
        };
        let ms_search = clock.since(t_search);
        report.discovery_invocations += invocations;
        if invocations > 0 {
            report.discovery_blocks += 1;
        }
        report.candidates += found.len();

        let (mut gross, mut net) = (0.0, 0.0);
        for c in found {
            let t = Instant::now();
            let acts = catalog.resolve(&c.strategy.path)?;
            let checked = strategy_revenue(&c.state, &acts, &c.strategy.params, base);
            let ms_validate = clock.since(t);
            let revenue = match checked {
                Ok(r) => r,
                Err(e) => {
                    error = Some(e.to_string());
                    continue;
                }
            };
            report.validated += 1;
            let cost = cfg.cost.cost(acts.len());
            if revenue < cfg.min_revenue || revenue - cost <= 0.0 {
                continue;
            }
            gross += revenue;
            net += revenue - cost;
            report.rows.push(ReplayRow {
                block: state.block_height,
                mode: cfg.mode,
                path: c.strategy.path.join(" "),
                revenue,
                cost,
                net: revenue - cost,
                ms_prune: if i == 0 { ms_prune } else { 0.0 },
                ms_search,
                ms_validate,
            });
        }
        cum_gross += gross;
        cum_net += net;
        report.blocks.push(BlockSummary {
            block: state.block_height,
            invocations,
            gross,
            net,
            cumulative_gross: cum_gross,
            cumulative_net: cum_net,
            error,
        });
    }
    Ok(report)
}
