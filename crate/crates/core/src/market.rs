//! Assets, venues, actions and the state transition function.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amm;
use crate::Real;

/// Relative tolerance used when comparing balances for restoration.
pub const STATE_TOL: Real = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("unknown asset {0}")]
    UnknownAsset(String),
    #[error("unknown venue {0}")]
    UnknownVenue(String),
    #[error("unknown action {0}")]
    UnknownAction(String),
    #[error("invalid asset symbol {0:?}")]
    InvalidAsset(String),
    #[error("invalid venue {venue}: {reason}")]
    InvalidVenue { venue: String, reason: String },
    #[error("venue {0} has an empty reserve")]
    EmptyReserve(String),
    #[error("non-finite result on venue {0}")]
    NonFiniteResult(String),
    #[error("invalid amount {0}")]
    InvalidAmount(Real),
    #[error("insufficient {asset}: need {needed}, have {available}")]
    InsufficientBalance { asset: String, needed: Real, available: Real },
    #[error("output {wanted} exceeds reserve {reserve} on {venue}")]
    InsufficientLiquidity { venue: String, wanted: Real, reserve: Real },
    #[error("{asset} not restored: {initial} -> {final_}")]
    ConstraintViolated { asset: String, initial: Real, final_: Real },
    #[error("path and params differ in length ({0} vs {1})")]
    ParamMismatch(usize, usize),
}

/// Token symbol. Non-empty, uppercase ASCII letters and digits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AssetId(String);

impl AssetId {
    pub fn new(sym: impl Into<String>) -> Result<Self, MarketError> {
        let s = sym.into();
        let ok = !s.is_empty()
            && s.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit())
            && s.chars().next().is_some_and(|c| c.is_ascii_uppercase());
        if ok {
            Ok(AssetId(s))
        } else {
            Err(MarketError::InvalidAsset(s))
        }
    }

    /// Panics on a malformed literal.
    pub fn of(sym: &str) -> Self {
        Self::new(sym).expect("valid asset literal")
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for AssetId {
    type Error = MarketError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        AssetId::new(s)
    }
}

impl From<AssetId> for String {
    fn from(a: AssetId) -> String {
        a.0
    }
}

impl fmt::Display for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VenueId(pub String);

impl VenueId {
    pub fn new(s: impl Into<String>) -> Self {
        VenueId(s.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for VenueId {
    fn from(s: &str) -> Self {
        VenueId(s.to_string())
    }
}

impl fmt::Display for VenueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub type ActionId = String;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VenueKind {
    ConstantProduct {
        fee_num: u64,
        fee_den: u64,
    },
    BancorConverter {
        fee_ppm: u32,
        /// Connector weights in ppm, one per reserve asset.
        ratios: BTreeMap<AssetId, u32>,
    },
    OneToOne,
    /// Stylized margin short: the input is posted as collateral, a leveraged
    /// notional of `input / collateral_ratio` is swapped on `oracle`.
    OracleShort {
        collateral_ratio: Real,
        oracle: VenueId,
        short_asset: AssetId,
        long_asset: AssetId,
    },
}

impl VenueKind {
    pub fn uniswap() -> Self {
        VenueKind::ConstantProduct { fee_num: 997, fee_den: 1000 }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            VenueKind::ConstantProduct { .. } => "constant_product",
            VenueKind::BancorConverter { .. } => "bancor_converter",
            VenueKind::OneToOne => "one_to_one",
            VenueKind::OracleShort { .. } => "oracle_short",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Venue {
    pub id: VenueId,
    pub kind: VenueKind,
    pub reserves: BTreeMap<AssetId, Real>,
}

impl Venue {
    pub fn new(id: &str, kind: VenueKind, reserves: &[(&str, Real)]) -> Self {
        Venue { id: VenueId::new(id), kind, reserves: reserves.iter().map(|(a, r)| (AssetId::of(a), *r)).collect() }
    }

    fn invalid(&self, reason: impl Into<String>) -> MarketError {
        MarketError::InvalidVenue { venue: self.id.0.clone(), reason: reason.into() }
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        for (a, r) in &self.reserves {
            if !r.is_finite() || *r < 0.0 {
                return Err(self.invalid(format!("reserve {a} = {r}")));
            }
        }
        match &self.kind {
            VenueKind::ConstantProduct { fee_num, fee_den } => {
                if self.reserves.len() != 2 {
                    return Err(self.invalid("constant product needs exactly 2 reserves"));
                }
                if *fee_den == 0 || fee_num > fee_den || *fee_num == 0 {
                    return Err(self.invalid("fee must be a fraction in (0, 1]"));
                }
            }
            VenueKind::BancorConverter { fee_ppm, ratios } => {
                if *fee_ppm >= 1_000_000 {
                    return Err(self.invalid("fee ppm must be below 1e6"));
                }
                for a in self.reserves.keys() {
                    match ratios.get(a) {
                        Some(w) if *w > 0 && *w <= 1_000_000 => {}
                        _ => return Err(self.invalid(format!("bad connector ratio for {a}"))),
                    }
                }
            }
            VenueKind::OneToOne => {
                if self.reserves.len() != 2 {
                    return Err(self.invalid("one-to-one needs exactly 2 reserves"));
                }
            }
            VenueKind::OracleShort { collateral_ratio, .. } => {
                if !(*collateral_ratio > 0.0 && *collateral_ratio <= 1.0) {
                    return Err(self.invalid("collateral ratio must be in (0, 1]"));
                }
            }
        }
        Ok(())
    }

    pub fn reserve(&self, asset: &AssetId) -> Result<Real, MarketError> {
        self.reserves.get(asset).copied().ok_or_else(|| MarketError::UnknownAsset(format!("{asset} on {}", self.id)))
    }

    /// True when no reserve is zero.
    pub fn is_live(&self) -> bool {
        !self.reserves.is_empty() && self.reserves.values().all(|r| *r > 0.0)
    }

    /// Directed pairs this venue can trade.
    pub fn pairs(&self) -> Vec<(AssetId, AssetId)> {
        if matches!(self.kind, VenueKind::OracleShort { .. }) {
            return Vec::new();
        }
        let mut out = Vec::new();
        for a in self.reserves.keys() {
            for b in self.reserves.keys() {
                if a != b {
                    out.push((a.clone(), b.clone()));
                }
            }
        }
        out
    }

    fn pool_pair(&self, input: &AssetId, output: &AssetId) -> Result<(Real, Real), MarketError> {
        if input == output {
            return Err(MarketError::UnknownAsset(format!("{input}->{output} on {}", self.id)));
        }
        Ok((self.reserve(input)?, self.reserve(output)?))
    }

    /// Amount of `output` received for `amount` of `input`. Oracle shorts need
    /// the surrounding state, see [`WorldState::quote`].
    pub fn quote(&self, input: &AssetId, output: &AssetId, amount: Real) -> Result<Real, MarketError> {
        if !(amount >= 0.0) || !amount.is_finite() {
            return Err(MarketError::InvalidAmount(amount));
        }
        let (x, y) = self.pool_pair(input, output)?;
        let out = match &self.kind {
            VenueKind::ConstantProduct { fee_num, fee_den } => {
                if amount == 0.0 {
                    return Ok(0.0);
                }
                if x == 0.0 {
                    return Err(MarketError::EmptyReserve(self.id.0.clone()));
                }
                amm::cp_quote(x, y, *fee_num as Real / *fee_den as Real, amount)
            }
            VenueKind::BancorConverter { fee_ppm, ratios } => {
                if amount == 0.0 {
                    return Ok(0.0);
                }
                if x == 0.0 {
                    return Err(MarketError::EmptyReserve(self.id.0.clone()));
                }
                let (wi, wo) = (ratio(ratios, input)?, ratio(ratios, output)?);
                amm::bancor_quote(x, y, wi, wo, bancor_fee(*fee_ppm), amount)
            }
            VenueKind::OneToOne => {
                if amount > y {
                    return Err(MarketError::InsufficientLiquidity {
                        venue: self.id.0.clone(),
                        wanted: amount,
                        reserve: y,
                    });
                }
                amount
            }
            VenueKind::OracleShort { .. } => {
                return Err(MarketError::UnknownAsset(format!("{input}->{output} on {}", self.id)))
            }
        };
        if !out.is_finite() {
            return Err(MarketError::NonFiniteResult(self.id.0.clone()));
        }
        Ok(out)
    }

    pub fn spot_price(&self, input: &AssetId, output: &AssetId) -> Result<Real, MarketError> {
        let (x, y) = self.pool_pair(input, output)?;
        if x == 0.0 || y == 0.0 {
            return Err(MarketError::EmptyReserve(self.id.0.clone()));
        }
        let p = match &self.kind {
            VenueKind::ConstantProduct { fee_num, fee_den } => amm::cp_spot(x, y, *fee_num as Real / *fee_den as Real),
            VenueKind::BancorConverter { fee_ppm, ratios } => {
                amm::bancor_spot(x, y, ratio(ratios, input)?, ratio(ratios, output)?, bancor_fee(*fee_ppm))
            }
            VenueKind::OneToOne => 1.0,
            VenueKind::OracleShort { .. } => {
                return Err(MarketError::UnknownAsset(format!("{input}->{output} on {}", self.id)))
            }
        };
        if !p.is_finite() {
            return Err(MarketError::NonFiniteResult(self.id.0.clone()));
        }
        Ok(p)
    }

    /// Reserves after selling `amount` of `input`, returning the output amount.
    fn swap(&mut self, input: &AssetId, output: &AssetId, amount: Real) -> Result<Real, MarketError> {
        let out = self.quote(input, output, amount)?;
        let (x, y) = self.pool_pair(input, output)?;
        let new_out = match &self.kind {
            VenueKind::ConstantProduct { fee_num, fee_den } if amount > 0.0 => {
                amm::cp_out_reserve(x, y, *fee_num as Real / *fee_den as Real, amount)
            }
            _ => y - out,
        };
        self.reserves.insert(input.clone(), x + amount);
        self.reserves.insert(output.clone(), new_out);
        Ok(out)
    }
}

pub(crate) fn bancor_fee(ppm: u32) -> Real {
    (1_000_000.0 - ppm as Real) / 1_000_000.0
}

fn ratio(ratios: &BTreeMap<AssetId, u32>, a: &AssetId) -> Result<Real, MarketError> {
    ratios.get(a).map(|w| *w as Real).ok_or_else(|| MarketError::UnknownAsset(format!("no connector ratio for {a}")))
}

/// A storage slot an action reads or writes. `scope` is `"trader"` for
/// balances, otherwise the venue id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StorageKey {
    pub scope: String,
    pub field: String,
}

impl StorageKey {
    pub const TRADER: &'static str = "trader";

    pub fn trader(asset: &AssetId) -> Self {
        StorageKey { scope: Self::TRADER.into(), field: asset.0.clone() }
    }
    pub fn venue(venue: &VenueId, field: impl Into<String>) -> Self {
        StorageKey { scope: venue.0.clone(), field: field.into() }
    }
}

impl fmt::Display for StorageKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.scope, self.field)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub action_id: ActionId,
    pub venue: VenueId,
    pub input_asset: AssetId,
    pub output_asset: Option<AssetId>,
    pub storage_keys: BTreeSet<StorageKey>,
}

impl ActionSpec {
    /// Builds an action with the key set implied by the venue kind.
    /// `oracle` is the oracle venue's kind when `kind` is an oracle short.
    pub fn for_venue(venue: &VenueId, kind: &VenueKind, input: &AssetId, output: Option<&AssetId>) -> Self {
        let mut keys = BTreeSet::new();
        keys.insert(StorageKey::trader(input));
        if let Some(o) = output {
            keys.insert(StorageKey::trader(o));
        }
        let mut pool = |v: &VenueId, k: &VenueKind, i: &AssetId, o: &AssetId| {
            keys.insert(StorageKey::venue(v, i.as_str()));
            keys.insert(StorageKey::venue(v, o.as_str()));
            match k {
                VenueKind::ConstantProduct { .. } => {
                    keys.insert(StorageKey::venue(v, "fee"));
                }
                VenueKind::BancorConverter { .. } => {
                    keys.insert(StorageKey::venue(v, "fee"));
                    keys.insert(StorageKey::venue(v, format!("ratio:{i}")));
                    keys.insert(StorageKey::venue(v, format!("ratio:{o}")));
                }
                _ => {}
            }
        };
        match kind {
            VenueKind::OracleShort { oracle, short_asset, long_asset, .. } => {
                pool(venue, &VenueKind::OneToOne, short_asset, long_asset);
                pool(oracle, &VenueKind::uniswap(), short_asset, long_asset);
                keys.insert(StorageKey::venue(venue, "collateral_ratio"));
            }
            _ => {
                let o = output.expect("pool actions have an output");
                pool(venue, kind, input, o);
            }
        }
        ActionSpec {
            action_id: action_id(venue, input, output),
            venue: venue.clone(),
            input_asset: input.clone(),
            output_asset: output.cloned(),
            storage_keys: keys,
        }
    }

    pub fn is_entering(&self, base: &AssetId) -> bool {
        &self.input_asset == base
    }

    pub fn is_exiting(&self, base: &AssetId) -> bool {
        self.output_asset.as_ref() == Some(base)
    }

    /// Same venue, swapped direction.
    pub fn reverses(&self, other: &ActionSpec) -> bool {
        self.venue == other.venue
            && self.output_asset.as_ref() == Some(&other.input_asset)
            && other.output_asset.as_ref() == Some(&self.input_asset)
    }
}

pub fn action_id(venue: &VenueId, input: &AssetId, output: Option<&AssetId>) -> ActionId {
    match output {
        Some(o) => format!("{venue}:{input}->{o}"),
        None => format!("{venue}:{input}->"),
    }
}

/// Trader balances plus every venue at one block height.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldState {
    pub block_height: u64,
    pub balances: BTreeMap<AssetId, Real>,
    pub venues: BTreeMap<VenueId, Venue>,
}

impl WorldState {
    pub fn new(block_height: u64) -> Self {
        WorldState { block_height, ..Default::default() }
    }

    pub fn with_balance(mut self, asset: &str, amount: Real) -> Self {
        self.balances.insert(AssetId::of(asset), amount);
        self
    }

    pub fn with_venue(mut self, v: Venue) -> Self {
        self.venues.insert(v.id.clone(), v);
        self
    }

    pub fn balance(&self, a: &AssetId) -> Real {
        self.balances.get(a).copied().unwrap_or(0.0)
    }

    pub fn venue(&self, id: &VenueId) -> Result<&Venue, MarketError> {
        self.venues.get(id).ok_or_else(|| MarketError::UnknownVenue(id.0.clone()))
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        if let Some(b) = self.balances.values().find(|b| !b.is_finite() || **b < 0.0) {
            return Err(MarketError::InvalidAmount(*b));
        }
        for v in self.venues.values() {
            v.validate()?;
            if let VenueKind::OracleShort { oracle, .. } = &v.kind {
                self.venue(oracle)?;
            }
        }
        Ok(())
    }

    /// Current value of a storage key, `None` when it does not exist.
    pub fn read_key(&self, key: &StorageKey) -> Option<Real> {
        if key.scope == StorageKey::TRADER {
            let a = AssetId::new(key.field.clone()).ok()?;
            return Some(self.balance(&a));
        }
        let v = self.venues.get(&VenueId::new(key.scope.clone()))?;
        if let Some(a) = key.field.strip_prefix("ratio:") {
            if let VenueKind::BancorConverter { ratios, .. } = &v.kind {
                return ratios.get(&AssetId::new(a).ok()?).map(|w| *w as Real);
            }
            return None;
        }
        match (key.field.as_str(), &v.kind) {
            ("fee", VenueKind::ConstantProduct { fee_num, fee_den }) => Some(*fee_num as Real / *fee_den as Real),
            ("fee", VenueKind::BancorConverter { fee_ppm, .. }) => Some(*fee_ppm as Real),
            ("collateral_ratio", VenueKind::OracleShort { collateral_ratio, .. }) => Some(*collateral_ratio),
            (f, _) => v.reserves.get(&AssetId::new(f).ok()?).copied(),
        }
    }

    /// Quote for any venue kind. For an oracle short this is the long-side
    /// notional `amount / collateral_ratio` priced at the oracle's spot rate.
    pub fn quote(&self, venue: &VenueId, input: &AssetId, output: &AssetId, amount: Real) -> Result<Real, MarketError> {
        let v = self.venue(venue)?;
        match &v.kind {
            VenueKind::OracleShort { collateral_ratio, oracle, short_asset, long_asset } => {
                if input != short_asset || output != long_asset {
                    return Err(MarketError::UnknownAsset(format!("{input} on {venue}")));
                }
                if !(amount >= 0.0) || !amount.is_finite() {
                    return Err(MarketError::InvalidAmount(amount));
                }
                let p = self.venue(oracle)?.spot_price(short_asset, long_asset)?;
                Ok(amount / collateral_ratio * p)
            }
            _ => v.quote(input, output, amount),
        }
    }

    pub fn spot_price(&self, venue: &VenueId, input: &AssetId, output: &AssetId) -> Result<Real, MarketError> {
        let v = self.venue(venue)?;
        match &v.kind {
            VenueKind::OracleShort { oracle, short_asset, long_asset, .. }
                if input == short_asset && output == long_asset =>
            {
                self.venue(oracle)?.spot_price(short_asset, long_asset)
            }
            _ => v.spot_price(input, output),
        }
    }
}

/// Executes `action` with input amount `x`, returning the next state.
pub fn apply_action(state: &WorldState, action: &ActionSpec, x: Real) -> Result<WorldState, MarketError> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(MarketError::InvalidAmount(x));
    }
    let have = state.balance(&action.input_asset);
    if x > have {
        return Err(MarketError::InsufficientBalance {
            asset: action.input_asset.0.clone(),
            needed: x,
            available: have,
        });
    }
    let mut next = state.clone();
    let venue = next.venues.get_mut(&action.venue).ok_or_else(|| MarketError::UnknownVenue(action.venue.0.clone()))?;
    let received = match (&venue.kind, &action.output_asset) {
        (VenueKind::OracleShort { collateral_ratio, oracle, short_asset, long_asset }, None) => {
            if &action.input_asset != short_asset {
                return Err(MarketError::UnknownAsset(action.input_asset.0.clone()));
            }
            let (cr, oracle, s, l) = (*collateral_ratio, oracle.clone(), short_asset.clone(), long_asset.clone());
            *venue.reserves.entry(s.clone()).or_insert(0.0) += x;
            let ov = next.venues.get_mut(&oracle).ok_or_else(|| MarketError::UnknownVenue(oracle.0.clone()))?;
            let bought = ov.swap(&s, &l, x / cr)?;
            let venue = next.venues.get_mut(&action.venue).expect("present");
            *venue.reserves.entry(l).or_insert(0.0) += bought;
            None
        }
        (VenueKind::OracleShort { .. }, Some(o)) => {
            return Err(MarketError::UnknownAsset(o.0.clone()));
        }
        (_, Some(o)) => Some((o.clone(), venue.swap(&action.input_asset, o, x)?)),
        (_, None) => return Err(MarketError::UnknownAction(action.action_id.clone())),
    };
    credit(&mut next.balances, &action.input_asset, -x);
    if let Some((o, amt)) = received {
        credit(&mut next.balances, &o, amt);
    }
    Ok(next)
}

// zero moves leave absent balances absent, so a no-op trade is an exact copy
fn credit(balances: &mut BTreeMap<AssetId, Real>, a: &AssetId, delta: Real) {
    if delta != 0.0 || balances.contains_key(a) {
        *balances.entry(a.clone()).or_insert(0.0) += delta;
    }
}

/// A path plus concrete input amounts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub path: Vec<ActionId>,
    pub params: Vec<Real>,
    pub revenue: Real,
    /// Height of the state the strategy was computed against.
    pub block_height: u64,
}

/// Applies every action in order.
pub fn execute(state: &WorldState, path: &[&ActionSpec], params: &[Real]) -> Result<WorldState, MarketError> {
    if path.len() != params.len() {
        return Err(MarketError::ParamMismatch(path.len(), params.len()));
    }
    let mut s = state.clone();
    for (a, x) in path.iter().zip(params) {
        s = apply_action(&s, a, *x)?;
    }
    Ok(s)
}

/// Checks every non-base balance is back at its starting value.
pub fn check_restored(initial: &WorldState, fin: &WorldState, base: &AssetId) -> Result<(), MarketError> {
    let assets: BTreeSet<&AssetId> = initial.balances.keys().chain(fin.balances.keys()).collect();
    for a in assets {
        if a == base {
            continue;
        }
        let (b0, b1) = (initial.balance(a), fin.balance(a));
        if (b1 - b0).abs() > STATE_TOL * b0.abs().max(1.0) {
            return Err(MarketError::ConstraintViolated { asset: a.0.clone(), initial: b0, final_: b1 });
        }
    }
    Ok(())
}

/// Base-asset gain of running `path` with `params`, subject to restoration of
/// every other balance.
pub fn strategy_revenue(
    state: &WorldState,
    path: &[&ActionSpec],
    params: &[Real],
    base: &AssetId,
) -> Result<Real, MarketError> {
    let fin = execute(state, path, params)?;
    check_restored(state, &fin, base)?;
    Ok(fin.balance(base) - state.balance(base))
}
