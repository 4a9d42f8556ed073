//! Action catalogs.

use std::collections::{BTreeMap, HashMap};

use crate::market::{ActionSpec, AssetId, MarketError, VenueId, VenueKind, WorldState};

/// Name of the bundled 96-action catalog.
pub const BUNDLED_96: &str = "appendix-b-96";

const UNISWAP_TOKENS: [&str; 24] = [
    "AMN", "AMPL", "ANT", "BAT", "BNT", "DAI", "DATA", "ENJ", "FXC", "GNO", "HEDG", "KNC", "MANA", "MKR", "POA20",
    "RCN", "RDN", "RLC", "SAI", "SAN", "SNT", "TKN", "TRST", "UBT",
];

const BANCOR_TOKENS: [&str; 23] = [
    "AMN", "AMPL", "ANT", "BAT", "DATA", "ENJ", "ETH", "FXC", "GNO", "HEDG", "KNC", "MANA", "MKR", "POA20", "RCN",
    "RDN", "RLC", "SAI", "SAN", "SNT", "TKN", "TRST", "UBT",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    actions: Vec<ActionSpec>,
    index: HashMap<String, usize>,
}

impl Catalog {
    pub fn new(actions: Vec<ActionSpec>) -> Result<Self, MarketError> {
        let mut index = HashMap::with_capacity(actions.len());
        for (i, a) in actions.iter().enumerate() {
            if a.storage_keys.is_empty() {
                return Err(MarketError::UnknownAction(format!("{} has no storage keys", a.action_id)));
            }
            if index.insert(a.action_id.clone(), i).is_some() {
                return Err(MarketError::UnknownAction(format!("duplicate id {}", a.action_id)));
            }
        }
        Ok(Catalog { actions, index })
    }

    /// Every tradable direction on every venue of `state`, plus one short per
    /// oracle-short venue.
    pub fn from_state(state: &WorldState) -> Self {
        let mut actions = Vec::new();
        for v in state.venues.values() {
            match &v.kind {
                VenueKind::OracleShort { short_asset, .. } => {
                    actions.push(ActionSpec::for_venue(&v.id, &v.kind, short_asset, None));
                }
                _ => {
                    for (i, o) in v.pairs() {
                        actions.push(ActionSpec::for_venue(&v.id, &v.kind, &i, Some(&o)));
                    }
                }
            }
        }
        Catalog::new(actions).expect("venue ids are unique")
    }

    /// The bundled Uniswap / Bancor / MakerDAO action set (96 actions, 25 assets).
    pub fn bundled_96() -> Self {
        let eth = AssetId::of("ETH");
        let bnt = AssetId::of("BNT");
        let mut actions = Vec::with_capacity(96);
        for t in UNISWAP_TOKENS {
            let t = AssetId::of(t);
            let id = VenueId::new(format!("uniswap-{t}"));
            let kind = VenueKind::uniswap();
            actions.push(ActionSpec::for_venue(&id, &kind, &eth, Some(&t)));
            actions.push(ActionSpec::for_venue(&id, &kind, &t, Some(&eth)));
        }
        for t in BANCOR_TOKENS {
            let t = AssetId::of(t);
            let id = VenueId::new(format!("bancor-{t}"));
            let kind = VenueKind::BancorConverter {
                fee_ppm: 1000,
                ratios: [(bnt.clone(), 500_000), (t.clone(), 500_000)].into(),
            };
            actions.push(ActionSpec::for_venue(&id, &kind, &bnt, Some(&t)));
            actions.push(ActionSpec::for_venue(&id, &kind, &t, Some(&bnt)));
        }
        let (dai, sai) = (AssetId::of("DAI"), AssetId::of("SAI"));
        let mk = VenueId::new("makerdao");
        actions.push(ActionSpec::for_venue(&mk, &VenueKind::OneToOne, &dai, Some(&sai)));
        actions.push(ActionSpec::for_venue(&mk, &VenueKind::OneToOne, &sai, Some(&dai)));
        Catalog::new(actions).expect("static catalog")
    }

    pub fn preset(name: &str) -> Option<Self> {
        (name == BUNDLED_96).then(Self::bundled_96)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[ActionSpec] {
        &self.actions
    }

    pub fn get(&self, id: &str) -> Result<&ActionSpec, MarketError> {
        self.index.get(id).map(|i| &self.actions[*i]).ok_or_else(|| MarketError::UnknownAction(id.to_string()))
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn resolve<S: AsRef<str>>(&self, path: &[S]) -> Result<Vec<&ActionSpec>, MarketError> {
        path.iter().map(|id| self.get(id.as_ref())).collect()
    }

    pub fn assets(&self) -> Vec<AssetId> {
        let mut m = BTreeMap::new();
        for a in &self.actions {
            m.insert(a.input_asset.clone(), ());
            if let Some(o) = &a.output_asset {
                m.insert(o.clone(), ());
            }
        }
        m.into_keys().collect()
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let actions: Vec<ActionSpec> = serde_json::from_str(text)?;
        Catalog::new(actions).map_err(<serde_json::Error as serde::de::Error>::custom)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.actions).expect("serializable")
    }
}
