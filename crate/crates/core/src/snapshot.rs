//! JSON snapshot files. Amounts travel as decimal strings.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::market::{AssetId, MarketError, Venue, VenueId, VenueKind, WorldState};
use crate::Real;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error in {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid snapshot: {0}")]
    Invalid(#[from] MarketError),
    #[error("venue {0}: missing field {1}")]
    Missing(String, &'static str),
}

/// A real that serializes as a decimal string and accepts either form.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Amount(Real);

impl Serialize for Amount {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for Amount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            S(String),
            N(f64),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(Amount(n)),
            Raw::S(s) => s.trim().parse::<f64>().map(Amount).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum FeeDoc {
    Fraction { numerator: u64, denominator: u64 },
    Ppm { ppm: u32 },
}

#[derive(Debug, Serialize, Deserialize)]
struct VenueDoc {
    venue_id: String,
    kind: String,
    #[serde(default)]
    reserves: BTreeMap<AssetId, Amount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fee: Option<FeeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ratios: Option<BTreeMap<AssetId, u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    collateral_ratio: Option<Amount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    oracle: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    short_asset: Option<AssetId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    long_asset: Option<AssetId>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotDoc {
    block_height: u64,
    balances: BTreeMap<AssetId, Amount>,
    venues: Vec<VenueDoc>,
}

impl From<&Venue> for VenueDoc {
    fn from(v: &Venue) -> Self {
        let mut d = VenueDoc {
            venue_id: v.id.0.clone(),
            kind: v.kind.tag().to_string(),
            reserves: v.reserves.iter().map(|(a, r)| (a.clone(), Amount(*r))).collect(),
            fee: None,
            ratios: None,
            collateral_ratio: None,
            oracle: None,
            short_asset: None,
            long_asset: None,
        };
        match &v.kind {
            VenueKind::ConstantProduct { fee_num, fee_den } => {
                d.fee = Some(FeeDoc::Fraction { numerator: *fee_num, denominator: *fee_den })
            }
            VenueKind::BancorConverter { fee_ppm, ratios } => {
                d.fee = Some(FeeDoc::Ppm { ppm: *fee_ppm });
                d.ratios = Some(ratios.clone());
            }
            VenueKind::OneToOne => {}
            VenueKind::OracleShort { collateral_ratio, oracle, short_asset, long_asset } => {
                d.collateral_ratio = Some(Amount(*collateral_ratio));
                d.oracle = Some(oracle.0.clone());
                d.short_asset = Some(short_asset.clone());
                d.long_asset = Some(long_asset.clone());
            }
        }
        d
    }
}

impl TryFrom<VenueDoc> for Venue {
    type Error = SnapshotError;

    fn try_from(d: VenueDoc) -> Result<Self, SnapshotError> {
        let id = d.venue_id.clone();
        let kind = match d.kind.as_str() {
            "constant_product" => match d.fee {
                None => VenueKind::uniswap(),
                Some(FeeDoc::Fraction { numerator, denominator }) => {
                    VenueKind::ConstantProduct { fee_num: numerator, fee_den: denominator }
                }
                Some(FeeDoc::Ppm { ppm }) => {
                    VenueKind::ConstantProduct { fee_num: 1_000_000 - ppm as u64, fee_den: 1_000_000 }
                }
            },
            "bancor_converter" => {
                let fee_ppm = match d.fee {
                    None => 1000,
                    Some(FeeDoc::Ppm { ppm }) => ppm,
                    Some(FeeDoc::Fraction { .. }) => return Err(SnapshotError::Missing(id, "fee.ppm")),
                };
                let ratios = match d.ratios {
                    Some(r) => r,
                    None => d.reserves.keys().map(|a| (a.clone(), 500_000)).collect(),
                };
                VenueKind::BancorConverter { fee_ppm, ratios }
            }
            "one_to_one" => VenueKind::OneToOne,
            "oracle_short" => VenueKind::OracleShort {
                collateral_ratio: d
                    .collateral_ratio
                    .ok_or_else(|| SnapshotError::Missing(id.clone(), "collateral_ratio"))?
                    .0,
                oracle: VenueId::new(d.oracle.ok_or_else(|| SnapshotError::Missing(id.clone(), "oracle"))?),
                short_asset: d.short_asset.ok_or_else(|| SnapshotError::Missing(id.clone(), "short_asset"))?,
                long_asset: d.long_asset.ok_or_else(|| SnapshotError::Missing(id.clone(), "long_asset"))?,
            },
            _ => return Err(SnapshotError::Missing(id, "kind")),
        };
        let v = Venue {
            id: VenueId::new(d.venue_id),
            kind,
            reserves: d.reserves.into_iter().map(|(a, r)| (a, r.0)).collect(),
        };
        v.validate()?;
        Ok(v)
    }
}

pub fn to_json(state: &WorldState) -> String {
    let doc = SnapshotDoc {
        block_height: state.block_height,
        balances: state.balances.iter().map(|(a, b)| (a.clone(), Amount(*b))).collect(),
        venues: state.venues.values().map(VenueDoc::from).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("serializable")
}

pub fn from_json(text: &str) -> Result<WorldState, SnapshotError> {
    parse(text, Path::new("<memory>"))
}

fn parse(text: &str, path: &Path) -> Result<WorldState, SnapshotError> {
    let doc: SnapshotDoc =
        serde_json::from_str(text).map_err(|source| SnapshotError::Parse { path: path.to_path_buf(), source })?;
    let mut state = WorldState::new(doc.block_height);
    state.balances = doc.balances.into_iter().map(|(a, b)| (a, b.0)).collect();
    for vd in doc.venues {
        let v = Venue::try_from(vd)?;
        state.venues.insert(v.id.clone(), v);
    }
    state.validate()?;
    Ok(state)
}

pub fn load(path: &Path) -> Result<WorldState, SnapshotError> {
    let text = fs::read_to_string(path).map_err(|source| SnapshotError::Io { path: path.to_path_buf(), source })?;
    parse(&text, path)
}

pub fn save(state: &WorldState, path: &Path) -> Result<(), SnapshotError> {
    fs::write(path, to_json(state)).map_err(|source| SnapshotError::Io { path: path.to_path_buf(), source })
}

/// Loads every `*.json` in `dir`, ordered by block height.
pub fn load_dir(dir: &Path) -> Result<Vec<WorldState>, SnapshotError> {
    let io = |source| SnapshotError::Io { path: dir.to_path_buf(), source };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    let mut states = files.iter().map(|p| load(p)).collect::<Result<Vec<_>, _>>()?;
    states.sort_by_key(|s| s.block_height);
    Ok(states)
}

/// Writes one file per state as `<height>.json`.
pub fn save_dir(states: &[WorldState], dir: &Path) -> Result<(), SnapshotError> {
    fs::create_dir_all(dir).map_err(|source| SnapshotError::Io { path: dir.to_path_buf(), source })?;
    for s in states {
        save(s, &dir.join(format!("{:010}.json", s.block_height)))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WorldState {
        WorldState::new(42)
            .with_balance("ETH", 1e21)
            .with_venue(Venue::new("u", VenueKind::uniswap(), &[("ETH", 0.1), ("DAI", 1.0 / 3.0)]))
            .with_venue(Venue::new(
                "b",
                VenueKind::BancorConverter {
                    fee_ppm: 1000,
                    ratios: [(AssetId::of("ETH"), 300_000), (AssetId::of("BNT"), 700_000)].into(),
                },
                &[("ETH", 10936591981278719837125.0), ("BNT", 8792249012668956788248921.0)],
            ))
            .with_venue(Venue::new("m", VenueKind::OneToOne, &[("SAI", 5.0), ("DAI", 5.0)]))
            .with_venue(Venue::new(
                "s",
                VenueKind::OracleShort {
                    collateral_ratio: 0.2,
                    oracle: VenueId::new("u"),
                    short_asset: AssetId::of("ETH"),
                    long_asset: AssetId::of("DAI"),
                },
                &[],
            ))
    }

    #[test]
    fn round_trip_is_lossless() {
        let s = sample();
        let text = to_json(&s);
        assert!(text.contains("\"0.1\""));
        assert_eq!(from_json(&text).unwrap(), s);
    }

    #[test]
    fn numbers_accepted() {
        let t = r#"{"block_height":1,"balances":{"ETH":5},"venues":[
            {"venue_id":"u","kind":"constant_product","reserves":{"ETH":"10","DAI":20}}]}"#;
        let s = from_json(t).unwrap();
        assert_eq!(s.balance(&AssetId::of("ETH")), 5.0);
        assert_eq!(s.venues[&VenueId::new("u")].kind, VenueKind::uniswap());
    }

    #[test]
    fn bad_documents_rejected() {
        let three = r#"{"block_height":1,"balances":{},"venues":[
            {"venue_id":"u","kind":"constant_product","reserves":{"ETH":"1","DAI":"1","SAI":"1"}}]}"#;
        assert!(from_json(three).is_err());
        let neg = r#"{"block_height":1,"balances":{"ETH":"-1"},"venues":[]}"#;
        assert!(from_json(neg).is_err());
        let orphan = r#"{"block_height":1,"balances":{},"venues":[
            {"venue_id":"s","kind":"oracle_short","collateral_ratio":"0.5","oracle":"x","short_asset":"ETH","long_asset":"DAI"}]}"#;
        assert!(from_json(orphan).is_err());
        assert!(from_json("{").is_err());
    }

    #[test]
    fn dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = sample();
        let b = a.clone();
        a.block_height = 7;
        save_dir(&[b.clone(), a.clone()], dir.path()).unwrap();
        let back = load_dir(dir.path()).unwrap();
        assert_eq!(back, vec![a, b]);
    }
}
