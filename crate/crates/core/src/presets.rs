//! Named synthetic scenarios and the seeded block-series generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::Catalog;
use crate::market::{ActionId, ActionSpec, AssetId, Venue, VenueId, VenueKind, WorldState};
use crate::Real;

pub const BZX_SHORT: &str = "fig5-bzx";
pub const BLOCK_9819643_STYLE: &str = "block-9819643-style";
pub const BANCOR_PAIR: &str = "appendix-e-bancor";
pub const WORKED_PATH: &str = "fig2-path";
pub const RANDOM: &str = "random";

pub const NAMES: [&str; 5] = [BZX_SHORT, BLOCK_9819643_STYLE, BANCOR_PAIR, WORKED_PATH, RANDOM];

/// A state, the actions available on it and the base asset.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub state: WorldState,
    pub catalog: Catalog,
    pub base: AssetId,
}

fn bancor(id: &str, a: (&str, Real), b: (&str, Real)) -> Venue {
    let ratios = [(AssetId::of(a.0), 500_000), (AssetId::of(b.0), 500_000)].into_iter().collect();
    Venue::new(id, VenueKind::BancorConverter { fee_ppm: 1000, ratios }, &[a, b])
}

fn scenario(name: &str, state: WorldState, catalog: Catalog) -> Scenario {
    Scenario { name: name.into(), state, catalog, base: AssetId::of("ETH") }
}

/// Lending venue quoting WBTC at 0.0170 ETH⁻¹, a Uniswap WBTC pool quoting
/// 44.1488 and a margin short whose price oracle is that pool.
pub fn bzx_short() -> Scenario {
    let state = WorldState::new(9_484_688)
        .with_balance("ETH", 2000.0)
        .with_venue(Venue::new(
            "compound",
            VenueKind::ConstantProduct { fee_num: 1000, fee_den: 1000 },
            &[("ETH", 1e9), ("WBTC", 1.7e7)],
        ))
        .with_venue(Venue::new(
            "uni-wbtc",
            VenueKind::uniswap(),
            &[("ETH", 8582.882095309005), ("WBTC", 193.82482534118884)],
        ))
        .with_venue(Venue::new(
            "bzx",
            VenueKind::OracleShort {
                collateral_ratio: 0.2,
                oracle: VenueId::new("uni-wbtc"),
                short_asset: AssetId::of("ETH"),
                long_asset: AssetId::of("WBTC"),
            },
            &[("ETH", 0.0), ("WBTC", 0.0)],
        ));
    let act = |v: &str, i: &str, o: Option<&str>| {
        let venue = state.venue(&VenueId::new(v)).expect("venue");
        ActionSpec::for_venue(&venue.id, &venue.kind, &AssetId::of(i), o.map(AssetId::of).as_ref())
    };
    let catalog = Catalog::new(vec![
        act("bzx", "ETH", None),
        act("compound", "ETH", Some("WBTC")),
        act("uni-wbtc", "WBTC", Some("ETH")),
    ])
    .expect("static catalog");
    scenario(BZX_SHORT, state, catalog)
}

/// Two overlapping ETH loops: ETH→BNT→MKR→ETH (larger) and
/// ETH→BAT→BNT→MKR→ETH (smaller). They share the BNT→MKR converter, so taking
/// the smaller one first leaves little of the larger.
pub fn block_9819643_style() -> Scenario {
    let state = WorldState::new(9_819_643)
        .with_balance("ETH", 1000.0)
        .with_venue(bancor("bancor-ETH", ("ETH", 158_700.0), ("BNT", 158_700_000.0)))
        .with_venue(bancor("bancor-MKR", ("BNT", 3_174_000.0), ("MKR", 6538.5)))
        .with_venue(Venue::new("uniswap-MKR", VenueKind::uniswap(), &[("MKR", 6348.0), ("ETH", 3174.0)]))
        .with_venue(Venue::new("uniswap-BAT", VenueKind::uniswap(), &[("ETH", 2669.0), ("BAT", 5_338_000.0)]))
        .with_venue(bancor("bancor-BAT", ("BAT", 5_338_000.0), ("BNT", 2_682_300.0)));
    let catalog = Catalog::from_state(&state);
    scenario(BLOCK_9819643_STYLE, state, catalog)
}

/// The two-venue ETH/BNT instance with reserves in wei.
pub fn bancor_pair() -> Scenario {
    let state = WorldState::new(9_000_000)
        .with_balance("ETH", 1e21)
        .with_balance("BNT", 0.0)
        .with_venue(Venue::new(
            "uniswap-BNT",
            VenueKind::uniswap(),
            &[("ETH", 135_368_255_883_939_133_529.0), ("BNT", 108_143_877_658_121_296_155_075.0)],
        ))
        .with_venue(bancor(
            "bancor-ETH",
            ("ETH", 10_936_591_981_278_719_837_125.0),
            ("BNT", 8_792_249_012_668_956_788_248_921.0),
        ));
    let catalog = Catalog::from_state(&state);
    scenario(BANCOR_PAIR, state, catalog)
}

/// ETH→SAI on Uniswap, SAI→DAI through the 1:1 migration contract, DAI→ETH on
/// Uniswap. Reserves are set so the best chained revenue is 7.81 ETH.
pub fn worked_path() -> (Scenario, Vec<ActionId>) {
    let state = WorldState::new(9_500_000)
        .with_balance("ETH", 1000.0)
        .with_venue(Venue::new(
            "uniswap-SAI",
            VenueKind::uniswap(),
            &[("ETH", 7830.051306296374), ("SAI", 1_722_611.2873852023)],
        ))
        .with_venue(Venue::new("makerdao", VenueKind::OneToOne, &[("SAI", 1e9), ("DAI", 1e9)]))
        .with_venue(Venue::new(
            "uniswap-DAI",
            VenueKind::uniswap(),
            &[("DAI", 1_566_010.2612592748), ("ETH", 7830.051306296374)],
        ));
    let catalog = Catalog::from_state(&state);
    let path = ["uniswap-SAI:ETH->SAI", "makerdao:SAI->DAI", "uniswap-DAI:DAI->ETH"].map(String::from).to_vec();
    (scenario(WORKED_PATH, state, catalog), path)
}

/// A handful of mispriced ETH pools, reproducible from `seed`.
pub fn random(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tokens = ["TKA", "TKB", "TKC"];
    let prices: Vec<Real> = tokens.iter().map(|_| rng.gen_range(0.5..50.0)).collect();
    let mut state = WorldState::new(rng.gen_range(1..10_000_000)).with_balance("ETH", 1000.0);
    let mut n = 0;
    for (t, p) in tokens.iter().zip(&prices) {
        for _ in 0..2 {
            let eth = rng.gen_range(500.0..20_000.0);
            let skew = rng.gen_range(0.9..1.1);
            state = state.with_venue(Venue::new(
                &format!("pool-{n}"),
                VenueKind::uniswap(),
                &[("ETH", eth), (t, eth * p * skew)],
            ));
            n += 1;
        }
    }
    let (a, b) = (tokens[0], tokens[1]);
    let eth = rng.gen_range(500.0..20_000.0);
    let skew = rng.gen_range(0.9..1.1);
    state = state.with_venue(Venue::new(
        &format!("pool-{n}"),
        VenueKind::uniswap(),
        &[(a, eth * prices[0]), (b, eth * prices[1] * skew)],
    ));
    let catalog = Catalog::from_state(&state);
    scenario(RANDOM, state, catalog)
}

pub fn by_name(name: &str, seed: u64) -> Option<Scenario> {
    Some(match name {
        BZX_SHORT => bzx_short(),
        BLOCK_9819643_STYLE => block_9819643_style(),
        BANCOR_PAIR => bancor_pair(),
        WORKED_PATH => worked_path().0,
        RANDOM => random(seed),
        _ => return None,
    })
}

/// `start` followed by `blocks` successors, exactly `touched` of which differ
/// from their predecessor: every reserve of every venue drifts by up to 0.5%.
/// Untouched blocks are plain copies with the next height.
pub fn block_series(start: &WorldState, blocks: usize, touched: usize, seed: u64) -> Vec<WorldState> {
    assert!(touched <= blocks, "cannot touch {touched} of {blocks} blocks");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..blocks).collect();
    // partial Fisher-Yates: the first `touched` slots are the touched blocks
    for i in 0..touched {
        let j = rng.gen_range(i..blocks);
        idx.swap(i, j);
    }
    let mut hit = vec![false; blocks];
    for &i in &idx[..touched] {
        hit[i] = true;
    }
    let mut out = Vec::with_capacity(blocks + 1);
    out.push(start.clone());
    for h in hit {
        let mut s = out.last().expect("non-empty").clone();
        s.block_height += 1;
        if h {
            for v in s.venues.values_mut() {
                for r in v.reserves.values_mut() {
                    if *r > 0.0 {
                        *r *= 1.0 + rng.gen_range(-0.005..0.005);
                    }
                }
            }
        }
        out.push(s);
    }
    out
}
