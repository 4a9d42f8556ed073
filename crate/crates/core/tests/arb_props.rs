mod common;

use mevsearch_core::arb::{
    build_graph, connect_to_base, find_negative_cycle, greedy_param_search, run_arb, ArbConfig, ArbError, MarketGraph,
    NegCycle, Termination,
};
use mevsearch_core::market::execute;
use mevsearch_core::optimize::{rank_paths, ParamPolicy};
use mevsearch_core::paths::{enumerate_pruned, EnumConfig};
use mevsearch_core::{apply_action, presets, strategy_revenue, AssetId, Catalog, Venue, VenueKind, WorldState};
use proptest::prelude::*;
use rand::Rng;

const EPS: f64 = 1e-6;

fn weight(g: &MarketGraph, from: &str, to: &str) -> f64 {
    let (u, v) = (g.node(&AssetId::of(from)).unwrap(), g.node(&AssetId::of(to)).unwrap());
    g.edge(u, v).unwrap().weight
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn bfm_agrees_with_exhaustive_search(seed in any::<u64>(), n in 1usize..=6) {
        let edges = common::random_graph(&mut common::rng(seed), n);
        let g = MarketGraph::from_weights(n, &edges);
        let found = find_negative_cycle(&g, EPS);
        prop_assert_eq!(found.is_some(), common::has_negative_simple_cycle(n, &edges));
        if let Some(c) = found {
            prop_assert!(c.weight_sum < 0.0);
            prop_assert!(c.price_product(&g) > 1.0);
            prop_assert_eq!(c.assets.first(), c.assets.last());
            prop_assert_eq!(c.actions.len(), c.assets.len() - 1);
        }
    }

    #[test]
    fn connection_maximizes_round_trip(seed in any::<u64>(), k in 2usize..=4) {
        let mut r = common::rng(seed);
        // node 0 is the base, 1..=k the cycle
        let mut edges = Vec::new();
        for i in 1..=k {
            edges.push((i, i % k + 1, -r.gen_range(0.01..0.3)));
            if r.gen_bool(0.7) {
                edges.push((0, i, r.gen_range(-0.5..0.5)));
            }
            if r.gen_bool(0.7) {
                edges.push((i, 0, r.gen_range(-0.5..0.5)));
            }
        }
        let g = MarketGraph::from_weights(k + 1, &edges);
        let node = |i: usize| g.nodes[i].clone();
        let cycle = NegCycle {
            assets: (0..=k).map(|i| node(i % k + 1)).collect(),
            venues: (1..=k).map(|i| g.edge(i, i % k + 1).unwrap().venue.clone()).collect(),
            actions: (1..=k).map(|i| g.edge(i, i % k + 1).unwrap().action.clone()).collect(),
            weight_sum: edges[..].iter().filter(|e| e.0 != 0 && e.1 != 0).map(|e| e.2).sum(),
        };
        let base = node(0);
        let price_of = |ids: &[String]| -> f64 {
            ids.iter().map(|id| g.edges.iter().find(|e| &e.action == id).unwrap().price).product()
        };
        // every entry/exit pair, walking forward around the cycle
        let mut best: Option<f64> = None;
        for e in 1..=k {
            for f in 1..=k {
                let (Some(a), Some(b)) = (g.edge(0, e), g.edge(f, 0)) else { continue };
                let mut p = a.price * b.price;
                let mut u = e;
                loop {
                    let v = u % k + 1;
                    p *= g.edge(u, v).unwrap().price;
                    u = v;
                    if u == f {
                        break;
                    }
                }
                best = Some(best.map_or(p, |q: f64| q.max(p)));
            }
        }
        match (connect_to_base(&cycle, &g, &base), best) {
            (Ok(path), Some(b)) => {
                prop_assert!((price_of(&path) - b).abs() <= 1e-12 * b);
                prop_assert!(path.first().unwrap().starts_with("v0_"));
                prop_assert!(path.last().unwrap().ends_with("->A0"));
            }
            (Err(ArbError::NoRoute { .. }), None) => {}
            (got, want) => prop_assert!(false, "{:?} vs {:?}", got, want),
        }
    }

    #[test]
    fn committed_strategies_replay(seed in any::<u64>()) {
        let sc = presets::random(seed);
        let cfg = ArbConfig { min_revenue: 0.0, ..Default::default() };
        let out = run_arb(&sc.state, &sc.catalog, &sc.base, &cfg).unwrap();
        let mut s = sc.state.clone();
        for st in &out.strategies {
            let acts = sc.catalog.resolve(&st.path).unwrap();
            let r = strategy_revenue(&s, &acts, &st.params, &sc.base).unwrap();
            prop_assert!((r - st.revenue).abs() <= 1e-6 * st.revenue.abs().max(1e-9));
            let g0 = build_graph(&s, &sc.catalog);
            let next = execute(&s, &acts, &st.params).unwrap();
            let g1 = build_graph(&next, &sc.catalog);
            // some edge along the strategy moved
            let moved = acts.iter().any(|a| {
                let o = a.output_asset.as_ref().unwrap();
                let w = |g: &MarketGraph| g.node(&a.input_asset).zip(g.node(o)).and_then(|(u, v)| g.edge(u, v)).map(|e| e.weight);
                w(&g0) != w(&g1)
            });
            prop_assert!(moved);
            s = next;
        }
        if out.termination == Termination::NoCycle {
            prop_assert!(find_negative_cycle(&build_graph(&out.final_state, &sc.catalog), cfg.cycle_epsilon).is_none());
        }
    }
}

#[test]
fn bzx_weights_and_short() {
    let sc = presets::bzx_short();
    let g = build_graph(&sc.state, &sc.catalog);
    let (w1, w2) = (weight(&g, "ETH", "WBTC"), weight(&g, "WBTC", "ETH"));
    assert!((w1 - 4.07).abs() < 0.01, "{w1}");
    assert!((w2 + 3.79).abs() < 0.01, "{w2}");
    assert!(((w1 + w2) - 0.28).abs() < 0.01);
    assert!(find_negative_cycle(&g, EPS).is_none());

    let short = sc.catalog.get("bzx:ETH->").unwrap();
    let pushed = apply_action(&sc.state, short, 1000.0).unwrap();
    let g2 = build_graph(&pushed, &sc.catalog);
    assert!((weight(&g2, "WBTC", "ETH") + 4.70).abs() < 0.01);
    let c = find_negative_cycle(&g2, EPS).unwrap();
    assert!((c.weight_sum + 0.63).abs() < 0.01, "{}", c.weight_sum);
    assert_eq!(c.assets.len(), 3);
}

#[test]
fn unit_price_is_zero_weight() {
    let s = WorldState::new(1).with_venue(Venue::new("m", VenueKind::OneToOne, &[("SAI", 10.0), ("DAI", 10.0)]));
    let g = build_graph(&s, &Catalog::from_state(&s));
    assert_eq!(weight(&g, "SAI", "DAI"), 0.0);
    assert!(find_negative_cycle(&g, EPS).is_none());
}

fn triangle() -> (WorldState, Catalog, Vec<String>) {
    let s = WorldState::new(1)
        .with_balance("ETH", 1000.0)
        .with_venue(Venue::new("p0", VenueKind::uniswap(), &[("ETH", 1000.0), ("TKA", 2000.0)]))
        .with_venue(Venue::new("p1", VenueKind::uniswap(), &[("TKA", 2000.0), ("TKB", 4000.0)]))
        .with_venue(Venue::new("p2", VenueKind::uniswap(), &[("TKB", 3600.0), ("ETH", 1000.0)]));
    let c = Catalog::from_state(&s);
    (s, c, vec!["p0:ETH->TKA".into(), "p1:TKA->TKB".into(), "p2:TKB->ETH".into()])
}

#[test]
fn greedy_search_matches_grid() {
    let (s, c, path) = triangle();
    let (rev, params) = greedy_param_search(&s, &c, &path, &AssetId::of("ETH")).unwrap();
    let hops = [
        common::Hop { x: 1000.0, y: 2000.0, fee: 0.997 },
        common::Hop { x: 2000.0, y: 4000.0, fee: 0.997 },
        common::Hop { x: 3600.0, y: 1000.0, fee: 0.997 },
    ];
    let (gx, gv) = common::grid_max(|x| common::chained_oracle(&hops, x), 1000.0, 1_000_000);
    assert!((params[0] - gx).abs() <= 1e-3 * gx, "{} vs {gx}", params[0]);
    assert!(rev >= gv - 1e-9);
    let acts = c.resolve(&path).unwrap();
    for k in [0.5, 2.0] {
        let r = mevsearch_core::optimize::chained_revenue(&s, &acts, &AssetId::of("ETH"), params[0] * k);
        assert!(r < rev);
    }
}

#[test]
fn zero_liquidity_hop_has_no_profit() {
    let (mut s, c, path) = triangle();
    s.venues.get_mut(&"p1".into()).unwrap().reserves.insert(AssetId::of("TKB"), 0.0);
    assert_eq!(greedy_param_search(&s, &c, &path, &AssetId::of("ETH")), Err(ArbError::NoProfit));
}

#[test]
fn no_cycle_means_nothing_committed() {
    let s = WorldState::new(1).with_balance("ETH", 10.0).with_venue(Venue::new(
        "a",
        VenueKind::uniswap(),
        &[("ETH", 10.0), ("TKA", 10.0)],
    ));
    let out = run_arb(&s, &Catalog::from_state(&s), &AssetId::of("ETH"), &ArbConfig::default()).unwrap();
    assert!(out.strategies.is_empty());
    assert_eq!(out.total_revenue, 0.0);
    assert_eq!(out.termination, Termination::NoCycle);
}

#[test]
fn greedy_order_loses_to_ranking() {
    let sc = presets::block_9819643_style();
    let (paths, _) = enumerate_pruned(&sc.catalog, &sc.base, &EnumConfig::default()).unwrap();
    let best = rank_paths(&paths, &sc.state, &sc.catalog, &sc.base, ParamPolicy::Chained).unwrap();
    let out = run_arb(&sc.state, &sc.catalog, &sc.base, &ArbConfig::default()).unwrap();
    assert_eq!(out.strategies.len(), 1);
    assert!(out.total_revenue < best.revenue);
    assert_ne!(out.strategies[0].path, best.path);
    let after =
        rank_paths(std::slice::from_ref(&best.path), &out.final_state, &sc.catalog, &sc.base, ParamPolicy::Chained)
            .unwrap();
    assert!(after.revenue < ArbConfig::default().min_revenue);
}

#[test]
fn iteration_cap_is_reported() {
    let sc = presets::block_9819643_style();
    let cfg = ArbConfig { min_revenue: 0.0, max_cycles: 1, ..Default::default() };
    let out = run_arb(&sc.state, &sc.catalog, &sc.base, &cfg).unwrap();
    assert_eq!(out.termination, Termination::IterationCap);
    assert_eq!(out.cap_error(), Some(ArbError::IterationCapExceeded(1)));
    assert_eq!(out.strategies.len(), 1);
}

#[test]
fn random_presets_usually_have_loops() {
    let cfg = ArbConfig { min_revenue: 0.0, ..Default::default() };
    let hits = (0..20u64)
        .filter(|&s| {
            let sc = presets::random(s);
            !run_arb(&sc.state, &sc.catalog, &sc.base, &cfg).unwrap().strategies.is_empty()
        })
        .count();
    assert!(hits >= 10, "{hits}");
}
