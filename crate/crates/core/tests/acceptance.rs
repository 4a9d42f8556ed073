//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the report reads top to bottom; exits nonzero on any failure.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use mevsearch_core::arb::{build_graph, find_negative_cycle, run_arb, ArbConfig, MarketGraph};
use mevsearch_core::mdp::{build_mdp, mev_threshold, sweep, MdpSpec};
use mevsearch_core::optimize::{optimize_revenue, rank_paths, OptimizerConfig, ParamPolicy};
use mevsearch_core::paths::{brute_force, deviation_report, enumerate_pruned, EnumConfig, BUNDLED_AFTER_TARGET};
use mevsearch_core::replay::{replay, state_changed, BlockSeries, ReplayConfig};
use mevsearch_core::{apply_action, presets, ActionSpec, AssetId, Catalog, Venue, VenueKind, WorldState};
use rand::Rng;

// tolerances
const PRODUCT_TOL: f64 = 1e-9;
const DERIVATIVE_TOL: f64 = 1e-6;
const BANCOR_TOL: f64 = 1e-9;
const WEIGHT_TOL: f64 = 0.01;
const CYCLE_EPS: f64 = 1e-6;
const OPT_REL: f64 = 1e-3;
const WORKED_REVENUE: f64 = 7.81;
const WORKED_TOL: f64 = 0.01;
const MEV_ANCHOR: f64 = 4.0;
const MDP_MARGIN: f64 = 0.1;
const ROW_TOL: f64 = 1e-12;
const MDP_EPS: f64 = 1e-9;

type Check = Result<String, String>;
type Criterion = (u8, &'static str, fn() -> Check, Option<Duration>);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($msg)+));
        }
    };
}

fn eth() -> AssetId {
    AssetId::of("ETH")
}

fn pair(kind: VenueKind, x: f64, y: f64) -> Venue {
    Venue::new("p", kind, &[("ETH", x), ("TKN", y)])
}

fn amm_math() -> Check {
    let mut r = common::rng(1);
    let tkn = AssetId::of("TKN");
    for _ in 0..1000 {
        let (x, y) = (r.gen_range(1.0..1e12), r.gen_range(1.0..1e12));
        let v = pair(VenueKind::ConstantProduct { fee_num: 1, fee_den: 1 }, x, y);
        let bal = x * 3.0;
        let s = WorldState::new(1).with_balance("ETH", bal).with_venue(v.clone());
        let a = ActionSpec::for_venue(&v.id, &v.kind, &eth(), Some(&tkn));
        let n = apply_action(&s, &a, r.gen_range(0.0..1.0) * bal).map_err(|e| e.to_string())?;
        let w = &n.venues[&v.id];
        let k = w.reserve(&eth()).unwrap() * w.reserve(&tkn).unwrap();
        ensure!((k - x * y).abs() <= PRODUCT_TOL * x * y, "product drift at x={x} y={y}");
    }
    for _ in 0..1000 {
        let (x, y) = (r.gen_range(1.0..1e9), r.gen_range(1.0..1e9));
        let wo = [250_000u32, 500_000][r.gen_range(0..2)];
        let ratios = [(eth(), r.gen_range(100_000..1_000_000)), (tkn.clone(), wo)].into_iter().collect();
        let venues = [
            pair(VenueKind::ConstantProduct { fee_num: 997, fee_den: 1000 }, x, y),
            pair(VenueKind::BancorConverter { fee_ppm: r.gen_range(0..10_000), ratios }, x, y),
        ];
        for v in venues {
            let q = |a: f64| v.quote(&eth(), &tkn, a).unwrap();
            let d = r.gen_range(0.001..2.0) * x;
            let (q0, q1, q2) = (q(d), q(2.0 * d), q(3.0 * d));
            ensure!(q1 > q0 && q2 > q1 && q2 <= y, "{} quote not increasing", v.kind.tag());
            ensure!(q2 - q1 <= (q1 - q0) * (1.0 + 1e-9), "{} quote not concave", v.kind.tag());
            let h = x * 1e-8;
            let fd = q(h) / h;
            let sp = v.spot_price(&eth(), &tkn).unwrap();
            ensure!((fd - sp).abs() <= DERIVATIVE_TOL * sp, "{} spot {sp} vs derivative {fd}", v.kind.tag());
        }
    }
    let (erc20, bnt, fee, amt) = (10936591981278719837125.0f64, 8792249012668956788248921.0f64, 1000.0, 1e18);
    let want = bnt * (1.0 - erc20 / (erc20 + amt)) * (1e6 - fee) * (1e6 - fee) / 1e12;
    let sc = presets::bancor_pair();
    let got = sc.state.quote(&"bancor-ETH".into(), &eth(), &AssetId::of("BNT"), amt).map_err(|e| e.to_string())?;
    ensure!((got - want).abs() <= BANCOR_TOL * want, "bancor {got} vs {want}");
    Ok(format!("3000 property cases, bancor rel err {:.1e}", (got - want).abs() / want))
}

fn weight(g: &MarketGraph, from: &str, to: &str) -> Option<f64> {
    let (u, v) = (g.node(&AssetId::of(from))?, g.node(&AssetId::of(to))?);
    Some(g.edge(u, v)?.weight)
}

fn bzx_weights() -> Check {
    let sc = presets::bzx_short();
    let g = build_graph(&sc.state, &sc.catalog);
    let (w1, w2) = (weight(&g, "ETH", "WBTC").ok_or("no ETH->WBTC")?, weight(&g, "WBTC", "ETH").ok_or("no WBTC->ETH")?);
    ensure!((w1 + 0.0170f64.ln()).abs() < 1e-9 && (w2 + 44.1488f64.ln()).abs() < 1e-6, "weights are not -ln(price)");
    ensure!((w1 - 4.07).abs() < WEIGHT_TOL && (w2 + 3.79).abs() < WEIGHT_TOL, "weights {w1:.3} {w2:.3}");
    ensure!(w1 + w2 > 0.0 && find_negative_cycle(&g, CYCLE_EPS).is_none(), "loop before the push");
    let short = sc.catalog.get("bzx:ETH->").map_err(|e| e.to_string())?;
    let pushed = apply_action(&sc.state, short, 1000.0).map_err(|e| e.to_string())?;
    let c = find_negative_cycle(&build_graph(&pushed, &sc.catalog), CYCLE_EPS).ok_or("no cycle after the push")?;
    ensure!(c.weight_sum < 0.0, "cycle sum {}", c.weight_sum);
    Ok(format!("weights {w1:.2} / {w2:.2}, sum {:.2} -> {:.2}", w1 + w2, c.weight_sum))
}

fn negative_cycles() -> Check {
    let mut found = 0;
    for seed in 0..200u64 {
        let mut r = common::rng(seed);
        let n = r.gen_range(1..=6);
        let edges = common::random_graph(&mut r, n);
        let g = MarketGraph::from_weights(n, &edges);
        let c = find_negative_cycle(&g, CYCLE_EPS);
        ensure!(c.is_some() == common::has_negative_simple_cycle(n, &edges), "existence differs on graph {seed}");
        if let Some(c) = c {
            ensure!(c.price_product(&g) > 1.0, "price product {} on graph {seed}", c.price_product(&g));
            found += 1;
        }
    }
    Ok(format!("200 graphs agree, {found} with cycles"))
}

fn pruning_counts() -> Check {
    let c = Catalog::bundled_96();
    let (paths, stats) = enumerate_pruned(&c, &eth(), &EnumConfig::default()).map_err(|e| e.to_string())?;
    let before: Vec<u128> = stats.rows.iter().map(|r| r.before).collect();
    ensure!(before == [9_120, 857_280, 79_727_040, 7_334_887_680], "before {before:?}");
    // oracle equivalence on small catalogs
    for seed in 0..100 {
        let (_, small) = common::random_catalog(&mut common::rng(seed), 8);
        let (got, _) = enumerate_pruned(&small, &eth(), &EnumConfig::default()).map_err(|e| e.to_string())?;
        let got: std::collections::BTreeSet<_> = got.into_iter().collect();
        ensure!(got == brute_force(&small, &eth(), 5), "pruning differs from brute force on catalog {seed}");
    }
    let after: Vec<u64> = stats.rows.iter().map(|r| r.after).collect();
    let dev = deviation_report(&stats, &BUNDLED_AFTER_TARGET);
    ensure!(dev.is_empty(), "after {after:?}, deviations: {}", dev.join("; "));
    Ok(format!("after {after:?}, {} paths, no deviation", paths.len()))
}

fn optimizer() -> Check {
    let cfg = OptimizerConfig::default();
    let mut solved = 0;
    for seed in 0..50u64 {
        let inst = common::random_loop(&mut common::rng(1000 + seed));
        let acts = inst.catalog.resolve(&inst.path).map_err(|e| e.to_string())?;
        let (_, grid) = common::grid_max(|x| common::chained_oracle(&inst.hops, x), inst.cap, 1_000_000);
        match optimize_revenue(&acts, &inst.state, &eth(), &cfg) {
            Some(res) => {
                ensure!(res.revenue >= (1.0 - OPT_REL) * grid, "instance {seed}: {} < grid {grid}", res.revenue);
                for w in res.bounds_history.windows(2) {
                    ensure!(w[1].0 >= w[0].0 && w[1].1 <= w[0].1, "instance {seed}: intervals do not nest");
                }
                solved += 1;
            }
            None => ensure!(grid < cfg.min_target, "instance {seed}: missed grid value {grid}"),
        }
    }
    let (sc, path) = presets::worked_path();
    let acts = sc.catalog.resolve(&path).map_err(|e| e.to_string())?;
    let r = optimize_revenue(&acts, &sc.state, &sc.base, &cfg).ok_or("worked path unprofitable")?;
    ensure!((r.revenue - WORKED_REVENUE).abs() <= WORKED_TOL, "worked path revenue {}", r.revenue);
    Ok(format!("{solved}/50 profitable instances at grid optimum, worked path {:.3}", r.revenue))
}

fn greedy_vs_optimal() -> Check {
    let sc = presets::block_9819643_style();
    let (paths, _) = enumerate_pruned(&sc.catalog, &sc.base, &EnumConfig::default()).map_err(|e| e.to_string())?;
    let best = rank_paths(&paths, &sc.state, &sc.catalog, &sc.base, ParamPolicy::Chained).map_err(|e| e.to_string())?;
    let cfg = ArbConfig::default();
    let out = run_arb(&sc.state, &sc.catalog, &sc.base, &cfg).map_err(|e| e.to_string())?;
    ensure!(!out.strategies.is_empty(), "arb committed nothing");
    ensure!(out.strategies.iter().all(|s| s.path != best.path), "arb committed the ranked path");
    ensure!(out.total_revenue < best.revenue, "arb {} >= ranked {}", out.total_revenue, best.revenue);
    let after =
        rank_paths(std::slice::from_ref(&best.path), &out.final_state, &sc.catalog, &sc.base, ParamPolicy::Chained);
    let left = after.map_or(0.0, |s| s.revenue);
    ensure!(left < cfg.min_revenue, "ranked path still earns {left}");
    Ok(format!("ranked {:.4}, arb {:.4}, ranked path afterwards {:.4}", best.revenue, out.total_revenue, left))
}

fn state_reduction() -> Check {
    let sc = presets::block_9819643_style();
    let s = BlockSeries::new(presets::block_series(&sc.state, 100, 30, 7)).map_err(|e| e.to_string())?;
    let cfg = ReplayConfig::default();
    let rep = replay(&s, &sc.catalog, &sc.base, &cfg).map_err(|e| e.to_string())?;
    let (paths, _) = enumerate_pruned(&sc.catalog, &sc.base, &cfg.enumeration).map_err(|e| e.to_string())?;
    let first = s.states()[0].block_height;
    let mut want = paths.len();
    for p in &paths {
        let acts = sc.catalog.resolve(p).map_err(|e| e.to_string())?;
        for h in first + 1..=first + 100 {
            want += usize::from(state_changed(&acts, &s, h).map_err(|e| e.to_string())?);
        }
    }
    ensure!(rep.discovery_invocations == want, "invocations {} vs changed pairs {want}", rep.discovery_invocations);
    for w in rep.blocks.windows(2) {
        if w[1].invocations == 0 {
            ensure!(w[1].cumulative_gross == w[0].cumulative_gross, "revenue moved at static block {}", w[1].block);
        }
    }
    Ok(format!(
        "{want} changed (path, block) pairs, {:.4} cumulative gross",
        rep.blocks.last().map_or(0.0, |b| b.cumulative_gross)
    ))
}

fn mdp() -> Check {
    let spec = MdpSpec::new(0.10, 0.0572);
    let t = build_mdp(&spec).map_err(|e| e.to_string())?;
    for cs in &t.choices {
        for c in cs {
            let total: f64 = c.next.iter().map(|(_, p)| p).sum();
            ensure!((total - 1.0).abs() <= ROW_TOL, "row sums to {total}");
        }
    }
    let v = mev_threshold(&spec, MDP_MARGIN, MDP_EPS).map_err(|e| e.to_string())?;
    ensure!((v - MEV_ANCHOR).abs() <= MDP_MARGIN, "threshold {v}");
    let alphas: Vec<f64> = (1..=9).map(|i| 0.05 * i as f64).collect();
    let rows = sweep(&spec, &alphas, MDP_MARGIN, MDP_EPS).map_err(|e| e.to_string())?;
    for w in rows.windows(2) {
        ensure!(w[1].mev_v <= w[0].mev_v, "threshold rises from alpha {} to {}", w[0].alpha, w[1].alpha);
    }
    let vs: Vec<String> = rows.iter().map(|r| format!("{:.3}", r.mev_v)).collect();
    Ok(format!("threshold {v:.4} block rewards, sweep {}", vs.join(" ")))
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let criteria: [Criterion; 8] = [
        (1, "AMM math", amm_math, Some(secs(5))),
        (2, "bZx-style graph weights", bzx_weights, Some(secs(1))),
        (3, "negative cycle detection", negative_cycles, Some(secs(10))),
        (4, "path pruning counts", pruning_counts, Some(secs(300))),
        (5, "revenue optimizer", optimizer, Some(secs(30))),
        (6, "greedy vs optimal ordering", greedy_vs_optimal, None),
        (7, "state reduction", state_reduction, None),
        (8, "fork MDP threshold", mdp, Some(secs(120))),
    ];
    let mut failed = 0;
    for (n, name, run, limit) in criteria {
        let t = Instant::now();
        let res = run();
        let dt = t.elapsed();
        let res = match (res, limit) {
            (Ok(_), Some(l)) if dt > l => Err(format!("took {:.2} s, limit {} s", dt.as_secs_f64(), l.as_secs())),
            (r, _) => r,
        };
        let (tag, detail) = match res {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n} {name}: {tag} ({:.2} s) {detail}", dt.as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
