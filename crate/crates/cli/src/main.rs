//! `mevsearch`: command-line front end over `mevsearch-core`.
//!
//! Exit codes: 0 on success, 1 on a domain error, 2 on a usage error.

mod output;

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use mevsearch_core::arb::{run_arb, ArbConfig};
use mevsearch_core::mdp::{mev_threshold, sweep, MdpSpec};
use mevsearch_core::optimize::{optimize_revenue, OptimizerConfig, ParamPolicy};
use mevsearch_core::paths::{deviation_report, enumerate_pruned, EnumConfig, BUNDLED_AFTER_TARGET};
use mevsearch_core::replay::{replay, BlockSeries, CostModel, Mode, ReplayConfig};
use mevsearch_core::smt::{export_smtlib, file_name};
use mevsearch_core::{catalog, presets, snapshot, ActionId, AssetId, Catalog, WorldState};
use rayon::prelude::*;
use serde::Serialize;

use output::{csv_report, csv_text, emit, json_report, Meta};

#[derive(Parser, Debug)]
#[command(name = "mevsearch", version, about = "Strategy discovery over modeled DeFi markets")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed for randomized presets.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file (directory for `gen-snapshot --series`); stdout if absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Cmd {
    /// Greedy negative-cycle arbitrage on one snapshot.
    Arb(ArbArgs),
    /// Enumerate candidate paths with heuristic pruning.
    Paths(PathsArgs),
    /// Rank paths on one snapshot, optionally exporting SMT-LIB2.
    Search(SearchArgs),
    /// Replay a snapshot series.
    Replay(ReplayArgs),
    /// MEV threshold of the fork-decision MDP.
    Mdp(MdpArgs),
    /// Write a synthetic snapshot (or series) from a named preset.
    GenSnapshot(GenArgs),
}

#[derive(Args, Debug, Serialize)]
struct ArbArgs {
    #[arg(long)]
    snapshot: PathBuf,
    /// Catalog JSON file or preset name; default: every action of the snapshot.
    #[arg(long)]
    catalog: Option<String>,
    #[arg(long, default_value = "ETH")]
    base: String,
    #[arg(long, default_value_t = 0.1)]
    min_revenue: f64,
    #[arg(long, default_value_t = 50)]
    max_cycles: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Include wall-clock columns (output is then not reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug, Serialize)]
struct PathsArgs {
    /// Catalog JSON file or preset name.
    #[arg(long, default_value = catalog::BUNDLED_96)]
    catalog: String,
    #[arg(long, default_value = "ETH")]
    base: String,
    #[arg(long, default_value_t = 5)]
    max_len: usize,
    /// Print the per-length count table instead of the path list.
    #[arg(long)]
    stats: bool,
    /// Also write the path list here.
    #[arg(long)]
    list: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SearchArgs {
    #[arg(long)]
    snapshot: PathBuf,
    /// Path list, one space-separated action-id sequence per line; default: enumerate.
    #[arg(long)]
    paths: Option<PathBuf>,
    #[arg(long)]
    catalog: Option<String>,
    #[arg(long, default_value = "ETH")]
    base: String,
    #[arg(long, default_value_t = 0.1)]
    min_revenue: f64,
    #[arg(long, value_enum, default_value_t = Policy::Chained)]
    policy: Policy,
    /// Write one SMT-LIB2 file per path into this directory.
    #[arg(long)]
    export_smt: Option<PathBuf>,
    /// Target revenue in the exported files; default: the path's optimum, or
    /// `--min-revenue` for unprofitable paths.
    #[arg(long)]
    smt_target: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct ReplayArgs {
    /// Directory of snapshot JSON files, one per block.
    #[arg(long)]
    series: PathBuf,
    #[arg(long)]
    catalog: Option<String>,
    #[arg(long, default_value = "ETH")]
    base: String,
    #[arg(long, value_enum, default_value_t = ReplayMode::Search)]
    mode: ReplayMode,
    #[arg(long, default_value_t = 32.0)]
    gas_gwei: f64,
    #[arg(long, default_value_t = 150_000)]
    gas_per_action: u64,
    #[arg(long, default_value_t = 0.0)]
    flash_loan_fee: f64,
    #[arg(long, default_value_t = 0.1)]
    min_revenue: f64,
    #[arg(long, value_enum, default_value_t = Policy::Chained)]
    policy: Policy,
    /// Per-block summary CSV (gross, net, cumulative).
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug, Serialize)]
struct MdpArgs {
    #[arg(long, default_value_t = 0.10)]
    alpha: f64,
    /// Stale block rate.
    #[arg(long, default_value_t = 0.0572)]
    stale: f64,
    #[arg(long, default_value_t = 20)]
    cutoff: usize,
    #[arg(long, default_value_t = 0.1)]
    margin: f64,
    /// Confirmations the merchant waits for.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    omega: f64,
    /// `alpha=FROM:TO:STEP`
    #[arg(long)]
    sweep: Option<String>,
}

#[derive(Args, Debug, Serialize)]
struct GenArgs {
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(presets::NAMES))]
    preset: String,
    /// Number of blocks after the first; writes a directory.
    #[arg(long)]
    series: Option<usize>,
    /// Blocks of the series whose state changes (default: 30%).
    #[arg(long)]
    touched: Option<usize>,
    /// Also write the preset's catalog JSON here.
    #[arg(long)]
    catalog_out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Policy {
    Chained,
    Free,
}

impl From<Policy> for ParamPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Chained => ParamPolicy::Chained,
            Policy::Free => ParamPolicy::Free,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ReplayMode {
    Arb,
    Search,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    // everything that shapes the output, minus where it goes
    let meta = Meta::new(&(&cli.cmd, cli.seed))?;
    let out = cli.out.as_deref();
    match &cli.cmd {
        Cmd::Arb(a) => cmd_arb(a, &meta, out),
        Cmd::Paths(a) => cmd_paths(a, &meta, out),
        Cmd::Search(a) => cmd_search(a, &meta, out),
        Cmd::Replay(a) => cmd_replay(a, &meta, out),
        Cmd::Mdp(a) => cmd_mdp(a, &meta, out),
        Cmd::GenSnapshot(a) => cmd_gen(a, cli.seed, out),
    }
}

fn load_catalog(arg: Option<&str>, state: Option<&WorldState>) -> Result<Catalog> {
    match (arg, state) {
        (Some(name), _) if Catalog::preset(name).is_some() => Ok(Catalog::preset(name).expect("checked")),
        (Some(file), _) => {
            let text = fs::read_to_string(file).with_context(|| format!("reading catalog {file}"))?;
            Catalog::from_json(&text).with_context(|| format!("parsing catalog {file}"))
        }
        (None, Some(s)) => Ok(Catalog::from_state(s)),
        (None, None) => bail!("no catalog given"),
    }
}

fn join_params(p: &[f64]) -> String {
    p.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

#[derive(Serialize)]
struct ArbRow {
    cycle: usize,
    path: String,
    params: String,
    revenue: f64,
}

fn cmd_arb(a: &ArbArgs, meta: &Meta, out: Option<&Path>) -> Result<()> {
    let state = snapshot::load(&a.snapshot)?;
    let cat = load_catalog(a.catalog.as_deref(), Some(&state))?;
    let cfg = ArbConfig { min_revenue: a.min_revenue, max_cycles: a.max_cycles, ..Default::default() };
    let mut res = run_arb(&state, &cat, &AssetId::of(&a.base), &cfg)?;
    if let Some(e) = res.cap_error() {
        warn!("{e}");
    }
    if !a.timing {
        res.times = Default::default();
    }
    let text = match a.format {
        Format::Json => json_report(meta, &res)?,
        Format::Csv => {
            let rows = res.strategies.iter().enumerate().map(|(i, s)| ArbRow {
                cycle: i + 1,
                path: s.path.join(" "),
                params: join_params(&s.params),
                revenue: s.revenue,
            });
            let mut notes = vec![
                ("block".to_string(), state.block_height.to_string()),
                ("cycles_examined".to_string(), res.cycles_examined.to_string()),
                ("termination".to_string(), serde_json::to_string(&res.termination)?.trim_matches('"').to_string()),
                ("total_revenue".to_string(), res.total_revenue.to_string()),
            ];
            if a.timing {
                let t = &res.times;
                notes.push(("ms_graph_cycle_search".into(), format!("{} {} {}", t.graph_ms, t.cycle_ms, t.search_ms)));
            }
            csv_report(meta, &notes, &csv_text(rows)?)
        }
    };
    emit(out, &text)
}

fn path_list(paths: &[Vec<ActionId>]) -> String {
    let mut s = String::new();
    for p in paths {
        s.push_str(&p.join(" "));
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct StatsRow {
    length: String,
    before: u128,
    after: u64,
}

fn cmd_paths(a: &PathsArgs, meta: &Meta, out: Option<&Path>) -> Result<()> {
    let cat = load_catalog(Some(&a.catalog), None)?;
    let cfg = EnumConfig { max_len: a.max_len, ..Default::default() };
    let (paths, stats) = enumerate_pruned(&cat, &AssetId::of(&a.base), &cfg)?;
    info!("{} paths after {} expansions", paths.len(), stats.expansions);
    let list = format!("{}{}", meta.comment_header(), path_list(&paths));
    if let Some(p) = &a.list {
        emit(Some(p), &list)?;
    }
    if !a.stats {
        return emit(out, &list);
    }
    let mut rows: Vec<StatsRow> =
        stats.rows.iter().map(|r| StatsRow { length: r.len.to_string(), before: r.before, after: r.after }).collect();
    rows.push(StatsRow {
        length: "total".into(),
        before: stats.rows.iter().map(|r| r.before).sum(),
        after: stats.total_after(),
    });
    let mut notes = vec![("catalog_actions".to_string(), cat.len().to_string())];
    if a.catalog == catalog::BUNDLED_96 && a.max_len == 5 {
        let dev = deviation_report(&stats, &BUNDLED_AFTER_TARGET);
        let verdict = if dev.is_empty() { "none".to_string() } else { dev.join("; ") };
        notes.push(("deviation".into(), verdict));
    }
    emit(out, &csv_report(meta, &notes, &csv_text(rows)?))
}

fn read_paths(file: &Path) -> Result<Vec<Vec<ActionId>>> {
    let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect())
}

#[derive(Serialize)]
struct SearchRow {
    rank: usize,
    path: String,
    revenue: f64,
    params: String,
    smt_file: String,
}

fn cmd_search(a: &SearchArgs, meta: &Meta, out: Option<&Path>) -> Result<()> {
    let state = snapshot::load(&a.snapshot)?;
    let cat = load_catalog(a.catalog.as_deref(), Some(&state))?;
    let base = AssetId::of(&a.base);
    let paths = match &a.paths {
        Some(f) => read_paths(f)?,
        None => enumerate_pruned(&cat, &base, &EnumConfig::default())?.0,
    };
    if paths.is_empty() {
        bail!("no paths to search");
    }
    let resolved = paths.iter().map(|p| cat.resolve(p)).collect::<Result<Vec<_>, _>>()?;
    let cfg = OptimizerConfig { min_target: a.min_revenue, policy: a.policy.into(), ..Default::default() };
    let results: Vec<_> = resolved.par_iter().map(|acts| optimize_revenue(acts, &state, &base, &cfg)).collect();

    let mut smt_files = vec![String::new(); paths.len()];
    if let Some(dir) = &a.export_smt {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (i, acts) in resolved.iter().enumerate() {
            let z = a.smt_target.unwrap_or_else(|| results[i].as_ref().map_or(a.min_revenue, |r| r.revenue));
            match export_smtlib(acts, &state, &base, z) {
                Ok(text) => {
                    let name = file_name(state.block_height, &paths[i]);
                    fs::write(dir.join(&name), text)?;
                    smt_files[i] = name;
                }
                Err(e) => warn!("{}: not exported: {e}", paths[i].join(" ")),
            }
        }
    }

    let mut order: Vec<usize> = (0..paths.len()).filter(|&i| results[i].is_some()).collect();
    let rev = |i: usize| results[i].as_ref().map_or(f64::NEG_INFINITY, |r| r.revenue);
    order.sort_by(|&i, &j| {
        rev(j)
            .partial_cmp(&rev(i))
            .unwrap_or(Ordering::Equal)
            .then(paths[i].len().cmp(&paths[j].len()))
            .then_with(|| paths[i].cmp(&paths[j]))
    });
    if order.is_empty() {
        bail!("no profitable path among {} candidates", paths.len());
    }
    let rows = order.iter().enumerate().map(|(rank, &i)| {
        let r = results[i].as_ref().expect("filtered");
        SearchRow {
            rank: rank + 1,
            path: paths[i].join(" "),
            revenue: r.revenue,
            params: join_params(&r.params),
            smt_file: smt_files[i].clone(),
        }
    });
    let notes = vec![
        ("block".to_string(), state.block_height.to_string()),
        ("candidates".to_string(), paths.len().to_string()),
    ];
    emit(out, &csv_report(meta, &notes, &csv_text(rows)?))
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    block: u64,
    invocations: usize,
    gross: f64,
    net: f64,
    cumulative_gross: f64,
    cumulative_net: f64,
    error: &'a str,
}

fn cmd_replay(a: &ReplayArgs, meta: &Meta, out: Option<&Path>) -> Result<()> {
    let states = snapshot::load_dir(&a.series)?;
    let series = BlockSeries::new(states)?;
    let cat = load_catalog(a.catalog.as_deref(), series.states().first())?;
    let cfg = ReplayConfig {
        mode: match a.mode {
            ReplayMode::Arb => Mode::Arb,
            ReplayMode::Search => Mode::Search,
        },
        cost: CostModel { gas_gwei: a.gas_gwei, gas_per_action: a.gas_per_action, flash_loan_fee: a.flash_loan_fee },
        min_revenue: a.min_revenue,
        policy: a.policy.into(),
        record_timing: a.timing,
        ..Default::default()
    };
    let rep = replay(&series, &cat, &AssetId::of(&a.base), &cfg)?;
    for b in &rep.blocks {
        if let Some(e) = &b.error {
            warn!("block {}: {e}", b.block);
        }
    }
    let notes = vec![
        ("blocks".to_string(), series.len().to_string()),
        ("discovery_invocations".to_string(), rep.discovery_invocations.to_string()),
        ("discovery_blocks".to_string(), rep.discovery_blocks.to_string()),
        ("validated".to_string(), format!("{}/{}", rep.validated, rep.candidates)),
        ("total_net".to_string(), rep.total_net().to_string()),
    ];
    if let Some(p) = &a.summary {
        let rows = rep.blocks.iter().map(|b| SummaryRow {
            block: b.block,
            invocations: b.invocations,
            gross: b.gross,
            net: b.net,
            cumulative_gross: b.cumulative_gross,
            cumulative_net: b.cumulative_net,
            error: b.error.as_deref().unwrap_or(""),
        });
        emit(Some(p), &csv_report(meta, &[], &csv_text(rows)?))?;
    }
    let body = if rep.rows.is_empty() {
        "block,mode,path,revenue,cost,net,ms_prune,ms_search,ms_validate\n".to_string()
    } else {
        csv_text(&rep.rows)?
    };
    emit(out, &csv_report(meta, &notes, &body))
}

/// `alpha=FROM:TO:STEP`, both ends included.
fn parse_sweep(s: &str) -> Result<Vec<f64>> {
    let spec = s.strip_prefix("alpha=").ok_or_else(|| anyhow!("sweep must look like alpha=FROM:TO:STEP"))?;
    let parts: Vec<f64> = spec.split(':').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>()?;
    let [from, to, step] = parts[..] else { bail!("sweep needs FROM:TO:STEP") };
    if step.is_nan() || step <= 0.0 || to < from {
        bail!("sweep needs FROM <= TO and STEP > 0");
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    // round away accumulated float noise so rows print as typed
    Ok((0..=n).map(|i| ((from + i as f64 * step) * 1e12).round() / 1e12).collect())
}

#[derive(Serialize)]
struct MdpRow {
    alpha: f64,
    r_s: f64,
    mev_v: f64,
}

fn cmd_mdp(a: &MdpArgs, meta: &Meta, out: Option<&Path>) -> Result<()> {
    let spec = MdpSpec { gamma: a.gamma, omega: a.omega, k: a.k, cutoff: a.cutoff, ..MdpSpec::new(a.alpha, a.stale) };
    const EPS: f64 = 1e-9;
    let rows: Vec<MdpRow> = match &a.sweep {
        Some(s) => sweep(&spec, &parse_sweep(s)?, a.margin, EPS)?
            .into_iter()
            .map(|r| MdpRow { alpha: r.alpha, r_s: r.r_s, mev_v: r.mev_v })
            .collect(),
        None => vec![MdpRow { alpha: a.alpha, r_s: a.stale, mev_v: mev_threshold(&spec, a.margin, EPS)? }],
    };
    emit(out, &csv_report(meta, &[], &csv_text(rows)?))
}

fn cmd_gen(a: &GenArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let sc = presets::by_name(&a.preset, seed).ok_or_else(|| anyhow!("unknown preset {}", a.preset))?;
    if let Some(p) = &a.catalog_out {
        emit(Some(p), &sc.catalog.to_json())?;
    }
    match a.series {
        None => emit(out, &snapshot::to_json(&sc.state)),
        Some(blocks) => {
            let dir = out.ok_or_else(|| anyhow!("--series needs --out DIR"))?;
            let touched = a.touched.unwrap_or(blocks * 3 / 10);
            if touched > blocks {
                bail!("--touched {touched} exceeds --series {blocks}");
            }
            fs::create_dir_all(dir)?;
            snapshot::save_dir(&presets::block_series(&sc.state, blocks, touched, seed), dir)?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_grid() {
        let v = parse_sweep("alpha=0.05:0.45:0.05").unwrap();
        assert_eq!(v.len(), 9);
        assert_eq!(v[0], 0.05);
        assert_eq!(v[8], 0.45);
        assert_eq!(v[2], 0.15);
        assert!(parse_sweep("beta=0:1:0.1").is_err());
        assert!(parse_sweep("alpha=0.3:0.1:0.1").is_err());
        assert!(parse_sweep("alpha=0.1:0.3").is_err());
    }

    #[test]
    fn cli_shape() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
