use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use regnet::ordering::{build_orderings, write_orderings, OrderingConfig, OrderingMode};
use regnet::pipeline::{self, Preset, RunConfig};
use regnet::screen::{
    build_influence_matrix, cutoff_scan, default_cutoff_grid, write_scan_tsv, Adjust,
    ExpressionDataset, TestKind,
};
use regnet::{Error, Result};

#[derive(Parser)]
#[command(name = "regnet", version, about = "Regulatory network reconstruction from knockout screens")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic benchmark (network, gold edges, influence,
    /// steady-state data, and a perturbation screen for the small presets).
    Simulate {
        #[arg(long, value_enum)]
        preset: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Sweep p-value cutoffs and report edge and component counts.
    Scan {
        /// Perturbation-screen expression TSV.
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated cutoffs; default is a 40-point log grid.
        #[arg(long)]
        grid: Option<String>,
        /// Benjamini-Hochberg adjust p-values per perturbation row.
        #[arg(long)]
        adjust: bool,
        #[arg(long, default_value = "scan.tsv")]
        out: PathBuf,
    },
    /// Estimate the influence matrix at a fixed cutoff.
    Influence {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        cutoff: f64,
        #[arg(long)]
        adjust: bool,
        #[arg(long, default_value = "influence.tsv")]
        out: PathBuf,
    },
    /// Build the causal-ordering universe for an influence edge list.
    Orderings {
        /// Influence edge list (`source<TAB>target`).
        #[arg(long)]
        influence: PathBuf,
        /// Gene universe, one label per line; without it, only genes that
        /// appear in the edge list are ordered.
        #[arg(long)]
        genes: Option<PathBuf>,
        /// Force mode instead of choosing by SCC size.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<OrderingMode>,
        /// MC-DFS permutation budget.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "orderings.txt")]
        out: PathBuf,
    },
    /// Full pipeline: influence, orderings, penalized estimation, consensus,
    /// and optional gold-standard evaluation. Writes a manifest.
    Run {
        /// JSON config mirroring the full run configuration; flags override.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        steady: Option<PathBuf>,
        #[arg(long)]
        screen: Option<PathBuf>,
        /// Precomputed influence edge list (skips t-tests).
        #[arg(long)]
        influence: Option<PathBuf>,
        /// Precomputed orderings file (skips ordering construction).
        #[arg(long)]
        orderings_file: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// TF label file; restricts sources and enables two-layer mode.
        #[arg(long)]
        tfs: Option<PathBuf>,
        #[arg(long)]
        cutoff: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (0 = all cores).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare an estimated edge list against a gold standard.
    Evaluate {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Null-model trials for the significance test.
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// TF label file restricting null-model edge sources.
        #[arg(long)]
        tfs: Option<PathBuf>,
        /// Report JSON destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> std::result::Result<OrderingMode, String> {
    match s {
        "auto" => Ok(OrderingMode::Auto),
        "exhaustive" => Ok(OrderingMode::Exhaustive),
        "mc-dfs" | "mcdfs" => Ok(OrderingMode::McDfs),
        other => Err(format!(
            "unknown mode `{}` (expected auto, exhaustive, or mc-dfs)",
            other
        )),
    }
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .map(|tok| {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad cutoff `{}`", tok)))?;
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::ValueOutOfRange(v, "(0, 1)"));
            }
            Ok(v)
        })
        .collect()
}

fn read_screen(path: &std::path::Path) -> Result<ExpressionDataset> {
    if !path.exists() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: "cannot read expression dataset".into(),
        });
    }
    ExpressionDataset::read_tsv(path)
}

fn adjust_of(flag: bool) -> Adjust {
    if flag {
        Adjust::BenjaminiHochberg
    } else {
        Adjust::None
    }
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Simulate { preset, seed, out } => {
            let manifest = pipeline::simulate(preset, seed, &out)?;
            println!(
                "simulated {} (p = {}, {} edges{}) under {}",
                manifest.preset,
                manifest.p,
                manifest.edge_count,
                if manifest.cyclic { ", cyclic" } else { "" },
                out.display()
            );
        }
        Cmd::Scan {
            data,
            grid,
            adjust,
            out,
        } => {
            let dataset = read_screen(&data)?;
            let grid = match grid {
                Some(spec) => parse_grid(&spec)?,
                None => default_cutoff_grid(),
            };
            let rows = cutoff_scan(&dataset, &grid, adjust_of(adjust), TestKind::Welch)?;
            write_scan_tsv(&rows, &out)?;
            println!("scanned {} cutoffs -> {}", rows.len(), out.display());
        }
        Cmd::Influence {
            data,
            cutoff,
            adjust,
            out,
        } => {
            if !(cutoff > 0.0 && cutoff < 1.0) {
                return Err(Error::ValueOutOfRange(cutoff, "(0, 1)"));
            }
            let dataset = read_screen(&data)?;
            let matrix =
                build_influence_matrix(&dataset, cutoff, adjust_of(adjust), TestKind::Welch)?;
            matrix.write_edge_list(&out)?;
            println!(
                "influence matrix: {} edges at cutoff {} -> {}",
                matrix.edge_count(),
                cutoff,
                out.display()
            );
        }
        Cmd::Orderings {
            influence,
            genes,
            mode,
            m,
            seed,
            out,
        } => {
            if !influence.exists() {
                return Err(Error::Parse {
                    path: influence,
                    line: 0,
                    msg: "cannot read influence edge list".into(),
                });
            }
            let graph = match genes {
                Some(path) => {
                    let labels: Vec<String> = std::fs::read_to_string(&path)
                        .map_err(|_| Error::Parse {
                            path,
                            line: 0,
                            msg: "cannot read gene universe".into(),
                        })?
                        .lines()
                        .map(str::trim)
                        .filter(|l| !l.is_empty())
                        .map(str::to_string)
                        .collect();
                    regnet::screen::InfluenceMatrix::read_edge_list(&influence, &labels, None)?
                        .influence_graph()
                }
                None => regnet::graph::DirectedGraph::read_edge_list(&influence)?,
            };
            let config = OrderingConfig {
                mode: mode.unwrap_or(OrderingMode::Auto),
                m: m.unwrap_or_else(|| pipeline::default_m(graph.node_count())),
                seed,
                ..OrderingConfig::default()
            };
            let universe = build_orderings(&graph, &config)?;
            write_orderings(&universe, &graph, &config, &out)?;
            println!(
                "{} orderings ({}) -> {}",
                universe.len(),
                if universe.exhaustive {
                    "exhaustive"
                } else {
                    "sampled"
                },
                out.display()
            );
        }
        Cmd::Run {
            config,
            steady,
            screen,
            influence,
            orderings_file,
            gold,
            tfs,
            cutoff,
            q,
            tau,
            m,
            seed,
            workers,
            out,
        } => {
            let mut cfg = match config {
                Some(path) => RunConfig::load(&path)?,
                None => RunConfig::default(),
            };
            // CLI flags override config-file values.
            cfg.steady = steady.or(cfg.steady);
            cfg.screen = screen.or(cfg.screen);
            cfg.influence = influence.or(cfg.influence);
            cfg.orderings_file = orderings_file.or(cfg.orderings_file);
            cfg.gold = gold.or(cfg.gold);
            cfg.tfs = tfs.or(cfg.tfs);
            cfg.cutoff = cutoff.unwrap_or(cfg.cutoff);
            cfg.q = q.unwrap_or(cfg.q);
            cfg.tau = tau.unwrap_or(cfg.tau);
            cfg.m = m.or(cfg.m);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.workers = workers.unwrap_or(cfg.workers);
            cfg.out = out.unwrap_or(cfg.out);
            let manifest = pipeline::run(&cfg)?;
            println!(
                "{} orderings ({} selected), {} consensus edges -> {}",
                manifest.ordering_count,
                manifest.selected_count,
                manifest.edge_count,
                cfg.out.display()
            );
            if let (Some(f1), Some(p)) = (manifest.f1, manifest.p_value) {
                println!("evaluation: F1 = {:.4}, p = {:.4}", f1, p);
            }
        }
        Cmd::Evaluate {
            estimate,
            gold,
            trials,
            seed,
            tfs,
            out,
        } => {
            for path in [&estimate, &gold] {
                if !path.exists() {
                    return Err(Error::Parse {
                        path: path.clone(),
                        line: 0,
                        msg: "cannot read edge list".into(),
                    });
                }
            }
            let report =
                pipeline::evaluate_files(&estimate, &gold, trials, seed, tfs.as_deref())?;
            let json = serde_json::to_string_pretty(&report)?;
            match out {
                Some(path) => std::fs::write(path, json)?,
                None => println!("{}", json),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
