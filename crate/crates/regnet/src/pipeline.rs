//! End-to-end orchestration: presets, run configuration, the three-step
//! pipeline, and reproducible JSON manifests.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::consensus::{
    build_consensus, select_top_orderings, threshold_edges, write_consensus_tsv, write_edges_tsv,
};
use crate::error::{Error, Result};
use crate::estimator::{estimate_for_orderings, estimate_two_layer, LassoConfig};
use crate::eval::{er_significance, NullMode};
use crate::graph::DirectedGraph;
use crate::ordering::{
    build_orderings, read_orderings, write_orderings, CausalOrdering, OrderingConfig,
    OrderingMode, OrderingUniverse,
};
use crate::screen::{
    build_influence_matrix, Adjust, ExpressionDataset, InfluenceMatrix, TestKind,
};
use crate::synth::{
    assign_weights, random_cyclic, random_dag, sample_sem, simulate_perturbation_screen,
    true_influence, SemConfig, WeightSpec, WeightedNetwork,
};

/// Synthetic benchmark presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// p = 20 DAG, ~30 edges, 3 hubs, fixed weight 0.8, n = 50.
    Small20,
    /// p = 100 DAG, 198 edges, fixed weight 0.8, n = 100.
    Dag100,
    /// p = 1000 cyclic graph, 1984 edges, fixed weight 0.8, n = 500.
    Cyclic1000,
}

pub struct PresetParams {
    pub p: usize,
    pub edges: usize,
    pub hubs: usize,
    pub cyclic: bool,
    pub weight: f64,
    pub n: usize,
    /// Emit a perturbation screen (skipped at p = 1000 scale).
    pub emit_screen: bool,
}

impl Preset {
    pub fn params(self) -> PresetParams {
        match self {
            Preset::Small20 => PresetParams {
                p: 20,
                edges: 30,
                hubs: 3,
                cyclic: false,
                weight: 0.8,
                n: 50,
                emit_screen: true,
            },
            Preset::Dag100 => PresetParams {
                p: 100,
                edges: 198,
                hubs: 5,
                cyclic: false,
                weight: 0.8,
                n: 100,
                emit_screen: true,
            },
            Preset::Cyclic1000 => PresetParams {
                p: 1000,
                edges: 1984,
                hubs: 0,
                cyclic: true,
                weight: 0.8,
                n: 500,
                emit_screen: false,
            },
        }
    }

    /// The preset's ground-truth network for a given seed.
    pub fn network(self, seed: u64) -> Result<WeightedNetwork> {
        let prm = self.params();
        let skeleton = if prm.cyclic {
            random_cyclic(prm.p, prm.edges, seed)?
        } else {
            random_dag(prm.p, prm.edges, prm.hubs, seed)?
        };
        assign_weights(&skeleton, WeightSpec::Fixed(prm.weight), seed)
    }
}

/// Default MC-DFS budget: 1000 permutations up to p = 1000, 10 000 above.
pub fn default_m(p: usize) -> usize {
    if p > 1000 {
        10_000
    } else {
        1000
    }
}

fn open_context(path: &Path, what: &str) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: format!("cannot read {}", what),
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(h.finalize().iter().map(|b| format!("{:02x}", b)).collect())
}

fn sha256_str(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    h.finalize().iter().map(|b| format!("{:02x}", b)).collect()
}

/// Full pipeline configuration; JSON config files mirror this struct and
/// may be partial (missing fields take defaults).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Steady-state expression TSV (likelihood data). Required.
    pub steady: Option<PathBuf>,
    /// Perturbation-screen expression TSV, for influence estimation.
    pub screen: Option<PathBuf>,
    /// Precomputed influence edge list; skips the t-test step.
    pub influence: Option<PathBuf>,
    /// Precomputed orderings file; skips ordering construction.
    pub orderings_file: Option<PathBuf>,
    /// Gold-standard edge list for evaluation.
    pub gold: Option<PathBuf>,
    /// TF label file (one per line) enabling two-layer mode.
    pub tfs: Option<PathBuf>,
    pub cutoff: f64,
    pub bh_adjust: bool,
    pub mode: OrderingMode,
    /// MC-DFS budget; defaults by gene count when absent.
    pub m: Option<usize>,
    pub scc_threshold: usize,
    pub cap: usize,
    pub lasso: LassoConfig,
    pub q: f64,
    pub tau: f64,
    /// Null-model trials for the significance test.
    pub trials: usize,
    pub seed: u64,
    /// Worker threads; 0 = all cores.
    pub workers: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            steady: None,
            screen: None,
            influence: None,
            orderings_file: None,
            gold: None,
            tfs: None,
            cutoff: 0.01,
            bh_adjust: false,
            mode: OrderingMode::Auto,
            m: None,
            scc_threshold: 10,
            cap: 10_000,
            lasso: LassoConfig::default(),
            q: 0.1,
            tau: 0.25,
            trials: 10_000,
            seed: 0,
            workers: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|_| open_context(path, "config file"))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::Config(format!("q = {} outside (0, 1]", self.q)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau = {} outside (0, 1]", self.tau)));
        }
        self.lasso.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
}

/// Run provenance: config hash, seeds, timings, counts, score summary,
/// and digests of every emitted file.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub timings: Vec<StageTiming>,
    pub ordering_count: usize,
    pub exhaustive: bool,
    pub selected_count: usize,
    pub score_min: f64,
    pub score_median: f64,
    pub score_cutoff: f64,
    pub edge_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    pub outputs: Vec<OutputDigest>,
}

struct Timer {
    timings: Vec<StageTiming>,
    last: Instant,
}

impl Timer {
    fn new() -> Self {
        Timer {
            timings: Vec::new(),
            last: Instant::now(),
        }
    }

    fn mark(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: now.duration_since(self.last).as_secs_f64(),
        });
        self.last = now;
    }
}

fn read_label_file(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|_| open_context(path, "label file"))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn read_edge_file(path: &Path, labels: &[String]) -> Result<Vec<(usize, usize)>> {
    let index: HashMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let g = DirectedGraph::read_edge_list(path)?;
    g.edges()
        .map(|(u, v)| {
            let s = index
                .get(g.label(u))
                .ok_or_else(|| Error::LabelMismatch(g.label(u).to_string()))?;
            let t = index
                .get(g.label(v))
                .ok_or_else(|| Error::LabelMismatch(g.label(v).to_string()))?;
            Ok((*s, *t))
        })
        .collect()
}

/// Executes influence -> orderings -> estimation -> consensus (-> optional
/// evaluation), writing all artifacts plus `manifest.json` under
/// `config.out`. Deterministic given the config, including worker count.
pub fn run(config: &RunConfig) -> Result<RunManifest> {
    config.validate()?;
    if config.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        return pool.install(|| run_inner(config));
    }
    run_inner(config)
}

fn run_inner(config: &RunConfig) -> Result<RunManifest> {
    let mut timer = Timer::new();
    std::fs::create_dir_all(&config.out)?;
    let steady_path = config
        .steady
        .as_ref()
        .ok_or_else(|| Error::Config("steady-state dataset is required".into()))?;
    if !steady_path.exists() {
        return Err(open_context(steady_path, "steady-state dataset"));
    }
    let steady = ExpressionDataset::read_tsv(steady_path)?;
    let p = steady.gene_count();
    let labels = steady.gene_labels.clone();

    // TF set (two-layer) when given.
    let tf_ids: Option<Vec<usize>> = match &config.tfs {
        None => None,
        Some(path) => {
            let names = read_label_file(path)?;
            let index: HashMap<&str, usize> = labels
                .iter()
                .enumerate()
                .map(|(i, l)| (l.as_str(), i))
                .collect();
            let mut ids = names
                .iter()
                .map(|n| {
                    index
                        .get(n.as_str())
                        .copied()
                        .ok_or_else(|| Error::LabelMismatch(n.clone()))
                })
                .collect::<Result<Vec<usize>>>()?;
            ids.sort_unstable();
            ids.dedup();
            Some(ids)
        }
    };
    timer.mark("load");

    // Step 1: influence matrix.
    let influence: InfluenceMatrix = if let Some(path) = &config.influence {
        if !path.exists() {
            return Err(open_context(path, "influence edge list"));
        }
        InfluenceMatrix::read_edge_list(path, &labels, tf_ids.clone())?
    } else if let Some(path) = &config.screen {
        if !path.exists() {
            return Err(open_context(path, "perturbation screen"));
        }
        let screen_data = ExpressionDataset::read_tsv(path)?;
        if screen_data.gene_labels != labels {
            return Err(Error::GeneSetMismatch(screen_data.gene_count(), p));
        }
        let adjust = if config.bh_adjust {
            Adjust::BenjaminiHochberg
        } else {
            Adjust::None
        };
        build_influence_matrix(&screen_data, config.cutoff, adjust, TestKind::Welch)?
    } else {
        return Err(Error::Config(
            "either an influence edge list or a perturbation screen is required".into(),
        ));
    };
    influence.write_edge_list(&config.out.join("influence.tsv"))?;
    timer.mark("influence");

    // Step 2: ordering universe over the full graph, or the TF subgraph in
    // two-layer mode.
    let two_layer = tf_ids
        .as_ref()
        .map(|ids| ids.len() < p)
        .unwrap_or(false);
    let ordering_graph = if two_layer {
        influence.tf_graph()
    } else {
        influence.influence_graph()
    };
    let ord_cfg = OrderingConfig {
        mode: config.mode,
        m: config.m.unwrap_or_else(|| default_m(p)),
        seed: config.seed,
        scc_threshold: config.scc_threshold,
        cap: config.cap,
    };
    let universe: OrderingUniverse = if let Some(path) = &config.orderings_file {
        if !path.exists() {
            return Err(open_context(path, "orderings file"));
        }
        read_orderings(path, &ordering_graph)?
    } else {
        build_orderings(&ordering_graph, &ord_cfg)?
    };
    if universe.is_empty() {
        return Err(Error::EmptyInput("ordering universe"));
    }
    write_orderings(
        &universe,
        &ordering_graph,
        &ord_cfg,
        &config.out.join("orderings.txt"),
    )?;
    timer.mark("orderings");

    // Step 3: per-ordering estimation.
    let estimates = if two_layer {
        let ids = tf_ids.as_ref().expect("two-layer implies TF ids");
        // Ordering-graph node i is the i-th perturbed gene.
        let mapped: Vec<CausalOrdering> = universe
            .orderings
            .iter()
            .map(|o| CausalOrdering {
                sequence: o.sequence.iter().map(|&i| influence.perturbed[i]).collect(),
                source: o.source,
            })
            .collect();
        estimate_two_layer(&steady, ids, &mapped, &influence, &config.lasso)?
    } else {
        estimate_for_orderings(&steady, &universe.orderings, &influence, &config.lasso)?
    };
    timer.mark("estimation");

    // Consensus.
    let picked = select_top_orderings(&estimates, config.q)?;
    let members: Vec<&crate::estimator::DagEstimate> =
        picked.iter().map(|&i| &estimates[i]).collect();
    let net = build_consensus(&members, &labels)?;
    let edges = threshold_edges(&net, config.tau)?;
    write_consensus_tsv(&net, &config.out.join("consensus.tsv"))?;
    write_edges_tsv(&net, &edges, &config.out.join("edges.tsv"))?;
    timer.mark("consensus");

    let mut scores: Vec<f64> = estimates.iter().map(|e| e.score).collect();
    scores.sort_by(f64::total_cmp);
    let score_cutoff = picked
        .iter()
        .map(|&i| estimates[i].score)
        .fold(f64::NEG_INFINITY, f64::max);

    // Optional evaluation.
    let (mut f1, mut p_value) = (None, None);
    if let Some(gold_path) = &config.gold {
        if !gold_path.exists() {
            return Err(open_context(gold_path, "gold standard"));
        }
        let gold = read_edge_file(gold_path, &labels)?;
        let mode = if two_layer {
            NullMode::TwoLayer {
                sources: tf_ids.clone().expect("two-layer implies TF ids"),
            }
        } else {
            NullMode::Full
        };
        let report = er_significance(&edges, &gold, p, config.trials, config.seed, &mode)?;
        f1 = Some(report.f1);
        p_value = report.p_value;
        let json = serde_json::to_string_pretty(&report)?;
        std::fs::write(config.out.join("evaluation.json"), json)?;
        timer.mark("evaluation");
    }

    let mut outputs = Vec::new();
    for name in ["influence.tsv", "orderings.txt", "consensus.tsv", "edges.tsv"] {
        let path = config.out.join(name);
        outputs.push(OutputDigest {
            path: name.to_string(),
            sha256: sha256_file(&path)?,
        });
    }
    if config.gold.is_some() {
        outputs.push(OutputDigest {
            path: "evaluation.json".to_string(),
            sha256: sha256_file(&config.out.join("evaluation.json"))?,
        });
    }
    let manifest = RunManifest {
        config_hash: sha256_str(&serde_json::to_string(config)?),
        seed: config.seed,
        timings: timer.timings,
        ordering_count: universe.len(),
        exhaustive: universe.exhaustive,
        selected_count: picked.len(),
        score_min: scores[0],
        score_median: scores[scores.len() / 2],
        score_cutoff,
        edge_count: edges.len(),
        f1,
        p_value,
        outputs,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(config.out.join("manifest.json"), json)?;
    Ok(manifest)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SimulateManifest {
    pub preset: String,
    pub seed: u64,
    pub p: usize,
    pub edge_count: usize,
    pub cyclic: bool,
    pub n: usize,
    pub outputs: Vec<OutputDigest>,
}

/// Generates a preset benchmark: ground-truth network, gold edge list,
/// exact influence edge list, steady-state data, and (for the smaller
/// presets) a replicated perturbation screen.
pub fn simulate(preset: Preset, seed: u64, out_dir: &Path) -> Result<SimulateManifest> {
    std::fs::create_dir_all(out_dir)?;
    let prm = preset.params();
    let net = preset.network(seed)?;
    let steady = sample_sem(&net, prm.n, &SemConfig::default(), seed)?;
    let influence = true_influence(&net);

    net.write_tsv(&out_dir.join("network.tsv"))?;
    net.skeleton().write_edge_list(&out_dir.join("gold.tsv"))?;
    influence.write_edge_list(&out_dir.join("influence.tsv"))?;
    steady.write_tsv(&out_dir.join("steady.tsv"))?;
    let mut names = vec!["network.tsv", "gold.tsv", "influence.tsv", "steady.tsv"];
    if prm.emit_screen {
        // Nonzero intercepts so knockouts shift descendant means.
        let cfg = SemConfig {
            noise_sd: 1.0,
            intercepts: Some(vec![1.0; prm.p]),
        };
        let targets: Vec<usize> = (0..prm.p).collect();
        let screen = simulate_perturbation_screen(&net, &targets, 5, 10, &cfg, seed)?;
        screen.write_tsv(&out_dir.join("screen.tsv"))?;
        names.push("screen.tsv");
    }
    let mut outputs = Vec::new();
    for name in &names {
        outputs.push(OutputDigest {
            path: name.to_string(),
            sha256: sha256_file(&out_dir.join(name))?,
        });
    }
    let manifest = SimulateManifest {
        preset: format!("{:?}", preset).to_lowercase(),
        seed,
        p: prm.p,
        edge_count: net.edge_count(),
        cyclic: prm.cyclic,
        n: prm.n,
        outputs,
    };
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// File-level wrapper for the evaluation verb: edge lists in, report out.
pub fn evaluate_files(
    estimate_path: &Path,
    gold_path: &Path,
    trials: usize,
    seed: u64,
    tfs: Option<&Path>,
) -> Result<crate::eval::EvalReport> {
    let est_graph = DirectedGraph::read_edge_list(estimate_path)?;
    let gold_graph = DirectedGraph::read_edge_list(gold_path)?;
    // Union label space, estimate labels first.
    let mut labels: Vec<String> = est_graph.labels().to_vec();
    let mut index: HashMap<String, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.clone(), i))
        .collect();
    for l in gold_graph.labels() {
        if !index.contains_key(l) {
            index.insert(l.clone(), labels.len());
            labels.push(l.clone());
        }
    }
    if let Some(path) = tfs {
        for l in read_label_file(path)? {
            if !index.contains_key(&l) {
                index.insert(l.clone(), labels.len());
                labels.push(l);
            }
        }
    }
    let map = |g: &DirectedGraph| -> Vec<(usize, usize)> {
        g.edges().map(|(u, v)| (index[g.label(u)], index[g.label(v)])).collect()
    };
    let est = map(&est_graph);
    let gold = map(&gold_graph);
    let mode = match tfs {
        None => NullMode::Full,
        Some(path) => NullMode::TwoLayer {
            sources: read_label_file(path)?
                .iter()
                .map(|l| index[l])
                .collect(),
        },
    };
    er_significance(&est, &gold, labels.len(), trials, seed, &mode)
}
