//! Synthetic benchmark engine: ground-truth network generators, linear
//! Gaussian SEM sampling, exact influence matrices, and calibrated noisy
//! influence perturbation.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{is_acyclic, topological_sort, DirectedGraph};
use crate::screen::{Condition, ExpressionDataset, InfluenceMatrix};
use crate::seed;

const STAGE_SEM: u64 = 0x7379_6e31; // "syn1"

/// Weighted directed network. `weight(j, i)` is the effect of gene j on
/// gene i; zero diagonal.
#[derive(Debug, Clone)]
pub struct WeightedNetwork {
    pub labels: Vec<String>,
    /// Row-major p x p, entry [j*p + i] = theta_ji.
    weights: Vec<f64>,
    pub cyclic: bool,
}

impl WeightedNetwork {
    pub fn new(labels: Vec<String>, cyclic: bool) -> Self {
        let p = labels.len();
        WeightedNetwork {
            labels,
            weights: vec![0.0; p * p],
            cyclic,
        }
    }

    pub fn with_default_labels(p: usize, cyclic: bool) -> Self {
        Self::new((1..=p).map(|i| format!("g{}", i)).collect(), cyclic)
    }

    pub fn p(&self) -> usize {
        self.labels.len()
    }

    pub fn weight(&self, j: usize, i: usize) -> f64 {
        self.weights[j * self.p() + i]
    }

    pub fn set_weight(&mut self, j: usize, i: usize, w: f64) {
        assert_ne!(j, i, "no self-loops");
        let p = self.p();
        self.weights[j * p + i] = w;
    }

    pub fn edge_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w != 0.0).count()
    }

    /// Edges (source, target, weight) in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let p = self.p();
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(move |(idx, &w)| (idx / p, idx % p, w))
    }

    pub fn skeleton(&self) -> DirectedGraph {
        let mut g = DirectedGraph::with_labels(self.labels.clone());
        for (u, v, _) in self.edges() {
            g.add_edge(u, v);
        }
        g
    }

    /// Parents of each node with edge weights, for topo-order sampling.
    fn parents(&self) -> Vec<Vec<(usize, f64)>> {
        let p = self.p();
        let mut out = vec![Vec::new(); p];
        for (j, i, w) in self.edges() {
            out[i].push((j, w));
        }
        out
    }

    /// Spectral radius of |W| by power iteration. Iterates on |W| + I so
    /// periodic structures (pure cycles) still converge; for nonnegative
    /// matrices the shift moves the Perron root by exactly 1.
    pub fn abs_spectral_radius(&self) -> f64 {
        let p = self.p();
        if p == 0 || self.edge_count() == 0 {
            return 0.0;
        }
        let mut v = vec![1.0f64; p];
        let mut radius = 0.0;
        for _ in 0..2000 {
            let mut next = v.clone();
            for (j, i, w) in self.edges() {
                next[i] += w.abs() * v[j];
            }
            let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-300 {
                return 0.0;
            }
            for x in &mut next {
                *x /= norm;
            }
            if (norm - radius).abs() < 1e-13 * norm.max(1.0) {
                return norm - 1.0;
            }
            radius = norm;
            v = next;
        }
        radius - 1.0
    }

    pub fn scale_weights(&mut self, factor: f64) {
        for w in &mut self.weights {
            *w *= factor;
        }
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "source\ttarget\tweight")?;
        for (u, v, w) in self.edges() {
            writeln!(out, "{}\t{}\t{}", self.labels[u], self.labels[v], w)?;
        }
        Ok(())
    }

    /// Reads `source<TAB>target<TAB>weight`. When `labels` is given it fixes
    /// the gene universe; otherwise labels are interned in file order.
    pub fn read_tsv(path: &Path, labels: Option<Vec<String>>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut rows: Vec<(String, String, f64)> = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            match (cols.next(), cols.next(), cols.next()) {
                (Some(s), Some(t), Some(w)) => {
                    let w: f64 = w.parse().map_err(|_| Error::Parse {
                        path: path.to_path_buf(),
                        line: lineno + 1,
                        msg: format!("invalid weight `{}`", w),
                    })?;
                    rows.push((s.to_string(), t.to_string(), w));
                }
                _ => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: lineno + 1,
                        msg: "expected `source\\ttarget\\tweight`".into(),
                    })
                }
            }
        }
        let labels = labels.unwrap_or_else(|| {
            let mut seen = Vec::new();
            let mut have: HashSet<&str> = HashSet::new();
            for (s, t, _) in &rows {
                for l in [s, t] {
                    if have.insert(l) {
                        seen.push(l.clone());
                    }
                }
            }
            seen
        });
        let index: std::collections::HashMap<&str, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let mut net = WeightedNetwork::new(labels.clone(), false);
        for (s, t, w) in &rows {
            let u = *index
                .get(s.as_str())
                .ok_or_else(|| Error::LabelMismatch(s.clone()))?;
            let v = *index
                .get(t.as_str())
                .ok_or_else(|| Error::LabelMismatch(t.clone()))?;
            net.set_weight(u, v, *w);
        }
        net.cyclic = !is_acyclic(&net.skeleton());
        Ok(net)
    }
}

/// Influence-matrix corruption spec for robustness benchmarks.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct NoiseSpec {
    /// Probability per absent off-diagonal cell of adding a false edge.
    pub fp_rate: f64,
    /// Probability per present edge of dropping it.
    pub fn_rate: f64,
    /// Proportion of present edges whose direction is flipped.
    pub reverse_prop: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec {
            fp_rate: 0.0,
            fn_rate: 0.0,
            reverse_prop: 0.0,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        for (v, name) in [
            (self.fp_rate, "[0, 1]"),
            (self.fn_rate, "[0, 1]"),
            (self.reverse_prop, "[0, 1]"),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::ValueOutOfRange(v, name));
            }
        }
        Ok(())
    }
}

/// Random DAG skeleton with `hub_count` high-out-degree nodes and at least
/// two parentless nodes when p >= 20. Weights are all 1 until assigned.
pub fn random_dag(
    p: usize,
    edge_target: usize,
    hub_count: usize,
    seed: u64,
) -> Result<WeightedNetwork> {
    if edge_target > p.saturating_mul(p.saturating_sub(1)) / 2 {
        return Err(Error::EdgeBudgetTooLarge {
            edges: edge_target,
            capacity: p * (p - 1) / 2,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(&mut rng);
    let root_slots = if p >= 20 { 2 } else { 1.min(p) };
    // Allowed pairs point forward in the hidden order and never into a root.
    let mut allowed: Vec<(usize, usize)> = Vec::new();
    for a in 0..p {
        for b in (a + 1).max(root_slots)..p {
            allowed.push((order[a], order[b]));
        }
    }
    if edge_target > allowed.len() {
        return Err(Error::InfeasibleTarget {
            target: edge_target,
            nodes: p,
            capacity: allowed.len(),
        });
    }
    let hub_count = hub_count.min(p / 2);
    // Hubs sit early in the order so they have room for many targets.
    let hubs: HashSet<usize> = (0..hub_count).map(|i| order[i]).collect();
    let mut net = WeightedNetwork::new(
        (1..=p).map(|i| format!("g{}", i)).collect(),
        false,
    );
    let mut used: HashSet<(usize, usize)> = HashSet::new();
    if hub_count > 0 && edge_target > 0 {
        // Roughly half the budget concentrates on the hubs.
        let hub_budget = edge_target / 2;
        let mut hub_pairs: Vec<(usize, usize)> = allowed
            .iter()
            .copied()
            .filter(|(u, _)| hubs.contains(u))
            .collect();
        hub_pairs.shuffle(&mut rng);
        for pair in hub_pairs.into_iter().take(hub_budget) {
            used.insert(pair);
        }
    }
    let mut rest: Vec<(usize, usize)> = allowed
        .iter()
        .copied()
        .filter(|pair| !used.contains(pair))
        .collect();
    rest.shuffle(&mut rng);
    for pair in rest {
        if used.len() >= edge_target {
            break;
        }
        used.insert(pair);
    }
    for (u, v) in used {
        net.set_weight(u, v, 1.0);
    }
    Ok(net)
}

/// Random cyclic skeleton: a planted 3-cycle plus ~p/200 extra 2-cycles,
/// filled to the edge target with forward edges in a hidden random order
/// (spilling into backward edges only when density requires).
pub fn random_cyclic(p: usize, edge_target: usize, seed: u64) -> Result<WeightedNetwork> {
    let capacity = p.saturating_mul(p.saturating_sub(1));
    if edge_target > capacity {
        return Err(Error::EdgeBudgetTooLarge {
            edges: edge_target,
            capacity,
        });
    }
    if p < 2 || edge_target < 2 {
        return Err(Error::InfeasibleTarget {
            target: edge_target,
            nodes: p,
            capacity,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(&mut rng);
    let mut net = WeightedNetwork::new(
        (1..=p).map(|i| format!("g{}", i)).collect(),
        true,
    );
    let mut used: HashSet<(usize, usize)> = HashSet::new();
    let add = |net: &mut WeightedNetwork, used: &mut HashSet<(usize, usize)>, u: usize, v: usize| {
        if used.insert((u, v)) {
            net.set_weight(u, v, 1.0);
        }
    };
    let mut next_slot;
    if p >= 3 && edge_target >= 3 {
        add(&mut net, &mut used, order[0], order[1]);
        add(&mut net, &mut used, order[1], order[2]);
        add(&mut net, &mut used, order[2], order[0]);
        next_slot = 3;
    } else {
        add(&mut net, &mut used, order[0], order[1]);
        add(&mut net, &mut used, order[1], order[0]);
        next_slot = 2;
    }
    let extra_two_cycles = (p / 200).min(edge_target.saturating_sub(used.len()) / 2);
    for _ in 0..extra_two_cycles {
        if next_slot + 1 >= p {
            break;
        }
        let (a, b) = (order[next_slot], order[next_slot + 1]);
        add(&mut net, &mut used, a, b);
        add(&mut net, &mut used, b, a);
        next_slot += 2;
    }
    if used.len() < edge_target {
        let mut forward: Vec<(usize, usize)> = Vec::new();
        for a in 0..p {
            for b in (a + 1)..p {
                let pair = (order[a], order[b]);
                if !used.contains(&pair) {
                    forward.push(pair);
                }
            }
        }
        forward.shuffle(&mut rng);
        for (u, v) in forward {
            if used.len() >= edge_target {
                break;
            }
            add(&mut net, &mut used, u, v);
        }
    }
    if used.len() < edge_target {
        let mut backward: Vec<(usize, usize)> = Vec::new();
        for a in 0..p {
            for b in (a + 1)..p {
                let pair = (order[b], order[a]);
                if !used.contains(&pair) {
                    backward.push(pair);
                }
            }
        }
        backward.shuffle(&mut rng);
        for (u, v) in backward {
            if used.len() >= edge_target {
                break;
            }
            add(&mut net, &mut used, u, v);
        }
    }
    Ok(net)
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSpec {
    /// Magnitude uniform in (lo, hi), sign uniform.
    Uniform { lo: f64, hi: f64 },
    /// Every edge gets this weight.
    Fixed(f64),
}

/// Assigns edge weights to a skeleton. Cyclic networks whose |W| has
/// spectral radius >= 1 are rescaled by 0.95 / radius so the SEM is stable.
pub fn assign_weights(
    skeleton: &WeightedNetwork,
    spec: WeightSpec,
    seed: u64,
) -> Result<WeightedNetwork> {
    if let WeightSpec::Uniform { lo, hi } = spec {
        if !(0.0 < lo && lo < hi) {
            return Err(Error::Config(format!(
                "weight range ({}, {}) must satisfy 0 < lo < hi",
                lo, hi
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = skeleton.clone();
    let edges: Vec<(usize, usize, f64)> = skeleton.edges().collect();
    for (u, v, _) in edges {
        let w = match spec {
            WeightSpec::Fixed(w) => w,
            WeightSpec::Uniform { lo, hi } => {
                let mag = rng.random_range(lo..hi);
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
        };
        net.set_weight(u, v, w);
    }
    if net.cyclic {
        let radius = net.abs_spectral_radius();
        if radius >= 1.0 {
            net.scale_weights(0.95 / radius);
        }
    }
    Ok(net)
}

/// Sampling configuration for the linear Gaussian SEM.
#[derive(Debug, Clone)]
pub struct SemConfig {
    pub noise_sd: f64,
    /// Per-gene structural intercepts; zero-mean system when absent.
    pub intercepts: Option<Vec<f64>>,
}

impl Default for SemConfig {
    fn default() -> Self {
        SemConfig {
            noise_sd: 1.0,
            intercepts: None,
        }
    }
}

/// Draws `n` wild-type steady-state samples: each row solves
/// x = W'x + b + z with z i.i.d. Normal(0, sd^2).
pub fn sample_sem(
    network: &WeightedNetwork,
    n: usize,
    config: &SemConfig,
    seed: u64,
) -> Result<ExpressionDataset> {
    sample_conditions(network, &[(Condition::WildType, n)], config, seed)
}

/// Perturbation screen: `n_0` wild-type replicates followed by `n_i`
/// knockout replicates for each gene in `targets`. A knockout clamps the
/// gene to zero (incoming weights, intercept, and noise all removed).
pub fn simulate_perturbation_screen(
    network: &WeightedNetwork,
    targets: &[usize],
    n_i: usize,
    n_0: usize,
    config: &SemConfig,
    seed: u64,
) -> Result<ExpressionDataset> {
    let mut blocks = vec![(Condition::WildType, n_0)];
    for &g in targets {
        blocks.push((Condition::Knockout(g), n_i));
    }
    sample_conditions(network, &blocks, config, seed)
}

fn sample_conditions(
    network: &WeightedNetwork,
    blocks: &[(Condition, usize)],
    config: &SemConfig,
    seed: u64,
) -> Result<ExpressionDataset> {
    let p = network.p();
    if config.noise_sd <= 0.0 {
        return Err(Error::ValueOutOfRange(config.noise_sd, "(0, inf)"));
    }
    if let Some(b) = &config.intercepts {
        if b.len() != p {
            return Err(Error::LengthMismatch {
                got: b.len(),
                expected: p,
            });
        }
    }
    if network.cyclic {
        let radius = network.abs_spectral_radius();
        if radius >= 1.0 {
            return Err(Error::SingularSystem(radius));
        }
    }
    let sampled: Vec<Vec<f64>> = blocks
        .par_iter()
        .enumerate()
        .map(|(idx, &(cond, count))| {
            let block_seed = seed::derive(seed, STAGE_SEM, idx as u64);
            sample_block(network, cond, count, config, block_seed)
        })
        .collect::<Result<_>>()?;
    let mut conditions = Vec::new();
    let mut values = Vec::new();
    for (&(cond, count), block) in blocks.iter().zip(sampled) {
        conditions.extend(std::iter::repeat_n(cond, count));
        values.extend(block);
    }
    Ok(ExpressionDataset::new(
        network.labels.clone(),
        conditions,
        values,
    ))
}

fn sample_block(
    network: &WeightedNetwork,
    cond: Condition,
    count: usize,
    config: &SemConfig,
    block_seed: u64,
) -> Result<Vec<f64>> {
    let p = network.p();
    let knocked = match cond {
        Condition::WildType => None,
        Condition::Knockout(g) => Some(g),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(block_seed);
    let normal = Normal::new(0.0, config.noise_sd).expect("sd > 0");
    let zero = vec![0.0; p];
    let intercepts = config.intercepts.as_deref().unwrap_or(&zero);
    let mut values = Vec::with_capacity(count * p);
    if !network.cyclic {
        let mut parents = network.parents();
        let order = topological_sort(&network.skeleton())?;
        if let Some(g) = knocked {
            parents[g].clear();
        }
        for _ in 0..count {
            let mut x = vec![0.0f64; p];
            for &i in &order {
                if Some(i) == knocked {
                    continue;
                }
                let mut v = intercepts[i] + normal.sample(&mut rng);
                for &(j, w) in &parents[i] {
                    v += w * x[j];
                }
                x[i] = v;
            }
            values.extend(x);
        }
    } else {
        // (I - W^T) x = b + z, with the knocked gene's row replaced by e_g.
        let mut a = DMatrix::<f64>::identity(p, p);
        for (j, i, w) in network.edges() {
            if Some(i) == knocked {
                continue;
            }
            a[(i, j)] -= w;
        }
        let lu = a.lu();
        for _ in 0..count {
            let mut rhs = DMatrix::<f64>::zeros(p, 1);
            for i in 0..p {
                rhs[(i, 0)] = if Some(i) == knocked {
                    0.0
                } else {
                    intercepts[i] + normal.sample(&mut rng)
                };
            }
            let x = lu
                .solve(&rhs)
                .ok_or(Error::SingularSystem(f64::INFINITY))?;
            values.extend(x.as_slice());
        }
    }
    Ok(values)
}

/// Exact influence matrix of a network: entry (i, j) = 1 iff j is reachable
/// from i by a directed path of length >= 1.
pub fn true_influence(network: &WeightedNetwork) -> InfluenceMatrix {
    let p = network.p();
    let skeleton = network.skeleton();
    let mut m = InfluenceMatrix::new(network.labels.clone(), (0..p).collect());
    for src in 0..p {
        let mut seen = vec![false; p];
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(src);
        while let Some(v) = queue.pop_front() {
            for &u in skeleton.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        for (j, &reach) in seen.iter().enumerate() {
            if reach && j != src {
                m.set(src, j, true);
            }
        }
    }
    m
}

/// Corrupts an influence matrix: direction reversals first, then false
/// negatives, then false positives, all driven by the spec's seed.
pub fn perturb_influence(matrix: &InfluenceMatrix, spec: &NoiseSpec) -> Result<InfluenceMatrix> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = InfluenceMatrix::new(matrix.gene_labels.clone(), matrix.perturbed.clone());
    let mut present: Vec<(usize, usize)> = matrix.edges().collect();
    if spec.reverse_prop > 0.0 {
        let flips = (spec.reverse_prop * present.len() as f64).round() as usize;
        let mut idx: Vec<usize> = (0..present.len()).collect();
        idx.shuffle(&mut rng);
        for &i in idx.iter().take(flips) {
            let (u, v) = present[i];
            // A flip needs the target to own a row; otherwise the edge stays.
            if matrix.row_of(v).is_some() {
                present[i] = (v, u);
            }
        }
    }
    let mut kept: HashSet<(usize, usize)> = HashSet::new();
    for &(u, v) in &present {
        if u == v {
            continue;
        }
        if spec.fn_rate == 0.0 || rng.random::<f64>() >= spec.fn_rate {
            kept.insert((u, v));
        }
    }
    for row in 0..matrix.k() {
        let src = matrix.perturbed[row];
        for j in 0..matrix.p() {
            if j == src {
                continue;
            }
            let is_present = kept.contains(&(src, j));
            let absent_originally =
                !matrix.get(row, j) && !present.contains(&(src, j));
            let value = if is_present {
                true
            } else if absent_originally && spec.fp_rate > 0.0 {
                rng.random::<f64>() < spec.fp_rate
            } else {
                false
            };
            out.set(row, j, value);
        }
    }
    Ok(out)
}

/// Number of absent off-diagonal cells of the matrix (false-positive slots).
pub fn absent_cell_count(matrix: &InfluenceMatrix) -> usize {
    matrix.k() * (matrix.p() - 1) - matrix.edge_count()
}

/// Solves the FP rate whose expected false-edge count hits `target`.
pub fn fp_rate_for_target(matrix: &InfluenceMatrix, target: f64) -> Result<f64> {
    let slots = absent_cell_count(matrix);
    if slots == 0 {
        return Err(Error::EmptyInput("no absent cells to corrupt"));
    }
    let rate = target / slots as f64;
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::ValueOutOfRange(rate, "[0, 1]"));
    }
    Ok(rate)
}
