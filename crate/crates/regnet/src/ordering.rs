//! Causal orderings consistent with an influence graph: exhaustive per-SCC
//! DFS backtracking, whole-graph Monte-Carlo DFS sampling, and composition
//! along the condensation.

use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{dfs_traverse, scc_decompose, Condensation, DirectedGraph};
use crate::seed;

/// Seed-derivation stage tags used by this module.
const STAGE_MC_DFS: u64 = 0x6f72_6431; // "ord1"
const STAGE_COMPOSE: u64 = 0x6f72_6432;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum OrderingSource {
    Exhaustive,
    McDfs,
}

/// One causal ordering: a permutation of node indices in which every
/// inter-SCC edge of the influence graph points forward.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalOrdering {
    pub sequence: Vec<usize>,
    pub source: OrderingSource,
}

/// The universe (or sample) of causal orderings for one influence graph.
#[derive(Debug, Clone)]
pub struct OrderingUniverse {
    pub orderings: Vec<CausalOrdering>,
    /// True when `orderings` is the complete set for the graph.
    pub exhaustive: bool,
    /// Per-SCC ordering counts when enumeration was used (condensation order).
    pub per_component_counts: Vec<usize>,
}

impl OrderingUniverse {
    pub fn len(&self) -> usize {
        self.orderings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orderings.is_empty()
    }
}

/// Orderings of one strongly connected component.
#[derive(Debug, Clone)]
pub struct SccOrderings {
    /// Distinct descending-post orderings, in lexicographic order.
    pub orderings: Vec<Vec<usize>>,
    pub cap_reached: bool,
}

/// Enumerates every distinct DFS descending-post ordering of a strongly
/// connected graph: all start nodes crossed with all neighbor-exploration
/// orders, via backtracking over the free choices.
pub fn enumerate_scc_orderings(component: &DirectedGraph, cap: usize) -> Result<SccOrderings> {
    let n = component.node_count();
    if n == 0 {
        return Err(Error::EmptyInput("component"));
    }
    let cond = scc_decompose(component);
    if cond.components.len() != 1 {
        return Err(Error::NotStronglyConnected);
    }
    let mut found: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut cap_reached = false;
    let mut visited = vec![false; n];
    let mut stack: Vec<usize> = Vec::with_capacity(n);
    let mut finish: Vec<usize> = Vec::with_capacity(n);
    for root in 0..n {
        visited[root] = true;
        stack.push(root);
        explore(
            component,
            &mut visited,
            &mut stack,
            &mut finish,
            &mut found,
            cap,
            &mut cap_reached,
        );
        stack.pop();
        visited[root] = false;
        if cap_reached {
            break;
        }
    }
    Ok(SccOrderings {
        orderings: found.into_iter().collect(),
        cap_reached,
    })
}

fn explore(
    g: &DirectedGraph,
    visited: &mut Vec<bool>,
    stack: &mut Vec<usize>,
    finish: &mut Vec<usize>,
    found: &mut BTreeSet<Vec<usize>>,
    cap: usize,
    cap_reached: &mut bool,
) {
    if *cap_reached {
        return;
    }
    let Some(&top) = stack.last() else {
        // Strong connectivity guarantees the first tree covered every node.
        let mut ordering = finish.clone();
        ordering.reverse();
        if found.contains(&ordering) {
            return;
        }
        if found.len() < cap {
            found.insert(ordering);
        } else {
            *cap_reached = true;
        }
        return;
    };
    let choices: Vec<usize> = g
        .neighbors(top)
        .iter()
        .copied()
        .filter(|&u| !visited[u])
        .collect();
    if choices.is_empty() {
        stack.pop();
        finish.push(top);
        explore(g, visited, stack, finish, found, cap, cap_reached);
        finish.pop();
        stack.push(top);
        return;
    }
    for c in choices {
        visited[c] = true;
        stack.push(c);
        explore(g, visited, stack, finish, found, cap, cap_reached);
        stack.pop();
        visited[c] = false;
        if *cap_reached {
            return;
        }
    }
}

/// Samples `m` whole-graph DFS orderings under independent random
/// node-priority permutations: uniform within each SCC, with components
/// keyed in reverse canonical condensation order. Keying the outer sweep
/// that way makes every run emit the component blocks in the canonical
/// order, so each sample is a member of the composed universe while the
/// intra-SCC choices stay uniform. Deduplicated, deterministic given
/// (graph, m, seed), and independent of worker count.
pub fn mc_dfs_sample(graph: &DirectedGraph, m: usize, seed: u64) -> Vec<CausalOrdering> {
    let n = graph.node_count();
    let cond = scc_decompose(graph);
    let comp_of = &cond.component_of;
    let runs: Vec<Vec<usize>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, STAGE_MC_DFS, i as u64));
            let mut priority: Vec<usize> = (0..n).collect();
            priority.shuffle(&mut rng);
            // Stable sort keeps the shuffled order inside each component.
            priority.sort_by_key(|&v| std::cmp::Reverse(comp_of[v]));
            dfs_traverse(graph, &priority).ordering
        })
        .collect();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut out = Vec::new();
    for seqn in runs {
        if seen.insert(seqn.clone()) {
            out.push(CausalOrdering {
                sequence: seqn,
                source: OrderingSource::McDfs,
            });
        }
    }
    out
}

/// Combines per-SCC ordering sets along the canonical condensation
/// topological order. When the Cartesian product exceeds `cap`, a seeded
/// uniform sample of `cap` distinct combinations is returned instead.
pub fn compose_universe(
    condensation: &Condensation,
    per_scc: &[Vec<Vec<usize>>],
    cap: usize,
    seed: u64,
) -> Result<OrderingUniverse> {
    if per_scc.len() != condensation.components.len() {
        return Err(Error::LengthMismatch {
            got: per_scc.len(),
            expected: condensation.components.len(),
        });
    }
    for (c, set) in per_scc.iter().enumerate() {
        if set.is_empty() {
            return Err(Error::EmptyComponentSet(c));
        }
    }
    let counts: Vec<usize> = per_scc.iter().map(Vec::len).collect();
    let product: u128 = counts.iter().map(|&c| c as u128).product();
    let (combo_ids, exhaustive): (Vec<u128>, bool) = if product <= cap as u128 {
        ((0..product).collect(), true)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, STAGE_COMPOSE, 0));
        let mut picked: BTreeSet<u128> = BTreeSet::new();
        while picked.len() < cap {
            picked.insert(rng.random_range(0..product));
        }
        (picked.into_iter().collect(), false)
    };
    let total_nodes: usize = condensation.components.iter().map(Vec::len).sum();
    let orderings = combo_ids
        .into_iter()
        .map(|mut id| {
            // Mixed-radix decode, last component fastest.
            let mut picks = vec![0usize; counts.len()];
            for c in (0..counts.len()).rev() {
                picks[c] = (id % counts[c] as u128) as usize;
                id /= counts[c] as u128;
            }
            let mut sequence = Vec::with_capacity(total_nodes);
            for (c, &pick) in picks.iter().enumerate() {
                sequence.extend_from_slice(&per_scc[c][pick]);
            }
            CausalOrdering {
                sequence,
                source: OrderingSource::Exhaustive,
            }
        })
        .collect();
    Ok(OrderingUniverse {
        orderings,
        exhaustive,
        per_component_counts: counts,
    })
}

/// True iff every inter-SCC edge of the graph points forward in the ordering.
pub fn is_consistent(ordering: &[usize], graph: &DirectedGraph) -> Result<bool> {
    let n = graph.node_count();
    let mut pos = vec![usize::MAX; n];
    if ordering.len() != n {
        return Err(Error::LengthMismatch {
            got: ordering.len(),
            expected: n,
        });
    }
    for (i, &v) in ordering.iter().enumerate() {
        if v >= n || pos[v] != usize::MAX {
            return Err(Error::LengthMismatch {
                got: ordering.len(),
                expected: n,
            });
        }
        pos[v] = i;
    }
    let cond = scc_decompose(graph);
    for (u, v) in graph.edges() {
        if cond.component_of[u] != cond.component_of[v] && pos[u] > pos[v] {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingMode {
    /// Enumerate when every SCC is small enough, otherwise sample.
    Auto,
    Exhaustive,
    McDfs,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct OrderingConfig {
    pub mode: OrderingMode,
    /// MC-DFS permutation count.
    pub m: usize,
    pub seed: u64,
    /// Largest SCC size Auto mode will still enumerate.
    pub scc_threshold: usize,
    /// Universe size cap for enumeration and composition.
    pub cap: usize,
}

impl Default for OrderingConfig {
    fn default() -> Self {
        OrderingConfig {
            mode: OrderingMode::Auto,
            m: 1000,
            seed: 0,
            scc_threshold: 10,
            cap: 10_000,
        }
    }
}

/// Builds the ordering universe for an influence graph per the config:
/// per-SCC enumeration + composition when feasible, MC-DFS otherwise.
pub fn build_orderings(graph: &DirectedGraph, config: &OrderingConfig) -> Result<OrderingUniverse> {
    let cond = scc_decompose(graph);
    let largest = cond.components.iter().map(Vec::len).max().unwrap_or(0);
    let enumerate = match config.mode {
        OrderingMode::Exhaustive => true,
        OrderingMode::McDfs => false,
        OrderingMode::Auto => largest <= config.scc_threshold,
    };
    if !enumerate {
        let orderings = mc_dfs_sample(graph, config.m, config.seed);
        return Ok(OrderingUniverse {
            orderings,
            exhaustive: false,
            per_component_counts: Vec::new(),
        });
    }
    let per_scc: Vec<Vec<Vec<usize>>> = cond
        .components
        .par_iter()
        .map(|members| {
            if members.len() == 1 {
                return Ok(vec![vec![members[0]]]);
            }
            // Relabel the component to 0..k for enumeration, then map back.
            let mut local = vec![usize::MAX; graph.node_count()];
            for (i, &v) in members.iter().enumerate() {
                local[v] = i;
            }
            let mut sub = DirectedGraph::new(members.len());
            for &v in members {
                for &u in graph.neighbors(v) {
                    if local[u] != usize::MAX {
                        sub.add_edge(local[v], local[u]);
                    }
                }
            }
            let enumerated = enumerate_scc_orderings(&sub, config.cap)?;
            if enumerated.cap_reached {
                return Err(Error::Config(format!(
                    "SCC of size {} exceeded the ordering cap {}; use MC-DFS",
                    members.len(),
                    config.cap
                )));
            }
            Ok(enumerated
                .orderings
                .into_iter()
                .map(|seqn| seqn.into_iter().map(|i| members[i]).collect())
                .collect())
        })
        .collect::<Result<_>>()?;
    compose_universe(&cond, &per_scc, config.cap, config.seed)
}

/// Hex SHA-256 of the graph's labels and edge set, for file headers.
pub fn graph_digest(graph: &DirectedGraph) -> String {
    let mut h = Sha256::new();
    for label in graph.labels() {
        h.update(label.as_bytes());
        h.update([0u8]);
    }
    for (u, v) in graph.edges() {
        h.update(u.to_le_bytes());
        h.update(v.to_le_bytes());
    }
    let out = h.finalize();
    out.iter().map(|b| format!("{:02x}", b)).collect()
}

/// Writes one ordering per line as comma-separated node labels, with header
/// comments recording provenance.
pub fn write_orderings(
    universe: &OrderingUniverse,
    graph: &DirectedGraph,
    config: &OrderingConfig,
    path: &Path,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# graph_sha256={}", graph_digest(graph))?;
    writeln!(
        out,
        "# seed={} m={} exhaustive={}",
        config.seed, config.m, universe.exhaustive
    )?;
    for o in &universe.orderings {
        let labels: Vec<&str> = o.sequence.iter().map(|&v| graph.label(v)).collect();
        writeln!(out, "{}", labels.join(","))?;
    }
    Ok(())
}

/// Reads an orderings file back against a known graph.
pub fn read_orderings(path: &Path, graph: &DirectedGraph) -> Result<OrderingUniverse> {
    let index: std::collections::HashMap<&str, usize> = graph
        .labels()
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let file = std::fs::File::open(path)?;
    let mut exhaustive = false;
    let mut orderings = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if let Some(rest) = line.strip_prefix('#') {
            if rest.contains("exhaustive=true") {
                exhaustive = true;
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let sequence: Vec<usize> = line
            .split(',')
            .map(|l| {
                index
                    .get(l)
                    .copied()
                    .ok_or_else(|| Error::LabelMismatch(l.to_string()))
            })
            .collect::<Result<_>>()?;
        if sequence.len() != graph.node_count() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!(
                    "ordering has {} nodes, graph has {}",
                    sequence.len(),
                    graph.node_count()
                ),
            });
        }
        orderings.push(CausalOrdering {
            sequence,
            source: if exhaustive {
                OrderingSource::Exhaustive
            } else {
                OrderingSource::McDfs
            },
        });
    }
    Ok(OrderingUniverse {
        orderings,
        exhaustive,
        per_component_counts: Vec::new(),
    })
}
