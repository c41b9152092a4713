//! Directed-graph core: DFS with pre/post visit times, strongly connected
//! components, condensation, topological sort and component-size summaries.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A directed graph over dense node indices with string labels.
///
/// Self-loops are dropped at construction (a count is kept); adjacency lists
/// preserve insertion order so traversals are reproducible.
#[derive(Debug, Clone)]
pub struct DirectedGraph {
    labels: Vec<String>,
    adj: Vec<Vec<usize>>,
    dropped_self_loops: usize,
}

impl DirectedGraph {
    pub fn new(node_count: usize) -> Self {
        DirectedGraph {
            labels: (0..node_count).map(|i| format!("g{}", i + 1)).collect(),
            adj: vec![Vec::new(); node_count],
            dropped_self_loops: 0,
        }
    }

    pub fn with_labels(labels: Vec<String>) -> Self {
        let n = labels.len();
        DirectedGraph {
            labels,
            adj: vec![Vec::new(); n],
            dropped_self_loops: 0,
        }
    }

    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = DirectedGraph::new(node_count);
        for &(u, v) in edges {
            g.add_edge(u, v);
        }
        g
    }

    /// Adds an edge, dropping self-loops and duplicates.
    pub fn add_edge(&mut self, u: usize, v: usize) {
        assert!(u < self.node_count() && v < self.node_count());
        if u == v {
            self.dropped_self_loops += 1;
            return;
        }
        if !self.adj[u].contains(&v) {
            self.adj[u].push(v);
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    pub fn dropped_self_loops(&self) -> usize {
        self.dropped_self_loops
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, ns)| ns.iter().map(move |&v| (u, v)))
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].contains(&v)
    }

    /// Loads a `source<TAB>target` edge list; labels map to dense indices in
    /// first-appearance order.
    pub fn read_edge_list(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);
        let mut labels: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let intern = |s: &str, labels: &mut Vec<String>, index: &mut HashMap<String, usize>| {
            if let Some(&i) = index.get(s) {
                i
            } else {
                let i = labels.len();
                labels.push(s.to_string());
                index.insert(s.to_string(), i);
                i
            }
        };
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if lineno == 0 {
                let mut cols = line.split('\t');
                if cols.next() != Some("source") || cols.next() != Some("target") {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: 1,
                        msg: "expected header `source\\ttarget`".into(),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let (src, tgt) = match (cols.next(), cols.next()) {
                (Some(s), Some(t)) if !s.is_empty() && !t.is_empty() => (s, t),
                _ => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: lineno + 1,
                        msg: "expected two tab-separated labels".into(),
                    })
                }
            };
            let u = intern(src, &mut labels, &mut index);
            let v = intern(tgt, &mut labels, &mut index);
            edges.push((u, v));
        }
        let mut g = DirectedGraph::with_labels(labels);
        for (u, v) in edges {
            g.add_edge(u, v);
        }
        Ok(g)
    }

    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "source\ttarget")?;
        for (u, v) in self.edges() {
            writeln!(out, "{}\t{}", self.labels[u], self.labels[v])?;
        }
        Ok(())
    }
}

/// Result of one DFS run: pre/post visit clocks and the descending-post order.
#[derive(Debug, Clone)]
pub struct DfsResult {
    pub pre: Vec<usize>,
    pub post: Vec<usize>,
    pub ordering: Vec<usize>,
}

/// Full DFS forest under a node-priority permutation.
///
/// `priority` lists node indices; it drives both the outer loop and the
/// neighbor-exploration tie-breaking. Implemented iteratively so graphs with
/// thousands of nodes do not hit recursion limits; pre/post semantics match
/// the recursive definition (clock starts at 1, each node gets one pre and
/// one post tick).
pub fn dfs_traverse(graph: &DirectedGraph, priority: &[usize]) -> DfsResult {
    let n = graph.node_count();
    debug_assert_eq!(priority.len(), n);
    let mut rank = vec![0usize; n];
    for (r, &v) in priority.iter().enumerate() {
        rank[v] = r;
    }
    // Neighbor lists re-sorted by priority rank for this run.
    let sorted_adj: Vec<Vec<usize>> = graph
        .adj
        .iter()
        .map(|ns| {
            let mut v = ns.clone();
            v.sort_by_key(|&u| rank[u]);
            v
        })
        .collect();

    let mut pre = vec![0usize; n];
    let mut post = vec![0usize; n];
    let mut visited = vec![false; n];
    let mut finish: Vec<usize> = Vec::with_capacity(n);
    let mut clock = 1usize;
    let mut stack: Vec<(usize, usize)> = Vec::new();

    for &start in priority {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        pre[start] = clock;
        clock += 1;
        stack.push((start, 0));
        while let Some(frame) = stack.last_mut() {
            let (v, idx) = (frame.0, frame.1);
            if idx < sorted_adj[v].len() {
                frame.1 += 1;
                let u = sorted_adj[v][idx];
                if !visited[u] {
                    visited[u] = true;
                    pre[u] = clock;
                    clock += 1;
                    stack.push((u, 0));
                }
            } else {
                post[v] = clock;
                clock += 1;
                finish.push(v);
                stack.pop();
            }
        }
    }
    finish.reverse();
    DfsResult {
        pre,
        post,
        ordering: finish,
    }
}

/// Strongly connected components with their condensation DAG.
///
/// Components are indexed in topological order of the condensation; nodes
/// within a component are listed in ascending index order.
#[derive(Debug, Clone)]
pub struct Condensation {
    pub components: Vec<Vec<usize>>,
    pub super_dag: DirectedGraph,
    pub component_of: Vec<usize>,
}

/// Tarjan SCC, iterative.
pub fn scc_decompose(graph: &DirectedGraph) -> Condensation {
    let n = graph.node_count();
    let mut index_of: Vec<Option<usize>> = vec![None; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut next_index = 0usize;
    // Explicit call frames: (node, next neighbor slot).
    let mut frames: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index_of[root].is_some() {
            continue;
        }
        frames.push((root, 0));
        index_of[root] = Some(next_index);
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(frame) = frames.last_mut() {
            let (v, idx) = (frame.0, frame.1);
            if idx < graph.adj[v].len() {
                frame.1 += 1;
                let w = graph.adj[v][idx];
                match index_of[w] {
                    None => {
                        index_of[w] = Some(next_index);
                        low[w] = next_index;
                        next_index += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        frames.push((w, 0));
                    }
                    Some(wi) => {
                        if on_stack[w] {
                            low[v] = low[v].min(wi);
                        }
                    }
                }
            } else {
                frames.pop();
                if let Some(parent) = frames.last() {
                    let p = parent.0;
                    low[p] = low[p].min(low[v]);
                }
                if low[v] == index_of[v].unwrap() {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }

    // Tarjan emits sinks first; reverse for topological component order.
    comps.reverse();
    let mut component_of = vec![0usize; n];
    for (ci, comp) in comps.iter().enumerate() {
        for &v in comp {
            component_of[v] = ci;
        }
    }
    let mut super_dag =
        DirectedGraph::with_labels((0..comps.len()).map(|i| format!("C{}", i)).collect());
    for (u, v) in graph.edges() {
        let (cu, cv) = (component_of[u], component_of[v]);
        if cu != cv {
            super_dag.add_edge(cu, cv);
        }
    }
    Condensation {
        components: comps,
        super_dag,
        component_of,
    }
}

/// Canonical topological sort: identity-priority DFS, after a cycle check.
pub fn topological_sort(dag: &DirectedGraph) -> Result<Vec<usize>> {
    let cond = scc_decompose(dag);
    if cond.components.iter().any(|c| c.len() > 1) {
        return Err(Error::CycleDetected);
    }
    let identity: Vec<usize> = (0..dag.node_count()).collect();
    Ok(dfs_traverse(dag, &identity).ordering)
}

pub fn is_acyclic(graph: &DirectedGraph) -> bool {
    scc_decompose(graph).components.iter().all(|c| c.len() == 1)
}

/// (largest SCC size, largest weakly connected size, edge count).
pub fn component_size_summary(graph: &DirectedGraph) -> (usize, usize, usize) {
    let n = graph.node_count();
    let largest_scc = scc_decompose(graph)
        .components
        .iter()
        .map(Vec::len)
        .max()
        .unwrap_or(if n == 0 { 0 } else { 1 });
    // Union-find over the undirected skeleton.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (u, v) in graph.edges() {
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        if ru != rv {
            parent[ru] = rv;
        }
    }
    let mut sizes: HashMap<usize, usize> = HashMap::new();
    for v in 0..n {
        let r = find(&mut parent, v);
        *sizes.entry(r).or_insert(0) += 1;
    }
    let largest_wcc = sizes.values().copied().max().unwrap_or(0).max(usize::from(n > 0));
    (largest_scc, largest_wcc, graph.edge_count())
}
