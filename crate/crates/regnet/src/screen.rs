//! Influence-matrix estimation from replicated perturbation screens:
//! two-sample t-tests per (knockout, gene) cell, optional BH adjustment,
//! and the cutoff scan used to pick a p-value threshold.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::graph::{component_size_summary, DirectedGraph};

/// Condition tag for one expression sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    WildType,
    /// Knockout of the gene with this index.
    Knockout(usize),
}

/// Sample-by-gene expression matrix with per-sample condition labels.
#[derive(Debug, Clone)]
pub struct ExpressionDataset {
    pub gene_labels: Vec<String>,
    pub conditions: Vec<Condition>,
    /// Row-major n x p.
    pub values: Vec<f64>,
}

impl ExpressionDataset {
    pub fn new(gene_labels: Vec<String>, conditions: Vec<Condition>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), gene_labels.len() * conditions.len());
        ExpressionDataset {
            gene_labels,
            conditions,
            values,
        }
    }

    pub fn sample_count(&self) -> usize {
        self.conditions.len()
    }

    pub fn gene_count(&self) -> usize {
        self.gene_labels.len()
    }

    pub fn value(&self, sample: usize, gene: usize) -> f64 {
        self.values[sample * self.gene_count() + gene]
    }

    pub fn wild_type_rows(&self) -> Vec<usize> {
        (0..self.sample_count())
            .filter(|&s| self.conditions[s] == Condition::WildType)
            .collect()
    }

    pub fn knockout_rows(&self, gene: usize) -> Vec<usize> {
        (0..self.sample_count())
            .filter(|&s| self.conditions[s] == Condition::Knockout(gene))
            .collect()
    }

    /// Distinct knocked-out genes, ascending.
    pub fn perturbed_genes(&self) -> Vec<usize> {
        let mut genes: Vec<usize> = self
            .conditions
            .iter()
            .filter_map(|c| match c {
                Condition::Knockout(g) => Some(*g),
                Condition::WildType => None,
            })
            .collect();
        genes.sort_unstable();
        genes.dedup();
        genes
    }

    pub fn column(&self, rows: &[usize], gene: usize) -> Vec<f64> {
        rows.iter().map(|&s| self.value(s, gene)).collect()
    }

    /// Reads the expression TSV: `sample_id<TAB>condition<TAB>gene1...geneP`,
    /// condition `WT` or `KO:<gene_label>`.
    pub fn read_tsv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines().enumerate();
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty file".into()))?;
        let header = header?;
        let mut cols = header.split('\t');
        if cols.next() != Some("sample_id") || cols.next() != Some("condition") {
            return Err(parse_err(
                1,
                "expected header `sample_id\\tcondition\\t<genes...>`".into(),
            ));
        }
        let gene_labels: Vec<String> = cols.map(str::to_string).collect();
        if gene_labels.is_empty() {
            return Err(parse_err(1, "no gene columns".into()));
        }
        let gene_index: HashMap<&str, usize> = gene_labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let p = gene_labels.len();
        let mut conditions = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let _sample_id = cols
                .next()
                .ok_or_else(|| parse_err(lineno + 1, "missing sample_id".into()))?;
            let cond = cols
                .next()
                .ok_or_else(|| parse_err(lineno + 1, "missing condition".into()))?;
            let condition = if cond == "WT" {
                Condition::WildType
            } else if let Some(label) = cond.strip_prefix("KO:") {
                let g = *gene_index
                    .get(label)
                    .ok_or_else(|| parse_err(lineno + 1, format!("unknown gene `{}`", label)))?;
                Condition::Knockout(g)
            } else {
                return Err(parse_err(
                    lineno + 1,
                    format!("condition must be `WT` or `KO:<gene>`, got `{}`", cond),
                ));
            };
            let row: Vec<f64> = cols
                .map(|v| {
                    v.parse::<f64>().map_err(|_| {
                        parse_err(lineno + 1, format!("invalid numeric value `{}`", v))
                    })
                })
                .collect::<Result<_>>()?;
            if row.len() != p {
                return Err(parse_err(
                    lineno + 1,
                    format!("expected {} gene values, got {}", p, row.len()),
                ));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(parse_err(lineno + 1, "non-finite value".into()));
            }
            conditions.push(condition);
            values.extend(row);
        }
        Ok(ExpressionDataset {
            gene_labels,
            conditions,
            values,
        })
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(out, "sample_id\tcondition")?;
        for label in &self.gene_labels {
            write!(out, "\t{}", label)?;
        }
        writeln!(out)?;
        for s in 0..self.sample_count() {
            let cond = match self.conditions[s] {
                Condition::WildType => "WT".to_string(),
                Condition::Knockout(g) => format!("KO:{}", self.gene_labels[g]),
            };
            write!(out, "s{}\t{}", s + 1, cond)?;
            for g in 0..self.gene_count() {
                write!(out, "\t{}", self.value(s, g))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Two-sample t-test outcome.
#[derive(Debug, Clone, Copy)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    /// Set when both groups had zero variance and the p-value was forced.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestKind {
    /// Welch statistic with Welch-Satterthwaite degrees of freedom.
    Welch,
    /// Pooled-variance Student t.
    Pooled,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> TTest {
    two_sample_t_test(a, b, TestKind::Welch)
}

pub fn two_sample_t_test(a: &[f64], b: &[f64], kind: TestKind) -> TTest {
    assert!(a.len() >= 2 && b.len() >= 2, "need >= 2 samples per group");
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (se2, df) = match kind {
        TestKind::Welch => {
            let se2 = va / na + vb / nb;
            let df = if se2 > 0.0 {
                se2 * se2
                    / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0))
            } else {
                na + nb - 2.0
            };
            (se2, df)
        }
        TestKind::Pooled => {
            let sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
            (sp2 * (1.0 / na + 1.0 / nb), na + nb - 2.0)
        }
    };
    if se2 == 0.0 {
        // Both groups constant: forced separation or exact tie.
        return if ma == mb {
            TTest {
                t: 0.0,
                df,
                p: 1.0,
                degenerate: true,
            }
        } else {
            TTest {
                t: (ma - mb).signum() * f64::INFINITY,
                df,
                p: 0.0,
                degenerate: true,
            }
        };
    }
    let t = (ma - mb) / se2.sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    TTest {
        t,
        df,
        p,
        degenerate: false,
    }
}

/// Benjamini-Hochberg step-up adjustment, capped at 1.
pub fn bh_adjust(pvalues: &[f64]) -> Result<Vec<f64>> {
    for &p in pvalues {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::ValueOutOfRange(p, "[0, 1]"));
        }
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| pvalues[i].total_cmp(&pvalues[j]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &idx) in order.iter().enumerate().rev() {
        let val = (pvalues[idx] * m as f64 / (rank + 1) as f64).min(1.0);
        running = running.min(val);
        adjusted[idx] = running;
    }
    Ok(adjusted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adjust {
    None,
    /// BH step-up applied per knockout row (family = the p-1 tested genes).
    BenjaminiHochberg,
}

/// Binary k x p influence matrix with the p-values that back it.
#[derive(Debug, Clone)]
pub struct InfluenceMatrix {
    pub gene_labels: Vec<String>,
    /// Perturbed gene indices, ascending; one row each.
    pub perturbed: Vec<usize>,
    entries: Vec<bool>,
    /// Row-major k x p; NaN marks the perturbed gene's own cell.
    pub pvalues: Option<Vec<f64>>,
}

impl InfluenceMatrix {
    pub fn new(gene_labels: Vec<String>, perturbed: Vec<usize>) -> Self {
        let k = perturbed.len();
        let p = gene_labels.len();
        debug_assert!(perturbed.windows(2).all(|w| w[0] < w[1]));
        InfluenceMatrix {
            gene_labels,
            perturbed,
            entries: vec![false; k * p],
            pvalues: None,
        }
    }

    pub fn k(&self) -> usize {
        self.perturbed.len()
    }

    pub fn p(&self) -> usize {
        self.gene_labels.len()
    }

    pub fn get(&self, row: usize, gene: usize) -> bool {
        self.entries[row * self.p() + gene]
    }

    /// Sets an entry; the perturbed gene's own cell stays 0.
    pub fn set(&mut self, row: usize, gene: usize, value: bool) {
        if self.perturbed[row] == gene {
            return;
        }
        let p = self.p();
        self.entries[row * p + gene] = value;
    }

    pub fn row_of(&self, gene: usize) -> Option<usize> {
        self.perturbed.binary_search(&gene).ok()
    }

    pub fn edge_count(&self) -> usize {
        self.entries.iter().filter(|&&e| e).count()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let p = self.p();
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .map(move |(idx, _)| (self.perturbed[idx / p], idx % p))
    }

    /// The directed influence graph over all p genes.
    pub fn influence_graph(&self) -> DirectedGraph {
        let mut g = DirectedGraph::with_labels(self.gene_labels.clone());
        for (u, v) in self.edges() {
            g.add_edge(u, v);
        }
        g
    }

    /// The subgraph restricted to perturbed genes, for two-layer orderings.
    /// Node i of the result is `perturbed[i]`.
    pub fn tf_graph(&self) -> DirectedGraph {
        let labels = self
            .perturbed
            .iter()
            .map(|&g| self.gene_labels[g].clone())
            .collect();
        let mut g = DirectedGraph::with_labels(labels);
        for (u, v) in self.edges() {
            if let (Some(ru), Some(rv)) = (self.row_of(u), self.row_of(v)) {
                g.add_edge(ru, rv);
            }
        }
        g
    }

    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "source\ttarget")?;
        for (u, v) in self.edges() {
            writeln!(out, "{}\t{}", self.gene_labels[u], self.gene_labels[v])?;
        }
        Ok(())
    }

    /// Reads a `source<TAB>target` edge list against a known gene universe.
    /// `perturbed` defaults to all genes when not given.
    pub fn read_edge_list(
        path: &Path,
        gene_labels: &[String],
        perturbed: Option<Vec<usize>>,
    ) -> Result<Self> {
        let index: HashMap<&str, usize> = gene_labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let perturbed = perturbed.unwrap_or_else(|| (0..gene_labels.len()).collect());
        let mut m = InfluenceMatrix::new(gene_labels.to_vec(), perturbed);
        let file = std::fs::File::open(path)?;
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let (src, tgt) = match (cols.next(), cols.next()) {
                (Some(s), Some(t)) => (s, t),
                _ => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: lineno + 1,
                        msg: "expected `source\\ttarget`".into(),
                    })
                }
            };
            let u = *index
                .get(src)
                .ok_or_else(|| Error::LabelMismatch(src.to_string()))?;
            let v = *index
                .get(tgt)
                .ok_or_else(|| Error::LabelMismatch(tgt.to_string()))?;
            let row = m
                .row_of(u)
                .ok_or_else(|| Error::LabelMismatch(format!("{} is not a perturbed gene", src)))?;
            m.set(row, v, true);
        }
        Ok(m)
    }
}

/// Computes the full k x p p-value grid; rows are independent and evaluated
/// in parallel. The perturbed gene's own cell is NaN.
pub fn pvalue_matrix(
    data: &ExpressionDataset,
    kind: TestKind,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let wt_rows = data.wild_type_rows();
    if wt_rows.len() < 2 {
        return Err(Error::MissingWildType(wt_rows.len()));
    }
    let perturbed = data.perturbed_genes();
    if perturbed.is_empty() {
        return Err(Error::EmptyInput("no knockout samples in dataset"));
    }
    for &g in &perturbed {
        let reps = data.knockout_rows(g).len();
        if reps < 2 {
            return Err(Error::InsufficientReplicates {
                gene: data.gene_labels[g].clone(),
                got: reps,
            });
        }
    }
    let p = data.gene_count();
    let pvals: Vec<f64> = perturbed
        .par_iter()
        .flat_map_iter(|&g| {
            let ko_rows = data.knockout_rows(g);
            (0..p).map(move |j| {
                if j == g {
                    f64::NAN
                } else {
                    let a = data.column(&ko_rows, j);
                    let b = data.column(&data.wild_type_rows(), j);
                    two_sample_t_test(&a, &b, kind).p
                }
            })
        })
        .collect();
    Ok((perturbed, pvals))
}

/// Thresholds (optionally adjusted) p-values into a binary influence matrix.
pub fn build_influence_matrix(
    data: &ExpressionDataset,
    cutoff: f64,
    adjust: Adjust,
    kind: TestKind,
) -> Result<InfluenceMatrix> {
    if !(cutoff > 0.0 && cutoff <= 1.0) {
        return Err(Error::ValueOutOfRange(cutoff, "(0, 1]"));
    }
    let (perturbed, pvals) = pvalue_matrix(data, kind)?;
    let adjusted = adjust_rows(&pvals, perturbed.len(), data.gene_count(), adjust)?;
    Ok(threshold_influence(
        data.gene_labels.clone(),
        perturbed,
        adjusted,
        cutoff,
    ))
}

fn adjust_rows(pvals: &[f64], k: usize, p: usize, adjust: Adjust) -> Result<Vec<f64>> {
    match adjust {
        Adjust::None => Ok(pvals.to_vec()),
        Adjust::BenjaminiHochberg => {
            let mut out = vec![f64::NAN; k * p];
            for row in 0..k {
                let cells: Vec<usize> = (0..p)
                    .filter(|&j| !pvals[row * p + j].is_nan())
                    .collect();
                let raw: Vec<f64> = cells.iter().map(|&j| pvals[row * p + j]).collect();
                let adj = bh_adjust(&raw)?;
                for (&j, &a) in cells.iter().zip(adj.iter()) {
                    out[row * p + j] = a;
                }
            }
            Ok(out)
        }
    }
}

fn threshold_influence(
    gene_labels: Vec<String>,
    perturbed: Vec<usize>,
    pvals: Vec<f64>,
    cutoff: f64,
) -> InfluenceMatrix {
    let p = gene_labels.len();
    let mut m = InfluenceMatrix::new(gene_labels, perturbed);
    for row in 0..m.k() {
        for j in 0..p {
            let pv = pvals[row * p + j];
            if !pv.is_nan() && pv <= cutoff {
                m.set(row, j, true);
            }
        }
    }
    m.pvalues = Some(pvals);
    m
}

/// One row of the cutoff scan.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ScanRow {
    pub cutoff: f64,
    pub edges: usize,
    pub largest_scc: usize,
    pub largest_wcc: usize,
}

/// Scans a cutoff grid; the p-value grid is computed once. Rows come back
/// sorted ascending by cutoff.
pub fn cutoff_scan(
    data: &ExpressionDataset,
    grid: &[f64],
    adjust: Adjust,
    kind: TestKind,
) -> Result<Vec<ScanRow>> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("cutoff grid"));
    }
    for &c in grid {
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::ValueOutOfRange(c, "(0, 1]"));
        }
    }
    let (perturbed, pvals) = pvalue_matrix(data, kind)?;
    let adjusted = adjust_rows(&pvals, perturbed.len(), data.gene_count(), adjust)?;
    let mut cutoffs = grid.to_vec();
    cutoffs.sort_by(f64::total_cmp);
    let rows = cutoffs
        .iter()
        .map(|&cutoff| {
            let m = threshold_influence(
                data.gene_labels.clone(),
                perturbed.clone(),
                adjusted.clone(),
                cutoff,
            );
            let (largest_scc, largest_wcc, edges) = component_size_summary(&m.influence_graph());
            ScanRow {
                cutoff,
                edges,
                largest_scc,
                largest_wcc,
            }
        })
        .collect();
    Ok(rows)
}

/// Default grid: 40 log-spaced cutoffs in [1e-6, 0.1].
pub fn default_cutoff_grid() -> Vec<f64> {
    let (lo, hi, n) = (1e-6f64, 0.1f64, 40);
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            (lo.ln() + t * (hi.ln() - lo.ln())).exp()
        })
        .collect()
}

pub fn write_scan_tsv(rows: &[ScanRow], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "cutoff\tedges\tlargest_scc\tlargest_wcc")?;
    for r in rows {
        writeln!(
            out,
            "{:e}\t{}\t{}\t{}",
            r.cutoff, r.edges, r.largest_scc, r.largest_wcc
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    #![allow(clippy::needless_range_loop, clippy::inconsistent_digit_grouping)]
    use super::*;

    #[test]
    fn welch_identical_groups_degenerate() {
        let r = welch_t_test(&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0]);
        assert!(r.degenerate);
        assert_eq!(r.p, 1.0);
        assert_eq!(r.t, 0.0);
    }

    #[test]
    fn welch_forced_separation() {
        let r = welch_t_test(&[0.0, 0.0], &[5.0, 5.0]);
        assert!(r.degenerate);
        assert_eq!(r.p, 0.0);
    }

    #[test]
    fn welch_sign_symmetry() {
        let a = [0.3, -0.2, 0.7, 1.1];
        let b = [2.0, 1.4, 0.9, 2.2, 1.8];
        let r1 = two_sample_t_test(&a, &b, TestKind::Welch);
        let r2 = two_sample_t_test(&b, &a, TestKind::Welch);
        assert!((r1.t + r2.t).abs() < 1e-12);
        assert!((r1.p - r2.p).abs() < 1e-12);
    }

    // Independent t-distribution CDF oracle: regularized incomplete beta via
    // Lentz continued fraction, Lanczos log-gamma.
    mod beta_oracle {
        fn ln_gamma(x: f64) -> f64 {
            const G: [f64; 9] = [
                0.999_999_999_999_809_9,
                676.520_368_121_885_1,
                -1259.139_216_722_402_8,
                771.323_428_777_653_1,
                -176.615_029_162_140_6,
                12.507_343_278_686_905,
                -0.138_571_095_265_720_12,
                9.984_369_578_019_572e-6,
                1.505_632_735_149_311_6e-7,
            ];
            if x < 0.5 {
                (std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln()
                    - ln_gamma(1.0 - x)
            } else {
                let x = x - 1.0;
                let mut a = G[0];
                let t = x + 7.5;
                for (i, &g) in G.iter().enumerate().skip(1) {
                    a += g / (x + i as f64);
                }
                0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
            }
        }

        fn betacf(a: f64, b: f64, x: f64) -> f64 {
            let (mut c, mut d) = (1.0, 1.0 - (a + b) * x / (a + 1.0));
            if d.abs() < 1e-300 {
                d = 1e-300;
            }
            d = 1.0 / d;
            let mut h = d;
            for m in 1..300 {
                let m = m as f64;
                let aa = m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
                d = 1.0 + aa * d;
                if d.abs() < 1e-300 {
                    d = 1e-300;
                }
                c = 1.0 + aa / c;
                if c.abs() < 1e-300 {
                    c = 1e-300;
                }
                d = 1.0 / d;
                h *= d * c;
                let aa = -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
                d = 1.0 + aa * d;
                if d.abs() < 1e-300 {
                    d = 1e-300;
                }
                c = 1.0 + aa / c;
                if c.abs() < 1e-300 {
                    c = 1e-300;
                }
                d = 1.0 / d;
                let del = d * c;
                h *= del;
                if (del - 1.0).abs() < 1e-15 {
                    break;
                }
            }
            h
        }

        pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
            if x <= 0.0 {
                return 0.0;
            }
            if x >= 1.0 {
                return 1.0;
            }
            let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
                + a * x.ln()
                + b * (1.0 - x).ln();
            if x < (a + 1.0) / (a + b + 2.0) {
                ln_front.exp() * betacf(a, b, x) / a
            } else {
                1.0 - ln_front.exp() * betacf(b, a, 1.0 - x) / b
            }
        }

        /// Two-sided p-value for a t statistic via the incomplete beta.
        pub fn two_sided_p(t: f64, df: f64) -> f64 {
            reg_inc_beta(df / 2.0, 0.5, df / (df + t * t))
        }
    }

    #[test]
    fn welch_matches_incomplete_beta_oracle() {
        let a = [0.1, -0.1, 0.05, -0.05, 0.0];
        let b = [1.1, 0.9, 1.05, 0.95, 1.0];
        let r = welch_t_test(&a, &b);
        let expect = beta_oracle::two_sided_p(r.t, r.df);
        assert!(
            (r.p - expect).abs() < 1e-10,
            "p = {}, oracle = {}",
            r.p,
            expect
        );
        // And a handful of other shapes.
        let cases: &[(&[f64], &[f64])] = &[
            (&[1.0, 2.0, 3.0], &[2.0, 2.5, 3.5, 4.0]),
            (&[-1.0, 0.0, 1.0, 2.0], &[0.5, 0.6, 0.4]),
            (&[10.0, 11.0, 9.0, 10.5], &[10.2, 10.1, 9.9, 10.0, 10.3]),
        ];
        for (a, b) in cases {
            let r = welch_t_test(a, b);
            let expect = beta_oracle::two_sided_p(r.t, r.df);
            assert!((r.p - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn bh_step_up_examples() {
        let adj = bh_adjust(&[0.01, 0.02, 0.03]).unwrap();
        for v in &adj {
            assert!((v - 0.03).abs() < 1e-12);
        }
        assert_eq!(bh_adjust(&[0.2]).unwrap(), vec![0.2]);
        let equal = bh_adjust(&[0.05, 0.05, 0.05, 0.05]).unwrap();
        for v in &equal {
            assert!((v - 0.05).abs() < 1e-12);
        }
        assert!(bh_adjust(&[1.2]).is_err());
    }

    #[test]
    fn bh_never_decreases_and_preserves_order() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let ps: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
            let adj = bh_adjust(&ps).unwrap();
            for (raw, a) in ps.iter().zip(adj.iter()) {
                assert!(a + 1e-15 >= *raw);
                assert!(*a <= 1.0);
            }
            // distinct ranks keep their order
            for i in 0..ps.len() {
                for j in 0..ps.len() {
                    if ps[i] < ps[j] {
                        assert!(adj[i] <= adj[j] + 1e-15);
                    }
                }
            }
        }
    }

    fn toy_dataset() -> ExpressionDataset {
        // 3 genes; KO of g1 shifts g2 and g3, KO of g2 shifts g3.
        let labels = vec!["g1".into(), "g2".into(), "g3".into()];
        let mut conditions = vec![Condition::WildType; 4];
        let mut values = vec![
            0.0, 5.0, 5.1, //
            0.1, 5.1, 4.9, //
            -0.1, 4.9, 5.0, //
            0.05, 5.05, 5.05,
        ];
        for _ in 0..3 {
            conditions.push(Condition::Knockout(0));
        }
        values.extend_from_slice(&[
            0.0, 0.1, 0.2, //
            0.0, -0.1, 0.1, //
            0.0, 0.05, 0.0,
        ]);
        for _ in 0..3 {
            conditions.push(Condition::Knockout(1));
        }
        values.extend_from_slice(&[
            0.0, 0.0, 0.1, //
            0.1, 0.0, -0.1, //
            -0.05, 0.0, 0.05,
        ]);
        ExpressionDataset::new(labels, conditions, values)
    }

    #[test]
    fn influence_matrix_detects_shifts() {
        let data = toy_dataset();
        let m = build_influence_matrix(&data, 0.01, Adjust::None, TestKind::Welch).unwrap();
        assert_eq!(m.perturbed, vec![0, 1]);
        assert!(m.get(0, 1));
        assert!(m.get(0, 2));
        assert!(m.get(1, 2));
        assert!(!m.get(0, 0));
        assert!(!m.get(1, 1));
        // KO:g2 leaves g1 at wild-type level.
        assert!(!m.get(1, 0));
    }

    #[test]
    fn cutoff_one_sets_all_off_diagonal() {
        let data = toy_dataset();
        let m = build_influence_matrix(&data, 1.0, Adjust::None, TestKind::Welch).unwrap();
        assert_eq!(m.edge_count(), 2 * (3 - 1));
    }

    #[test]
    fn ko_identical_to_wt_gives_empty_matrix() {
        let labels = vec!["a".into(), "b".into()];
        let mut conditions = vec![Condition::WildType; 3];
        let mut values = vec![1.0, 2.0, 1.1, 2.1, 0.9, 1.9];
        for v in [1.0, 2.0, 1.1, 2.1, 0.9, 1.9] {
            values.push(v);
        }
        conditions.extend([Condition::Knockout(0); 3]);
        let data = ExpressionDataset::new(labels, conditions, values);
        let m = build_influence_matrix(&data, 0.01, Adjust::None, TestKind::Welch).unwrap();
        assert_eq!(m.edge_count(), 0);
    }

    #[test]
    fn influence_nested_in_cutoff() {
        let data = toy_dataset();
        let lo = build_influence_matrix(&data, 0.001, Adjust::None, TestKind::Welch).unwrap();
        let hi = build_influence_matrix(&data, 0.5, Adjust::None, TestKind::Welch).unwrap();
        for (u, v) in lo.edges() {
            let row = hi.row_of(u).unwrap();
            assert!(hi.get(row, v));
        }
    }

    #[test]
    fn scan_monotone_and_sorted() {
        let data = toy_dataset();
        let rows = cutoff_scan(
            &data,
            &[0.5, 1e-6, 0.01, 1.0],
            Adjust::None,
            TestKind::Welch,
        )
        .unwrap();
        assert_eq!(rows.len(), 4);
        for w in rows.windows(2) {
            assert!(w[0].cutoff <= w[1].cutoff);
            assert!(w[0].edges <= w[1].edges);
        }
        assert_eq!(rows.last().unwrap().edges, 2 * (3 - 1));
    }

    #[test]
    fn missing_wild_type_detected() {
        let labels = vec!["a".into(), "b".into()];
        let conditions = vec![Condition::Knockout(0); 2];
        let values = vec![1.0, 2.0, 1.1, 2.1];
        let data = ExpressionDataset::new(labels, conditions, values);
        assert!(matches!(
            build_influence_matrix(&data, 0.01, Adjust::None, TestKind::Welch),
            Err(Error::MissingWildType(0))
        ));
    }

    #[test]
    fn insufficient_replicates_detected() {
        let labels = vec!["a".into(), "b".into()];
        let conditions = vec![
            Condition::WildType,
            Condition::WildType,
            Condition::Knockout(1),
        ];
        let values = vec![1.0, 2.0, 1.1, 2.1, 0.0, 0.0];
        let data = ExpressionDataset::new(labels, conditions, values);
        assert!(matches!(
            build_influence_matrix(&data, 0.01, Adjust::None, TestKind::Welch),
            Err(Error::InsufficientReplicates { .. })
        ));
    }

    #[test]
    fn expression_tsv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("expr.tsv");
        let data = toy_dataset();
        data.write_tsv(&path).unwrap();
        let back = ExpressionDataset::read_tsv(&path).unwrap();
        assert_eq!(back.gene_labels, data.gene_labels);
        assert_eq!(back.conditions, data.conditions);
        for (a, b) in back.values.iter().zip(data.values.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
