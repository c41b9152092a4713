//! Graph averaging: select the best-scoring orderings and aggregate their
//! DAG estimates into a (possibly cyclic) consensus network.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimator::DagEstimate;

/// Consensus over |Q| member DAGs: per-cell confidence (fraction of members
/// with the edge), aggregate sign, and mean magnitude.
#[derive(Debug, Clone)]
pub struct ConsensusNetwork {
    pub labels: Vec<String>,
    /// Row-major p x p, [src*p + tgt].
    pub confidence: Vec<f64>,
    pub sign: Vec<i8>,
    pub magnitude: Vec<f64>,
    pub member_count: usize,
}

impl ConsensusNetwork {
    pub fn p(&self) -> usize {
        self.labels.len()
    }

    pub fn cell(&self, src: usize, tgt: usize) -> (f64, i8, f64) {
        let idx = src * self.p() + tgt;
        (self.confidence[idx], self.sign[idx], self.magnitude[idx])
    }
}

/// Indices of the estimates whose score is at or below the empirical lower-q
/// quantile: the ceil(q*M)-th smallest score, boundary ties included.
pub fn select_top_orderings(estimates: &[DagEstimate], q: f64) -> Result<Vec<usize>> {
    if estimates.is_empty() {
        return Err(Error::EmptyInput("no estimates to select from"));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::ValueOutOfRange(q, "(0, 1]"));
    }
    let m = estimates.len();
    let mut scores: Vec<f64> = estimates.iter().map(|e| e.score).collect();
    scores.sort_by(f64::total_cmp);
    let rank = ((q * m as f64).ceil() as usize).clamp(1, m);
    let cutoff = scores[rank - 1];
    Ok((0..m)
        .filter(|&i| estimates[i].score <= cutoff)
        .collect())
}

/// Averages the members' weight matrices per Eqs (4)-(5): confidence is the
/// fraction with a nonzero weight, sign is sgn of the summed signs (with
/// sgn(0) = 0), magnitude is the mean absolute weight with divisor |Q|.
pub fn build_consensus(members: &[&DagEstimate], labels: &[String]) -> Result<ConsensusNetwork> {
    if members.is_empty() {
        return Err(Error::EmptyInput("consensus member set"));
    }
    let p = labels.len();
    for m in members {
        if m.ordering.sequence.len() != p {
            return Err(Error::GeneSetMismatch(m.ordering.sequence.len(), p));
        }
    }
    let q = members.len() as f64;
    let mut count = vec![0u32; p * p];
    let mut sign_sum = vec![0i64; p * p];
    let mut mag_sum = vec![0.0f64; p * p];
    for m in members {
        for &(src, tgt, w) in &m.weights {
            if w == 0.0 {
                continue;
            }
            let idx = src * p + tgt;
            count[idx] += 1;
            sign_sum[idx] += if w > 0.0 { 1 } else { -1 };
            mag_sum[idx] += w.abs();
        }
    }
    Ok(ConsensusNetwork {
        labels: labels.to_vec(),
        confidence: count.iter().map(|&c| c as f64 / q).collect(),
        sign: sign_sum.iter().map(|&s| s.signum() as i8).collect(),
        magnitude: mag_sum.iter().map(|&v| v / q).collect(),
        member_count: members.len(),
    })
}

/// Convenience wrapper: select the top orderings and average them.
pub fn consensus_from_estimates(
    estimates: &[DagEstimate],
    q: f64,
    labels: &[String],
) -> Result<ConsensusNetwork> {
    let picked = select_top_orderings(estimates, q)?;
    let members: Vec<&DagEstimate> = picked.iter().map(|&i| &estimates[i]).collect();
    build_consensus(&members, labels)
}

/// Edges with confidence >= tau; may contain directed cycles.
pub fn threshold_edges(net: &ConsensusNetwork, tau: f64) -> Result<Vec<(usize, usize)>> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::ValueOutOfRange(tau, "(0, 1]"));
    }
    let p = net.p();
    Ok((0..p * p)
        .filter(|&idx| net.confidence[idx] >= tau)
        .map(|idx| (idx / p, idx % p))
        .collect())
}

/// Writes cells with nonzero confidence:
/// `source<TAB>target<TAB>confidence<TAB>sign<TAB>magnitude`.
pub fn write_consensus_tsv(net: &ConsensusNetwork, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "source\ttarget\tconfidence\tsign\tmagnitude")?;
    let p = net.p();
    for idx in 0..p * p {
        if net.confidence[idx] > 0.0 {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                net.labels[idx / p],
                net.labels[idx % p],
                net.confidence[idx],
                net.sign[idx],
                net.magnitude[idx]
            )?;
        }
    }
    Ok(())
}

/// Writes a thresholded edge list as `source<TAB>target`.
pub fn write_edges_tsv(
    net: &ConsensusNetwork,
    edges: &[(usize, usize)],
    path: &Path,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "source\ttarget")?;
    for &(u, v) in edges {
        writeln!(out, "{}\t{}", net.labels[u], net.labels[v])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ordering::{CausalOrdering, OrderingSource};

    fn estimate(p: usize, score: f64, weights: Vec<(usize, usize, f64)>) -> DagEstimate {
        DagEstimate {
            ordering: CausalOrdering {
                sequence: (0..p).collect(),
                source: OrderingSource::Exhaustive,
            },
            weights,
            score,
            per_node_rss: vec![0.0; p],
            converged: true,
        }
    }

    fn labels(p: usize) -> Vec<String> {
        (1..=p).map(|i| format!("g{}", i)).collect()
    }

    #[test]
    fn selection_examples() {
        let ests: Vec<DagEstimate> = (1..=10)
            .map(|s| estimate(2, s as f64, vec![]))
            .collect();
        assert_eq!(select_top_orderings(&ests, 0.1).unwrap(), vec![0]);
        assert_eq!(select_top_orderings(&ests, 1.0).unwrap().len(), 10);
        let tied: Vec<DagEstimate> = (0..5).map(|_| estimate(2, 3.0, vec![])).collect();
        assert_eq!(select_top_orderings(&tied, 0.2).unwrap().len(), 5);
        assert!(select_top_orderings(&[], 0.1).is_err());
        assert!(select_top_orderings(&ests, 0.0).is_err());
        assert!(select_top_orderings(&ests, 1.1).is_err());
    }

    #[test]
    fn selection_keeps_boundary_ties() {
        let scores = [1.0, 2.0, 2.0, 2.0, 9.0];
        let ests: Vec<DagEstimate> = scores.iter().map(|&s| estimate(2, s, vec![])).collect();
        // ceil(0.4 * 5) = 2nd smallest = 2.0; all three 2.0s come along.
        assert_eq!(select_top_orderings(&ests, 0.4).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn consensus_worked_example() {
        let members = [
            estimate(2, 0.0, vec![(0, 1, 0.5)]),
            estimate(2, 0.0, vec![(0, 1, 0.3)]),
            estimate(2, 0.0, vec![(0, 1, -0.4)]),
            estimate(2, 0.0, vec![]),
        ];
        let refs: Vec<&DagEstimate> = members.iter().collect();
        let net = build_consensus(&refs, &labels(2)).unwrap();
        let (c, s, v) = net.cell(0, 1);
        assert!((c - 0.75).abs() < 1e-12);
        assert_eq!(s, 1);
        assert!((v - 0.3).abs() < 1e-12);
        // Absent edge.
        assert_eq!(net.cell(1, 0), (0.0, 0, 0.0));
    }

    #[test]
    fn opposite_signs_cancel() {
        let members = [
            estimate(2, 0.0, vec![(0, 1, 0.5)]),
            estimate(2, 0.0, vec![(0, 1, -0.5)]),
        ];
        let refs: Vec<&DagEstimate> = members.iter().collect();
        let net = build_consensus(&refs, &labels(2)).unwrap();
        let (c, s, v) = net.cell(0, 1);
        assert_eq!(c, 1.0);
        assert_eq!(s, 0);
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn consensus_matches_brute_force_on_random_members() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let p = rng.random_range(2..=8usize);
            let k = rng.random_range(1..=6usize);
            // Dense member matrices as the independent representation.
            let dense: Vec<Vec<f64>> = (0..k)
                .map(|_| {
                    (0..p * p)
                        .map(|idx| {
                            if idx / p != idx % p && rng.random::<f64>() < 0.3 {
                                rng.random_range(-1.0..1.0f64)
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect();
            let members: Vec<DagEstimate> = dense
                .iter()
                .map(|m| {
                    let weights = (0..p * p)
                        .filter(|&idx| m[idx] != 0.0)
                        .map(|idx| (idx / p, idx % p, m[idx]))
                        .collect();
                    estimate(p, 0.0, weights)
                })
                .collect();
            let refs: Vec<&DagEstimate> = members.iter().collect();
            let net = build_consensus(&refs, &labels(p)).unwrap();
            for idx in 0..p * p {
                let nonzero = dense.iter().filter(|m| m[idx] != 0.0).count();
                // f64::signum(0.0) is +1, so map zero explicitly.
                let sgn_sum: i64 = dense
                    .iter()
                    .map(|m| {
                        if m[idx] == 0.0 {
                            0
                        } else {
                            m[idx].signum() as i64
                        }
                    })
                    .sum();
                let mag: f64 = dense.iter().map(|m| m[idx].abs()).sum::<f64>() / k as f64;
                assert_eq!(net.confidence[idx], nonzero as f64 / k as f64);
                assert_eq!(net.sign[idx] as i64, sgn_sum.signum());
                assert!((net.magnitude[idx] - mag).abs() < 1e-12);
                // Structural invariants.
                if net.confidence[idx] == 0.0 {
                    assert_eq!(net.sign[idx], 0);
                    assert_eq!(net.magnitude[idx], 0.0);
                }
                let multiple = net.confidence[idx] * k as f64;
                assert!((multiple - multiple.round()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gene_set_mismatch_detected() {
        let a = estimate(2, 0.0, vec![]);
        let b = estimate(3, 0.0, vec![]);
        assert!(matches!(
            build_consensus(&[&a, &b], &labels(2)),
            Err(Error::GeneSetMismatch(3, 2))
        ));
    }

    #[test]
    fn threshold_boundary_and_nesting() {
        let members = [
            estimate(3, 0.0, vec![(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]),
            estimate(3, 0.0, vec![(0, 1, 1.0), (0, 2, 1.0)]),
            estimate(3, 0.0, vec![(0, 1, 1.0)]),
            estimate(3, 0.0, vec![(0, 1, 1.0)]),
        ];
        let refs: Vec<&DagEstimate> = members.iter().collect();
        let net = build_consensus(&refs, &labels(3)).unwrap();
        // confidences: (0,1)=1.0, (0,2)=0.5, (1,2)=0.25
        let at25 = threshold_edges(&net, 0.25).unwrap();
        assert_eq!(at25, vec![(0, 1), (0, 2), (1, 2)]);
        let at50 = threshold_edges(&net, 0.5).unwrap();
        assert_eq!(at50, vec![(0, 1), (0, 2)]);
        let at100 = threshold_edges(&net, 1.0).unwrap();
        assert_eq!(at100, vec![(0, 1)]);
        for e in &at100 {
            assert!(at50.contains(e));
        }
        for e in &at50 {
            assert!(at25.contains(e));
        }
        assert!(threshold_edges(&net, 0.0).is_err());
    }

    #[test]
    fn consensus_recovers_cycles() {
        let members = [
            estimate(2, 0.0, vec![(0, 1, 0.7)]),
            estimate(2, 0.0, vec![(1, 0, 0.7)]),
        ];
        let refs: Vec<&DagEstimate> = members.iter().collect();
        let net = build_consensus(&refs, &labels(2)).unwrap();
        let edges = threshold_edges(&net, 0.25).unwrap();
        assert!(edges.contains(&(0, 1)) && edges.contains(&(1, 0)));
    }

    #[test]
    fn consensus_tsv_lists_nonzero_cells() {
        let members = [
            estimate(2, 0.0, vec![(0, 1, 0.5)]),
            estimate(2, 0.0, vec![]),
        ];
        let refs: Vec<&DagEstimate> = members.iter().collect();
        let net = build_consensus(&refs, &labels(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("consensus.tsv");
        write_consensus_tsv(&net, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "source\ttarget\tconfidence\tsign\tmagnitude");
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "g1\tg2\t0.5\t1\t0.25");
    }
}
