//! Per-trial and per-run measurements over run logs.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::{RunLog, TrialRecord};
use crate::error::{Error, Result};
use crate::topology::{NodeId, StructureKind, Topology};

/// Colormap cell for a non-response.
pub const NON_RESPONSE_CELL: &str = "—";
pub const COLORMAP_PREFIX_CHARS: usize = 5;

/// Hashtag counts across all players on one trial. The empty string is the
/// non-response token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseDistribution {
    pub trial: u32,
    pub counts: BTreeMap<String, usize>,
    pub total: usize,
}

impl ResponseDistribution {
    pub fn from_responses<S: AsRef<str>>(trial: u32, responses: impl IntoIterator<Item = S>) -> Self {
        let mut counts = BTreeMap::new();
        let mut total = 0;
        for r in responses {
            *counts.entry(r.as_ref().to_string()).or_insert(0) += 1;
            total += 1;
        }
        ResponseDistribution { trial, counts, total }
    }

    pub fn from_counts(trial: u32, counts: impl IntoIterator<Item = (String, usize)>) -> Self {
        let counts: BTreeMap<String, usize> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
        let total = counts.values().sum();
        ResponseDistribution { trial, counts, total }
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.total == 0 {
            return Err(Error::Domain(format!("trial {}: empty response distribution", self.trial)));
        }
        Ok(())
    }

    /// Share of players giving the most common real (non-empty) response.
    pub fn dominant_proportion(&self) -> Result<f64> {
        self.check_nonempty()?;
        let best = self
            .counts
            .iter()
            .filter(|(tag, _)| !tag.is_empty())
            .map(|(_, &c)| c)
            .max()
            .ok_or_else(|| Error::Domain(format!("trial {}: no real responses", self.trial)))?;
        Ok(best as f64 / self.total as f64)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> Result<f64> {
        self.check_nonempty()?;
        let total = self.total as f64;
        let h: f64 = self
            .counts
            .values()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / total;
                -p * p.ln()
            })
            .sum();
        Ok(h.max(0.0))
    }
}

/// Fraction of pairs that coordinated; zero for an empty slice.
pub fn coordination_rate(records: &[&TrialRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.matched).count() as f64 / records.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub trial: u32,
    pub dominance: f64,
    pub entropy: f64,
    pub coordination_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub run_id: String,
    pub structure: StructureKind,
    pub n: usize,
    pub points: Vec<TrialMetrics>,
}

impl MetricSeries {
    /// Derives the per-trial series from a complete log. Trials in which no
    /// player produced a real response are recorded with dominance 0.
    pub fn from_log(log: &RunLog) -> Result<Self> {
        let meta = log
            .meta
            .as_ref()
            .ok_or_else(|| Error::Domain("run log has no meta record".into()))?;
        let n = meta.config.n;
        let mut points = Vec::new();
        for (trial, records) in log.trials_by_index() {
            let dist = distribution_of(trial, &records, n);
            let dominance = match dist.dominant_proportion() {
                Ok(d) => d,
                Err(Error::Domain(_)) if dist.total > 0 => 0.0,
                Err(e) => return Err(e),
            };
            points.push(TrialMetrics {
                trial,
                dominance,
                entropy: dist.entropy()?,
                coordination_rate: coordination_rate(&records),
            });
        }
        Ok(MetricSeries {
            run_id: meta.config.run_id.clone(),
            structure: meta.config.structure,
            n,
            points,
        })
    }

    pub fn first(&self) -> Option<&TrialMetrics> {
        self.points.first()
    }

    pub fn last(&self) -> Option<&TrialMetrics> {
        self.points.last()
    }
}

fn distribution_of(trial: u32, records: &[&TrialRecord], n: usize) -> ResponseDistribution {
    let mut responses = vec![""; n];
    for r in records {
        responses[r.node_a] = &r.norm_a;
        responses[r.node_b] = &r.norm_b;
    }
    ResponseDistribution::from_responses(trial, responses)
}

pub const METRIC_TABLE_HEADER: [&str; 7] = [
    "run_id",
    "trial",
    "dominance",
    "entropy",
    "coordination_rate",
    "spatial",
    "size",
];

/// Writes series as a delimited table, one row per run and trial.
pub fn write_metric_table<W: Write>(out: W, series: &[MetricSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRIC_TABLE_HEADER)?;
    for s in series {
        for p in &s.points {
            w.write_record([
                s.run_id.clone(),
                p.trial.to_string(),
                format_float(p.dominance),
                format_float(p.entropy),
                format_float(p.coordination_rate),
                format_float(s.structure.spatial_indicator()),
                s.n.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub const PAIR_TABLE_HEADER: [&str; 7] = [
    "run_id", "trial", "node_a", "node_b", "matched", "spatial", "size",
];

/// One row per pair and trial, the input of the pairwise coordination model.
pub fn write_pair_table<W: Write>(out: W, logs: &[&RunLog]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PAIR_TABLE_HEADER)?;
    for log in logs {
        let meta = log
            .meta
            .as_ref()
            .ok_or_else(|| Error::Domain("run log has no meta record".into()))?;
        for r in &log.trials {
            w.write_record([
                meta.config.run_id.clone(),
                r.trial.to_string(),
                r.node_a.to_string(),
                r.node_b.to_string(),
                u8::from(r.matched).to_string(),
                format_float(meta.config.structure.spatial_indicator()),
                meta.config.n.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub hashtag: String,
    pub nodes: Vec<NodeId>,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.nodes.len()
    }
}

/// Maximal connected groups of nodes sharing one canonical hashtag.
/// Non-responding nodes form singleton clusters. Output is sorted by
/// descending size, then by smallest node id.
pub fn local_clusters<S: AsRef<str>>(responses: &[S], topo: &Topology) -> Result<Vec<Cluster>> {
    let n = topo.n();
    if responses.len() != n {
        return Err(Error::Shape(format!(
            "{} responses for a {n}-node topology",
            responses.len()
        )));
    }
    let label = |i: usize| responses[i].as_ref();
    let mut seen = vec![false; n];
    let mut clusters = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let tag = label(start);
        let mut nodes = vec![start];
        if !tag.is_empty() {
            let mut stack = vec![start];
            while let Some(u) = stack.pop() {
                for &v in topo.neighbors(u) {
                    if !seen[v] && label(v) == tag {
                        seen[v] = true;
                        nodes.push(v);
                        stack.push(v);
                    }
                }
            }
        }
        nodes.sort_unstable();
        clusters.push(Cluster {
            hashtag: tag.to_string(),
            nodes,
        });
    }
    clusters.sort_by(|a, b| b.size().cmp(&a.size()).then(a.nodes[0].cmp(&b.nodes[0])));
    Ok(clusters)
}

/// Node-by-trial grid of truncated responses plus integer label ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Colormap {
    pub trials: Vec<u32>,
    /// `cells[node][column]`
    pub cells: Vec<Vec<String>>,
    /// Label ids aligned with `cells`; 0 is the non-response, labels are
    /// numbered from 1 in lexicographic order.
    pub ids: Vec<Vec<usize>>,
    pub labels: Vec<String>,
}

pub fn colormap_cell(canonical: &str) -> String {
    if canonical.is_empty() {
        NON_RESPONSE_CELL.to_string()
    } else {
        canonical.chars().take(COLORMAP_PREFIX_CHARS).collect()
    }
}

pub fn colormap_export(log: &RunLog) -> Result<Colormap> {
    let n = log
        .meta
        .as_ref()
        .map(|m| m.config.n)
        .ok_or_else(|| Error::Domain("run log has no meta record".into()))?;
    let trials: Vec<u32> = log.trials_by_index().keys().copied().collect();
    let mut cells = vec![Vec::with_capacity(trials.len()); n];
    for &t in &trials {
        for (node, resp) in log.responses_at(t, n).iter().enumerate() {
            cells[node].push(colormap_cell(resp));
        }
    }
    let mut labels: Vec<String> = cells
        .iter()
        .flatten()
        .filter(|c| c.as_str() != NON_RESPONSE_CELL)
        .cloned()
        .collect();
    labels.sort();
    labels.dedup();
    let ids = cells
        .iter()
        .map(|row| {
            row.iter()
                .map(|c| labels.binary_search(c).map_or(0, |i| i + 1))
                .collect()
        })
        .collect();
    Ok(Colormap {
        trials,
        cells,
        ids,
        labels,
    })
}

impl Colormap {
    fn write_grid<W: Write, T: ToString>(&self, out: W, rows: &[Vec<T>]) -> Result<()> {
        let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
        let mut header = vec!["node".to_string()];
        header.extend(self.trials.iter().map(u32::to_string));
        w.write_record(&header)?;
        for (node, row) in rows.iter().enumerate() {
            let mut rec = vec![node.to_string()];
            rec.extend(row.iter().map(ToString::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_labels<W: Write>(&self, out: W) -> Result<()> {
        self.write_grid(out, &self.cells)
    }

    pub fn write_ids<W: Write>(&self, out: W) -> Result<()> {
        self.write_grid(out, &self.ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(counts: &[usize]) -> ResponseDistribution {
        ResponseDistribution::from_counts(
            1,
            counts.iter().enumerate().map(|(i, &c)| (format!("h{i}"), c)),
        )
    }

    /// Entropy by explicit per-player summation: each player contributes
    /// -(1/total) ln(share of their label).
    fn entropy_oracle(counts: &[usize]) -> f64 {
        let total: usize = counts.iter().sum();
        let mut h = 0.0;
        for &c in counts {
            for _ in 0..c {
                h -= (c as f64 / total as f64).ln() / total as f64;
            }
        }
        h
    }

    #[test]
    fn dominance_examples() {
        assert_eq!(dist(&[12, 8]).dominant_proportion().unwrap(), 0.6);
        assert_eq!(dist(&[20]).dominant_proportion().unwrap(), 1.0);
        assert_eq!(dist(&[1; 20]).dominant_proportion().unwrap(), 0.05);
        assert!(matches!(dist(&[]).dominant_proportion(), Err(Error::Domain(_))));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(dist(&[20]).entropy().unwrap(), 0.0);
        assert!((dist(&[1, 1, 1, 1]).entropy().unwrap() - 4f64.ln()).abs() < 1e-12);
        let mixed = dist(&[3, 1]).entropy().unwrap();
        assert!((mixed - entropy_oracle(&[3, 1])).abs() < 1e-12);
        assert!((mixed - 0.562_335_144_618_808_3).abs() < 1e-12);
        assert!(dist(&[]).entropy().is_err());
    }

    #[test]
    fn silence_is_never_dominant() {
        let d = ResponseDistribution::from_responses(1, ["", "", "", "a", "b"]);
        assert_eq!(d.dominant_proportion().unwrap(), 0.2);
        assert_eq!(d.total, 5);
        let silent = ResponseDistribution::from_responses(1, ["", ""]);
        assert!(silent.dominant_proportion().is_err());
    }

    #[test]
    fn coordination_examples() {
        let rec = |m: bool| TrialRecord {
            trial: 1,
            node_a: 0,
            node_b: 1,
            resp_a: String::new(),
            resp_b: String::new(),
            norm_a: String::new(),
            norm_b: String::new(),
            matched: m,
            cum_points_a: 0,
            cum_points_b: 0,
        };
        let recs: Vec<TrialRecord> = (0..10).map(|i| rec(i < 4)).collect();
        let refs: Vec<&TrialRecord> = recs.iter().collect();
        assert!((coordination_rate(&refs) - 0.4).abs() < 1e-15);
        let all: Vec<TrialRecord> = (0..3).map(|_| rec(true)).collect();
        assert_eq!(coordination_rate(&all.iter().collect::<Vec<_>>()), 1.0);
        let none: Vec<TrialRecord> = (0..3).map(|_| rec(false)).collect();
        assert_eq!(coordination_rate(&none.iter().collect::<Vec<_>>()), 0.0);
    }

    /// Connected components of the same-label induced subgraph by repeated
    /// label propagation over the edge list.
    fn components_oracle(labels: &[&str], topo: &Topology) -> Vec<Vec<usize>> {
        let n = labels.len();
        let mut comp: Vec<usize> = (0..n).collect();
        loop {
            let mut changed = false;
            for (a, b) in topo.edges() {
                if labels[a] == labels[b] && !labels[a].is_empty() {
                    let m = comp[a].min(comp[b]);
                    if comp[a] != m || comp[b] != m {
                        comp[a] = m;
                        comp[b] = m;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, c) in comp.into_iter().enumerate() {
            groups.entry(c).or_default().push(i);
        }
        let mut out: Vec<Vec<usize>> = groups.into_values().collect();
        out.sort();
        out
    }

    fn cluster_sets(c: &[Cluster]) -> Vec<Vec<usize>> {
        let mut v: Vec<Vec<usize>> = c.iter().map(|c| c.nodes.clone()).collect();
        v.sort();
        v
    }

    #[test]
    fn cluster_examples() {
        let ring = Topology::ring(6).unwrap();
        let c = local_clusters(&["a", "a", "a", "b", "b", "b"], &ring).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!((c[0].hashtag.as_str(), c[0].nodes.clone()), ("a", vec![0, 1, 2]));
        assert_eq!((c[1].hashtag.as_str(), c[1].nodes.clone()), ("b", vec![3, 4, 5]));

        let k = Topology::complete(8).unwrap();
        let c = local_clusters(&["x"; 8], &k).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].size(), 8);

        let alt = ["a", "b", "a", "b", "a", "b"];
        let c = local_clusters(&alt, &ring).unwrap();
        assert_eq!(cluster_sets(&c), components_oracle(&alt, &ring));
        assert_eq!(cluster_sets(&c), vec![vec![0, 2, 4], vec![1, 3, 5]]);
    }

    #[test]
    fn clusters_reject_wrong_length() {
        let ring = Topology::ring(6).unwrap();
        assert!(matches!(local_clusters(&["a"; 5], &ring), Err(Error::Shape(_))));
    }

    #[test]
    fn colormap_cells() {
        assert_eq!(colormap_cell("nucleardisaster"), "nucle");
        assert_eq!(colormap_cell(""), "—");
        assert_eq!(colormap_cell("abc"), "abc");
    }

    proptest! {
        #[test]
        fn entropy_bounds_and_zero_iff_consensus(counts in proptest::collection::vec(0usize..12, 1..8)) {
            prop_assume!(counts.iter().sum::<usize>() > 0);
            let d = dist(&counts);
            let h = d.entropy().unwrap();
            let dom = d.dominant_proportion().unwrap();
            let total = d.total as f64;
            prop_assert!(h >= 0.0);
            prop_assert!(h <= total.ln() + 1e-12);
            prop_assert_eq!(h.abs() < 1e-15, dom == 1.0);
            prop_assert!((h - entropy_oracle(&counts)).abs() < 1e-9);
            let all_distinct = counts.iter().all(|&c| c <= 1);
            prop_assert_eq!((h - total.ln()).abs() < 1e-12, all_distinct);
        }

        #[test]
        fn dominance_invariant_under_relabeling(counts in proptest::collection::vec(1usize..10, 1..8), shift in 0usize..8) {
            let d = dist(&counts);
            let relabeled = ResponseDistribution::from_counts(
                1,
                counts.iter().enumerate().map(|(i, &c)| (format!("z{}", (i + shift) * 7), c)),
            );
            prop_assert_eq!(d.dominant_proportion().unwrap(), relabeled.dominant_proportion().unwrap());
            prop_assert!((d.entropy().unwrap() - relabeled.entropy().unwrap()).abs() < 1e-12);
        }

        #[test]
        fn clusters_partition_nodes(labels in proptest::collection::vec(0u8..3, 10), complete in any::<bool>()) {
            let topo = if complete { Topology::complete(10).unwrap() } else { Topology::ring(10).unwrap() };
            let names: Vec<&str> = labels.iter().map(|&l| ["a", "b", ""][l as usize]).collect();
            let c = local_clusters(&names, &topo).unwrap();
            prop_assert_eq!(c.iter().map(Cluster::size).sum::<usize>(), 10);
            let mut all: Vec<usize> = c.iter().flat_map(|c| c.nodes.clone()).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..10).collect::<Vec<_>>());
            prop_assert_eq!(cluster_sets(&c), components_oracle(&names, &topo));
        }
    }
}
