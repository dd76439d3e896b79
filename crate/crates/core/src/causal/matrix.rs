use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use super::Extractor;
use crate::engine::{Phase, RunLog};
use crate::error::{Error, Result};
use crate::topology::StructureKind;

/// One tweet document and where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusDoc {
    pub run: String,
    /// Grouping for averaged differences, normally the network structure.
    pub group: String,
    pub node: Option<usize>,
    pub phase: Phase,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub docs: Vec<CorpusDoc>,
}

impl Corpus {
    /// Documents of a run log, grouped by the run's structure.
    pub fn from_run_log(log: &RunLog) -> Corpus {
        let run = log.run_id().unwrap_or("unknown").to_string();
        let group = log
            .meta
            .as_ref()
            .map_or("unknown", |m| m.config.structure.as_str())
            .to_string();
        Corpus {
            docs: log
                .documents
                .iter()
                .map(|d| CorpusDoc {
                    run: run.clone(),
                    group: group.clone(),
                    node: Some(d.node),
                    phase: d.phase,
                    text: d.tweet.clone(),
                })
                .collect(),
        }
    }

    pub fn extend(&mut self, other: Corpus) {
        self.docs.extend(other.docs);
    }

    /// Tab-delimited text with a header naming at least `phase`, `group`
    /// and `text`; optional `run` and `node` columns. Without a `run`
    /// column each group counts as a single run.
    pub fn parse_tsv(text: &str) -> Result<Corpus> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .quoting(false)
            .flexible(false)
            .from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h.trim() == name);
        let need = |name: &str| col(name).ok_or_else(|| Error::Parse(format!("corpus table lacks a `{name}` column")));
        let (phase_i, group_i, text_i) = (need("phase")?, need("group")?, need("text")?);
        let (run_i, node_i) = (col("run"), col("node"));
        let mut docs = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            let row = line + 2;
            let phase: Phase = rec[phase_i]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("corpus row {row}: bad phase `{}`", &rec[phase_i])))?;
            let group = rec[group_i].trim().to_string();
            let node = match node_i {
                Some(i) => Some(
                    rec[i]
                        .trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("corpus row {row}: bad node `{}`", &rec[i])))?,
                ),
                None => None,
            };
            docs.push(CorpusDoc {
                run: run_i.map_or_else(|| group.clone(), |i| rec[i].trim().to_string()),
                group,
                node,
                phase,
                text: rec[text_i].to_string(),
            });
        }
        Ok(Corpus { docs })
    }

    pub fn load_tsv(path: &Path) -> Result<Corpus> {
        Corpus::parse_tsv(&std::fs::read_to_string(path)?)
    }

    pub fn groups(&self) -> BTreeSet<&str> {
        self.docs.iter().map(|d| d.group.as_str()).collect()
    }
}

/// Square matrix over cause (rows) × effect (columns) topic labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicMatrix {
    labels: Vec<String>,
    cells: Vec<f64>,
}

impl TopicMatrix {
    pub fn zeros(labels: Vec<String>) -> Self {
        let n = labels.len();
        TopicMatrix {
            labels,
            cells: vec![0.0; n * n],
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn get(&self, cause: &str, effect: &str) -> Option<f64> {
        Some(self.cells[self.index(cause)? * self.n() + self.index(effect)?])
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.n() + j]
    }

    fn bump(&mut self, cause: &str, effect: &str) {
        let (Some(i), Some(j)) = (self.index(cause), self.index(effect)) else {
            return;
        };
        let n = self.n();
        self.cells[i * n + j] += 1.0;
    }

    pub fn is_zero(&self) -> bool {
        self.cells.iter().all(|v| *v == 0.0)
    }

    /// Tab-delimited with a `cause` corner cell, effect labels across and
    /// cause labels down.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "cause")?;
        for l in &self.labels {
            write!(out, "\t{l}")?;
        }
        writeln!(out)?;
        for (i, l) in self.labels.iter().enumerate() {
            write!(out, "{l}")?;
            for j in 0..self.n() {
                write!(out, "\t{}", self.at(i, j))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Number of documents claiming each directed topic pair; a document adds
/// at most one to any cell.
pub fn claim_matrix<'a, I>(docs: I, extractor: &Extractor) -> TopicMatrix
where
    I: IntoIterator<Item = &'a str>,
{
    let mut m = TopicMatrix::zeros(extractor.labels());
    for doc in docs {
        let pairs: BTreeSet<(String, String)> = extractor
            .extract(doc)
            .into_iter()
            .map(|c| (c.cause_topic, c.effect_topic))
            .collect();
        for (c, e) in &pairs {
            m.bump(c, e);
        }
    }
    m
}

/// Cellwise (post − pre) / groups.
pub fn diff_matrix(post: &TopicMatrix, pre: &TopicMatrix, groups: usize) -> Result<TopicMatrix> {
    if post.labels != pre.labels {
        return Err(Error::Shape(format!(
            "topic index mismatch: {} post labels vs {} pre labels",
            post.n(),
            pre.n()
        )));
    }
    if groups == 0 {
        return Err(Error::InvalidConfig("group count must be positive".into()));
    }
    let g = groups as f64;
    Ok(TopicMatrix {
        labels: post.labels.clone(),
        cells: post.cells.iter().zip(&pre.cells).map(|(a, b)| (a - b) / g).collect(),
    })
}

/// Post − pre matrix per group, averaged over that group's runs.
pub fn group_diff_matrices(corpus: &Corpus, extractor: &Extractor) -> BTreeMap<String, TopicMatrix> {
    let mut out = BTreeMap::new();
    for group in corpus.groups() {
        let docs: Vec<&CorpusDoc> = corpus.docs.iter().filter(|d| d.group == group).collect();
        let runs: BTreeSet<&str> = docs.iter().map(|d| d.run.as_str()).collect();
        let of_phase = |p: Phase| docs.iter().filter(move |d| d.phase == p).map(|d| d.text.as_str());
        let post = claim_matrix(of_phase(Phase::Post), extractor);
        let pre = claim_matrix(of_phase(Phase::Pre), extractor);
        let diff = diff_matrix(&post, &pre, runs.len()).expect("same extractor labels and at least one run");
        out.insert(group.to_string(), diff);
    }
    out
}

/// Claims extracted from one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimCount {
    pub run: String,
    pub subject: String,
    pub group: String,
    pub phase: Phase,
    pub claims: usize,
}

pub fn claim_counts(corpus: &Corpus, extractor: &Extractor) -> Vec<ClaimCount> {
    corpus
        .docs
        .iter()
        .enumerate()
        .map(|(i, d)| ClaimCount {
            run: d.run.clone(),
            subject: match d.node {
                Some(n) => format!("{}:{n}", d.run),
                None => format!("{}:doc{i}", d.run),
            },
            group: d.group.clone(),
            phase: d.phase,
            claims: extractor.extract(&d.text).len(),
        })
        .collect()
}

/// Comma-delimited count table for the hurdle model: `run_id, subject,
/// group, post, [spatial,] claims`. The `spatial` indicator is written when
/// every group names a network structure.
pub fn write_claim_counts<W: Write>(counts: &[ClaimCount], out: W) -> Result<()> {
    let structures: Option<Vec<StructureKind>> = counts.iter().map(|c| c.group.parse().ok()).collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["run_id", "subject", "group", "post"];
    if structures.is_some() {
        header.push("spatial");
    }
    header.push("claims");
    w.write_record(&header)?;
    for (i, c) in counts.iter().enumerate() {
        let mut rec = vec![
            c.run.clone(),
            c.subject.clone(),
            c.group.clone(),
            u8::from(c.phase == Phase::Post).to_string(),
        ];
        if let Some(s) = &structures {
            rec.push(s[i].spatial_indicator().to_string());
        }
        rec.push(c.claims.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
