use std::path::{Path, PathBuf};

use anyhow::Context;
use netcoord_core::causal::{
    claim_counts, group_diff_matrices, write_claim_counts, Corpus, Extractor, TopicLexicon, TriggerLexicon, NARRATIVE,
};
use netcoord_core::engine::load_log;

use crate::output::write_atomic;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Document table (TSV with `phase`, `group`, `text`; optional `run`, `node`).
    #[arg(long = "corpus")]
    corpora: Vec<PathBuf>,
    /// Run logs whose documents join the corpus, grouped by structure.
    #[arg(long = "log")]
    logs: Vec<PathBuf>,
    /// Topic lexicon (TOML); the bundled lexicon when absent.
    #[arg(long)]
    topics: Option<PathBuf>,
    /// Also extract from the bundled narrative. Implied when no corpus or log is given.
    #[arg(long)]
    narrative: bool,
}

pub fn run(a: Args, out: &Path) -> anyhow::Result<()> {
    let topics = match &a.topics {
        Some(p) => TopicLexicon::load(p).with_context(|| format!("topic lexicon {}", p.display()))?,
        None => TopicLexicon::default(),
    };
    let ex = Extractor::new(TriggerLexicon::default(), topics);

    let mut corpus = Corpus::default();
    for p in &a.corpora {
        corpus.extend(Corpus::load_tsv(p).with_context(|| format!("corpus {}", p.display()))?);
    }
    for p in &a.logs {
        let loaded = load_log(p).with_context(|| format!("run log {}", p.display()))?;
        corpus.extend(Corpus::from_run_log(&loaded.log));
    }
    let with_narrative = a.narrative || (a.corpora.is_empty() && a.logs.is_empty());

    write_atomic(&out.join("claims.tsv"), |w| {
        let mut t = csv::WriterBuilder::new().delimiter(b'\t').from_writer(w);
        t.write_record(["source", "doc", "phase", "cause_topic", "effect_topic", "trigger", "cause_span", "effect_span"])?;
        let mut rows = Vec::new();
        if with_narrative {
            rows.push(("narrative".to_string(), "0".to_string(), String::new(), NARRATIVE));
        }
        for (i, d) in corpus.docs.iter().enumerate() {
            let doc = d.node.map_or_else(|| format!("doc{i}"), |n| n.to_string());
            rows.push((d.run.clone(), doc, d.phase.as_str().to_string(), d.text.as_str()));
        }
        for (source, doc, phase, text) in rows {
            for c in ex.extract(text) {
                t.write_record([
                    &source,
                    &doc,
                    &phase,
                    &c.cause_topic,
                    &c.effect_topic,
                    &c.trigger,
                    &c.cause_span,
                    &c.effect_span,
                ])?;
            }
        }
        t.flush()?;
        Ok(())
    })?;

    if !corpus.docs.is_empty() {
        for (group, m) in group_diff_matrices(&corpus, &ex) {
            let name: String = group
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
                .collect();
            write_atomic(&out.join(format!("diff_{name}.tsv")), |w| m.write_tsv(w))?;
            println!("{group}: post - pre matrix written ({} topics)", m.n());
        }
        let counts = claim_counts(&corpus, &ex);
        write_atomic(&out.join("claim_counts.csv"), |w| write_claim_counts(&counts, w))?;
    }
    println!("claims written to {}", out.join("claims.tsv").display());
    Ok(())
}
