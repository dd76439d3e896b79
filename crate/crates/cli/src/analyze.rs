use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use netcoord_core::engine::{load_log, RunLog};
use netcoord_core::metrics::{colormap_export, format_float, local_clusters, write_metric_table, write_pair_table, MetricSeries};
use netcoord_core::Error;

use crate::output::write_atomic;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Run logs (JSON lines).
    #[arg(required = true)]
    logs: Vec<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
#[error("{failed} of {total} logs could not be analyzed")]
pub struct LogErrors {
    failed: usize,
    total: usize,
}

pub fn run(a: Args, out: &Path) -> anyhow::Result<()> {
    let mut logs = Vec::new();
    let mut failed = 0;
    let mut seen = BTreeSet::new();
    for path in &a.logs {
        match read(path) {
            Ok(log) => {
                let id = log.run_id().unwrap_or_default().to_string();
                if !seen.insert(id.clone()) {
                    eprintln!("{}: run `{id}` appears in more than one log", path.display());
                    failed += 1;
                    continue;
                }
                logs.push(log);
            }
            Err(e) => {
                eprintln!("{e}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(LogErrors {
            failed,
            total: a.logs.len(),
        }
        .into());
    }

    let series: Vec<MetricSeries> = logs.iter().map(MetricSeries::from_log).collect::<Result<_, _>>()?;
    let refs: Vec<&RunLog> = logs.iter().collect();
    write_atomic(&out.join("metrics.csv"), |w| write_metric_table(w, &series))?;
    write_atomic(&out.join("pairs.csv"), |w| write_pair_table(w, &refs))?;
    write_atomic(&out.join("clusters.csv"), |w| write_clusters(w, &refs))?;
    for log in &logs {
        let id = log.run_id().unwrap_or_default();
        let map = colormap_export(log)?;
        write_atomic(&out.join(format!("{id}.colormap.tsv")), |w| map.write_labels(w))?;
        write_atomic(&out.join(format!("{id}.colormap_ids.tsv")), |w| map.write_ids(w))?;
    }

    println!("run_id\tstructure\ttrials\tfinal_dominance\tfinal_entropy");
    for s in &series {
        if let Some(last) = s.last() {
            println!(
                "{}\t{}\t{}\t{}\t{}",
                s.run_id,
                s.structure,
                s.points.len(),
                format_float(last.dominance),
                format_float(last.entropy)
            );
        }
    }
    Ok(())
}

/// Loads and validates one log; the error text always names the file.
fn read(path: &Path) -> Result<RunLog, String> {
    let named = |e: Error| match e {
        Error::LogLoad { .. } | Error::SchemaVersion { .. } => e.to_string(),
        other => format!("{}: {other}", path.display()),
    };
    let loaded = load_log(path).map_err(named)?;
    for w in &loaded.warnings {
        log::warn!("{w}");
    }
    let log = loaded.log;
    if log.meta.is_none() {
        return Err(format!("{}: no meta record", path.display()));
    }
    log.validate().map_err(named)?;
    Ok(log)
}

/// Same-hashtag clusters at each run's final trial.
fn write_clusters(out: &mut dyn std::io::Write, logs: &[&RunLog]) -> netcoord_core::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run_id", "trial", "hashtag", "size", "nodes"])?;
    for log in logs {
        let meta = log.meta.as_ref().expect("validated logs have meta");
        let topo = meta.config.topology()?;
        let Some(&last) = log.trials_by_index().keys().last() else {
            continue;
        };
        for c in local_clusters(&log.responses_at(last, topo.n()), &topo)? {
            let nodes: Vec<String> = c.nodes.iter().map(ToString::to_string).collect();
            w.write_record([
                meta.config.run_id.clone(),
                last.to_string(),
                c.hashtag.clone(),
                c.size().to_string(),
                nodes.join(" "),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
