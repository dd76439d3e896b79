use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::Context;
use netcoord_core::agents::{init_population, AgentParams, SeedPool};
use netcoord_core::engine::{simulate_run, LogWriter, RunConfig, Simulation, TweetCorpus, DEFAULT_TRIALS};
use netcoord_core::metrics::{format_float, write_metric_table, MetricSeries};
use netcoord_core::topology::StructureKind;

use crate::config::SimulateConfig;
use crate::output::write_atomic;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Number of players (even, >= 6 for rings).
    #[arg(long)]
    n: Option<usize>,
    /// `spatial_ring` or `homogeneous_complete`.
    #[arg(long)]
    structure: Option<String>,
    #[arg(long)]
    trials: Option<u32>,
    /// Independent runs; run r uses seed + r.
    #[arg(long, short = 'r')]
    repetitions: Option<usize>,
    /// Agent parameter file (TOML).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Seed-pool file.
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Tweet corpus (TSV with `phase` and `text`).
    #[arg(long)]
    tweets: Option<PathBuf>,
    /// Run id prefix.
    #[arg(long)]
    prefix: Option<String>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, short = 'j')]
    jobs: Option<usize>,
}

struct Summary {
    run_id: String,
    seed: u64,
    dominance: f64,
    entropy: f64,
}

pub fn run(a: Args, file: SimulateConfig, seed: u64, out: &Path) -> anyhow::Result<()> {
    let n = a.n.or(file.n).unwrap_or(20);
    let structure: StructureKind = a
        .structure
        .or(file.structure)
        .as_deref()
        .unwrap_or("spatial_ring")
        .parse()?;
    let trials = a.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS);
    let reps = a.repetitions.or(file.repetitions).unwrap_or(1);
    let prefix = a.prefix.or(file.prefix).unwrap_or_else(|| "sim".into());
    let params = match a.params.or(file.params) {
        Some(p) => AgentParams::load(&p).with_context(|| format!("agent parameters {}", p.display()))?,
        None => AgentParams::default(),
    };
    let pool = match a.pool.or(file.pool) {
        Some(p) => SeedPool::load(&p).with_context(|| format!("seed pool {}", p.display()))?,
        None => SeedPool::bundled(),
    };
    let tweets = match a.tweets.or(file.tweets) {
        Some(p) => TweetCorpus::load(&p).with_context(|| format!("tweet corpus {}", p.display()))?,
        None => TweetCorpus::bundled(),
    };
    if reps == 0 {
        return Err(crate::config::usage("repetitions must be >= 1"));
    }

    let configs: Vec<RunConfig> = (0..reps)
        .map(|r| {
            let id = format!("{prefix}-{}-{}", structure.as_str(), r + 1);
            RunConfig::new(id, n, structure, seed.wrapping_add(r as u64)).with_trials(trials)
        })
        .collect();
    configs[0].topology()?;

    let jobs = a
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |p| p.get()))
        .clamp(1, reps);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<anyhow::Result<Summary>>>> = Mutex::new((0..reps).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= reps {
                    break;
                }
                let r = one_run(&configs[i], params, &pool, &tweets, out);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });

    println!("run_id\tseed\tfinal_dominance\tfinal_entropy");
    for r in results.into_inner().expect("results lock") {
        let s = r.expect("every run was attempted")?;
        println!("{}\t{}\t{}\t{}", s.run_id, s.seed, format_float(s.dominance), format_float(s.entropy));
    }
    Ok(())
}

fn one_run(
    config: &RunConfig,
    params: AgentParams,
    pool: &SeedPool,
    tweets: &TweetCorpus,
    out: &Path,
) -> anyhow::Result<Summary> {
    let agents = init_population(config.n, pool, params, &mut config.population_rng());
    let log = simulate_run(
        config,
        Simulation {
            agents,
            pool,
            corpus: Some(tweets),
        },
    )?;
    let series = MetricSeries::from_log(&log)?;
    let id = &config.run_id;
    write_atomic(&out.join(format!("{id}.jsonl")), |w| LogWriter::new(w).write_log(&log))?;
    write_atomic(&out.join(format!("{id}.metrics.csv")), |w| {
        write_metric_table(w, std::slice::from_ref(&series))
    })?;
    let last = series.last().expect("a run has at least one trial");
    Ok(Summary {
        run_id: id.clone(),
        seed: config.seed,
        dominance: last.dominance,
        entropy: last.entropy,
    })
}
