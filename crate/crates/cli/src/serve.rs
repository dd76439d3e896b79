use std::io::Write;
use std::path::{Path, PathBuf};

use netcoord_core::engine::RunConfig;
use netcoord_core::session::SessionOptions;
use netcoord_server::bot::{run_bot, BotConfig};
use netcoord_server::{bind_address, Server};

use crate::config::{usage, ServeConfig};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Listen address; defaults to the config file, then $NETCOORD_BIND, then 127.0.0.1:8080.
    #[arg(long)]
    bind: Option<String>,
    /// Directory for run logs; defaults to the output directory.
    #[arg(long)]
    log_dir: Option<PathBuf>,
    /// Exit once every configured run is done instead of serving until interrupted.
    #[arg(long)]
    exit_when_done: bool,
}

pub fn run(a: Args, file: ServeConfig, seed: u64, out: &Path) -> anyhow::Result<()> {
    if file.runs.is_empty() {
        return Err(usage("serve needs a config file with at least one [[serve.runs]] entry"));
    }
    let bind = a.bind.or(file.bind.clone()).unwrap_or_else(bind_address);
    let log_dir = a.log_dir.or(file.log_dir.clone()).unwrap_or_else(|| out.to_path_buf());
    let mut options = SessionOptions::default();
    if let Some(s) = file.lobby_timeout_secs {
        options.lobby_timeout_ms = s * 1000;
    }
    if let Some(s) = file.document_deadline_secs {
        options.document_deadline_ms = s * 1000;
    }

    let mut configs = Vec::new();
    for (i, r) in file.runs.iter().enumerate() {
        let structure = r.structure.parse()?;
        let mut c = RunConfig::new(&r.run_id, r.n, structure, r.seed.unwrap_or(seed.wrapping_add(i as u64)));
        if let Some(t) = r.trials {
            c.trials = t;
        }
        if let Some(d) = r.response_deadline {
            c.response_deadline = d;
        }
        c.topology()?;
        configs.push(c);
    }

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let server = Server::new(&log_dir);
        for c in &configs {
            let view = server.open_run(c.clone(), options.clone())?;
            log::info!("run {} open: n={} seed={} log {}", c.run_id, c.n, c.seed, view.log_path.display());
        }
        let addr = server.spawn(&bind).await?;
        println!("listening on {addr}");
        std::io::stdout().flush()?;
        if a.exit_when_done {
            for c in &configs {
                let v = server.wait_done(&c.run_id).await?;
                match &v.aborted {
                    Some(reason) => println!("{} aborted: {reason}", v.run_id),
                    None => println!("{} completed", v.run_id),
                }
            }
        } else {
            tokio::signal::ctrl_c().await?;
        }
        Ok(())
    })
}

#[derive(Debug, clap::Args)]
pub struct BotArgs {
    /// Server WebSocket endpoint, e.g. ws://127.0.0.1:8080/ws.
    #[arg(long)]
    url: String,
    #[arg(long)]
    run_id: String,
    /// Number of bots; bot i uses seed + i.
    #[arg(long, default_value_t = 20)]
    count: usize,
}

pub fn run_bots(a: BotArgs, seed: u64) -> anyhow::Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    let reports = rt.block_on(async {
        let tasks: Vec<_> = (0..a.count)
            .map(|i| tokio::spawn(run_bot(BotConfig::new(&a.url, &a.run_id, seed.wrapping_add(i as u64)))))
            .collect();
        let mut reports = Vec::new();
        for t in tasks {
            reports.push(t.await?);
        }
        anyhow::Ok(reports)
    })?;
    println!("node\tstatus\tpoints");
    for r in reports {
        let r = r?;
        let node = r.node.map_or_else(|| "-".to_string(), |n| n.to_string());
        let status = r.status.map_or_else(|| "left".to_string(), |s| format!("{s:?}").to_lowercase());
        println!("{node}\t{status}\t{}", r.points);
    }
    Ok(())
}
