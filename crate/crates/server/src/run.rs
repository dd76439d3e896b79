use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use netcoord_core::engine::{LogWriter, RunConfig};
use netcoord_core::session::{ConnId, Effect, Event, LogRecord, Session, SessionMessage, SessionOptions};
use tokio::sync::{mpsc, watch};
use tokio::time::Instant;

use crate::{Result, RunView};

pub enum RunInput {
    /// Registers where messages for `conn` go. Sent before its first event.
    Attach {
        conn: ConnId,
        outbox: mpsc::UnboundedSender<SessionMessage>,
    },
    Event(Event),
}

pub(crate) fn spawn(
    config: RunConfig,
    options: SessionOptions,
    log_path: PathBuf,
) -> Result<(mpsc::UnboundedSender<RunInput>, watch::Receiver<RunView>)> {
    let session = Session::open(config, options, 0)?;
    let writer = LogWriter::append(&log_path)?;
    let (tx, rx) = mpsc::unbounded_channel();
    let (view_tx, view_rx) = watch::channel(view_of(&session, &log_path));
    tokio::spawn(drive(session, writer, rx, view_tx, log_path));
    Ok((tx, view_rx))
}

fn view_of(s: &Session, log_path: &std::path::Path) -> RunView {
    RunView {
        run_id: s.run_id().to_string(),
        phase: s.phase().name(),
        trial: s.phase().trial(),
        n: s.n(),
        joined: s.joined(),
        connected: s.connected_nodes().len(),
        aborted: s.aborted().map(str::to_string),
        log_path: log_path.to_path_buf(),
        log: s.is_done().then(|| Arc::new(s.log().clone())),
    }
}

async fn drive<W: std::io::Write + Send + 'static>(
    mut session: Session,
    mut writer: LogWriter<W>,
    mut input: mpsc::UnboundedReceiver<RunInput>,
    view: watch::Sender<RunView>,
    log_path: PathBuf,
) {
    let start = Instant::now();
    let clock = |at: Instant| at.duration_since(start).as_millis() as u64;
    let mut outboxes: HashMap<ConnId, mpsc::UnboundedSender<SessionMessage>> = HashMap::new();
    let mut write_failed = false;

    loop {
        let wake = session
            .next_deadline()
            .map(|ms| start + Duration::from_millis(ms));
        let event = tokio::select! {
            received = input.recv() => match received {
                None => break,
                Some(RunInput::Attach { conn, outbox }) => {
                    outboxes.insert(conn, outbox);
                    continue;
                }
                Some(RunInput::Event(e)) => e,
            },
            _ = async { tokio::time::sleep_until(wake.expect("guarded")).await }, if wake.is_some() => Event::Tick,
        };
        let gone = match &event {
            Event::Disconnect { conn } => Some(*conn),
            _ => None,
        };
        let effects = session.handle(clock(Instant::now()), event);
        for effect in effects {
            match effect {
                Effect::Send { conn, message } => {
                    if let Some(out) = outboxes.get(&conn) {
                        let _ = out.send(message);
                    }
                }
                Effect::Record(record) => {
                    let run_id = session.run_id().to_string();
                    let written = match &record {
                        LogRecord::Meta(m) => writer.write_meta(m),
                        LogRecord::Document(d) => writer.write_document(&run_id, d),
                        LogRecord::Trial(t) => writer.write_trial(&run_id, t),
                    };
                    if let Err(e) = written {
                        if !write_failed {
                            log::error!("run {run_id}: cannot append to {}: {e}", log_path.display());
                        }
                        write_failed = true;
                    }
                }
            }
        }
        if let Some(conn) = gone {
            outboxes.remove(&conn);
        }
        view.send_replace(view_of(&session, &log_path));
    }
}
