//! Live-run protocol as a pure state machine.
//!
//! A [`Session`] consumes events (client messages, disconnects, clock ticks)
//! stamped with a caller-supplied time in milliseconds and returns the
//! messages to send and the records to append to the run log. It performs no
//! I/O, so a transcript of events replays to the same effects.
//!
//! Phases run Lobby → Pre → Trial(1) … Trial(T) → Post → Done. A block ends
//! early once every connected node has responded; otherwise its deadline
//! ends it and missing responses stay missing.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::causal::NARRATIVE;
use crate::engine::{DocumentRecord, Phase, RunConfig, RunLog, RunMeta, RunState, TrialRecord};
use crate::error::{Error, Result};
use crate::topology::{Matching, NodeId};

pub const DEFAULT_LOBBY_TIMEOUT_MS: u64 = 300_000;
pub const DEFAULT_DOCUMENT_DEADLINE_MS: u64 = 600_000;
pub const ACCEPTED: &str = "accepted";
const TOKEN_BYTES: usize = 16;

/// Connection handle chosen by the transport.
pub type ConnId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    Join,
    Assigned,
    NarrativeShow,
    PreDocSubmit,
    TrialPrompt,
    HashtagSubmit,
    TrialReveal,
    PostDocSubmit,
    RunComplete,
    Error,
}

impl MessageKind {
    pub fn is_submit(self) -> bool {
        matches!(
            self,
            MessageKind::PreDocSubmit | MessageKind::HashtagSubmit | MessageKind::PostDocSubmit
        )
    }
}

/// One wire frame. `node` and `trial` serialize as `null` when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionMessage {
    pub kind: MessageKind,
    pub run_id: String,
    #[serde(default)]
    pub node: Option<NodeId>,
    #[serde(default)]
    pub trial: Option<u32>,
    #[serde(default)]
    pub payload: Value,
}

impl SessionMessage {
    pub fn new<P: Serialize>(kind: MessageKind, run_id: impl Into<String>, payload: P) -> Self {
        SessionMessage {
            kind,
            run_id: run_id.into(),
            node: None,
            trial: None,
            payload: serde_json::to_value(payload).expect("payload types serialize to JSON"),
        }
    }

    pub fn with_node(mut self, node: NodeId) -> Self {
        self.node = Some(node);
        self
    }

    pub fn with_trial(mut self, trial: u32) -> Self {
        self.trial = Some(trial);
        self
    }

    /// Decodes the payload; a missing payload decodes as an empty object.
    pub fn payload_as<T: DeserializeOwned>(&self) -> Result<T> {
        let v = match &self.payload {
            Value::Null => Value::Object(Default::default()),
            other => other.clone(),
        };
        Ok(serde_json::from_value(v)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("messages serialize to JSON")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JoinPayload {
    #[serde(default)]
    pub token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignedPayload {
    pub token: String,
    pub n: usize,
    pub trials: u32,
    pub phase: String,
    pub response_deadline_ms: u64,
    pub document_deadline_ms: u64,
    pub cumulative_points: u32,
    pub rejoined: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NarrativePayload {
    pub narrative_id: String,
    pub text: String,
    pub deadline_in_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentPayload {
    pub tweet: String,
    pub hashtags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AckPayload {
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialPromptPayload {
    pub deadline_in_ms: u64,
    pub cumulative_points: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HashtagPayload {
    pub hashtag: String,
}

/// What a node sees after a trial. A response is `None` when it was missing
/// or blank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialRevealPayload {
    pub own_response: Option<String>,
    pub partner_response: Option<String>,
    pub matched: bool,
    pub point: u32,
    pub cumulative_points: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunCompletePayload {
    pub status: RunStatus,
    pub reason: Option<String>,
    pub cumulative_points: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    UnknownRun,
    RunFull,
    RunOver,
    UnknownToken,
    AlreadyJoined,
    NotJoined,
    OutOfPhase,
    Duplicate,
    InvalidPayload,
    InvalidDocument,
    UnexpectedKind,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorPayload {
    pub code: ErrorCode,
    pub message: String,
}

/// Error frame for input that did not reach a session (bad JSON, unknown run).
pub fn error_message(run_id: &str, code: ErrorCode, message: impl Into<String>) -> SessionMessage {
    SessionMessage::new(
        MessageKind::Error,
        run_id,
        ErrorPayload {
            code,
            message: message.into(),
        },
    )
}

/// Phases in protocol order; the derived ordering is the protocol order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SessionPhase {
    Lobby,
    Pre,
    Trial(u32),
    Post,
    Done,
}

impl SessionPhase {
    pub fn name(self) -> &'static str {
        match self {
            SessionPhase::Lobby => "lobby",
            SessionPhase::Pre => "pre",
            SessionPhase::Trial(_) => "trial",
            SessionPhase::Post => "post",
            SessionPhase::Done => "done",
        }
    }

    pub fn trial(self) -> Option<u32> {
        match self {
            SessionPhase::Trial(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOptions {
    pub lobby_timeout_ms: u64,
    pub document_deadline_ms: u64,
    /// Seeds the per-node rejoin tokens. Servers should draw it at random.
    pub token_seed: u64,
    pub narrative: String,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions {
            lobby_timeout_ms: DEFAULT_LOBBY_TIMEOUT_MS,
            document_deadline_ms: DEFAULT_DOCUMENT_DEADLINE_MS,
            token_seed: 0,
            narrative: NARRATIVE.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Message { conn: ConnId, message: SessionMessage },
    Disconnect { conn: ConnId },
    Tick,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogRecord {
    Meta(RunMeta),
    Document(DocumentRecord),
    Trial(TrialRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Send { conn: ConnId, message: SessionMessage },
    Record(LogRecord),
}

type Reject = (ErrorCode, String);

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    options: SessionOptions,
    run: RunState,
    phase: SessionPhase,
    tokens: Vec<String>,
    joined: usize,
    conns: BTreeMap<ConnId, NodeId>,
    node_conn: Vec<Option<ConnId>>,
    deadline: Option<u64>,
    matching: Option<Matching>,
    responses: BTreeMap<NodeId, String>,
    documents_in: BTreeSet<NodeId>,
    aborted: Option<String>,
}

impl Session {
    /// Opens a lobby at time `now`; it aborts if not full within the lobby timeout.
    pub fn open(config: RunConfig, options: SessionOptions, now: u64) -> Result<Self> {
        let run = RunState::new(config)?;
        let n = run.topology.n();
        let mut rng = ChaCha8Rng::seed_from_u64(options.token_seed);
        let tokens = (0..n)
            .map(|_| {
                (0..TOKEN_BYTES)
                    .map(|_| format!("{:02x}", rng.random::<u8>()))
                    .collect::<String>()
            })
            .collect();
        Ok(Session {
            deadline: Some(now.saturating_add(options.lobby_timeout_ms)),
            options,
            run,
            phase: SessionPhase::Lobby,
            tokens,
            joined: 0,
            conns: BTreeMap::new(),
            node_conn: vec![None; n],
            matching: None,
            responses: BTreeMap::new(),
            documents_in: BTreeSet::new(),
            aborted: None,
        })
    }

    pub fn run_id(&self) -> &str {
        &self.run.config.run_id
    }

    pub fn config(&self) -> &RunConfig {
        &self.run.config
    }

    pub fn phase(&self) -> SessionPhase {
        self.phase
    }

    pub fn is_done(&self) -> bool {
        self.phase == SessionPhase::Done
    }

    /// Reason the run was aborted, if it was.
    pub fn aborted(&self) -> Option<&str> {
        self.aborted.as_deref()
    }

    pub fn next_deadline(&self) -> Option<u64> {
        self.deadline
    }

    pub fn joined(&self) -> usize {
        self.joined
    }

    pub fn n(&self) -> usize {
        self.node_conn.len()
    }

    pub fn connected_nodes(&self) -> Vec<NodeId> {
        (0..self.n()).filter(|&v| self.node_conn[v].is_some()).collect()
    }

    pub fn node_of(&self, conn: ConnId) -> Option<NodeId> {
        self.conns.get(&conn).copied()
    }

    /// Everything recorded so far, in the engine's log layout.
    pub fn log(&self) -> &RunLog {
        &self.run.log
    }

    /// Applies expired deadlines, then the event.
    pub fn handle(&mut self, now: u64, event: Event) -> Vec<Effect> {
        let mut out = self.advance(now);
        out.extend(self.apply(now, event));
        out
    }

    /// Applies every deadline that has passed by `now`.
    pub fn advance(&mut self, now: u64) -> Vec<Effect> {
        let mut out = Vec::new();
        while self.deadline.is_some_and(|d| now >= d) {
            self.expire(now, &mut out);
        }
        out
    }

    fn apply(&mut self, now: u64, event: Event) -> Vec<Effect> {
        let mut out = Vec::new();
        match event {
            Event::Tick => {}
            Event::Disconnect { conn } => {
                if let Some(node) = self.conns.remove(&conn) {
                    self.node_conn[node] = None;
                    self.advance_if_complete(now, &mut out);
                }
            }
            Event::Message { conn, message } => {
                if let Err((code, text)) = self.on_message(now, conn, &message, &mut out) {
                    let mut reply = error_message(self.run_id(), code, text);
                    reply.node = self.node_of(conn);
                    reply.trial = message.trial.or(self.phase.trial());
                    out.push(Effect::Send { conn, message: reply });
                }
            }
        }
        out
    }

    fn on_message(
        &mut self,
        now: u64,
        conn: ConnId,
        message: &SessionMessage,
        out: &mut Vec<Effect>,
    ) -> Result<(), Reject> {
        if message.run_id != self.run_id() {
            return Err((ErrorCode::UnknownRun, format!("no run `{}` here", message.run_id)));
        }
        if self.is_done() {
            return Err((ErrorCode::RunOver, "the run has ended".into()));
        }
        if message.kind == MessageKind::Join {
            return self.on_join(now, conn, message, out);
        }
        let node = self
            .node_of(conn)
            .ok_or((ErrorCode::NotJoined, "join the run first".to_string()))?;
        if message.node.is_some_and(|claimed| claimed != node) {
            return Err((ErrorCode::InvalidPayload, format!("this connection is node {node}")));
        }
        match message.kind {
            MessageKind::PreDocSubmit => self.on_document(now, node, Phase::Pre, message, out),
            MessageKind::PostDocSubmit => self.on_document(now, node, Phase::Post, message, out),
            MessageKind::HashtagSubmit => self.on_hashtag(now, node, message, out),
            other => Err((ErrorCode::UnexpectedKind, format!("{other:?} is sent by the server only"))),
        }
    }

    fn on_join(&mut self, now: u64, conn: ConnId, message: &SessionMessage, out: &mut Vec<Effect>) -> Result<(), Reject> {
        if self.conns.contains_key(&conn) {
            return Err((ErrorCode::AlreadyJoined, "this connection has already joined".into()));
        }
        let payload: JoinPayload = message
            .payload_as()
            .map_err(|e| (ErrorCode::InvalidPayload, e.to_string()))?;
        match payload.token {
            Some(token) => {
                let node = self.tokens[..self.joined]
                    .iter()
                    .position(|t| *t == token)
                    .ok_or((ErrorCode::UnknownToken, "token does not belong to this run".to_string()))?;
                if let Some(old) = self.node_conn[node] {
                    self.conns.remove(&old);
                }
                self.bind(conn, node);
                out.push(self.assigned(conn, node, true));
                match self.phase {
                    SessionPhase::Pre if !self.documents_in.contains(&node) => {
                        out.push(self.narrative(conn, node, now));
                    }
                    SessionPhase::Trial(t) if !self.responses.contains_key(&node) => {
                        out.push(self.prompt(conn, node, t, now));
                    }
                    _ => {}
                }
            }
            None => {
                if self.phase != SessionPhase::Lobby || self.joined >= self.n() {
                    return Err((ErrorCode::RunFull, format!("run is full ({} players)", self.n())));
                }
                let node = self.joined;
                self.joined += 1;
                self.bind(conn, node);
                out.push(self.assigned(conn, node, false));
                if self.joined == self.n() {
                    self.start_pre(now, out);
                }
            }
        }
        Ok(())
    }

    fn on_document(
        &mut self,
        now: u64,
        node: NodeId,
        phase: Phase,
        message: &SessionMessage,
        out: &mut Vec<Effect>,
    ) -> Result<(), Reject> {
        let expected = match phase {
            Phase::Pre => SessionPhase::Pre,
            Phase::Post => SessionPhase::Post,
        };
        if self.phase != expected {
            return Err(self.out_of_phase(message.kind));
        }
        if self.documents_in.contains(&node) {
            return Err((ErrorCode::Duplicate, format!("{} document already received", phase.as_str())));
        }
        let payload: DocumentPayload = message
            .payload_as()
            .map_err(|e| (ErrorCode::InvalidPayload, e.to_string()))?;
        let doc = DocumentRecord {
            node,
            phase,
            tweet: payload.tweet,
            hashtags: payload.hashtags,
        };
        self.run
            .add_document(doc.clone())
            .map_err(|e| (ErrorCode::InvalidDocument, e.to_string()))?;
        self.documents_in.insert(node);
        out.push(Effect::Record(LogRecord::Document(doc)));
        out.push(self.ack(node, message.kind, None));
        self.advance_if_complete(now, out);
        Ok(())
    }

    fn on_hashtag(&mut self, now: u64, node: NodeId, message: &SessionMessage, out: &mut Vec<Effect>) -> Result<(), Reject> {
        let SessionPhase::Trial(t) = self.phase else {
            return Err(self.out_of_phase(message.kind));
        };
        if message.trial != Some(t) {
            return Err((
                ErrorCode::OutOfPhase,
                format!("submission is for trial {:?}, current trial is {t}", message.trial),
            ));
        }
        if self.responses.contains_key(&node) {
            return Err((ErrorCode::Duplicate, format!("trial {t} response already received")));
        }
        let payload: HashtagPayload = message
            .payload_as()
            .map_err(|e| (ErrorCode::InvalidPayload, e.to_string()))?;
        self.responses.insert(node, payload.hashtag);
        out.push(self.ack(node, message.kind, Some(t)));
        self.advance_if_complete(now, out);
        Ok(())
    }

    fn out_of_phase(&self, kind: MessageKind) -> Reject {
        (
            ErrorCode::OutOfPhase,
            format!("{kind:?} is not accepted during the {} phase", self.phase.name()),
        )
    }

    fn bind(&mut self, conn: ConnId, node: NodeId) {
        self.conns.insert(conn, node);
        self.node_conn[node] = Some(conn);
    }

    fn remaining(&self, now: u64) -> u64 {
        self.deadline.map_or(0, |d| d.saturating_sub(now))
    }

    fn to_node(&self, node: NodeId, message: SessionMessage) -> Option<Effect> {
        self.node_conn[node].map(|conn| Effect::Send {
            conn,
            message: message.with_node(node),
        })
    }

    fn message<P: Serialize>(&self, kind: MessageKind, payload: P) -> SessionMessage {
        SessionMessage::new(kind, self.run_id(), payload)
    }

    fn assigned(&self, conn: ConnId, node: NodeId, rejoined: bool) -> Effect {
        let mut message = self
            .message(
                MessageKind::Assigned,
                AssignedPayload {
                    token: self.tokens[node].clone(),
                    n: self.n(),
                    trials: self.run.config.trials,
                    phase: self.phase.name().to_string(),
                    response_deadline_ms: self.run.config.response_deadline.saturating_mul(1000),
                    document_deadline_ms: self.options.document_deadline_ms,
                    cumulative_points: self.run.points()[node],
                    rejoined,
                },
            )
            .with_node(node);
        message.trial = self.phase.trial();
        Effect::Send { conn, message }
    }

    fn narrative(&self, conn: ConnId, node: NodeId, now: u64) -> Effect {
        let message = self
            .message(
                MessageKind::NarrativeShow,
                NarrativePayload {
                    narrative_id: self.run.config.narrative_id.clone(),
                    text: self.options.narrative.clone(),
                    deadline_in_ms: self.remaining(now),
                },
            )
            .with_node(node);
        Effect::Send { conn, message }
    }

    fn prompt(&self, conn: ConnId, node: NodeId, trial: u32, now: u64) -> Effect {
        let message = self
            .message(
                MessageKind::TrialPrompt,
                TrialPromptPayload {
                    deadline_in_ms: self.remaining(now),
                    cumulative_points: self.run.points()[node],
                },
            )
            .with_node(node)
            .with_trial(trial);
        Effect::Send { conn, message }
    }

    fn ack(&self, node: NodeId, kind: MessageKind, trial: Option<u32>) -> Effect {
        let mut message = self.message(
            kind,
            AckPayload {
                status: ACCEPTED.to_string(),
            },
        );
        message.trial = trial;
        self.to_node(node, message).expect("acknowledged node is connected")
    }

    fn advance_if_complete(&mut self, now: u64, out: &mut Vec<Effect>) {
        let connected = self.connected_nodes();
        if connected.is_empty() {
            return;
        }
        match self.phase {
            SessionPhase::Pre if connected.iter().all(|v| self.documents_in.contains(v)) => self.start_trial(now, out),
            SessionPhase::Trial(_) if connected.iter().all(|v| self.responses.contains_key(v)) => self.reveal(now, out),
            SessionPhase::Post if connected.iter().all(|v| self.documents_in.contains(v)) => self.finish(out),
            _ => {}
        }
    }

    fn expire(&mut self, now: u64, out: &mut Vec<Effect>) {
        match self.phase {
            SessionPhase::Lobby => {
                let reason = format!("lobby timed out with {} of {} players", self.joined, self.n());
                self.abort(reason, out);
            }
            SessionPhase::Pre => self.start_trial(now, out),
            SessionPhase::Trial(_) => self.reveal(now, out),
            SessionPhase::Post => self.finish(out),
            SessionPhase::Done => self.deadline = None,
        }
    }

    fn start_pre(&mut self, now: u64, out: &mut Vec<Effect>) {
        self.phase = SessionPhase::Pre;
        self.documents_in.clear();
        self.deadline = Some(now.saturating_add(self.options.document_deadline_ms));
        let meta = self.run.log.meta.clone().expect("run state carries its header");
        out.push(Effect::Record(LogRecord::Meta(meta)));
        for node in self.connected_nodes() {
            let conn = self.node_conn[node].expect("connected");
            out.push(self.narrative(conn, node, now));
        }
    }

    fn start_trial(&mut self, now: u64, out: &mut Vec<Effect>) {
        let matching = match self.run.sample_matching() {
            Ok(m) => m,
            Err(e) => return self.abort(e.to_string(), out),
        };
        let t = matching.trial;
        self.matching = Some(matching);
        self.phase = SessionPhase::Trial(t);
        self.responses.clear();
        let window = self.run.config.response_deadline.saturating_mul(1000);
        self.deadline = Some(now.saturating_add(window));
        for node in self.connected_nodes() {
            let conn = self.node_conn[node].expect("connected");
            out.push(self.prompt(conn, node, t, now));
        }
    }

    fn reveal(&mut self, now: u64, out: &mut Vec<Effect>) {
        let matching = self.matching.take().expect("a trial in progress has a matching");
        let responses = std::mem::take(&mut self.responses);
        let records = match self.run.run_trial(&responses, &matching) {
            Ok(r) => r,
            Err(e) => return self.abort(e.to_string(), out),
        };
        for r in &records {
            out.push(Effect::Record(LogRecord::Trial(r.clone())));
        }
        for r in &records {
            for node in [r.node_a, r.node_b] {
                let view = r.view_of(node).expect("node is in its own record");
                let shown = |canonical: &str, raw: &str| (!canonical.is_empty()).then(|| raw.to_string());
                let payload = TrialRevealPayload {
                    own_response: shown(view.own, view.own_raw),
                    partner_response: shown(view.partner_norm, view.partner_raw),
                    matched: r.matched,
                    point: u32::from(r.matched),
                    cumulative_points: view.cumulative,
                };
                let message = self.message(MessageKind::TrialReveal, payload).with_trial(r.trial);
                out.extend(self.to_node(node, message));
            }
        }
        if self.run.is_finished() {
            self.phase = SessionPhase::Post;
            self.documents_in.clear();
            self.deadline = Some(now.saturating_add(self.options.document_deadline_ms));
        } else {
            self.start_trial(now, out);
        }
    }

    fn finish(&mut self, out: &mut Vec<Effect>) {
        self.phase = SessionPhase::Done;
        self.deadline = None;
        for node in self.connected_nodes() {
            let payload = RunCompletePayload {
                status: RunStatus::Completed,
                reason: None,
                cumulative_points: Some(self.run.points()[node]),
            };
            out.extend(self.to_node(node, self.message(MessageKind::RunComplete, payload)));
        }
    }

    fn abort(&mut self, reason: String, out: &mut Vec<Effect>) {
        log::warn!("run {} aborted: {reason}", self.run_id());
        self.phase = SessionPhase::Done;
        self.deadline = None;
        for node in self.connected_nodes() {
            let payload = RunCompletePayload {
                status: RunStatus::Aborted,
                reason: Some(reason.clone()),
                cumulative_points: None,
            };
            out.extend(self.to_node(node, self.message(MessageKind::RunComplete, payload)));
        }
        self.aborted = Some(reason);
    }
}

/// Rebuilds a run log from recorded effects.
pub fn log_from_records<'a>(records: impl IntoIterator<Item = &'a LogRecord>) -> Result<RunLog> {
    let mut log = RunLog::default();
    for r in records {
        match r {
            LogRecord::Meta(m) => {
                if log.meta.replace(m.clone()).is_some() {
                    return Err(Error::Protocol("second meta record".into()));
                }
            }
            LogRecord::Document(d) => log.documents.push(d.clone()),
            LogRecord::Trial(t) => log.trials.push(t.clone()),
        }
    }
    Ok(log)
}
