//! A WebSocket client that plays the protocol with a naming-game agent.

use futures::{SinkExt, StreamExt};
use netcoord_core::agents::{Agent, AgentParams, SeedPool};
use netcoord_core::engine::{document_hashtags, normalize_hashtag, TweetCorpus};
use netcoord_core::session::{
    AssignedPayload, DocumentPayload, ErrorPayload, HashtagPayload, JoinPayload, MessageKind, RunCompletePayload,
    RunStatus, SessionMessage, TrialRevealPayload,
};
use netcoord_core::topology::NodeId;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tokio_tungstenite::connect_async;
use tokio_tungstenite::tungstenite::Message;

#[derive(Debug, Clone)]
pub struct BotConfig {
    /// `ws://host:port/ws`
    pub url: String,
    pub run_id: String,
    pub params: AgentParams,
    pub pool: SeedPool,
    pub corpus: TweetCorpus,
    pub seed: u64,
    /// Close the connection right after this trial's reveal.
    pub leave_after: Option<u32>,
}

impl BotConfig {
    pub fn new(url: impl Into<String>, run_id: impl Into<String>, seed: u64) -> Self {
        BotConfig {
            url: url.into(),
            run_id: run_id.into(),
            params: AgentParams::default(),
            pool: SeedPool::bundled(),
            corpus: TweetCorpus::bundled(),
            seed,
            leave_after: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BotReport {
    pub node: Option<NodeId>,
    /// `None` when the bot left before the run ended.
    pub status: Option<RunStatus>,
    pub points: u32,
    /// Reveals in the order received, with their trial index.
    pub reveals: Vec<(u32, TrialRevealPayload)>,
    pub errors: Vec<ErrorPayload>,
}

#[derive(Debug, thiserror::Error)]
pub enum BotError {
    #[error("websocket: {0}")]
    Socket(#[from] tokio_tungstenite::tungstenite::Error),
    #[error("protocol: {0}")]
    Protocol(String),
}

/// Plays one run to completion (or until `leave_after`).
pub async fn run_bot(cfg: BotConfig) -> Result<BotReport, BotError> {
    let (socket, _) = connect_async(cfg.url.as_str()).await?;
    let (mut sink, mut stream) = socket.split();
    let send = |m: SessionMessage| Message::text(m.to_json());
    sink.send(send(SessionMessage::new(
        MessageKind::Join,
        cfg.run_id.clone(),
        JoinPayload::default(),
    )))
    .await?;

    let mut report = BotReport {
        node: None,
        status: None,
        points: 0,
        reveals: Vec::new(),
        errors: Vec::new(),
    };
    let mut agent: Option<Agent> = None;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trials = 0;

    while let Some(frame) = stream.next().await {
        let text = match frame? {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        let m = SessionMessage::from_json(text.as_str()).map_err(|e| BotError::Protocol(e.to_string()))?;
        let decode = |e: netcoord_core::Error| BotError::Protocol(format!("{:?} payload: {e}", m.kind));
        let reply = |kind: MessageKind, payload: serde_json::Value| {
            let mut out = SessionMessage::new(kind, cfg.run_id.clone(), payload);
            out.node = report.node;
            out.trial = m.trial;
            out
        };
        match m.kind {
            MessageKind::Assigned => {
                let p: AssignedPayload = m.payload_as().map_err(decode)?;
                let node = m.node.ok_or_else(|| BotError::Protocol("Assigned without a node".into()))?;
                report.node = Some(node);
                trials = p.trials;
                rng.set_stream(node as u64);
                agent = Some(Agent::init(node, &cfg.pool, cfg.params, &mut rng));
            }
            MessageKind::NarrativeShow => {
                let a = agent.as_ref().ok_or_else(|| BotError::Protocol("narrative before assignment".into()))?;
                let doc = document(a, &cfg, &cfg.corpus.pre, &mut rng);
                sink.send(send(reply(MessageKind::PreDocSubmit, doc))).await?;
            }
            MessageKind::TrialPrompt => {
                let a = agent.as_ref().ok_or_else(|| BotError::Protocol("prompt before assignment".into()))?;
                let hashtag = format!("#{}", a.choose_response(&mut rng));
                let payload = serde_json::to_value(HashtagPayload { hashtag }).expect("payload serializes");
                sink.send(send(reply(MessageKind::HashtagSubmit, payload))).await?;
            }
            MessageKind::TrialReveal => {
                let p: TrialRevealPayload = m.payload_as().map_err(decode)?;
                let t = m.trial.unwrap_or_default();
                if let Some(a) = agent.as_mut() {
                    let own = normalize_hashtag(p.own_response.as_deref().unwrap_or(""));
                    let partner = normalize_hashtag(p.partner_response.as_deref().unwrap_or(""));
                    a.update(&own, &partner, p.matched);
                }
                report.points = p.cumulative_points;
                report.reveals.push((t, p));
                if cfg.leave_after == Some(t) {
                    sink.send(Message::Close(None)).await?;
                    return Ok(report);
                }
                if t == trials {
                    let a = agent.as_ref().expect("agent exists once trials run");
                    let pool = if cfg.corpus.post.is_empty() { &cfg.corpus.pre } else { &cfg.corpus.post };
                    let doc = document(a, &cfg, pool, &mut rng);
                    sink.send(send(reply(MessageKind::PostDocSubmit, doc))).await?;
                }
            }
            MessageKind::RunComplete => {
                let p: RunCompletePayload = m.payload_as().map_err(decode)?;
                report.status = Some(p.status);
                if let Some(points) = p.cumulative_points {
                    report.points = points;
                }
                let _ = sink.send(Message::Close(None)).await;
                break;
            }
            MessageKind::Error => {
                let p: ErrorPayload = m.payload_as().map_err(decode)?;
                log::warn!("bot {:?}: server error {:?}: {}", report.node, p.code, p.message);
                report.errors.push(p);
            }
            _ => {}
        }
    }
    Ok(report)
}

fn document(agent: &Agent, cfg: &BotConfig, tweets: &[String], rng: &mut ChaCha8Rng) -> serde_json::Value {
    let tweet = tweets.choose(rng).cloned().unwrap_or_default();
    let hashtags = document_hashtags(agent, &cfg.pool, rng);
    serde_json::to_value(DocumentPayload { tweet, hashtags }).expect("payload serializes")
}
