//! Run configuration, trial scoring and headless simulation.
//!
//! A run has three blocks: every node writes a pre-interaction document, then
//! plays `trials` coordination rounds with a partner drawn from its
//! neighborhood, then writes a post-interaction document. Each matched pair
//! earns one point per player.

mod log;

pub use self::log::{load_log, LoadedLog, LogWriter, RecordType, SCHEMA_VERSION};

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{Agent, SeedPool};
use crate::error::{Error, Result};
use crate::topology::{EdgeList, Matching, NodeId, StructureKind, Topology};

pub const DEFAULT_TRIALS: u32 = 40;
pub const DEFAULT_RESPONSE_DEADLINE_SECS: u64 = 60;
pub const HASHTAGS_PER_DOCUMENT: usize = 10;
pub const MAX_TWEET_WORDS: usize = 140;

// Independent random streams derived from the run seed.
const STREAM_MATCHING: u64 = 0;
const STREAM_AGENTS: u64 = 1 << 32;
const STREAM_POPULATION: u64 = 2 << 32;
const STREAM_DOCUMENTS: u64 = 3 << 32;

/// Canonical form of a hashtag: no leading `#`, lowercase, no whitespace.
/// An empty result is the non-response token.
pub fn normalize_hashtag(raw: &str) -> String {
    let trimmed = raw.trim_start();
    let body = trimmed.strip_prefix('#').unwrap_or(trimmed);
    body.chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect()
}

pub fn is_non_response(canonical: &str) -> bool {
    canonical.is_empty()
}

/// Two canonical responses coordinate only if both are real and equal.
pub fn responses_match(a: &str, b: &str) -> bool {
    !a.is_empty() && a == b
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub n: usize,
    pub structure: StructureKind,
    #[serde(default = "default_trials")]
    pub trials: u32,
    pub seed: u64,
    #[serde(default = "default_deadline")]
    pub response_deadline: u64,
    #[serde(default = "default_narrative")]
    pub narrative_id: String,
}

fn default_trials() -> u32 {
    DEFAULT_TRIALS
}

fn default_deadline() -> u64 {
    DEFAULT_RESPONSE_DEADLINE_SECS
}

fn default_narrative() -> String {
    "fukushima".to_string()
}

impl RunConfig {
    pub fn new(run_id: impl Into<String>, n: usize, structure: StructureKind, seed: u64) -> Self {
        RunConfig {
            run_id: run_id.into(),
            n,
            structure,
            trials: DEFAULT_TRIALS,
            seed,
            response_deadline: DEFAULT_RESPONSE_DEADLINE_SECS,
            narrative_id: default_narrative(),
        }
    }

    pub fn with_trials(mut self, trials: u32) -> Self {
        self.trials = trials;
        self
    }

    /// Validates scalar fields and builds the topology.
    pub fn topology(&self) -> Result<Topology> {
        if self.run_id.trim().is_empty() {
            return Err(Error::InvalidConfig("run_id must not be empty".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        Topology::build(self.structure, self.n)
    }

    pub fn matching_rng(&self, trial: u32) -> ChaCha8Rng {
        stream_rng(self.seed, STREAM_MATCHING + u64::from(trial))
    }

    pub fn agent_rng(&self) -> ChaCha8Rng {
        stream_rng(self.seed, STREAM_AGENTS)
    }

    pub fn population_rng(&self) -> ChaCha8Rng {
        stream_rng(self.seed, STREAM_POPULATION)
    }

    pub fn document_rng(&self) -> ChaCha8Rng {
        stream_rng(self.seed, STREAM_DOCUMENTS)
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u32,
    pub node_a: NodeId,
    pub node_b: NodeId,
    pub resp_a: String,
    pub resp_b: String,
    pub norm_a: String,
    pub norm_b: String,
    pub matched: bool,
    pub cum_points_a: u32,
    pub cum_points_b: u32,
}

impl TrialRecord {
    /// Perspective of one node: (own raw, partner raw, own canonical,
    /// partner canonical, cumulative points).
    pub fn view_of(&self, node: NodeId) -> Option<NodeView<'_>> {
        if node == self.node_a {
            Some(NodeView {
                partner: self.node_b,
                own_raw: &self.resp_a,
                partner_raw: &self.resp_b,
                own: &self.norm_a,
                partner_norm: &self.norm_b,
                cumulative: self.cum_points_a,
            })
        } else if node == self.node_b {
            Some(NodeView {
                partner: self.node_a,
                own_raw: &self.resp_b,
                partner_raw: &self.resp_a,
                own: &self.norm_b,
                partner_norm: &self.norm_a,
                cumulative: self.cum_points_b,
            })
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NodeView<'a> {
    pub partner: NodeId,
    pub own_raw: &'a str,
    pub partner_raw: &'a str,
    pub own: &'a str,
    pub partner_norm: &'a str,
    pub cumulative: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pre,
    Post,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pre => "pre",
            Phase::Post => "post",
        }
    }
}

impl std::str::FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pre" => Ok(Phase::Pre),
            "post" => Ok(Phase::Post),
            other => Err(Error::Parse(format!("unknown phase `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub node: NodeId,
    pub phase: Phase,
    pub tweet: String,
    pub hashtags: Vec<String>,
}

impl DocumentRecord {
    pub fn validate(&self) -> Result<()> {
        if self.hashtags.len() != HASHTAGS_PER_DOCUMENT {
            return Err(Error::Protocol(format!(
                "document needs exactly {HASHTAGS_PER_DOCUMENT} hashtags, got {}",
                self.hashtags.len()
            )));
        }
        if self.hashtags.iter().any(|h| normalize_hashtag(h).is_empty()) {
            return Err(Error::Protocol("document hashtags must be non-empty".into()));
        }
        let words = word_count(&self.tweet);
        if words > MAX_TWEET_WORDS {
            return Err(Error::Protocol(format!(
                "tweet has {words} words, limit is {MAX_TWEET_WORDS}"
            )));
        }
        Ok(())
    }
}

/// Header of a run log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config: RunConfig,
    pub topology: EdgeList,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunLog {
    pub meta: Option<RunMeta>,
    pub documents: Vec<DocumentRecord>,
    pub trials: Vec<TrialRecord>,
}

impl RunLog {
    pub fn run_id(&self) -> Option<&str> {
        self.meta.as_ref().map(|m| m.config.run_id.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_none() && self.documents.is_empty() && self.trials.is_empty()
    }

    /// Trial records grouped by trial index, in ascending order.
    pub fn trials_by_index(&self) -> BTreeMap<u32, Vec<&TrialRecord>> {
        let mut out: BTreeMap<u32, Vec<&TrialRecord>> = BTreeMap::new();
        for r in &self.trials {
            out.entry(r.trial).or_default().push(r);
        }
        out
    }

    /// Canonical responses of every node on `trial`, indexed by node.
    pub fn responses_at(&self, trial: u32, n: usize) -> Vec<String> {
        let mut out = vec![String::new(); n];
        for r in self.trials.iter().filter(|r| r.trial == trial) {
            if r.node_a < n {
                out[r.node_a] = r.norm_a.clone();
            }
            if r.node_b < n {
                out[r.node_b] = r.norm_b.clone();
            }
        }
        out
    }

    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        {
            let mut w = LogWriter::new(&mut buf);
            w.write_log(self)?;
        }
        Ok(buf)
    }

    /// Checks record-level invariants against the header.
    pub fn validate(&self) -> Result<()> {
        let meta = self
            .meta
            .as_ref()
            .ok_or_else(|| Error::Protocol("run log has no meta record".into()))?;
        let topo = Topology::try_from(&meta.topology)?;
        let n = topo.n();
        let mut points = vec![0u32; n];
        for (t, records) in self.trials_by_index() {
            if t == 0 || t > meta.config.trials {
                return Err(Error::Protocol(format!("trial index {t} out of range")));
            }
            let matching = Matching {
                trial: t,
                pairs: records.iter().map(|r| (r.node_a, r.node_b)).collect(),
            };
            matching.validate(&topo)?;
            for r in records {
                if r.matched != responses_match(&r.norm_a, &r.norm_b) {
                    return Err(Error::Protocol(format!(
                        "trial {t}: matched flag inconsistent for ({}, {})",
                        r.node_a, r.node_b
                    )));
                }
                if normalize_hashtag(&r.resp_a) != r.norm_a || normalize_hashtag(&r.resp_b) != r.norm_b
                {
                    return Err(Error::Protocol(format!("trial {t}: normalization mismatch")));
                }
                let gain = u32::from(r.matched);
                for (node, cum) in [(r.node_a, r.cum_points_a), (r.node_b, r.cum_points_b)] {
                    if cum != points[node] + gain {
                        return Err(Error::Protocol(format!(
                            "trial {t}: cumulative points for node {node} are inconsistent"
                        )));
                    }
                    points[node] = cum;
                }
            }
        }
        for d in &self.documents {
            if d.node >= n {
                return Err(Error::Protocol(format!("document for unknown node {}", d.node)));
            }
            d.validate()?;
        }
        Ok(())
    }
}

/// Mutable state of one run: cumulative points and the trial cursor.
#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub config: RunConfig,
    pub topology: Topology,
    points: Vec<u32>,
    completed_trials: u32,
    pub log: RunLog,
}

impl RunState {
    pub fn new(config: RunConfig) -> Result<Self> {
        let topology = config.topology()?;
        let n = topology.n();
        let log = RunLog {
            meta: Some(RunMeta {
                config: config.clone(),
                topology: topology.to_edge_list(),
            }),
            ..RunLog::default()
        };
        Ok(RunState {
            config,
            topology,
            points: vec![0; n],
            completed_trials: 0,
            log,
        })
    }

    pub fn points(&self) -> &[u32] {
        &self.points
    }

    /// Index of the next trial to play (1-based).
    pub fn next_trial(&self) -> u32 {
        self.completed_trials + 1
    }

    pub fn is_finished(&self) -> bool {
        self.completed_trials >= self.config.trials
    }

    pub fn sample_matching(&self) -> Result<Matching> {
        let t = self.next_trial();
        self.topology.sample_matching(t, &mut self.config.matching_rng(t))
    }

    pub fn add_document(&mut self, doc: DocumentRecord) -> Result<()> {
        if doc.node >= self.topology.n() {
            return Err(Error::Protocol(format!("unknown node {}", doc.node)));
        }
        doc.validate()?;
        self.log.documents.push(doc);
        Ok(())
    }

    /// Scores one trial. Nodes missing from `responses` are non-responses.
    pub fn run_trial(
        &mut self,
        responses: &BTreeMap<NodeId, String>,
        matching: &Matching,
    ) -> Result<Vec<TrialRecord>> {
        let n = self.topology.n();
        if self.is_finished() {
            return Err(Error::Protocol("all trials already played".into()));
        }
        if let Some(bad) = responses.keys().find(|&&k| k >= n) {
            return Err(Error::Protocol(format!("response from unknown node {bad}")));
        }
        let trial = self.next_trial();
        if matching.trial != trial {
            return Err(Error::Protocol(format!(
                "matching is for trial {}, expected {trial}",
                matching.trial
            )));
        }
        matching.validate(&self.topology)?;
        let raw = |node: NodeId| responses.get(&node).cloned().unwrap_or_default();
        let mut records = Vec::with_capacity(matching.pairs.len());
        for &(a, b) in &matching.pairs {
            let (resp_a, resp_b) = (raw(a), raw(b));
            let (norm_a, norm_b) = (normalize_hashtag(&resp_a), normalize_hashtag(&resp_b));
            let matched = responses_match(&norm_a, &norm_b);
            if matched {
                self.points[a] += 1;
                self.points[b] += 1;
            }
            records.push(TrialRecord {
                trial,
                node_a: a,
                node_b: b,
                resp_a,
                resp_b,
                norm_a,
                norm_b,
                matched,
                cum_points_a: self.points[a],
                cum_points_b: self.points[b],
            });
        }
        self.completed_trials = trial;
        self.log.trials.extend(records.iter().cloned());
        Ok(records)
    }
}

/// Tweets used to stand in for participant documents in simulation mode.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TweetCorpus {
    pub pre: Vec<String>,
    pub post: Vec<String>,
}

pub const DEFAULT_TWEETS: &str = include_str!("../../data/tweets.tsv");

impl TweetCorpus {
    /// Reads a tab-separated table with `phase` and `text` columns.
    pub fn parse(tsv: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .quoting(false)
            .from_reader(tsv.as_bytes());
        let headers = reader.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Parse(format!("tweet table lacks a `{name}` column")))
        };
        let (phase_col, text_col) = (col("phase")?, col("text")?);
        let mut corpus = TweetCorpus::default();
        for row in reader.records() {
            let row = row?;
            let phase: Phase = row.get(phase_col).unwrap_or_default().parse()?;
            let text = row.get(text_col).unwrap_or_default().to_string();
            match phase {
                Phase::Pre => corpus.pre.push(text),
                Phase::Post => corpus.post.push(text),
            }
        }
        Ok(corpus)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn bundled() -> Self {
        Self::parse(DEFAULT_TWEETS).expect("bundled tweets parse")
    }

    fn pick<R: Rng + ?Sized>(&self, phase: Phase, rng: &mut R) -> Option<&String> {
        match phase {
            Phase::Pre => self.pre.choose(rng),
            Phase::Post => self.post.choose(rng).or_else(|| self.pre.choose(rng)),
        }
    }
}

/// Inputs of a headless run beyond the config.
pub struct Simulation<'a> {
    pub agents: Vec<Agent>,
    pub pool: &'a SeedPool,
    pub corpus: Option<&'a TweetCorpus>,
}

/// Executes a full run with simulated agents; deterministic given the seed.
pub fn simulate_run(config: &RunConfig, sim: Simulation<'_>) -> Result<RunLog> {
    let Simulation {
        mut agents,
        pool,
        corpus,
    } = sim;
    let mut state = RunState::new(config.clone())?;
    if agents.len() != state.topology.n() {
        return Err(Error::InvalidConfig(format!(
            "population has {} agents, run needs {}",
            agents.len(),
            state.topology.n()
        )));
    }
    let mut doc_rng = config.document_rng();
    let mut agent_rng = config.agent_rng();

    if let Some(corpus) = corpus {
        for agent in &agents {
            state.add_document(simulated_document(agent, Phase::Pre, corpus, pool, &mut doc_rng))?;
        }
    }

    while !state.is_finished() {
        let matching = state.sample_matching()?;
        let responses: BTreeMap<NodeId, String> = agents
            .iter()
            .map(|a| (a.node, format!("#{}", a.choose_response(&mut agent_rng))))
            .collect();
        let records = state.run_trial(&responses, &matching)?;
        for r in &records {
            for node in [r.node_a, r.node_b] {
                if let Some(v) = r.view_of(node) {
                    agents[node].update(v.own, v.partner_norm, r.matched);
                }
            }
        }
    }

    if let Some(corpus) = corpus {
        for agent in &agents {
            state.add_document(simulated_document(agent, Phase::Post, corpus, pool, &mut doc_rng))?;
        }
    }
    Ok(state.log)
}

/// Heaviest inventory hashtags, padded with pool draws to ten.
pub fn document_hashtags<R: Rng + ?Sized>(agent: &Agent, pool: &SeedPool, rng: &mut R) -> Vec<String> {
    let mut tags = agent.top_hashtags(HASHTAGS_PER_DOCUMENT);
    while tags.len() < HASHTAGS_PER_DOCUMENT {
        tags.push(pool.sample(rng).to_string());
    }
    tags.into_iter().map(|t| format!("#{t}")).collect()
}

fn simulated_document<R: Rng + ?Sized>(
    agent: &Agent,
    phase: Phase,
    corpus: &TweetCorpus,
    pool: &SeedPool,
    rng: &mut R,
) -> DocumentRecord {
    let tweet = corpus.pick(phase, rng).cloned().unwrap_or_default();
    DocumentRecord {
        node: agent.node,
        phase,
        tweet,
        hashtags: document_hashtags(agent, pool, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{init_population, AgentParams};

    fn state2() -> RunState {
        RunState::new(RunConfig::new("t", 2, StructureKind::HomogeneousComplete, 1)).unwrap()
    }

    fn pair01() -> Matching {
        Matching {
            trial: 1,
            pairs: vec![(0, 1)],
        }
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_hashtag("#Nuclear Disaster"), "nucleardisaster");
        assert_eq!(normalize_hashtag("nucleardisaster"), "nucleardisaster");
        assert_eq!(normalize_hashtag("   "), "");
        assert!(is_non_response(&normalize_hashtag("#")));
        assert_eq!(normalize_hashtag("  #Set\tSuden "), "setsuden");
    }

    #[test]
    fn matching_responses_score() {
        let mut s = state2();
        let resp = BTreeMap::from([(0, "#Tsunami".to_string()), (1, "#tsunami".to_string())]);
        let recs = s.run_trial(&resp, &pair01()).unwrap();
        assert_eq!(recs.len(), 1);
        assert!(recs[0].matched);
        assert_eq!((recs[0].cum_points_a, recs[0].cum_points_b), (1, 1));
    }

    #[test]
    fn mismatch_scores_nothing() {
        let mut s = state2();
        let resp = BTreeMap::from([(0, "#tsunami".to_string()), (1, "#setsuden".to_string())]);
        let recs = s.run_trial(&resp, &pair01()).unwrap();
        assert!(!recs[0].matched);
        assert_eq!(s.points(), &[0, 0]);
    }

    #[test]
    fn bundled_tweets_split_by_phase() {
        let c = TweetCorpus::bundled();
        assert_eq!((c.pre.len(), c.post.len()), (10, 10));
        assert!(TweetCorpus::parse("text\nhello\n").is_err());
        assert!(TweetCorpus::parse("phase\ttext\nduring\thello\n").is_err());
    }

    #[test]
    fn missing_response_never_matches() {
        let mut s = state2();
        let resp = BTreeMap::from([(0, "#tsunami".to_string())]);
        let recs = s.run_trial(&resp, &pair01()).unwrap();
        assert!(!recs[0].matched);
        assert_eq!(recs[0].norm_b, "");

        let mut s = state2();
        let recs = s.run_trial(&BTreeMap::new(), &pair01()).unwrap();
        assert!(!recs[0].matched, "two non-responses must not match");
    }

    #[test]
    fn unknown_node_is_protocol_error() {
        let mut s = state2();
        let resp = BTreeMap::from([(5, "#x".to_string())]);
        assert!(matches!(s.run_trial(&resp, &pair01()), Err(Error::Protocol(_))));
    }

    #[test]
    fn forced_coordination_run() {
        let params = AgentParams {
            epsilon: 0.0,
            ..AgentParams::default()
        };
        let pool = SeedPool::uniform(["tsunami"]).unwrap();
        let agents = (0..2)
            .map(|i| Agent::with_inventory(i, [("tsunami", 1.0)], params).unwrap())
            .collect();
        let cfg = RunConfig::new("forced", 2, StructureKind::HomogeneousComplete, 3).with_trials(3);
        let log = simulate_run(
            &cfg,
            Simulation {
                agents,
                pool: &pool,
                corpus: None,
            },
        )
        .unwrap();
        assert_eq!(log.trials.len(), 3);
        assert!(log.trials.iter().all(|r| r.matched));
        let last = log.trials.last().unwrap();
        assert_eq!((last.cum_points_a, last.cum_points_b), (3, 3));
        log.validate().unwrap();
    }

    fn ring_run(seed: u64) -> RunLog {
        let cfg = RunConfig::new("ring", 20, StructureKind::SpatialRing, seed);
        let pool = SeedPool::uniform(["a", "b", "c", "d", "e", "f", "g"]).unwrap();
        let agents = init_population(20, &pool, AgentParams::default(), &mut cfg.population_rng());
        let corpus = TweetCorpus {
            pre: vec!["The earthquake triggered a tsunami.".into()],
            post: vec!["The tsunami caused a nuclear disaster.".into()],
        };
        simulate_run(
            &cfg,
            Simulation {
                agents,
                pool: &pool,
                corpus: Some(&corpus),
            },
        )
        .unwrap()
    }

    #[test]
    fn ring_run_record_counts_and_points_conservation() {
        let log = ring_run(42);
        assert_eq!(log.trials.len(), 400);
        assert_eq!(log.documents.len(), 40);
        log.validate().unwrap();
        for (_, recs) in log.trials_by_index() {
            assert_eq!(recs.len(), 10);
        }
        // total points awarded = 2 x matched pairs
        let matched = log.trials.iter().filter(|r| r.matched).count() as u32;
        let mut final_points = vec![0u32; 20];
        for r in &log.trials {
            final_points[r.node_a] = r.cum_points_a;
            final_points[r.node_b] = r.cum_points_b;
        }
        assert_eq!(final_points.iter().sum::<u32>(), 2 * matched);
    }

    #[test]
    fn simulation_is_byte_deterministic() {
        assert_eq!(ring_run(7).to_jsonl().unwrap(), ring_run(7).to_jsonl().unwrap());
        assert_ne!(ring_run(7).to_jsonl().unwrap(), ring_run(8).to_jsonl().unwrap());
    }

    #[test]
    fn population_size_must_match() {
        let cfg = RunConfig::new("x", 6, StructureKind::SpatialRing, 1);
        let pool = SeedPool::uniform(["a"]).unwrap();
        let agents = init_population(4, &pool, AgentParams::default(), &mut cfg.population_rng());
        let r = simulate_run(
            &cfg,
            Simulation {
                agents,
                pool: &pool,
                corpus: None,
            },
        );
        assert!(matches!(r, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn documents_must_have_ten_hashtags() {
        let mut d = DocumentRecord {
            node: 0,
            phase: Phase::Pre,
            tweet: "short".into(),
            hashtags: vec!["#a".into(); 9],
        };
        assert!(d.validate().is_err());
        d.hashtags.push("#b".into());
        d.validate().unwrap();
        d.tweet = vec!["w"; 141].join(" ");
        assert!(d.validate().is_err());
    }
}
