//! Simulated participants.
//!
//! Each agent keeps a weighted inventory of canonical hashtags. It answers
//! greedily with its heaviest hashtag, exploring proportionally to weight
//! with probability `epsilon`. A match reinforces the hashtag it used; a
//! miss adds (or strengthens) the partner's hashtag.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::normalize_hashtag;
use crate::error::{Error, Result};
use crate::topology::NodeId;

pub const PARAMS_VERSION: u32 = 1;
pub const DEFAULT_PARAMS_FILE: &str = include_str!("../data/agent_params.toml");
pub const DEFAULT_SEED_POOL: &str = include_str!("../data/seed_pool.txt");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentParams {
    #[serde(default = "default_version")]
    pub version: u32,
    pub epsilon: f64,
    pub reinforce: f64,
    pub adopt_weight: f64,
    /// Number of seed-pool draws used to initialize the inventory.
    #[serde(default = "default_inventory_draws")]
    pub inventory_draws: usize,
}

fn default_version() -> u32 {
    PARAMS_VERSION
}

fn default_inventory_draws() -> usize {
    3
}

impl Default for AgentParams {
    fn default() -> Self {
        AgentParams {
            version: PARAMS_VERSION,
            epsilon: 0.1,
            reinforce: 1.0,
            adopt_weight: 1.0,
            inventory_draws: 3,
        }
    }
}

impl AgentParams {
    pub fn validate(&self) -> Result<()> {
        if self.version != PARAMS_VERSION {
            return Err(Error::InvalidConfig(format!(
                "agent params version {} unsupported (expected {PARAMS_VERSION})",
                self.version
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.reinforce > 0.0) {
            return Err(Error::InvalidConfig("reinforce must be > 0".into()));
        }
        if !(self.adopt_weight > 0.0) {
            return Err(Error::InvalidConfig("adopt_weight must be > 0".into()));
        }
        if self.inventory_draws == 0 {
            return Err(Error::InvalidConfig("inventory_draws must be >= 1".into()));
        }
        Ok(())
    }

    /// Parses the `key = value` parameter file.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let params: AgentParams =
            toml::from_str(s).map_err(|e| Error::Parse(format!("agent params: {e}")))?;
        params.validate()?;
        Ok(params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// Hashtags an agent may start with, and their sampling probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedPool {
    entries: Vec<(String, f64)>,
}

impl SeedPool {
    /// Builds a pool from raw hashtags and non-negative weights; weights are
    /// normalized to probabilities and duplicate hashtags merged.
    pub fn new<S: AsRef<str>>(entries: impl IntoIterator<Item = (S, f64)>) -> Result<Self> {
        let mut merged: BTreeMap<String, f64> = BTreeMap::new();
        let mut order = Vec::new();
        for (raw, w) in entries {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "seed pool weight for `{}` must be finite and >= 0",
                    raw.as_ref()
                )));
            }
            let tag = normalize_hashtag(raw.as_ref());
            if tag.is_empty() {
                return Err(Error::InvalidConfig("empty hashtag in seed pool".into()));
            }
            if !merged.contains_key(&tag) {
                order.push(tag.clone());
            }
            *merged.entry(tag).or_insert(0.0) += w;
        }
        let total: f64 = merged.values().sum();
        if order.is_empty() || !(total > 0.0) {
            return Err(Error::InvalidConfig("seed pool has no positive weight".into()));
        }
        let entries = order
            .into_iter()
            .map(|t| {
                let p = merged[&t] / total;
                (t, p)
            })
            .collect();
        Ok(SeedPool { entries })
    }

    pub fn uniform<S: AsRef<str>>(tags: impl IntoIterator<Item = S>) -> Result<Self> {
        Self::new(tags.into_iter().map(|t| (t, 1.0)))
    }

    /// Parses `hashtag, probability` lines. Blank lines and lines starting
    /// with `//` are skipped (a leading `#` is part of the hashtag).
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            let (tag, p) = line.rsplit_once(',').ok_or_else(|| {
                Error::Parse(format!("seed pool line {}: expected `hashtag, p`", lineno + 1))
            })?;
            let p: f64 = p.trim().parse().map_err(|_| {
                Error::Parse(format!("seed pool line {}: bad probability", lineno + 1))
            })?;
            entries.push((tag.trim().to_string(), p));
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn bundled() -> Self {
        Self::parse(DEFAULT_SEED_POOL).expect("bundled seed pool parses")
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.entries.iter().any(|(t, _)| t == tag)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &str {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (tag, p) in &self.entries {
            acc += p;
            if u < acc {
                return tag;
            }
        }
        &self.entries[self.entries.len() - 1].0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub node: NodeId,
    inventory: BTreeMap<String, f64>,
    pub params: AgentParams,
}

impl Agent {
    /// Seeds the inventory with `params.inventory_draws` pool draws at weight 1.
    pub fn init<R: Rng + ?Sized>(node: NodeId, pool: &SeedPool, params: AgentParams, rng: &mut R) -> Self {
        let mut inventory = BTreeMap::new();
        for _ in 0..params.inventory_draws.max(1) {
            inventory.insert(pool.sample(rng).to_string(), 1.0);
        }
        Agent {
            node,
            inventory,
            params,
        }
    }

    pub fn with_inventory<S: AsRef<str>>(
        node: NodeId,
        inventory: impl IntoIterator<Item = (S, f64)>,
        params: AgentParams,
    ) -> Result<Self> {
        let inventory: BTreeMap<String, f64> = inventory
            .into_iter()
            .map(|(t, w)| (normalize_hashtag(t.as_ref()), w))
            .collect();
        if inventory.keys().any(String::is_empty)
            || inventory.values().any(|w| !(*w >= 0.0))
            || !inventory.values().any(|w| *w > 0.0)
        {
            return Err(Error::InvalidConfig(
                "inventory needs non-empty hashtags, weights >= 0 and one positive weight".into(),
            ));
        }
        Ok(Agent {
            node,
            inventory,
            params,
        })
    }

    pub fn inventory(&self) -> &BTreeMap<String, f64> {
        &self.inventory
    }

    pub fn weight(&self, tag: &str) -> f64 {
        self.inventory.get(tag).copied().unwrap_or(0.0)
    }

    /// Heaviest hashtag; ties resolve to the lexicographically smallest.
    pub fn greedy(&self) -> &str {
        let mut best: Option<(&String, f64)> = None;
        for (tag, &w) in &self.inventory {
            if best.is_none_or(|(_, bw)| w > bw) {
                best = Some((tag, w));
            }
        }
        best.map(|(t, _)| t.as_str()).unwrap_or("")
    }

    pub fn choose_response<R: Rng + ?Sized>(&self, rng: &mut R) -> String {
        let explore = self.params.epsilon > 0.0 && rng.random::<f64>() < self.params.epsilon;
        if !explore {
            return self.greedy().to_string();
        }
        let total: f64 = self.inventory.values().sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last = "";
        for (tag, &w) in &self.inventory {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last = tag;
            if u < acc {
                return tag.clone();
            }
        }
        last.to_string()
    }

    /// Applies trial feedback. Non-response partners are never adopted.
    pub fn update(&mut self, own: &str, partner: &str, matched: bool) {
        if matched {
            *self.inventory.entry(own.to_string()).or_insert(0.0) += self.params.reinforce;
        } else if !partner.is_empty() {
            *self.inventory.entry(partner.to_string()).or_insert(0.0) += self.params.adopt_weight;
        }
    }

    /// Up to `k` hashtags ordered by descending weight (ties lexicographic).
    pub fn top_hashtags(&self, k: usize) -> Vec<String> {
        let mut items: Vec<(&String, f64)> = self.inventory.iter().map(|(t, &w)| (t, w)).collect();
        items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        items.into_iter().take(k).map(|(t, _)| t.clone()).collect()
    }
}

/// Builds `n` agents seeded from `pool`.
pub fn init_population<R: Rng + ?Sized>(
    n: usize,
    pool: &SeedPool,
    params: AgentParams,
    rng: &mut R,
) -> Vec<Agent> {
    (0..n).map(|node| Agent::init(node, pool, params, rng)).collect()
}
