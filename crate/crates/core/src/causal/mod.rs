//! Causal-claim extraction with a trigger lexicon and keyword topics.
//!
//! A claim is a (cause span, trigger, effect span) triple. For every trigger
//! occurrence the cause is the clause fragment to its left and the effect the
//! fragment to its right, bounded by sentence-internal punctuation, the
//! sentence edges and neighbouring triggers. `because of` and `due to` put
//! the cause on the right.

mod matrix;

use std::collections::BTreeMap;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use matrix::{
    claim_counts, claim_matrix, diff_matrix, group_diff_matrices, write_claim_counts, Corpus, CorpusDoc,
    TopicMatrix,
};

pub const NON_TOPIC: &str = "non_topic";

/// Bundled fourteen-topic lexicon.
pub const DEFAULT_TOPICS: &str = include_str!("../../data/topics.toml");
/// Bundled disaster narrative shown to participants.
pub const NARRATIVE: &str = include_str!("../../data/fukushima.txt");
pub const NARRATIVE_ID: &str = "fukushima";

/// (phrase, cause is on the right)
const DEFAULT_TRIGGERS: [(&str, bool); 9] = [
    ("caused", false),
    ("causes", false),
    ("triggered", false),
    ("led to", false),
    ("leads to", false),
    ("resulted in", false),
    ("results in", false),
    ("because of", true),
    ("due to", true),
];

/// Words dropped from either edge of a span.
const EDGE_CONNECTIVES: &[&str] = &[
    "and", "or", "but", "that", "which", "who", "then", "so", "thus", "also", "because", "since",
    "eventually", "ultimately", "this",
];

const CLAUSE_PUNCTUATION: &[char] = &[',', ';', ':', '(', ')', '"', '“', '”', '—', '–'];

#[derive(Debug, Clone)]
pub struct TriggerLexicon {
    phrases: Vec<(String, bool)>,
    pattern: Regex,
}

impl TriggerLexicon {
    /// `phrases` pairs a lowercase trigger with whether it reverses cause
    /// and effect.
    pub fn new<S: AsRef<str>>(phrases: &[(S, bool)]) -> Result<Self> {
        if phrases.is_empty() {
            return Err(Error::InvalidConfig("trigger lexicon is empty".into()));
        }
        let mut list: Vec<(String, bool)> = phrases
            .iter()
            .map(|(p, r)| (p.as_ref().trim().to_lowercase(), *r))
            .collect();
        if list.iter().any(|(p, _)| p.is_empty()) {
            return Err(Error::InvalidConfig("empty trigger phrase".into()));
        }
        list.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        list.dedup_by(|a, b| a.0 == b.0);
        let alternation: Vec<String> = list
            .iter()
            .map(|(p, _)| p.split_whitespace().map(regex::escape).collect::<Vec<_>>().join(r"\s+"))
            .collect();
        let pattern = Regex::new(&format!(r"(?i)\b(?:{})\b", alternation.join("|")))
            .map_err(|e| Error::InvalidConfig(format!("trigger pattern: {e}")))?;
        Ok(TriggerLexicon { phrases: list, pattern })
    }

    pub fn phrases(&self) -> impl Iterator<Item = &str> {
        self.phrases.iter().map(|(p, _)| p.as_str())
    }

    fn lookup(&self, matched: &str) -> Option<(&str, bool)> {
        let norm = matched.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        self.phrases
            .iter()
            .find(|(p, _)| *p == norm)
            .map(|(p, r)| (p.as_str(), *r))
    }
}

impl Default for TriggerLexicon {
    fn default() -> Self {
        TriggerLexicon::new(&DEFAULT_TRIGGERS).expect("default triggers are valid")
    }
}

/// Cause and effect spans around one trigger occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimSpan {
    pub cause_span: String,
    pub trigger: String,
    pub effect_span: String,
}

/// Spans for every trigger occurrence in `doc`; claims whose cause or
/// effect trims to nothing are dropped.
pub fn extract_spans(doc: &str, triggers: &TriggerLexicon) -> Vec<ClaimSpan> {
    let mut out = Vec::new();
    for sentence in sentences(doc) {
        let hits: Vec<_> = triggers.pattern.find_iter(sentence).collect();
        for (k, m) in hits.iter().enumerate() {
            let Some((phrase, reversed)) = triggers.lookup(m.as_str()) else {
                continue;
            };
            let left_floor = if k == 0 { 0 } else { hits[k - 1].end() };
            let right_ceiling = hits.get(k + 1).map_or(sentence.len(), |n| n.start());
            let left = &sentence[left_floor..m.start()];
            let left = match left.rfind(CLAUSE_PUNCTUATION) {
                Some(i) => &left[i + left[i..].chars().next().map_or(1, char::len_utf8)..],
                None => left,
            };
            let right = &sentence[m.end()..right_ceiling];
            let right = match right.find(CLAUSE_PUNCTUATION) {
                Some(i) => &right[..i],
                None => right,
            };
            let (left, right) = (trim_span(left), trim_span(right));
            if left.is_empty() || right.is_empty() {
                continue;
            }
            let (cause, effect) = if reversed { (right, left) } else { (left, right) };
            out.push(ClaimSpan {
                cause_span: cause,
                trigger: phrase.to_string(),
                effect_span: effect,
            });
        }
    }
    out
}

/// Splits at `.`, `!` or `?` followed by whitespace or the end, and at line breaks.
fn sentences(doc: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = doc.as_bytes();
    for (i, c) in doc.char_indices() {
        let end_here = match c {
            '\n' => true,
            '.' | '!' | '?' => bytes.get(i + 1).is_none_or(|b| b.is_ascii_whitespace()),
            _ => false,
        };
        if end_here {
            let s = doc[start..i].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = i + c.len_utf8();
        }
    }
    let s = doc[start..].trim();
    if !s.is_empty() {
        out.push(s);
    }
    out
}

fn trim_span(s: &str) -> String {
    let mut words: Vec<&str> = s.split_whitespace().collect();
    let is_connective = |w: &str| EDGE_CONNECTIVES.contains(&w.to_lowercase().as_str());
    while words.first().is_some_and(|w| is_connective(w)) {
        words.remove(0);
    }
    while words.last().is_some_and(|w| is_connective(w)) {
        words.pop();
    }
    words.join(" ")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopicFile {
    version: u32,
    topics: BTreeMap<String, Vec<String>>,
}

/// Topic ids with keyword sets; matching is by word-start prefix.
#[derive(Debug, Clone)]
pub struct TopicLexicon {
    topics: Vec<(String, Vec<String>, Vec<Regex>)>,
}

impl TopicLexicon {
    pub fn new(topics: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut out = Vec::with_capacity(topics.len());
        for (id, keywords) in topics {
            if id == NON_TOPIC || id.is_empty() {
                return Err(Error::InvalidConfig(format!("reserved or empty topic id `{id}`")));
            }
            if keywords.is_empty() {
                return Err(Error::InvalidConfig(format!("topic `{id}` has no keywords")));
            }
            if let Some(bad) = keywords.iter().find(|k| k.trim().is_empty() || **k != k.to_lowercase() || k.trim() != k.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "topic `{id}`: keyword `{bad}` must be lowercase and trimmed"
                )));
            }
            let patterns = keywords
                .iter()
                .map(|k| Regex::new(&format!(r"\b{}", regex::escape(k))))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidConfig(format!("topic `{id}`: {e}")))?;
            out.push((id, keywords, patterns));
        }
        if out.is_empty() {
            return Err(Error::InvalidConfig("topic lexicon is empty".into()));
        }
        Ok(TopicLexicon { topics: out })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: TopicFile = toml::from_str(text).map_err(|e| Error::Parse(format!("topic lexicon: {e}")))?;
        if file.version != 1 {
            return Err(Error::InvalidConfig(format!("unsupported topic lexicon version {}", file.version)));
        }
        TopicLexicon::new(file.topics)
    }

    pub fn load(path: &Path) -> Result<Self> {
        TopicLexicon::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Topic ids in lexicographic order.
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.topics.iter().map(|(id, _, _)| id.as_str())
    }

    pub fn keywords(&self, id: &str) -> Option<&[String]> {
        self.topics.iter().find(|(t, _, _)| t == id).map(|(_, k, _)| k.as_slice())
    }

    /// Topic with the most keyword hits (occurrences summed over its
    /// keywords); ties go to the lexicographically
    /// first id, no hits to [`NON_TOPIC`].
    pub fn assign(&self, span: &str) -> &str {
        let lower = span.to_lowercase();
        let mut best = (0usize, NON_TOPIC);
        for (id, _, patterns) in &self.topics {
            let hits: usize = patterns.iter().map(|re| re.find_iter(&lower).count()).sum();
            if hits > best.0 {
                best = (hits, id.as_str());
            }
        }
        best.1
    }
}

impl Default for TopicLexicon {
    fn default() -> Self {
        TopicLexicon::from_toml_str(DEFAULT_TOPICS).expect("bundled topic lexicon is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalClaim {
    pub cause_span: String,
    pub trigger: String,
    pub effect_span: String,
    pub cause_topic: String,
    pub effect_topic: String,
}

/// Trigger and topic lexicons together.
#[derive(Debug, Clone, Default)]
pub struct Extractor {
    pub triggers: TriggerLexicon,
    pub topics: TopicLexicon,
}

impl Extractor {
    pub fn new(triggers: TriggerLexicon, topics: TopicLexicon) -> Self {
        Extractor { triggers, topics }
    }

    pub fn extract(&self, doc: &str) -> Vec<CausalClaim> {
        extract_spans(doc, &self.triggers)
            .into_iter()
            .map(|s| CausalClaim {
                cause_topic: self.topics.assign(&s.cause_span).to_string(),
                effect_topic: self.topics.assign(&s.effect_span).to_string(),
                cause_span: s.cause_span,
                trigger: s.trigger,
                effect_span: s.effect_span,
            })
            .collect()
    }

    /// Topic labels in matrix order: every topic id, then [`NON_TOPIC`].
    pub fn labels(&self) -> Vec<String> {
        self.topics.ids().map(str::to_string).chain([NON_TOPIC.to_string()]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spans(doc: &str) -> Vec<(String, String, String)> {
        extract_spans(doc, &TriggerLexicon::default())
            .into_iter()
            .map(|c| (c.cause_span, c.trigger, c.effect_span))
            .collect()
    }

    fn t(a: &str, b: &str, c: &str) -> (String, String, String) {
        (a.into(), b.into(), c.into())
    }

    #[test]
    fn forward_trigger() {
        assert_eq!(
            spans("A large earthquake triggered a tsunami."),
            vec![t("A large earthquake", "triggered", "a tsunami")]
        );
    }

    #[test]
    fn no_trigger_no_claims() {
        assert!(spans("The sky is blue.").is_empty());
        assert!(spans("").is_empty());
    }

    #[test]
    fn reversed_trigger() {
        assert_eq!(
            spans("people were displaced because of radiation leaks"),
            vec![t("radiation leaks", "because of", "people were displaced")]
        );
    }

    #[test]
    fn chained_triggers_split_at_each_other() {
        assert_eq!(
            spans("The earthquake triggered a tsunami that caused a meltdown and resulted in leaks."),
            vec![
                t("The earthquake", "triggered", "a tsunami"),
                t("a tsunami", "caused", "a meltdown"),
                t("a meltdown", "resulted in", "leaks"),
            ]
        );
    }

    #[test]
    fn punctuation_bounds_clauses_and_empty_spans_drop() {
        assert_eq!(
            spans("In 2011, the quake led to flooding; officials resigned."),
            vec![t("the quake", "led to", "flooding")]
        );
        assert!(spans("It happened, which caused panic.").is_empty());
        assert!(spans("Caused by nothing.").is_empty());
    }

    #[test]
    fn trigger_matching_is_case_insensitive_and_whitespace_tolerant() {
        assert_eq!(spans("Floods LED  TO outages"), vec![t("Floods", "led to", "outages")]);
    }

    #[test]
    fn decimal_points_do_not_end_sentences() {
        assert_eq!(
            spans("A 9.0 quake caused a wave."),
            vec![t("A 9.0 quake", "caused", "a wave")]
        );
    }

    #[test]
    fn topic_assignment_rules() {
        let lex = TopicLexicon::default();
        assert_eq!(lex.ids().count(), 14);
        assert_eq!(lex.assign("a massive tidal wave"), "tsunami");
        assert_eq!(lex.assign("my cat"), NON_TOPIC);
        // One hit each for earthquake and tsunami.
        assert_eq!(lex.assign("quake and wave"), "earthquake");
        assert_eq!(lex.assign("the Evacuation of residents"), "displacement");
        assert_eq!(lex.assign("radiation leaks"), "radiation_leak");
        assert_eq!(lex.assign("radiation poisoning"), "radiation_poisoning");
    }

    #[test]
    fn tie_goes_to_first_id() {
        let mut topics = BTreeMap::new();
        topics.insert("zeta".to_string(), vec!["storm".to_string()]);
        topics.insert("alpha".to_string(), vec!["rain".to_string()]);
        let lex = TopicLexicon::new(topics).unwrap();
        assert_eq!(lex.assign("rain then storm"), "alpha");
        assert_eq!(lex.assign("storm storm rain"), "zeta");
    }

    #[test]
    fn lexicon_validation() {
        let mut topics = BTreeMap::new();
        topics.insert("a".to_string(), vec!["Upper".to_string()]);
        assert!(TopicLexicon::new(topics).is_err());
        let mut topics = BTreeMap::new();
        topics.insert("a".to_string(), vec![]);
        assert!(TopicLexicon::new(topics).is_err());
        let mut topics = BTreeMap::new();
        topics.insert(NON_TOPIC.to_string(), vec!["x".to_string()]);
        assert!(TopicLexicon::new(topics).is_err());
        assert!(TriggerLexicon::new::<&str>(&[]).is_err());
    }

    #[test]
    fn bundled_narrative_recovers_opening_chain() {
        let claims = Extractor::default().extract(NARRATIVE);
        let pairs: Vec<_> = claims.iter().map(|c| (c.cause_topic.as_str(), c.effect_topic.as_str())).collect();
        assert!(pairs.contains(&("earthquake", "tsunami")), "{claims:#?}");
        assert!(pairs.contains(&("tsunami", "nuclear_disaster")), "{claims:#?}");
    }
}
