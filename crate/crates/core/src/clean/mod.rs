//! Bias-removal cleaning: entity masking (locations are removed from
//! political text only), number and noise stripping, and party-term removal.

mod tagger;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use tagger::{resolve_overlaps, DocRef, EntityTagger, ExternalFileTagger, Gazetteer, RuleBasedTagger, TaggerKind};

use crate::corpus::{Category, CategoryBundle, CleanBundle, Politician};

#[derive(Debug, Error)]
pub enum CleanError {
    #[error("span [{start}, {end}) does not fit {category} text of {id} ({text_len} chars)")]
    SpanAlignment { id: String, category: Category, start: usize, end: usize, text_len: usize },
    #[error("entity file line {line}: {message}")]
    ExternalFormat { line: usize, message: String },
    #[error("noise pattern {name:?}: {message}")]
    Pattern { name: String, message: String },
    #[error("{id}: no annotated categories")]
    NotAnnotated { id: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityLabel {
    #[serde(rename = "PERSON")]
    Person,
    #[serde(rename = "ORG")]
    Org,
    #[serde(rename = "LOC")]
    Loc,
}

/// Half-open character range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub label: EntityLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    #[default]
    Delete,
    /// Replace each span with `<ent>`.
    Placeholder,
}

pub const PLACEHOLDER: &str = "<ent>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoisePattern {
    pub name: String,
    pub regex: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanPolicy {
    pub remove_labels_by_category: BTreeMap<Category, BTreeSet<EntityLabel>>,
    pub strip_numbers: bool,
    /// Applied in order, before number stripping.
    pub noise_patterns: Vec<NoisePattern>,
    /// Lowercase; matched as whole tokens regardless of case.
    pub party_terms: BTreeSet<String>,
    #[serde(default)]
    pub mask_mode: MaskMode,
}

pub const DEFAULT_PARTY_TERMS: &[&str] =
    &["democrat", "democrats", "democratic", "republican", "republicans", "gop", "dnc", "rnc"];

impl Default for CleanPolicy {
    fn default() -> Self {
        use EntityLabel::*;
        let mut remove = BTreeMap::new();
        remove.insert(Category::Background, BTreeSet::from([Person, Org]));
        remove.insert(Category::Political, BTreeSet::from([Person, Org, Loc]));
        remove.insert(Category::Other, BTreeSet::from([Person, Org]));
        let pat = |name: &str, regex: &str| NoisePattern { name: name.into(), regex: regex.into() };
        CleanPolicy {
            remove_labels_by_category: remove,
            strip_numbers: true,
            noise_patterns: vec![
                pat("citation", r"(?i)\[(?:\d+|[a-z]|note \d+|citation needed|clarification needed|when\?|who\?|by whom\?)\]"),
                pat("url", r"(?:https?://|www\.)\S+"),
                pat("template", r"\{\{[^{}]*\}\}"),
            ],
            party_terms: DEFAULT_PARTY_TERMS.iter().map(|s| s.to_string()).collect(),
            mask_mode: MaskMode::Delete,
        }
    }
}

impl CleanPolicy {
    /// Content hash of every field; two policies share an id iff they are
    /// equal.
    pub fn policy_id(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("policy serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }

    pub fn labels_for(&self, c: Category) -> BTreeSet<EntityLabel> {
        self.remove_labels_by_category.get(&c).cloned().unwrap_or_default()
    }

    pub fn compile(&self) -> Result<CompiledPolicy, CleanError> {
        CompiledPolicy::new(self.clone())
    }
}

/// A policy with its patterns compiled, ready to be shared across threads.
#[derive(Debug, Clone)]
pub struct CompiledPolicy {
    policy: CleanPolicy,
    id: String,
    noise: Vec<Regex>,
    party: Option<Regex>,
}

static DIGITS: std::sync::LazyLock<Regex> = std::sync::LazyLock::new(|| Regex::new(r"\d+").unwrap());

fn party_regex(stoplist: &BTreeSet<String>) -> Option<Regex> {
    if stoplist.is_empty() {
        return None;
    }
    let alts: Vec<String> = stoplist.iter().map(|t| regex::escape(&t.to_lowercase())).collect();
    Some(Regex::new(&format!(r"(?i)\b(?:{})\b", alts.join("|"))).expect("escaped alternation"))
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl CompiledPolicy {
    pub fn new(policy: CleanPolicy) -> Result<Self, CleanError> {
        let noise = policy
            .noise_patterns
            .iter()
            .map(|p| Regex::new(&p.regex).map_err(|e| CleanError::Pattern { name: p.name.clone(), message: e.to_string() }))
            .collect::<Result<Vec<_>, _>>()?;
        let party = party_regex(&policy.party_terms);
        Ok(CompiledPolicy { id: policy.policy_id(), policy, noise, party })
    }

    pub fn policy(&self) -> &CleanPolicy {
        &self.policy
    }

    pub fn policy_id(&self) -> &str {
        &self.id
    }

    pub fn strip_numbers_and_noise(&self, text: &str) -> String {
        let mut s = text.to_string();
        for re in &self.noise {
            s = re.replace_all(&s, " ").into_owned();
        }
        if self.policy.strip_numbers {
            s = DIGITS.replace_all(&s, "").into_owned();
        }
        normalize_ws(&s)
    }

    pub fn strip_party_terms(&self, text: &str) -> String {
        match &self.party {
            Some(re) => normalize_ws(&re.replace_all(text, " ")),
            None => normalize_ws(text),
        }
    }

    fn clean_once(&self, doc: &DocRef<'_>, text: &str, tagger: &dyn EntityTagger) -> Result<String, CleanError> {
        let spans = tagger.tag(doc, text)?;
        let masked = mask(text, &spans, &self.policy.labels_for(doc.category), self.policy.mask_mode);
        let s = self.strip_numbers_and_noise(&masked);
        Ok(self.strip_party_terms(&s))
    }

    /// Cleans one category's text. Rule-based tagging is repeated until the
    /// text stops changing, so that a deletion cannot expose a new entity;
    /// span files are only valid against the original text and get one pass.
    pub fn clean_text(&self, doc: &DocRef<'_>, text: &str, tagger: &dyn EntityTagger) -> Result<String, CleanError> {
        let mut cur = self.clean_once(doc, text, tagger)?;
        if tagger.kind() == TaggerKind::RuleBased {
            for _ in 0..8 {
                let next = self.clean_once(doc, &cur, tagger)?;
                if next == cur {
                    break;
                }
                cur = next;
            }
        }
        Ok(cur)
    }

    pub fn clean_bundle(&self, id: &str, b: &CategoryBundle, tagger: &dyn EntityTagger) -> Result<CleanBundle, CleanError> {
        let run = |c: Category| self.clean_text(&DocRef { id, category: c }, b.get(c), tagger);
        Ok(CleanBundle {
            background: run(Category::Background)?,
            political: run(Category::Political)?,
            other: run(Category::Other)?,
            policy_id: self.id.clone(),
        })
    }

    /// Checks the post-clean guarantees on one bundle: no digits anywhere, no
    /// stoplist tokens anywhere, and no gazetteer locations in categories whose
    /// removal set includes LOC.
    pub fn audit(&self, id: &str, clean: &CleanBundle, gazetteer: &Gazetteer) -> Vec<AuditIssue> {
        let mut issues = Vec::new();
        for c in Category::ALL {
            let text = clean.get(c);
            let mut push = |kind: &str, found: &str| {
                issues.push(AuditIssue { id: id.to_string(), category: c, kind: kind.to_string(), found: found.to_string() })
            };
            if self.policy.strip_numbers {
                if let Some(m) = DIGITS.find(text) {
                    push("digit", m.as_str());
                }
            }
            if let Some(m) = self.party.as_ref().and_then(|re| re.find(text)) {
                push("party-term", m.as_str());
            }
            if self.policy.labels_for(c).contains(&EntityLabel::Loc) {
                if let Some(&(s, e)) = gazetteer.find_locations(text).first() {
                    let found: String = text.chars().skip(s).take(e - s).collect();
                    push("location", &found);
                }
            }
        }
        issues
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditIssue {
    pub id: String,
    pub category: Category,
    pub kind: String,
    pub found: String,
}

/// Tags a free-standing text (no document identity).
pub fn tag_entities(text: &str, tagger: &dyn EntityTagger) -> Result<Vec<EntitySpan>, CleanError> {
    tagger.tag(&DocRef { id: "", category: Category::Other }, text)
}

/// Deletes every span whose label is in `remove`, together with whitespace
/// that would otherwise be left doubled or dangling.
pub fn apply_masking(text: &str, spans: &[EntitySpan], remove: &BTreeSet<EntityLabel>) -> String {
    mask(text, spans, remove, MaskMode::Delete)
}

pub fn mask(text: &str, spans: &[EntitySpan], remove: &BTreeSet<EntityLabel>, mode: MaskMode) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    let mut chosen: Vec<&EntitySpan> =
        spans.iter().filter(|s| remove.contains(&s.label) && s.start < s.end && s.end <= chars.len()).collect();
    chosen.sort_by_key(|s| std::cmp::Reverse(s.start));
    let mut last_start = usize::MAX;
    for s in chosen {
        // Overlapping input is tolerated by skipping the later-processed span.
        if s.end > last_start {
            continue;
        }
        last_start = s.start;
        if mode == MaskMode::Placeholder {
            chars.splice(s.start..s.end, PLACEHOLDER.chars());
            continue;
        }
        let mut lo = s.start;
        while lo > 0 && chars[lo - 1].is_whitespace() {
            lo -= 1;
        }
        let mut hi = s.end;
        while hi < chars.len() && chars[hi].is_whitespace() {
            hi += 1;
        }
        let (from, to) = if lo == 0 || hi == chars.len() {
            // Leading or trailing: drop the span and all adjacent whitespace.
            (lo, hi)
        } else if hi == s.end && chars[hi].is_ascii_punctuation() {
            // "met John, then" -> "met, then"
            (lo, s.end)
        } else {
            // Between words: keep the whitespace before the span.
            (s.start, hi)
        };
        chars.drain(from..to);
    }
    chars.into_iter().collect()
}

pub fn strip_numbers_and_noise(text: &str, policy: &CleanPolicy) -> Result<String, CleanError> {
    Ok(policy.compile()?.strip_numbers_and_noise(text))
}

pub fn strip_party_terms(text: &str, stoplist: &BTreeSet<String>) -> String {
    match party_regex(stoplist) {
        Some(re) => normalize_ws(&re.replace_all(text, " ")),
        None => normalize_ws(text),
    }
}

pub fn clean_bundle(
    id: &str,
    b: &CategoryBundle,
    tagger: &dyn EntityTagger,
    policy: &CleanPolicy,
) -> Result<CleanBundle, CleanError> {
    policy.compile()?.clean_bundle(id, b, tagger)
}

/// Cleans every annotated politician in parallel, replacing any earlier
/// clean output. Politicians without categories are an error.
pub fn clean_corpus(
    politicians: &mut [Politician],
    tagger: &dyn EntityTagger,
    policy: &CompiledPolicy,
) -> Result<(), CleanError> {
    politicians.par_iter_mut().try_for_each(|p| {
        let b = p.categories.as_ref().ok_or_else(|| CleanError::NotAnnotated { id: p.id.clone() })?;
        p.clean = Some(policy.clean_bundle(&p.id, b, tagger)?);
        Ok(())
    })
}
