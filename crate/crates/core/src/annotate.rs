//! Heading → category annotation. Free-form section headings are matched
//! against an editable rule file and section bodies are merged into one
//! [`CategoryBundle`] per politician.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Category, CategoryBundle, SectionMap, LEAD_HEADING};

const DEFAULT_RULES_JSON: &str = include_str!("../data/rules/default_rules.json");

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("rule file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("rule file I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("rule {index}: {message}")]
    InvalidRule { index: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    /// Normalized heading and pattern have the same set of tokens.
    Exact,
    /// Normalized pattern occurs inside the normalized heading.
    Substring,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadingRule {
    pub pattern: String,
    #[serde(rename = "match")]
    pub kind: MatchKind,
    pub category: Category,
    pub priority: i64,
}

impl HeadingRule {
    fn matches(&self, normalized: &str) -> bool {
        let pat = normalize_heading(&self.pattern);
        match self.kind {
            MatchKind::Substring => normalized.contains(&pat),
            MatchKind::Exact => {
                let mut a: Vec<&str> = normalized.split(' ').collect();
                let mut b: Vec<&str> = pat.split(' ').collect();
                a.sort_unstable();
                a.dedup();
                b.sort_unstable();
                b.dedup();
                a == b
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefaultCategory {
    Other,
    Unmapped,
}

/// Result of categorizing one heading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    Mapped(Category),
    Unmapped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    rules: Vec<HeadingRule>,
    pub default_category: DefaultCategory,
    /// Where the lead paragraph goes.
    pub lead_category: Category,
}

impl RuleSet {
    /// Orders rules by priority; ties keep file order.
    pub fn new(mut rules: Vec<HeadingRule>, default_category: DefaultCategory) -> Result<Self, AnnotateError> {
        for (i, r) in rules.iter().enumerate() {
            if normalize_heading(&r.pattern).is_empty() {
                return Err(AnnotateError::InvalidRule { index: i, message: "empty pattern".into() });
            }
        }
        rules.sort_by_key(|r| r.priority);
        Ok(RuleSet { rules, default_category, lead_category: Category::Background })
    }

    pub fn from_json(json: &str, strict: bool) -> Result<Self, AnnotateError> {
        let rules: Vec<HeadingRule> = serde_json::from_str(json)?;
        Self::new(rules, if strict { DefaultCategory::Unmapped } else { DefaultCategory::Other })
    }

    pub fn load(path: &Path, strict: bool) -> Result<Self, AnnotateError> {
        Self::from_json(&std::fs::read_to_string(path)?, strict)
    }

    /// The shipped rule set.
    pub fn default_rules(strict: bool) -> Self {
        Self::from_json(DEFAULT_RULES_JSON, strict).expect("shipped rules parse")
    }

    pub fn rules(&self) -> &[HeadingRule] {
        &self.rules
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.rules).expect("rules serialize")
    }
}

static DISAMBIGUATOR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s*\(\d+\)\s*$").unwrap());

/// Lowercases, strips punctuation and any trailing " (n)" disambiguator, and
/// collapses whitespace.
pub fn normalize_heading(h: &str) -> String {
    let h = DISAMBIGUATOR.replace(h, "");
    let mut s = String::with_capacity(h.len());
    for ch in h.chars() {
        if ch.is_alphanumeric() {
            s.extend(ch.to_lowercase());
        } else if ch == '\'' || ch == '\u{2019}' {
            // apostrophes join: "women's" -> "womens"
        } else {
            s.push(' ');
        }
    }
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// First matching rule in priority order wins; otherwise the set's default.
pub fn categorize_heading(normalized: &str, rules: &RuleSet) -> Assignment {
    rules
        .rules
        .iter()
        .find(|r| r.matches(normalized))
        .map(|r| Assignment::Mapped(r.category))
        .unwrap_or(match rules.default_category {
            DefaultCategory::Other => Assignment::Mapped(Category::Other),
            DefaultCategory::Unmapped => Assignment::Unmapped,
        })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationReport {
    pub total_headings: usize,
    pub mapped: usize,
    /// Normalized heading with its occurrence count, most frequent first.
    pub unmapped: Vec<(String, usize)>,
    pub per_category_counts: BTreeMap<Category, usize>,
}

impl AnnotationReport {
    pub fn unmapped_total(&self) -> usize {
        self.unmapped.iter().map(|(_, n)| n).sum()
    }

    /// Accumulates another report, e.g. across a whole corpus.
    pub fn absorb(&mut self, other: &AnnotationReport) {
        self.total_headings += other.total_headings;
        self.mapped += other.mapped;
        for (c, n) in &other.per_category_counts {
            *self.per_category_counts.entry(*c).or_default() += n;
        }
        let mut merged: BTreeMap<String, usize> = self.unmapped.drain(..).collect();
        for (h, n) in &other.unmapped {
            *merged.entry(h.clone()).or_default() += n;
        }
        self.unmapped = sort_unmapped(merged);
    }
}

fn sort_unmapped(m: BTreeMap<String, usize>) -> Vec<(String, usize)> {
    let mut v: Vec<_> = m.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

/// Routes every section body into one category, concatenating in page order
/// with single newlines. Unmapped sections (strict mode only) still land in
/// `other` so that no text is lost; the report flags them.
pub fn merge_categories(sections: &SectionMap, rules: &RuleSet) -> (CategoryBundle, AnnotationReport) {
    let mut bundle = CategoryBundle::default();
    let mut report = AnnotationReport::default();
    let mut unmapped: BTreeMap<String, usize> = BTreeMap::new();
    for section in sections.iter() {
        report.total_headings += 1;
        let target = if section.heading == LEAD_HEADING {
            report.mapped += 1;
            *report.per_category_counts.entry(rules.lead_category).or_default() += 1;
            rules.lead_category
        } else {
            let normalized = normalize_heading(&section.heading);
            match categorize_heading(&normalized, rules) {
                Assignment::Mapped(c) => {
                    report.mapped += 1;
                    *report.per_category_counts.entry(c).or_default() += 1;
                    c
                }
                Assignment::Unmapped => {
                    *unmapped.entry(normalized).or_default() += 1;
                    Category::Other
                }
            }
        };
        if section.text.is_empty() {
            continue;
        }
        let field = bundle.get_mut(target);
        if !field.is_empty() {
            field.push('\n');
        }
        field.push_str(&section.text);
    }
    report.unmapped = sort_unmapped(unmapped);
    (bundle, report)
}
