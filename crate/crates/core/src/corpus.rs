//! Domain records shared by every pipeline stage, plus the congress calendar
//! and the phase (era) table.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// First congress in the corpus window.
pub const FIRST_IN_SCOPE_CONGRESS: u32 = 58;
/// Last congress in the corpus window.
pub const LAST_IN_SCOPE_CONGRESS: u32 = 117;

/// Reserved heading under which the lead paragraph of a page is stored.
pub const LEAD_HEADING: &str = "__lead__";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("invalid congress term {0}: ordinals start at 1")]
    InvalidTerm(u32),
    #[error("congress {0} falls in no phase")]
    NoPhase(u32),
    #[error("invalid phase table: {0}")]
    InvalidPhaseTable(String),
    #[error("invalid party: {0}")]
    InvalidParty(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartyKind {
    Democratic,
    Republican,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Party {
    pub kind: PartyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other_label: Option<String>,
}

impl Party {
    pub fn democratic() -> Self {
        Party { kind: PartyKind::Democratic, other_label: None }
    }

    pub fn republican() -> Self {
        Party { kind: PartyKind::Republican, other_label: None }
    }

    pub fn other(label: impl Into<String>) -> Result<Self, CorpusError> {
        let label = label.into();
        if label.trim().is_empty() {
            return Err(CorpusError::InvalidParty("Other party requires a label".into()));
        }
        Ok(Party { kind: PartyKind::Other, other_label: Some(label) })
    }

    /// True for the two parties that take part in binary classification and
    /// ratio computations.
    pub fn is_major(&self) -> bool {
        matches!(self.kind, PartyKind::Democratic | PartyKind::Republican)
    }

    /// +1 for Democratic, -1 for Republican, `None` otherwise.
    pub fn binary_label(&self) -> Option<i8> {
        match self.kind {
            PartyKind::Democratic => Some(1),
            PartyKind::Republican => Some(-1),
            PartyKind::Other => None,
        }
    }

    pub fn check(&self) -> Result<(), CorpusError> {
        match (&self.kind, &self.other_label) {
            (PartyKind::Other, Some(l)) if !l.trim().is_empty() => Ok(()),
            (PartyKind::Other, _) => Err(CorpusError::InvalidParty("Other party requires a label".into())),
            (_, None) => Ok(()),
            (_, Some(_)) => Err(CorpusError::InvalidParty("other_label set on a major party".into())),
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PartyKind::Democratic => f.write_str("Democratic"),
            PartyKind::Republican => f.write_str("Republican"),
            PartyKind::Other => f.write_str(self.other_label.as_deref().unwrap_or("Other")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chamber {
    Senate,
    House,
}

impl fmt::Display for Chamber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Chamber::Senate => "senate",
            Chamber::House => "house",
        })
    }
}

/// A congress, identified by its ordinal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CongressTerm(pub u32);

impl CongressTerm {
    pub fn new(ordinal: u32) -> Result<Self, CorpusError> {
        if ordinal < 1 {
            return Err(CorpusError::InvalidTerm(ordinal));
        }
        Ok(CongressTerm(ordinal))
    }

    pub fn ordinal(self) -> u32 {
        self.0
    }

    pub fn in_scope(self) -> bool {
        (FIRST_IN_SCOPE_CONGRESS..=LAST_IN_SCOPE_CONGRESS).contains(&self.0)
    }
}

/// Calendar years spanned by a congress: the first met in 1789 and each sits
/// for two years.
pub fn congress_years(term: CongressTerm) -> Result<(i32, i32), CorpusError> {
    if term.0 < 1 {
        return Err(CorpusError::InvalidTerm(term.0));
    }
    let start = 1789 + 2 * (term.0 as i32 - 1);
    Ok((start, start + 2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Phase {
    pub index: u8,
    pub low: u32,
    pub high: u32,
}

impl Phase {
    pub fn contains(&self, term: CongressTerm) -> bool {
        (self.low..=self.high).contains(&term.0)
    }
}

/// Ordered set of phases partitioning the in-scope congress window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseTable {
    phases: Vec<Phase>,
}

impl Default for PhaseTable {
    fn default() -> Self {
        PhaseTable {
            phases: vec![
                Phase { index: 1, low: 58, high: 73 },
                Phase { index: 2, low: 74, high: 88 },
                Phase { index: 3, low: 89, high: 103 },
                Phase { index: 4, low: 104, high: 117 },
            ],
        }
    }
}

impl PhaseTable {
    /// Builds a table from inclusive `(low, high)` ranges, indexed 1.. in the
    /// given order. The ranges must tile 58..=117 without gaps or overlap.
    pub fn new(ranges: &[(u32, u32)]) -> Result<Self, CorpusError> {
        if ranges.is_empty() {
            return Err(CorpusError::InvalidPhaseTable("no phases".into()));
        }
        let mut expected = FIRST_IN_SCOPE_CONGRESS;
        let mut phases = Vec::with_capacity(ranges.len());
        for (i, &(low, high)) in ranges.iter().enumerate() {
            if low != expected || high < low {
                return Err(CorpusError::InvalidPhaseTable(format!(
                    "phase {} range {low}..={high} does not continue from {expected}",
                    i + 1
                )));
            }
            phases.push(Phase { index: (i + 1) as u8, low, high });
            expected = high + 1;
        }
        if expected != LAST_IN_SCOPE_CONGRESS + 1 {
            return Err(CorpusError::InvalidPhaseTable(format!(
                "phases end at {} instead of {LAST_IN_SCOPE_CONGRESS}",
                expected - 1
            )));
        }
        Ok(PhaseTable { phases })
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn get(&self, index: u8) -> Option<&Phase> {
        self.phases.iter().find(|p| p.index == index)
    }
}

pub fn assign_phase(term: CongressTerm, table: &PhaseTable) -> Result<Phase, CorpusError> {
    table
        .phases
        .iter()
        .find(|p| p.contains(term))
        .copied()
        .ok_or(CorpusError::NoPhase(term.0))
}

/// Derives the phase indices covered by a set of terms.
pub fn phases_for_terms(
    terms: &BTreeSet<CongressTerm>,
    table: &PhaseTable,
) -> Result<BTreeSet<u8>, CorpusError> {
    terms.iter().map(|t| assign_phase(*t, table).map(|p| p.index)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Section {
    pub heading: String,
    pub text: String,
}

/// Ordered heading → body mapping for one page.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SectionMap {
    entries: Vec<Section>,
}

/// Key used for heading uniqueness: case-folded and whitespace-collapsed.
/// Disambiguating suffixes such as " (2)" are significant here.
pub fn heading_key(heading: &str) -> String {
    heading.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl SectionMap {
    pub fn new() -> Self {
        SectionMap::default()
    }

    /// Builds a map without any disambiguation. Duplicates are kept and
    /// reported by [`validate_politician`].
    pub fn from_entries(entries: Vec<Section>) -> Self {
        SectionMap { entries }
    }

    /// Appends a section, suffixing the heading with " (n)" when its key
    /// already exists.
    pub fn push_unique(&mut self, heading: &str, text: String) {
        let heading = heading.trim();
        let mut candidate = heading.to_string();
        let mut n = 2;
        while self.contains(&candidate) {
            candidate = format!("{heading} ({n})");
            n += 1;
        }
        self.entries.push(Section { heading: candidate, text });
    }

    pub fn contains(&self, heading: &str) -> bool {
        let key = heading_key(heading);
        self.entries.iter().any(|s| heading_key(&s.heading) == key)
    }

    pub fn get(&self, heading: &str) -> Option<&str> {
        let key = heading_key(heading);
        self.entries.iter().find(|s| heading_key(&s.heading) == key).map(|s| s.text.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Section> {
        self.entries.iter()
    }

    pub fn headings(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|s| s.heading.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Keys that appear more than once after normalization.
    pub fn duplicate_keys(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut dups = Vec::new();
        for s in &self.entries {
            let k = heading_key(&s.heading);
            if !seen.insert(k.clone()) && !dups.contains(&k) {
                dups.push(k);
            }
        }
        dups
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Background,
    Political,
    Other,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Background, Category::Political, Category::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Background => "background",
            Category::Political => "political",
            Category::Other => "other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "background" => Ok(Category::Background),
            "political" => Ok(Category::Political),
            "other" => Ok(Category::Other),
            other => Err(format!("unknown category {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryBundle {
    pub background: String,
    pub political: String,
    pub other: String,
}

impl CategoryBundle {
    pub fn get(&self, c: Category) -> &str {
        match c {
            Category::Background => &self.background,
            Category::Political => &self.political,
            Category::Other => &self.other,
        }
    }

    pub fn get_mut(&mut self, c: Category) -> &mut String {
        match c {
            Category::Background => &mut self.background,
            Category::Political => &mut self.political,
            Category::Other => &mut self.other,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CleanBundle {
    pub background: String,
    pub political: String,
    pub other: String,
    pub policy_id: String,
}

impl CleanBundle {
    pub fn get(&self, c: Category) -> &str {
        match c {
            Category::Background => &self.background,
            Category::Political => &self.political,
            Category::Other => &self.other,
        }
    }

    /// Re-wraps the cleaned text as a category bundle, e.g. to check that
    /// cleaning is idempotent.
    pub fn as_bundle(&self) -> CategoryBundle {
        CategoryBundle {
            background: self.background.clone(),
            political: self.political.clone(),
            other: self.other.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Politician {
    pub id: String,
    pub display_name: String,
    pub party: Party,
    pub chamber: Chamber,
    pub terms: BTreeSet<CongressTerm>,
    pub phases: BTreeSet<u8>,
    pub sections: SectionMap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<CategoryBundle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean: Option<CleanBundle>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
    pub detail: String,
}

impl Violation {
    fn new(field: &str, rule: &str, detail: impl Into<String>) -> Self {
        Violation { field: field.into(), rule: rule.into(), detail: detail.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.field, self.rule, self.detail)
    }
}

/// Checks every record-level invariant; an empty result means the record is
/// well formed.
pub fn validate_politician(p: &Politician, table: &PhaseTable) -> Vec<Violation> {
    let mut out = Vec::new();
    if p.id.trim().is_empty() {
        out.push(Violation::new("id", "non-empty", "id is empty"));
    }
    if let Err(e) = p.party.check() {
        out.push(Violation::new("party", "label-consistency", e.to_string()));
    }
    if p.terms.is_empty() {
        out.push(Violation::new("terms", "non-empty", "no congress terms"));
    }
    for t in &p.terms {
        if !t.in_scope() {
            out.push(Violation::new(
                "terms",
                "in-scope",
                format!("congress {} outside {FIRST_IN_SCOPE_CONGRESS}..={LAST_IN_SCOPE_CONGRESS}", t.0),
            ));
        }
    }
    let derived: BTreeSet<u8> =
        p.terms.iter().filter_map(|t| assign_phase(*t, table).ok()).map(|ph| ph.index).collect();
    if derived != p.phases {
        out.push(Violation::new(
            "phases",
            "phase-derivation",
            format!("expected {:?}, found {:?}", derived, p.phases),
        ));
    }
    if p.sections.is_empty() {
        out.push(Violation::new("sections", "non-empty", "section map is empty"));
    }
    for key in p.sections.duplicate_keys() {
        out.push(Violation::new("sections", "heading-uniqueness", format!("duplicate heading {key:?}")));
    }
    if let Some(clean) = &p.clean {
        if clean.policy_id.is_empty() {
            out.push(Violation::new("clean.policy_id", "non-empty", "clean bundle lacks a policy id"));
        }
        if p.categories.is_none() {
            out.push(Violation::new("clean", "provenance", "clean bundle without category bundle"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Politician {
        let mut sections = SectionMap::new();
        sections.push_unique(LEAD_HEADING, "Lead text.".into());
        sections.push_unique("Early life", "Born on a farm.".into());
        Politician {
            id: "jane-doe".into(),
            display_name: "Jane Doe".into(),
            party: Party::democratic(),
            chamber: Chamber::House,
            terms: [CongressTerm(103), CongressTerm(104)].into_iter().collect(),
            phases: [3, 4].into_iter().collect(),
            sections,
            categories: None,
            clean: None,
        }
    }

    #[test]
    fn congress_calendar() {
        assert_eq!(congress_years(CongressTerm(1)).unwrap(), (1789, 1791));
        assert_eq!(congress_years(CongressTerm(58)).unwrap(), (1903, 1905));
        assert_eq!(congress_years(CongressTerm(117)).unwrap(), (2021, 2023));
        assert_eq!(congress_years(CongressTerm(0)), Err(CorpusError::InvalidTerm(0)));
        assert!(CongressTerm::new(0).is_err());
        for n in 1..300 {
            let a = congress_years(CongressTerm(n)).unwrap().0;
            let b = congress_years(CongressTerm(n + 1)).unwrap().0;
            assert_eq!(b, a + 2);
        }
    }

    #[test]
    fn default_phases() {
        let t = PhaseTable::default();
        assert_eq!(assign_phase(CongressTerm(104), &t).unwrap().index, 4);
        assert_eq!(assign_phase(CongressTerm(58), &t).unwrap().index, 1);
        assert_eq!(assign_phase(CongressTerm(90), &t).unwrap().index, 3);
        assert_eq!(assign_phase(CongressTerm(57), &t), Err(CorpusError::NoPhase(57)));
        assert_eq!(assign_phase(CongressTerm(118), &t), Err(CorpusError::NoPhase(118)));
    }

    #[test]
    fn phases_partition_window() {
        let t = PhaseTable::default();
        let mut counts = [0usize; 4];
        let mut last = 0;
        for n in FIRST_IN_SCOPE_CONGRESS..=LAST_IN_SCOPE_CONGRESS {
            let p = assign_phase(CongressTerm(n), &t).unwrap();
            let hits = t.phases().iter().filter(|ph| ph.contains(CongressTerm(n))).count();
            assert_eq!(hits, 1);
            assert!(p.index >= last);
            last = p.index;
            counts[p.index as usize - 1] += 1;
        }
        assert_eq!(counts, [16, 15, 15, 14]);
        // Phase 4 starts with the congress seated in 1995.
        assert_eq!(congress_years(CongressTerm(104)).unwrap().0, 1995);
    }

    #[test]
    fn phase_table_rejects_gaps() {
        assert!(PhaseTable::new(&[(58, 80), (82, 117)]).is_err());
        assert!(PhaseTable::new(&[(58, 80), (80, 117)]).is_err());
        assert!(PhaseTable::new(&[(58, 100)]).is_err());
        assert!(PhaseTable::new(&[(58, 87), (88, 117)]).is_ok());
    }

    #[test]
    fn validation() {
        let t = PhaseTable::default();
        assert!(validate_politician(&sample(), &t).is_empty());

        let mut dup = sample();
        dup.sections = SectionMap::from_entries(vec![
            Section { heading: "Career".into(), text: "a".into() },
            Section { heading: "career ".into(), text: "b".into() },
        ]);
        let v = validate_politician(&dup, &t);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "heading-uniqueness");

        let mut bad_phase = sample();
        bad_phase.phases = [4].into_iter().collect();
        let v = validate_politician(&bad_phase, &t);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "phase-derivation");
    }

    #[test]
    fn party_invariants() {
        assert!(Party::other("").is_err());
        assert!(Party::other("Independent").unwrap().check().is_ok());
        let bad = Party { kind: PartyKind::Republican, other_label: Some("x".into()) };
        assert!(bad.check().is_err());
        assert_eq!(Party::democratic().binary_label(), Some(1));
        assert_eq!(Party::republican().binary_label(), Some(-1));
    }

    #[test]
    fn push_unique_suffixes() {
        let mut m = SectionMap::new();
        m.push_unique("Career", "a".into());
        m.push_unique("Career", "b".into());
        m.push_unique("career", "c".into());
        let h: Vec<_> = m.headings().collect();
        assert_eq!(h, ["Career", "Career (2)", "career (3)"]);
    }

    #[test]
    fn serialization_round_trip_keeps_validity() {
        let t = PhaseTable::default();
        let p = sample();
        let json = serde_json::to_string(&p).unwrap();
        let back: Politician = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        assert!(validate_politician(&back, &t).is_empty());
    }
}
