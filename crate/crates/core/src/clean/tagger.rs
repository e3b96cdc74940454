use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::Deserialize;

use super::{CleanError, EntityLabel, EntitySpan};
use crate::corpus::Category;

const LOC_TXT: &str = include_str!("../../data/gazetteers/loc.txt");
const GIVEN_TXT: &str = include_str!("../../data/gazetteers/person_given.txt");
const ORG_TXT: &str = include_str!("../../data/gazetteers/org_suffix.txt");

/// Titles that introduce a person's name. Matched case-sensitively, with an
/// optional trailing period.
const HONORIFICS: &[&str] = &[
    "Senator", "Sen", "Representative", "Rep", "Congressman", "Congresswoman", "Governor", "Gov",
    "President", "Mr", "Mrs", "Ms", "Miss", "Dr", "Judge", "Justice", "Speaker", "General", "Gen",
    "Colonel", "Col", "Major", "Captain", "Capt", "Lieutenant", "Lt", "Admiral", "Mayor", "Secretary",
    "Ambassador", "Reverend", "Rev", "Sir", "Chairman", "Chairwoman",
];

/// Capitalized words that commonly open a sentence and never continue a name.
const NON_NAME: &[&str] = &[
    "The", "A", "An", "He", "She", "His", "Her", "They", "Their", "It", "Its", "In", "On", "At", "As",
    "After", "Before", "During", "When", "While", "From", "For", "With", "By", "Of", "And", "But", "Or",
    "This", "That", "These", "Those", "Following", "Later", "Since", "Upon", "Although", "Born",
];

const ORG_CONNECTORS: &[&str] = &["of", "and", "for", "the", "on", "in", "&"];

fn lines(src: &str) -> impl Iterator<Item = &str> {
    src.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'))
}

/// Word lists backing the rule-based tagger.
#[derive(Debug, Clone)]
pub struct Gazetteer {
    /// Lowercased token sequences.
    loc: Vec<Vec<String>>,
    loc_first: HashMap<String, Vec<usize>>,
    given: HashSet<String>,
    org_suffix: HashSet<String>,
}

impl Gazetteer {
    pub fn from_lists(loc: &str, given: &str, org_suffix: &str) -> Self {
        let mut phrases: Vec<Vec<String>> = lines(loc)
            .map(|l| tokens(l).into_iter().map(|t| t.text.to_lowercase()).collect::<Vec<_>>())
            .filter(|p: &Vec<String>| !p.is_empty())
            .collect();
        phrases.sort();
        phrases.dedup();
        let mut loc_first: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, p) in phrases.iter().enumerate() {
            loc_first.entry(p[0].clone()).or_default().push(i);
        }
        Gazetteer {
            loc: phrases,
            loc_first,
            given: lines(given).map(str::to_string).collect(),
            org_suffix: lines(org_suffix).map(str::to_lowercase).collect(),
        }
    }

    /// The lists compiled into the library.
    pub fn shipped() -> Self {
        Self::from_lists(LOC_TXT, GIVEN_TXT, ORG_TXT)
    }

    /// Reads `loc.txt`, `person_given.txt` and `org_suffix.txt` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, CleanError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| CleanError::Io { path: path.display().to_string(), message: e.to_string() })
        };
        Ok(Self::from_lists(&read("loc.txt")?, &read("person_given.txt")?, &read("org_suffix.txt")?))
    }

    pub fn loc_phrases(&self) -> impl Iterator<Item = &[String]> {
        self.loc.iter().map(Vec::as_slice)
    }

    /// Character spans of every location phrase in `text`, longest match at
    /// each position, scanning left to right without overlap.
    pub fn find_locations(&self, text: &str) -> Vec<(usize, usize)> {
        let chars: Vec<char> = text.chars().collect();
        let toks = tokens_of(&chars);
        let mut out = Vec::new();
        let mut i = 0;
        while i < toks.len() {
            if let Some(n) = self.loc_match(&chars, &toks, i) {
                out.push((toks[i].start, toks[i + n - 1].end));
                i += n;
            } else {
                i += 1;
            }
        }
        out
    }

    fn loc_match(&self, chars: &[char], toks: &[Tok], i: usize) -> Option<usize> {
        let first = toks[i].text.to_lowercase();
        let candidates = self.loc_first.get(&first)?;
        let mut best = None;
        for &c in candidates {
            let phrase = &self.loc[c];
            if i + phrase.len() > toks.len() {
                continue;
            }
            let ok = (1..phrase.len()).all(|k| {
                toks[i + k].text.to_lowercase() == phrase[k] && phrase_gap(&chars[toks[i + k - 1].end..toks[i + k].start])
            });
            if ok && best.is_none_or(|b| phrase.len() > b) {
                best = Some(phrase.len());
            }
        }
        best
    }
}

#[derive(Debug, Clone)]
struct Tok {
    start: usize,
    end: usize,
    text: String,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '-')
}

/// Alphanumeric runs, allowing single apostrophes or hyphens between
/// alphanumerics ("O'Neill", "Smith-Jones"). Offsets are in characters.
fn tokens_of(chars: &[char]) -> Vec<Tok> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !is_word_char(chars[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() {
            if is_word_char(chars[i]) {
                i += 1;
            } else if is_joiner(chars[i]) && i + 1 < chars.len() && is_word_char(chars[i + 1]) {
                i += 2;
            } else {
                break;
            }
        }
        out.push(Tok { start, end: i, text: chars[start..i].iter().collect() });
    }
    out
}

fn tokens(s: &str) -> Vec<Tok> {
    let chars: Vec<char> = s.chars().collect();
    tokens_of(&chars)
}

fn is_title_case(t: &str) -> bool {
    t.chars().next().is_some_and(char::is_uppercase)
}

fn all_space(gap: &[char]) -> bool {
    !gap.is_empty() && gap.iter().all(|c| c.is_whitespace())
}

/// Gap allowed inside a gazetteer phrase: whitespace, optionally after an
/// abbreviation period ("St. Louis").
fn phrase_gap(gap: &[char]) -> bool {
    match gap.split_first() {
        Some(('.', rest)) => all_space(rest),
        _ => all_space(gap),
    }
}

/// Pluggable entity tagger.
pub trait EntityTagger: Send + Sync {
    /// Spans for `text`, the pre-clean text of one category of one document.
    fn tag(&self, doc: &DocRef<'_>, text: &str) -> Result<Vec<EntitySpan>, CleanError>;

    fn kind(&self) -> TaggerKind;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize)]
pub enum TaggerKind {
    RuleBased,
    ExternalFile,
}

/// Identifies the text being tagged, for taggers that look spans up.
#[derive(Debug, Clone, Copy)]
pub struct DocRef<'a> {
    pub id: &'a str,
    pub category: Category,
}

/// Deterministic gazetteer and capitalization heuristics.
#[derive(Debug, Clone)]
pub struct RuleBasedTagger {
    gazetteer: Gazetteer,
}

impl Default for RuleBasedTagger {
    fn default() -> Self {
        Self::new(Gazetteer::shipped())
    }
}

impl RuleBasedTagger {
    pub fn new(gazetteer: Gazetteer) -> Self {
        RuleBasedTagger { gazetteer }
    }

    pub fn gazetteer(&self) -> &Gazetteer {
        &self.gazetteer
    }

    pub fn tag_text(&self, text: &str) -> Vec<EntitySpan> {
        let chars: Vec<char> = text.chars().collect();
        let toks = tokens_of(&chars);
        let g = &self.gazetteer;
        let mut cands: Vec<EntitySpan> = Vec::new();

        // Locations; remember which tokens they cover so names stop there.
        let mut is_loc = vec![false; toks.len()];
        let mut i = 0;
        while i < toks.len() {
            if let Some(n) = g.loc_match(&chars, &toks, i) {
                cands.push(EntitySpan { start: toks[i].start, end: toks[i + n - 1].end, label: EntityLabel::Loc });
                is_loc[i..i + n].iter_mut().for_each(|b| *b = true);
                i += n;
            } else {
                i += 1;
            }
        }

        let honorific = |t: &Tok| HONORIFICS.contains(&t.text.as_str());
        let name_part = |k: usize| {
            let t = &toks[k];
            is_title_case(&t.text)
                && !is_loc[k]
                && !NON_NAME.contains(&t.text.as_str())
                && !HONORIFICS.contains(&t.text.as_str())
                && !g.org_suffix.contains(&t.text.to_lowercase())
        };
        // Name tokens continue over single spaces, or ". " after an initial.
        let joined = |k: usize| {
            let gap = &chars[toks[k].end..toks[k + 1].start];
            all_space(gap) || (toks[k].text.chars().count() == 1 && phrase_gap(gap))
        };
        let name_run = |from: usize| {
            let mut end = from;
            while end + 1 < toks.len() && joined(end) && name_part(end + 1) {
                end += 1;
            }
            end
        };

        for k in 0..toks.len() {
            // Honorific followed by a capitalized run; the title itself is kept.
            if honorific(&toks[k]) && k + 1 < toks.len() && name_part(k + 1) {
                let gap = &chars[toks[k].end..toks[k + 1].start];
                if phrase_gap(gap) {
                    let end = name_run(k + 1);
                    cands.push(EntitySpan { start: toks[k + 1].start, end: toks[end].end, label: EntityLabel::Person });
                }
            }
            // Known given name followed by at least one capitalized token.
            if g.given.contains(&toks[k].text) && name_part(k) && k + 1 < toks.len() && joined(k) && name_part(k + 1) {
                let end = name_run(k);
                cands.push(EntitySpan { start: toks[k].start, end: toks[end].end, label: EntityLabel::Person });
            }
        }

        // Capitalized runs (with lowercase connectors) containing an org word.
        let mut k = 0;
        while k < toks.len() {
            if !is_title_case(&toks[k].text) {
                k += 1;
                continue;
            }
            let mut end = k;
            let mut j = k;
            while j + 1 < toks.len() && all_space(&chars[toks[j].end..toks[j + 1].start]) {
                let next = &toks[j + 1].text;
                if is_title_case(next) {
                    j += 1;
                    end = j;
                } else if ORG_CONNECTORS.contains(&next.as_str()) {
                    j += 1;
                } else {
                    break;
                }
            }
            if (k..=end).any(|m| g.org_suffix.contains(&toks[m].text.to_lowercase()) && is_title_case(&toks[m].text)) {
                let mut start = k;
                while start < end && NON_NAME.contains(&toks[start].text.as_str()) {
                    start += 1;
                }
                cands.push(EntitySpan { start: toks[start].start, end: toks[end].end, label: EntityLabel::Org });
            }
            k = end + 1;
        }

        resolve_overlaps(cands)
    }
}

impl EntityTagger for RuleBasedTagger {
    fn tag(&self, _doc: &DocRef<'_>, text: &str) -> Result<Vec<EntitySpan>, CleanError> {
        Ok(self.tag_text(text))
    }

    fn kind(&self) -> TaggerKind {
        TaggerKind::RuleBased
    }
}

/// Longest span wins; ties go to the earlier start, then PERSON over ORG over
/// LOC. Output is sorted by start.
pub fn resolve_overlaps(mut spans: Vec<EntitySpan>) -> Vec<EntitySpan> {
    spans.sort_by(|a, b| (b.end - b.start).cmp(&(a.end - a.start)).then(a.start.cmp(&b.start)).then(a.label.cmp(&b.label)));
    let mut kept: Vec<EntitySpan> = Vec::with_capacity(spans.len());
    for s in spans {
        if kept.iter().all(|k| s.end <= k.start || s.start >= k.end) {
            kept.push(s);
        }
    }
    kept.sort_by_key(|s| s.start);
    kept
}

#[derive(Deserialize)]
struct ExternalRecord {
    id: String,
    category: Category,
    spans: Vec<(usize, usize, EntityLabel)>,
}

/// Spans supplied by an outside annotator, keyed by politician id and
/// category. Documents absent from the file have no entities.
#[derive(Debug, Clone, Default)]
pub struct ExternalFileTagger {
    spans: HashMap<(String, Category), Vec<EntitySpan>>,
}

impl ExternalFileTagger {
    pub fn parse(jsonl: &str) -> Result<Self, CleanError> {
        let mut spans: HashMap<(String, Category), Vec<EntitySpan>> = HashMap::new();
        for (n, line) in jsonl.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ExternalRecord = serde_json::from_str(line)
                .map_err(|e| CleanError::ExternalFormat { line: n + 1, message: e.to_string() })?;
            let entry = spans.entry((rec.id, rec.category)).or_default();
            entry.extend(rec.spans.into_iter().map(|(start, end, label)| EntitySpan { start, end, label }));
        }
        Ok(ExternalFileTagger { spans })
    }

    pub fn load(path: &Path) -> Result<Self, CleanError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CleanError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text)
    }
}

impl EntityTagger for ExternalFileTagger {
    fn tag(&self, doc: &DocRef<'_>, text: &str) -> Result<Vec<EntitySpan>, CleanError> {
        let Some(spans) = self.spans.get(&(doc.id.to_string(), doc.category)) else {
            return Ok(Vec::new());
        };
        let len = text.chars().count();
        for s in spans {
            if s.start >= s.end || s.end > len {
                return Err(CleanError::SpanAlignment {
                    id: doc.id.to_string(),
                    category: doc.category,
                    start: s.start,
                    end: s.end,
                    text_len: len,
                });
            }
        }
        Ok(resolve_overlaps(spans.clone()))
    }

    fn kind(&self) -> TaggerKind {
        TaggerKind::ExternalFile
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag(text: &str) -> Vec<(usize, usize, EntityLabel)> {
        RuleBasedTagger::default().tag_text(text).into_iter().map(|s| (s.start, s.end, s.label)).collect()
    }

    #[test]
    fn golden_senator() {
        assert_eq!(tag("Senator John Smith of Ohio"), [(8, 18, EntityLabel::Person), (22, 26, EntityLabel::Loc)]);
        assert!(tag("").is_empty());
    }

    #[test]
    fn locations_multiword_and_case() {
        let spans = tag("moved from new york to St. Louis, Missouri");
        let labels: Vec<_> = spans.iter().map(|s| s.2).collect();
        assert_eq!(labels, [EntityLabel::Loc; 3]);
        assert_eq!((spans[1].0, spans[1].1), (23, 32));
        // "West Virginia" beats "Virginia".
        assert_eq!(tag("in West Virginia"), [(3, 16, EntityLabel::Loc)]);
    }

    #[test]
    fn names_orgs() {
        assert_eq!(tag("Mary Jones spoke"), [(0, 10, EntityLabel::Person)]);
        assert_eq!(tag("attended Harvard University in 1950"), [(9, 27, EntityLabel::Org)]);
        assert_eq!(tag("joined the University of Michigan Law School"), [(11, 44, EntityLabel::Org)]);
        assert_eq!(tag("said Sen. John F. Kennedy today"), [(10, 25, EntityLabel::Person)]);
        // Capitalized phrase with no org word is left alone.
        assert!(tag("the Great Depression").is_empty());
        // Sentence-initial words do not join a name.
        assert_eq!(tag("Governor. He left"), []);
    }

    #[test]
    fn org_beats_nested_location() {
        assert_eq!(tag("the Ohio State University board"), [(4, 25, EntityLabel::Org)]);
    }

    #[test]
    fn external_file_alignment() {
        let t = ExternalFileTagger::parse(r#"{"id":"a","category":"political","spans":[[0,4,"PERSON"],[0,2,"LOC"]]}"#).unwrap();
        let doc = DocRef { id: "a", category: Category::Political };
        assert_eq!(t.tag(&doc, "John went").unwrap(), [EntitySpan { start: 0, end: 4, label: EntityLabel::Person }]);
        assert!(matches!(t.tag(&doc, "Jo"), Err(CleanError::SpanAlignment { .. })));
        let other = DocRef { id: "b", category: Category::Political };
        assert!(t.tag(&other, "x").unwrap().is_empty());
        assert!(matches!(ExternalFileTagger::parse("{bad"), Err(CleanError::ExternalFormat { line: 1, .. })));
    }
}
