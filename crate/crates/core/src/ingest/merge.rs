use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::RosterEntry;
use crate::corpus::{phases_for_terms, Chamber, Party, PhaseTable, Politician, SectionMap};

/// Maps printed party text to a [`Party`]. Footnote markers and surrounding
/// whitespace are ignored; anything that is not recognizably Democratic or
/// Republican is kept verbatim as `Other`.
pub fn normalize_party(text: &str) -> Party {
    let cleaned: String = {
        let mut s = text.to_string();
        while let (Some(a), Some(b)) = (s.find('['), s.find(']')) {
            if b < a {
                break;
            }
            s.replace_range(a..=b, "");
        }
        s.split_whitespace().collect::<Vec<_>>().join(" ")
    };
    match cleaned.to_lowercase().trim_end_matches('.') {
        "democratic" | "democrat" | "d" | "dem" => Party::democratic(),
        "republican" | "r" | "rep" => Party::republican(),
        "" => Party::other("Unknown").expect("non-empty"),
        _ => Party::other(cleaned).expect("non-empty"),
    }
}

/// Lowercase slug of a page title: alphanumerics kept, everything else
/// collapsed to single hyphens.
pub fn slugify(title: &str) -> String {
    let mut out = String::with_capacity(title.len());
    let mut dash = false;
    for ch in title.chars() {
        if ch.is_alphanumeric() {
            out.extend(ch.to_lowercase());
            dash = false;
        } else if !out.is_empty() && !dash {
            out.push('-');
            dash = true;
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestGap {
    pub title: String,
    pub name: String,
    pub reason: String,
}

/// A person whose roster rows disagree on party. The record is labeled with
/// the party at the most recent in-scope congress.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyConflict {
    pub id: String,
    pub parties: Vec<String>,
    pub chosen: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MergeOutcome {
    pub politicians: Vec<Politician>,
    pub gaps: Vec<IngestGap>,
    pub party_conflicts: Vec<PartyConflict>,
}

fn canonical_title(entry: &RosterEntry) -> String {
    let t = entry.page_title.as_deref().unwrap_or(&entry.name);
    t.replace('_', " ").split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Folds roster rows into one record per person (keyed by page title),
/// unioning congress terms. Entries whose page is missing from `pages` are
/// reported as gaps rather than failing the merge.
pub fn merge_identities(
    entries: &[RosterEntry],
    pages: &HashMap<String, SectionMap>,
    table: &PhaseTable,
) -> MergeOutcome {
    let mut groups: BTreeMap<String, Vec<&RosterEntry>> = BTreeMap::new();
    for e in entries {
        groups.entry(canonical_title(e)).or_default().push(e);
    }

    let mut outcome = MergeOutcome::default();
    let mut drafts: Vec<(String, String, Politician)> = Vec::new();
    for (title, rows) in groups {
        let Some(sections) = pages.get(&title).filter(|s| !s.is_empty()) else {
            outcome.gaps.push(IngestGap {
                title: title.clone(),
                name: rows[0].name.clone(),
                reason: "page not fetched or empty".into(),
            });
            continue;
        };
        let terms: BTreeSet<_> = rows.iter().map(|r| r.congress).collect();
        // Latest congress wins; on ties the Senate row is preferred.
        let latest = rows
            .iter()
            .max_by_key(|r| (r.congress, r.chamber == Chamber::Senate))
            .expect("group is non-empty");
        let phases = match phases_for_terms(&terms, table) {
            Ok(p) => p,
            Err(e) => {
                outcome.gaps.push(IngestGap { title: title.clone(), name: latest.name.clone(), reason: e.to_string() });
                continue;
            }
        };
        let party = normalize_party(&latest.party_text);
        let distinct: BTreeSet<String> = rows.iter().map(|r| normalize_party(&r.party_text).to_string()).collect();
        let slug = slugify(&title);
        if distinct.len() > 1 {
            outcome.party_conflicts.push(PartyConflict {
                id: slug.clone(),
                parties: distinct.into_iter().collect(),
                chosen: party.to_string(),
            });
        }
        let disambiguator = format!("{}-{}", slugify(&latest.state), latest.chamber);
        drafts.push((
            slug.clone(),
            disambiguator,
            Politician {
                id: slug,
                display_name: latest.name.clone(),
                party,
                chamber: latest.chamber,
                terms,
                phases,
                sections: sections.clone(),
                categories: None,
                clean: None,
            },
        ));
    }

    let mut slug_counts: HashMap<String, usize> = HashMap::new();
    for (slug, _, _) in &drafts {
        *slug_counts.entry(slug.clone()).or_default() += 1;
    }
    let mut used: BTreeSet<String> = BTreeSet::new();
    for (slug, disambiguator, mut p) in drafts {
        let mut id = if slug_counts[&slug] > 1 { format!("{slug}-{disambiguator}") } else { slug };
        let base = id.clone();
        let mut n = 2;
        while !used.insert(id.clone()) {
            id = format!("{base}-{n}");
            n += 1;
        }
        if let Some(c) = outcome.party_conflicts.iter_mut().find(|c| c.id == p.id) {
            c.id = id.clone();
        }
        p.id = id;
        outcome.politicians.push(p);
    }
    outcome.politicians.sort_by(|a, b| a.id.cmp(&b.id));
    outcome
}
