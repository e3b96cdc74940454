//! Minimal wikitext reader: strips templates, tables, references and file
//! links, resolves internal links to their labels, and splits on headings.
//! No template expansion is attempted.

use std::sync::LazyLock;

use regex::Regex;

use super::{collapse_ws, Outline};

static COMMENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<!--.*?-->").unwrap());
static REF_PAIR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<ref[^>/]*>.*?</ref\s*>").unwrap());
static REF_SELF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)<ref[^>]*/>").unwrap());
static GALLERY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<gallery[^>]*>.*?</gallery\s*>").unwrap());
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"</?[a-zA-Z][^>]*>").unwrap());
static HEADING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(=+)\s*(.*?)\s*(=+)\s*$").unwrap());
static EXT_LINK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[(?:https?:)?//[^\s\]]+\s*([^\]]*)\]").unwrap());
static MAGIC: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"__[A-Z]+__").unwrap());

/// Removes balanced `open ... close` regions, honoring nesting.
fn strip_balanced(s: &str, open: &str, close: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut depth = 0usize;
    let mut i = 0;
    let bytes = s.as_bytes();
    while i < bytes.len() {
        if s[i..].starts_with(open) {
            depth += 1;
            i += open.len();
        } else if depth > 0 && s[i..].starts_with(close) {
            depth -= 1;
            i += close.len();
        } else {
            let ch = s[i..].chars().next().expect("in bounds");
            if depth == 0 {
                out.push(ch);
            }
            i += ch.len_utf8();
        }
    }
    out
}

/// Drops `{| ... |}` tables, which are line-delimited.
fn strip_tables(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut depth = 0usize;
    for line in s.lines() {
        let t = line.trim_start();
        if t.starts_with("{|") {
            depth += 1;
            continue;
        }
        if depth > 0 {
            if t.starts_with("|}") {
                depth -= 1;
            }
            continue;
        }
        out.push_str(line);
        out.push('\n');
    }
    out
}

const DROPPED_NAMESPACES: &[&str] = &["file:", "image:", "category:", "media:"];

/// Resolves `[[target|label]]` to `label` and `[[target]]` to `target`,
/// dropping file, image and category links entirely (including nested
/// links inside their captions).
fn resolve_links(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(start) = rest.find("[[") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        // Find the matching close, accounting for nesting.
        let mut depth = 1usize;
        let mut j = 0;
        let b = after.as_bytes();
        while j < b.len() && depth > 0 {
            if after[j..].starts_with("[[") {
                depth += 1;
                j += 2;
            } else if after[j..].starts_with("]]") {
                depth -= 1;
                j += 2;
            } else {
                j += after[j..].chars().next().map_or(1, |c| c.len_utf8());
            }
        }
        let inner_end = if depth == 0 { j - 2 } else { after.len() };
        let inner = &after[..inner_end];
        let lower = inner.trim_start().to_lowercase();
        if !DROPPED_NAMESPACES.iter().any(|ns| lower.starts_with(ns)) {
            let label = match inner.rfind('|') {
                Some(p) => &inner[p + 1..],
                None => inner,
            };
            out.push_str(&resolve_links(label));
        }
        rest = &after[j.min(after.len())..];
    }
    out.push_str(rest);
    out
}

pub(crate) fn clean_inline(s: &str) -> String {
    let s = resolve_links(s);
    let s = EXT_LINK.replace_all(&s, "$1");
    let s = TAG.replace_all(&s, "");
    let s = s.replace("'''", "").replace("''", "").replace("&nbsp;", " ");
    collapse_ws(&s)
}

fn strip_blocks(src: &str) -> String {
    let s = COMMENT.replace_all(src, "");
    let s = REF_PAIR.replace_all(&s, "");
    let s = REF_SELF.replace_all(&s, "");
    let s = GALLERY.replace_all(&s, "");
    let s = strip_balanced(&s, "{{", "}}");
    let s = strip_tables(&s);
    MAGIC.replace_all(&s, "").into_owned()
}

pub(crate) fn outline(src: &str) -> Outline {
    let body = strip_blocks(src);
    let mut out = Outline::default();
    let mut para = String::new();
    let flush = |para: &mut String, out: &mut Outline| {
        let text = clean_inline(para);
        para.clear();
        out.push_paragraph(text);
    };
    for line in body.lines() {
        let trimmed = line.trim();
        if let Some(c) = HEADING.captures(trimmed) {
            flush(&mut para, &mut out);
            let level = c[1].len().min(c[3].len());
            if level <= 2 {
                out.sections.push((clean_inline(&c[2]), Vec::new()));
            }
            continue;
        }
        if trimmed.is_empty() {
            flush(&mut para, &mut out);
            continue;
        }
        if trimmed.starts_with(['*', '#', ':', ';']) {
            flush(&mut para, &mut out);
            let item = trimmed.trim_start_matches(['*', '#', ':', ';']);
            para.push_str(item);
            flush(&mut para, &mut out);
            continue;
        }
        if !para.is_empty() {
            para.push(' ');
        }
        para.push_str(trimmed);
    }
    flush(&mut para, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn links_and_files() {
        assert_eq!(resolve_links("[[Ohio|the state]] and [[Texas]]"), "the state and Texas");
        assert_eq!(resolve_links("a [[File:x.jpg|thumb|A [[b]] caption]] c"), "a  c");
        assert_eq!(clean_inline("'''Jane''' was [https://x.org a site] here"), "Jane was a site here");
    }

    #[test]
    fn outline_structure() {
        let src = "{{Infobox officeholder\n| name = Jane {{nowrap|Doe}}\n}}\n\
                   '''Jane Doe''' is a [[politician]].<ref>Cite</ref>\n\n\
                   == Early life ==\nShe grew up.<ref name=\"a\"/>\n\n=== Education ===\nLaw school.\n\n\
                   {| class=\"wikitable\"\n|-\n| 1990 || won\n|}\n\
                   == Political career ==\n* Elected.\n* Re-elected.\n";
        let o = outline(src);
        assert_eq!(o.lead, ["Jane Doe is a politician."]);
        assert_eq!(o.sections[0], ("Early life".to_string(), vec!["She grew up.".to_string(), "Law school.".to_string()]));
        assert_eq!(o.sections[1].1, ["Elected.", "Re-elected."]);
    }
}
