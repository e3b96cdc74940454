//! Congress membership pages. Two layouts are recognized in both HTML and
//! wikitext: member tables with name/party columns, and bulleted lists of
//! `Member (Party)` items grouped under Senate/House and state headings.

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;
use scraper::{ElementRef, Html};

use super::html::{is_chrome, text_of};
use super::wikitext::clean_inline;
use super::{collapse_ws, IngestError, Payload, RawPage, RosterEntry};
use crate::corpus::{Chamber, CongressTerm};

static TRAILING_PARTY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\(([^()]+)\)\s*$").unwrap());
static WIKI_LINK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[\[([^\[\]|]+)(?:\|([^\[\]]*))?\]\]").unwrap());
static WIKI_HEADING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(=+)\s*(.*?)\s*(=+)\s*$").unwrap());

#[derive(Debug, Clone, Default)]
struct Cell {
    text: String,
    link: Option<String>,
    header: bool,
    rowspan: usize,
    colspan: usize,
}

/// Heading trail used to infer chamber and state for rows that do not
/// state them.
#[derive(Debug, Default, Clone)]
struct Context {
    headings: Vec<(u8, String)>,
}

impl Context {
    fn enter(&mut self, level: u8, text: String) {
        self.headings.retain(|(l, _)| *l < level);
        self.headings.push((level, text));
    }

    fn chamber(&self) -> Option<Chamber> {
        self.headings.iter().rev().find_map(|(_, h)| chamber_hint(h))
    }

    fn state(&self) -> Option<String> {
        self.headings
            .iter()
            .rev()
            .find(|(_, h)| chamber_hint(h).is_none())
            .filter(|(l, _)| *l >= 3)
            .map(|(_, h)| h.clone())
    }
}

fn chamber_hint(text: &str) -> Option<Chamber> {
    let t = text.to_lowercase();
    if t.contains("senate") || t.contains("senator") {
        Some(Chamber::Senate)
    } else if t.contains("house") || t.contains("representative") {
        Some(Chamber::House)
    } else {
        None
    }
}

#[derive(Debug, Default)]
struct Collector {
    entries: Vec<RosterEntry>,
    seen: HashSet<(String, Chamber, String, Option<String>)>,
    diagnostics: Vec<String>,
    congress: Option<CongressTerm>,
}

impl Collector {
    fn push(&mut self, name: &str, party: &str, state: &str, chamber: Chamber, link: Option<String>) {
        let name = collapse_ws(name);
        if name.is_empty() {
            return;
        }
        let key = (name.clone(), chamber, state.to_string(), link.clone());
        if !self.seen.insert(key) {
            return;
        }
        self.entries.push(RosterEntry {
            name,
            party_text: collapse_ws(party),
            state: state.to_string(),
            chamber,
            congress: self.congress.expect("set before parsing"),
            page_title: link,
        });
    }

    fn table(&mut self, grid: Vec<Vec<Cell>>, caption: &str, ctx: &Context) {
        let Some(header_idx) = grid.iter().position(|r| !r.is_empty() && r.iter().all(|c| c.header)) else {
            self.diagnostics.push("table without header row".into());
            return;
        };
        let headers: Vec<String> = grid[header_idx].iter().map(|c| c.text.to_lowercase()).collect();
        let find = |keys: &[&str]| headers.iter().position(|h| keys.iter().any(|k| h.contains(k)));
        let name_col = find(&["member", "senator", "representative", "name"]);
        let party_col = find(&["party"]);
        let state_col = find(&["state", "district"]);
        let (Some(name_col), Some(party_col)) = (name_col, party_col) else {
            self.diagnostics.push(format!("[{}]", headers.join(" | ")));
            return;
        };
        let chamber = headers
            .iter()
            .find_map(|h| chamber_hint(h))
            .or_else(|| headers.iter().any(|h| h.contains("district")).then_some(Chamber::House))
            .or_else(|| chamber_hint(caption))
            .or_else(|| ctx.chamber());
        let Some(chamber) = chamber else {
            self.diagnostics.push(format!("[{}] (chamber unknown)", headers.join(" | ")));
            return;
        };
        let before = self.entries.len();
        for row in &grid[header_idx + 1..] {
            if row.iter().all(|c| c.header) {
                continue;
            }
            let (Some(name), Some(party)) = (row.get(name_col), row.get(party_col)) else { continue };
            let state = state_col.and_then(|i| row.get(i)).map(|c| c.text.clone()).unwrap_or_default();
            self.push(&name.text, &party.text, &state, chamber, name.link.clone());
        }
        if self.entries.len() == before {
            self.diagnostics.push(format!("[{}] (no member rows)", headers.join(" | ")));
        }
    }

    fn list_item(&mut self, text: &str, links: &[(String, String)], ctx: &Context) {
        let Some(chamber) = ctx.chamber() else { return };
        let Some(caps) = TRAILING_PARTY.captures(text) else { return };
        let party = caps[1].trim().to_string();
        // The member is the last non-numeric link; leading links point at
        // districts or seats.
        let Some((target, label)) = links
            .iter()
            .rev()
            .find(|(_, label)| !label.trim().is_empty() && !label.trim().chars().all(|c| c.is_ascii_digit()))
        else {
            return;
        };
        let state = ctx.state().unwrap_or_default();
        self.push(label, &party, &state, chamber, Some(target.clone()));
    }

    fn finish(self) -> Result<Vec<RosterEntry>, IngestError> {
        if self.entries.is_empty() {
            let seen = if self.diagnostics.is_empty() {
                "no tables or member lists found".to_string()
            } else {
                format!("candidate tables: {}", self.diagnostics.join("; "))
            };
            return Err(IngestError::RosterParse(seen));
        }
        Ok(self.entries)
    }
}

/// Extracts one entry per member row or list item. Party text is kept as
/// printed; identical rows are collapsed.
pub fn parse_roster(page: &RawPage, congress: CongressTerm) -> Result<Vec<RosterEntry>, IngestError> {
    if !congress.in_scope() {
        return Err(IngestError::CongressOutOfRange(congress.0));
    }
    let mut c = Collector { congress: Some(congress), ..Default::default() };
    match &page.payload {
        Payload::Html(h) => {
            let doc = Html::parse_document(h);
            let mut ctx = Context::default();
            walk_html(&doc.root_element(), &mut ctx, &mut c);
        }
        Payload::Wikitext(w) => parse_wikitext(w, &mut c),
        Payload::Sections(_) => {
            return Err(IngestError::RosterParse("pre-parsed section dumps carry no roster tables".into()))
        }
    }
    c.finish()
}

fn href_title(href: &str) -> Option<String> {
    let raw = if let Some(rest) = href.strip_prefix("/wiki/") {
        rest.split(['#', '?']).next().unwrap_or(rest)
    } else if let Some(pos) = href.find("title=") {
        href[pos + 6..].split('&').next().unwrap_or("")
    } else if let Some(pos) = href.find("/wiki/") {
        href[pos + 6..].split(['#', '?']).next().unwrap_or("")
    } else {
        return None;
    };
    let t = percent_decode(raw).replace('_', " ");
    (!t.trim().is_empty()).then(|| t.trim().to_string())
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let Ok(v) = u8::from_str_radix(&s[i + 1..i + 3], 16) {
                out.push(v);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

fn html_links(el: &ElementRef<'_>) -> Vec<(String, String)> {
    let sel = scraper::Selector::parse("a[href]").expect("static selector");
    el.select(&sel)
        .filter_map(|a| {
            let t = href_title(a.value().attr("href")?)?;
            Some((t, collapse_ws(&a.text().collect::<String>())))
        })
        .collect()
}

fn heading_level(name: &str) -> Option<u8> {
    match name {
        "h1" => Some(1),
        "h2" => Some(2),
        "h3" => Some(3),
        "h4" => Some(4),
        "h5" => Some(5),
        "h6" => Some(6),
        _ => None,
    }
}

fn walk_html(el: &ElementRef<'_>, ctx: &mut Context, c: &mut Collector) {
    for child in el.children() {
        let Some(ce) = ElementRef::wrap(child) else { continue };
        let name = ce.value().name();
        if let Some(level) = heading_level(name) {
            ctx.enter(level, text_of(&ce));
            continue;
        }
        match name {
            "table" => {
                if ce.value().classes().any(|cl| cl == "navbox" || cl == "infobox") {
                    continue;
                }
                let (grid, caption) = html_grid(&ce);
                c.table(grid, &caption, ctx);
            }
            "li" => {
                let links = own_links(&ce);
                c.list_item(&own_text(&ce), &links, ctx);
                walk_html(&ce, ctx, c);
            }
            _ if is_chrome(&ce) => {}
            _ => walk_html(&ce, ctx, c),
        }
    }
}

/// Text of a list item excluding nested lists.
fn own_text(li: &ElementRef<'_>) -> String {
    let mut buf = String::new();
    for child in li.children() {
        if let Some(t) = child.value().as_text() {
            buf.push_str(t);
        } else if let Some(ce) = ElementRef::wrap(child) {
            if matches!(ce.value().name(), "ul" | "ol") || is_chrome(&ce) {
                continue;
            }
            buf.push_str(&text_of(&ce));
        }
    }
    collapse_ws(&buf)
}

fn own_links(li: &ElementRef<'_>) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for child in li.children() {
        if let Some(ce) = ElementRef::wrap(child) {
            if matches!(ce.value().name(), "ul" | "ol") {
                continue;
            }
            if ce.value().name() == "a" {
                if let Some(t) = ce.value().attr("href").and_then(href_title) {
                    out.push((t, collapse_ws(&ce.text().collect::<String>())));
                }
            } else {
                out.extend(html_links(&ce));
            }
        }
    }
    out
}

fn span_attr(el: &ElementRef<'_>, name: &str) -> usize {
    el.value().attr(name).and_then(|v| v.trim().parse().ok()).filter(|&n: &usize| n >= 1).unwrap_or(1).min(50)
}

fn html_grid(table: &ElementRef<'_>) -> (Vec<Vec<Cell>>, String) {
    let mut caption = String::new();
    let mut rows = Vec::new();
    collect_rows(table, &mut rows, &mut caption);
    (expand_spans(rows), caption)
}

fn collect_rows(el: &ElementRef<'_>, rows: &mut Vec<Vec<Cell>>, caption: &mut String) {
    for child in el.children() {
        let Some(ce) = ElementRef::wrap(child) else { continue };
        match ce.value().name() {
            "caption" => *caption = text_of(&ce),
            "thead" | "tbody" | "tfoot" => collect_rows(&ce, rows, caption),
            "tr" => {
                let mut row = Vec::new();
                for cell in ce.children().filter_map(ElementRef::wrap) {
                    let n = cell.value().name();
                    if n != "td" && n != "th" {
                        continue;
                    }
                    let link = html_links(&cell).into_iter().next().map(|(t, _)| t);
                    row.push(Cell {
                        text: text_of(&cell),
                        link,
                        header: n == "th",
                        rowspan: span_attr(&cell, "rowspan"),
                        colspan: span_attr(&cell, "colspan"),
                    });
                }
                rows.push(row);
            }
            _ => {}
        }
    }
}

/// Expands row and column spans into a rectangular-ish grid so column
/// indices line up across rows.
fn expand_spans(rows: Vec<Vec<Cell>>) -> Vec<Vec<Cell>> {
    let mut pending: Vec<Option<(Cell, usize)>> = Vec::new();
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let mut expanded: Vec<Cell> = Vec::new();
        let mut cells = row.into_iter();
        let mut col = 0;
        loop {
            if let Some(Some((cell, left))) = pending.get_mut(col) {
                expanded.push(cell.clone());
                *left -= 1;
                if *left == 0 {
                    pending[col] = None;
                }
                col += 1;
                continue;
            }
            let Some(cell) = cells.next() else {
                // Carried cells past the end of this row's own cells.
                if pending.iter().skip(col).any(|p| p.is_some()) {
                    expanded.push(Cell::default());
                    col += 1;
                    continue;
                }
                break;
            };
            for _ in 0..cell.colspan {
                if pending.len() <= col {
                    pending.resize(col + 1, None);
                }
                if cell.rowspan > 1 {
                    pending[col] = Some((cell.clone(), cell.rowspan - 1));
                }
                expanded.push(cell.clone());
                col += 1;
            }
        }
        out.push(expanded);
    }
    out
}

fn wiki_links(raw: &str) -> Vec<(String, String)> {
    WIKI_LINK
        .captures_iter(raw)
        .map(|c| {
            let target = c[1].trim().to_string();
            let label = c.get(2).map(|m| m.as_str()).unwrap_or(&c[1]);
            (target, clean_inline(label))
        })
        .collect()
}

/// Splits `attrs | content` wikitext cell markup.
fn wiki_cell(raw: &str, header: bool) -> Cell {
    let mut attrs = "";
    let mut content = raw;
    // A single pipe outside links separates attributes from content.
    let mut depth = 0i32;
    let b = raw.as_bytes();
    for i in 0..b.len() {
        match b[i] {
            b'[' => depth += 1,
            b']' => depth -= 1,
            b'|' if depth <= 0 => {
                if raw[..i].contains('=') {
                    attrs = &raw[..i];
                    content = &raw[i + 1..];
                }
                break;
            }
            _ => {}
        }
    }
    let attr_num = |name: &str| -> usize {
        let re = Regex::new(&format!(r#"(?i){name}\s*=\s*"?(\d+)"#)).expect("valid");
        re.captures(attrs).and_then(|c| c[1].parse().ok()).filter(|&n: &usize| n >= 1).unwrap_or(1).min(50)
    };
    let link = wiki_links(content).into_iter().next().map(|(t, _)| t);
    Cell {
        text: clean_inline(content),
        link,
        header,
        rowspan: attr_num("rowspan"),
        colspan: attr_num("colspan"),
    }
}

fn split_cells(line: &str, sep: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut last = 0;
    let b = line.as_bytes();
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'[' | b'{' => depth += 1,
            b']' | b'}' => depth -= 1,
            _ => {}
        }
        if depth <= 0 && line[i..].starts_with(sep) {
            out.push(line[last..i].to_string());
            i += sep.len();
            last = i;
            continue;
        }
        i += 1;
    }
    out.push(line[last..].to_string());
    out
}

fn parse_wikitext(src: &str, c: &mut Collector) {
    let mut ctx = Context::default();
    let mut lines = src.lines().peekable();
    while let Some(line) = lines.next() {
        let t = line.trim();
        if let Some(cap) = WIKI_HEADING.captures(t) {
            let level = cap[1].len().min(cap[3].len()) as u8;
            ctx.enter(level, clean_inline(&cap[2]));
            continue;
        }
        if t.starts_with("{|") {
            let mut rows: Vec<Vec<Cell>> = Vec::new();
            let mut caption = String::new();
            let mut current: Vec<Cell> = Vec::new();
            for l in lines.by_ref() {
                let l = l.trim();
                if l.starts_with("|}") {
                    break;
                }
                if l.starts_with("|-") {
                    if !current.is_empty() {
                        rows.push(std::mem::take(&mut current));
                    }
                } else if let Some(cap) = l.strip_prefix("|+") {
                    caption = clean_inline(cap);
                } else if let Some(h) = l.strip_prefix('!') {
                    current.extend(split_cells(h, "!!").iter().map(|s| wiki_cell(s.trim(), true)));
                } else if let Some(d) = l.strip_prefix('|') {
                    current.extend(split_cells(d, "||").iter().map(|s| wiki_cell(s.trim(), false)));
                }
            }
            if !current.is_empty() {
                rows.push(current);
            }
            c.table(expand_spans(rows), &caption, &ctx);
            continue;
        }
        if t.starts_with('*') || t.starts_with('#') {
            let item = t.trim_start_matches(['*', '#']);
            let stripped = item.replace("{{", "").replace("}}", "");
            c.list_item(&clean_inline(&stripped), &wiki_links(item), &ctx);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::PageSource;
    use chrono::Utc;

    fn page(payload: Payload) -> RawPage {
        RawPage { title: "Roster".into(), page_id: None, payload, retrieved_at: Utc::now(), source: PageSource::Fixture }
    }

    #[test]
    fn html_table_three_members() {
        let html = r#"<h2>Senate</h2><table class="wikitable">
            <tr><th>State</th><th>Senator</th><th>Party</th></tr>
            <tr><td rowspan="2">Ohio</td><td><a href="/wiki/Ann_Lee">Ann Lee</a></td><td>Democratic</td></tr>
            <tr><td><a href="/wiki/Bo_Park">Bo Park</a></td><td>Democratic</td></tr>
            <tr><td>Utah</td><td><a href="/wiki/Cy_Ray_(politician)">Cy Ray</a></td><td>Republican</td></tr>
            <tr><td>Utah</td><td><a href="/wiki/Cy_Ray_(politician)">Cy Ray</a></td><td>Republican</td></tr>
        </table>"#;
        let e = parse_roster(&page(Payload::Html(html.into())), CongressTerm(117)).unwrap();
        assert_eq!(e.len(), 3);
        let parties: Vec<_> = e.iter().map(|r| r.party_text.as_str()).collect();
        assert_eq!(parties, ["Democratic", "Democratic", "Republican"]);
        assert_eq!(e[1].state, "Ohio");
        assert_eq!(e[2].page_title.as_deref(), Some("Cy Ray (politician)"));
        assert!(e.iter().all(|r| r.chamber == Chamber::Senate));
    }

    #[test]
    fn empty_table_is_error() {
        let html = r#"<table><tr><th>Member</th><th>Party</th></tr></table>"#;
        let err = parse_roster(&page(Payload::Html(html.into())), CongressTerm(117)).unwrap_err();
        match err {
            IngestError::RosterParse(msg) => assert!(msg.contains("member | party"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn member_in_two_chambers_yields_two_entries() {
        let html = r#"
            <h2>Senate</h2><ul><li>1. <a href="/wiki/Dee_Fox">Dee Fox</a> (R)</li></ul>
            <h2>House of Representatives</h2><h3>Ohio</h3>
            <ul><li><a href="/wiki/Ohio%27s_1st_congressional_district">1</a>. <a href="/wiki/Dee_Fox">Dee Fox</a> (R)</li></ul>"#;
        let e = parse_roster(&page(Payload::Html(html.into())), CongressTerm(80)).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].chamber, Chamber::Senate);
        assert_eq!(e[1].chamber, Chamber::House);
        assert_eq!(e[1].state, "Ohio");
        assert_eq!(e[1].page_title.as_deref(), Some("Dee Fox"));
    }

    #[test]
    fn wikitext_table_and_list() {
        let src = "== Senate ==\n{| class=\"wikitable\"\n! State !! Senator !! Party\n|-\n| Ohio || [[Ann Lee]] || Democratic\n|-\n| Utah || [[Cy Ray (politician)|Cy Ray]] || Republican\n|}\n\
                   == House ==\n=== Iowa ===\n* [[Iowa's 1st congressional district|1]]. [[Eve Moss]] (D)\n";
        let e = parse_roster(&page(Payload::Wikitext(src.into())), CongressTerm(95)).unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!(e[1].name, "Cy Ray");
        assert_eq!(e[1].page_title.as_deref(), Some("Cy Ray (politician)"));
        assert_eq!(e[2].party_text, "D");
        assert_eq!(e[2].state, "Iowa");
        assert_eq!(e[2].chamber, Chamber::House);
    }

    #[test]
    fn out_of_window_congress_rejected() {
        let html = "<table><tr><th>Member</th><th>Party</th></tr><tr><td>A</td><td>D</td></tr></table>";
        assert!(matches!(
            parse_roster(&page(Payload::Html(html.into())), CongressTerm(20)),
            Err(IngestError::CongressOutOfRange(20))
        ));
    }

    #[test]
    fn decoding() {
        assert_eq!(href_title("/wiki/O%27Neill_(x)").as_deref(), Some("O'Neill (x)"));
        assert_eq!(href_title("/w/index.php?title=Red_Link&action=edit&redlink=1").as_deref(), Some("Red Link"));
        assert_eq!(href_title("https://example.org"), None);
    }
}
