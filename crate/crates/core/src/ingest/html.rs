//! Rendered-article HTML handling.

use scraper::{ElementRef, Html};

use super::{collapse_ws, Outline};

const SKIPPED_TAGS: &[&str] = &[
    "table", "figure", "figcaption", "style", "script", "noscript", "math", "img", "audio", "video", "h1",
];

const SKIPPED_CLASSES: &[&str] = &[
    "infobox",
    "navbox",
    "vertical-navbox",
    "reflist",
    "references",
    "reference",
    "mw-references-wrap",
    "mw-editsection",
    "thumb",
    "thumbcaption",
    "gallery",
    "toc",
    "hatnote",
    "metadata",
    "noprint",
    "sidebar",
    "sistersitebox",
    "mw-empty-elt",
    "shortdescription",
];

/// Structural chrome that never contributes prose: tables (infoboxes,
/// navboxes), images and captions, citation markers, edit links.
pub(crate) fn is_chrome(el: &ElementRef<'_>) -> bool {
    let v = el.value();
    if SKIPPED_TAGS.contains(&v.name()) {
        return true;
    }
    if v.attr("role") == Some("navigation") {
        return true;
    }
    v.classes().any(|c| SKIPPED_CLASSES.contains(&c))
}

/// Visible text of an element with chrome removed and whitespace collapsed.
pub(crate) fn text_of(el: &ElementRef<'_>) -> String {
    let mut buf = String::new();
    collect_text(el, &mut buf);
    collapse_ws(&buf)
}

fn collect_text(el: &ElementRef<'_>, buf: &mut String) {
    for child in el.children() {
        if let Some(t) = child.value().as_text() {
            buf.push_str(t);
        } else if let Some(ce) = ElementRef::wrap(child) {
            if is_chrome(&ce) {
                continue;
            }
            if ce.value().name() == "br" {
                buf.push(' ');
            }
            collect_text(&ce, buf);
        }
    }
}

fn heading_level(name: &str) -> Option<u8> {
    match name {
        "h2" => Some(2),
        "h3" => Some(3),
        "h4" => Some(4),
        "h5" => Some(5),
        "h6" => Some(6),
        _ => None,
    }
}

pub(crate) fn outline(html: &str) -> Outline {
    let doc = Html::parse_document(html);
    let mut out = Outline::default();
    walk(&doc.root_element(), &mut out);
    out
}

fn walk(el: &ElementRef<'_>, out: &mut Outline) {
    for child in el.children() {
        let Some(ce) = ElementRef::wrap(child) else { continue };
        if is_chrome(&ce) {
            continue;
        }
        let name = ce.value().name();
        match heading_level(name) {
            Some(2) => out.sections.push((text_of(&ce), Vec::new())),
            // Subsection headings are dropped; their text folds into the
            // enclosing top-level section.
            Some(_) => {}
            None => match name {
                "p" | "li" | "dd" | "dt" | "blockquote" => out.push_paragraph(text_of(&ce)),
                _ => walk(&ce, out),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_subsections_and_drops_chrome() {
        let html = r#"<html><body>
            <table class="infobox"><tr><td>Born 1950</td></tr></table>
            <p>Jane Doe is a politician.<sup class="reference">[1]</sup></p>
            <div class="mw-heading mw-heading2"><h2 id="Early_life">Early life</h2><span class="mw-editsection">[edit]</span></div>
            <p>She grew up.</p>
            <figure><img src="x.jpg"/><figcaption>Caption text</figcaption></figure>
            <h3>Education</h3>
            <p>She studied law.</p>
            <h2>Political career</h2>
            <ul><li>Elected in 1990.</li><li>Re-elected.</li></ul>
            <div class="navbox"><p>Navigation</p></div>
            <h2>References</h2>
            <ol class="references"><li>Cite</li></ol>
        </body></html>"#;
        let o = outline(html);
        assert_eq!(o.lead, ["Jane Doe is a politician."]);
        assert_eq!(o.sections.len(), 3);
        assert_eq!(o.sections[0].0, "Early life");
        assert_eq!(o.sections[0].1, ["She grew up.", "She studied law."]);
        assert_eq!(o.sections[1].1, ["Elected in 1990.", "Re-elected."]);
        assert_eq!(o.sections[2].0, "References");
        assert!(o.sections[2].1.is_empty());
    }
}
