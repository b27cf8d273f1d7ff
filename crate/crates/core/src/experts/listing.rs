//! Splits model replies into a preamble, numbered items and a coda.
//!
//! An item starts on a line of the form `N.` or `N)` indented by at most three
//! spaces. Following lines belong to the item until the next item start,
//! except that an unindented paragraph after a blank line (not itself a
//! bullet) ends the item. Such a paragraph becomes the `lead` of the next
//! item, or the coda if no item follows.

use std::sync::OnceLock;

use regex::Regex;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListItem {
    pub number: u32,
    /// Unnumbered paragraph(s) between the previous item and this one.
    pub lead: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Listing {
    pub preamble: String,
    pub items: Vec<ListItem>,
    pub coda: String,
}

fn item_start() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^ {0,3}(\d{1,3})[.)](?:\s+(.*))?$").expect("valid regex"))
}

fn is_bullet(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with("- ") || t.starts_with("* ") || t.starts_with("• ")
}

fn join(lines: &[&str]) -> String {
    let text = lines.join("\n");
    text.trim().to_string()
}

pub fn split_listing(raw: &str) -> Listing {
    enum Section {
        Preamble,
        Item,
        Between,
    }

    let mut listing = Listing::default();
    let mut preamble: Vec<&str> = Vec::new();
    let mut between: Vec<&str> = Vec::new();
    let mut current: Option<(u32, String, Vec<&str>)> = None;
    let mut section = Section::Preamble;
    let mut blank_before = false;

    for line in raw.lines() {
        if let Some(caps) = item_start().captures(line) {
            if let Some((number, lead, body)) = current.take() {
                listing.items.push(ListItem {
                    number,
                    lead,
                    text: join(&body),
                });
            }
            let number = caps[1].parse().unwrap_or(0);
            let first = caps.get(2).map_or("", |m| m.as_str());
            let lead = join(&between);
            between.clear();
            current = Some((number, lead, vec![first]));
            section = Section::Item;
            blank_before = false;
            continue;
        }
        let blank = line.trim().is_empty();
        match section {
            Section::Preamble => preamble.push(line),
            Section::Item => {
                let unindented = !line.starts_with(' ') && !line.starts_with('\t');
                if blank_before && !blank && unindented && !is_bullet(line) {
                    if let Some((number, lead, body)) = current.take() {
                        listing.items.push(ListItem {
                            number,
                            lead,
                            text: join(&body),
                        });
                    }
                    between.push(line);
                    section = Section::Between;
                } else if let Some((_, _, body)) = current.as_mut() {
                    body.push(line);
                }
            }
            Section::Between => between.push(line),
        }
        blank_before = blank;
    }
    if let Some((number, lead, body)) = current.take() {
        listing.items.push(ListItem {
            number,
            lead,
            text: join(&body),
        });
    }
    listing.preamble = join(&preamble);
    listing.coda = join(&between);
    listing
}
