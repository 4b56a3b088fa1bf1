//! The Atom subset used on the wire.
//!
//! Output is byte-for-byte deterministic. The parser is namespace-aware and
//! skips anything it does not know.

use super::{Cursor, FeedEntry, Op, SyncError, SyncFeed};
use crate::domain::{NodeId, Version};
use chrono::{DateTime, SecondsFormat, Utc};
use quick_xml::events::{BytesStart, Event};
use quick_xml::name::{Namespace, ResolveResult};
use quick_xml::NsReader;
use std::collections::HashSet;
use std::fmt::Write;

pub const ATOM_NS: &str = "http://www.w3.org/2005/Atom";
pub const SYNC_NS: &str = "urn:carelink:sync";
const FEED_ID_PREFIX: &str = "urn:carelink:feed:";
const ENTRY_ID_PREFIX: &str = "urn:uuid:";

pub fn format_time(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

fn escape_text(s: &str) -> String {
    quick_xml::escape::escape(s).replace('\r', "&#13;")
}

fn escape_attr(s: &str) -> String {
    escape_text(s).replace('\n', "&#10;").replace('\t', "&#9;")
}

pub fn to_atom(feed: &SyncFeed) -> String {
    let updated = feed
        .entries
        .iter()
        .map(|e| e.updated_at)
        .max()
        .unwrap_or(DateTime::UNIX_EPOCH);
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(out, "<feed xmlns=\"{ATOM_NS}\" xmlns:cl=\"{SYNC_NS}\">");
    let _ = writeln!(out, "<id>{}</id>", escape_text(&format!("{FEED_ID_PREFIX}{}:{}", feed.source_node, feed.cursor)));
    let _ = writeln!(out, "<updated>{}</updated>", format_time(updated));
    for e in &feed.entries {
        let _ = writeln!(
            out,
            "<entry><id>{ENTRY_ID_PREFIX}{}</id><updated>{}</updated><title>{}</title>\
             <content type=\"application/json\">{}</content>\
             <cl:sync clock=\"{}\" node=\"{}\" op=\"{}\"/></entry>",
            escape_text(&e.entry_id),
            format_time(e.updated_at),
            escape_text(&e.kind),
            escape_text(&e.content),
            e.version.clock,
            escape_attr(e.version.node.as_str()),
            e.op.as_str(),
        );
    }
    out.push_str("</feed>\n");
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Field {
    FeedId,
    EntryId,
    Updated,
    Title,
    Content,
}

#[derive(Default)]
struct PartialEntry {
    id: Option<String>,
    updated: Option<String>,
    title: Option<String>,
    content: Option<String>,
    sync: Option<(u64, String, Op)>,
}

fn malformed(msg: impl Into<String>) -> SyncError {
    SyncError::MalformedFeed(msg.into())
}

fn xml_err(e: impl std::fmt::Display) -> SyncError {
    malformed(e.to_string())
}

fn parse_time(s: &str) -> Result<DateTime<Utc>, SyncError> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| malformed(format!("bad timestamp {s:?}: {e}")))
}

fn sync_attrs(e: &BytesStart<'_>) -> Result<(u64, String, Op), SyncError> {
    let (mut clock, mut node, mut op) = (None, None, None);
    for attr in e.attributes() {
        let attr = attr.map_err(xml_err)?;
        let value = attr.unescape_value().map_err(xml_err)?.into_owned();
        match attr.key.local_name().as_ref() {
            b"clock" => clock = Some(value.parse::<u64>().map_err(|_| malformed(format!("bad clock {value:?}")))?),
            b"node" => node = Some(value),
            b"op" => op = Some(value.parse::<Op>()?),
            _ => {}
        }
    }
    match (clock, node, op) {
        (Some(c), Some(n), Some(o)) => Ok((c, n, o)),
        _ => Err(malformed("sync element needs clock, node and op")),
    }
}

pub fn parse_atom(xml: &str) -> Result<SyncFeed, SyncError> {
    let mut reader = NsReader::from_str(xml);
    let atom = ResolveResult::Bound(Namespace(ATOM_NS.as_bytes()));
    let ext = ResolveResult::Bound(Namespace(SYNC_NS.as_bytes()));

    let mut depth = 0usize;
    let mut saw_feed = false;
    let mut feed_id: Option<String> = None;
    let mut entry: Option<PartialEntry> = None;
    let mut field: Option<(Field, usize)> = None;
    let mut text = String::new();
    let mut entries = Vec::new();
    let mut seen = HashSet::new();

    loop {
        let (ns, event) = reader.read_resolved_event().map_err(xml_err)?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let empty = matches!(event, Event::Empty(_));
                depth += 1;
                let name = e.local_name();
                let local = name.as_ref();
                let in_atom = ns == atom;
                match (depth, in_atom, local) {
                    (1, true, b"feed") => saw_feed = true,
                    (1, _, _) => return Err(malformed("root element is not an Atom feed")),
                    (2, true, b"id") if entry.is_none() => field = Some((Field::FeedId, depth)),
                    (2, true, b"entry") => entry = Some(PartialEntry::default()),
                    (3, true, b"id") if entry.is_some() => field = Some((Field::EntryId, depth)),
                    (3, true, b"updated") if entry.is_some() => field = Some((Field::Updated, depth)),
                    (3, true, b"title") if entry.is_some() => field = Some((Field::Title, depth)),
                    (3, true, b"content") if entry.is_some() => field = Some((Field::Content, depth)),
                    (3, false, b"sync") if ns == ext => {
                        if let Some(en) = entry.as_mut() {
                            en.sync = Some(sync_attrs(e)?);
                        }
                    }
                    _ => {}
                }
                if field.is_some_and(|(_, d)| d == depth) {
                    text.clear();
                }
                if empty {
                    close(depth, &mut field, &mut text, &mut feed_id, &mut entry, &mut entries, &mut seen)?;
                    depth -= 1;
                }
            }
            Event::Text(t) => {
                if field.is_some() {
                    text.push_str(&t.unescape().map_err(xml_err)?);
                }
            }
            Event::CData(t) => {
                if field.is_some() {
                    text.push_str(std::str::from_utf8(&t).map_err(xml_err)?);
                }
            }
            Event::End(_) => {
                close(depth, &mut field, &mut text, &mut feed_id, &mut entry, &mut entries, &mut seen)?;
                depth -= 1;
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !saw_feed {
        return Err(malformed("no feed element"));
    }
    let feed_id = feed_id.ok_or_else(|| malformed("feed has no id"))?;
    let (node, cursor) = feed_id
        .strip_prefix(FEED_ID_PREFIX)
        .and_then(|rest| rest.rsplit_once(':'))
        .ok_or_else(|| malformed(format!("unrecognised feed id {feed_id:?}")))?;
    let cursor: Cursor = cursor.parse().map_err(|_| malformed(format!("bad cursor in feed id {feed_id:?}")))?;
    Ok(SyncFeed {
        source_node: NodeId::new(node),
        cursor,
        entries,
    })
}

#[allow(clippy::too_many_arguments)]
fn close(
    depth: usize,
    field: &mut Option<(Field, usize)>,
    text: &mut String,
    feed_id: &mut Option<String>,
    entry: &mut Option<PartialEntry>,
    entries: &mut Vec<FeedEntry>,
    seen: &mut HashSet<(String, Version)>,
) -> Result<(), SyncError> {
    if let Some((f, d)) = *field {
        if d == depth {
            let value = std::mem::take(text);
            match f {
                Field::FeedId => *feed_id = Some(value.trim().to_owned()),
                Field::EntryId => entry.as_mut().unwrap().id = Some(value),
                Field::Updated => entry.as_mut().unwrap().updated = Some(value),
                Field::Title => entry.as_mut().unwrap().title = Some(value),
                Field::Content => entry.as_mut().unwrap().content = Some(value),
            }
            *field = None;
        }
    }
    if depth == 2 {
        if let Some(en) = entry.take() {
            let e = finish_entry(en)?;
            if !seen.insert((e.entry_id.clone(), e.version.clone())) {
                return Err(malformed(format!("entry {} at {} repeated", e.entry_id, e.version)));
            }
            entries.push(e);
        }
    }
    Ok(())
}

fn finish_entry(en: PartialEntry) -> Result<FeedEntry, SyncError> {
    let id = en.id.ok_or_else(|| malformed("entry without id"))?;
    let entry_id = id
        .trim()
        .strip_prefix(ENTRY_ID_PREFIX)
        .ok_or_else(|| malformed(format!("entry id {id:?} is not a urn:uuid")))?
        .to_owned();
    let updated_at = parse_time(&en.updated.ok_or_else(|| malformed("entry without updated"))?)?;
    let kind = en.title.ok_or_else(|| malformed("entry without title"))?;
    let content = en.content.ok_or_else(|| malformed("entry without content"))?;
    serde_json::from_str::<serde::de::IgnoredAny>(&content)
        .map_err(|e| malformed(format!("content of {entry_id} is not JSON: {e}")))?;
    let (clock, node, op) = en.sync.ok_or_else(|| malformed(format!("entry {entry_id} lacks sync metadata")))?;
    Ok(FeedEntry {
        entry_id,
        version: Version::new(clock, node),
        kind,
        op,
        updated_at,
        content,
    })
}
