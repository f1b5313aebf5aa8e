//! Shared domain vocabulary: scenarios, card types, actions, events and
//! labeled impressions, plus the newline-delimited file formats for event
//! logs and impression logs.
//!
//! Event log format (UTF-8, comma separated, header row required):
//!
//! ```text
//! user_id,timestamp,scenario,card_type,action,item_id
//! ```
//!
//! Impression log format:
//!
//! ```text
//! user_id,timestamp,scenario,card_type,item_id,clicked,dwell_seconds
//! ```

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A serving surface. The platform runs two of them with partially
/// overlapping content and very different engagement levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Classic,
    Copilot,
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::Classic, Scenario::Copilot];

    pub fn index(self) -> usize {
        match self {
            Scenario::Classic => 0,
            Scenario::Copilot => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Classic => "classic",
            Scenario::Copilot => "copilot",
        }
    }

    pub fn parse(token: &str) -> Option<Scenario> {
        match token {
            "classic" => Some(Scenario::Classic),
            "copilot" => Some(Scenario::Copilot),
            _ => None,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Content category of a recommended card.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CardType {
    Weather,
    Finance,
    News,
    Video,
    CopilotContent,
}

impl CardType {
    pub const ALL: [CardType; 5] = [
        CardType::Weather,
        CardType::Finance,
        CardType::News,
        CardType::Video,
        CardType::CopilotContent,
    ];

    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        match self {
            CardType::Weather => 0,
            CardType::Finance => 1,
            CardType::News => 2,
            CardType::Video => 3,
            CardType::CopilotContent => 4,
        }
    }

    pub fn from_index(idx: usize) -> Option<CardType> {
        Self::ALL.get(idx).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CardType::Weather => "weather",
            CardType::Finance => "finance",
            CardType::News => "news",
            CardType::Video => "video",
            CardType::CopilotContent => "copilot_content",
        }
    }

    pub fn parse(token: &str) -> Option<CardType> {
        match token {
            "weather" => Some(CardType::Weather),
            "finance" => Some(CardType::Finance),
            "news" => Some(CardType::News),
            "video" => Some(CardType::Video),
            "copilot_content" => Some(CardType::CopilotContent),
            _ => None,
        }
    }
}

impl fmt::Display for CardType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// User action recorded in the event log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    View,
    Click,
}

impl ActionKind {
    pub fn index(self) -> usize {
        match self {
            ActionKind::View => 0,
            ActionKind::Click => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::View => "view",
            ActionKind::Click => "click",
        }
    }

    pub fn parse(token: &str) -> Option<ActionKind> {
        match token {
            "view" => Some(ActionKind::View),
            "click" => Some(ActionKind::Click),
            _ => None,
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One timestamped interaction. Clicks always have a matching view with the
/// same (user, item, timestamp).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub user_id: u64,
    /// Seconds since epoch.
    pub timestamp: i64,
    pub scenario: Scenario,
    pub card_type: CardType,
    pub action: ActionKind,
    pub item_id: u64,
}

impl Event {
    /// Total sort order used when merging per-user streams: timestamp first,
    /// then user, item, and action, so merged logs are reproducible.
    pub fn sort_key(&self) -> (i64, u64, u64, usize) {
        (self.timestamp, self.user_id, self.item_id, self.action.index())
    }
}

/// A labeled serving sample: the user was shown an item and either clicked
/// or not. Every impression also appears in the event log as a view (plus a
/// click event when clicked).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Impression {
    pub user_id: u64,
    pub timestamp: i64,
    pub scenario: Scenario,
    pub card_type: CardType,
    pub item_id: u64,
    pub clicked: bool,
    /// Synthetic post-impression dwell, seconds. Bucketed into the duration
    /// label downstream.
    pub dwell_seconds: f64,
}

pub const EVENT_LOG_HEADER: &str = "user_id,timestamp,scenario,card_type,action,item_id";
pub const IMPRESSION_LOG_HEADER: &str =
    "user_id,timestamp,scenario,card_type,item_id,clicked,dwell_seconds";

pub fn write_event_log<W: Write>(mut w: W, events: &[Event]) -> Result<()> {
    writeln!(w, "{}", EVENT_LOG_HEADER)?;
    for e in events {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            e.user_id, e.timestamp, e.scenario, e.card_type, e.action, e.item_id
        )?;
    }
    Ok(())
}

pub fn read_event_log<R: Read>(r: R) -> Result<Vec<Event>> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err("event log", 1, "empty file, header row required"))??;
    if header.trim() != EVENT_LOG_HEADER {
        return Err(parse_err("event log", 1, format!("bad header {header:?}")));
    }
    let mut events = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let lineno = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(parse_err("event log", lineno, format!("expected 6 fields, got {}", f.len())));
        }
        events.push(Event {
            user_id: parse_field("event log", lineno, f[0], "user_id")?,
            timestamp: parse_field("event log", lineno, f[1], "timestamp")?,
            scenario: Scenario::parse(f[2])
                .ok_or_else(|| parse_err("event log", lineno, format!("unknown scenario {:?}", f[2])))?,
            card_type: CardType::parse(f[3])
                .ok_or_else(|| parse_err("event log", lineno, format!("unknown card_type {:?}", f[3])))?,
            action: ActionKind::parse(f[4])
                .ok_or_else(|| parse_err("event log", lineno, format!("unknown action {:?}", f[4])))?,
            item_id: parse_field("event log", lineno, f[5], "item_id")?,
        });
    }
    Ok(events)
}

pub fn write_impression_log<W: Write>(mut w: W, impressions: &[Impression]) -> Result<()> {
    writeln!(w, "{}", IMPRESSION_LOG_HEADER)?;
    for im in impressions {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            im.user_id,
            im.timestamp,
            im.scenario,
            im.card_type,
            im.item_id,
            im.clicked as u8,
            im.dwell_seconds
        )?;
    }
    Ok(())
}

pub fn read_impression_log<R: Read>(r: R) -> Result<Vec<Impression>> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err("impression log", 1, "empty file, header row required"))??;
    if header.trim() != IMPRESSION_LOG_HEADER {
        return Err(parse_err("impression log", 1, format!("bad header {header:?}")));
    }
    let mut impressions = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let lineno = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(parse_err(
                "impression log",
                lineno,
                format!("expected 7 fields, got {}", f.len()),
            ));
        }
        let clicked: u8 = parse_field("impression log", lineno, f[5], "clicked")?;
        impressions.push(Impression {
            user_id: parse_field("impression log", lineno, f[0], "user_id")?,
            timestamp: parse_field("impression log", lineno, f[1], "timestamp")?,
            scenario: Scenario::parse(f[2])
                .ok_or_else(|| parse_err("impression log", lineno, format!("unknown scenario {:?}", f[2])))?,
            card_type: CardType::parse(f[3])
                .ok_or_else(|| parse_err("impression log", lineno, format!("unknown card_type {:?}", f[3])))?,
            item_id: parse_field("impression log", lineno, f[4], "item_id")?,
            clicked: clicked != 0,
            dwell_seconds: parse_field("impression log", lineno, f[6], "dwell_seconds")?,
        });
    }
    Ok(impressions)
}

fn parse_field<T: std::str::FromStr>(
    context: &str,
    line: usize,
    raw: &str,
    name: &str,
) -> Result<T> {
    raw.parse()
        .map_err(|_| parse_err(context, line, format!("bad {name} value {raw:?}")))
}

fn parse_err(context: &str, line: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        context: context.to_string(),
        line,
        detail: detail.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_events() -> Vec<Event> {
        vec![
            Event {
                user_id: 7,
                timestamp: 1000,
                scenario: Scenario::Classic,
                card_type: CardType::News,
                action: ActionKind::View,
                item_id: 42,
            },
            Event {
                user_id: 7,
                timestamp: 1000,
                scenario: Scenario::Classic,
                card_type: CardType::News,
                action: ActionKind::Click,
                item_id: 42,
            },
        ]
    }

    #[test]
    fn event_log_round_trip() {
        let events = sample_events();
        let mut buf = Vec::new();
        write_event_log(&mut buf, &events).unwrap();
        let back = read_event_log(&buf[..]).unwrap();
        assert_eq!(events, back);
    }

    #[test]
    fn event_log_rejects_bad_header() {
        let err = read_event_log("nope\n1,2,classic,news,view,3\n".as_bytes());
        assert!(matches!(err, Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn event_log_rejects_unknown_scenario() {
        let text = format!("{EVENT_LOG_HEADER}\n1,2,ruby,news,view,3\n");
        let err = read_event_log(text.as_bytes());
        assert!(matches!(err, Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn impression_log_round_trip() {
        let imps = vec![Impression {
            user_id: 3,
            timestamp: 500,
            scenario: Scenario::Copilot,
            card_type: CardType::CopilotContent,
            item_id: 9,
            clicked: true,
            dwell_seconds: 12.5,
        }];
        let mut buf = Vec::new();
        write_impression_log(&mut buf, &imps).unwrap();
        let back = read_impression_log(&buf[..]).unwrap();
        assert_eq!(imps, back);
    }
}
