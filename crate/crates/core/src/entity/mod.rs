//! Rule-based entity recognition: dates, times, phone numbers, frequencies,
//! plus context-gated person names and task text.

mod rules;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use chrono::{Datelike, Days, NaiveDate};
use serde::{Deserialize, Serialize};

pub use rules::{RuleError, RULES_VERSION};

/// Grammar shipped with the crate.
pub const DEFAULT_RULES: &str = include_str!("../../data/entity_rules.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityType {
    Date,
    Time,
    Phone,
    Frequency,
    PersonName,
    TaskText,
}

impl EntityType {
    pub const ALL: [EntityType; 6] = [
        EntityType::Date,
        EntityType::Time,
        EntityType::Phone,
        EntityType::Frequency,
        EntityType::PersonName,
        EntityType::TaskText,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Date => "date",
            EntityType::Time => "time",
            EntityType::Phone => "phone",
            EntityType::Frequency => "frequency",
            EntityType::PersonName => "person_name",
            EntityType::TaskText => "task_text",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        EntityType::ALL.into_iter().find(|t| t.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NameRole {
    User,
    Assistant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyKind {
    Once,
    Hourly,
    Daily,
    Weekly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frequency {
    pub kind: FrequencyKind,
    pub interval: u32,
}

impl Frequency {
    pub const ONCE: Frequency = Frequency {
        kind: FrequencyKind::Once,
        interval: 1,
    };
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let unit = match self.kind {
            FrequencyKind::Once => return f.write_str("once"),
            FrequencyKind::Hourly => "hour",
            FrequencyKind::Daily => "day",
            FrequencyKind::Weekly => "week",
        };
        if self.interval == 1 {
            write!(f, "every {unit}")
        } else {
            write!(f, "every {} {unit}s", self.interval)
        }
    }
}

/// Normalized date. Relative markers stay relative until resolved against
/// an injected "today".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DateValue {
    Today,
    Tomorrow,
    /// 0 = Monday.
    Weekday { weekday: u8 },
    DayMonth { day: u8, month: u8 },
    Calendar { date: NaiveDate },
}

const MONTH_NAMES: [&str; 12] = [
    "January", "February", "March", "April", "May", "June", "July", "August", "September", "October",
    "November", "December",
];
const WEEKDAY_NAMES: [&str; 7] = ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday"];

impl DateValue {
    /// Next calendar date on or after `today` that this value denotes.
    pub fn resolve(self, today: NaiveDate) -> Option<NaiveDate> {
        match self {
            DateValue::Today => Some(today),
            DateValue::Tomorrow => today.checked_add_days(Days::new(1)),
            DateValue::Weekday { weekday } => {
                let cur = today.weekday().num_days_from_monday() as u64;
                let ahead = (weekday as u64 + 7 - cur) % 7;
                today.checked_add_days(Days::new(ahead))
            }
            DateValue::DayMonth { day, month } => {
                let this_year = NaiveDate::from_ymd_opt(today.year(), month.into(), day.into());
                match this_year {
                    Some(d) if d >= today => Some(d),
                    _ => (1..=8)
                        .find_map(|k| NaiveDate::from_ymd_opt(today.year() + k, month.into(), day.into())),
                }
            }
            DateValue::Calendar { date } => Some(date),
        }
    }
}

impl fmt::Display for DateValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DateValue::Today => f.write_str("today"),
            DateValue::Tomorrow => f.write_str("tomorrow"),
            DateValue::Weekday { weekday } => f.write_str(WEEKDAY_NAMES[weekday as usize % 7]),
            DateValue::DayMonth { day, month } => {
                write!(f, "{day} {}", MONTH_NAMES[(month as usize + 11) % 12])
            }
            DateValue::Calendar { date } => {
                let wd = WEEKDAY_NAMES[date.weekday().num_days_from_monday() as usize];
                write!(f, "{}, {} {}", &wd[..3], date.day(), MONTH_NAMES[date.month0() as usize])
            }
        }
    }
}

/// Minutes since midnight as a 12-hour clock string, e.g. `2:00 PM`.
pub fn format_clock(minutes: u16) -> String {
    let h = minutes / 60;
    let m = minutes % 60;
    let suffix = if h >= 12 { "PM" } else { "AM" };
    let h12 = match h % 12 {
        0 => 12,
        x => x,
    };
    alloc::format!("{h12}:{m:02} {suffix}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EntityValue {
    Date(DateValue),
    Time { minutes: u16 },
    Phone { digits: String },
    Frequency(Frequency),
    Person { name: String, role: NameRole },
    Task { text: String },
}

impl EntityValue {
    pub fn entity_type(&self) -> EntityType {
        match self {
            EntityValue::Date(_) => EntityType::Date,
            EntityValue::Time { .. } => EntityType::Time,
            EntityValue::Phone { .. } => EntityType::Phone,
            EntityValue::Frequency(_) => EntityType::Frequency,
            EntityValue::Person { .. } => EntityType::PersonName,
            EntityValue::Task { .. } => EntityType::TaskText,
        }
    }

    /// Placeholder tag substituted for the surface text in training data.
    pub fn tag(&self) -> &'static str {
        match self {
            EntityValue::Date(_) => "_date_",
            EntityValue::Time { .. } => "_time_",
            EntityValue::Phone { .. } => "_phone_number_",
            EntityValue::Frequency(_) => "_frequency_",
            EntityValue::Person { role: NameRole::User, .. } => "_user_name_",
            EntityValue::Person { role: NameRole::Assistant, .. } => "_assistant_name_",
            EntityValue::Task { .. } => "_task_",
        }
    }
}

impl fmt::Display for EntityValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntityValue::Date(d) => d.fmt(f),
            EntityValue::Time { minutes } => f.write_str(&format_clock(*minutes)),
            EntityValue::Phone { digits } => f.write_str(digits),
            EntityValue::Frequency(freq) => freq.fmt(f),
            EntityValue::Person { name, .. } => f.write_str(name),
            EntityValue::Task { text } => f.write_str(text),
        }
    }
}

/// One extraction. `start`/`end` are character (not byte) offsets into the
/// text the span was extracted from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub entity_type: EntityType,
    pub surface: String,
    pub start: usize,
    pub end: usize,
    pub value: EntityValue,
}

/// "Entities collected so far" for a session: one value per type, latest wins.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySet {
    values: BTreeMap<EntityType, EntityValue>,
}

impl EntitySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, ty: EntityType) -> Option<&EntityValue> {
        self.values.get(&ty)
    }

    pub fn contains(&self, ty: EntityType) -> bool {
        self.values.contains_key(&ty)
    }

    pub fn insert(&mut self, value: EntityValue) {
        self.values.insert(value.entity_type(), value);
    }

    pub fn remove(&mut self, ty: EntityType) -> Option<EntityValue> {
        self.values.remove(&ty)
    }

    pub fn clear(&mut self) {
        self.values.clear();
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (EntityType, &EntityValue)> {
        self.values.iter().map(|(k, v)| (*k, v))
    }
}

/// Per-type overwrite of `set` with `spans`, in span order.
pub fn merge_into(mut set: EntitySet, spans: &[EntitySpan]) -> EntitySet {
    for span in spans {
        set.insert(span.value.clone());
    }
    set
}

/// Leading phrases stripped before a gated name or task capture.
const NAME_PREFIXES: &[&str] = &["my name is", "this is", "i am", "im", "call me", "it is", "its"];
const TASK_PREFIXES: &[&str] = &["remind me to", "remind me about", "remind me", "about", "to"];

#[derive(Debug, Clone)]
pub struct Recognizer {
    rules: Vec<rules::Rule>,
}

impl Default for Recognizer {
    fn default() -> Self {
        Self::from_rules(DEFAULT_RULES).expect("shipped entity rules parse")
    }
}

impl Recognizer {
    pub fn from_rules(doc: &str) -> Result<Self, RuleError> {
        Ok(Recognizer {
            rules: rules::parse_rules(doc)?,
        })
    }

    /// Adds lexicon rules for known user and assistant names, e.g. from
    /// conversation metadata.
    pub fn with_names<'a>(
        mut self,
        users: impl IntoIterator<Item = &'a str>,
        assistants: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self, RuleError> {
        let mut doc = String::from("version 1\n");
        for (names, role) in [(users.into_iter().collect::<Vec<_>>(), "user"), (assistants.into_iter().collect(), "assistant")] {
            for name in names {
                let name = name.trim();
                if !name.is_empty() {
                    doc.push_str(&alloc::format!("person_name {name} -> name:{role}\n"));
                }
            }
        }
        self.rules.extend(rules::parse_rules(&doc)?);
        Ok(self)
    }

    /// Non-overlapping spans sorted by start. At each token the longest rule
    /// match wins, ties going to the earlier rule.
    pub fn extract(&self, text: &str) -> Vec<EntitySpan> {
        let chars: Vec<char> = text.chars().collect();
        let toks = rules::tokenize(text);
        let mut spans = Vec::new();
        let mut ti = 0;
        while ti < toks.len() {
            let mut best: Option<(usize, EntityType, EntityValue)> = None;
            for rule in &self.rules {
                let surface_of = |end: usize| -> String {
                    chars[toks[ti].start..toks[end - 1].end].iter().collect()
                };
                if let Some((end, value)) = rule.match_at(&toks, ti) {
                    let value = match value {
                        EntityValue::Person { role, .. } => EntityValue::Person {
                            name: surface_of(end),
                            role,
                        },
                        v => v,
                    };
                    if !rules::clean_boundaries(&toks, ti, end) {
                        continue;
                    }
                    if best.as_ref().is_none_or(|(b, _, _)| end > *b) {
                        best = Some((end, rule.entity_type, value));
                    }
                }
            }
            match best {
                Some((end, entity_type, value)) => {
                    let (start, stop) = (toks[ti].start, toks[end - 1].end);
                    spans.push(EntitySpan {
                        entity_type,
                        surface: chars[start..stop].iter().collect(),
                        start,
                        end: stop,
                        value,
                    });
                    ti = end;
                }
                None => ti += 1,
            }
        }
        spans
    }

    /// Like [`extract`](Self::extract), but when the dialogue is waiting for
    /// a person name or free task text, also captures that from the text
    /// outside the rule spans.
    pub fn extract_gated(&self, text: &str, expected: Option<EntityType>) -> Vec<EntitySpan> {
        let mut spans = self.extract(text);
        let gated = match expected {
            Some(t @ (EntityType::PersonName | EntityType::TaskText)) => t,
            _ => return spans,
        };
        if spans.iter().any(|s| s.entity_type == gated) {
            return spans;
        }
        let chars: Vec<char> = text.chars().collect();
        let limit = spans.first().map_or(chars.len(), |s| s.start);
        let prefixes = if gated == EntityType::PersonName {
            NAME_PREFIXES
        } else {
            TASK_PREFIXES
        };
        if let Some((start, end)) = free_text_region(&chars[..limit], prefixes) {
            let surface: String = chars[start..end].iter().collect();
            let cleaned = crate::text::normalize_query(&surface).join(" ");
            if !cleaned.is_empty() {
                let value = if gated == EntityType::PersonName {
                    EntityValue::Person {
                        name: surface.clone(),
                        role: NameRole::User,
                    }
                } else {
                    EntityValue::Task { text: cleaned }
                };
                spans.insert(
                    0,
                    EntitySpan {
                        entity_type: gated,
                        surface,
                        start,
                        end,
                        value,
                    },
                );
            }
        }
        spans
    }

    /// Replaces every span surface with its placeholder tag. Returned spans
    /// describe the original text.
    pub fn replace_with_tags(&self, text: &str) -> (String, Vec<EntitySpan>) {
        let spans = self.extract(text);
        (apply_tags(text, &spans), spans)
    }
}

/// Substitutes tags right to left so earlier offsets stay valid.
pub fn apply_tags(text: &str, spans: &[EntitySpan]) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    for span in spans.iter().rev() {
        chars.splice(span.start..span.end, span.value.tag().chars());
    }
    chars.into_iter().collect()
}

/// Trimmed region of `chars` after stripping one leading prefix phrase and
/// surrounding punctuation.
fn free_text_region(chars: &[char], prefixes: &[&str]) -> Option<(usize, usize)> {
    let is_edge_junk = |c: &char| !c.is_alphanumeric();
    let mut start = chars.iter().position(|c| !is_edge_junk(c))?;
    let mut end = chars.len() - chars.iter().rev().position(|c| !is_edge_junk(c))?;
    let lower: String = chars[start..end].iter().flat_map(|c| c.to_lowercase()).collect();
    for prefix in prefixes {
        if let Some(rest) = lower.strip_prefix(prefix) {
            if rest.is_empty() || rest.starts_with(' ') {
                start += prefix.chars().count();
                break;
            }
        }
    }
    while start < end && is_edge_junk(&chars[start]) {
        start += 1;
    }
    while end > start && is_edge_junk(&chars[end - 1]) {
        end -= 1;
    }
    // Trailing connectives left over from removed entity spans.
    loop {
        let region: String = chars[start..end].iter().collect::<String>().to_lowercase();
        let trimmed = ["at", "on", "by", "for", "every"]
            .iter()
            .find(|w| region.ends_with(&alloc::format!(" {w}")));
        match trimmed {
            Some(w) => {
                end -= w.len() + 1;
                while end > start && is_edge_junk(&chars[end - 1]) {
                    end -= 1;
                }
            }
            None => break,
        }
    }
    (start < end).then_some((start, end))
}

impl fmt::Display for EntitySpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({:?}, {})", self.entity_type, self.surface, self.value)
    }
}
