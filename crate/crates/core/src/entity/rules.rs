//! Rules-file parser and the token-level pattern matcher behind the
//! entity recognizer.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::str::FromStr;

use super::{DateValue, EntityType, EntityValue, Frequency, FrequencyKind, NameRole};

pub const RULES_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unsupported rules version {0} (expected {RULES_VERSION})")]
    Version(u32),
    #[error("rules file has no `version` line")]
    MissingVersion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TokKind {
    Word,
    Number,
    /// `_`-joined run such as `_time_`; never matched by any rule.
    Opaque,
    Punct,
}

#[derive(Debug, Clone)]
pub(crate) struct Tok {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub kind: TokKind,
}

impl Tok {
    fn is_alnum(&self) -> bool {
        matches!(self.kind, TokKind::Word | TokKind::Number | TokKind::Opaque)
    }
}

/// Splits `text` into word, number, opaque-tag and punctuation tokens with
/// character offsets. Letter/digit boundaries split a run, so `7am` yields
/// `7` and `am` with touching offsets.
pub(crate) fn tokenize(text: &str) -> Vec<Tok> {
    #[derive(PartialEq, Clone, Copy)]
    enum Class {
        Letter,
        Digit,
        Joiner,
        Space,
        Punct,
    }
    fn class(c: char) -> Class {
        if c.is_ascii_digit() {
            Class::Digit
        } else if c == '_' {
            Class::Joiner
        } else if c.is_alphabetic() {
            Class::Letter
        } else if c.is_whitespace() {
            Class::Space
        } else {
            Class::Punct
        }
    }

    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        match class(chars[i]) {
            Class::Space => i += 1,
            Class::Punct => {
                toks.push(Tok {
                    text: chars[i].to_string(),
                    start: i,
                    end: i + 1,
                    kind: TokKind::Punct,
                });
                i += 1;
            }
            _ => {
                let start = i;
                while i < chars.len()
                    && matches!(class(chars[i]), Class::Letter | Class::Digit | Class::Joiner)
                {
                    i += 1;
                }
                let run = &chars[start..i];
                if run.contains(&'_') {
                    toks.push(Tok {
                        text: run.iter().flat_map(|c| c.to_lowercase()).collect(),
                        start,
                        end: i,
                        kind: TokKind::Opaque,
                    });
                    continue;
                }
                let mut s = start;
                while s < i {
                    let digit = chars[s].is_ascii_digit();
                    let mut e = s;
                    while e < i && chars[e].is_ascii_digit() == digit {
                        e += 1;
                    }
                    toks.push(Tok {
                        text: chars[s..e].iter().flat_map(|c| c.to_lowercase()).collect(),
                        start: s,
                        end: e,
                        kind: if digit { TokKind::Number } else { TokKind::Word },
                    });
                    s = e;
                }
            }
        }
    }
    toks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Class {
    Hour12,
    Hour24,
    Minute,
    AmPm,
    Day,
    MonthNum,
    Month,
    Weekday,
    Number,
    Phone,
}

impl FromStr for Class {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "hour12" => Class::Hour12,
            "hour24" => Class::Hour24,
            "minute" => Class::Minute,
            "ampm" => Class::AmPm,
            "day" => Class::Day,
            "monthnum" => Class::MonthNum,
            "month" => Class::Month,
            "weekday" => Class::Weekday,
            "number" => Class::Number,
            "phone" => Class::Phone,
            _ => return Err(()),
        })
    }
}

const MONTHS: [&[&str]; 12] = [
    &["jan", "january"],
    &["feb", "february"],
    &["mar", "march"],
    &["apr", "april"],
    &["may"],
    &["jun", "june"],
    &["jul", "july"],
    &["aug", "august"],
    &["sep", "sept", "september"],
    &["oct", "october"],
    &["nov", "november"],
    &["dec", "december"],
];

const WEEKDAYS: [&[&str]; 7] = [
    &["mon", "monday"],
    &["tue", "tues", "tuesday"],
    &["wed", "wednesday"],
    &["thu", "thur", "thurs", "thursday"],
    &["fri", "friday"],
    &["sat", "saturday"],
    &["sun", "sunday"],
];

fn small_number(tok: &Tok, max_digits: usize) -> Option<u32> {
    if tok.kind != TokKind::Number || tok.text.len() > max_digits {
        return None;
    }
    tok.text.parse().ok()
}

impl Class {
    /// Value captured when `tok` belongs to the class.
    fn accept(self, tok: &Tok) -> Option<u32> {
        match self {
            Class::Hour12 => small_number(tok, 2).filter(|h| (1..=12).contains(h)),
            Class::Hour24 => small_number(tok, 2).filter(|h| *h <= 23),
            Class::Minute => {
                (tok.text.len() == 2).then_some(())?;
                small_number(tok, 2).filter(|m| *m <= 59)
            }
            Class::AmPm => match tok.text.as_str() {
                "am" => Some(0),
                "pm" => Some(1),
                _ => None,
            },
            Class::Day => small_number(tok, 2).filter(|d| (1..=31).contains(d)),
            Class::MonthNum => small_number(tok, 2).filter(|m| (1..=12).contains(m)),
            Class::Month => MONTHS
                .iter()
                .position(|names| names.contains(&tok.text.as_str()))
                .map(|i| i as u32 + 1),
            Class::Weekday => WEEKDAYS
                .iter()
                .position(|names| names.contains(&tok.text.as_str()))
                .map(|i| i as u32),
            Class::Number => small_number(tok, 2).filter(|n| *n >= 1),
            Class::Phone => {
                let ok = tok.kind == TokKind::Number && (10..=12).contains(&tok.text.len());
                ok.then_some(0)
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Elem {
    Lit(Vec<String>),
    Class(Class),
    Punct { ch: char, tight: bool },
    Opt(Box<Elem>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Recipe {
    Clock12,
    Clock24,
    Minutes(u16),
    DateToday,
    DateTomorrow,
    Weekday,
    DayMonth,
    Digits,
    Freq { kind: FrequencyKind, from_number: bool },
    Name(NameRole),
}

#[derive(Debug, Clone)]
pub(crate) struct Rule {
    pub entity_type: EntityType,
    elems: Vec<Elem>,
    recipe: Recipe,
}

fn syntax(line: usize, message: impl Into<String>) -> RuleError {
    RuleError::Syntax {
        line,
        message: message.into(),
    }
}

fn parse_atom(word: &str, line: usize) -> Result<Elem, RuleError> {
    if let Some(inner) = word.strip_prefix('{').and_then(|w| w.strip_suffix('}')) {
        return inner
            .parse()
            .map(Elem::Class)
            .map_err(|_| syntax(line, alloc::format!("unknown class {{{inner}}}")));
    }
    if let Some(inner) = word.strip_prefix('(').and_then(|w| w.strip_suffix(')')) {
        let alts: Vec<String> = inner.split('|').map(|a| a.to_lowercase()).collect();
        if alts.iter().any(|a| a.is_empty()) {
            return Err(syntax(line, "empty alternative"));
        }
        return Ok(Elem::Lit(alts));
    }
    let mut chars = word.chars();
    if let (Some(ch), None) = (chars.next(), chars.next()) {
        if !ch.is_alphanumeric() {
            return Ok(Elem::Punct {
                ch,
                tight: matches!(ch, ':' | '/' | '-' | '.'),
            });
        }
    }
    if word.chars().all(|c| c.is_alphanumeric()) {
        return Ok(Elem::Lit(alloc::vec![word.to_lowercase()]));
    }
    Err(syntax(line, alloc::format!("bad pattern element `{word}`")))
}

fn parse_elem(word: &str, line: usize) -> Result<Elem, RuleError> {
    if let Some(inner) = word.strip_prefix('[').and_then(|w| w.strip_suffix(']')) {
        let atom = if inner.contains('|') {
            parse_atom(&alloc::format!("({inner})"), line)?
        } else {
            parse_atom(inner, line)?
        };
        return Ok(Elem::Opt(Box::new(atom)));
    }
    parse_atom(word, line)
}

fn parse_recipe(text: &str, line: usize) -> Result<Recipe, RuleError> {
    let parts: Vec<&str> = text.split(':').collect();
    let recipe = match parts.as_slice() {
        ["clock12"] => Recipe::Clock12,
        ["clock24"] => Recipe::Clock24,
        ["minutes", n] => {
            let m: u16 = n.parse().map_err(|_| syntax(line, "bad minutes"))?;
            if m >= 1440 {
                return Err(syntax(line, "minutes must be < 1440"));
            }
            Recipe::Minutes(m)
        }
        ["date", "today"] => Recipe::DateToday,
        ["date", "tomorrow"] => Recipe::DateTomorrow,
        ["weekday"] => Recipe::Weekday,
        ["day_month"] => Recipe::DayMonth,
        ["digits"] => Recipe::Digits,
        ["freq", kind] | ["freq", kind, "n"] => Recipe::Freq {
            kind: match *kind {
                "once" => FrequencyKind::Once,
                "hourly" => FrequencyKind::Hourly,
                "daily" => FrequencyKind::Daily,
                "weekly" => FrequencyKind::Weekly,
                other => return Err(syntax(line, alloc::format!("unknown frequency {other}"))),
            },
            from_number: parts.len() == 3,
        },
        ["name", "user"] => Recipe::Name(NameRole::User),
        ["name", "assistant"] => Recipe::Name(NameRole::Assistant),
        _ => return Err(syntax(line, alloc::format!("unknown recipe `{text}`"))),
    };
    Ok(recipe)
}

/// Parses a rules document. Blank lines and `#` comments are ignored; the
/// first non-comment line must be `version <n>`.
pub(crate) fn parse_rules(doc: &str) -> Result<Vec<Rule>, RuleError> {
    let mut rules = Vec::new();
    let mut version = None;
    for (idx, raw) in doc.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if version.is_none() {
            let v = line
                .strip_prefix("version")
                .map(str::trim)
                .and_then(|v| v.parse::<u32>().ok())
                .ok_or(RuleError::MissingVersion)?;
            if v != RULES_VERSION {
                return Err(RuleError::Version(v));
            }
            version = Some(v);
            continue;
        }
        let (lhs, recipe) = line
            .rsplit_once("->")
            .ok_or_else(|| syntax(line_no, "missing `-> recipe`"))?;
        let mut words = lhs.split_whitespace();
        let ty = words.next().ok_or_else(|| syntax(line_no, "empty rule"))?;
        let entity_type: EntityType = ty
            .parse()
            .map_err(|_| syntax(line_no, alloc::format!("unknown entity type `{ty}`")))?;
        let elems = words
            .map(|w| parse_elem(w, line_no))
            .collect::<Result<Vec<_>, _>>()?;
        if elems.iter().all(|e| matches!(e, Elem::Opt(_))) {
            return Err(syntax(line_no, "pattern must have a mandatory element"));
        }
        let recipe = parse_recipe(recipe.trim(), line_no)?;
        rules.push(Rule {
            entity_type,
            elems,
            recipe,
        });
    }
    if version.is_none() {
        return Err(RuleError::MissingVersion);
    }
    Ok(rules)
}

type Captures = Vec<(Class, u32, usize)>;

fn match_from(elems: &[Elem], toks: &[Tok], ti: usize, caps: &mut Captures) -> Option<(usize, Captures)> {
    let Some((first, rest)) = elems.split_first() else {
        return Some((ti, caps.clone()));
    };
    match first {
        Elem::Opt(inner) => {
            let with = {
                let mut trial = caps.clone();
                match_one(inner, toks, ti, &mut trial)
                    .and_then(|next| match_from(rest, toks, next, &mut trial))
            };
            let without = match_from(rest, toks, ti, caps);
            match (with, without) {
                (Some(a), Some(b)) => Some(if b.0 > a.0 { b } else { a }),
                (a, b) => a.or(b),
            }
        }
        elem => {
            let next = match_one(elem, toks, ti, caps)?;
            match_from(rest, toks, next, caps)
        }
    }
}

fn match_one(elem: &Elem, toks: &[Tok], ti: usize, caps: &mut Captures) -> Option<usize> {
    let tok = toks.get(ti)?;
    match elem {
        Elem::Lit(alts) => (tok.kind == TokKind::Word && alts.contains(&tok.text)).then_some(ti + 1),
        Elem::Class(class) => {
            let v = class.accept(tok)?;
            caps.push((*class, v, ti));
            Some(ti + 1)
        }
        Elem::Punct { ch, tight } => {
            if tok.kind != TokKind::Punct || !tok.text.starts_with(*ch) {
                return None;
            }
            if *tight {
                let prev = toks.get(ti.checked_sub(1)?)?;
                let next = toks.get(ti + 1)?;
                if prev.end != tok.start || tok.end != next.start {
                    return None;
                }
            }
            Some(ti + 1)
        }
        Elem::Opt(inner) => match_one(inner, toks, ti, caps).or(Some(ti)),
    }
}

fn cap(caps: &Captures, class: Class) -> Option<u32> {
    caps.iter().find(|(c, _, _)| *c == class).map(|(_, v, _)| *v)
}

fn days_in_month(month: u32) -> u32 {
    match month {
        2 => 29,
        4 | 6 | 9 | 11 => 30,
        _ => 31,
    }
}

impl Rule {
    /// Longest match of this rule starting at token `ti`: end token index
    /// and normalized value.
    /// Person values come back with an empty name; the caller fills in the
    /// surface text.
    pub(crate) fn match_at(&self, toks: &[Tok], ti: usize) -> Option<(usize, EntityValue)> {
        let (end, caps) = match_from(&self.elems, toks, ti, &mut Vec::new())?;
        if end == ti {
            return None;
        }
        let value = self.evaluate(&caps, toks)?;
        Some((end, value))
    }

    fn evaluate(&self, caps: &Captures, toks: &[Tok]) -> Option<EntityValue> {
        Some(match &self.recipe {
            Recipe::Clock12 => {
                let h = cap(caps, Class::Hour12)?;
                let m = cap(caps, Class::Minute).unwrap_or(0);
                let pm = cap(caps, Class::AmPm)? == 1;
                let h24 = (h % 12) + if pm { 12 } else { 0 };
                EntityValue::Time {
                    minutes: (h24 * 60 + m) as u16,
                }
            }
            Recipe::Clock24 => {
                let h = cap(caps, Class::Hour24)?;
                let m = cap(caps, Class::Minute)?;
                EntityValue::Time {
                    minutes: (h * 60 + m) as u16,
                }
            }
            Recipe::Minutes(m) => EntityValue::Time { minutes: *m },
            Recipe::DateToday => EntityValue::Date(DateValue::Today),
            Recipe::DateTomorrow => EntityValue::Date(DateValue::Tomorrow),
            Recipe::Weekday => EntityValue::Date(DateValue::Weekday {
                weekday: cap(caps, Class::Weekday)? as u8,
            }),
            Recipe::DayMonth => {
                let day = cap(caps, Class::Day)?;
                let month = cap(caps, Class::Month).or_else(|| cap(caps, Class::MonthNum))?;
                if day > days_in_month(month) {
                    return None;
                }
                EntityValue::Date(DateValue::DayMonth {
                    day: day as u8,
                    month: month as u8,
                })
            }
            Recipe::Digits => {
                let (_, _, idx) = caps.iter().find(|(c, _, _)| *c == Class::Phone)?;
                EntityValue::Phone {
                    digits: toks[*idx].text.clone(),
                }
            }
            Recipe::Freq { kind, from_number } => EntityValue::Frequency(Frequency {
                kind: *kind,
                interval: if *from_number {
                    cap(caps, Class::Number)?
                } else {
                    1
                },
            }),
            Recipe::Name(role) => EntityValue::Person {
                name: String::new(),
                role: *role,
            },
        })
    }
}

/// True when the match `[first, end)` is not glued to an adjacent
/// alphanumeric token on either side (so `abc7pm` never yields a time).
pub(crate) fn clean_boundaries(toks: &[Tok], first: usize, end: usize) -> bool {
    let before_ok = first == 0 || {
        let prev = &toks[first - 1];
        !(prev.is_alnum() && prev.end == toks[first].start)
    };
    let after_ok = end >= toks.len() || {
        let next = &toks[end];
        !(next.is_alnum() && toks[end - 1].end == next.start)
    };
    before_ok && after_ok
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_runs_and_keeps_offsets() {
        let toks = tokenize("Wake 7am, _time_ ok");
        let texts: Vec<&str> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["wake", "7", "am", ",", "_time_", "ok"]);
        assert_eq!((toks[1].start, toks[1].end), (5, 6));
        assert_eq!((toks[2].start, toks[2].end), (6, 8));
        assert_eq!(toks[4].kind, TokKind::Opaque);
    }

    #[test]
    fn rules_parse_and_reject() {
        let rules = parse_rules(crate::entity::DEFAULT_RULES).unwrap();
        assert!(rules.len() > 20);
        assert_eq!(parse_rules("time noon -> minutes:720").unwrap_err(), RuleError::MissingVersion);
        assert_eq!(parse_rules("version 9\n").unwrap_err(), RuleError::Version(9));
        assert!(matches!(
            parse_rules("version 1\ntime {bogus} -> clock12"),
            Err(RuleError::Syntax { line: 2, .. })
        ));
        assert!(matches!(
            parse_rules("version 1\nsize {day} -> day_month"),
            Err(RuleError::Syntax { line: 2, .. })
        ));
        assert!(matches!(
            parse_rules("version 1\ntime noon"),
            Err(RuleError::Syntax { line: 2, .. })
        ));
    }
}
