//! End-to-end automation and automated-response scores with daily
//! aggregation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::conversation::{Conversation, Responder, Sender};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("score undefined over zero records")]
    NoRecords,
    #[error("record {0}: automated responses exceed total responses")]
    InconsistentRecord(String),
}

/// A percentage held as integer hundredths, so 69.23 is `Percent(6923)`.
/// Serialized as a decimal number.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Percent(pub i64);

impl Percent {
    /// `100 * num / den` rounded half-up to hundredths.
    pub fn ratio(num: u64, den: u64) -> Percent {
        assert!(den > 0, "ratio over zero");
        let scaled = num as u128 * 10_000 * 2 + den as u128;
        Percent((scaled / (2 * den as u128)) as i64)
    }

    pub fn hundredths(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// Nearest hundredth of `v`.
    pub fn from_f64(v: f64) -> Percent {
        Percent(libm::round(v * 100.0) as i64)
    }
}

impl core::ops::Sub for Percent {
    type Output = Percent;
    fn sub(self, rhs: Percent) -> Percent {
        Percent(self.0 - rhs.0)
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", a / 100, a % 100)
    }
}

impl Serialize for Percent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Percent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        f64::deserialize(d).map(Percent::from_f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub conversation_id: String,
    pub day: NaiveDate,
    pub completed: bool,
    pub responders: BTreeSet<Responder>,
    pub automated_response_count: u32,
    pub total_responses: u32,
}

impl EvalRecord {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.automated_response_count > self.total_responses {
            return Err(EvalError::InconsistentRecord(self.conversation_id.clone()));
        }
        Ok(())
    }

    /// Completed by automated responses alone.
    pub fn is_end_to_end(&self) -> bool {
        self.completed && self.has_automated() && !self.responders.contains(&Responder::Human)
    }

    pub fn has_automated(&self) -> bool {
        self.automated_response_count >= 1
    }

    /// Summarizes a logged conversation. Graph and neural messages are
    /// automated; system notifications are neither automated nor human.
    pub fn from_conversation(c: &Conversation) -> Self {
        let mut responders = BTreeSet::new();
        let (mut automated, mut total) = (0, 0);
        for m in c.messages.iter().filter(|m| m.sender == Sender::Assistant) {
            let Some(r) = m.responder else { continue };
            if r == Responder::System {
                continue;
            }
            responders.insert(r);
            total += 1;
            if matches!(r, Responder::Graph | Responder::Neural) {
                automated += 1;
            }
        }
        EvalRecord {
            conversation_id: c.id.clone(),
            day: c.day,
            completed: c.completed,
            responders,
            automated_response_count: automated,
            total_responses: total,
        }
    }
}

pub fn e2e_score(records: &[EvalRecord]) -> Result<Percent, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let n = records.iter().filter(|r| r.is_end_to_end()).count();
    Ok(Percent::ratio(n as u64, records.len() as u64))
}

pub fn aor_score(records: &[EvalRecord]) -> Result<Percent, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let n = records.iter().filter(|r| r.has_automated()).count();
    Ok(Percent::ratio(n as u64, records.len() as u64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scores {
    pub e2e: Percent,
    pub aor: Percent,
    pub aor_minus_e2e: Percent,
}

impl Scores {
    fn new(e2e: Percent, aor: Percent) -> Self {
        Scores {
            e2e,
            aor,
            aor_minus_e2e: aor - e2e,
        }
    }

    pub fn of(records: &[EvalRecord]) -> Result<Self, EvalError> {
        Ok(Scores::new(e2e_score(records)?, aor_score(records)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayScores {
    pub day: NaiveDate,
    pub records: usize,
    #[serde(flatten)]
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub records: usize,
    /// Scores pooled over every record.
    pub overall: Scores,
    pub per_day: Vec<DayScores>,
    /// Unweighted mean of the daily scores.
    pub mean_over_days: Scores,
}

/// Unweighted mean of daily percentages, rounded half away from zero to
/// hundredths. The difference is taken after averaging.
pub fn daily_mean(days: &[Scores]) -> Result<Scores, EvalError> {
    if days.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let n = days.len() as i64;
    let avg = |f: fn(&Scores) -> Percent| {
        let sum: i64 = days.iter().map(|d| f(d).0).sum();
        Percent((2 * sum + n).div_euclid(2 * n))
    };
    Ok(Scores::new(avg(|d| d.e2e), avg(|d| d.aor)))
}

pub fn score_report(records: &[EvalRecord]) -> Result<ScoreReport, EvalError> {
    for r in records {
        r.validate()?;
    }
    let overall = Scores::of(records)?;
    let mut by_day: BTreeMap<NaiveDate, Vec<EvalRecord>> = BTreeMap::new();
    for r in records {
        by_day.entry(r.day).or_default().push(r.clone());
    }
    let mut per_day = Vec::with_capacity(by_day.len());
    for (day, rs) in &by_day {
        per_day.push(DayScores {
            day: *day,
            records: rs.len(),
            scores: Scores::of(rs)?,
        });
    }
    let daily: Vec<Scores> = per_day.iter().map(|d| d.scores).collect();
    Ok(ScoreReport {
        records: records.len(),
        overall,
        mean_over_days: daily_mean(&daily)?,
        per_day,
    })
}
