//! Reminder records, scheduling arithmetic and the in-memory book the
//! service persists.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::conversation::{Message, MessageKind, Responder};
use crate::entity::{format_clock, EntitySet, EntityType, EntityValue, Frequency, FrequencyKind};
use crate::graph::{ActionKind, ActionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReminderKind {
    Wakeup,
    Medicine,
    DrinkWater,
    GenericTask,
}

impl ReminderKind {
    /// Reminder kind created by an action tag.
    pub fn for_tag(tag: &str) -> ReminderKind {
        if tag.contains("wakeup") || tag.contains("wake_up") {
            ReminderKind::Wakeup
        } else if tag.contains("medicine") {
            ReminderKind::Medicine
        } else if tag.contains("water") {
            ReminderKind::DrinkWater
        } else {
            ReminderKind::GenericTask
        }
    }

    fn default_channel(self) -> Channel {
        match self {
            ReminderKind::Wakeup | ReminderKind::Medicine => Channel::Call,
            _ => Channel::Message,
        }
    }

    fn notification_text(self, task: Option<&str>) -> String {
        match (self, task) {
            (ReminderKind::Wakeup, _) => String::from("Good morning! Time to wake up."),
            (ReminderKind::Medicine, _) => String::from("Reminder: time to take your medicine."),
            (ReminderKind::DrinkWater, _) => String::from("Reminder: time to drink a glass of water."),
            (ReminderKind::GenericTask, Some(t)) => format!("Reminder: {t}."),
            (ReminderKind::GenericTask, None) => String::from("Reminder!"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Message,
    Call,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReminderStatus {
    Scheduled,
    Fired,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reminder {
    pub id: u64,
    pub user_id: String,
    pub kind: ReminderKind,
    /// First due date.
    pub date: NaiveDate,
    pub time: NaiveTime,
    pub frequency: Frequency,
    pub channel: Channel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_text: Option<String>,
    pub status: ReminderStatus,
    /// Next due instant while scheduled; the last due instant otherwise.
    pub next_fire: NaiveDateTime,
    #[serde(default)]
    pub fired_count: u32,
}

impl Reminder {
    pub fn is_recurring(&self) -> bool {
        self.frequency.kind != FrequencyKind::Once
    }

    /// Card text for listings, e.g. `Medicine at 2:00 PM on Tue, 18 April (call)`.
    pub fn describe(&self) -> String {
        let what = match self.kind {
            ReminderKind::Wakeup => String::from("Wake-up call"),
            ReminderKind::Medicine => String::from("Medicine"),
            ReminderKind::DrinkWater => String::from("Drink water"),
            ReminderKind::GenericTask => self.task_text.clone().unwrap_or_else(|| String::from("Reminder")),
        };
        let clock = format_clock(self.next_fire.time().num_seconds_from_midnight() as u16 / 60);
        let day = crate::entity::DateValue::Calendar {
            date: self.next_fire.date(),
        };
        let every = if self.is_recurring() {
            format!(", {}", self.frequency)
        } else {
            String::new()
        };
        let channel = match self.channel {
            Channel::Call => "call",
            Channel::Message => "message",
        };
        format!("{what} at {clock} on {day}{every} ({channel})")
    }
}

/// Instant after `t` for one recurrence step.
pub fn next_occurrence(t: NaiveDateTime, f: Frequency) -> Option<NaiveDateTime> {
    let n = i64::from(f.interval.max(1));
    let step = match f.kind {
        FrequencyKind::Once => return None,
        FrequencyKind::Hourly => Duration::hours(n),
        FrequencyKind::Daily => Duration::days(n),
        FrequencyKind::Weekly => Duration::weeks(n),
    };
    t.checked_add_signed(step)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReminderSpec {
    pub user_id: String,
    pub kind: ReminderKind,
    pub date: Option<NaiveDate>,
    pub time: Option<NaiveTime>,
    pub frequency: Option<Frequency>,
    pub channel: Option<Channel>,
    pub task_text: Option<String>,
}

/// Time used when a reminder names no time of day.
pub const DEFAULT_TIME: NaiveTime = match NaiveTime::from_hms_opt(9, 0, 0) {
    Some(t) => t,
    None => panic!(),
};

impl ReminderSpec {
    /// Spec for a create action from the entities collected in the chat.
    /// Relative dates resolve against `today`.
    pub fn from_entities(user_id: &str, tag: &str, entities: &EntitySet, today: NaiveDate) -> Self {
        let date = match entities.get(EntityType::Date) {
            Some(EntityValue::Date(d)) => d.resolve(today),
            _ => None,
        };
        let time = match entities.get(EntityType::Time) {
            Some(EntityValue::Time { minutes }) => NaiveTime::from_hms_opt(u32::from(*minutes) / 60, u32::from(*minutes) % 60, 0),
            _ => None,
        };
        let frequency = match entities.get(EntityType::Frequency) {
            Some(EntityValue::Frequency(f)) => Some(*f),
            _ => None,
        };
        let task_text = match entities.get(EntityType::TaskText) {
            Some(EntityValue::Task { text }) => Some(text.clone()),
            _ => None,
        };
        ReminderSpec {
            user_id: String::from(user_id),
            kind: ReminderKind::for_tag(tag),
            date,
            time,
            frequency,
            channel: None,
            task_text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReminderError {
    #[error("one-shot reminder at {0} is in the past")]
    InPast(NaiveDateTime),
    #[error("an identical reminder already exists (id {0})")]
    Duplicate(u64),
    #[error("no reminder with id {0}")]
    NotFound(u64),
    #[error("reminder needs a {0}")]
    Missing(&'static str),
}

/// A notification produced by [`ReminderBook::tick`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub reminder_id: u64,
    pub user_id: String,
    pub due: NaiveDateTime,
    pub message: Message,
}

/// All reminders, keyed by id. Every mutating call returns the reminders it
/// changed so callers can persist exactly those.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReminderBook {
    reminders: BTreeMap<u64, Reminder>,
    next_id: u64,
}

fn millis(t: NaiveDateTime) -> i64 {
    t.and_utc().timestamp_millis()
}

impl ReminderBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.reminders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reminders.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&Reminder> {
        self.reminders.get(&id)
    }

    pub fn all(&self) -> impl Iterator<Item = &Reminder> {
        self.reminders.values()
    }

    /// Inserts or replaces a stored record, as when replaying a journal.
    pub fn restore(&mut self, r: Reminder) {
        self.next_id = self.next_id.max(r.id + 1);
        self.reminders.insert(r.id, r);
    }

    pub fn create(&mut self, spec: &ReminderSpec, now: NaiveDateTime) -> Result<Reminder, ReminderError> {
        let frequency = spec.frequency.unwrap_or(Frequency::ONCE);
        let recurring = frequency.kind != FrequencyKind::Once;
        let (date, time) = match (spec.date, spec.time) {
            (Some(d), Some(t)) => (d, t),
            (None, Some(t)) => {
                let today = now.date();
                if today.and_time(t) >= now {
                    (today, t)
                } else {
                    (today.succ_opt().ok_or(ReminderError::Missing("date"))?, t)
                }
            }
            (Some(d), None) => (d, DEFAULT_TIME),
            (None, None) if recurring => {
                let first = next_occurrence(now, frequency).ok_or(ReminderError::Missing("time"))?;
                (first.date(), first.time())
            }
            (None, None) => return Err(ReminderError::Missing("time")),
        };
        let mut due = date.and_time(time);
        if due < now {
            if !recurring {
                return Err(ReminderError::InPast(due));
            }
            while due < now {
                due = next_occurrence(due, frequency).ok_or(ReminderError::Missing("time"))?;
            }
        }
        if let Some(dup) = self.reminders.values().find(|r| {
            r.status != ReminderStatus::Cancelled
                && r.user_id == spec.user_id
                && r.kind == spec.kind
                && r.date == date
                && r.time == time
        }) {
            return Err(ReminderError::Duplicate(dup.id));
        }
        let r = Reminder {
            id: self.next_id,
            user_id: spec.user_id.clone(),
            kind: spec.kind,
            date,
            time,
            frequency,
            channel: spec.channel.unwrap_or(spec.kind.default_channel()),
            task_text: spec.task_text.clone(),
            status: ReminderStatus::Scheduled,
            next_fire: due,
            fired_count: 0,
        };
        self.next_id += 1;
        self.reminders.insert(r.id, r.clone());
        Ok(r)
    }

    /// Cancelling twice succeeds and changes nothing the second time.
    pub fn cancel(&mut self, id: u64) -> Result<Reminder, ReminderError> {
        let r = self.reminders.get_mut(&id).ok_or(ReminderError::NotFound(id))?;
        r.status = ReminderStatus::Cancelled;
        Ok(r.clone())
    }

    /// A user's reminders: scheduled ones first by next due instant, then
    /// the rest by id.
    pub fn list(&self, user_id: &str) -> Vec<Reminder> {
        let mut out: Vec<Reminder> = self.reminders.values().filter(|r| r.user_id == user_id).cloned().collect();
        out.sort_by(|a, b| {
            let ka = a.status != ReminderStatus::Scheduled;
            let kb = b.status != ReminderStatus::Scheduled;
            ka.cmp(&kb).then_with(|| {
                if a.status == ReminderStatus::Scheduled && b.status == ReminderStatus::Scheduled {
                    a.next_fire.cmp(&b.next_fire).then(a.id.cmp(&b.id))
                } else {
                    a.id.cmp(&b.id)
                }
            })
        });
        out
    }

    /// Emits one notification per due instant at or before `now`. Recurring
    /// reminders advance past `now`; one-shot reminders become fired.
    /// Returns the notifications and the changed reminders.
    pub fn tick(&mut self, now: NaiveDateTime) -> (Vec<Notification>, Vec<Reminder>) {
        let mut notes = Vec::new();
        let mut changed = Vec::new();
        for r in self.reminders.values_mut() {
            if r.status != ReminderStatus::Scheduled || r.next_fire > now {
                continue;
            }
            loop {
                let due = r.next_fire;
                let body = r.kind.notification_text(r.task_text.as_deref());
                let msg = Message::assistant(format!("rem-{}-{}", r.id, r.fired_count), Responder::System, body, millis(due))
                    .with_kind(MessageKind::Notification);
                notes.push(Notification {
                    reminder_id: r.id,
                    user_id: r.user_id.clone(),
                    due,
                    message: msg,
                });
                r.fired_count += 1;
                match next_occurrence(due, r.frequency) {
                    Some(next) => {
                        r.next_fire = next;
                        if next > now {
                            break;
                        }
                    }
                    None => {
                        r.status = ReminderStatus::Fired;
                        break;
                    }
                }
            }
            changed.push(r.clone());
        }
        notes.sort_by(|a, b| a.due.cmp(&b.due).then(a.reminder_id.cmp(&b.reminder_id)));
        (notes, changed)
    }
}

/// Result of carrying out a fired graph action against the book.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ActionOutcome {
    Created { reminder: Reminder },
    Cancelled { reminder: Reminder },
    Listed { reminders: Vec<Reminder> },
    Modified { cancelled: Reminder, created: Reminder },
    Rejected { reason: String },
}

impl ActionOutcome {
    /// Reminders whose stored state changed.
    pub fn mutations(&self) -> Vec<&Reminder> {
        match self {
            ActionOutcome::Created { reminder } | ActionOutcome::Cancelled { reminder } => alloc::vec![reminder],
            ActionOutcome::Modified { cancelled, created } => alloc::vec![cancelled, created],
            _ => Vec::new(),
        }
    }
}

/// Applies `action` for `user_id`. Cancel and modify act on `focus`, the
/// reminder the user last looked at, or else their next scheduled one.
pub fn perform_action(
    book: &mut ReminderBook,
    action: &ActionSpec,
    entities: &EntitySet,
    user_id: &str,
    now: NaiveDateTime,
    focus: Option<u64>,
) -> ActionOutcome {
    let target = || {
        focus
            .filter(|id| book.get(*id).is_some_and(|r| r.user_id == user_id))
            .or_else(|| {
                book.list(user_id)
                    .into_iter()
                    .find(|r| r.status == ReminderStatus::Scheduled)
                    .map(|r| r.id)
            })
    };
    let rejected = |e: ReminderError| ActionOutcome::Rejected { reason: format!("{e}") };
    match action.kind {
        ActionKind::CreateReminder => {
            let spec = ReminderSpec::from_entities(user_id, &action.tag, entities, now.date());
            match book.create(&spec, now) {
                Ok(reminder) => ActionOutcome::Created { reminder },
                Err(e) => rejected(e),
            }
        }
        ActionKind::ViewReminders => ActionOutcome::Listed {
            reminders: book.list(user_id),
        },
        ActionKind::CancelReminder => match target() {
            Some(id) => match book.cancel(id) {
                Ok(reminder) => ActionOutcome::Cancelled { reminder },
                Err(e) => rejected(e),
            },
            None => ActionOutcome::Rejected {
                reason: String::from("no scheduled reminder to cancel"),
            },
        },
        ActionKind::ModifyReminder => {
            let Some(id) = target() else {
                return ActionOutcome::Rejected {
                    reason: String::from("no scheduled reminder to modify"),
                };
            };
            let old = book.get(id).cloned().expect("target exists");
            let mut spec = ReminderSpec::from_entities(user_id, &action.tag, entities, now.date());
            spec.kind = old.kind;
            spec.date = spec.date.or(Some(old.date));
            spec.time = spec.time.or(Some(old.time));
            spec.frequency = spec.frequency.or(Some(old.frequency));
            spec.task_text = spec.task_text.or(old.task_text.clone());
            let cancelled = match book.cancel(id) {
                Ok(r) => r,
                Err(e) => return rejected(e),
            };
            match book.create(&spec, now) {
                Ok(created) => ActionOutcome::Modified { cancelled, created },
                Err(e) => {
                    // Put the old reminder back untouched.
                    book.restore(old);
                    rejected(e)
                }
            }
        }
    }
}
