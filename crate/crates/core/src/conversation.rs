//! Messages, conversations and per-session routing state.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::entity::{EntitySet, EntityType};
use crate::text::is_action_tag;

/// Separates consecutive messages from the same speaker.
pub const END_OF_MESSAGE: &str = "_eom_";
/// Marks a speaker switch.
pub const END_OF_TURN: &str = "_eot_";
/// Default context budget in whitespace-delimited words.
pub const DEFAULT_CONTEXT_BUDGET: usize = 160;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sender {
    User,
    Assistant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Responder {
    Graph,
    Neural,
    Human,
    System,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Text,
    UiElement,
    ActionTag,
    Notification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    QuickReplies,
    Form,
    ReminderCard,
}

impl ElementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::QuickReplies => "quick_replies",
            ElementKind::Form => "form",
            ElementKind::ReminderCard => "reminder_card",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceOption {
    pub label: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub payload: BTreeMap<String, String>,
}

impl ChoiceOption {
    pub fn new(label: impl Into<String>) -> Self {
        ChoiceOption {
            label: label.into(),
            payload: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormField {
    pub name: String,
    pub prompt: String,
    pub entity_type: EntityType,
}

/// Quick replies, forms and reminder cards shown alongside text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredElement {
    pub element_kind: ElementKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<ChoiceOption>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FormField>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub payload: BTreeMap<String, String>,
}

impl StructuredElement {
    pub fn quick_replies<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        StructuredElement {
            element_kind: ElementKind::QuickReplies,
            options: labels.into_iter().map(ChoiceOption::new).collect(),
            fields: Vec::new(),
            payload: BTreeMap::new(),
        }
    }

    pub fn form(fields: Vec<FormField>) -> Self {
        StructuredElement {
            element_kind: ElementKind::Form,
            options: Vec::new(),
            fields,
            payload: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ConversationError> {
        match self.element_kind {
            ElementKind::QuickReplies if self.options.is_empty() => {
                Err(ConversationError::InvalidElement("quick_replies needs at least one option"))
            }
            ElementKind::Form if self.fields.is_empty() => {
                Err(ConversationError::InvalidElement("form needs at least one field"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub id: String,
    pub sender: Sender,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responder: Option<Responder>,
    pub kind: MessageKind,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<StructuredElement>,
    /// Milliseconds since the epoch.
    pub timestamp: i64,
}

impl Message {
    pub fn user(id: impl Into<String>, body: impl Into<String>, timestamp: i64) -> Self {
        Message {
            id: id.into(),
            sender: Sender::User,
            responder: None,
            kind: MessageKind::Text,
            body: body.into(),
            element: None,
            timestamp,
        }
    }

    pub fn assistant(id: impl Into<String>, responder: Responder, body: impl Into<String>, timestamp: i64) -> Self {
        Message {
            id: id.into(),
            sender: Sender::Assistant,
            responder: Some(responder),
            kind: MessageKind::Text,
            body: body.into(),
            element: None,
            timestamp,
        }
    }

    pub fn with_kind(mut self, kind: MessageKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn validate(&self) -> Result<(), ConversationError> {
        if self.sender == Sender::User && self.responder.is_some() {
            return Err(ConversationError::UserWithResponder(self.id.clone()));
        }
        if self.kind == MessageKind::ActionTag && !is_action_tag(&self.body) {
            return Err(ConversationError::BadActionTag(self.body.clone()));
        }
        if let Some(element) = &self.element {
            element.validate()?;
        }
        Ok(())
    }

    /// Words this message contributes to an encoder context. Structured
    /// elements are encoded as `_elem_<kind>_` followed by the label text.
    pub fn context_tokens(&self) -> impl Iterator<Item = &str> {
        let marker = match (&self.kind, &self.element) {
            (MessageKind::UiElement, Some(el)) => Some(el.element_kind),
            _ => None,
        };
        let marker = marker.map(|k| match k {
            ElementKind::QuickReplies => "_elem_quick_replies_",
            ElementKind::Form => "_elem_form_",
            ElementKind::ReminderCard => "_elem_reminder_card_",
        });
        marker.into_iter().chain(self.body.split_whitespace())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConversationError {
    #[error("message timestamp {got} precedes last timestamp {last}")]
    OutOfOrder { last: i64, got: i64 },
    #[error("user message {0} carries a responder")]
    UserWithResponder(String),
    #[error("`{0}` is not an action tag")]
    BadActionTag(String),
    #[error("invalid structured element: {0}")]
    InvalidElement(&'static str),
    #[error("conversation marked completed without an action or completion task")]
    CompletedWithoutAction,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    #[serde(default)]
    pub messages: Vec<Message>,
    #[serde(default)]
    pub completed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_task: Option<String>,
    #[serde(default)]
    pub day: NaiveDate,
    /// Domain label used by the corpus domain filter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    /// Free-form metadata carried through the pipeline untouched.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl Conversation {
    pub fn new(id: impl Into<String>, day: NaiveDate) -> Self {
        Conversation {
            id: id.into(),
            day,
            ..Default::default()
        }
    }

    pub fn last_timestamp(&self) -> Option<i64> {
        self.messages.last().map(|m| m.timestamp)
    }

    pub fn validate(&self) -> Result<(), ConversationError> {
        let mut last = i64::MIN;
        for m in &self.messages {
            m.validate()?;
            if m.timestamp < last {
                return Err(ConversationError::OutOfOrder { last, got: m.timestamp });
            }
            last = m.timestamp;
        }
        let has_action = self
            .messages
            .iter()
            .any(|m| m.sender == Sender::Assistant && m.kind == MessageKind::ActionTag);
        if self.completed && !has_action && self.completion_task.is_none() {
            return Err(ConversationError::CompletedWithoutAction);
        }
        Ok(())
    }

    /// Number of speaker switches plus one (zero for an empty conversation).
    pub fn turn_count(&self) -> usize {
        let mut turns = 0;
        let mut prev = None;
        for m in &self.messages {
            if prev != Some(m.sender) {
                turns += 1;
                prev = Some(m.sender);
            }
        }
        turns
    }
}

/// Appends `message`, rejecting out-of-order timestamps and malformed
/// messages.
pub fn append_message(mut conversation: Conversation, message: Message) -> Result<Conversation, ConversationError> {
    push_message(&mut conversation, message)?;
    Ok(conversation)
}

/// In-place form of [`append_message`].
pub fn push_message(conversation: &mut Conversation, message: Message) -> Result<(), ConversationError> {
    message.validate()?;
    if let Some(last) = conversation.last_timestamp() {
        if message.timestamp < last {
            return Err(ConversationError::OutOfOrder {
                last,
                got: message.timestamp,
            });
        }
    }
    conversation.messages.push(message);
    Ok(())
}

/// Concatenates `messages` oldest to newest with `_eom_` between messages
/// of the same speaker and `_eot_` at speaker switches, then keeps the last
/// `budget_words` tokens.
pub fn build_context_from<'a>(messages: impl IntoIterator<Item = &'a Message>, budget_words: usize) -> Vec<String> {
    let mut tokens: Vec<&str> = Vec::new();
    let mut prev: Option<Sender> = None;
    for m in messages {
        let mut words = m.context_tokens().peekable();
        if words.peek().is_none() {
            continue;
        }
        if let Some(p) = prev {
            tokens.push(if p == m.sender { END_OF_MESSAGE } else { END_OF_TURN });
        }
        tokens.extend(words);
        prev = Some(m.sender);
    }
    let skip = tokens.len().saturating_sub(budget_words);
    tokens[skip..].iter().map(|t| String::from(*t)).collect()
}

pub fn build_context(conversation: &Conversation, budget_words: usize) -> Vec<String> {
    build_context_from(&conversation.messages, budget_words)
}

/// Live routing state for one chat session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub current_state_id: String,
    /// "Entities collected so far".
    pub entities: EntitySet,
    /// Bounded token window over the normalized transcript.
    pub context: Vec<String>,
    pub context_budget: usize,
    pub neural_consecutive: u32,
    pub unfavorable_count: u32,
    pub handed_off: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_name: Option<String>,
    /// Attributed transcript as the user saw it.
    pub transcript: Conversation,
    /// Same transcript after entity tagging, action tagging and orthography;
    /// the source of `context`.
    pub normalized: Conversation,
}

impl SessionState {
    pub fn new(session_id: impl Into<String>, start_state: impl Into<String>, day: NaiveDate) -> Self {
        let session_id = session_id.into();
        SessionState {
            transcript: Conversation::new(session_id.clone(), day),
            normalized: Conversation::new(session_id.clone(), day),
            session_id,
            current_state_id: start_state.into(),
            entities: EntitySet::new(),
            context: Vec::new(),
            context_budget: DEFAULT_CONTEXT_BUDGET,
            neural_consecutive: 0,
            unfavorable_count: 0,
            handed_off: false,
            user_name: None,
        }
    }

    pub fn refresh_context(&mut self) {
        self.context = build_context(&self.normalized, self.context_budget);
    }
}
