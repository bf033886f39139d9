//! The reminder service: sessions over the hybrid engine, reminder
//! persistence, due notifications and the HTTP API.
//!
//! | Method | Path | Body / query | Reply |
//! |---|---|---|---|
//! | POST | `/sessions` | `{session_id?, user_id?}` | [`SessionInfo`] |
//! | POST | `/sessions/{id}/messages` | [`PostMessage`] | [`MessageReply`] |
//! | GET | `/sessions/{id}/events` | `?after=<seq>&timeout_ms=<ms>` | [`EventsReply`] |
//! | GET | `/reminders` | `?user_id=<id>` | [`ReminderList`] |
//! | POST | `/reminders/{id}/cancel` | | [`CancelReply`] |
//! | GET | `/health` | | [`Health`] |
//!
//! Errors come back as `{"error": "..."}` with a 4xx/5xx status.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hybridbot_core::controller::{BoxedResponder, ControllerError, Engine, HybridBot, NeuralResponder, TraceEvent};
use hybridbot_core::conversation::{push_message, ChoiceOption, ElementKind, Message, Responder, SessionState, StructuredElement};
use hybridbot_core::reminder::{perform_action, ActionOutcome, Notification, Reminder, ReminderStatus};
use serde::{Deserialize, Serialize};
use tokio::sync::Notify;

use crate::clock::{millis, Clock};
use crate::events::TurnEvent;
use crate::store::{ReminderStore, StoreError};

/// Label of the quick reply on a reminder card.
pub const CANCEL_LABEL: &str = "Cancel it";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EnvelopeItem {
    Message { message: Message },
    Element { element: StructuredElement },
    Handoff,
}

/// One outbound item. Replies to a user message carry the routing trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiEnvelope {
    pub session_id: String,
    /// Position in the session's outbound stream, from 1.
    pub seq: u64,
    pub server_timestamp: i64,
    #[serde(flatten)]
    pub item: EnvelopeItem,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<Engine>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionOutcome>,
    /// Journal sequence number of the last record the action wrote.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub journal_seq: Option<u64>,
    pub handoff: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NewSession {
    pub session_id: Option<String>,
    pub user_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub user_id: String,
    pub handed_off: bool,
}

/// Exactly one of `text`, `choice` or `form`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PostMessage {
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub choice: Option<ChoiceOption>,
    /// Form values by field name.
    #[serde(default)]
    pub form: Option<BTreeMap<String, String>>,
    /// User for an auto-created session.
    #[serde(default)]
    pub user_id: Option<String>,
    /// Client idempotency token: a repeated token returns the first reply.
    #[serde(default)]
    pub client_message_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageReply {
    pub session_id: String,
    pub envelopes: Vec<ApiEnvelope>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventsReply {
    pub session_id: String,
    pub envelopes: Vec<ApiEnvelope>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReminderEntry {
    pub reminder: Reminder,
    pub card: StructuredElement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReminderList {
    pub user_id: String,
    pub reminders: Vec<ReminderEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CancelReply {
    pub reminder: Reminder,
    pub journal_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_loaded: bool,
    pub sessions: usize,
    pub reminders: usize,
    pub server_timestamp: i64,
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("session {0} already exists")]
    Conflict(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Store(_) | ServiceError::Controller(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

struct Session {
    state: SessionState,
    user_id: String,
    /// Reminder the user last looked at; target of cancel.
    focus: Option<u64>,
    outbox: Vec<ApiEnvelope>,
    replies: HashMap<String, Vec<ApiEnvelope>>,
}

impl Session {
    fn push(&mut self, now: i64, item: EnvelopeItem) -> &mut ApiEnvelope {
        let seq = self.outbox.len() as u64 + 1;
        self.outbox.push(ApiEnvelope {
            session_id: self.state.session_id.clone(),
            seq,
            server_timestamp: now,
            handoff: matches!(item, EnvelopeItem::Handoff),
            item,
            engine: None,
            score: None,
            trace: Vec::new(),
            action: None,
            journal_seq: None,
        });
        self.outbox.last_mut().expect("just pushed")
    }
}

struct SessionSlot {
    inner: tokio::sync::Mutex<Session>,
    notify: Notify,
}

pub struct Service {
    bot: HybridBot,
    model: Option<BoxedResponder>,
    store: RwLock<ReminderStore>,
    sessions: Mutex<HashMap<String, Arc<SessionSlot>>>,
    /// Latest session per user, where notifications go.
    user_sessions: Mutex<HashMap<String, String>>,
    /// Notifications for users with no session yet.
    pending: Mutex<HashMap<String, Vec<Notification>>>,
    clock: Arc<dyn Clock>,
    event_log: Option<Mutex<File>>,
    next_session: AtomicU64,
}

/// Longest a long-poll waits.
pub const MAX_POLL: Duration = Duration::from_secs(30);

impl Service {
    pub fn new(bot: HybridBot, model: Option<BoxedResponder>, store: ReminderStore, clock: Arc<dyn Clock>) -> Self {
        Service {
            bot,
            model,
            store: RwLock::new(store),
            sessions: Mutex::new(HashMap::new()),
            user_sessions: Mutex::new(HashMap::new()),
            pending: Mutex::new(HashMap::new()),
            clock,
            event_log: None,
            next_session: AtomicU64::new(1),
        }
    }

    /// Appends one [`TurnEvent`] per handled message to `file`.
    pub fn with_event_log(mut self, file: File) -> Self {
        self.event_log = Some(Mutex::new(file));
        self
    }

    pub fn bot(&self) -> &HybridBot {
        &self.bot
    }

    pub fn reminders(&self) -> Vec<Reminder> {
        self.store.read().expect("store lock").book().all().cloned().collect()
    }

    fn slot(&self, id: &str) -> Option<Arc<SessionSlot>> {
        self.sessions.lock().expect("sessions lock").get(id).cloned()
    }

    pub async fn create_session(&self, req: NewSession) -> Result<SessionInfo, ServiceError> {
        let id = match req.session_id {
            Some(id) if id.trim().is_empty() => return Err(ServiceError::BadRequest("empty session_id".into())),
            Some(id) => id,
            None => format!("s{}", self.next_session.fetch_add(1, Ordering::Relaxed)),
        };
        let user_id = req.user_id.unwrap_or_else(|| id.clone());
        let now = self.clock.now();
        let slot = {
            let mut sessions = self.sessions.lock().expect("sessions lock");
            if sessions.contains_key(&id) {
                return Err(ServiceError::Conflict(id));
            }
            let slot = Arc::new(SessionSlot {
                inner: tokio::sync::Mutex::new(Session {
                    state: self.bot.new_session(id.clone(), now.date()),
                    user_id: user_id.clone(),
                    focus: None,
                    outbox: Vec::new(),
                    replies: HashMap::new(),
                }),
                notify: Notify::new(),
            });
            sessions.insert(id.clone(), slot.clone());
            slot
        };
        self.user_sessions
            .lock()
            .expect("user lock")
            .insert(user_id.clone(), id.clone());
        let waiting = self.pending.lock().expect("pending lock").remove(&user_id);
        if let Some(notes) = waiting {
            let mut s = slot.inner.lock().await;
            for n in notes {
                deliver(&mut s, n, millis(now));
            }
            slot.notify.notify_waiters();
        }
        Ok(SessionInfo {
            session_id: id,
            user_id,
            handed_off: false,
        })
    }

    pub async fn post_message(&self, session_id: &str, req: PostMessage) -> Result<MessageReply, ServiceError> {
        let text = input_text(&req)?;
        let slot = match self.slot(session_id) {
            Some(s) => s,
            None => {
                let info = NewSession {
                    session_id: Some(session_id.to_string()),
                    user_id: req.user_id.clone(),
                };
                match self.create_session(info).await {
                    Ok(_) | Err(ServiceError::Conflict(_)) => {}
                    Err(e) => return Err(e),
                }
                self.slot(session_id).expect("just created")
            }
        };
        let mut s = slot.inner.lock().await;
        if let Some(prev) = req.client_message_id.as_ref().and_then(|k| s.replies.get(k)) {
            return Ok(MessageReply {
                session_id: session_id.to_string(),
                envelopes: prev.clone(),
            });
        }
        if let Some(id) = req
            .choice
            .as_ref()
            .and_then(|c| c.payload.get("reminder_id"))
            .and_then(|v| v.parse().ok())
        {
            s.focus = Some(id);
        }

        let now = self.clock.now();
        let ts = millis(now);
        let neural = self.model.as_deref().map(|m| m as &dyn NeuralResponder);
        let first = s.outbox.len();
        let d = self.bot.handle_message(&mut s.state, &text, ts, neural)?;

        let mut outcome = None;
        let mut journal_seq = None;
        if let (Some(action), Some(entities)) = (&d.action_executed, &d.action_entities) {
            let user = s.user_id.clone();
            let focus = s.focus;
            let mut store = self.store.write().expect("store lock");
            let out = store.mutate(|book| {
                let o = perform_action(book, action, entities, &user, now, focus);
                let changed = o.mutations().into_iter().cloned().collect();
                (o, changed)
            })?;
            if !out.mutations().is_empty() {
                journal_seq = Some(store.seq());
            }
            outcome = Some(out);
        }

        match &d.response {
            None => {
                let e = s.push(ts, EnvelopeItem::Handoff);
                e.engine = Some(d.engine);
                e.score = Some(d.graph_score);
                e.trace = d.trace.clone();
            }
            Some(msg) => {
                let mut plain = msg.clone();
                let element = plain.element.take();
                let e = s.push(ts, EnvelopeItem::Message { message: plain });
                e.engine = Some(d.engine);
                e.score = Some(d.graph_score);
                e.trace = d.trace.clone();
                e.action = outcome.clone();
                e.journal_seq = journal_seq;
                if let Some(el) = element {
                    s.push(ts, EnvelopeItem::Element { element: el });
                }
            }
        }

        match &outcome {
            Some(ActionOutcome::Created { .. } | ActionOutcome::Cancelled { .. } | ActionOutcome::Modified { .. }) => {
                s.state.transcript.completed = true;
                s.state.transcript.completion_task = d.action_executed.as_ref().map(|a| a.tag.clone());
                if let Some(ActionOutcome::Cancelled { .. }) = &outcome {
                    s.focus = None;
                }
            }
            Some(ActionOutcome::Listed { reminders }) => {
                let scheduled: Vec<&Reminder> = reminders.iter().filter(|r| r.status == ReminderStatus::Scheduled).collect();
                if scheduled.is_empty() {
                    let m = self.bot.record_reply(&mut s.state, Responder::System, "You have no reminders scheduled.", ts);
                    s.push(ts, EnvelopeItem::Message { message: m });
                } else {
                    s.focus = Some(scheduled[0].id);
                    for r in scheduled {
                        s.push(ts, EnvelopeItem::Element { element: card(r) });
                    }
                }
            }
            Some(ActionOutcome::Rejected { reason }) => {
                let body = format!("Sorry, I could not do that: {reason}.");
                let m = self.bot.record_reply(&mut s.state, Responder::System, &body, ts);
                s.push(ts, EnvelopeItem::Message { message: m });
            }
            None => {}
        }

        let envelopes = s.outbox[first..].to_vec();
        if let Some(k) = req.client_message_id {
            s.replies.insert(k, envelopes.clone());
        }
        self.log_turn(TurnEvent {
            session_id: session_id.to_string(),
            day: s.state.transcript.day,
            timestamp: ts,
            engine: d.engine,
            graph_score: d.graph_score,
            action: d.action_executed.as_ref().map(|a| a.tag.clone()),
            persisted: journal_seq.is_some(),
            handed_off: s.state.handed_off,
        });
        drop(s);
        slot.notify.notify_waiters();
        Ok(MessageReply {
            session_id: session_id.to_string(),
            envelopes,
        })
    }

    fn log_turn(&self, ev: TurnEvent) {
        if let Some(f) = &self.event_log {
            let mut f = f.lock().expect("log lock");
            let line = serde_json::to_string(&ev).expect("event serializes");
            if let Err(e) = writeln!(f, "{line}") {
                log::error!("event log write failed: {e}");
            }
        }
        log::info!(target: "turn", "{}", serde_json::to_string(&ev).unwrap_or_default());
    }

    /// Envelopes after `after`, waiting up to `timeout` for new ones.
    pub async fn events(&self, session_id: &str, after: u64, timeout: Duration) -> Result<EventsReply, ServiceError> {
        let slot = self.slot(session_id).ok_or_else(|| ServiceError::NotFound(format!("session {session_id}")))?;
        let deadline = tokio::time::Instant::now() + timeout.min(MAX_POLL);
        loop {
            let notified = slot.notify.notified();
            tokio::pin!(notified);
            notified.as_mut().enable();
            {
                let s = slot.inner.lock().await;
                let new: Vec<ApiEnvelope> = s.outbox.iter().filter(|e| e.seq > after).cloned().collect();
                if !new.is_empty() || tokio::time::Instant::now() >= deadline {
                    return Ok(EventsReply {
                        session_id: session_id.to_string(),
                        envelopes: new,
                    });
                }
            }
            if tokio::time::timeout_at(deadline, notified).await.is_err() {
                continue;
            }
        }
    }

    pub fn list(&self, user_id: &str) -> ReminderList {
        let reminders = self
            .store
            .read()
            .expect("store lock")
            .book()
            .list(user_id)
            .into_iter()
            .map(|r| ReminderEntry { card: card(&r), reminder: r })
            .collect();
        ReminderList {
            user_id: user_id.to_string(),
            reminders,
        }
    }

    pub fn cancel(&self, id: u64) -> Result<CancelReply, ServiceError> {
        let mut store = self.store.write().expect("store lock");
        let r = store.mutate(|b| match b.cancel(id) {
            Ok(r) => (Some(r.clone()), vec![r]),
            Err(_) => (None, Vec::new()),
        })?;
        let reminder = r.ok_or_else(|| ServiceError::NotFound(format!("reminder {id}")))?;
        Ok(CancelReply {
            reminder,
            journal_seq: store.seq(),
        })
    }

    /// Fires everything due by the clock's now and delivers the
    /// notifications to each user's latest session.
    pub async fn tick(&self) -> Result<Vec<Notification>, ServiceError> {
        let now = self.clock.now();
        let notes = self.store.write().expect("store lock").mutate(|b| b.tick(now))?;
        for n in &notes {
            let sid = self.user_sessions.lock().expect("user lock").get(&n.user_id).cloned();
            match sid.and_then(|id| self.slot(&id)) {
                Some(slot) => {
                    let mut s = slot.inner.lock().await;
                    deliver(&mut s, n.clone(), millis(now));
                    drop(s);
                    slot.notify.notify_waiters();
                }
                None => self
                    .pending
                    .lock()
                    .expect("pending lock")
                    .entry(n.user_id.clone())
                    .or_default()
                    .push(n.clone()),
            }
        }
        Ok(notes)
    }

    pub fn health(&self) -> Health {
        Health {
            status: "ok".into(),
            model_loaded: self.model.is_some(),
            sessions: self.sessions.lock().expect("sessions lock").len(),
            reminders: self.store.read().expect("store lock").book().len(),
            server_timestamp: millis(self.clock.now()),
        }
    }

    /// Transcript of a session as the user saw it.
    pub async fn transcript(&self, session_id: &str) -> Option<hybridbot_core::conversation::Conversation> {
        let slot = self.slot(session_id)?;
        let s = slot.inner.lock().await;
        Some(s.state.transcript.clone())
    }
}

fn deliver(s: &mut Session, n: Notification, now: i64) {
    let mut msg = n.message;
    if let Some(last) = s.state.transcript.last_timestamp() {
        msg.timestamp = msg.timestamp.max(last);
    }
    if let Err(e) = push_message(&mut s.state.transcript, msg.clone()) {
        log::warn!("notification not recorded: {e}");
    }
    s.push(now, EnvelopeItem::Message { message: msg });
}

fn input_text(req: &PostMessage) -> Result<String, ServiceError> {
    let text = match (&req.text, &req.choice, &req.form) {
        (Some(t), None, None) => t.clone(),
        (None, Some(c), None) => c.label.clone(),
        (None, None, Some(f)) => f.values().map(String::as_str).collect::<Vec<_>>().join(" "),
        _ => return Err(ServiceError::BadRequest("send exactly one of text, choice, form".into())),
    };
    if text.trim().is_empty() {
        return Err(ServiceError::BadRequest("empty message".into()));
    }
    Ok(text)
}

/// Reminder card with a cancel quick reply carrying the reminder id.
pub fn card(r: &Reminder) -> StructuredElement {
    let id = r.id.to_string();
    let mut option = ChoiceOption::new(CANCEL_LABEL);
    option.payload.insert("reminder_id".into(), id.clone());
    let mut payload = BTreeMap::new();
    payload.insert("reminder_id".into(), id);
    payload.insert("description".into(), r.describe());
    payload.insert(
        "status".into(),
        serde_json::to_value(r.status)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default(),
    );
    payload.insert("next_fire".into(), r.next_fire.to_string());
    StructuredElement {
        element_kind: ElementKind::ReminderCard,
        options: if r.status == ReminderStatus::Scheduled {
            vec![option]
        } else {
            Vec::new()
        },
        fields: Vec::new(),
        payload,
    }
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    #[serde(default)]
    after: u64,
    #[serde(default)]
    timeout_ms: u64,
}

#[derive(Debug, Deserialize)]
struct UserQuery {
    user_id: String,
}

async fn h_create(State(svc): State<Arc<Service>>, body: Option<Json<NewSession>>) -> Result<(StatusCode, Json<SessionInfo>), ServiceError> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    Ok((StatusCode::CREATED, Json(svc.create_session(req).await?)))
}

async fn h_message(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    Json(req): Json<PostMessage>,
) -> Result<Json<MessageReply>, ServiceError> {
    Ok(Json(svc.post_message(&id, req).await?))
}

async fn h_events(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
) -> Result<Json<EventsReply>, ServiceError> {
    Ok(Json(svc.events(&id, q.after, Duration::from_millis(q.timeout_ms)).await?))
}

async fn h_list(State(svc): State<Arc<Service>>, Query(q): Query<UserQuery>) -> Json<ReminderList> {
    Json(svc.list(&q.user_id))
}

async fn h_cancel(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> Result<Json<CancelReply>, ServiceError> {
    let id: u64 = id.parse().map_err(|_| ServiceError::BadRequest(format!("bad reminder id `{id}`")))?;
    Ok(Json(svc.cancel(id)?))
}

async fn h_health(State(svc): State<Arc<Service>>) -> Json<Health> {
    Json(svc.health())
}

pub fn router(svc: Arc<Service>) -> Router {
    Router::new()
        .route("/sessions", post(h_create))
        .route("/sessions/{id}/messages", post(h_message))
        .route("/sessions/{id}/events", get(h_events))
        .route("/reminders", get(h_list))
        .route("/reminders/{id}/cancel", post(h_cancel))
        .route("/health", get(h_health))
        .with_state(svc)
}

/// Runs [`Service::tick`] every `every` until the service is dropped
/// elsewhere and this task is aborted.
pub fn spawn_ticker(svc: Arc<Service>, every: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut iv = tokio::time::interval(every);
        iv.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            iv.tick().await;
            match svc.tick().await {
                Ok(n) if !n.is_empty() => log::info!("delivered {} notifications", n.len()),
                Ok(_) => {}
                Err(e) => log::error!("tick failed: {e}"),
            }
        }
    })
}

/// Serves the API on `listener` until the task is dropped.
pub async fn serve(listener: tokio::net::TcpListener, svc: Arc<Service>) -> std::io::Result<()> {
    axum::serve(listener, router(svc)).await
}
