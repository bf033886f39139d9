use std::path::Path;
use std::sync::Arc;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use hybridbot::clock::ManualClock;
use hybridbot::service::{serve, ApiEnvelope, EnvelopeItem, EventsReply, MessageReply, ReminderList, Service, SessionInfo};
use hybridbot::store::ReminderStore;
use hybridbot_core::controller::{BoxedResponder, Engine, HybridBot};
use hybridbot_core::conversation::{ElementKind, MessageKind};
use hybridbot_core::reminder::{ActionOutcome, ReminderKind, ReminderStatus};
use serde_json::{json, Value};

fn start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2017, 4, 17).unwrap().and_hms_opt(9, 0, 0).unwrap()
}

struct Harness {
    base: String,
    http: reqwest::Client,
    svc: Arc<Service>,
    clock: Arc<ManualClock>,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl Harness {
    async fn new(store: ReminderStore, model: Option<BoxedResponder>) -> Self {
        let clock = Arc::new(ManualClock::new(start()));
        let svc = Arc::new(Service::new(HybridBot::reminders(), model, store, clock.clone()));
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let task = tokio::spawn(serve(listener, svc.clone()));
        Harness {
            base,
            http: reqwest::Client::new(),
            svc,
            clock,
            task,
        }
    }

    async fn post(&self, path: &str, body: Value) -> reqwest::Response {
        self.http.post(format!("{}{path}", self.base)).json(&body).send().await.unwrap()
    }

    async fn get(&self, path: &str) -> reqwest::Response {
        self.http.get(format!("{}{path}", self.base)).send().await.unwrap()
    }

    async fn session(&self, user: &str) -> String {
        let r = self.post("/sessions", json!({ "user_id": user })).await;
        assert_eq!(r.status(), 201);
        r.json::<SessionInfo>().await.unwrap().session_id
    }

    async fn say(&self, sid: &str, body: Value) -> Vec<ApiEnvelope> {
        let r = self.post(&format!("/sessions/{sid}/messages"), body).await;
        assert_eq!(r.status(), 200);
        r.json::<MessageReply>().await.unwrap().envelopes
    }

    async fn reminders(&self, user: &str) -> ReminderList {
        self.get(&format!("/reminders?user_id={user}")).await.json().await.unwrap()
    }
}

impl Drop for Harness {
    fn drop(&mut self) {
        self.task.abort();
    }
}

fn text_of(e: &ApiEnvelope) -> &str {
    match &e.item {
        EnvelopeItem::Message { message } => &message.body,
        _ => "",
    }
}

fn element(envs: &[ApiEnvelope], kind: ElementKind) -> Option<&hybridbot_core::conversation::StructuredElement> {
    envs.iter().find_map(|e| match &e.item {
        EnvelopeItem::Element { element } if element.element_kind == kind => Some(element),
        _ => None,
    })
}

#[tokio::test]
async fn medicine_via_quick_reply_and_form() {
    let h = Harness::new(ReminderStore::in_memory(), None).await;
    let sid = h.session("asha").await;
    let envs = h.say(&sid, json!({ "text": "hi" })).await;
    let qr = element(&envs, ElementKind::QuickReplies).unwrap();
    let choice = qr.options.iter().find(|o| o.label == "Medicine Reminder").unwrap();

    let envs = h.say(&sid, json!({ "choice": choice })).await;
    assert_eq!(envs[0].engine, Some(Engine::Graph));
    let form = element(&envs, ElementKind::Form).unwrap();
    assert_eq!(form.fields.len(), 2);

    let envs = h.say(&sid, json!({ "form": { "time": "2 pm", "date": "tomorrow" } })).await;
    assert_eq!(
        text_of(&envs[0]),
        "Okay, done. We will remind you to take your medicine, via a call at 2:00 PM on Tue, 18 April. Take care :)"
    );
    let Some(ActionOutcome::Created { reminder }) = &envs[0].action else {
        panic!("{:?}", envs[0].action)
    };
    assert_eq!(reminder.kind, ReminderKind::Medicine);
    assert_eq!(envs[0].journal_seq, Some(1));

    let list = h.reminders("asha").await;
    assert_eq!(list.reminders.len(), 1);
    assert_eq!(&list.reminders[0].reminder, reminder);
    assert_eq!(list.reminders[0].card.element_kind, ElementKind::ReminderCard);
    assert!(h.reminders("nobody").await.reminders.is_empty());
}

#[tokio::test]
async fn view_then_cancel_with_card_choice() {
    let h = Harness::new(ReminderStore::in_memory(), None).await;
    let sid = h.session("ravi").await;
    h.say(&sid, json!({ "text": "wake me up at 7 am tomorrow" })).await;
    let envs = h.say(&sid, json!({ "text": "show my reminders" })).await;
    assert!(envs[0].trace.iter().any(|t| matches!(t, hybridbot_core::controller::TraceEvent::GraphMatched { state, .. } if state == "view_reminders")));
    let card = element(&envs, ElementKind::ReminderCard).unwrap();
    let cancel = card.options[0].clone();
    assert_eq!(cancel.label, "Cancel it");

    let envs = h.say(&sid, json!({ "choice": cancel })).await;
    assert!(envs[0]
        .trace
        .iter()
        .any(|t| matches!(t, hybridbot_core::controller::TraceEvent::GraphMatched { state, .. } if state == "cancel_reminder")));
    assert!(matches!(&envs[0].action, Some(ActionOutcome::Cancelled { .. })));
    assert_eq!(h.reminders("ravi").await.reminders[0].reminder.status, ReminderStatus::Cancelled);
}

#[tokio::test]
async fn handoff_without_model_and_after() {
    let h = Harness::new(ReminderStore::in_memory(), None).await;
    let sid = h.session("u").await;
    let envs = h.say(&sid, json!({ "text": "qwzx vbnm" })).await;
    assert_eq!(envs.len(), 1);
    assert!(envs[0].handoff);
    assert!(matches!(envs[0].item, EnvelopeItem::Handoff));
    let envs = h.say(&sid, json!({ "text": "hi" })).await;
    assert!(envs.iter().all(|e| e.handoff && matches!(e.item, EnvelopeItem::Handoff)));
}

#[tokio::test]
async fn neural_fallback_badge() {
    let model: BoxedResponder = Box::new(|_: &[String]| Some(vec!["hello".to_string(), "there".to_string()]));
    let h = Harness::new(ReminderStore::in_memory(), Some(model)).await;
    let sid = h.session("u").await;
    let envs = h.say(&sid, json!({ "text": "Hlo Ram" })).await;
    assert_eq!(envs[0].engine, Some(Engine::Neural));
    assert_eq!(text_of(&envs[0]), "hello there");
    assert!(envs[0].score.unwrap() < h.svc.bot().config.tau_sim);
}

#[tokio::test]
async fn repeated_client_id_is_not_applied_twice() {
    let h = Harness::new(ReminderStore::in_memory(), None).await;
    let sid = h.session("u").await;
    let body = json!({ "text": "wake me up at 7 am tomorrow", "client_message_id": "m1" });
    let a = h.say(&sid, body.clone()).await;
    let b = h.say(&sid, body).await;
    assert_eq!(a, b);
    assert_eq!(h.reminders("u").await.reminders.len(), 1);
}

#[tokio::test]
async fn bad_requests() {
    let h = Harness::new(ReminderStore::in_memory(), None).await;
    let sid = h.session("u").await;
    assert_eq!(h.post(&format!("/sessions/{sid}/messages"), json!({ "text": "  " })).await.status(), 400);
    assert_eq!(
        h.post(&format!("/sessions/{sid}/messages"), json!({ "text": "a", "choice": { "label": "b" } }))
            .await
            .status(),
        400
    );
    assert_eq!(h.post("/reminders/42/cancel", json!({})).await.status(), 404);
    assert_eq!(h.post("/reminders/x/cancel", json!({})).await.status(), 400);
    assert_eq!(h.post("/sessions", json!({ "session_id": sid })).await.status(), 409);
    assert_eq!(h.get("/sessions/nope/events").await.status(), 404);
    let health: Value = h.get("/health").await.json().await.unwrap();
    assert_eq!(health["status"], "ok");
    assert_eq!(health["model_loaded"], false);
}

#[tokio::test]
async fn auto_created_session() {
    let h = Harness::new(ReminderStore::in_memory(), None).await;
    let envs = h.say("fresh", json!({ "text": "hi", "user_id": "neha" })).await;
    assert_eq!(envs[0].session_id, "fresh");
    assert_eq!(envs[0].engine, Some(Engine::Graph));
}

#[tokio::test]
async fn past_wake_up_is_rejected_not_stored() {
    let h = Harness::new(ReminderStore::in_memory(), None).await;
    let sid = h.session("u").await;
    h.clock.set(start() + Duration::hours(3));
    let envs = h.say(&sid, json!({ "text": "wake me up at 7 am today" })).await;
    assert!(matches!(&envs[0].action, Some(ActionOutcome::Rejected { .. })));
    assert_eq!(envs[0].journal_seq, None);
    assert!(text_of(envs.last().unwrap()).starts_with("Sorry, I could not do that"));
    assert!(h.reminders("u").await.reminders.is_empty());
}

#[tokio::test]
async fn notifications_reach_the_long_poll_once() {
    let h = Harness::new(ReminderStore::in_memory(), None).await;
    let sid = h.session("u").await;
    let envs = h.say(&sid, json!({ "text": "remind me to drink water every 2 hours" })).await;
    assert!(matches!(&envs[0].action, Some(ActionOutcome::Created { .. })));
    let last = envs.last().unwrap().seq;

    let poll = {
        let http = h.http.clone();
        let url = format!("{}/sessions/{sid}/events?after={last}&timeout_ms=5000", h.base);
        tokio::spawn(async move { http.get(url).send().await.unwrap().json::<EventsReply>().await.unwrap() })
    };
    tokio::time::sleep(std::time::Duration::from_millis(50)).await;
    h.clock.advance(Duration::hours(4));
    assert_eq!(h.svc.tick().await.unwrap().len(), 2);
    assert!(h.svc.tick().await.unwrap().is_empty());

    let got = poll.await.unwrap().envelopes;
    assert!(!got.is_empty());
    let all: EventsReply = h
        .get(&format!("/sessions/{sid}/events?after={last}"))
        .await
        .json()
        .await
        .unwrap();
    let notes: Vec<_> = all
        .envelopes
        .iter()
        .filter(|e| matches!(&e.item, EnvelopeItem::Message { message } if message.kind == MessageKind::Notification))
        .collect();
    assert_eq!(notes.len(), 2);
    let seqs: Vec<u64> = all.envelopes.iter().map(|e| e.seq).collect();
    assert!(seqs.windows(2).all(|w| w[0] < w[1]));
    let t = h.svc.transcript(&sid).await.unwrap();
    assert_eq!(t.messages.iter().filter(|m| m.kind == MessageKind::Notification).count(), 2);
}

#[tokio::test]
async fn notifications_wait_for_a_session() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("j");
    {
        let h = Harness::new(ReminderStore::open(&path).unwrap(), None).await;
        let sid = h.session("u").await;
        h.say(&sid, json!({ "text": "wake me up at 7 am tomorrow" })).await;
    }
    let h = Harness::new(ReminderStore::open(&path).unwrap(), None).await;
    h.clock.advance(Duration::days(1));
    assert_eq!(h.svc.tick().await.unwrap().len(), 1);
    let sid = h.session("u").await;
    let ev: EventsReply = h.get(&format!("/sessions/{sid}/events")).await.json().await.unwrap();
    assert_eq!(ev.envelopes.len(), 1);
    assert!(matches!(&ev.envelopes[0].item, EnvelopeItem::Message { message } if message.kind == MessageKind::Notification));
    let other = h.session("v").await;
    let ev: EventsReply = h.get(&format!("/sessions/{other}/events")).await.json().await.unwrap();
    assert!(ev.envelopes.is_empty());
}

#[tokio::test]
async fn envelope_items_are_exclusive_on_the_wire() {
    let h = Harness::new(ReminderStore::in_memory(), None).await;
    let sid = h.session("u").await;
    h.say(&sid, json!({ "text": "hi" })).await;
    h.say(&sid, json!({ "text": "medicine reminder" })).await;
    h.say(&sid, json!({ "text": "qwzx" })).await;
    let raw: Value = h.get(&format!("/sessions/{sid}/events")).await.json().await.unwrap();
    for e in raw["envelopes"].as_array().unwrap() {
        let present = [e.get("message").is_some(), e.get("element").is_some(), e["handoff"] == true];
        assert_eq!(present.iter().filter(|x| **x).count(), 1, "{e}");
    }
}

async fn restart_round_trip_at(path: &Path) {
    let before = {
        let h = Harness::new(ReminderStore::open(path).unwrap(), None).await;
        let sid = h.session("u").await;
        h.say(&sid, json!({ "text": "wake me up at 7 am tomorrow" })).await;
        h.say(&sid, json!({ "text": "remind me to drink water every 3 hours" })).await;
        let id = h.reminders("u").await.reminders[0].reminder.id;
        assert_eq!(h.post(&format!("/reminders/{id}/cancel"), json!({})).await.status(), 200);
        assert_eq!(h.post(&format!("/reminders/{id}/cancel"), json!({})).await.status(), 200);
        h.reminders("u").await
    };
    let h = Harness::new(ReminderStore::open(path).unwrap(), None).await;
    assert_eq!(h.reminders("u").await, before);
}

#[tokio::test]
async fn restart_keeps_reminders() {
    let dir = tempfile::tempdir().unwrap();
    restart_round_trip_at(&dir.path().join("reminders.journal")).await;
}
