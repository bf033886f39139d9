//! Graph-first routing with generative fallback and human handoff.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::conversation::{push_message, FormField, Message, MessageKind, Responder, SessionState, StructuredElement};
use crate::entity::{apply_tags, merge_into, EntitySet, EntitySpan, EntityType, EntityValue, NameRole, Recognizer};
use crate::graph::{render_response_on, ActionSpec, DialogueGraph, GraphDecision, GraphError, SlotSpec, DEFAULT_TAU_SIM};
use crate::seq2seq::Seq2SeqModel;
use crate::text::{is_action_tag, normalize_orthography};
use crate::tfidf::{TfidfError, TfidfIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HybridConfig {
    pub tau_sim: f64,
    /// Consecutive neural responses allowed before handoff.
    pub max_neural_turns: u32,
    /// Unfavorable responses allowed per conversation.
    pub max_unfavorable: u32,
    pub unfavorable_patterns: Vec<String>,
    pub max_decode_len: usize,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig {
            tau_sim: DEFAULT_TAU_SIM,
            max_neural_turns: 3,
            max_unfavorable: 2,
            unfavorable_patterns: [
                "sorry i cannot help you with that",
                "i cannot help you",
                "i am not able to help",
                "i do not understand",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            max_decode_len: 40,
        }
    }
}

impl HybridConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        if !(self.tau_sim > 0.0 && self.tau_sim < 1.0) {
            return Err(ControllerError::Config("tau_sim must lie in (0, 1)"));
        }
        if self.max_neural_turns == 0 || self.max_unfavorable == 0 {
            return Err(ControllerError::Config("max_neural_turns and max_unfavorable must be at least 1"));
        }
        if self.max_decode_len == 0 {
            return Err(ControllerError::Config("max_decode_len must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControllerError {
    #[error("invalid hybrid configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Matcher(#[from] TfidfError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Graph,
    Neural,
    Handoff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    AlreadyHandedOff,
    EntitiesExtracted { types: Vec<EntityType> },
    GraphMatched { state: String, score: f64, slot_continuation: bool },
    GraphMiss { best_score: f64 },
    TurnThreshold { consecutive: u32 },
    ModelUnavailable,
    NeuralGenerated { text: String },
    ActionMapped { tag: String, state: String },
    UnknownActionTag { tag: String },
    Unfavorable { count: u32 },
    ActionFired { tag: String },
    HandedOff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub engine: Engine,
    /// The assistant message to send; `None` on handoff.
    pub response: Option<Message>,
    /// Best graph similarity seen for this message.
    pub graph_score: f64,
    pub matched_state: Option<String>,
    pub action_executed: Option<ActionSpec>,
    /// Entities the action ran with.
    pub action_entities: Option<EntitySet>,
    pub prompted_slot: Option<SlotSpec>,
    pub trace: Vec<TraceEvent>,
}

impl RoutingDecision {
    fn handoff(graph_score: f64, trace: Vec<TraceEvent>) -> Self {
        RoutingDecision {
            engine: Engine::Handoff,
            response: None,
            graph_score,
            matched_state: None,
            action_executed: None,
            action_entities: None,
            prompted_slot: None,
            trace,
        }
    }
}

/// Generates a reply from the token context. `None` means the model is
/// unavailable.
pub trait NeuralResponder {
    fn respond(&self, context: &[String], max_len: usize) -> Option<Vec<String>>;
}

impl NeuralResponder for Seq2SeqModel {
    fn respond(&self, context: &[String], max_len: usize) -> Option<Vec<String>> {
        match self.decode_greedy(context, max_len) {
            Ok(out) => Some(out),
            Err(e) => {
                log::warn!("neural decode failed: {e}");
                None
            }
        }
    }
}

impl<F: Fn(&[String]) -> Option<Vec<String>>> NeuralResponder for F {
    fn respond(&self, context: &[String], _max_len: usize) -> Option<Vec<String>> {
        self(context)
    }
}

/// True when sending one more neural response would exceed the limit.
pub fn check_turn_threshold(session: &SessionState, config: &HybridConfig) -> bool {
    session.neural_consecutive >= config.max_neural_turns
}

/// Counts `response_text` against the unfavorable patterns. True when the
/// response has to be suppressed because the per-conversation allowance is
/// used up.
pub fn check_unfavorable(response_text: &str, session: &mut SessionState, config: &HybridConfig) -> bool {
    if !is_unfavorable(response_text, config) {
        return false;
    }
    session.unfavorable_count += 1;
    session.unfavorable_count > config.max_unfavorable
}

pub fn is_unfavorable(response_text: &str, config: &HybridConfig) -> bool {
    let text = format!(" {} ", normalize_orthography(response_text));
    config.unfavorable_patterns.iter().any(|p| {
        let p = normalize_orthography(p);
        !p.is_empty() && text.contains(&format!(" {p} "))
    })
}

/// Looks up the state owning `tag`, logging unknown tags.
pub fn map_action_tag<'g>(tag: &str, graph: &'g DialogueGraph) -> Option<&'g crate::graph::GraphState> {
    let state = graph.map_action_tag(tag);
    if state.is_none() {
        log::warn!("neural model produced unknown action tag {tag}");
    }
    state
}

fn tag_to_placeholder(tok: &str) -> Option<&'static str> {
    Some(match tok {
        "_date_" => "{date}",
        "_time_" => "{time}",
        "_phone_number_" => "{phone}",
        "_frequency_" => "{frequency}",
        "_user_name_" => "{person_name}",
        "_task_" => "{task_text}",
        _ => return None,
    })
}

/// Substitutes known entity values for placeholder tags in generated text.
/// Tags without a value are left in place.
pub fn fill_generated(tokens: &[String], session: &SessionState) -> String {
    let mut out = Vec::with_capacity(tokens.len());
    for t in tokens {
        let filled = tag_to_placeholder(t)
            .and_then(|p| render_response_on(p, &session.entities, Some(session.transcript.day)).ok())
            .unwrap_or_else(|| t.clone());
        out.push(filled);
    }
    out.join(" ")
}

/// The routing engine: immutable graph, matcher, recognizer and limits.
#[derive(Debug, Clone)]
pub struct HybridBot {
    pub graph: DialogueGraph,
    pub matcher: TfidfIndex,
    pub recognizer: Recognizer,
    pub config: HybridConfig,
}

impl HybridBot {
    pub fn new(graph: DialogueGraph, recognizer: Recognizer, config: HybridConfig) -> Result<Self, ControllerError> {
        config.validate()?;
        let matcher = graph.build_matcher()?;
        Ok(HybridBot {
            graph,
            matcher,
            recognizer,
            config,
        })
    }

    /// Reminders graph, default recognizer and limits.
    pub fn reminders() -> Self {
        Self::new(DialogueGraph::reminders(), Recognizer::default(), HybridConfig::default()).expect("shipped graph is valid")
    }

    pub fn new_session(&self, id: impl Into<String>, day: chrono::NaiveDate) -> SessionState {
        let start = self.graph.generic_state().id.clone();
        SessionState::new(id, start, day)
    }

    /// Handles one user message at `timestamp` (ms). The user message and
    /// any response are appended to the session transcripts.
    pub fn handle_message(
        &self,
        session: &mut SessionState,
        text: &str,
        timestamp: i64,
        neural: Option<&dyn NeuralResponder>,
    ) -> Result<RoutingDecision, ControllerError> {
        let ts = session.transcript.last_timestamp().map_or(timestamp, |l| l.max(timestamp));
        let mut trace = Vec::new();

        let expected = self.graph.expected_slot(session).map(|s| s.entity_type);
        let spans = self.recognizer.extract_gated(text, expected);
        let provided: Vec<EntityType> = spans.iter().map(|s| s.entity_type).collect();
        let tagged = apply_tags(text, &spans);
        self.record(session, Message::user(self.next_id(session), text, ts), &tagged);
        if session.handed_off {
            trace.push(TraceEvent::AlreadyHandedOff);
            return Ok(RoutingDecision::handoff(0.0, trace));
        }

        for s in &spans {
            if let EntityValue::Person { name, role: NameRole::User } = &s.value {
                session.user_name = Some(name.clone());
            }
        }
        session.entities = merge_into(core::mem::take(&mut session.entities), &spans);
        if !provided.is_empty() {
            trace.push(TraceEvent::EntitiesExtracted { types: provided.clone() });
        }

        // Entity surfaces ("tomorrow", "7 am") say nothing about intent.
        let intent_text = strip_spans(text, &spans);
        let decision = self
            .graph
            .advance(&self.matcher, session, &intent_text, &provided, self.config.tau_sim)?;
        if decision.is_match() {
            trace.push(TraceEvent::GraphMatched {
                state: decision.matched_state.clone().unwrap_or_default(),
                score: decision.score,
                slot_continuation: decision.slot_continuation,
            });
            session.neural_consecutive = 0;
            return Ok(self.respond_with(session, decision, Engine::Graph, ts, trace));
        }
        let graph_score = decision.score;
        trace.push(TraceEvent::GraphMiss { best_score: graph_score });

        if check_turn_threshold(session, &self.config) {
            trace.push(TraceEvent::TurnThreshold {
                consecutive: session.neural_consecutive,
            });
            return Ok(self.hand_off(session, graph_score, trace));
        }
        let generated = neural
            .and_then(|m| m.respond(&session.context, self.config.max_decode_len))
            .filter(|out| !out.is_empty());
        let Some(tokens) = generated else {
            trace.push(TraceEvent::ModelUnavailable);
            return Ok(self.hand_off(session, graph_score, trace));
        };
        trace.push(TraceEvent::NeuralGenerated { text: tokens.join(" ") });

        if tokens.len() == 1 && is_action_tag(&tokens[0]) {
            let tag = &tokens[0];
            if let Some(state) = map_action_tag(tag, &self.graph) {
                trace.push(TraceEvent::ActionMapped {
                    tag: tag.clone(),
                    state: state.id.clone(),
                });
                let mut d = self.graph.execute_action(session, tag, graph_score).expect("tag maps to a state");
                d.score = graph_score;
                session.neural_consecutive += 1;
                return Ok(self.respond_with(session, d, Engine::Neural, ts, trace));
            }
            trace.push(TraceEvent::UnknownActionTag { tag: tag.clone() });
        }

        let body = fill_generated(&tokens, session);
        if check_unfavorable(&body, session, &self.config) {
            trace.push(TraceEvent::Unfavorable {
                count: session.unfavorable_count,
            });
            return Ok(self.hand_off(session, graph_score, trace));
        }
        session.neural_consecutive += 1;
        let msg = Message::assistant(self.next_id(session), Responder::Neural, body, ts);
        let norm = tokens.join(" ");
        self.record(session, msg.clone(), &norm);
        Ok(RoutingDecision {
            engine: Engine::Neural,
            response: Some(msg),
            graph_score,
            matched_state: None,
            action_executed: None,
            action_entities: None,
            prompted_slot: None,
            trace,
        })
    }

    /// Returns a handed-off session to automated handling, as when a human
    /// agent hands the chat back.
    pub fn resume(&self, session: &mut SessionState) {
        session.handed_off = false;
        session.neural_consecutive = 0;
    }

    /// Appends an assistant message written outside the engines, such as a
    /// human agent's reply.
    pub fn record_reply(&self, session: &mut SessionState, responder: Responder, body: &str, timestamp: i64) -> Message {
        let ts = session.transcript.last_timestamp().map_or(timestamp, |l| l.max(timestamp));
        let msg = Message::assistant(self.next_id(session), responder, body, ts);
        let tagged = self.recognizer.replace_with_tags(body).0;
        self.record(session, msg.clone(), &tagged);
        msg
    }

    fn hand_off(&self, session: &mut SessionState, graph_score: f64, mut trace: Vec<TraceEvent>) -> RoutingDecision {
        session.handed_off = true;
        trace.push(TraceEvent::HandedOff);
        RoutingDecision::handoff(graph_score, trace)
    }

    fn respond_with(
        &self,
        session: &mut SessionState,
        d: GraphDecision,
        engine: Engine,
        ts: i64,
        mut trace: Vec<TraceEvent>,
    ) -> RoutingDecision {
        let responder = match engine {
            Engine::Graph => Responder::Graph,
            _ => Responder::Neural,
        };
        let body = d.response.clone().unwrap_or_default();
        let mut msg = Message::assistant(self.next_id(session), responder, body.clone(), ts);
        msg.element = self.element_for(session, &d);
        let norm = match &d.action_fired {
            Some(a) => {
                trace.push(TraceEvent::ActionFired { tag: a.tag.clone() });
                a.tag.clone()
            }
            None => self.recognizer.replace_with_tags(&body).0,
        };
        self.record(session, msg.clone(), &norm);
        RoutingDecision {
            engine,
            response: Some(msg),
            graph_score: d.score,
            matched_state: d.matched_state,
            action_executed: d.action_fired,
            action_entities: d.action_entities,
            prompted_slot: d.prompted_slot,
            trace,
        }
    }

    /// Quick replies listing the entry intents on the generic state, and a
    /// form for the missing slots when an action state is first prompted
    /// with more than one slot open.
    fn element_for(&self, session: &SessionState, d: &GraphDecision) -> Option<StructuredElement> {
        let state = self.graph.state(d.matched_state.as_deref()?)?;
        if state.generic {
            let labels: Vec<String> = self
                .graph
                .states()
                .iter()
                .filter(|s| s.entry && !s.generic)
                .map(|s| capitalize(&s.intent))
                .collect();
            return (!labels.is_empty()).then(|| StructuredElement::quick_replies(labels));
        }
        if d.prompted_slot.is_some() && d.slots_missing.len() > 1 {
            let fields = state
                .missing_slots(&session.entities)
                .map(|s| FormField {
                    name: s.name.clone(),
                    prompt: s.prompt.clone(),
                    entity_type: s.entity_type,
                })
                .collect();
            return Some(StructuredElement::form(fields));
        }
        None
    }

    fn next_id(&self, session: &SessionState) -> String {
        format!("{}-{}", session.session_id, session.transcript.messages.len())
    }

    /// Appends to the raw transcript and, normalized, to the model-facing
    /// transcript, then refreshes the context window.
    fn record(&self, session: &mut SessionState, msg: Message, tagged_body: &str) {
        let mut norm = msg.clone();
        norm.body = normalize_orthography(tagged_body);
        if is_action_tag(&norm.body) && msg.sender == crate::conversation::Sender::Assistant {
            norm.kind = MessageKind::ActionTag;
            norm.element = None;
        }
        if let Err(e) = push_message(&mut session.transcript, msg) {
            log::error!("transcript append failed: {e}");
        }
        if let Err(e) = push_message(&mut session.normalized, norm) {
            log::error!("normalized transcript append failed: {e}");
        }
        session.refresh_context();
    }
}

fn strip_spans(text: &str, spans: &[EntitySpan]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut spans = spans.iter().peekable();
    for (i, ch) in text.chars().enumerate() {
        while spans.peek().is_some_and(|s| s.end <= i) {
            spans.next();
        }
        if spans.peek().is_some_and(|s| s.start <= i) {
            continue;
        }
        out.push(ch);
    }
    out
}

fn capitalize(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect::<String>(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Boxed responder for call sites that own their model.
pub type BoxedResponder = Box<dyn NeuralResponder + Send + Sync>;
