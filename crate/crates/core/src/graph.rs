//! Dialogue graph: states with templates, slot tables, canned responses and
//! actions, connected by directed edges.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::conversation::SessionState;
use crate::entity::{EntitySet, EntityType, EntityValue};
use crate::text::{is_action_tag, normalize_orthography, normalize_query};
use crate::tfidf::{TfidfError, TfidfIndex};

pub const GRAPH_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_TAU_SIM: f64 = 0.35;

/// Reminders graph shipped with the crate.
pub const REMINDERS_GRAPH: &str = include_str!("../data/reminders_graph.json");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("graph document does not parse: {0}")]
    Parse(String),
    #[error("unsupported graph format version {0}")]
    Version(u32),
    #[error("duplicate state `{0}`")]
    DuplicateState(String),
    #[error("dangling edge → {missing}")]
    DanglingEdge { from: String, to: String, missing: String },
    #[error("graph needs exactly one generic state, found {0}")]
    GenericCount(usize),
    #[error("state `{0}` has no templates")]
    NoTemplates(String),
    #[error("template {index} of state `{state}` has no terms")]
    EmptyTemplate { state: String, index: usize },
    #[error("slot `{slot}` of state `{state}` has no prompt")]
    MissingSlotPrompt { state: String, slot: String },
    #[error("state `{state}` has action tag `{tag}` not of the form _api_<name>_")]
    BadActionTag { state: String, tag: String },
    #[error("action tag `{0}` is used by more than one state")]
    DuplicateActionTag(String),
    #[error("action of state `{state}` requires unknown or optional slot `{slot}`")]
    BadRequiredSlot { state: String, slot: String },
    #[error("template of state `{state}` uses placeholder `{{{name}}}` that is not a required slot")]
    BadPlaceholder { state: String, name: String },
    #[error("state `{0}` has nothing to say when reached without an action")]
    NoResponse(String),
    #[error("generic state `{0}` cannot carry slots or an action")]
    GenericWithAction(String),
    #[error("state `{0}` is unreachable")]
    Unreachable(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("missing values for placeholders: {}", missing.join(", "))]
pub struct RenderError {
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub name: String,
    pub entity_type: EntityType,
    #[serde(default = "yes")]
    pub required: bool,
    #[serde(default)]
    pub prompt: String,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    CreateReminder,
    CancelReminder,
    ViewReminders,
    ModifyReminder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub tag: String,
    pub kind: ActionKind,
    #[serde(default)]
    pub required_slots: Vec<String>,
    pub ack_template: String,
}

/// A user phrase, optionally with its own canned answer (FAQ style).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Template {
    Phrase(String),
    WithResponse { text: String, response: String },
}

impl Template {
    pub fn text(&self) -> &str {
        match self {
            Template::Phrase(t) | Template::WithResponse { text: t, .. } => t,
        }
    }

    pub fn response(&self) -> Option<&str> {
        match self {
            Template::Phrase(_) => None,
            Template::WithResponse { response, .. } => Some(response),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateResponses {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub greeting: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphState {
    pub id: String,
    pub intent: String,
    #[serde(default)]
    pub entry: bool,
    #[serde(default)]
    pub generic: bool,
    #[serde(default)]
    pub templates: Vec<Template>,
    #[serde(default)]
    pub slots: Vec<SlotSpec>,
    #[serde(default)]
    pub responses: StateResponses,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionSpec>,
}

impl GraphState {
    /// Required slots absent from `entities`, in definition order.
    pub fn missing_slots<'a>(&'a self, entities: &EntitySet) -> impl Iterator<Item = &'a SlotSpec> + 'a {
        let present: BTreeSet<EntityType> = entities.iter().map(|(t, _)| t).collect();
        self.slots
            .iter()
            .filter(move |s| s.required && !present.contains(&s.entity_type))
    }
}

/// Serialized form of a graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDefinition {
    pub version: u32,
    pub states: Vec<GraphState>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDecision {
    pub matched_state: Option<String>,
    pub score: f64,
    /// True when the match came from a slot value answering the pending
    /// prompt rather than from template similarity.
    #[serde(default)]
    pub slot_continuation: bool,
    pub response: Option<String>,
    pub action_fired: Option<ActionSpec>,
    /// Entities the fired action consumed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_entities: Option<EntitySet>,
    pub slots_missing: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompted_slot: Option<SlotSpec>,
}

impl GraphDecision {
    fn miss(score: f64) -> Self {
        GraphDecision {
            matched_state: None,
            score,
            slot_continuation: false,
            response: None,
            action_fired: None,
            action_entities: None,
            slots_missing: Vec::new(),
            prompted_slot: None,
        }
    }

    pub fn is_match(&self) -> bool {
        self.matched_state.is_some()
    }
}

/// Per-state similarity summary used for ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateScore {
    pub state_id: String,
    pub score: f64,
    pub template_index: usize,
    pub matched_terms: usize,
}

#[derive(Debug, Clone)]
pub struct DialogueGraph {
    states: Vec<GraphState>,
    index: BTreeMap<String, usize>,
    edges: Vec<(usize, usize)>,
    successors: Vec<Vec<usize>>,
    generic: usize,
}

pub fn load_graph(document: &str) -> Result<DialogueGraph, GraphError> {
    let def: GraphDefinition = serde_json::from_str(document).map_err(|e| GraphError::Parse(e.to_string()))?;
    DialogueGraph::from_definition(def)
}

impl DialogueGraph {
    pub fn reminders() -> Self {
        load_graph(REMINDERS_GRAPH).expect("shipped graph validates")
    }

    pub fn from_definition(def: GraphDefinition) -> Result<Self, GraphError> {
        if def.version != GRAPH_FORMAT_VERSION {
            return Err(GraphError::Version(def.version));
        }
        let mut index = BTreeMap::new();
        for (i, s) in def.states.iter().enumerate() {
            if index.insert(s.id.clone(), i).is_some() {
                return Err(GraphError::DuplicateState(s.id.clone()));
            }
        }
        let mut edges = Vec::new();
        for (from, to) in &def.edges {
            match (index.get(from), index.get(to)) {
                (Some(&a), Some(&b)) => {
                    if !edges.contains(&(a, b)) {
                        edges.push((a, b));
                    }
                }
                (a, _) => {
                    return Err(GraphError::DanglingEdge {
                        from: from.clone(),
                        to: to.clone(),
                        missing: if a.is_none() { from.clone() } else { to.clone() },
                    })
                }
            }
        }
        let generics: Vec<usize> = (0..def.states.len()).filter(|&i| def.states[i].generic).collect();
        if generics.len() != 1 {
            return Err(GraphError::GenericCount(generics.len()));
        }
        let mut tags = BTreeSet::new();
        for s in &def.states {
            validate_state(s)?;
            if let Some(a) = &s.action {
                if !tags.insert(a.tag.as_str()) {
                    return Err(GraphError::DuplicateActionTag(a.tag.clone()));
                }
            }
        }

        let mut successors = alloc::vec![Vec::new(); def.states.len()];
        for &(a, b) in &edges {
            successors[a].push(b);
        }
        for list in &mut successors {
            list.sort_unstable();
        }

        // Reachability: entry and generic states are globally available.
        let mut seen: Vec<bool> = def.states.iter().map(|s| s.entry || s.generic).collect();
        let mut stack: Vec<usize> = (0..seen.len()).filter(|&i| seen[i]).collect();
        while let Some(i) = stack.pop() {
            for &j in &successors[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        if let Some(i) = seen.iter().position(|r| !r) {
            return Err(GraphError::Unreachable(def.states[i].id.clone()));
        }

        Ok(DialogueGraph {
            generic: generics[0],
            states: def.states,
            index,
            edges,
            successors,
        })
    }

    pub fn to_definition(&self) -> GraphDefinition {
        GraphDefinition {
            version: GRAPH_FORMAT_VERSION,
            states: self.states.clone(),
            edges: self
                .edges
                .iter()
                .map(|&(a, b)| (self.states[a].id.clone(), self.states[b].id.clone()))
                .collect(),
        }
    }

    pub fn states(&self) -> &[GraphState] {
        &self.states
    }

    pub fn state(&self, id: &str) -> Option<&GraphState> {
        self.index.get(id).map(|&i| &self.states[i])
    }

    pub fn generic_state(&self) -> &GraphState {
        &self.states[self.generic]
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges
            .iter()
            .map(|&(a, b)| (self.states[a].id.as_str(), self.states[b].id.as_str()))
    }

    /// TF-IDF index over every template, owned by state id.
    pub fn build_matcher(&self) -> Result<TfidfIndex, TfidfError> {
        let templates: Vec<(&str, &str)> = self
            .states
            .iter()
            .flat_map(|s| s.templates.iter().map(move |t| (s.id.as_str(), t.text())))
            .collect();
        TfidfIndex::fit(&templates)
    }

    /// Edge successors of the current state, every entry state and the
    /// generic state, in definition order.
    pub fn candidate_states(&self, session: &SessionState) -> Result<Vec<&str>, GraphError> {
        let cur = self.position(&session.current_state_id)?;
        Ok(self.candidates_of(cur).into_iter().map(|i| self.states[i].id.as_str()).collect())
    }

    fn candidates_of(&self, cur: usize) -> Vec<usize> {
        (0..self.states.len())
            .filter(|&i| self.states[i].entry || i == self.generic || self.successors[cur].contains(&i))
            .collect()
    }

    fn position(&self, id: &str) -> Result<usize, GraphError> {
        self.index.get(id).copied().ok_or_else(|| GraphError::UnknownState(id.into()))
    }

    /// Best template score per candidate state, ranked: score, then matched
    /// terms, then state id.
    pub fn rank_states(&self, matcher: &TfidfIndex, session: &SessionState, text: &str) -> Result<Vec<StateScore>, GraphError> {
        let cands = self.candidate_states(session)?;
        let mut best: BTreeMap<&str, StateScore> = BTreeMap::new();
        for m in matcher.scores(text, &cands) {
            let entry = best.entry(self.states[self.index[&m.state_id]].id.as_str());
            let cand = StateScore {
                state_id: m.state_id,
                score: m.score,
                template_index: m.template_index,
                matched_terms: m.matched_terms,
            };
            entry
                .and_modify(|b| {
                    if cand.score > b.score {
                        *b = cand.clone();
                    }
                })
                .or_insert(cand);
        }
        let mut ranked: Vec<StateScore> = best.into_values().filter(|s| s.matched_terms > 0).collect();
        ranked.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(core::cmp::Ordering::Equal)
                .then(b.matched_terms.cmp(&a.matched_terms))
                .then(a.state_id.cmp(&b.state_id))
        });
        Ok(ranked)
    }

    /// Slot the current state is waiting for, if any.
    pub fn expected_slot(&self, session: &SessionState) -> Option<&SlotSpec> {
        let state = self.state(&session.current_state_id)?;
        state.action.as_ref()?;
        state.missing_slots(&session.entities).next()
    }

    /// One graph step for a user message whose entities are already merged
    /// into `session.entities`; `provided` lists the entity types this
    /// message carried.
    pub fn advance(
        &self,
        matcher: &TfidfIndex,
        session: &mut SessionState,
        text: &str,
        provided: &[EntityType],
        tau_sim: f64,
    ) -> Result<GraphDecision, GraphError> {
        let cur = self.position(&session.current_state_id)?;
        let ranked = self.rank_states(matcher, session, text)?;
        let top = ranked.first();
        if let Some(top) = top.filter(|t| t.score >= tau_sim) {
            let idx = self.index[&top.state_id];
            let canned = self.states[idx]
                .templates
                .iter()
                .enumerate()
                .find(|(_, t)| matcher.phrase(top.template_index) == t.text())
                .and_then(|(_, t)| t.response());
            let mut d = self.enter(session, idx, top.score, canned);
            d.slot_continuation = false;
            return Ok(d);
        }
        let state = &self.states[cur];
        let answers_slot = state.action.is_some()
            && state
                .slots
                .iter()
                .any(|s| s.required && provided.contains(&s.entity_type));
        if answers_slot {
            let mut d = self.enter(session, cur, 1.0, None);
            d.slot_continuation = true;
            return Ok(d);
        }
        Ok(GraphDecision::miss(top.map_or(0.0, |t| t.score)))
    }

    /// Move to the state owning `tag` and run its action if its slots are
    /// filled, otherwise prompt for the first missing one.
    pub fn execute_action(&self, session: &mut SessionState, tag: &str, score: f64) -> Option<GraphDecision> {
        let idx = self.states.iter().position(|s| s.action.as_ref().is_some_and(|a| a.tag == tag))?;
        Some(self.enter(session, idx, score, None))
    }

    pub fn map_action_tag(&self, tag: &str) -> Option<&GraphState> {
        self.states.iter().find(|s| s.action.as_ref().is_some_and(|a| a.tag == tag))
    }

    fn enter(&self, session: &mut SessionState, idx: usize, score: f64, canned: Option<&str>) -> GraphDecision {
        let state = &self.states[idx];
        let newly = session.current_state_id != state.id;
        session.current_state_id = state.id.clone();
        let missing: Vec<&SlotSpec> = state.missing_slots(&session.entities).collect();
        let mut d = GraphDecision {
            matched_state: Some(state.id.clone()),
            score,
            slot_continuation: false,
            response: None,
            action_fired: None,
            action_entities: None,
            slots_missing: missing.iter().map(|s| s.name.clone()).collect(),
            prompted_slot: None,
        };
        let today = Some(session.transcript.day);
        if let Some(slot) = missing.first() {
            let prompt = render_response_on(&slot.prompt, &session.entities, today).unwrap_or_else(|_| slot.prompt.clone());
            d.response = Some(match (&state.responses.greeting, newly) {
                (Some(g), true) => format!("{g} {prompt}"),
                _ => prompt,
            });
            d.prompted_slot = Some((*slot).clone());
        } else if let Some(action) = &state.action {
            // Validation guarantees every ack placeholder is a required slot.
            let ack = render_response_on(&action.ack_template, &session.entities, today)
                .unwrap_or_else(|_| action.ack_template.clone());
            d.response = Some(ack);
            d.action_fired = Some(action.clone());
            d.action_entities = Some(core::mem::take(&mut session.entities));
        } else {
            d.response = canned.map(String::from).or_else(|| state.responses.greeting.clone());
        }
        d
    }

    /// Every raw response template a graph response can be built from.
    pub fn response_templates(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for s in &self.states {
            out.extend(s.responses.greeting.as_deref());
            out.extend(s.templates.iter().filter_map(Template::response));
            out.extend(s.slots.iter().map(|sl| sl.prompt.as_str()));
            out.extend(s.action.as_ref().map(|a| a.ack_template.as_str()));
        }
        out
    }

    /// Acknowledgment patterns in tagged, orthography-normalized form,
    /// mapped to the action tag they stand for.
    pub fn ack_patterns(&self) -> Vec<(String, String)> {
        self.states
            .iter()
            .filter_map(|s| s.action.as_ref())
            .map(|a| (normalize_orthography(&tag_placeholders(&a.ack_template)), a.tag.clone()))
            .collect()
    }
}

fn validate_state(s: &GraphState) -> Result<(), GraphError> {
    if !s.generic && s.templates.is_empty() {
        return Err(GraphError::NoTemplates(s.id.clone()));
    }
    for (index, t) in s.templates.iter().enumerate() {
        if normalize_query(t.text()).is_empty() {
            return Err(GraphError::EmptyTemplate {
                state: s.id.clone(),
                index,
            });
        }
    }
    if s.generic && (s.action.is_some() || !s.slots.is_empty()) {
        return Err(GraphError::GenericWithAction(s.id.clone()));
    }
    for slot in &s.slots {
        if slot.prompt.trim().is_empty() {
            return Err(GraphError::MissingSlotPrompt {
                state: s.id.clone(),
                slot: slot.name.clone(),
            });
        }
    }
    let required: BTreeSet<&str> = s.slots.iter().filter(|x| x.required).map(|x| x.name.as_str()).collect();
    match &s.action {
        Some(a) => {
            if !is_action_tag(&a.tag) {
                return Err(GraphError::BadActionTag {
                    state: s.id.clone(),
                    tag: a.tag.clone(),
                });
            }
            for name in &a.required_slots {
                if !required.contains(name.as_str()) {
                    return Err(GraphError::BadRequiredSlot {
                        state: s.id.clone(),
                        slot: name.clone(),
                    });
                }
            }
            let filled: BTreeSet<&str> = s
                .slots
                .iter()
                .filter(|x| x.required)
                .map(|x| x.entity_type.as_str())
                .collect();
            for name in placeholders(&a.ack_template) {
                if !filled.contains(name) {
                    return Err(GraphError::BadPlaceholder {
                        state: s.id.clone(),
                        name: name.into(),
                    });
                }
            }
        }
        None => {
            let all_canned = !s.templates.is_empty() && s.templates.iter().all(|t| t.response().is_some());
            if s.responses.greeting.is_none() && !all_canned {
                return Err(GraphError::NoResponse(s.id.clone()));
            }
        }
    }
    Ok(())
}

/// `{name}` placeholders in order of appearance.
pub fn placeholders(template: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                out.push(&after[..close]);
                rest = &after[close + 1..];
            }
            None => break,
        }
    }
    out
}

/// Substitutes `{date}`, `{time}`, ... with readable entity values.
pub fn render_response(template: &str, entities: &EntitySet) -> Result<String, RenderError> {
    render_response_on(template, entities, None)
}

/// Like [`render_response`], resolving relative dates against `today` when
/// given.
pub fn render_response_on(template: &str, entities: &EntitySet, today: Option<NaiveDate>) -> Result<String, RenderError> {
    let mut missing = Vec::new();
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let Some(close) = after.find('}') else { break };
        out.push_str(&rest[..open]);
        let name = &after[..close];
        let value = name.parse::<EntityType>().ok().and_then(|t| entities.get(t));
        match value {
            Some(EntityValue::Date(d)) => match today.and_then(|t| d.resolve(t)) {
                Some(date) => out.push_str(&crate::entity::DateValue::Calendar { date }.to_string()),
                None => out.push_str(&d.to_string()),
            },
            Some(v) => out.push_str(&v.to_string()),
            None => missing.push(name.to_string()),
        }
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(RenderError { missing })
    }
}

/// Replaces placeholders by the tags entity replacement produces.
pub fn tag_placeholders(template: &str) -> String {
    let mut out = String::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let Some(close) = after.find('}') else { break };
        out.push_str(&rest[..open]);
        let name = &after[..close];
        out.push_str(match name.parse::<EntityType>() {
            Ok(EntityType::Date) => "_date_",
            Ok(EntityType::Time) => "_time_",
            Ok(EntityType::Phone) => "_phone_number_",
            Ok(EntityType::Frequency) => "_frequency_",
            Ok(EntityType::PersonName) => "_user_name_",
            Ok(EntityType::TaskText) => "_task_",
            Err(()) => name,
        });
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    out
}
