//! Structured service log: one JSON event per handled message, and the
//! reduction of such a log to evaluation records.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use hybridbot_core::controller::Engine;
use hybridbot_core::conversation::{Conversation, Responder};
use hybridbot_core::eval::EvalRecord;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnEvent {
    pub session_id: String,
    pub day: NaiveDate,
    pub timestamp: i64,
    pub engine: Engine,
    pub graph_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    /// Whether the action reached the reminder store.
    #[serde(default)]
    pub persisted: bool,
    pub handed_off: bool,
}

/// One line of a log `evalctl score` accepts: a full conversation or a
/// service turn event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogLine {
    Conversation(Conversation),
    Turn(TurnEvent),
}

/// Folds turn events into one record per session. A handoff counts as one
/// human response; a persisted action completes the conversation.
pub fn records_from_events(events: &[TurnEvent]) -> Vec<EvalRecord> {
    let mut by_session: BTreeMap<&str, EvalRecord> = BTreeMap::new();
    for e in events {
        let r = by_session.entry(&e.session_id).or_insert_with(|| EvalRecord {
            conversation_id: e.session_id.clone(),
            day: e.day,
            completed: false,
            responders: Default::default(),
            automated_response_count: 0,
            total_responses: 0,
        });
        match e.engine {
            Engine::Graph | Engine::Neural => {
                r.responders.insert(if e.engine == Engine::Graph {
                    Responder::Graph
                } else {
                    Responder::Neural
                });
                r.automated_response_count += 1;
                r.total_responses += 1;
            }
            Engine::Handoff if !r.responders.contains(&Responder::Human) => {
                r.responders.insert(Responder::Human);
                r.total_responses += 1;
            }
            Engine::Handoff => {}
        }
        if e.action.is_some() && e.persisted {
            r.completed = true;
        }
    }
    by_session.into_values().collect()
}

/// Evaluation records from a mixed log.
pub fn records_from_log(lines: Vec<LogLine>) -> Vec<EvalRecord> {
    let mut turns = Vec::new();
    let mut out = Vec::new();
    for l in lines {
        match l {
            LogLine::Conversation(c) => out.push(EvalRecord::from_conversation(&c)),
            LogLine::Turn(t) => turns.push(t),
        }
    }
    out.extend(records_from_events(&turns));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, engine: Engine, action: Option<&str>) -> TurnEvent {
        TurnEvent {
            session_id: s.into(),
            day: NaiveDate::from_ymd_opt(2017, 4, 18).unwrap(),
            timestamp: 0,
            engine,
            graph_score: 0.0,
            action: action.map(String::from),
            persisted: action.is_some(),
            handed_off: engine == Engine::Handoff,
        }
    }

    #[test]
    fn folds_sessions() {
        let events = [
            ev("a", Engine::Neural, None),
            ev("a", Engine::Graph, Some("_api_wakeup_reminder_")),
            ev("b", Engine::Neural, None),
            ev("b", Engine::Handoff, None),
            ev("b", Engine::Handoff, None),
            ev("c", Engine::Handoff, None),
        ];
        let r = records_from_events(&events);
        assert_eq!(r.len(), 3);
        assert!(r[0].is_end_to_end());
        assert_eq!((r[0].automated_response_count, r[0].total_responses), (2, 2));
        assert!(!r[1].is_end_to_end() && r[1].has_automated());
        assert_eq!(r[1].total_responses, 2);
        assert!(!r[2].has_automated());
        for x in &r {
            x.validate().unwrap();
        }
    }

    #[test]
    fn log_lines_parse_either_shape() {
        let turn = serde_json::to_string(&ev("a", Engine::Graph, None)).unwrap();
        let conv = serde_json::to_string(&Conversation::new("c", NaiveDate::from_ymd_opt(2017, 4, 18).unwrap())).unwrap();
        assert!(matches!(serde_json::from_str::<LogLine>(&turn).unwrap(), LogLine::Turn(_)));
        assert!(matches!(serde_json::from_str::<LogLine>(&conv).unwrap(), LogLine::Conversation(_)));
    }
}
