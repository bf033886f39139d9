//! Scripted user simulation for comparing a graph-only bot with the hybrid
//! bot, and for generating synthetic chat logs to train the fallback model.
//!
//! A script names an intent, an opening message and the entity surfaces the
//! user will supply. Noise perturbs openings (spelling edits and code-mixed
//! rewrites) and inserts off-flow messages. Entity surfaces are never
//! perturbed, so completion checks stay well defined.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{ControllerError, Engine, HybridBot, NeuralResponder};
use crate::corpus::{mix_sources, CorpusError, Pipeline, TrainingPair};
use crate::seq2seq::{train, Example, ModelError, Seq2SeqConfig, Seq2SeqModel, TrainConfig, TrainError, TrainReport, Vocabulary};
use crate::conversation::{Conversation, Message, MessageKind, Responder};
use crate::entity::{EntitySet, EntityType, EntityValue};
use crate::eval::{score_report, EvalError, EvalRecord, Percent, ScoreReport};

/// Intents with their clean openings. Every opening matches its state
/// above the default threshold.
pub const OPENINGS: &[(&str, &[&str])] = &[
    (
        "wake_up",
        &[
            "wake me up",
            "please wake me up",
            "can you wake me up",
            "i want a wake up call",
            "set an alarm to wake me up",
            "set a wake up reminder",
        ],
    ),
    (
        "medicine",
        &[
            "remind me to take medicine",
            "set a medicine reminder",
            "remind me to take my pills",
            "please call me for my medicine",
            "i need a reminder for my medicines",
        ],
    ),
    (
        "drink_water",
        &[
            "remind me to drink water",
            "set a drink water reminder",
            "i want to drink more water",
            "water reminder please",
        ],
    ),
    (
        "view_reminders",
        &["show my reminders", "what reminders do i have", "list all my reminders", "view my reminders please"],
    ),
];

/// Hindi-English rewrites of each intent.
pub const CODE_MIXED: &[(&str, &[&str])] = &[
    ("wake_up", &["mujhe uthana hai", "jaldi utha dena", "mujhe alarm lagana hai"]),
    ("medicine", &["dawai yaad dilana", "mujhe dawai lene ka reminder do", "dawai ke liye call karna"]),
    ("drink_water", &["paani peene ka reminder", "paani yaad dilana", "mujhe paani peena hai"]),
    ("view_reminders", &["mere reminders dikhao", "mere reminders kya hai"]),
];

/// Requests outside the supported flows.
pub const FLOW_DEVIATIONS: &[&str] = &[
    "Can you call to another number that I'll share now",
    "why do you need that",
    "hold on",
    "book a cab to the airport",
];

/// Small talk from other domains.
pub const OUT_OF_DOMAIN: &[&str] = &["how is the weather outside", "who won the cricket match", "suggest some movies", "what is the weather like"];

const TIMES: &[&str] = &["7 am", "6:30 am", "2 pm", "9 pm", "8:15 am", "10 am", "5:45 pm"];
const DATES: &[&str] = &["tomorrow", "today", "on monday", "on friday", "on 21 april"];
const FREQUENCIES: &[&str] = &["every 2 hours", "every hour", "every 3 hours", "hourly"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntity {
    pub entity_type: EntityType,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    pub id: String,
    /// Graph state the user wants.
    pub intent: String,
    pub opening: String,
    /// Entities the action needs, in the order the user gives them.
    pub entities: Vec<ScriptEntity>,
    /// Whether the opening already carries the entities.
    #[serde(default)]
    pub entities_in_opening: bool,
}

fn slot_surfaces(intent: &str, rng: &mut ChaCha8Rng) -> Vec<ScriptEntity> {
    let pick = |pool: &[&str], ty, rng: &mut ChaCha8Rng| ScriptEntity {
        entity_type: ty,
        surface: String::from(*pool.choose(rng).expect("non-empty pool")),
    };
    match intent {
        "wake_up" | "medicine" => alloc::vec![pick(TIMES, EntityType::Time, rng), pick(DATES, EntityType::Date, rng)],
        "drink_water" => alloc::vec![pick(FREQUENCIES, EntityType::Frequency, rng)],
        _ => Vec::new(),
    }
}

fn entity_phrase(entities: &[ScriptEntity]) -> String {
    let parts: Vec<String> = entities
        .iter()
        .map(|e| match e.entity_type {
            EntityType::Time => format!("at {}", e.surface),
            _ => e.surface.clone(),
        })
        .collect();
    parts.join(" ")
}

/// `n` clean scripts cycling through the intents.
pub fn generate_scripts(n: usize, seed: u64) -> Vec<Script> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (intent, openings) = OPENINGS[i % OPENINGS.len()];
            let opening = String::from(*openings.choose(&mut rng).expect("non-empty"));
            let entities = slot_surfaces(intent, &mut rng);
            let inline = !entities.is_empty() && rng.gen_bool(0.3);
            let opening = if inline {
                format!("{opening} {}", entity_phrase(&entities))
            } else {
                opening
            };
            Script {
                id: format!("script-{i:05}"),
                intent: String::from(intent),
                opening,
                entities,
                entities_in_opening: inline,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Probability that each non-entity word of the opening gets one
    /// spelling edit.
    pub char_noise: f64,
    /// Share of scripts that get one off-flow message.
    pub deviation_rate: f64,
    /// Share of deviations drawn from other domains rather than the
    /// reminder flow.
    pub out_of_domain_share: f64,
    /// Share of scripts whose opening is replaced by a code-mixed rewrite.
    pub code_mix_rate: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::level(0.0)
    }
}

impl NoiseConfig {
    /// Spelling noise `p`, deviations in `p / 2` of scripts and code-mixing
    /// in `p / 4`.
    pub fn level(p: f64) -> Self {
        NoiseConfig {
            char_noise: p,
            deviation_rate: p / 2.0,
            out_of_domain_share: 0.5,
            code_mix_rate: p / 4.0,
        }
    }
}

/// One random edit: delete, transpose, double or substitute a letter.
pub fn misspell(word: &str, rng: &mut impl Rng) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    if chars.len() < 2 {
        return String::from(word);
    }
    let i = rng.gen_range(0..chars.len());
    match rng.gen_range(0..4) {
        0 if chars.len() > 2 => {
            chars.remove(i);
        }
        1 if i + 1 < chars.len() => chars.swap(i, i + 1),
        2 => chars.insert(i, chars[i]),
        _ => chars[i] = (b'a' + rng.gen_range(0..26u8)) as char,
    }
    chars.into_iter().collect()
}

pub fn add_spelling_noise(text: &str, p: f64, rng: &mut impl Rng) -> String {
    let words: Vec<String> = text
        .split_whitespace()
        .map(|w| if p > 0.0 && rng.gen_bool(p.min(1.0)) { misspell(w, rng) } else { String::from(w) })
        .collect();
    words.join(" ")
}

/// A script with its noise realized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoisyScript {
    pub script: Script,
    pub opening: String,
    /// Off-flow message sent right after the opening.
    pub deviation: Option<String>,
}

pub fn apply_noise(script: &Script, noise: &NoiseConfig, rng: &mut impl Rng) -> NoisyScript {
    let mixed = CODE_MIXED.iter().find(|(i, _)| *i == script.intent).map(|(_, v)| *v);
    let base = match mixed {
        Some(pool) if noise.code_mix_rate > 0.0 && rng.gen_bool(noise.code_mix_rate.min(1.0)) => {
            let rewrite = pool.choose(rng).expect("non-empty");
            if script.entities_in_opening {
                format!("{rewrite} {}", entity_phrase(&script.entities))
            } else {
                String::from(*rewrite)
            }
        }
        _ => script.opening.clone(),
    };
    let opening = if script.entities_in_opening {
        // Keep the appended entity phrase intact.
        let tail = entity_phrase(&script.entities);
        let head = base.strip_suffix(&tail).unwrap_or(&base).trim_end();
        format!("{} {tail}", add_spelling_noise(head, noise.char_noise, rng))
    } else {
        add_spelling_noise(&base, noise.char_noise, rng)
    };
    let deviation = (noise.deviation_rate > 0.0 && rng.gen_bool(noise.deviation_rate.min(1.0))).then(|| {
        let pool = if rng.gen_bool(noise.out_of_domain_share.clamp(0.0, 1.0)) {
            OUT_OF_DOMAIN
        } else {
            FLOW_DEVIATIONS
        };
        String::from(*pool.choose(rng).expect("non-empty"))
    });
    NoisyScript {
        script: script.clone(),
        opening,
        deviation,
    }
}

fn script_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn realize(scripts: &[Script], noise: &NoiseConfig, seed: u64) -> Vec<NoisyScript> {
    scripts
        .iter()
        .enumerate()
        .map(|(i, s)| apply_noise(s, noise, &mut script_rng(seed, i)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    GraphOnly,
    Hybrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub record: EvalRecord,
    pub conversation: Conversation,
    pub handed_off: bool,
    /// Tag of the action that ended the conversation, if any.
    pub action: Option<String>,
}

/// Longest simulated exchange, in user messages.
pub const MAX_USER_TURNS: usize = 6;

/// Values the recognizer assigns to the script's clean surfaces.
pub fn expected_entities(bot: &HybridBot, script: &Script) -> EntitySet {
    let mut set = EntitySet::new();
    for e in &script.entities {
        for span in bot.recognizer.extract(&e.surface) {
            if span.entity_type == e.entity_type {
                set.insert(span.value);
            }
        }
    }
    set
}

fn completes(bot: &HybridBot, script: &Script, tag: &str, got: Option<&EntitySet>) -> bool {
    let Some(state) = bot.graph.state(&script.intent) else { return false };
    let Some(action) = &state.action else { return false };
    if action.tag != tag {
        return false;
    }
    let want = expected_entities(bot, script);
    action.required_slots.iter().all(|slot| {
        let ty = state.slots.iter().find(|s| &s.name == slot).map(|s| s.entity_type);
        match ty {
            Some(ty) => want.get(ty).is_some() && want.get(ty) == got.and_then(|g| g.get(ty)),
            None => false,
        }
    })
}

/// Fixed reply a simulated human agent gives to off-flow messages.
pub const HUMAN_DEVIATION_REPLY: &str = "I can only help you with reminders right now.";

/// Who answers a graph miss.
enum Fallback<'a> {
    None,
    Neural(&'a dyn NeuralResponder),
    /// A human agent that knows the script, then hands back to the bot.
    OracleHuman,
}

fn simulate(
    bot: &HybridBot,
    noisy: &NoisyScript,
    day: NaiveDate,
    fallback: Fallback<'_>,
) -> Result<SimOutcome, ControllerError> {
    let script = &noisy.script;
    let mut session = bot.new_session(script.id.clone(), day);
    let mut responders = BTreeSet::new();
    let (mut automated, mut total) = (0u32, 0u32);
    let mut action = None;
    let mut completed = false;
    let mut handed_off = false;
    let answer = entity_phrase(&script.entities);

    let mut queue: Vec<String> = Vec::new();
    queue.push(noisy.opening.clone());
    if let Some(dev) = &noisy.deviation {
        queue.push(dev.clone());
    }
    let mut ts = 0i64;
    for turn in 0..MAX_USER_TURNS {
        let text = if turn < queue.len() {
            queue[turn].clone()
        } else if !answer.is_empty() {
            answer.clone()
        } else {
            script.opening.clone()
        };
        ts += 1000;
        let neural = match fallback {
            Fallback::Neural(m) => Some(m),
            _ => None,
        };
        let d = bot.handle_message(&mut session, &text, ts, neural)?;
        let (d, responder) = match (d.engine, &fallback) {
            (Engine::Handoff, Fallback::OracleHuman) => {
                bot.resume(&mut session);
                let reply = oracle_reply(bot, &mut session, script, &text);
                bot.record_reply(&mut session, Responder::Human, &reply.0, ts);
                (reply.1, Responder::Human)
            }
            (Engine::Handoff, _) => {
                handed_off = true;
                responders.insert(Responder::Human);
                total += 1;
                break;
            }
            (Engine::Graph, _) => (d.action_executed.map(|a| (a.tag, d.action_entities)), Responder::Graph),
            (Engine::Neural, _) => (d.action_executed.map(|a| (a.tag, d.action_entities)), Responder::Neural),
        };
        responders.insert(responder);
        total += 1;
        if responder != Responder::Human {
            automated += 1;
        }
        if let Some((tag, ents)) = d {
            completed = completes(bot, script, &tag, ents.as_ref());
            action = Some(tag);
            break;
        }
    }
    let mut conversation = session.transcript;
    conversation.completed = completed;
    if completed {
        conversation.completion_task = Some(script.intent.clone());
    }
    conversation.domain = Some(String::from("reminders"));
    Ok(SimOutcome {
        record: EvalRecord {
            conversation_id: script.id.clone(),
            day,
            completed,
            responders,
            automated_response_count: automated,
            total_responses: total,
        },
        conversation,
        handed_off,
        action,
    })
}

type ActionResult = Option<(String, Option<EntitySet>)>;

/// What a competent agent says on a graph miss: a polite redirect for
/// off-flow messages, otherwise the intent's next prompt, or the action once
/// all its slots are known.
fn oracle_reply(
    bot: &HybridBot,
    session: &mut crate::conversation::SessionState,
    script: &Script,
    text: &str,
) -> (String, ActionResult) {
    let off_flow = FLOW_DEVIATIONS.contains(&text) || OUT_OF_DOMAIN.contains(&text);
    let tag = bot
        .graph
        .state(&script.intent)
        .and_then(|s| s.action.as_ref())
        .map(|a| a.tag.clone());
    match (off_flow, tag) {
        (false, Some(tag)) => {
            let d = bot
                .graph
                .execute_action(session, &tag, 0.0)
                .expect("intent state owns its tag");
            let body = d.response.clone().unwrap_or_default();
            let act = d.action_fired.map(|a| (a.tag, d.action_entities));
            (body, act)
        }
        _ => (String::from(HUMAN_DEVIATION_REPLY), None),
    }
}

fn day_of(start: NaiveDate, days: usize, i: usize) -> NaiveDate {
    start
        .checked_add_days(Days::new((i % days.max(1)) as u64))
        .expect("date in range")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub noise: NoiseConfig,
    pub seed: u64,
    /// Scripts are spread round-robin over this many days.
    pub days: usize,
    pub start_day: NaiveDate,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            noise: NoiseConfig::default(),
            seed: 0,
            days: 5,
            start_day: NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delta {
    /// Percentage points.
    pub e2e: Percent,
    pub aor: Percent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub config: ExperimentConfig,
    pub graph_only: ScoreReport,
    pub hybrid: ScoreReport,
    /// Hybrid minus graph-only on the day-averaged scores.
    pub delta: Delta,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub fn run_policy(
    bot: &HybridBot,
    scripts: &[NoisyScript],
    policy: Policy,
    neural: Option<&dyn NeuralResponder>,
    config: &ExperimentConfig,
) -> Result<Vec<SimOutcome>, SimError> {
    scripts
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let fallback = match (policy, neural) {
                (Policy::Hybrid, Some(m)) => Fallback::Neural(m),
                _ => Fallback::None,
            };
            Ok(simulate(bot, s, day_of(config.start_day, config.days, i), fallback)?)
        })
        .collect()
}

/// Runs both policies on the same noised scripts.
pub fn run_experiment(
    bot: &HybridBot,
    scripts: &[Script],
    neural: &dyn NeuralResponder,
    config: &ExperimentConfig,
) -> Result<Comparison, SimError> {
    let noisy = realize(scripts, &config.noise, config.seed);
    let report = |policy| -> Result<ScoreReport, SimError> {
        let out = run_policy(bot, &noisy, policy, Some(neural), config)?;
        let records: Vec<EvalRecord> = out.into_iter().map(|o| o.record).collect();
        Ok(score_report(&records)?)
    };
    let graph_only = report(Policy::GraphOnly)?;
    let hybrid = report(Policy::Hybrid)?;
    let delta = Delta {
        e2e: hybrid.mean_over_days.e2e - graph_only.mean_over_days.e2e,
        aor: hybrid.mean_over_days.aor - graph_only.mean_over_days.aor,
    };
    Ok(Comparison {
        config: *config,
        graph_only,
        hybrid,
        delta,
    })
}

/// Chat logs in which the graph answers what it can and a simulated human
/// agent answers the rest.
pub fn training_logs(
    bot: &HybridBot,
    scripts: &[Script],
    noise: &NoiseConfig,
    seed: u64,
    start_day: NaiveDate,
) -> Result<Vec<Conversation>, ControllerError> {
    realize(scripts, noise, seed)
        .iter()
        .enumerate()
        .map(|(i, s)| Ok(simulate(bot, s, day_of(start_day, 5, i), Fallback::OracleHuman)?.conversation))
        .collect()
}

/// Small talk from other services, as whole conversations.
const OTHER_DOMAINS: &[(&str, &[(&str, &str)])] = &[
    ("food", &[("order a pizza for me", "Sure, which pizza would you like?"), ("a large margherita", "Your order is placed.")]),
    ("travel", &[("book a cab to the airport", "Where should the cab pick you up?"), ("from my office", "Your cab is booked.")]),
    ("recharge", &[("recharge my phone", "Which operator do you use?"), ("the usual one", "Recharge done.")]),
];

/// A raw log of `n` conversations shaped like production traffic: reminder
/// chats from [`training_logs`] at noise level 0.2, about one in six
/// conversations from other domains, and runs of reminder notifications
/// after some completed chats.
pub fn raw_corpus(bot: &HybridBot, n: usize, seed: u64) -> Result<Vec<Conversation>, ControllerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2017, 4, 1).expect("valid date");
    let reminders = n - n / 6;
    let scripts = generate_scripts(reminders, seed);
    let mut logs = training_logs(bot, &scripts, &NoiseConfig::level(0.2), seed.wrapping_add(1), start)?;
    for (i, c) in logs.iter_mut().enumerate() {
        c.id = format!("raw-{i:05}");
        if c.completed && rng.gen_bool(0.4) {
            let mut ts = c.last_timestamp().unwrap_or(0);
            for k in 0..rng.gen_range(1..=4) {
                ts += 3_600_000;
                let id = format!("{}-n{k}", c.id);
                c.messages.push(
                    Message::assistant(id, Responder::System, "Reminder: time to take your medicine.", ts)
                        .with_kind(MessageKind::Notification),
                );
            }
        }
    }
    for i in reminders..n {
        let (domain, turns) = OTHER_DOMAINS[rng.gen_range(0..OTHER_DOMAINS.len())];
        let mut c = Conversation::new(format!("raw-{i:05}"), day_of(start, 5, i));
        c.domain = Some(String::from(domain));
        let mut ts = 0;
        for (k, (user, agent)) in turns.iter().enumerate() {
            ts += 1000;
            c.messages.push(Message::user(format!("{i}-u{k}"), *user, ts));
            c.messages.push(Message::assistant(format!("{i}-a{k}"), Responder::Human, *agent, ts));
        }
        logs.push(c);
    }
    logs.shuffle(&mut rng);
    Ok(logs)
}

/// True when the recognizer reads `surface` as exactly one entity of `ty`
/// with no leftover words beyond connectives.
pub fn surface_parses(bot: &HybridBot, surface: &str, ty: EntityType) -> bool {
    let spans = bot.recognizer.extract(surface);
    spans.len() == 1 && spans[0].entity_type == ty && !matches!(spans[0].value, EntityValue::Task { .. })
}

/// How the fallback model is trained from simulated logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FallbackRecipe {
    pub conversations: usize,
    pub noise: NoiseConfig,
    /// Human share of the training pairs; all pairs when absent.
    pub human_fraction: Option<f64>,
    pub min_count: usize,
    pub buffer: usize,
    pub model: Seq2SeqConfig,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for FallbackRecipe {
    fn default() -> Self {
        FallbackRecipe {
            conversations: 1200,
            noise: NoiseConfig::level(0.3),
            human_fraction: Some(0.8),
            min_count: 2,
            buffer: 8,
            model: Seq2SeqConfig::desk(),
            train: TrainConfig {
                learning_rate: 1.0,
                batch_size: 8,
                epochs: 12,
                keep_prob: 1.0,
                ..TrainConfig::default()
            },
            seed: 11,
        }
    }
}

#[derive(Debug)]
pub struct TrainedFallback {
    pub model: Seq2SeqModel,
    pub pairs: Vec<TrainingPair>,
    pub report: TrainReport,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FallbackError {
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Simulates logs with a human agent covering graph misses, runs the
/// preprocessing pipeline and trains a seq2seq model on the pairs.
pub fn train_fallback(
    bot: &HybridBot,
    recipe: &FallbackRecipe,
    on_epoch: impl FnMut(usize, f64),
) -> Result<TrainedFallback, FallbackError> {
    let scripts = generate_scripts(recipe.conversations, recipe.seed);
    let start = NaiveDate::from_ymd_opt(2017, 6, 1).expect("valid date");
    let logs = training_logs(bot, &scripts, &recipe.noise, recipe.seed.wrapping_add(1), start)?;
    let mut pipeline = Pipeline::for_graph(&bot.graph);
    pipeline.recognizer = bot.recognizer.clone();
    let out = pipeline.run(&logs, 1..=5)?;
    let pairs = match recipe.human_fraction {
        Some(f) => mix_sources(&out.pairs, f, recipe.seed)?,
        None => out.pairs,
    };
    let vocab = Vocabulary::build(
        pairs.iter().flat_map(|p| [p.context.as_slice(), p.target.as_slice()]),
        recipe.min_count,
        recipe.buffer,
    );
    let mut model = Seq2SeqModel::new(recipe.model.clone(), vocab)?;
    let examples: Vec<Example> = pairs.iter().map(|p| model.example(&p.context, &p.target)).collect();
    let report = train(&mut model, &examples, &recipe.train, on_epoch)?;
    Ok(TrainedFallback { model, pairs, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::HybridBot;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2018, 1, 1).unwrap()
    }

    #[test]
    fn surfaces_parse_as_their_type() {
        let bot = HybridBot::reminders();
        for (pool, ty) in [(TIMES, EntityType::Time), (DATES, EntityType::Date), (FREQUENCIES, EntityType::Frequency)] {
            for s in pool {
                assert!(surface_parses(&bot, s, ty), "{s}");
            }
        }
        for text in FLOW_DEVIATIONS.iter().chain(OUT_OF_DOMAIN) {
            assert!(bot.recognizer.extract(text).is_empty(), "{text}");
        }
    }

    #[test]
    fn clean_openings_match_their_state() {
        let bot = HybridBot::reminders();
        for (intent, openings) in OPENINGS {
            for o in *openings {
                let s = bot.new_session("x", day());
                let ranked = bot.graph.rank_states(&bot.matcher, &s, o).unwrap();
                assert_eq!(ranked[0].state_id, *intent, "{o}");
                assert!(ranked[0].score >= bot.config.tau_sim, "{o}: {}", ranked[0].score);
            }
        }
    }

    #[test]
    fn off_flow_messages_miss_the_graph() {
        let bot = HybridBot::reminders();
        for text in FLOW_DEVIATIONS.iter().chain(OUT_OF_DOMAIN) {
            let s = bot.new_session("x", day());
            let ranked = bot.graph.rank_states(&bot.matcher, &s, text).unwrap();
            assert!(ranked.first().is_none_or(|r| r.score < bot.config.tau_sim), "{text}");
        }
    }

    #[test]
    fn zero_noise_graph_only_completes_everything() {
        let bot = HybridBot::reminders();
        let scripts = generate_scripts(40, 3);
        let cfg = ExperimentConfig::default();
        let noisy = realize(&scripts, &cfg.noise, 0);
        let out = run_policy(&bot, &noisy, Policy::GraphOnly, None, &cfg).unwrap();
        for o in &out {
            assert!(o.record.is_end_to_end(), "{:?}", o.conversation);
        }
    }

    #[test]
    fn spelling_noise_hurts_graph_only() {
        let bot = HybridBot::reminders();
        let scripts = generate_scripts(200, 5);
        let cfg = ExperimentConfig {
            noise: NoiseConfig::level(0.6),
            ..ExperimentConfig::default()
        };
        let noisy = realize(&scripts, &cfg.noise, 1);
        let out = run_policy(&bot, &noisy, Policy::GraphOnly, None, &cfg).unwrap();
        let recs: Vec<EvalRecord> = out.into_iter().map(|o| o.record).collect();
        let e2e = crate::eval::e2e_score(&recs).unwrap();
        assert!(e2e < Percent(10_000), "{e2e}");
    }

    #[test]
    fn noise_is_deterministic_and_spares_entities() {
        let scripts = generate_scripts(50, 9);
        let a = realize(&scripts, &NoiseConfig::level(0.5), 4);
        assert_eq!(a, realize(&scripts, &NoiseConfig::level(0.5), 4));
        for n in a.iter().filter(|n| n.script.entities_in_opening) {
            assert!(n.opening.ends_with(&entity_phrase(&n.script.entities)), "{}", n.opening);
        }
    }

    #[test]
    fn oracle_logs_have_both_sources() {
        let bot = HybridBot::reminders();
        let scripts = generate_scripts(60, 1);
        let logs = training_logs(&bot, &scripts, &NoiseConfig::level(0.3), 2, day()).unwrap();
        let responders: BTreeSet<Responder> = logs
            .iter()
            .flat_map(|c| c.messages.iter().filter_map(|m| m.responder))
            .collect();
        assert!(responders.contains(&Responder::Graph) && responders.contains(&Responder::Human));
        let done = logs.iter().filter(|c| c.completed).count();
        assert_eq!(done, logs.len());
    }
}
