//! Acceptance criteria A1-A9. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits non-zero on any failure.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use hybridbot::clock::ManualClock;
use hybridbot::service::{serve, ApiEnvelope, EnvelopeItem, MessageReply, ReminderList, Service, SessionInfo};
use hybridbot::store::ReminderStore;
use hybridbot_core::controller::{is_unfavorable, Engine, HybridBot, NeuralResponder, TraceEvent};
use hybridbot_core::conversation::{Conversation, ElementKind, Responder, Sender, StructuredElement};
use hybridbot_core::corpus::{split, Pipeline};
use hybridbot_core::eval::{score_report, EvalRecord, Scores};
use hybridbot_core::reminder::{ActionOutcome, ReminderKind, ReminderStatus};
use hybridbot_core::seq2seq::{
    gradient_check, train, BucketConfig, PairObjective, Seq2SeqConfig, Seq2SeqModel, TrainConfig, Vocabulary,
};
use hybridbot_core::sim::{
    add_spelling_noise, generate_scripts, raw_corpus, run_experiment, train_fallback, ExperimentConfig, FallbackRecipe,
    NoiseConfig,
};
use hybridbot_core::tfidf::{normalize_query, TfidfIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

// A1

fn record(i: usize, e2e: bool, aor: bool) -> EvalRecord {
    let (responders, auto, total): (&[Responder], u32, u32) = match (e2e, aor) {
        (true, _) => (&[Responder::Graph, Responder::Neural], 3, 3),
        (false, true) => (&[Responder::Graph, Responder::Human], 1, 2),
        (false, false) => (&[Responder::Human], 0, 1),
    };
    EvalRecord {
        conversation_id: format!("c{i}"),
        day: NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
        completed: e2e || i % 2 == 0,
        responders: responders.iter().copied().collect(),
        automated_response_count: auto,
        total_responses: total,
    }
}

fn constructed_log(n: usize, e2e: usize, aor: usize) -> Vec<EvalRecord> {
    (0..n).map(|i| record(i, i < e2e, i < aor)).collect()
}

fn a1() -> Check {
    let mut lines = Vec::new();
    for (e2e, aor, want) in [(6923, 8821, (6923, 8821, 1898)), (7711, 9381, (7711, 9381, 1670))] {
        let log = constructed_log(10_000, e2e, aor);
        let s = Scores::of(&log).map_err(|e| e.to_string())?;
        let got = (s.e2e.hundredths(), s.aor.hundredths(), s.aor_minus_e2e.hundredths());
        ensure(got == want, || format!("{e2e}/{aor}: got {got:?}, want {want:?}"))?;
        let pooled = score_report(&log).map_err(|e| e.to_string())?.overall;
        ensure(pooled == s, || "score_report disagrees with Scores::of".into())?;
        lines.push(format!("{:.2}/{:.2}/{:.2}", s.e2e.as_f64(), s.aor.as_f64(), s.aor_minus_e2e.as_f64()));
    }
    Ok(lines.join(", "))
}

// A2

fn a2(bot: &HybridBot, model: &Seq2SeqModel) -> Check {
    let mut lines = Vec::new();
    for seed in [1u64, 2, 3] {
        let scripts = generate_scripts(500, 1000 + seed);
        let noisy = ExperimentConfig {
            noise: NoiseConfig::level(0.2),
            seed,
            ..ExperimentConfig::default()
        };
        let c = run_experiment(bot, &scripts, model, &noisy).map_err(|e| e.to_string())?;
        let (g, h) = (c.graph_only.overall, c.hybrid.overall);
        ensure(h.e2e > g.e2e && h.aor >= g.aor, || {
            format!("seed {seed} noised: graph {g:?} hybrid {h:?}")
        })?;
        let clean = ExperimentConfig {
            noise: NoiseConfig::level(0.0),
            seed,
            ..ExperimentConfig::default()
        };
        let z = run_experiment(bot, &scripts, model, &clean).map_err(|e| e.to_string())?;
        let (zg, zh) = (z.graph_only.overall, z.hybrid.overall);
        ensure(zh.e2e >= zg.e2e, || format!("seed {seed} clean: graph {zg:?} hybrid {zh:?}"))?;
        lines.push(format!(
            "seed {seed}: E2E {:.2}->{:.2} AOR {:.2}->{:.2} (clean {:.2}->{:.2})",
            g.e2e.as_f64(),
            h.e2e.as_f64(),
            g.aor.as_f64(),
            h.aor.as_f64(),
            zg.e2e.as_f64(),
            zh.e2e.as_f64()
        ));
    }
    Ok(lines.join("; "))
}

// A3

/// Dense TF-IDF from scratch: full term-by-template matrix, smoothed idf
/// `ln((1 + N) / (1 + df)) + 1`, raw counts, L2-normalized rows.
fn dense_scores(templates: &[String], query: &str) -> Vec<f64> {
    let docs: Vec<Vec<String>> = templates.iter().map(|t| normalize_query(t)).collect();
    let vocab: Vec<String> = docs.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let n = docs.len() as f64;
    let idf: Vec<f64> = vocab
        .iter()
        .map(|t| ((1.0 + n) / (1.0 + docs.iter().filter(|d| d.contains(t)).count() as f64)).ln() + 1.0)
        .collect();
    let dense = |terms: &[String]| -> Vec<f64> {
        let v: Vec<f64> = vocab
            .iter()
            .zip(&idf)
            .map(|(t, w)| terms.iter().filter(|x| *x == t).count() as f64 * w)
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| if norm > 0.0 { x / norm } else { x }).collect()
    };
    let q = dense(&normalize_query(query));
    docs.iter().map(|d| dense(d).iter().zip(&q).map(|(a, b)| a * b).sum()).collect()
}

fn dense_argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s > 0.0 && best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

const LEXICON: &[&str] = &[
    "set", "alarm", "remind", "me", "water", "drink", "cancel", "it", "view", "my", "wake", "up", "pills", "medicine",
    "Please", "plz", "reminder", "reminders", "show", "every", "hour", "Call", "take", "the", "to", "at", "morning",
];

fn a3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut compared, mut matched) = (0usize, 0usize);
    for corpus in 0..200 {
        let n = rng.gen_range(1..=50);
        let templates: Vec<String> = (0..n)
            .map(|_| {
                let len = rng.gen_range(1..=6);
                (0..len).map(|_| *LEXICON.choose(&mut rng).unwrap()).collect::<Vec<_>>().join(" ")
            })
            .collect();
        let pairs: Vec<(String, &str)> = templates.iter().enumerate().map(|(i, t)| (format!("s{}", i % 7), t.as_str())).collect();
        let idx = TfidfIndex::fit(&pairs).map_err(|e| e.to_string())?;
        let owners: Vec<&str> = pairs.iter().map(|(s, _)| s.as_str()).collect();
        for _ in 0..200 {
            let len = rng.gen_range(0..=10);
            let query = (0..len)
                .map(|_| if rng.gen_bool(0.1) { "zzz" } else { LEXICON.choose(&mut rng).unwrap() })
                .collect::<Vec<_>>()
                .join(" ");
            let dense = dense_scores(&templates, &query);
            for m in idx.scores(&query, &owners) {
                let err = (m.score - dense[m.template_index]).abs();
                ensure(err < 1e-9, || format!("corpus {corpus} query `{query}`: error {err:e}"))?;
                compared += 1;
            }
            let got = idx.best_match(&query, &owners).map(|m| m.template_index);
            ensure(got == dense_argmax(&dense), || format!("corpus {corpus} query `{query}`: argmax {got:?}"))?;
            matched += usize::from(got.is_some());
        }
    }
    Ok(format!("40000 queries, {compared} scores within 1e-9, {matched} non-empty argmaxes agree"))
}

// A4

fn a4() -> Check {
    let mut worst = 0.0f64;
    for seed in [1u64, 2, 3] {
        let ws: Vec<String> = (0..16).map(|i| format!("w{i}")).collect();
        let vocab = Vocabulary::build([ws.as_slice()], 1, 0);
        let config = Seq2SeqConfig {
            layers: 1,
            hidden: 8,
            embed: 6,
            attention: None,
            init_scale: 0.5,
            seed,
            buckets: BucketConfig::default(),
        };
        let mut m = Seq2SeqModel::new(config, vocab).map_err(|e| e.to_string())?;
        ensure(m.vocab().size_total() == 20, || format!("vocab {}", m.vocab().size_total()))?;
        let ex = m.example(&words("w1 w4 w2 w9 w3"), &words("w5 w7 w0 w11"));
        let r = gradient_check(&mut PairObjective::new(&mut m, ex), 1e-4);
        ensure(r.max_relative_error < 1e-4, || format!("seed {seed}: {r:?}"))?;
        worst = worst.max(r.max_relative_error);
    }
    Ok(format!("max relative error {worst:.2e} < 1e-4 over 3 seeds"))
}

// A5

fn toy_pairs() -> Vec<(Vec<String>, Vec<String>)> {
    let asks = [
        ("please wake me up at", "_api_wakeup_reminder_"),
        ("remind me to take my medicine at", "_api_call_reminder_medicine_"),
        ("remind me to drink water at", "_api_drink_water_reminder_"),
        ("cancel the reminder set for", "_api_cancel_reminder_"),
    ];
    let hours = ["one", "two", "three", "four", "five", "six", "seven", "eight"];
    let mut out = Vec::new();
    for (ask, tag) in asks {
        for (i, h) in hours.iter().enumerate() {
            let half = if i % 2 == 0 { "am" } else { "pm" };
            out.push((words(&format!("{ask} {h} {half}")), words(&format!("okay {h} {half} {tag}"))));
        }
    }
    out
}

fn a5(limit: Duration) -> Check {
    let t0 = Instant::now();
    let pairs = toy_pairs();
    let vocab = Vocabulary::build(pairs.iter().flat_map(|(c, t)| [c.as_slice(), t.as_slice()]), 1, 0);
    let mut m = Seq2SeqModel::new(Seq2SeqConfig::desk(), vocab).map_err(|e| e.to_string())?;
    let examples: Vec<_> = pairs.iter().map(|(c, t)| m.example(c, t)).collect();
    let config = TrainConfig {
        learning_rate: 0.5,
        batch_size: 4,
        epochs: 5,
        keep_prob: 1.0,
        ..TrainConfig::default()
    };
    let mut epochs = 0;
    loop {
        train(&mut m, &examples, &TrainConfig { seed: epochs as u64, ..config.clone() }, |_, _| {}).map_err(|e| e.to_string())?;
        epochs += config.epochs;
        let exact = pairs
            .iter()
            .filter(|(c, t)| m.decode_greedy(c, 12).map(|o| &o == t).unwrap_or(false))
            .count();
        if exact * 100 >= 95 * pairs.len() {
            return Ok(format!("{exact}/32 exact after {epochs} epochs"));
        }
        if t0.elapsed() > limit || epochs >= 400 {
            return Err(format!("{exact}/32 exact after {epochs} epochs"));
        }
    }
}

// A6

fn assistant_turns_with_context(corpus: &[Conversation]) -> usize {
    let mut n = 0;
    for c in corpus {
        let (mut seen_words, mut last) = (false, None);
        for m in &c.messages {
            let has_words = !m.body.trim().is_empty();
            if m.sender == Sender::Assistant && last != Some(Sender::Assistant) && seen_words && has_words {
                n += 1;
            }
            seen_words |= has_words;
            last = Some(m.sender);
        }
    }
    n
}

fn a6(bot: &HybridBot) -> Check {
    let raw = raw_corpus(bot, 1000, 5).map_err(|e| e.to_string())?;
    ensure(raw.len() == 1000, || format!("raw corpus has {}", raw.len()))?;
    let pipe = Pipeline::for_graph(&bot.graph);
    let out = pipe.run(&raw, 1..=5).map_err(|e| e.to_string())?;
    let mut prev = (raw.len(), raw.iter().map(|c| c.messages.len()).sum::<usize>());
    let mut trail = vec![format!("{}c/{}m", prev.0, prev.1)];
    for s in &out.steps {
        ensure(s.conversations <= prev.0 && s.messages <= prev.1, || format!("step {} grew: {s:?}", s.step))?;
        prev = (s.conversations, s.messages);
        trail.push(format!("{}c/{}m", prev.0, prev.1));
    }
    for c in &out.corpus {
        for m in &c.messages {
            ensure(m.body.chars().all(|ch| ch.is_ascii_lowercase() || ch == '_' || ch == ' '), || {
                format!("`{}` in {}", m.body, c.id)
            })?;
        }
    }
    let expected = assistant_turns_with_context(&out.corpus);
    ensure(out.pairs.len() == expected, || format!("{} pairs, {expected} assistant turns", out.pairs.len()))?;
    let (tr, te) = split(&out.pairs, 0.8, 3).map_err(|e| e.to_string())?;
    let n = out.pairs.len();
    ensure(tr.len() == (4 * n + 2) / 5 && tr.len() + te.len() == n, || format!("split {}+{} of {n}", tr.len(), te.len()))?;
    Ok(format!("{} ; {n} pairs ; split {}/{}", trail.join(" -> "), tr.len(), te.len()))
}

// A7

const MODIFY_VERBS: &[&str] = &["change", "modify", "move", "reschedule", "shift", "update"];
const MODIFY_KINDS: &[&str] = &["medicine", "water", "wake up", "alarm"];
const MODIFY_FRAMES: &[&str] = &["{v} my {k} reminder to _time_", "please {v} the {k} reminder to _time_", "can you {v} my {k} reminder"];
const HELD_OUT: &str = "can you move my medicine reminder";
const MODIFY_TAG: &str = "_api_modify_reminder_";

fn modify_pool() -> Vec<String> {
    let mut out = Vec::new();
    for v in MODIFY_VERBS {
        for k in MODIFY_KINDS {
            for f in MODIFY_FRAMES {
                out.push(f.replace("{v}", v).replace("{k}", k));
            }
        }
    }
    out.retain(|c| c != HELD_OUT);
    out
}

fn a7(base: &Seq2SeqModel) -> Check {
    let before = base.vocab().clone();
    let mut grown = base.clone();
    let id = grown.add_token(MODIFY_TAG).map_err(|e| e.to_string())?;
    ensure(id as usize == before.size_active(), || format!("new tag got index {id}"))?;
    for (i, t) in before.tokens().iter().enumerate() {
        ensure(grown.vocab().get(t) == Some(i as u32) && grown.vocab().token(i as u32) == Some(t.as_str()), || {
            format!("`{t}` moved from {i}")
        })?;
    }
    ensure(grown.vocab().size_total() == before.size_total(), || "total size changed".into())?;
    ensure(grown.params() == base.params(), || "adding a token changed parameters".into())?;

    let pool = modify_pool();
    let held = words(HELD_OUT);
    let mut hits = 0;
    for seed in 0..10u64 {
        let mut m = grown.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chosen: Vec<&String> = pool.choose_multiple(&mut rng, 50).collect();
        let examples: Vec<_> = chosen.iter().map(|c| m.example(&words(c), &words(MODIFY_TAG))).collect();
        let config = TrainConfig {
            learning_rate: 0.5,
            batch_size: 10,
            epochs: 8,
            keep_prob: 1.0,
            seed,
            ..TrainConfig::default()
        };
        train(&mut m, &examples, &config, |_, _| {}).map_err(|e| e.to_string())?;
        let out = m.decode_greedy(&held, 10).map_err(|e| e.to_string())?;
        hits += usize::from(out.iter().any(|t| t == MODIFY_TAG));
    }
    ensure(hits >= 8, || format!("tag emitted in {hits}/10 runs"))?;
    Ok(format!("{} prior indices unchanged; tag emitted in {hits}/10 runs", before.size_active()))
}

// A8

const FUZZ_INPUTS: &[&str] = &[
    "hi", "Hlo Ram", "wake me up", "at 7 am", "tomorrow", "remind me to take medicine", "show my reminders", "cancel it",
    "every 2 hours", "thanks", "asdf", "qwzx vbnm", "who won the cricket match", "drink water reminder", "call me at 5 pm",
];

const FUZZ_REPLIES: &[&str] = &[
    "sorry i cannot help you with that",
    "i do not understand",
    "i see",
    "okay _time_",
    "_api_call_reminder_medicine_",
    "_api_view_reminders_",
    "_api_unknown_",
    "",
];

struct RandomReplies(std::cell::RefCell<ChaCha8Rng>);

impl NeuralResponder for RandomReplies {
    fn respond(&self, _: &[String], _: usize) -> Option<Vec<String>> {
        let r = *FUZZ_REPLIES.choose(&mut *self.0.borrow_mut()).unwrap();
        (!r.is_empty()).then(|| words(r))
    }
}

fn a8(bot: &HybridBot) -> Check {
    let day = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap();
    let cfg = &bot.config;
    let (mut handoffs, mut neural, mut unfavorable_total) = (0, 0, 0);
    for i in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let model = RandomReplies(std::cell::RefCell::new(ChaCha8Rng::seed_from_u64(i ^ 0x5eed)));
        let mut s = bot.new_session(format!("f{i}"), day);
        let (mut run, mut unfavorable, mut handed, mut replies) = (0u32, 0u32, false, 0usize);
        for t in 0..rng.gen_range(1..25) {
            let text = add_spelling_noise(FUZZ_INPUTS.choose(&mut rng).unwrap(), 0.3, &mut rng);
            let d = bot.handle_message(&mut s, &text, t, Some(&model)).map_err(|e| e.to_string())?;
            if handed {
                ensure(d.response.is_none() && d.engine == Engine::Handoff, || format!("session {i}: automated reply after handoff"))?;
            }
            replies += usize::from(d.response.is_some());
            match d.engine {
                Engine::Graph => run = 0,
                Engine::Neural => {
                    run += 1;
                    neural += 1;
                    if is_unfavorable(&d.response.as_ref().unwrap().body, cfg) {
                        unfavorable += 1;
                        unfavorable_total += 1;
                    }
                }
                Engine::Handoff => handed = true,
            }
            ensure(run <= cfg.max_neural_turns, || format!("session {i}: {run} consecutive neural replies"))?;
            ensure(unfavorable <= cfg.max_unfavorable, || format!("session {i}: {unfavorable} unfavorable replies"))?;
        }
        // Nothing automated reaches the transcript beyond the replies seen above.
        let automated = s
            .transcript
            .messages
            .iter()
            .filter(|m| matches!(m.responder, Some(Responder::Graph | Responder::Neural)))
            .count();
        ensure(automated == replies, || format!("session {i}: {automated} automated messages, {replies} replies"))?;
        handoffs += usize::from(handed);
    }
    Ok(format!("1000 sessions, {neural} neural replies, {unfavorable_total} unfavorable, {handoffs} handoffs"))
}

// A9

struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    async fn post(&self, path: &str, body: Value) -> Result<Value, String> {
        let r = self.http.post(format!("{}{path}", self.base)).json(&body).send().await.map_err(|e| e.to_string())?;
        let status = r.status();
        let v: Value = r.json().await.map_err(|e| e.to_string())?;
        ensure(status.is_success(), || format!("POST {path}: {status} {v}"))?;
        Ok(v)
    }

    async fn session(&self, user: &str) -> Result<String, String> {
        let info: SessionInfo = serde_json::from_value(self.post("/sessions", json!({ "user_id": user })).await?).map_err(|e| e.to_string())?;
        Ok(info.session_id)
    }

    async fn say(&self, sid: &str, body: Value) -> Result<Vec<ApiEnvelope>, String> {
        let v = self.post(&format!("/sessions/{sid}/messages"), body).await?;
        Ok(serde_json::from_value::<MessageReply>(v).map_err(|e| e.to_string())?.envelopes)
    }

    async fn reminders(&self, user: &str) -> Result<ReminderList, String> {
        let r = self.http.get(format!("{}/reminders?user_id={user}", self.base)).send().await.map_err(|e| e.to_string())?;
        r.json().await.map_err(|e| e.to_string())
    }
}

fn element(envs: &[ApiEnvelope], kind: ElementKind) -> Option<&StructuredElement> {
    envs.iter().find_map(|e| match &e.item {
        EnvelopeItem::Element { element } if element.element_kind == kind => Some(element),
        _ => None,
    })
}

fn matched(env: &ApiEnvelope, state: &str) -> bool {
    env.trace.iter().any(|t| matches!(t, TraceEvent::GraphMatched { state: s, .. } if s == state))
}

fn at(date: NaiveDate, h: u32) -> (NaiveDate, NaiveTime) {
    (date, NaiveTime::from_hms_opt(h, 0, 0).unwrap())
}

async fn a9_flows(c: &Client, tomorrow: NaiveDate) -> Result<(), String> {
    // Medicine via quick reply and form.
    let sid = c.session("asha").await?;
    let envs = c.say(&sid, json!({ "text": "hi" })).await?;
    let qr = element(&envs, ElementKind::QuickReplies).ok_or("no quick replies")?;
    let choice = qr.options.iter().find(|o| o.label == "Medicine Reminder").ok_or("no medicine option")?;
    let envs = c.say(&sid, json!({ "choice": choice })).await?;
    ensure(element(&envs, ElementKind::Form).is_some(), || "no form".into())?;
    let envs = c.say(&sid, json!({ "form": { "time": "2 pm", "date": "tomorrow" } })).await?;
    let Some(ActionOutcome::Created { reminder }) = &envs[0].action else {
        return Err(format!("medicine: {:?}", envs[0].action));
    };
    ensure(reminder.kind == ReminderKind::Medicine && (reminder.date, reminder.time) == at(tomorrow, 14), || {
        format!("medicine stored as {reminder:?}")
    })?;
    ensure(envs[0].journal_seq == Some(1), || format!("medicine journal seq {:?}", envs[0].journal_seq))?;

    // View then cancel.
    let sid = c.session("ravi").await?;
    c.say(&sid, json!({ "text": "wake me up at 7 am tomorrow" })).await?;
    let envs = c.say(&sid, json!({ "text": "show my reminders" })).await?;
    ensure(matched(&envs[0], "view_reminders"), || "view_reminders not matched".into())?;
    let card = element(&envs, ElementKind::ReminderCard).ok_or("no reminder card")?;
    let envs = c.say(&sid, json!({ "choice": card.options[0] })).await?;
    ensure(matched(&envs[0], "cancel_reminder"), || "cancel_reminder not matched".into())?;
    let Some(ActionOutcome::Cancelled { reminder }) = &envs[0].action else {
        return Err(format!("cancel: {:?}", envs[0].action));
    };
    ensure(reminder.status == ReminderStatus::Cancelled && envs[0].journal_seq == Some(3), || {
        format!("cancel: {reminder:?} seq {:?}", envs[0].journal_seq)
    })?;
    let list = c.reminders("ravi").await?;
    ensure(list.reminders.len() == 1 && list.reminders[0].reminder.status == ReminderStatus::Cancelled, || {
        format!("ravi list {:?}", list.reminders)
    })?;

    // Misspelled wake-up.
    let sid = c.session("neha").await?;
    let envs = c.say(&sid, json!({ "text": "Can u plz wake me up" })).await?;
    ensure(envs[0].engine == Some(Engine::Graph) && matched(&envs[0], "wake_up"), || "wake_up not matched".into())?;
    let envs = c.say(&sid, json!({ "text": "7 am tomorrow" })).await?;
    let Some(ActionOutcome::Created { reminder }) = &envs[0].action else {
        return Err(format!("wake-up: {:?}", envs[0].action));
    };
    ensure(reminder.kind == ReminderKind::Wakeup && (reminder.date, reminder.time) == at(tomorrow, 7), || {
        format!("wake-up stored as {reminder:?}")
    })?;
    ensure(envs[0].journal_seq == Some(4), || format!("wake-up journal seq {:?}", envs[0].journal_seq))?;
    Ok(())
}

fn a9() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let journal = dir.path().join("reminders.jsonl");
    let start: NaiveDateTime = NaiveDate::from_ymd_opt(2017, 4, 17).unwrap().and_hms_opt(9, 0, 0).unwrap();
    let tomorrow = start.date().succ_opt().unwrap();
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async {
        let store = ReminderStore::open(&journal).map_err(|e| e.to_string())?;
        let svc = Arc::new(Service::new(HybridBot::reminders(), None, store, Arc::new(ManualClock::new(start))));
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(|e| e.to_string())?;
        let client = Client {
            base: format!("http://{}", listener.local_addr().map_err(|e| e.to_string())?),
            http: reqwest::Client::new(),
        };
        let server = tokio::spawn(serve(listener, svc));
        let result = a9_flows(&client, tomorrow).await;
        server.abort();
        result
    })?;

    let reopened = ReminderStore::open(&journal).map_err(|e| e.to_string())?;
    ensure(reopened.seq() == 4, || format!("journal holds {} mutations", reopened.seq()))?;
    let all: Vec<_> = reopened.book().all().collect();
    let summary: Vec<_> = all.iter().map(|r| (r.user_id.as_str(), r.kind, r.status)).collect();
    let want = [
        ("asha", ReminderKind::Medicine, ReminderStatus::Scheduled),
        ("ravi", ReminderKind::Wakeup, ReminderStatus::Cancelled),
        ("neha", ReminderKind::Wakeup, ReminderStatus::Scheduled),
    ];
    ensure(summary == want, || format!("journal replay {summary:?}"))?;
    Ok("3 flows over HTTP; journal replays 4 mutations to 2 scheduled + 1 cancelled".into())
}

fn main() {
    let bot = HybridBot::reminders();
    let mut failures = 0;
    let mut report = |id: &str, title: &str, limit: Duration, run: &mut dyn FnMut() -> Check| {
        let t0 = Instant::now();
        let result = run();
        let elapsed = t0.elapsed();
        let result = result.and_then(|d| {
            if elapsed <= limit {
                Ok(d)
            } else {
                Err(format!("over time: {d}"))
            }
        });
        let (status, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failures += usize::from(result.is_err());
        println!("{id} {status} {title} [{:.2}s / {}s] {detail}", elapsed.as_secs_f64(), limit.as_secs());
    };

    report("A1", "metric arithmetic", Duration::from_secs(1), &mut a1);

    // The fallback model is shared by A2 and A7; its training counts toward A2.
    let mut fallback = None;
    report("A2", "hybrid beats graph-only", Duration::from_secs(300), &mut || {
        let trained = train_fallback(&bot, &FallbackRecipe::default(), |_, _| {}).map_err(|e| e.to_string())?;
        let out = a2(&bot, &trained.model);
        fallback = Some(trained.model);
        out
    });
    report("A3", "tf-idf dense oracle", Duration::from_secs(60), &mut a3);
    report("A4", "gradient check", Duration::from_secs(120), &mut a4);
    report("A5", "overfit 32 pairs", Duration::from_secs(600), &mut || a5(Duration::from_secs(600)));
    report("A6", "preprocessing invariants", Duration::from_secs(30), &mut || a6(&bot));
    report("A7", "vocabulary buffer", Duration::from_secs(600), &mut || match &fallback {
        Some(m) => a7(m),
        None => Err("no fallback model".into()),
    });
    report("A8", "threshold safety", Duration::from_secs(60), &mut || a8(&bot));
    report("A9", "end-to-end flows", Duration::from_secs(30), &mut a9);

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
