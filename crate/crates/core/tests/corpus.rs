use hybridbot_core::controller::HybridBot;
use hybridbot_core::conversation::{Conversation, MessageKind, Sender};
use hybridbot_core::corpus::{split, Pipeline};
use hybridbot_core::sim::raw_corpus;
use regex::Regex;

fn counts(c: &[Conversation]) -> (usize, usize) {
    (c.len(), c.iter().map(|x| x.messages.len()).sum())
}

/// Recount of assistant turns that have something before them, written
/// without the pipeline's helpers.
fn assistant_turns_with_context(corpus: &[Conversation]) -> usize {
    let mut n = 0;
    for c in corpus {
        let mut seen_words = false;
        let mut last_sender = None;
        for m in &c.messages {
            let new_turn = m.sender == Sender::Assistant && last_sender != Some(Sender::Assistant);
            let has_words = !m.body.trim().is_empty();
            if new_turn && seen_words && has_words {
                n += 1;
            }
            seen_words |= has_words;
            last_sender = Some(m.sender);
        }
    }
    n
}

#[test]
fn thousand_conversation_pipeline_invariants() {
    let bot = HybridBot::reminders();
    let raw = raw_corpus(&bot, 1000, 5).unwrap();
    assert_eq!(raw.len(), 1000);
    assert!(raw.iter().any(|c| c.domain.as_deref() != Some("reminders")));
    assert!(raw.iter().any(|c| c
        .messages
        .windows(2)
        .any(|w| w.iter().all(|m| m.kind == MessageKind::Notification))));

    let pipe = Pipeline::for_graph(&bot.graph);
    let out = pipe.run(&raw, 1..=5).unwrap();
    let mut prev = counts(&raw);
    for s in &out.steps {
        assert!(s.conversations <= prev.0 && s.messages <= prev.1, "step {} grew: {s:?} after {prev:?}", s.step);
        prev = (s.conversations, s.messages);
    }
    assert!(out.steps[0].conversations < 1000);
    assert!(out.steps[1].messages < out.steps[0].messages);

    let alphabet = Regex::new("^[a-z_]+$").unwrap();
    for c in &out.corpus {
        for m in &c.messages {
            for w in m.body.split_whitespace() {
                assert!(alphabet.is_match(w), "token `{w}` in {}", c.id);
            }
        }
    }
    assert_eq!(out.pairs.len(), assistant_turns_with_context(&out.corpus));
    assert_eq!(out.stats.pair_count, out.pairs.len());
    assert_eq!(out.stats.conversations.before, 1000);

    let (train, test) = split(&out.pairs, 0.8, 3).unwrap();
    let n = out.pairs.len();
    assert_eq!(train.len(), (4 * n + 2) / 5);
    assert_eq!(train.len() + test.len(), n);
}

#[test]
fn prefix_runs_agree() {
    let bot = HybridBot::reminders();
    let raw = raw_corpus(&bot, 120, 9).unwrap();
    let pipe = Pipeline::for_graph(&bot.graph);
    let full = pipe.run(&raw, 1..=5).unwrap();
    for end in 1..=5u8 {
        let part = pipe.run(&raw, 1..=end).unwrap();
        assert_eq!(part.steps[..], full.steps[..end as usize]);
    }
    let rest = pipe.run(&pipe.run(&raw, 1..=2).unwrap().corpus, 3..=5).unwrap();
    assert_eq!(rest.corpus, full.corpus);
    assert_eq!(rest.pairs, full.pairs);
}
