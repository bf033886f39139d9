//! Log preprocessing: domain filter, notification merge, entity tagging,
//! action extraction and orthography, then context-target pairs and corpus
//! statistics.
//!
//! Steps always run in the order 1 to 5. Entity patterns need the
//! punctuation and digits that orthography removes ("7:30 pm" becomes "pm"),
//! so tagging has to come first.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conversation::{build_context_from, Conversation, Message, MessageKind, Responder, Sender, DEFAULT_CONTEXT_BUDGET};
use crate::entity::Recognizer;
use crate::graph::DialogueGraph;
use crate::text::normalize_orthography;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("ack pattern `{pattern}` maps to `{tag}`, which no graph state owns")]
    UnknownActionState { pattern: String, tag: String },
    #[error("split ratio must lie strictly between 0 and 1")]
    Ratio,
    #[error("human fraction must lie in [0, 1]")]
    Fraction,
    #[error("cannot mix: no {0} pairs available")]
    EmptyClass(PairSource),
    #[error("invalid step range {start}-{end}; steps run from 1 to 5")]
    Steps { start: u8, end: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    Human,
    Graph,
}

impl PairSource {
    pub fn as_str(self) -> &'static str {
        match self {
            PairSource::Human => "human",
            PairSource::Graph => "graph",
        }
    }
}

impl core::fmt::Display for PairSource {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for PairSource {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "human" => Ok(PairSource::Human),
            "graph" => Ok(PairSource::Graph),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub context: Vec<String>,
    pub target: Vec<String>,
    pub source: PairSource,
}

/// Step 1. Keeps conversations for which `in_domain` holds, in order.
pub fn filter_domain(corpus: Vec<Conversation>, mut in_domain: impl FnMut(&Conversation) -> bool) -> Vec<Conversation> {
    corpus.into_iter().filter(|c| in_domain(c)).collect()
}

/// Labeler for logs that carry a per-conversation `domain` field. Unlabeled
/// conversations are kept.
pub fn domain_label_is(domain: &str) -> impl Fn(&Conversation) -> bool + '_ {
    move |c| c.domain.as_deref().is_none_or(|d| d.eq_ignore_ascii_case(domain))
}

fn is_notification(m: &Message) -> bool {
    m.sender == Sender::Assistant && m.kind == MessageKind::Notification
}

/// Step 2. Collapses each run of consecutive assistant notifications to its
/// last message.
pub fn merge_notifications(mut conversation: Conversation) -> Conversation {
    let msgs = core::mem::take(&mut conversation.messages);
    let n = msgs.len();
    let keep: Vec<bool> = (0..n)
        .map(|i| !(is_notification(&msgs[i]) && i + 1 < n && is_notification(&msgs[i + 1])))
        .collect();
    conversation.messages = msgs.into_iter().zip(keep).filter_map(|(m, k)| k.then_some(m)).collect();
    conversation
}

/// Step 3. Replaces entity surfaces with placeholder tags in every message
/// body.
pub fn replace_entities(mut conversation: Conversation, recognizer: &Recognizer) -> Conversation {
    for m in &mut conversation.messages {
        if m.kind != MessageKind::ActionTag && !m.body.is_empty() {
            m.body = recognizer.replace_with_tags(&m.body).0;
        }
    }
    conversation
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AckEntry {
    /// Acknowledgment text in tagged, orthography-normalized form.
    pub pattern: String,
    pub tag: String,
    pub state_id: String,
}

/// Acknowledgment patterns resolved against a dialogue graph.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AckTable {
    entries: Vec<AckEntry>,
}

impl AckTable {
    pub fn from_graph(graph: &DialogueGraph) -> Self {
        Self::new(graph.ack_patterns(), graph).expect("graph ack tags map to their own states")
    }

    /// Patterns are normalized on the way in.
    pub fn new(patterns: impl IntoIterator<Item = (String, String)>, graph: &DialogueGraph) -> Result<Self, CorpusError> {
        let mut entries = Vec::new();
        for (pattern, tag) in patterns {
            let state = graph.map_action_tag(&tag).ok_or_else(|| CorpusError::UnknownActionState {
                pattern: pattern.clone(),
                tag: tag.clone(),
            })?;
            entries.push(AckEntry {
                pattern: normalize_orthography(&pattern),
                tag,
                state_id: state.id.clone(),
            });
        }
        Ok(AckTable { entries })
    }

    pub fn entries(&self) -> &[AckEntry] {
        &self.entries
    }

    pub fn lookup(&self, body: &str) -> Option<&AckEntry> {
        let norm = normalize_orthography(body);
        self.entries.iter().find(|e| e.pattern == norm)
    }
}

/// Step 4. Assistant messages whose normalized body equals an ack pattern
/// become action-tag messages. The resolved graph state is recorded in the
/// conversation metadata under `action_state.<message id>`.
pub fn extract_actions(mut conversation: Conversation, acks: &AckTable) -> Conversation {
    for m in &mut conversation.messages {
        if m.sender != Sender::Assistant || m.kind == MessageKind::ActionTag {
            continue;
        }
        if let Some(e) = acks.lookup(&m.body) {
            m.body = e.tag.clone();
            m.kind = MessageKind::ActionTag;
            m.element = None;
            conversation
                .metadata
                .insert(alloc::format!("action_state.{}", m.id), e.state_id.clone());
        }
    }
    conversation
}

/// Step 5 applied to every message body.
pub fn normalize_conversation(mut conversation: Conversation) -> Conversation {
    for m in &mut conversation.messages {
        m.body = normalize_orthography(&m.body);
    }
    conversation
}

/// One pair per assistant turn: the target is the turn's first message and
/// the context is everything before it, trimmed to the last `budget_words`
/// words. Pairs with an empty context or target are dropped.
pub fn make_pairs(corpus: &[Conversation], budget_words: usize) -> Vec<TrainingPair> {
    let mut pairs = Vec::new();
    for c in corpus {
        let mut prev: Option<Sender> = None;
        for (i, m) in c.messages.iter().enumerate() {
            let starts_turn = m.sender == Sender::Assistant && prev != Some(Sender::Assistant);
            prev = Some(m.sender);
            if !starts_turn {
                continue;
            }
            let context = build_context_from(&c.messages[..i], budget_words);
            let target: Vec<String> = m.body.split_whitespace().map(String::from).collect();
            if context.is_empty() || target.is_empty() {
                continue;
            }
            let source = if m.responder == Some(Responder::Graph) {
                PairSource::Graph
            } else {
                PairSource::Human
            };
            pairs.push(TrainingPair { context, target, source });
        }
    }
    pairs
}

/// Deterministic shuffle, then the first `round(ratio * n)` pairs train.
pub fn split<T: Clone>(pairs: &[T], ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>), CorpusError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CorpusError::Ratio);
    }
    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = libm::round(ratio * pairs.len() as f64) as usize;
    let pick = |ix: &[usize]| ix.iter().map(|&i| pairs[i].clone()).collect::<Vec<T>>();
    Ok((pick(&idx[..n_train]), pick(&idx[n_train..])))
}

/// Largest subsample whose human share equals `human_fraction` to within one
/// pair. Selected pairs keep their input order.
pub fn mix_sources(pairs: &[TrainingPair], human_fraction: f64, seed: u64) -> Result<Vec<TrainingPair>, CorpusError> {
    if !(0.0..=1.0).contains(&human_fraction) {
        return Err(CorpusError::Fraction);
    }
    let of = |s: PairSource| (0..pairs.len()).filter(|&i| pairs[i].source == s).collect::<Vec<usize>>();
    let (mut human, mut graph) = (of(PairSource::Human), of(PairSource::Graph));
    if human_fraction > 0.0 && human.is_empty() {
        return Err(CorpusError::EmptyClass(PairSource::Human));
    }
    if human_fraction < 1.0 && graph.is_empty() {
        return Err(CorpusError::EmptyClass(PairSource::Graph));
    }
    let (h_avail, g_avail) = (human.len() as f64, graph.len() as f64);
    let (h, g) = if human_fraction >= 1.0 {
        (human.len(), 0)
    } else if human_fraction <= 0.0 {
        (0, graph.len())
    } else {
        let ratio = human_fraction / (1.0 - human_fraction);
        if h_avail <= g_avail * ratio {
            let g = libm::round(h_avail / ratio) as usize;
            (human.len(), g.clamp(1, graph.len()))
        } else {
            let h = libm::round(g_avail * ratio) as usize;
            (h.clamp(1, human.len()), graph.len())
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    human.shuffle(&mut rng);
    graph.shuffle(&mut rng);
    let mut chosen: Vec<usize> = human[..h].iter().chain(&graph[..g]).copied().collect();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| pairs[i].clone()).collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BeforeAfter<T> {
    pub before: T,
    pub after: T,
}

/// Counts describing a corpus. Means are exact; round only for display.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub conversations: BeforeAfter<usize>,
    pub total_messages: BeforeAfter<usize>,
    /// User messages.
    pub inbound: BeforeAfter<usize>,
    /// Assistant messages.
    pub outbound: BeforeAfter<usize>,
    pub mean_messages_per_conversation: BeforeAfter<f64>,
    /// Speaker switches plus one, averaged over conversations.
    pub mean_turns: BeforeAfter<f64>,
    /// Whitespace-delimited words per message.
    pub mean_tokens_per_message: BeforeAfter<f64>,
    /// Distinct words after orthography normalization.
    pub vocabulary_size: BeforeAfter<usize>,
    pub pair_count: usize,
}

struct Counts {
    conversations: usize,
    messages: usize,
    inbound: usize,
    outbound: usize,
    turns: usize,
    tokens: usize,
    vocabulary: usize,
}

fn count(corpus: &[Conversation]) -> Counts {
    let mut vocab: BTreeSet<String> = BTreeSet::new();
    let mut c = Counts {
        conversations: corpus.len(),
        messages: 0,
        inbound: 0,
        outbound: 0,
        turns: 0,
        tokens: 0,
        vocabulary: 0,
    };
    for conv in corpus {
        c.turns += conv.turn_count();
        for m in &conv.messages {
            c.messages += 1;
            match m.sender {
                Sender::User => c.inbound += 1,
                Sender::Assistant => c.outbound += 1,
            }
            c.tokens += m.body.split_whitespace().count();
            for w in normalize_orthography(&m.body).split(' ').filter(|w| !w.is_empty()) {
                if !vocab.contains(w) {
                    vocab.insert(w.to_string());
                }
            }
        }
    }
    c.vocabulary = vocab.len();
    c
}

fn mean(total: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        total as f64 / n as f64
    }
}

pub fn compute_stats(before: &[Conversation], after: &[Conversation], pairs: &[TrainingPair]) -> CorpusStats {
    let (b, a) = (count(before), count(after));
    let pair = |f: fn(&Counts) -> usize| BeforeAfter {
        before: f(&b),
        after: f(&a),
    };
    CorpusStats {
        conversations: pair(|c| c.conversations),
        total_messages: pair(|c| c.messages),
        inbound: pair(|c| c.inbound),
        outbound: pair(|c| c.outbound),
        mean_messages_per_conversation: BeforeAfter {
            before: mean(b.messages, b.conversations),
            after: mean(a.messages, a.conversations),
        },
        mean_turns: BeforeAfter {
            before: mean(b.turns, b.conversations),
            after: mean(a.turns, a.conversations),
        },
        mean_tokens_per_message: BeforeAfter {
            before: mean(b.tokens, b.messages),
            after: mean(a.tokens, a.messages),
        },
        vocabulary_size: pair(|c| c.vocabulary),
        pair_count: pairs.len(),
    }
}

/// Configured five-step pipeline.
pub struct Pipeline {
    pub recognizer: Recognizer,
    pub acks: AckTable,
    pub domain: String,
    pub budget_words: usize,
}

/// Conversation and message totals after each executed step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCount {
    pub step: u8,
    pub conversations: usize,
    pub messages: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub corpus: Vec<Conversation>,
    pub pairs: Vec<TrainingPair>,
    pub stats: CorpusStats,
    pub steps: Vec<StepCount>,
}

impl Pipeline {
    /// Default recognizer, the acks of `graph`, domain `reminders`.
    pub fn for_graph(graph: &DialogueGraph) -> Self {
        Pipeline {
            recognizer: Recognizer::default(),
            acks: AckTable::from_graph(graph),
            domain: String::from("reminders"),
            budget_words: DEFAULT_CONTEXT_BUDGET,
        }
    }

    /// Runs the steps in `steps` (a sub-range of 1..=5) in order, then builds
    /// pairs and statistics.
    pub fn run(&self, raw: &[Conversation], steps: RangeInclusive<u8>) -> Result<PipelineOutput, CorpusError> {
        let (start, end) = (*steps.start(), *steps.end());
        if start < 1 || end > 5 || start > end {
            return Err(CorpusError::Steps { start, end });
        }
        let mut corpus = raw.to_vec();
        let mut counts = Vec::new();
        for step in steps {
            corpus = match step {
                1 => filter_domain(corpus, domain_label_is(&self.domain)),
                2 => corpus.into_iter().map(merge_notifications).collect(),
                3 => corpus.into_iter().map(|c| replace_entities(c, &self.recognizer)).collect(),
                4 => corpus.into_iter().map(|c| extract_actions(c, &self.acks)).collect(),
                _ => corpus.into_iter().map(normalize_conversation).collect(),
            };
            counts.push(StepCount {
                step,
                conversations: corpus.len(),
                messages: corpus.iter().map(|c| c.messages.len()).sum(),
            });
        }
        let pairs = make_pairs(&corpus, self.budget_words);
        let stats = compute_stats(raw, &corpus, &pairs);
        Ok(PipelineOutput {
            corpus,
            pairs,
            stats,
            steps: counts,
        })
    }
}
