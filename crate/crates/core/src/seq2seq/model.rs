//! Bidirectional GRU encoder, attentive GRU decoder, full-softmax output.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::attention::{attend_backward, attend_keys, project_keys, AttentionCache, AttentionGrads, AttentionParams};
use super::gru::{gru_backward, gru_forward, GruCache, GruGrads, GruParams};
use super::linalg::{add_assign, gemv_add, gemv_t_add, ger_add, softmax, Tensor};
use super::vocab::{Vocabulary, EOS, GO, PAD};
use super::{ModelError, Seq2SeqConfig};

#[derive(Debug, Clone, Copy)]
struct GruIdx {
    w: usize,
    u: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    emb: usize,
    enc: Vec<[GruIdx; 2]>,
    bridge: Vec<(usize, usize)>,
    wa: usize,
    ua: usize,
    va: usize,
    dec: Vec<GruIdx>,
    wo: usize,
    bo: usize,
}

fn layout(config: &Seq2SeqConfig, vocab_total: usize) -> (Layout, Vec<(String, usize, usize)>) {
    let (l, h, e) = (config.layers, config.hidden, config.embed);
    let d = config.decoder_width();
    let a = config.attention_width();
    let mut shapes = Vec::new();
    let mut push = |name: String, r: usize, c: usize| {
        shapes.push((name, r, c));
        shapes.len() - 1
    };
    let emb = push("embedding".into(), vocab_total, e);
    let mut enc = Vec::new();
    for layer in 0..l {
        let input = if layer == 0 { e } else { 2 * h };
        let mut dirs = [GruIdx { w: 0, u: 0, b: 0 }; 2];
        for (k, dir) in ["fwd", "bwd"].iter().enumerate() {
            dirs[k] = GruIdx {
                w: push(format!("encoder.{layer}.{dir}.w"), 3 * h, input),
                u: push(format!("encoder.{layer}.{dir}.u"), 3 * h, h),
                b: push(format!("encoder.{layer}.{dir}.b"), 3 * h, 1),
            };
        }
        enc.push(dirs);
    }
    let bridge = (0..l)
        .map(|layer| {
            (
                push(format!("bridge.{layer}.w"), d, 2 * h),
                push(format!("bridge.{layer}.b"), d, 1),
            )
        })
        .collect();
    let wa = push("attention.wa".into(), a, d);
    let ua = push("attention.ua".into(), a, 2 * h);
    let va = push("attention.va".into(), a, 1);
    let dec = (0..l)
        .map(|layer| {
            let input = if layer == 0 { e + 2 * h } else { d };
            GruIdx {
                w: push(format!("decoder.{layer}.w"), 3 * d, input),
                u: push(format!("decoder.{layer}.u"), 3 * d, d),
                b: push(format!("decoder.{layer}.b"), 3 * d, 1),
            }
        })
        .collect();
    let wo = push("output.w".into(), vocab_total, d + 2 * h);
    let bo = push("output.b".into(), vocab_total, 1);
    (
        Layout {
            emb,
            enc,
            bridge,
            wa,
            ua,
            va,
            dec,
            wo,
            bo,
        },
        shapes,
    )
}

/// Encoder output for one context.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    /// One `[forward; backward]` state per input position.
    pub states: Vec<Vec<f64>>,
    /// Initial decoder state per layer.
    pub final_state: Vec<Vec<f64>>,
}

/// A training pair in index form; `target` excludes the end marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub context: Vec<u32>,
    pub target: Vec<u32>,
}

/// Per-sequence recurrent dropout masks (entries 0 or 1/keep).
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    enc: Vec<[Vec<f64>; 2]>,
    dec: Vec<Vec<f64>>,
}

impl DropoutMasks {
    pub fn sample<R: Rng>(config: &Seq2SeqConfig, keep: f64, rng: &mut R) -> Self {
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect()
        };
        let enc = (0..config.layers).map(|_| [draw(config.hidden), draw(config.hidden)]).collect();
        let dec = (0..config.layers).map(|_| draw(config.decoder_width())).collect();
        DropoutMasks { enc, dec }
    }
}

/// Output classes scored at each step during training.
#[derive(Debug, Clone, Copy)]
pub enum SoftmaxMode {
    Full,
    /// Target plus this many uniformly drawn negatives.
    Sampled(usize),
}

struct EncTrace {
    n: usize,
    tokens: Vec<u32>,
    /// Per layer, flat n×2H outputs.
    outputs: Vec<Vec<f64>>,
    caches: Vec<[Vec<GruCache>; 2]>,
    bridge_in: Vec<Vec<f64>>,
    s0: Vec<Vec<f64>>,
    keys: Vec<f64>,
}

struct StepTrace {
    input_token: u32,
    att: AttentionCache,
    grus: Vec<GruCache>,
    out_in: Vec<f64>,
    classes: Vec<u32>,
    probs: Vec<f64>,
    target: u32,
}

#[derive(Debug, Clone)]
pub struct Seq2SeqModel {
    config: Seq2SeqConfig,
    vocab: Vocabulary,
    params: Vec<Tensor>,
    layout: Layout,
}

impl Seq2SeqModel {
    /// Fresh model with weights drawn uniformly from ±`init_scale`, biases 0.
    pub fn new(config: Seq2SeqConfig, vocab: Vocabulary) -> Result<Self, ModelError> {
        config.validate()?;
        let (layout, shapes) = layout(&config, vocab.size_total());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = shapes
            .into_iter()
            .map(|(name, r, c)| {
                let mut t = Tensor::zeros(name, r, c);
                if c > 1 || t.name == "attention.va" {
                    t.data
                        .iter_mut()
                        .for_each(|v| *v = rng.gen_range(-config.init_scale..config.init_scale));
                }
                t
            })
            .collect();
        Ok(Seq2SeqModel {
            config,
            vocab,
            params,
            layout,
        })
    }

    /// Rebuilds a model from stored tensors, checking names and shapes.
    pub fn from_tensors(config: Seq2SeqConfig, vocab: Vocabulary, tensors: Vec<Tensor>) -> Result<Self, ModelError> {
        config.validate()?;
        let (layout, shapes) = layout(&config, vocab.size_total());
        if shapes.len() != tensors.len() {
            return Err(ModelError::Shape("tensor count"));
        }
        for ((name, r, c), t) in shapes.iter().zip(&tensors) {
            if *name != t.name || *r != t.rows || *c != t.cols || t.data.len() != r * c {
                return Err(ModelError::TensorMismatch {
                    name: t.name.clone(),
                    expected: (*r, *c),
                    got: (t.rows, t.cols),
                });
            }
        }
        Ok(Seq2SeqModel {
            config,
            vocab,
            params: tensors,
            layout,
        })
    }

    pub fn config(&self) -> &Seq2SeqConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.params
            .iter()
            .map(|t| Tensor::zeros(t.name.clone(), t.rows, t.cols))
            .collect()
    }

    /// Adds `token` into the vocabulary buffer; parameter shapes are
    /// untouched.
    pub fn add_token(&mut self, token: &str) -> Result<u32, ModelError> {
        self.vocab.add_buffered(token).map_err(ModelError::Vocab)
    }

    pub fn example<S: AsRef<str>>(&self, context: &[S], target: &[S]) -> Example {
        Example {
            context: self.vocab.encode(context),
            target: self.vocab.encode(target),
        }
    }

    fn gru(&self, g: GruIdx) -> GruParams<'_> {
        GruParams {
            w: &self.params[g.w],
            u: &self.params[g.u],
            b: &self.params[g.b],
        }
    }

    fn attention(&self) -> AttentionParams<'_> {
        AttentionParams {
            wa: &self.params[self.layout.wa],
            ua: &self.params[self.layout.ua],
            va: &self.params[self.layout.va],
        }
    }

    fn check_context(&self, ctx: &[u32]) -> Result<(), ModelError> {
        if ctx.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let max = self.config.buckets.largest().0;
        if ctx.len() > max {
            return Err(ModelError::ContextTooLong { len: ctx.len(), max });
        }
        if ctx.iter().any(|&t| t as usize >= self.vocab.size_total()) {
            return Err(ModelError::Shape("token index"));
        }
        Ok(())
    }

    fn run_encoder(&self, ctx: &[u32], masks: Option<&DropoutMasks>) -> EncTrace {
        let n = ctx.len();
        let h = self.config.hidden;
        let emb = &self.params[self.layout.emb];
        let mut input: Vec<f64> = ctx.iter().flat_map(|&t| emb.row(t as usize).iter().copied()).collect();
        let mut in_w = self.config.embed;
        let mut outputs = Vec::new();
        let mut caches = Vec::new();
        let mut bridge_in = Vec::new();
        let mut s0 = Vec::new();
        for (layer, dirs) in self.layout.enc.iter().enumerate() {
            let mut out = vec![0.0; n * 2 * h];
            let mut dir_caches: [Vec<GruCache>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
            for (k, &g) in dirs.iter().enumerate() {
                let mask = masks.map(|m| m.enc[layer][k].as_slice());
                let mut state = vec![0.0; h];
                let mut cache_by_pos: Vec<Option<GruCache>> = (0..n).map(|_| None).collect();
                let order: Vec<usize> = if k == 0 { (0..n).collect() } else { (0..n).rev().collect() };
                for i in order {
                    let (next, cache) = gru_forward(self.gru(g), &input[i * in_w..(i + 1) * in_w], &state, mask);
                    out[i * 2 * h + k * h..i * 2 * h + (k + 1) * h].copy_from_slice(&next);
                    cache_by_pos[i] = Some(cache);
                    state = next;
                }
                dir_caches[k] = cache_by_pos.into_iter().map(|c| c.expect("every position visited")).collect();
            }
            let mut joined = Vec::with_capacity(2 * h);
            joined.extend_from_slice(&out[(n - 1) * 2 * h..(n - 1) * 2 * h + h]);
            joined.extend_from_slice(&out[h..2 * h]);
            let (bw, bb) = self.layout.bridge[layer];
            let mut pre = self.params[bb].data.clone();
            gemv_add(&self.params[bw].data, 2 * h, &joined, &mut pre);
            s0.push(pre.into_iter().map(libm::tanh).collect());
            bridge_in.push(joined);
            caches.push(dir_caches);
            input = out.clone();
            in_w = 2 * h;
            outputs.push(out);
        }
        let keys = project_keys(&self.params[self.layout.ua], outputs.last().expect("at least one layer"), n);
        EncTrace {
            n,
            tokens: ctx.to_vec(),
            outputs,
            caches,
            bridge_in,
            s0,
            keys,
        }
    }

    /// One decoder step from `prev` states and the previous output token.
    fn step(
        &self,
        enc: &EncTrace,
        prev: &[Vec<f64>],
        input_token: u32,
        masks: Option<&DropoutMasks>,
    ) -> (Vec<Vec<f64>>, AttentionCache, Vec<GruCache>, Vec<f64>) {
        let top = self.config.layers - 1;
        let states = enc.outputs.last().expect("encoder ran");
        let (ctx, att) = attend_keys(self.attention(), &prev[top], states, &enc.keys, enc.n);
        let mut x: Vec<f64> = self.params[self.layout.emb].row(input_token as usize).to_vec();
        x.extend_from_slice(&ctx);
        let mut next = Vec::with_capacity(prev.len());
        let mut grus = Vec::with_capacity(prev.len());
        for (layer, &g) in self.layout.dec.iter().enumerate() {
            let mask = masks.map(|m| m.dec[layer].as_slice());
            let (s, cache) = gru_forward(self.gru(g), &x, &prev[layer], mask);
            x = s.clone();
            next.push(s);
            grus.push(cache);
        }
        let mut out_in = next[top].clone();
        out_in.extend_from_slice(&ctx);
        (next, att, grus, out_in)
    }

    fn logits(&self, out_in: &[f64], classes: &[u32]) -> Vec<f64> {
        let wo = &self.params[self.layout.wo];
        let bo = &self.params[self.layout.bo];
        classes
            .iter()
            .map(|&c| bo.data[c as usize] + super::linalg::dot(wo.row(c as usize), out_in))
            .collect()
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Encoded, ModelError> {
        let ids = self.vocab.encode(tokens);
        self.encode_ids(&ids)
    }

    pub fn encode_ids(&self, ids: &[u32]) -> Result<Encoded, ModelError> {
        self.check_context(ids)?;
        let t = self.run_encoder(ids, None);
        let w = 2 * self.config.hidden;
        let top = t.outputs.last().expect("encoder ran");
        Ok(Encoded {
            states: top.chunks_exact(w).map(<[f64]>::to_vec).collect(),
            final_state: t.s0,
        })
    }

    /// Greedy decoding from the go marker; never emits pad, go, or buffer
    /// slots that are still free. Ties go to the lower index.
    pub fn decode_greedy_ids(&self, ctx: &[u32], max_len: usize) -> Result<Vec<u32>, ModelError> {
        self.check_context(ctx)?;
        let enc = self.run_encoder(ctx, None);
        let active = self.vocab.size_active() as u32;
        let classes: Vec<u32> = (0..active).collect();
        let mut states = enc.s0.clone();
        let mut prev = GO;
        let mut out = Vec::new();
        for _ in 0..max_len {
            let (next, _, _, out_in) = self.step(&enc, &states, prev, None);
            let logits = self.logits(&out_in, &classes);
            let mut best = EOS;
            let mut best_v = f64::NEG_INFINITY;
            for (i, &v) in logits.iter().enumerate() {
                if i as u32 == PAD || i as u32 == GO {
                    continue;
                }
                if v > best_v {
                    best_v = v;
                    best = i as u32;
                }
            }
            if best == EOS {
                break;
            }
            out.push(best);
            prev = best;
            states = next;
        }
        Ok(out)
    }

    pub fn decode_greedy<S: AsRef<str>>(&self, context: &[S], max_len: usize) -> Result<Vec<String>, ModelError> {
        let ids = self.vocab.encode(context);
        let out = self.decode_greedy_ids(&ids, max_len)?;
        Ok(out
            .into_iter()
            .map(|i| String::from(self.vocab.token(i).expect("decoded index is active")))
            .collect())
    }

    /// Output distribution over active tokens for each target position
    /// (teacher forcing, no dropout).
    pub fn step_distributions(&self, ex: &Example) -> Result<Vec<Vec<f64>>, ModelError> {
        self.check_context(&ex.context)?;
        let enc = self.run_encoder(&ex.context, None);
        let classes: Vec<u32> = (0..self.vocab.size_active() as u32).collect();
        let mut states = enc.s0.clone();
        let mut prev = GO;
        let mut out = Vec::new();
        for &y in ex.target.iter().chain(core::iter::once(&EOS)) {
            let (next, _, _, out_in) = self.step(&enc, &states, prev, None);
            let mut p = self.logits(&out_in, &classes);
            softmax(&mut p);
            out.push(p);
            states = next;
            prev = y;
        }
        Ok(out)
    }

    /// Mean cross-entropy per target token (end marker included), no dropout.
    pub fn loss(&self, ex: &Example) -> Result<f64, ModelError> {
        let (sum, count) = self.forward_backward(ex, None, SoftmaxMode::Full, None, None)?;
        Ok(sum / count as f64)
    }

    /// Summed cross-entropy and token count for `ex`; when `grads` is given,
    /// gradients of the summed loss are added into it.
    pub fn forward_backward(
        &self,
        ex: &Example,
        masks: Option<&DropoutMasks>,
        mode: SoftmaxMode,
        rng: Option<&mut ChaCha8Rng>,
        grads: Option<&mut [Tensor]>,
    ) -> Result<(f64, usize), ModelError> {
        self.check_context(&ex.context)?;
        let enc = self.run_encoder(&ex.context, masks);
        let active = self.vocab.size_active() as u32;
        let full: Vec<u32> = (0..active).collect();
        let mut rng = rng;
        let mut states = enc.s0.clone();
        let mut prev = GO;
        let mut steps: Vec<StepTrace> = Vec::new();
        let mut total = 0.0;
        let want_grads = grads.is_some();
        for &y in ex.target.iter().chain(core::iter::once(&EOS)) {
            let (next, att, grus, out_in) = self.step(&enc, &states, prev, masks);
            let classes = match (mode, rng.as_deref_mut()) {
                (SoftmaxMode::Sampled(k), Some(r)) if (k as u32) + 3 < active => {
                    let mut c = vec![y];
                    while c.len() < k + 1 {
                        let s = r.gen_range(EOS..active);
                        if !c.contains(&s) {
                            c.push(s);
                        }
                    }
                    c.sort_unstable();
                    c
                }
                _ => full.clone(),
            };
            let mut probs = self.logits(&out_in, &classes);
            softmax(&mut probs);
            let pos = classes.iter().position(|&c| c == y).ok_or(ModelError::Shape("target outside vocabulary"))?;
            let p = probs[pos];
            total -= libm::log(p.max(f64::MIN_POSITIVE));
            if want_grads {
                steps.push(StepTrace {
                    input_token: prev,
                    att,
                    grus,
                    out_in,
                    classes,
                    probs,
                    target: y,
                });
            }
            states = next;
            prev = y;
        }
        let count = ex.target.len() + 1;
        if !total.is_finite() {
            return Err(ModelError::NonFinite);
        }
        if let Some(g) = grads {
            self.backward(&enc, &steps, masks, g);
        }
        Ok((total, count))
    }

    fn backward(&self, enc: &EncTrace, steps: &[StepTrace], masks: Option<&DropoutMasks>, g: &mut [Tensor]) {
        let l_count = self.config.layers;
        let top = l_count - 1;
        let h = self.config.hidden;
        let d = self.config.decoder_width();
        let e = self.config.embed;
        let n = enc.n;
        let lay = &self.layout;
        let states = enc.outputs.last().expect("encoder ran");

        let mut d_next: Vec<Vec<f64>> = vec![vec![0.0; d]; l_count];
        let mut d_keys = vec![0.0; enc.keys.len()];
        let mut d_states = vec![0.0; n * 2 * h];

        for st in steps.iter().rev() {
            let mut dlogits = st.probs.clone();
            let pos = st.classes.iter().position(|&c| c == st.target).expect("target scored");
            dlogits[pos] -= 1.0;
            let mut d_out_in = vec![0.0; d + 2 * h];
            {
                let wo = &self.params[lay.wo];
                for (&c, &dl) in st.classes.iter().zip(&dlogits) {
                    let c = c as usize;
                    g[lay.bo].data[c] += dl;
                    for (gw, x) in g[lay.wo].row_mut(c).iter_mut().zip(&st.out_in) {
                        *gw += dl * x;
                    }
                    for (o, w) in d_out_in.iter_mut().zip(wo.row(c)) {
                        *o += dl * w;
                    }
                }
            }
            let mut d_ctx = d_out_in[d..].to_vec();
            let mut dh = d_out_in[..d].to_vec();
            add_assign(&mut dh, &d_next[top]);
            for layer in (0..l_count).rev() {
                if layer != top {
                    add_assign(&mut dh, &d_next[layer]);
                }
                let gi = lay.dec[layer];
                let input_w = if layer == 0 { e + 2 * h } else { d };
                let mut dx = vec![0.0; input_w];
                let (gw, gu, gb) = three_mut(g, gi.w, gi.u, gi.b);
                let dprev = gru_backward(
                    self.gru(gi),
                    GruGrads { w: gw, u: gu, b: gb },
                    &st.grus[layer],
                    &dh,
                    masks.map(|m| m.dec[layer].as_slice()),
                    &mut dx,
                );
                d_next[layer] = dprev;
                if layer == 0 {
                    add_assign(g[lay.emb].row_mut(st.input_token as usize), &dx[..e]);
                    add_assign(&mut d_ctx, &dx[e..]);
                } else {
                    dh = dx;
                }
            }
            let (gwa, gva) = two_mut(g, lay.wa, lay.va);
            let mut ds = vec![0.0; d];
            attend_backward(
                self.attention(),
                AttentionGrads { wa: gwa, va: gva },
                &st.att,
                states,
                &d_ctx,
                &mut d_keys,
                &mut d_states,
                &mut ds,
            );
            add_assign(&mut d_next[top], &ds);
        }

        // Keys were U_a h_j.
        let ua = &self.params[lay.ua];
        for j in 0..n {
            let dk = &d_keys[j * ua.rows..(j + 1) * ua.rows];
            let hj = &states[j * 2 * h..(j + 1) * 2 * h];
            ger_add(&mut g[lay.ua].data, 2 * h, dk, hj);
            gemv_t_add(&ua.data, 2 * h, dk, &mut d_states[j * 2 * h..(j + 1) * 2 * h]);
        }

        // Encoder, top layer down, with bridge gradients joining each layer.
        let mut d_out = d_states;
        for layer in (0..l_count).rev() {
            let (bw, bb) = lay.bridge[layer];
            let s0 = &enc.s0[layer];
            let da: Vec<f64> = d_next[layer].iter().zip(s0).map(|(g, s)| g * (1.0 - s * s)).collect();
            add_assign(&mut g[bb].data, &da);
            ger_add(&mut g[bw].data, 2 * h, &da, &enc.bridge_in[layer]);
            let mut d_joined = vec![0.0; 2 * h];
            gemv_t_add(&self.params[bw].data, 2 * h, &da, &mut d_joined);
            add_assign(&mut d_out[(n - 1) * 2 * h..(n - 1) * 2 * h + h], &d_joined[..h]);
            add_assign(&mut d_out[h..2 * h], &d_joined[h..]);

            let input_w = if layer == 0 { e } else { 2 * h };
            let mut d_in = vec![0.0; n * input_w];
            for k in 0..2 {
                let gi = lay.enc[layer][k];
                let mask = masks.map(|m| m.enc[layer][k].as_slice());
                let order: Vec<usize> = if k == 0 { (0..n).rev().collect() } else { (0..n).collect() };
                let mut carry = vec![0.0; h];
                for i in order {
                    let mut dh = d_out[i * 2 * h + k * h..i * 2 * h + (k + 1) * h].to_vec();
                    add_assign(&mut dh, &carry);
                    let (gw, gu, gb) = three_mut(g, gi.w, gi.u, gi.b);
                    carry = gru_backward(
                        self.gru(gi),
                        GruGrads { w: gw, u: gu, b: gb },
                        &enc.caches[layer][k][i],
                        &dh,
                        mask,
                        &mut d_in[i * input_w..(i + 1) * input_w],
                    );
                }
            }
            if layer == 0 {
                for (i, &tok) in enc.tokens.iter().enumerate() {
                    add_assign(g[lay.emb].row_mut(tok as usize), &d_in[i * e..(i + 1) * e]);
                }
            } else {
                d_out = d_in;
            }
        }
    }
}

fn two_mut(g: &mut [Tensor], a: usize, b: usize) -> (&mut Tensor, &mut Tensor) {
    assert!(a < b);
    let (lo, hi) = g.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

fn three_mut(g: &mut [Tensor], a: usize, b: usize, c: usize) -> (&mut Tensor, &mut Tensor, &mut Tensor) {
    assert!(a < b && b < c);
    let (lo, rest) = g.split_at_mut(b);
    let (mid, hi) = rest.split_at_mut(c - b);
    (&mut lo[a], &mut mid[0], &mut hi[0])
}
