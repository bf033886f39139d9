//! Additive attention: e_j = vᵀ tanh(W_a s + U_a h_j), α = softmax(e),
//! c = Σ α_j h_j.

use alloc::vec;
use alloc::vec::Vec;

use super::linalg::{gemv_add, gemv_t_add, ger_add, softmax, Tensor};

/// Borrowed attention parameters: `wa` A×D, `ua` A×2H, `va` A×1.
#[derive(Clone, Copy)]
pub struct AttentionParams<'a> {
    pub wa: &'a Tensor,
    pub ua: &'a Tensor,
    pub va: &'a Tensor,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub s: Vec<f64>,
    /// tanh(W_a s + U_a h_j), n×A row-major.
    pub t: Vec<f64>,
    pub weights: Vec<f64>,
}

/// `U_a h_j` for every encoder state, n×A row-major; computed once per
/// input sequence.
pub fn project_keys(ua: &Tensor, states: &[f64], n: usize) -> Vec<f64> {
    let a = ua.rows;
    let w = ua.cols;
    let mut out = vec![0.0; n * a];
    for j in 0..n {
        gemv_add(&ua.data, w, &states[j * w..(j + 1) * w], &mut out[j * a..(j + 1) * a]);
    }
    out
}

/// Context vector and weights for decoder state `s` over `n` encoder states
/// stored row-major in `states`, given precomputed keys.
pub fn attend_keys(p: AttentionParams<'_>, s: &[f64], states: &[f64], keys: &[f64], n: usize) -> (Vec<f64>, AttentionCache) {
    let a = p.wa.rows;
    let w = p.ua.cols;
    let mut ws = vec![0.0; a];
    gemv_add(&p.wa.data, p.wa.cols, s, &mut ws);
    let mut t = vec![0.0; n * a];
    let mut e = vec![0.0; n];
    for j in 0..n {
        let row = &mut t[j * a..(j + 1) * a];
        for k in 0..a {
            row[k] = libm::tanh(ws[k] + keys[j * a + k]);
        }
        e[j] = row.iter().zip(&p.va.data).map(|(x, v)| x * v).sum();
    }
    softmax(&mut e);
    let mut ctx = vec![0.0; w];
    for j in 0..n {
        for (c, h) in ctx.iter_mut().zip(&states[j * w..(j + 1) * w]) {
            *c += e[j] * h;
        }
    }
    let cache = AttentionCache {
        s: s.to_vec(),
        t,
        weights: e,
    };
    (ctx, cache)
}

/// Convenience form computing the keys on the fly.
pub fn attend(p: AttentionParams<'_>, s: &[f64], encoder_states: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let flat: Vec<f64> = encoder_states.iter().flatten().copied().collect();
    let keys = project_keys(p.ua, &flat, encoder_states.len());
    let (ctx, cache) = attend_keys(p, s, &flat, &keys, encoder_states.len());
    (ctx, cache.weights)
}

pub struct AttentionGrads<'a> {
    pub wa: &'a mut Tensor,
    pub va: &'a mut Tensor,
}

/// Backward for one attention read. Adds into `d_keys` (n×A), `d_states`
/// (n×2H) and `ds`.
#[allow(clippy::too_many_arguments)]
pub fn attend_backward(
    p: AttentionParams<'_>,
    g: AttentionGrads<'_>,
    c: &AttentionCache,
    states: &[f64],
    dctx: &[f64],
    d_keys: &mut [f64],
    d_states: &mut [f64],
    ds: &mut [f64],
) {
    let a = p.wa.rows;
    let w = p.ua.cols;
    let n = c.weights.len();
    let mut dalpha = vec![0.0; n];
    for j in 0..n {
        let h = &states[j * w..(j + 1) * w];
        dalpha[j] = h.iter().zip(dctx).map(|(x, y)| x * y).sum();
        for (d, g) in d_states[j * w..(j + 1) * w].iter_mut().zip(dctx) {
            *d += c.weights[j] * g;
        }
    }
    let mean: f64 = c.weights.iter().zip(&dalpha).map(|(x, y)| x * y).sum();
    let mut dws = vec![0.0; a];
    for j in 0..n {
        let de = c.weights[j] * (dalpha[j] - mean);
        if de == 0.0 {
            continue;
        }
        let t = &c.t[j * a..(j + 1) * a];
        for k in 0..a {
            g.va.data[k] += de * t[k];
            let dpre = de * p.va.data[k] * (1.0 - t[k] * t[k]);
            dws[k] += dpre;
            d_keys[j * a + k] += dpre;
        }
    }
    ger_add(&mut g.wa.data, p.wa.cols, &dws, &c.s);
    gemv_t_add(&p.wa.data, p.wa.cols, &dws, ds);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
        let mut t = Tensor::zeros("t", rows, cols);
        t.data.iter_mut().for_each(|v| *v = rng.gen_range(-0.3..0.3));
        t
    }

    #[test]
    fn single_state_gets_all_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (wa, ua, va) = (random(3, 2, &mut rng), random(3, 4, &mut rng), random(3, 1, &mut rng));
        let p = AttentionParams { wa: &wa, ua: &ua, va: &va };
        let h = vec![0.1, 0.2, 0.3, 0.4];
        let (ctx, w) = attend(p, &[0.5, -0.5], &[h.clone()]);
        assert_eq!(w, [1.0]);
        assert_eq!(ctx, h);
    }

    #[test]
    fn identical_states_get_uniform_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (wa, ua, va) = (random(3, 2, &mut rng), random(3, 2, &mut rng), random(3, 1, &mut rng));
        let p = AttentionParams { wa: &wa, ua: &ua, va: &va };
        let (_, w) = attend(p, &[0.2, 0.1], &[vec![0.3, 0.3], vec![0.3, 0.3], vec![0.3, 0.3]]);
        assert!(w.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (wa, ua, va) = (random(4, 3, &mut rng), random(4, 2, &mut rng), random(4, 1, &mut rng));
        let p = AttentionParams { wa: &wa, ua: &ua, va: &va };
        let s = [0.3, -0.1, 0.7];
        let hs = [vec![0.1, -0.4], vec![0.9, 0.2], vec![-0.5, 0.5]];
        let (ctx, w) = attend(p, &s, &hs);
        let e: Vec<f64> = hs
            .iter()
            .map(|h| {
                (0..4)
                    .map(|k| {
                        let pre = (0..3).map(|i| wa.data[k * 3 + i] * s[i]).sum::<f64>()
                            + (0..2).map(|i| ua.data[k * 2 + i] * h[i]).sum::<f64>();
                        va.data[k] * libm::tanh(pre)
                    })
                    .sum()
            })
            .collect();
        let z: f64 = e.iter().map(|x| libm::exp(*x)).sum();
        for (j, ej) in e.iter().enumerate() {
            assert!((w[j] - libm::exp(*ej) / z).abs() < 1e-12);
        }
        for i in 0..2 {
            let direct: f64 = (0..3).map(|j| libm::exp(e[j]) / z * hs[j][i]).sum();
            assert!((ctx[i] - direct).abs() < 1e-12);
        }
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
