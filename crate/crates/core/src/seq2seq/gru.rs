//! Gated recurrent cell with stacked gate weights `[z; r; h]`.
//!
//! z = σ(W_z x + U_z ĥ + b_z), r = σ(W_r x + U_r ĥ + b_r),
//! h̃ = tanh(W_h x + U_h (r ⊙ ĥ) + b_h), h' = (1 − z) ⊙ h + z ⊙ h̃,
//! where ĥ = h ⊙ m is the recurrent state under the (per-sequence) dropout
//! mask `m`, or `h` itself without dropout.

use alloc::vec;
use alloc::vec::Vec;

use super::linalg::{gemv_add, gemv_t_add, ger_add, sigmoid, Tensor};
use super::ModelError;

/// Borrowed cell parameters: `w` is 3H×in, `u` is 3H×H, `b` is 3H×1.
#[derive(Clone, Copy)]
pub struct GruParams<'a> {
    pub w: &'a Tensor,
    pub u: &'a Tensor,
    pub b: &'a Tensor,
}

impl GruParams<'_> {
    pub fn hidden(&self) -> usize {
        self.u.cols
    }
}

/// Values saved by the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct GruCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub hd: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub cand: Vec<f64>,
    pub rhd: Vec<f64>,
}

/// One step without caching. Rejects non-finite inputs.
pub fn gru_step(p: GruParams<'_>, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>, ModelError> {
    if x.len() != p.w.cols || h_prev.len() != p.hidden() {
        return Err(ModelError::Shape("gru input"));
    }
    if x.iter().chain(h_prev).any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    Ok(gru_forward(p, x, h_prev, None).0)
}

pub fn gru_forward(p: GruParams<'_>, x: &[f64], h_prev: &[f64], mask: Option<&[f64]>) -> (Vec<f64>, GruCache) {
    let h = p.hidden();
    let hd: Vec<f64> = match mask {
        Some(m) => h_prev.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => h_prev.to_vec(),
    };
    let mut a = p.b.data.clone();
    gemv_add(&p.w.data, p.w.cols, x, &mut a);
    gemv_add(&p.u.data[..2 * h * h], h, &hd, &mut a[..2 * h]);
    let z: Vec<f64> = a[..h].iter().map(|&v| sigmoid(v)).collect();
    let r: Vec<f64> = a[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
    let rhd: Vec<f64> = r.iter().zip(&hd).map(|(a, b)| a * b).collect();
    gemv_add(&p.u.data[2 * h * h..], h, &rhd, &mut a[2 * h..]);
    let cand: Vec<f64> = a[2 * h..].iter().map(|&v| libm::tanh(v)).collect();
    let out: Vec<f64> = (0..h).map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * cand[i]).collect();
    let cache = GruCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        hd,
        z,
        r,
        cand,
        rhd,
    };
    (out, cache)
}

/// Mutable gradient buffers matching [`GruParams`].
pub struct GruGrads<'a> {
    pub w: &'a mut Tensor,
    pub u: &'a mut Tensor,
    pub b: &'a mut Tensor,
}

/// Accumulates parameter gradients, adds the input gradient to `dx` and
/// returns the gradient with respect to the previous hidden state.
pub fn gru_backward(
    p: GruParams<'_>,
    g: GruGrads<'_>,
    c: &GruCache,
    dh: &[f64],
    mask: Option<&[f64]>,
    dx: &mut [f64],
) -> Vec<f64> {
    let h = p.hidden();
    let mut da = vec![0.0; 3 * h];
    let mut dh_prev = vec![0.0; h];
    for i in 0..h {
        dh_prev[i] = dh[i] * (1.0 - c.z[i]);
        let dz = dh[i] * (c.cand[i] - c.h_prev[i]);
        da[i] = dz * c.z[i] * (1.0 - c.z[i]);
        let dcand = dh[i] * c.z[i];
        da[2 * h + i] = dcand * (1.0 - c.cand[i] * c.cand[i]);
    }
    // Through U_h (r ⊙ ĥ).
    let mut drhd = vec![0.0; h];
    gemv_t_add(&p.u.data[2 * h * h..], h, &da[2 * h..], &mut drhd);
    let mut dhd = vec![0.0; h];
    for i in 0..h {
        let dr = drhd[i] * c.hd[i];
        da[h + i] = dr * c.r[i] * (1.0 - c.r[i]);
        dhd[i] = drhd[i] * c.r[i];
    }
    gemv_t_add(&p.u.data[..2 * h * h], h, &da[..2 * h], &mut dhd);

    ger_add(&mut g.w.data, p.w.cols, &da, &c.x);
    ger_add(&mut g.u.data[..2 * h * h], h, &da[..2 * h], &c.hd);
    ger_add(&mut g.u.data[2 * h * h..], h, &da[2 * h..], &c.rhd);
    for (gb, d) in g.b.data.iter_mut().zip(&da) {
        *gb += d;
    }
    gemv_t_add(&p.w.data, p.w.cols, &da, dx);

    match mask {
        Some(m) => {
            for i in 0..h {
                dh_prev[i] += dhd[i] * m[i];
            }
        }
        None => {
            for i in 0..h {
                dh_prev[i] += dhd[i];
            }
        }
    }
    dh_prev
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
        let mut t = Tensor::zeros(name, rows, cols);
        t.data.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        t
    }

    /// Scalar loops written directly from the gate equations.
    fn oracle(w: &Tensor, u: &Tensor, b: &Tensor, x: &[f64], hp: &[f64]) -> Vec<f64> {
        let h = hp.len();
        let gate = |k: usize, i: usize, hv: &[f64]| -> f64 {
            let row = k * h + i;
            let mut s = b.data[row];
            for j in 0..x.len() {
                s += w.data[row * x.len() + j] * x[j];
            }
            for j in 0..h {
                s += u.data[row * h + j] * hv[j];
            }
            s
        };
        let sig = |v: f64| 1.0 / (1.0 + libm::exp(-v));
        let z: Vec<f64> = (0..h).map(|i| sig(gate(0, i, hp))).collect();
        let r: Vec<f64> = (0..h).map(|i| sig(gate(1, i, hp))).collect();
        let rh: Vec<f64> = (0..h).map(|i| r[i] * hp[i]).collect();
        (0..h)
            .map(|i| {
                let c = libm::tanh(gate(2, i, &rh));
                (1.0 - z[i]) * hp[i] + z[i] * c
            })
            .collect()
    }

    #[test]
    fn zero_params_give_zero_state() {
        let (w, u, b) = (Tensor::zeros("w", 9, 2), Tensor::zeros("u", 9, 3), Tensor::zeros("b", 9, 1));
        let p = GruParams { w: &w, u: &u, b: &b };
        assert_eq!(gru_step(p, &[0.3, -1.0], &[0.0; 3]).unwrap(), [0.0; 3]);
    }

    #[test]
    fn closed_update_gate_copies_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (w, u) = (random("w", 6, 2, &mut rng), random("u", 6, 2, &mut rng));
        let mut b = Tensor::zeros("b", 6, 1);
        b.data[0] = -100.0;
        b.data[1] = -100.0;
        let p = GruParams { w: &w, u: &u, b: &b };
        let hp = [0.25, -0.75];
        let out = gru_step(p, &[0.1, 0.2], &hp).unwrap();
        assert!(out.iter().zip(hp).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn matches_scalar_oracle_and_stays_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (w, u, b) = (random("w", 12, 3, &mut rng), random("u", 12, 4, &mut rng), random("b", 12, 1, &mut rng));
        let p = GruParams { w: &w, u: &u, b: &b };
        let x = [0.4, -0.3, 0.9];
        let hp = [0.5, -0.2, 0.99, -0.99];
        let got = gru_step(p, &x, &hp).unwrap();
        for (a, e) in got.iter().zip(oracle(&w, &u, &b, &x, &hp)) {
            assert!((a - e).abs() < 1e-12);
        }
        assert!(got.iter().all(|v| v.abs() < 1.0));
        assert_eq!(gru_step(p, &[f64::NAN, 0.0, 0.0], &hp).unwrap_err(), ModelError::NonFinite);
    }
}
