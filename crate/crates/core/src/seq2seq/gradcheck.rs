//! Central finite-difference check of analytic gradients.

use alloc::vec::Vec;

use super::model::{DropoutMasks, Example, Seq2SeqModel, SoftmaxMode};

/// A scalar objective over a flat parameter vector.
pub trait Differentiable {
    fn parameter_count(&self) -> usize;
    fn parameter(&self, i: usize) -> f64;
    fn set_parameter(&mut self, i: usize, value: f64);
    fn loss(&self) -> f64;
    fn gradient(&self) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

/// |a − n| / max(|a|, |n|, 1e-8).
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

pub fn gradient_check<D: Differentiable>(d: &mut D, epsilon: f64) -> GradCheckReport {
    let analytic = d.gradient();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: 0,
        checked: 0,
    };
    for (i, &ga) in analytic.iter().enumerate() {
        let orig = d.parameter(i);
        d.set_parameter(i, orig + epsilon);
        let plus = d.loss();
        d.set_parameter(i, orig - epsilon);
        let minus = d.loss();
        d.set_parameter(i, orig);
        let gn = (plus - minus) / (2.0 * epsilon);
        let err = relative_error(ga, gn);
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_index = i;
        }
        report.checked += 1;
    }
    report
}

/// Summed cross-entropy of one pair under full softmax, with dropout off or
/// a fixed set of masks.
pub struct PairObjective<'a> {
    model: &'a mut Seq2SeqModel,
    example: Example,
    masks: Option<DropoutMasks>,
    offsets: Vec<usize>,
}

impl<'a> PairObjective<'a> {
    pub fn new(model: &'a mut Seq2SeqModel, example: Example) -> Self {
        let mut offsets = Vec::with_capacity(model.params().len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for t in model.params() {
            acc += t.len();
            offsets.push(acc);
        }
        PairObjective {
            model,
            example,
            masks: None,
            offsets,
        }
    }

    pub fn with_masks(mut self, masks: DropoutMasks) -> Self {
        self.masks = Some(masks);
        self
    }

    fn locate(&self, i: usize) -> (usize, usize) {
        let t = self.offsets.partition_point(|&o| o <= i) - 1;
        (t, i - self.offsets[t])
    }
}

impl Differentiable for PairObjective<'_> {
    fn parameter_count(&self) -> usize {
        *self.offsets.last().expect("non-empty")
    }

    fn parameter(&self, i: usize) -> f64 {
        let (t, k) = self.locate(i);
        self.model.params()[t].data[k]
    }

    fn set_parameter(&mut self, i: usize, value: f64) {
        let (t, k) = self.locate(i);
        self.model.params_mut()[t].data[k] = value;
    }

    fn loss(&self) -> f64 {
        self.model
            .forward_backward(&self.example, self.masks.as_ref(), SoftmaxMode::Full, None, None)
            .expect("valid example")
            .0
    }

    fn gradient(&self) -> Vec<f64> {
        let mut g = self.model.zero_grads();
        self.model
            .forward_backward(&self.example, self.masks.as_ref(), SoftmaxMode::Full, None, Some(&mut g))
            .expect("valid example");
        g.into_iter().flat_map(|t| t.data).collect()
    }
}
