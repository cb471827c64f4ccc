//! Joint CTC-attention objective.
//!
//! [`ctc_loss`] runs the forward and backward recursions over the
//! blank-interleaved label sequence in log space and returns the gradient
//! with respect to the log-posterior entries themselves (each entry treated
//! as a free variable), so the module never needs to know which network
//! produced them.

use thiserror::Error;

use crate::math::{log_add, log_sum_exp};
use crate::posterior::PosteriorMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("target is empty")]
    EmptyTarget,
    #[error("blank id {0} appears in the target")]
    BlankInTarget(u32),
    #[error("label {label} is outside the vocabulary of {vocab}")]
    LabelOutOfRange { label: u32, vocab: usize },
    #[error("target unalignable: {frames} frames, needs at least {required}")]
    Unalignable { frames: usize, required: usize },
    #[error("attention scores have {got} steps, expected {expected} (target plus eos)")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid loss configuration: {0}")]
    Config(String),
}

/// CTC negative log-likelihood and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct CtcOutput {
    pub loss: f64,
    /// `frames x vocab`, row-major: d loss / d log-posterior.
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointLossConfig {
    /// Weight of the CTC branch; the attention branch gets `1 - ctc_weight`.
    pub ctc_weight: f64,
    pub blank: u32,
    pub eos: u32,
    pub label_smoothing: f64,
}

impl Default for JointLossConfig {
    fn default() -> Self {
        Self {
            ctc_weight: 0.3,
            blank: crate::tokenizer::BLANK_ID,
            eos: crate::tokenizer::EOS_ID,
            label_smoothing: 0.0,
        }
    }
}

impl JointLossConfig {
    pub fn validate(&self, vocab: usize) -> Result<(), LossError> {
        if !(0.0..=1.0).contains(&self.ctc_weight) {
            return Err(LossError::Config(format!("ctc_weight {} not in [0, 1]", self.ctc_weight)));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(LossError::Config(format!(
                "label_smoothing {} not in [0, 1)",
                self.label_smoothing
            )));
        }
        if self.blank as usize >= vocab {
            return Err(LossError::Config(format!("blank {} >= vocab {vocab}", self.blank)));
        }
        Ok(())
    }
}

/// Minimum number of frames that can carry `target`: one per label plus
/// one blank between every pair of equal neighbours.
pub fn min_frames(target: &[u32]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

pub fn ctc_loss(post: &PosteriorMatrix, target: &[u32], blank: u32) -> Result<CtcOutput, LossError> {
    let post = post.clone().normalized();
    let (frames, vocab) = (post.frames(), post.vocab());
    if target.is_empty() {
        return Err(LossError::EmptyTarget);
    }
    if blank as usize >= vocab {
        return Err(LossError::LabelOutOfRange { label: blank, vocab });
    }
    if let Some(&label) = target.iter().find(|&&l| l as usize >= vocab) {
        return Err(LossError::LabelOutOfRange { label, vocab });
    }
    if target.contains(&blank) {
        return Err(LossError::BlankInTarget(blank));
    }
    let required = min_frames(target);
    if frames < required {
        return Err(LossError::Unalignable { frames, required });
    }

    let ext: Vec<u32> = std::iter::once(blank)
        .chain(target.iter().flat_map(|&l| [l, blank]))
        .collect();
    let states = ext.len();
    let ninf = f64::NEG_INFINITY;
    let y = |t: usize, s: usize| post.get(t, ext[s] as usize);
    // skip transition s-2 -> s allowed for a label that differs from the previous label
    let can_skip = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];

    let mut alpha = vec![ninf; frames * states];
    alpha[0] = y(0, 0);
    alpha[1] = y(0, 1);
    for t in 1..frames {
        let (prev, cur) = alpha.split_at_mut(t * states);
        let prev = &prev[(t - 1) * states..];
        for s in 0..states {
            let mut a = prev[s];
            if s >= 1 {
                a = log_add(a, prev[s - 1]);
            }
            if can_skip(s) {
                a = log_add(a, prev[s - 2]);
            }
            cur[s] = if a == ninf { ninf } else { a + y(t, s) };
        }
    }

    let mut beta = vec![ninf; frames * states];
    let last = (frames - 1) * states;
    beta[last + states - 1] = y(frames - 1, states - 1);
    beta[last + states - 2] = y(frames - 1, states - 2);
    for t in (0..frames - 1).rev() {
        let (cur, next) = beta.split_at_mut((t + 1) * states);
        let cur = &mut cur[t * states..];
        for s in 0..states {
            let mut b = next[s];
            if s + 1 < states {
                b = log_add(b, next[s + 1]);
            }
            if s + 2 < states && can_skip(s + 2) {
                b = log_add(b, next[s + 2]);
            }
            cur[s] = if b == ninf { ninf } else { b + y(t, s) };
        }
    }

    let log_p = log_add(alpha[last + states - 1], alpha[last + states - 2]);
    let mut grad = vec![0.0; frames * vocab];
    for t in 0..frames {
        for s in 0..states {
            let ab = alpha[t * states + s] + beta[t * states + s];
            if ab == ninf {
                continue;
            }
            let k = ext[s] as usize;
            grad[t * vocab + k] -= (ab - post.get(t, k) - log_p).exp();
        }
    }
    Ok(CtcOutput { loss: -log_p, grad })
}

/// Mean label-smoothed negative log-likelihood of `target` followed by
/// `eos`. Step `i` uses the target distribution
/// `(1 - eps) * onehot + eps / V`.
pub fn attention_ce_loss(
    step_logprobs: &PosteriorMatrix,
    target: &[u32],
    eos: u32,
    label_smoothing: f64,
) -> Result<f64, LossError> {
    let expected = target.len() + 1;
    if step_logprobs.frames() != expected {
        return Err(LossError::LengthMismatch {
            expected,
            got: step_logprobs.frames(),
        });
    }
    if !(0.0..1.0).contains(&label_smoothing) {
        return Err(LossError::Config(format!("label_smoothing {label_smoothing} not in [0, 1)")));
    }
    let lp = step_logprobs.clone().normalized();
    let vocab = lp.vocab();
    let mut total = 0.0;
    for (i, &label) in target.iter().chain(std::iter::once(&eos)).enumerate() {
        if label as usize >= vocab {
            return Err(LossError::LabelOutOfRange { label, vocab });
        }
        let row = lp.row(i);
        let nll = -row[label as usize];
        let smooth = if label_smoothing > 0.0 {
            -row.iter().sum::<f64>() / vocab as f64
        } else {
            0.0
        };
        total += (1.0 - label_smoothing) * nll + label_smoothing * smooth;
    }
    Ok(total / expected as f64)
}

/// `ctc_weight * ctc + (1 - ctc_weight) * attention`.
pub fn joint_loss(
    post: &PosteriorMatrix,
    step_logprobs: &PosteriorMatrix,
    target: &[u32],
    cfg: &JointLossConfig,
) -> Result<f64, LossError> {
    cfg.validate(post.vocab())?;
    let ctc = ctc_loss(post, target, cfg.blank)?.loss;
    let att = attention_ce_loss(step_logprobs, target, cfg.eos, cfg.label_smoothing)?;
    Ok(cfg.ctc_weight * ctc + (1.0 - cfg.ctc_weight) * att)
}

/// Row log-sum-exp of the gradient's implied occupancy, exposed for checks:
/// every frame's occupancies `-grad` sum to one.
pub fn frame_occupancy(grad: &[f64], vocab: usize) -> Vec<f64> {
    grad.chunks(vocab)
        .map(|row| log_sum_exp(&row.iter().map(|g| (-g).ln()).collect::<Vec<_>>()))
        .collect()
}
