//! Minimal additive adversarial noise: gradient descent on the input
//! under a piecewise class-pressure penalty plus an L2 norm cost.
//!
//! While the noisy image is still classified correctly the objective is
//! `beta * L[c]`; once it flips, the penalty becomes `L[k] - L[c]`, which
//! pushes back toward the correct class. The loop therefore hovers around
//! the decision boundary while the norm cost shrinks the noise, and the
//! smallest noise seen on the wrong side of the boundary is returned.
//!
//! `L` is the post-softmax probability vector for cross-entropy models and
//! the raw score vector for hinge models.

use crate::convnet::{argmax, softmax_row, LossKind, Model};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Attack target: a fixed class or the runner-up of the clean prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetClass {
    Auto,
    Class(usize),
}

#[derive(Debug, Clone)]
pub struct AttackConfig {
    /// Weight of the L2 norm cost.
    pub lambda: f64,
    /// Multiplier penalizing noise that fails to flip the classification.
    pub beta: f64,
    pub target: TargetClass,
    /// Gradient step in intensity-level units.
    pub step_size: f64,
    pub max_iters: usize,
    /// Consecutive misclassified iterations required before stopping.
    pub patience: usize,
    /// Relative noise-norm change below which the iterate counts as stable.
    pub tol: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            lambda: 0.02,
            beta: 5.0,
            target: TargetClass::Auto,
            step_size: 2.0,
            max_iters: 3000,
            patience: 10,
            tol: 1e-3,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        if !(self.beta.is_finite() && self.beta > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "beta must be a multiplier greater than 1, got {}",
                self.beta
            )));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be at least 1".into()));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tol must be finite and non-negative, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Which branch of the piecewise penalty was active at an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiBranch {
    CorrectClass,
    Misclassified,
}

#[derive(Debug, Clone)]
pub struct AttackResult {
    /// Additive noise in intensity levels, same shape as the image.
    pub noise: Tensor,
    /// True iff the clamped noisy image is no longer classified as `c`.
    pub success: bool,
    /// Gradient steps taken.
    pub iterations: usize,
    /// Noise norm after each step.
    pub norm_trace: Vec<f64>,
    /// Active penalty branch at each step.
    pub branch_trace: Vec<PsiBranch>,
    /// Class scores of the final noisy image.
    pub final_scores: Tensor,
}

/// Piecewise penalty over a class-loss vector: `beta * L[c]` while the
/// argmax equals the true class, `L[k] - L[c]` otherwise. Argmax ties
/// break toward the lowest index, consistent with prediction.
pub fn psi(l: &Tensor, c: usize, k: usize, beta: f64) -> Result<f64> {
    if c == k {
        return Err(Error::SameClass { class: c });
    }
    let values = l.data();
    if c >= values.len() || k >= values.len() {
        return Err(Error::LabelOutOfRange {
            index: 0,
            label: c.max(k),
            num_classes: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(
            "loss vector contains non-finite values".into(),
        ));
    }
    Ok(if argmax(values) == c {
        beta * values[c]
    } else {
        values[k] - values[c]
    })
}

/// The noisy image a noise tensor denotes: `image + noise` clamped to
/// valid intensities.
pub fn apply_noise(image: &Tensor, noise: &Tensor) -> Result<Tensor> {
    Ok(image.add(noise)?.clamp(0.0, 255.0))
}

struct PsiEval {
    value: f64,
    grad: Tensor,
    predicted: usize,
    branch: PsiBranch,
}

/// Penalty value and its gradient with respect to the noise, evaluated on
/// the clamped noisy image. Gradients through clamped pixels are zeroed.
fn eval_psi(
    model: &Model,
    image: &Tensor,
    noise: &Tensor,
    c: usize,
    k: usize,
    beta: f64,
) -> Result<PsiEval> {
    let raw = image.add(noise)?;
    let clamped = raw.clamp(0.0, 255.0);
    let mut batch_shape = vec![1];
    batch_shape.extend_from_slice(clamped.shape());
    let batch = clamped.reshape(batch_shape)?;
    let (scores, cache) = model.forward(&batch)?;
    let row = scores.data().to_vec();
    let num_classes = row.len();
    let probabilities = model.loss_kind() == LossKind::SoftmaxCrossEntropy;
    let l = if probabilities {
        softmax_row(&row)
    } else {
        row.clone()
    };
    let predicted = argmax(&l);
    let value = psi(&Tensor::from_vec(l.clone()), c, k, beta)?;
    let branch = if predicted == c {
        PsiBranch::CorrectClass
    } else {
        PsiBranch::Misclassified
    };
    // d psi / d scores for the active branch. For probability vectors the
    // softmax Jacobian p_a (delta_aj - p_j) is applied analytically.
    let mut grad_scores = vec![0.0; num_classes];
    if probabilities {
        match branch {
            PsiBranch::CorrectClass => {
                for (j, g) in grad_scores.iter_mut().enumerate() {
                    let delta = if j == c { 1.0 } else { 0.0 };
                    *g = beta * l[c] * (delta - l[j]);
                }
            }
            PsiBranch::Misclassified => {
                for (j, g) in grad_scores.iter_mut().enumerate() {
                    let dk = if j == k { 1.0 } else { 0.0 };
                    let dc = if j == c { 1.0 } else { 0.0 };
                    *g = l[k] * (dk - l[j]) - l[c] * (dc - l[j]);
                }
            }
        }
    } else {
        match branch {
            PsiBranch::CorrectClass => grad_scores[c] = beta,
            PsiBranch::Misclassified => {
                grad_scores[k] = 1.0;
                grad_scores[c] = -1.0;
            }
        }
    }
    let grad_scores = Tensor::new(vec![1, num_classes], grad_scores)?;
    let (_, input_grad) = model.backward(&cache, &grad_scores)?;
    let mut grad = input_grad.reshape(image.shape().to_vec())?;
    for (g, &v) in grad.data_mut().iter_mut().zip(raw.data()) {
        if v <= 0.0 || v >= 255.0 {
            *g = 0.0;
        }
    }
    Ok(PsiEval {
        value,
        grad,
        predicted,
        branch,
    })
}

/// Full objective `psi + lambda * ||r||_2` and its subgradient with
/// respect to the noise (the norm term contributes `lambda * r / ||r||`,
/// taken as zero at `r = 0`).
pub fn objective(
    model: &Model,
    image: &Tensor,
    noise: &Tensor,
    c: usize,
    k: usize,
    cfg: &AttackConfig,
) -> Result<(f64, Tensor)> {
    cfg.validate()?;
    let eval = eval_psi(model, image, noise, c, k, cfg.beta)?;
    let norm = noise.l2_norm();
    let value = eval.value + cfg.lambda * norm;
    if !value.is_finite() {
        return Err(Error::NonFinite { iteration: 0 });
    }
    let mut grad = eval.grad;
    if norm > 0.0 {
        let scaled = noise.scale(cfg.lambda / norm);
        grad = grad.add(&scaled)?;
    }
    Ok((value, grad))
}

/// Runner-up class of a score row: the best class other than the argmax.
fn runner_up(l: &[f64]) -> usize {
    let top = argmax(l);
    let mut best = if top == 0 { 1 } else { 0 };
    for (j, &v) in l.iter().enumerate() {
        if j != top && v > l[best] {
            best = j;
        }
    }
    best
}

/// Gradient descent on the noise from `r = 0`.
///
/// Each iteration takes a step along the penalty gradient and then applies
/// the proximal shrinkage of the norm cost (`||r||` shrinks by at most
/// `step_size * lambda`); a plain subgradient step on the norm term would
/// overshoot the origin whenever `step_size * lambda` exceeds `||r||`.
/// The returned noise is the smallest-norm iterate seen misclassified; the
/// loop stops early once the iterate has been misclassified for `patience`
/// consecutive iterations with a stable norm.
pub fn find_minimal_noise(
    model: &Model,
    image: &Tensor,
    c: usize,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    cfg.validate()?;
    let clean_scores = model.scores_for(image)?;
    let clean_predicted = argmax(clean_scores.data());
    if clean_predicted != c {
        return Err(Error::NotCleanCorrect {
            predicted: clean_predicted,
            expected: c,
        });
    }
    if model.num_classes() < 2 {
        return Err(Error::InvalidConfig(
            "attack needs at least two classes".into(),
        ));
    }
    let k = match cfg.target {
        TargetClass::Class(k) => {
            if k == c {
                return Err(Error::SameClass { class: c });
            }
            if k >= model.num_classes() {
                return Err(Error::LabelOutOfRange {
                    index: 0,
                    label: k,
                    num_classes: model.num_classes(),
                });
            }
            k
        }
        TargetClass::Auto => {
            let l = if model.loss_kind() == LossKind::SoftmaxCrossEntropy {
                softmax_row(clean_scores.data())
            } else {
                clean_scores.data().to_vec()
            };
            runner_up(&l)
        }
    };

    let mut noise = Tensor::zeros(image.shape().to_vec());
    let mut best: Option<(f64, Tensor)> = None;
    let mut norm_trace = Vec::new();
    let mut branch_trace = Vec::new();
    let mut previous_norm = 0.0f64;
    let mut streak = 0usize;
    for iteration in 0..cfg.max_iters {
        let eval = eval_psi(model, image, &noise, c, k, cfg.beta)?;
        let norm = noise.l2_norm();
        if !(eval.value + cfg.lambda * norm).is_finite() {
            return Err(Error::NonFinite { iteration });
        }
        if eval.predicted != c {
            streak += 1;
            if norm > 0.0 && best.as_ref().is_none_or(|(b, _)| norm < *b) {
                best = Some((norm, noise.clone()));
            }
        } else {
            streak = 0;
        }
        let relative_change = (norm - previous_norm).abs() / previous_norm.max(1e-12);
        if iteration > 0 && streak >= cfg.patience && relative_change < cfg.tol {
            break;
        }
        previous_norm = norm;

        noise = noise.sub(&eval.grad.scale(cfg.step_size))?;
        let stepped_norm = noise.l2_norm();
        if stepped_norm > 0.0 {
            let shrink = (1.0 - cfg.step_size * cfg.lambda / stepped_norm).max(0.0);
            noise = noise.scale(shrink);
        }
        norm_trace.push(noise.l2_norm());
        branch_trace.push(eval.branch);
    }

    let noise = match best {
        Some((_, b)) => b,
        None => noise,
    };
    let final_scores = model.scores_for(&apply_noise(image, &noise)?)?;
    let success = argmax(final_scores.data()) != c;
    Ok(AttackResult {
        noise,
        success,
        iterations: norm_trace.len(),
        norm_trace,
        branch_trace,
        final_scores,
    })
}
