//! Adversarial and cross-modal contrastive objectives.

use ndarray::{Array2, ArrayView1};

use super::networks::Discriminator;
use crate::error::{Error, Result};
use crate::nn::{Tape, Var};

/// Probabilities are clipped to `[PROB_EPS, 1 - PROB_EPS]` before the log.
pub const PROB_EPS: f64 = 1e-7;

const NORM_EPS: f64 = 1e-12;

fn clamp_ln(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS).ln()
}

fn no_complete() -> Error {
    Error::data("completer requires at least one modality-complete entity")
}

/// `-(mean ln(1 - p_fake) + mean ln p_real)`.
pub fn adv_loss_from_probs(real: &[f64], fake: &[f64]) -> Result<f64> {
    if real.is_empty() {
        return Err(no_complete());
    }
    if fake.is_empty() {
        return Err(Error::data("adversarial loss needs at least one fake pair"));
    }
    let fake_term = fake.iter().map(|&p| clamp_ln(1.0 - p)).sum::<f64>() / fake.len() as f64;
    let real_term = real.iter().map(|&p| clamp_ln(p)).sum::<f64>() / real.len() as f64;
    Ok(-(fake_term + real_term))
}

/// Binary cross-entropy of `disc` on real `(s, v)` and fake `(s, g)` rows.
pub fn adv_loss(
    disc: &Discriminator,
    real_s: &Array2<f64>,
    real_v: &Array2<f64>,
    fake_s: &Array2<f64>,
    fake_g: &Array2<f64>,
) -> Result<f64> {
    if real_s.nrows() == 0 {
        return Err(no_complete());
    }
    let real = disc.discriminate_batch(real_s, real_v)?;
    let fake = disc.discriminate_batch(fake_s, fake_g)?;
    adv_loss_from_probs(&real, &fake)
}

/// Tape form over `n × 1` probability nodes.
pub fn adv_loss_tape(tape: &mut Tape, p_real: Var, p_fake: Var) -> Var {
    let one_minus = tape.neg(p_fake);
    let one_minus = tape.add_scalar(one_minus, 1.0);
    let log_fake = tape.log_clamped(one_minus, PROB_EPS, 1.0 - PROB_EPS);
    let log_real = tape.log_clamped(p_real, PROB_EPS, 1.0 - PROB_EPS);
    let fake_term = tape.mean(log_fake);
    let real_term = tape.mean(log_real);
    let total = tape.add(fake_term, real_term);
    tape.neg(total)
}

/// Non-saturating generator objective `-mean ln p_fake`.
pub fn non_saturating_tape(tape: &mut Tape, p_fake: Var) -> Var {
    let log_fake = tape.log_clamped(p_fake, PROB_EPS, 1.0 - PROB_EPS);
    let m = tape.mean(log_fake);
    tape.neg(m)
}

fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("cosine of lengths {} and {}", a.len(), b.len())));
    }
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::numerical("contrastive", "cosine of a zero vector is undefined"));
    }
    Ok(a.dot(&b) / (na * nb))
}

/// `exp(cos(s, g) / tau)`.
pub fn pair_score(s: ArrayView1<f64>, g: ArrayView1<f64>, tau: f64) -> Result<f64> {
    Ok((cosine(s, g)? / tau).exp())
}

/// In-batch InfoNCE over rows of `s` and generated rows of `g`, evaluated
/// pair by pair.
pub fn contrastive_loss(s: &Array2<f64>, g: &Array2<f64>, tau: f64) -> Result<f64> {
    if s.nrows() == 0 || s.dim() != g.dim() {
        return Err(Error::shape(format!(
            "contrastive batch needs equal non-empty shapes, got {:?} and {:?}",
            s.dim(),
            g.dim()
        )));
    }
    let b = s.nrows();
    let mut total = 0.0;
    for i in 0..b {
        let pos = pair_score(s.row(i), g.row(i), tau)?;
        let mut denom = pos;
        for j in (0..b).filter(|&j| j != i) {
            denom += pair_score(s.row(i), g.row(j), tau)?;
        }
        total -= (pos / denom).ln();
    }
    Ok(total / b as f64)
}

/// Tape form: row-wise `logsumexp(C_i·) - C_ii` with `C = cos / tau`.
pub fn contrastive_tape(tape: &mut Tape, s: Var, g: Var, tau: f64) -> Var {
    let sn = tape.normalize_rows(s, NORM_EPS);
    let gn = tape.normalize_rows(g, NORM_EPS);
    let cos = tape.matmul_t(sn, gn);
    let logits = tape.scale(cos, 1.0 / tau);
    let lse = tape.row_logsumexp(logits);
    let diag = tape.diag(logits);
    let per_row = tape.sub(lse, diag);
    tape.mean(per_row)
}
