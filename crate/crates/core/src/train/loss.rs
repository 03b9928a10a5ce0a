//! Non-saturating GAN losses on raw logits, computed in f64.

use crate::error::{Error, Result};

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Discriminator loss and its gradients with respect to both logit batches:
/// `mean(softplus(-real)) + mean(softplus(fake))`.
pub fn discriminator_loss_and_grad(real: &[f64], fake: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if real.len() != fake.len() || real.is_empty() {
        return Err(Error::Shape(format!(
            "discriminator loss needs equal non-empty batches, got {} and {}",
            real.len(),
            fake.len()
        )));
    }
    let m = real.len() as f64;
    let loss = real.iter().map(|&r| softplus(-r)).sum::<f64>() / m + fake.iter().map(|&f| softplus(f)).sum::<f64>() / m;
    let d_real = real.iter().map(|&r| -sigmoid(-r) / m).collect();
    let d_fake = fake.iter().map(|&f| sigmoid(f) / m).collect();
    Ok((loss, d_real, d_fake))
}

pub fn discriminator_loss(real: &[f64], fake: &[f64]) -> Result<f64> {
    discriminator_loss_and_grad(real, fake).map(|(l, _, _)| l)
}

/// Generator loss `mean(softplus(-fake))` and its gradient.
pub fn generator_loss_and_grad(fake: &[f64]) -> Result<(f64, Vec<f64>)> {
    if fake.is_empty() {
        return Err(Error::Shape("generator loss of an empty batch".into()));
    }
    let m = fake.len() as f64;
    let loss = fake.iter().map(|&f| softplus(-f)).sum::<f64>() / m;
    let grad = fake.iter().map(|&f| -sigmoid(-f) / m).collect();
    Ok((loss, grad))
}

pub fn generator_loss(fake: &[f64]) -> Result<f64> {
    generator_loss_and_grad(fake).map(|(l, _)| l)
}
