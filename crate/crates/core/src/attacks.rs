//! Input perturbations: single-step signed-gradient (FGSM), an iterated
//! signed-gradient variant, and seeded random-sign noise as a null control.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::net::NetworkSpec;

#[derive(Debug, Clone)]
pub struct AttackConfig {
    /// L-infinity budget in normalized input units.
    pub epsilon: f64,
    /// 1 = single-step FGSM.
    pub steps: usize,
    /// Per-step size for the iterated variant.
    pub step_size: f64,
    /// Optional clipping range applied after perturbation.
    pub clamp: Option<(f64, f64)>,
    /// Used by the noise control only.
    pub seed: u64,
}

impl AttackConfig {
    pub fn fgsm(epsilon: f64) -> Self {
        AttackConfig {
            epsilon,
            steps: 1,
            step_size: epsilon,
            clamp: None,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Domain("epsilon must be finite and >= 0".into()));
        }
        if self.steps < 1 {
            return Err(Error::Domain("steps must be >= 1".into()));
        }
        if let Some((lo, hi)) = self.clamp {
            if !(lo < hi) {
                return Err(Error::Domain("clamp range must satisfy lo < hi".into()));
            }
        }
        Ok(())
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn apply_clamp(x: &mut [f64], clamp: Option<(f64, f64)>) {
    if let Some((lo, hi)) = clamp {
        for v in x.iter_mut() {
            *v = v.clamp(lo, hi);
        }
    }
}

/// `x + eps * sign(grad J)` with `sign(0) = 0`; every coordinate of the
/// perturbation lies in `{-eps, 0, +eps}` before clamping.
pub fn fgsm(net: &NetworkSpec, x: &[f64], y: usize, cfg: &AttackConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let grad = net.input_gradient(x, y)?;
    let mut out: Vec<f64> = x
        .iter()
        .zip(&grad)
        .map(|(xi, gi)| xi + cfg.epsilon * sign(*gi))
        .collect();
    apply_clamp(&mut out, cfg.clamp);
    Ok(out)
}

/// Repeats the signed-gradient step `cfg.steps` times with `cfg.step_size`,
/// projecting onto the L-infinity ball of radius `cfg.epsilon` around `x`
/// after each step.
pub fn iterated_attack(
    net: &NetworkSpec,
    x: &[f64],
    y: usize,
    cfg: &AttackConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if cfg.step_size <= 0.0 {
        return Err(Error::Domain("step_size must be > 0".into()));
    }
    let mut cur = x.to_vec();
    for _ in 0..cfg.steps {
        let grad = net.input_gradient(&cur, y)?;
        for ((c, xi), gi) in cur.iter_mut().zip(x).zip(&grad) {
            let stepped = *c + cfg.step_size * sign(*gi);
            // project onto the eps-ball around the clean input
            *c = stepped.clamp(xi - cfg.epsilon, xi + cfg.epsilon);
        }
    }
    apply_clamp(&mut cur, cfg.clamp);
    Ok(cur)
}

/// `x + eps * sigma` with each `sigma` coordinate an independent fair +-1
/// draw from the seeded generator.
pub fn random_sign_noise(x: &[f64], cfg: &AttackConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out: Vec<f64> = x
        .iter()
        .map(|xi| {
            let s = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            xi + cfg.epsilon * s
        })
        .collect();
    apply_clamp(&mut out, cfg.clamp);
    Ok(out)
}
