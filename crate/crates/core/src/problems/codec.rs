//! A linear toy codec trained with the usual rate + λ·255²·MSE loss.
//!
//! Encoder `y = W_e x + b_e`, quantization modeled as additive uniform
//! noise `ỹ = y + u` with `u ~ U(-0.5, 0.5)`, decoder `x̂ = W_d ỹ + b_d`.
//! The rate is the bits-per-pixel cost of `ỹ` under a factorized Gaussian
//! entropy model with per-channel scale `σ_j = exp(s_j)`, where each latent
//! is charged `-log2 P(ỹ)` with `P` the Gaussian mass of the unit interval
//! centered on `ỹ`.

use std::f64::consts::{LN_2, PI, SQRT_2};

use libm::erfc;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_dim, make_patch_batch, Batch, Patch, Problem, RATE_FLOOR};
use crate::error::{Error, Result};
use crate::types::{GradPair, LossPair, ParamVector};

/// Peak value of the synthetic pixel range.
pub const PIXEL_PEAK: f64 = 1.0;
const DISTORTION_UNITS: f64 = 255.0 * 255.0;
const MID_GRAY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyCodecConfig {
    pub patch_size: usize,
    pub latent_dim: usize,
    pub lambda_rd: f64,
    pub bias: bool,
    /// Fixed factor between encoder output and quantization-bin units; the
    /// decoder divides it back out. Keeps every parameter block O(1).
    pub latent_gain: f64,
    pub batch_size: usize,
    pub pool_size: usize,
    pub eval_size: usize,
    pub data_seed: u64,
    pub noise_seed: u64,
}

impl Default for ToyCodecConfig {
    fn default() -> Self {
        Self {
            patch_size: 4,
            latent_dim: 6,
            lambda_rd: 0.0018,
            bias: true,
            latent_gain: 16.0,
            batch_size: 16,
            pool_size: 512,
            eval_size: 256,
            data_seed: 0,
            noise_seed: 0,
        }
    }
}

impl ToyCodecConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("patch_size", self.patch_size),
            ("latent_dim", self.latent_dim),
            ("batch_size", self.batch_size),
            ("pool_size", self.pool_size),
            ("eval_size", self.eval_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidInput(format!("{name} must be at least 1")));
            }
        }
        if !(self.lambda_rd.is_finite() && self.lambda_rd > 0.0) {
            return Err(Error::InvalidInput(format!(
                "lambda_rd must be positive, got {}",
                self.lambda_rd
            )));
        }
        if !(self.latent_gain.is_finite() && self.latent_gain > 0.0) {
            return Err(Error::InvalidInput(format!(
                "latent_gain must be positive, got {}",
                self.latent_gain
            )));
        }
        if self.batch_size > self.pool_size {
            return Err(Error::InvalidInput("batch_size exceeds pool_size".into()));
        }
        Ok(())
    }
}

/// Offsets of each parameter block inside θ, in declaration order.
#[derive(Debug, Clone, Copy)]
struct Layout {
    pixels: usize,
    latents: usize,
    enc_w: usize,
    enc_b: Option<usize>,
    dec_w: usize,
    dec_b: Option<usize>,
    log_scale: usize,
    dim: usize,
}

impl Layout {
    fn new(pixels: usize, latents: usize, bias: bool) -> Self {
        let enc_w = 0;
        let mut next = enc_w + latents * pixels;
        let enc_b = bias.then(|| {
            let at = next;
            next += latents;
            at
        });
        let dec_w = next;
        next += pixels * latents;
        let dec_b = bias.then(|| {
            let at = next;
            next += pixels;
            at
        });
        let log_scale = next;
        next += latents;
        Self {
            pixels,
            latents,
            enc_w,
            enc_b,
            dec_w,
            dec_b,
            log_scale,
            dim: next,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyCodecProblem {
    config: ToyCodecConfig,
    layout: Layout,
    pool: Vec<Patch>,
    held_out: Vec<Patch>,
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

fn upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// Gaussian mass of `[v - 0.5, v + 0.5]` under `N(0, σ²)`.
fn interval_mass(v: f64, sigma: f64) -> f64 {
    let t = v.abs();
    upper_tail((t - 0.5) / sigma) - upper_tail((t + 0.5) / sigma)
}

impl ToyCodecProblem {
    pub fn new(config: ToyCodecConfig) -> Result<Self> {
        config.validate()?;
        let pixels = config.patch_size * config.patch_size;
        let layout = Layout::new(pixels, config.latent_dim, config.bias);
        let pool = make_patch_batch(config.pool_size, config.patch_size, config.data_seed);
        let held_out = make_patch_batch(
            config.eval_size,
            config.patch_size,
            config.data_seed ^ 0x5e_ed0f_e7a1,
        );
        Ok(Self {
            config,
            layout,
            pool,
            held_out,
        })
    }

    pub fn config(&self) -> &ToyCodecConfig {
        &self.config
    }

    /// Same problem at a different trade-off λ.
    pub fn with_lambda(&self, lambda_rd: f64) -> Result<Self> {
        let mut config = self.config.clone();
        config.lambda_rd = lambda_rd;
        config.validate()?;
        Ok(Self {
            config,
            ..self.clone()
        })
    }

    /// Uniform quantization noise for every latent of every patch in the
    /// batch, keyed by `(noise_seed, batch.iteration)`.
    pub fn noise(&self, batch: &Batch<'_>) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.noise_seed);
        rng.set_stream(batch.iteration);
        (0..batch.patches.len() * self.layout.latents)
            .map(|_| rng.gen_range(-0.5..0.5))
            .collect()
    }

    /// Mean squared reconstruction error implied by a distortion loss.
    pub fn mse_of(&self, losses: &LossPair) -> f64 {
        losses.distortion / (self.config.lambda_rd * DISTORTION_UNITS)
    }

    fn forward(
        &self,
        theta: &[f64],
        batch: &Batch<'_>,
        mut grads: Option<&mut GradPair>,
    ) -> Result<LossPair> {
        check_dim(theta, self.layout.dim)?;
        if batch.patches.is_empty() {
            return Err(Error::InvalidInput(
                "toy codec needs a nonempty batch".into(),
            ));
        }
        let Layout {
            pixels: n,
            latents: k,
            ..
        } = self.layout;
        let lay = self.layout;
        if let Some(p) = batch.patches.iter().find(|p| p.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: p.len(),
            });
        }
        let noise = self.noise(batch);
        let enc_w = &theta[lay.enc_w..lay.enc_w + k * n];
        let dec_w = &theta[lay.dec_w..lay.dec_w + n * k];
        let log_scale = &theta[lay.log_scale..lay.log_scale + k];
        let sigma: Vec<f64> = log_scale.iter().map(|s| s.exp()).collect();
        if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::NonFinite("entropy model scale"));
        }

        let gain = self.config.latent_gain;
        let elements = (batch.patches.len() * n) as f64;
        let rate_coef = 1.0 / elements;
        let dist_coef = self.config.lambda_rd * DISTORTION_UNITS / elements;

        let mut bits = 0.0;
        let mut sq_err = 0.0;
        let mut latent = vec![0.0; k];
        let mut resid = vec![0.0; n];
        let mut g_latent_r = vec![0.0; k];
        let mut g_latent_d = vec![0.0; k];

        for (b, x) in batch.patches.iter().enumerate() {
            for j in 0..k {
                let mut y = lay.enc_b.map_or(0.0, |at| theta[at + j]);
                let row = &enc_w[j * n..(j + 1) * n];
                y += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                latent[j] = gain * y + noise[b * k + j];
            }
            for i in 0..n {
                let mut xh = lay.dec_b.map_or(0.0, |at| theta[at + i]);
                let row = &dec_w[i * k..(i + 1) * k];
                xh += row.iter().zip(&latent).map(|(w, v)| w * v).sum::<f64>() / gain;
                resid[i] = xh - x[i];
                sq_err += resid[i] * resid[i];
            }
            for j in 0..k {
                let mass = interval_mass(latent[j], sigma[j]);
                if !(mass > 0.0) {
                    return Err(Error::NonFinite("latent likelihood underflow"));
                }
                bits -= mass.log2();
                if grads.is_some() {
                    let a = (latent[j] + 0.5) / sigma[j];
                    let c = (latent[j] - 0.5) / sigma[j];
                    let (pa, pc) = (std_normal_pdf(a), std_normal_pdf(c));
                    let dmass_dy = (pa - pc) / sigma[j];
                    let dmass_ds = -(a * pa - c * pc);
                    let scale = -rate_coef / (mass * LN_2);
                    g_latent_r[j] = scale * dmass_dy * gain;
                    if let Some(g) = grads.as_deref_mut() {
                        g.rate[lay.log_scale + j] += scale * dmass_ds;
                    }
                }
            }

            if let Some(g) = grads.as_deref_mut() {
                // distortion: d/dx̂ = 2 c_D r
                for j in 0..k {
                    g_latent_d[j] = 0.0;
                }
                for i in 0..n {
                    let gx = 2.0 * dist_coef * resid[i];
                    let row = i * k;
                    for j in 0..k {
                        g.distortion[lay.dec_w + row + j] += gx * latent[j] / gain;
                        g_latent_d[j] += gx * dec_w[row + j];
                    }
                    if let Some(at) = lay.dec_b {
                        g.distortion[at + i] += gx;
                    }
                }
                for j in 0..k {
                    let row = lay.enc_w + j * n;
                    for (i, xv) in x.iter().enumerate() {
                        g.rate[row + i] += g_latent_r[j] * xv;
                        g.distortion[row + i] += g_latent_d[j] * xv;
                    }
                    if let Some(at) = lay.enc_b {
                        g.rate[at + j] += g_latent_r[j];
                        g.distortion[at + j] += g_latent_d[j];
                    }
                }
            }
        }

        LossPair::new(rate_coef * bits + RATE_FLOOR, dist_coef * sq_err)
    }
}

impl Problem for ToyCodecProblem {
    fn name(&self) -> &str {
        "toy_codec"
    }

    fn dim(&self) -> usize {
        self.layout.dim
    }

    fn batch(&self, iteration: u64) -> Batch<'_> {
        if iteration == u64::MAX {
            return self.eval_batch();
        }
        let bs = self.config.batch_size;
        let batches = self.config.pool_size / bs;
        let start = (iteration as usize % batches) * bs;
        Batch {
            patches: &self.pool[start..start + bs],
            iteration,
        }
    }

    fn eval_batch(&self) -> Batch<'_> {
        Batch {
            patches: &self.held_out,
            iteration: u64::MAX,
        }
    }

    fn eval_losses(&self, theta: &[f64], batch: &Batch<'_>) -> Result<LossPair> {
        self.forward(theta, batch, None)
    }

    fn eval_with_grads(&self, theta: &[f64], batch: &Batch<'_>) -> Result<(LossPair, GradPair)> {
        let mut grads = GradPair {
            rate: vec![0.0; self.layout.dim],
            distortion: vec![0.0; self.layout.dim],
        };
        let losses = self.forward(theta, batch, Some(&mut grads))?;
        grads.validate()?;
        Ok((losses, grads))
    }

    fn initial_theta(&self, seed: u64) -> ParamVector {
        let lay = self.layout;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = vec![0.0; lay.dim];
        let enc = 1.0 / (lay.pixels as f64).sqrt();
        let dec = 1.0 / (lay.latents as f64).sqrt();
        for v in &mut theta[lay.enc_w..lay.enc_w + lay.latents * lay.pixels] {
            *v = rng.gen_range(-enc..enc);
        }
        for v in &mut theta[lay.dec_w..lay.dec_w + lay.pixels * lay.latents] {
            *v = rng.gen_range(-dec..dec) * 0.1;
        }
        if let Some(at) = lay.dec_b {
            theta[at..at + lay.pixels].fill(MID_GRAY);
        }
        ParamVector::new(theta).expect("finite init")
    }

    fn shape_descriptor(&self) -> String {
        format!(
            "toy_codec;patch={};latent={};bias={};dim={}",
            self.config.patch_size, self.config.latent_dim, self.config.bias, self.layout.dim
        )
    }

    fn quality_db(&self, losses: &LossPair) -> Option<f64> {
        Some(crate::metrics::psnr(self.mse_of(losses), PIXEL_PEAK))
    }
}
