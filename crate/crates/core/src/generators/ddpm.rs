//! Ancestral sampling with a trained denoiser, one latent region at a time.

use image::{imageops, GrayImage, RgbImage};
use ndarray::{concatenate, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::denoiser::DenoiserModel;
use super::latent::decode_frame;
use super::schedule::NoiseSchedule;
use super::train::{input_channels, region_conditioning, work_regions};
use super::{preserve_background, ConditioningBundle, GenerateError, Generator};
use crate::attributes::Palette;
use crate::canvas::CanvasClip;

#[derive(Debug, Clone)]
pub struct DdpmGenerator {
    pub model: DenoiserModel,
    pub schedule: NoiseSchedule,
    pub palette: Palette,
    pub mask_channel: bool,
    pub full_canvas: bool,
}

impl DdpmGenerator {
    pub fn new(model: DenoiserModel, schedule: NoiseSchedule, mask_channel: bool) -> Result<Self, GenerateError> {
        if model.config.in_channels != input_channels(mask_channel) || model.config.out_channels != 3 {
            return Err(GenerateError::Invalid(format!(
                "model takes {} channels in / {} out; expected {} / 3",
                model.config.in_channels,
                model.config.out_channels,
                input_channels(mask_channel)
            )));
        }
        Ok(DdpmGenerator {
            model,
            schedule,
            palette: Palette::default(),
            mask_channel,
            full_canvas: false,
        })
    }
}

/// Per-region sampling seed; independent of evaluation order.
fn region_seed(seed: u64, slot: Option<usize>, frame: usize) -> u64 {
    let s = slot.map_or(u64::MAX, |s| s as u64);
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ s.rotate_left(32) ^ (frame as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Runs the reverse chain from pure noise. Returns `(h·w, 3)` in `[-1, 1]`
/// units.
pub fn reverse_chain(model: &DenoiserModel, schedule: &NoiseSchedule, cond: &Array2<f64>, h: usize, w: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| Array2::from_shape_simple_fn((h * w, 3), || StandardNormal.sample(rng));
    let mut x: Array2<f64> = draw(&mut rng);
    for t in (0..schedule.steps()).rev() {
        let input = concatenate(Axis(1), &[x.view(), cond.view()]).expect("equal row counts");
        let eps = model.forward(&input, h, w, t);
        let beta = schedule.betas[t];
        let coef = beta / (1.0 - schedule.alpha_bars[t]).sqrt();
        x = (&x - &(eps * coef)) / (1.0 - beta).sqrt();
        if t > 0 {
            let sigma = schedule.posterior_variance(t).sqrt();
            x = x + draw(&mut rng) * sigma;
        }
    }
    x
}

fn latent_to_image(x: &Array2<f64>, h: usize, w: usize) -> RgbImage {
    let unit = x.mapv(|v| (v + 1.0) / 2.0);
    let grid = unit
        .t()
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((3, h, w))
        .expect("3·h·w values");
    decode_frame(&grid)
}

/// Samples every masked region of `bundle` and pastes the decoded result
/// under the mask.
pub fn ddpm_sample(
    model: &DenoiserModel,
    bundle: &ConditioningBundle,
    schedule: &NoiseSchedule,
    palette: &Palette,
    mask_channel: bool,
    full_canvas: bool,
) -> Result<CanvasClip, GenerateError> {
    bundle.validate()?;
    let colors = bundle.attributes.rgb(palette)?;
    let regions = work_regions(bundle, full_canvas);
    let patches: Vec<(usize, (u32, u32, u32, u32), RgbImage)> = regions
        .par_iter()
        .map(|&(slot, f, region)| {
            let (cond, h, w) = region_conditioning(bundle, f, region, colors, mask_channel)?;
            let x = reverse_chain(model, schedule, &cond, h, w, region_seed(bundle.seed, slot, f));
            Ok((f, region, latent_to_image(&x, h, w)))
        })
        .collect::<Result<_, GenerateError>>()?;

    let mut frames = bundle.masked_canvas.frames.clone();
    for (f, (x0, y0, w, h), patch) in patches {
        let mask: GrayImage = imageops::crop_imm(&bundle.mask.frames[f], x0, y0, w, h).to_image();
        for (x, y, p) in patch.enumerate_pixels() {
            if mask.get_pixel(x, y).0[0] != 0 {
                frames[f].put_pixel(x0 + x, y0 + y, *p);
            }
        }
    }
    preserve_background(&mut frames, bundle);
    Ok(CanvasClip {
        frames,
        layout: bundle.masked_canvas.layout.clone(),
        crops: bundle.masked_canvas.crops.clone(),
    })
}

impl Generator for DdpmGenerator {
    fn name(&self) -> &str {
        "ddpm"
    }

    fn generate(&self, bundle: &ConditioningBundle) -> Result<CanvasClip, GenerateError> {
        ddpm_sample(&self.model, bundle, &self.schedule, &self.palette, self.mask_channel, self.full_canvas)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::denoiser::{DenoiserConfig, Init};
    use crate::generators::schedule::ScheduleConfig;
    use crate::generators::tests::tiny_bundle;

    fn generator() -> DdpmGenerator {
        let cfg = DenoiserConfig {
            in_channels: input_channels(true),
            hidden: 4,
            blocks: 1,
            out_channels: 3,
            embed_dim: 4,
        };
        let model = DenoiserModel::new(cfg, Init::Random { seed: 1, zero_output: false });
        let schedule = NoiseSchedule::from_config(&ScheduleConfig {
            steps: 10,
            ..ScheduleConfig::default()
        })
        .unwrap();
        DdpmGenerator::new(model, schedule, true).unwrap()
    }

    #[test]
    fn deterministic_and_background_preserving() {
        let g = generator();
        let b = tiny_bundle();
        let a = g.generate(&b).unwrap();
        assert_eq!(a, g.generate(&b).unwrap());
        for ((o, s), m) in a.frames[0].pixels().zip(b.masked_canvas.frames[0].pixels()).zip(b.mask.frames[0].pixels()) {
            if m.0[0] == 0 {
                assert_eq!(o, s);
            }
        }
    }

    #[test]
    fn wrong_channel_count_is_rejected() {
        let g = generator();
        assert!(DdpmGenerator::new(g.model, g.schedule, false).is_err());
    }
}
