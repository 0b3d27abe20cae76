//! Small convolutional residual noise predictor in f64.
//!
//! Activations are `(H·W, C)` matrices; a 3×3 zero-padded convolution is an
//! im2col gather followed by one matrix product. Every block adds a
//! timestep-dependent per-channel bias before its ReLU:
//!
//! ```text
//! h0      = conv_in(x)
//! h{b+1}  = h{b} + conv_b(relu(h{b} + E_b·e(t) + c_b))
//! out     = conv_out(relu(h_last))
//! ```
//!
//! All parameters live in one flat vector so the optimiser, the checkpoint
//! format and the finite-difference check share a single view of them.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub in_channels: usize,
    pub hidden: usize,
    pub blocks: usize,
    pub out_channels: usize,
    pub embed_dim: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            in_channels: 16,
            hidden: 32,
            blocks: 3,
            out_channels: 3,
            embed_dim: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slot {
    offset: usize,
    rows: usize,
    cols: usize,
}

impl Slot {
    fn len(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct BlockSlots {
    emb_w: Slot,
    emb_b: Slot,
    conv_w: Slot,
    conv_b: Slot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Slots {
    in_w: Slot,
    in_b: Slot,
    blocks: Vec<BlockSlots>,
    out_w: Slot,
    out_b: Slot,
    total: usize,
}

impl Slots {
    fn new(c: &DenoiserConfig) -> Self {
        let mut offset = 0;
        let mut take = |rows: usize, cols: usize| {
            let s = Slot { offset, rows, cols };
            offset += rows * cols;
            s
        };
        let in_w = take(9 * c.in_channels, c.hidden);
        let in_b = take(1, c.hidden);
        let blocks = (0..c.blocks)
            .map(|_| BlockSlots {
                emb_w: take(c.embed_dim, c.hidden),
                emb_b: take(1, c.hidden),
                conv_w: take(9 * c.hidden, c.hidden),
                conv_b: take(1, c.hidden),
            })
            .collect();
        let out_w = take(9 * c.hidden, c.out_channels);
        let out_b = take(1, c.out_channels);
        Slots {
            in_w,
            in_b,
            blocks,
            out_w,
            out_b,
            total: offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    /// He-normal convolutions, zero biases. `zero_output` clears the last
    /// layer so the untrained model predicts zero noise.
    Random { seed: u64, zero_output: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserModel {
    pub config: DenoiserConfig,
    pub params: Vec<f64>,
    slots: Slots,
}

/// Sinusoidal embedding of step `t`.
pub fn timestep_embedding(t: usize, dim: usize) -> Array1<f64> {
    let half = dim / 2;
    let mut e = Array1::zeros(dim);
    for k in 0..half {
        let freq = (-(1000f64).ln() * k as f64 / half as f64).exp();
        let a = t as f64 * freq;
        e[k] = a.sin();
        e[half + k] = a.cos();
    }
    e
}

/// `(H·W, C)` to `(H·W, 9C)` neighbourhood matrix, zero outside the grid.
pub fn im2col(x: &Array2<f64>, h: usize, w: usize) -> Array2<f64> {
    let c = x.ncols();
    let mut cols = Array2::zeros((h * w, 9 * c));
    for y in 0..h {
        for xx in 0..w {
            let p = y * w + xx;
            for k in 0..9 {
                let (dy, dx) = (k / 3, k % 3);
                let (sy, sx) = (y as isize + dy as isize - 1, xx as isize + dx as isize - 1);
                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                    continue;
                }
                let q = sy as usize * w + sx as usize;
                cols.slice_mut(s![p, k * c..(k + 1) * c]).assign(&x.row(q));
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
pub fn col2im(cols: &Array2<f64>, h: usize, w: usize, c: usize) -> Array2<f64> {
    let mut x = Array2::zeros((h * w, c));
    for y in 0..h {
        for xx in 0..w {
            let p = y * w + xx;
            for k in 0..9 {
                let (dy, dx) = (k / 3, k % 3);
                let (sy, sx) = (y as isize + dy as isize - 1, xx as isize + dx as isize - 1);
                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                    continue;
                }
                let q = sy as usize * w + sx as usize;
                let mut row = x.row_mut(q);
                row += &cols.slice(s![p, k * c..(k + 1) * c]);
            }
        }
    }
    x
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

struct Cache {
    cols_in: Array2<f64>,
    pre: Vec<Array2<f64>>,
    cols_block: Vec<Array2<f64>>,
    last: Array2<f64>,
    cols_out: Array2<f64>,
    emb: Array1<f64>,
}

impl DenoiserModel {
    pub fn new(config: DenoiserConfig, init: Init) -> Self {
        let slots = Slots::new(&config);
        let mut params = vec![0.0; slots.total];
        if let Init::Random { seed, zero_output } = init {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut fill = |slot: Slot, std: f64, params: &mut Vec<f64>| {
                let n = Normal::new(0.0, std).expect("positive std");
                for v in &mut params[slot.offset..slot.offset + slot.len()] {
                    *v = n.sample(&mut rng);
                }
            };
            fill(slots.in_w, (2.0 / slots.in_w.rows as f64).sqrt(), &mut params);
            for b in &slots.blocks {
                fill(b.emb_w, (1.0 / config.embed_dim as f64).sqrt(), &mut params);
                fill(b.conv_w, (2.0 / b.conv_w.rows as f64).sqrt(), &mut params);
            }
            if !zero_output {
                fill(slots.out_w, (1.0 / slots.out_w.rows as f64).sqrt(), &mut params);
            }
        }
        DenoiserModel { config, params, slots }
    }

    pub fn from_params(config: DenoiserConfig, params: Vec<f64>) -> Result<Self, String> {
        let slots = Slots::new(&config);
        if params.len() != slots.total {
            return Err(format!("expected {} parameters, got {}", slots.total, params.len()));
        }
        Ok(DenoiserModel { config, params, slots })
    }

    pub fn parameter_count(&self) -> usize {
        self.slots.total
    }

    fn mat(&self, s: Slot) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((s.rows, s.cols), &self.params[s.offset..s.offset + s.len()]).expect("slot shape")
    }

    fn vec(&self, s: Slot) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[s.offset..s.offset + s.len()])
    }

    fn check_input(&self, x: &Array2<f64>, h: usize, w: usize) {
        assert_eq!(x.nrows(), h * w, "input rows must equal h·w");
        assert_eq!(x.ncols(), self.config.in_channels, "input channel count");
    }

    fn forward_cached(&self, x: &Array2<f64>, h: usize, w: usize, t: usize) -> (Array2<f64>, Cache) {
        self.check_input(x, h, w);
        let emb = timestep_embedding(t, self.config.embed_dim);
        let cols_in = im2col(x, h, w);
        let mut state = cols_in.dot(&self.mat(self.slots.in_w)) + &self.vec(self.slots.in_b);
        let mut pre = Vec::with_capacity(self.slots.blocks.len());
        let mut cols_block = Vec::with_capacity(self.slots.blocks.len());
        for b in &self.slots.blocks {
            let tau = emb.dot(&self.mat(b.emb_w)) + &self.vec(b.emb_b);
            let p = &state + &tau;
            let cols = im2col(&relu(&p), h, w);
            state = state + cols.dot(&self.mat(b.conv_w)) + &self.vec(b.conv_b);
            pre.push(p);
            cols_block.push(cols);
        }
        let cols_out = im2col(&relu(&state), h, w);
        let out = cols_out.dot(&self.mat(self.slots.out_w)) + &self.vec(self.slots.out_b);
        (
            out,
            Cache {
                cols_in,
                pre,
                cols_block,
                last: state,
                cols_out,
                emb,
            },
        )
    }

    /// Predicted noise, `(H·W, out_channels)`.
    pub fn forward(&self, x: &Array2<f64>, h: usize, w: usize, t: usize) -> Array2<f64> {
        self.forward_cached(x, h, w, t).0
    }

    /// Mean squared error against `target`.
    pub fn loss(&self, x: &Array2<f64>, h: usize, w: usize, t: usize, target: &Array2<f64>) -> f64 {
        let out = self.forward(x, h, w, t);
        (&out - target).mapv(|v| v * v).mean().unwrap_or(0.0)
    }

    /// Loss and its gradient with respect to every parameter, in the layout
    /// of [`DenoiserModel::params`].
    pub fn loss_and_grad(&self, x: &Array2<f64>, h: usize, w: usize, t: usize, target: &Array2<f64>) -> (f64, Vec<f64>) {
        let (out, cache) = self.forward_cached(x, h, w, t);
        let diff = &out - target;
        let n = diff.len() as f64;
        let loss = diff.mapv(|v| v * v).sum() / n;
        let d_out = diff * (2.0 / n);

        let mut grad = vec![0.0; self.slots.total];
        let put = |slot: Slot, g: &Array2<f64>, grad: &mut Vec<f64>| {
            debug_assert_eq!(g.len(), slot.len());
            for (dst, v) in grad[slot.offset..slot.offset + slot.len()].iter_mut().zip(g.iter()) {
                *dst += v;
            }
        };
        let row_sum = |g: &Array2<f64>| g.sum_axis(Axis(0)).insert_axis(Axis(0));
        let hid = self.config.hidden;

        put(self.slots.out_w, &cache.cols_out.t().dot(&d_out), &mut grad);
        put(self.slots.out_b, &row_sum(&d_out), &mut grad);
        let d_act = col2im(&d_out.dot(&self.mat(self.slots.out_w).t()), h, w, hid);
        let mut d_state = d_act * &cache.last.mapv(|v| (v > 0.0) as u8 as f64);

        for (i, b) in self.slots.blocks.iter().enumerate().rev() {
            put(b.conv_w, &cache.cols_block[i].t().dot(&d_state), &mut grad);
            put(b.conv_b, &row_sum(&d_state), &mut grad);
            let d_act = col2im(&d_state.dot(&self.mat(b.conv_w).t()), h, w, hid);
            let d_pre = d_act * &cache.pre[i].mapv(|v| (v > 0.0) as u8 as f64);
            let d_tau = d_pre.sum_axis(Axis(0));
            let emb_col = cache.emb.view().insert_axis(Axis(1));
            put(b.emb_w, &emb_col.dot(&d_tau.view().insert_axis(Axis(0))), &mut grad);
            put(b.emb_b, &d_tau.insert_axis(Axis(0)), &mut grad);
            d_state = d_state + d_pre;
        }

        put(self.slots.in_w, &cache.cols_in.t().dot(&d_state), &mut grad);
        put(self.slots.in_b, &row_sum(&d_state), &mut grad);
        (loss, grad)
    }
}
