use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::gemm::gemm;
use super::ReconError;
use crate::math;
use crate::rng::{rng_from, Rng};
use crate::{Slot, SlotGrid, NUM_ACTIVITY_TYPES, SLOTS_PER_DAY};

const K: usize = SLOTS_PER_DAY;
const C: usize = NUM_ACTIVITY_TYPES;
const LN_EPS: f32 = 1e-5;

/// Independently freezable parameter groups, in layout order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerGroup {
    Embedding,
    InputNear,
    Middle,
    OutputHead,
}

impl LayerGroup {
    pub const ALL: [LayerGroup; 4] = [
        LayerGroup::Embedding,
        LayerGroup::InputNear,
        LayerGroup::Middle,
        LayerGroup::OutputHead,
    ];
}

/// Token/channel mixing network over the 96 slots. Each block applies a
/// layer-normed linear mix across slots, then a layer-normed two-layer ReLU
/// MLP across channels, both residual.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub width: usize,
    pub blocks: usize,
    pub hidden: usize,
    pub dropout: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            width: 64,
            blocks: 4,
            hidden: 128,
            dropout: 0.1,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<(), ReconError> {
        if self.width == 0 || self.blocks == 0 || self.hidden == 0 {
            return Err(ReconError::Config(
                "width, blocks and hidden must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ReconError::Config("dropout must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Blocks `[0, near)` form the input-near group; the rest are middle.
    fn near_blocks(&self) -> usize {
        self.blocks.div_ceil(2)
    }
}

/// One named parameter block inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub group: LayerGroup,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamTensor {
    fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.rows * self.cols
    }
}

#[derive(Clone, Debug, Default)]
struct BlockOffsets {
    ln1_g: usize,
    ln1_b: usize,
    wt: usize,
    bt: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Clone, Debug, Default)]
struct Offsets {
    tok: usize,
    slot: usize,
    dow: usize,
    blocks: Vec<BlockOffsets>,
    lnf_g: usize,
    lnf_b: usize,
    wo: usize,
    bo: usize,
}

fn build_layout(arch: &Architecture) -> (Vec<ParamTensor>, Offsets) {
    let d = arch.width;
    let h = arch.hidden;
    let mut layout = Vec::new();
    let mut at = 0;
    let mut push = |name: String, group, rows: usize, cols: usize| {
        layout.push(ParamTensor {
            name,
            group,
            offset: at,
            rows,
            cols,
        });
        at += rows * cols;
        at - rows * cols
    };
    let mut off = Offsets {
        tok: push("embed.token".into(), LayerGroup::Embedding, Slot::VOCAB, d),
        slot: push("embed.slot".into(), LayerGroup::Embedding, K, d),
        dow: push("embed.dow".into(), LayerGroup::Embedding, 7, d),
        ..Offsets::default()
    };
    for i in 0..arch.blocks {
        let g = if i < arch.near_blocks() {
            LayerGroup::InputNear
        } else {
            LayerGroup::Middle
        };
        off.blocks.push(BlockOffsets {
            ln1_g: push(format!("block{i}.ln1.gamma"), g, 1, d),
            ln1_b: push(format!("block{i}.ln1.beta"), g, 1, d),
            wt: push(format!("block{i}.token_mix.weight"), g, K, K),
            bt: push(format!("block{i}.token_mix.bias"), g, 1, K),
            ln2_g: push(format!("block{i}.ln2.gamma"), g, 1, d),
            ln2_b: push(format!("block{i}.ln2.beta"), g, 1, d),
            w1: push(format!("block{i}.mlp.w1"), g, d, h),
            b1: push(format!("block{i}.mlp.b1"), g, 1, h),
            w2: push(format!("block{i}.mlp.w2"), g, h, d),
            b2: push(format!("block{i}.mlp.b2"), g, 1, d),
        });
    }
    off.lnf_g = push("head.ln.gamma".into(), LayerGroup::OutputHead, 1, d);
    off.lnf_b = push("head.ln.beta".into(), LayerGroup::OutputHead, 1, d);
    off.wo = push("head.weight".into(), LayerGroup::OutputHead, d, C);
    off.bo = push("head.bias".into(), LayerGroup::OutputHead, 1, C);
    (layout, off)
}

#[derive(Clone, Debug)]
pub struct Model {
    arch: Architecture,
    layout: Vec<ParamTensor>,
    off: Offsets,
    params: Vec<f32>,
}

struct BlockCache {
    xhat1: Vec<f32>,
    rstd1: Vec<f32>,
    h1: Vec<f32>,
    xhat2: Vec<f32>,
    rstd2: Vec<f32>,
    h2: Vec<f32>,
    r: Vec<f32>,
}

/// Activations kept by a training forward pass. Rows are slot-major:
/// row `k * batch + b` holds slot `k` of sample `b`.
pub(crate) struct Cache {
    batch: usize,
    tokens: Vec<u8>,
    dows: Vec<u8>,
    blocks: Vec<BlockCache>,
    xhatf: Vec<f32>,
    rstdf: Vec<f32>,
    hf: Vec<f32>,
    drop_scale: f32,
    pub(crate) logits: Vec<f32>,
}

fn layer_norm(
    x: &[f32],
    g: &[f32],
    b: &[f32],
    d: usize,
    xhat: &mut [f32],
    rstd: &mut [f32],
    y: &mut [f32],
) {
    for (((row, xh), rs), out) in x
        .chunks_exact(d)
        .zip(xhat.chunks_exact_mut(d))
        .zip(rstd.iter_mut())
        .zip(y.chunks_exact_mut(d))
    {
        let mean = row.iter().sum::<f32>() / d as f32;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d as f32;
        let r = 1.0 / math::sqrtf(var + LN_EPS);
        *rs = r;
        for i in 0..d {
            xh[i] = (row[i] - mean) * r;
            out[i] = xh[i] * g[i] + b[i];
        }
    }
}

/// Accumulates the input gradient into `dx` and parameter gradients into
/// `dg`, `db`.
#[allow(clippy::too_many_arguments)]
fn layer_norm_back(
    dy: &[f32],
    xhat: &[f32],
    rstd: &[f32],
    g: &[f32],
    d: usize,
    dg: &mut [f32],
    db: &mut [f32],
    dx: &mut [f32],
) {
    let mut dxhat = vec![0.0f32; d];
    for (((dyr, xh), &r), dxr) in dy
        .chunks_exact(d)
        .zip(xhat.chunks_exact(d))
        .zip(rstd)
        .zip(dx.chunks_exact_mut(d))
    {
        let (mut s1, mut s2) = (0.0f32, 0.0f32);
        for i in 0..d {
            dxhat[i] = dyr[i] * g[i];
            dg[i] += dyr[i] * xh[i];
            db[i] += dyr[i];
            s1 += dxhat[i];
            s2 += dxhat[i] * xh[i];
        }
        let scale = r / d as f32;
        for i in 0..d {
            dxr[i] += scale * (d as f32 * dxhat[i] - s1 - xh[i] * s2);
        }
    }
}

fn add_row_bias(y: &mut [f32], bias: &[f32]) {
    let n = bias.len();
    for row in y.chunks_exact_mut(n) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn col_sum_into(x: &[f32], cols: usize, out: &mut [f32]) {
    for row in x.chunks_exact(cols) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

impl Model {
    pub fn new(arch: Architecture, seed: u64) -> Result<Self, ReconError> {
        arch.validate()?;
        let (layout, off) = build_layout(&arch);
        let total = layout.last().map_or(0, |t| t.offset + t.rows * t.cols);
        let mut params = vec![0.0f32; total];
        let mut rng = rng_from(seed);
        let d = arch.width as f32;
        let h = arch.hidden as f32;
        for t in &layout {
            let bound = if t.name.ends_with("gamma") {
                params[t.range()].iter_mut().for_each(|v| *v = 1.0);
                continue;
            } else if t.name.starts_with("embed") {
                0.2
            } else if t.name.ends_with("token_mix.weight") {
                0.5 / math::sqrtf(K as f32)
            } else if t.name.ends_with("mlp.w1") {
                math::sqrtf(6.0 / d)
            } else if t.name.ends_with("mlp.w2") {
                0.5 * math::sqrtf(6.0 / (h + d))
            } else if t.name == "head.weight" {
                math::sqrtf(6.0 / (d + C as f32))
            } else {
                continue;
            };
            for v in &mut params[t.range()] {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(Self {
            arch,
            layout,
            off,
            params,
        })
    }

    /// Rebuild a model from an architecture and a saved parameter vector.
    pub fn from_params(arch: Architecture, params: Vec<f32>) -> Result<Self, ReconError> {
        arch.validate()?;
        let (layout, off) = build_layout(&arch);
        let total = layout.last().map_or(0, |t| t.offset + t.rows * t.cols);
        if params.len() != total {
            return Err(ReconError::Shape(format!(
                "architecture needs {total} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self {
            arch,
            layout,
            off,
            params,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layout(&self) -> &[ParamTensor] {
        &self.layout
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Contiguous index range of a group's parameters (possibly empty).
    pub fn group_range(&self, group: LayerGroup) -> Range<usize> {
        let mut lo = usize::MAX;
        let mut hi = 0;
        for t in self.layout.iter().filter(|t| t.group == group) {
            lo = lo.min(t.offset);
            hi = hi.max(t.offset + t.rows * t.cols);
        }
        if lo == usize::MAX {
            0..0
        } else {
            lo..hi
        }
    }

    /// Logits for each grid, laid out `[sample][slot][code]`.
    pub fn logits(&self, grids: &[SlotGrid]) -> Vec<f32> {
        const CHUNK: usize = 256;
        let mut out = Vec::with_capacity(grids.len() * K * C);
        for part in grids.chunks(CHUNK) {
            let cache = self.forward(part, None);
            let b = part.len();
            for s in 0..b {
                for k in 0..K {
                    let r = k * b + s;
                    out.extend_from_slice(&cache.logits[r * C..(r + 1) * C]);
                }
            }
        }
        out
    }

    /// Forward pass keeping activations. Dropout is active iff `rng` is
    /// given.
    pub(crate) fn forward(&self, grids: &[SlotGrid], mut rng: Option<&mut Rng>) -> Cache {
        let b = grids.len();
        let n = K * b;
        let d = self.arch.width;
        let h = self.arch.hidden;
        let p = &self.params;
        let o = &self.off;

        let mut tokens = vec![0u8; n];
        let dows: Vec<u8> = grids.iter().map(|g| g.day_of_week).collect();
        let mut x = vec![0.0f32; n * d];
        for k in 0..K {
            for (s, g) in grids.iter().enumerate() {
                let r = k * b + s;
                let tok = g.slots[k].token();
                tokens[r] = tok as u8;
                let et = &p[o.tok + tok * d..o.tok + (tok + 1) * d];
                let es = &p[o.slot + k * d..o.slot + (k + 1) * d];
                let dw = usize::from(g.day_of_week);
                let ed = &p[o.dow + dw * d..o.dow + (dw + 1) * d];
                for (i, v) in x[r * d..(r + 1) * d].iter_mut().enumerate() {
                    *v = et[i] + es[i] + ed[i];
                }
            }
        }

        let keep = 1.0 - self.arch.dropout as f32;
        let drop_scale = if rng.is_some() && self.arch.dropout > 0.0 {
            1.0 / keep
        } else {
            1.0
        };
        let mut blocks = Vec::with_capacity(self.arch.blocks);
        for bo in &o.blocks {
            let mut xhat1 = vec![0.0; n * d];
            let mut rstd1 = vec![0.0; n];
            let mut h1 = vec![0.0; n * d];
            layer_norm(
                &x,
                &p[bo.ln1_g..bo.ln1_g + d],
                &p[bo.ln1_b..bo.ln1_b + d],
                d,
                &mut xhat1,
                &mut rstd1,
                &mut h1,
            );
            gemm(
                K,
                K,
                b * d,
                1.0,
                &p[bo.wt..bo.wt + K * K],
                false,
                &h1,
                false,
                1.0,
                &mut x,
            );
            for k in 0..K {
                let bias = p[bo.bt + k];
                x[k * b * d..(k + 1) * b * d]
                    .iter_mut()
                    .for_each(|v| *v += bias);
            }

            let mut xhat2 = vec![0.0; n * d];
            let mut rstd2 = vec![0.0; n];
            let mut h2 = vec![0.0; n * d];
            layer_norm(
                &x,
                &p[bo.ln2_g..bo.ln2_g + d],
                &p[bo.ln2_b..bo.ln2_b + d],
                d,
                &mut xhat2,
                &mut rstd2,
                &mut h2,
            );
            let mut r = vec![0.0; n * h];
            gemm(
                n,
                d,
                h,
                1.0,
                &h2,
                false,
                &p[bo.w1..bo.w1 + d * h],
                false,
                0.0,
                &mut r,
            );
            add_row_bias(&mut r, &p[bo.b1..bo.b1 + h]);
            match rng.as_deref_mut() {
                Some(rng) if self.arch.dropout > 0.0 => {
                    for v in r.iter_mut() {
                        *v = if *v > 0.0 && rng.random::<f32>() < keep {
                            *v * drop_scale
                        } else {
                            0.0
                        };
                    }
                }
                _ => r.iter_mut().for_each(|v| *v = v.max(0.0)),
            }
            gemm(
                n,
                h,
                d,
                1.0,
                &r,
                false,
                &p[bo.w2..bo.w2 + h * d],
                false,
                1.0,
                &mut x,
            );
            add_row_bias(&mut x, &p[bo.b2..bo.b2 + d]);
            blocks.push(BlockCache {
                xhat1,
                rstd1,
                h1,
                xhat2,
                rstd2,
                h2,
                r,
            });
        }

        let mut xhatf = vec![0.0; n * d];
        let mut rstdf = vec![0.0; n];
        let mut hf = vec![0.0; n * d];
        layer_norm(
            &x,
            &p[o.lnf_g..o.lnf_g + d],
            &p[o.lnf_b..o.lnf_b + d],
            d,
            &mut xhatf,
            &mut rstdf,
            &mut hf,
        );
        let mut logits = vec![0.0; n * C];
        gemm(
            n,
            d,
            C,
            1.0,
            &hf,
            false,
            &p[o.wo..o.wo + d * C],
            false,
            0.0,
            &mut logits,
        );
        add_row_bias(&mut logits, &p[o.bo..o.bo + C]);

        Cache {
            batch: b,
            tokens,
            dows,
            blocks,
            xhatf,
            rstdf,
            hf,
            drop_scale,
            logits,
        }
    }

    /// Gradient of the loss with respect to every parameter, given the
    /// gradient with respect to the cached (slot-major) logits. `grads` is
    /// overwritten.
    pub(crate) fn backward(&self, cache: &Cache, dlogits: &[f32], grads: &mut [f32]) {
        let b = cache.batch;
        let n = K * b;
        let d = self.arch.width;
        let h = self.arch.hidden;
        let p = &self.params;
        let o = &self.off;
        grads.iter_mut().for_each(|g| *g = 0.0);

        gemm(
            d,
            n,
            C,
            1.0,
            &cache.hf,
            true,
            dlogits,
            false,
            1.0,
            &mut grads[o.wo..o.wo + d * C],
        );
        col_sum_into(dlogits, C, &mut grads[o.bo..o.bo + C]);
        let mut dhf = vec![0.0; n * d];
        gemm(
            n,
            C,
            d,
            1.0,
            dlogits,
            false,
            &p[o.wo..o.wo + d * C],
            true,
            0.0,
            &mut dhf,
        );
        let mut dx = vec![0.0; n * d];
        {
            let (dg, db) = grads[o.lnf_g..o.lnf_b + d].split_at_mut(d);
            layer_norm_back(
                &dhf,
                &cache.xhatf,
                &cache.rstdf,
                &p[o.lnf_g..o.lnf_g + d],
                d,
                dg,
                db,
                &mut dx,
            );
        }

        let mut dr = vec![0.0; n * h];
        let mut dh = vec![0.0; n * d];
        for (bo, bc) in o.blocks.iter().zip(&cache.blocks).rev() {
            gemm(
                h,
                n,
                d,
                1.0,
                &bc.r,
                true,
                &dx,
                false,
                1.0,
                &mut grads[bo.w2..bo.w2 + h * d],
            );
            col_sum_into(&dx, d, &mut grads[bo.b2..bo.b2 + d]);
            gemm(
                n,
                d,
                h,
                1.0,
                &dx,
                false,
                &p[bo.w2..bo.w2 + h * d],
                true,
                0.0,
                &mut dr,
            );
            for (g, &r) in dr.iter_mut().zip(&bc.r) {
                *g = if r > 0.0 { *g * cache.drop_scale } else { 0.0 };
            }
            gemm(
                d,
                n,
                h,
                1.0,
                &bc.h2,
                true,
                &dr,
                false,
                1.0,
                &mut grads[bo.w1..bo.w1 + d * h],
            );
            col_sum_into(&dr, h, &mut grads[bo.b1..bo.b1 + h]);
            gemm(
                n,
                h,
                d,
                1.0,
                &dr,
                false,
                &p[bo.w1..bo.w1 + d * h],
                true,
                0.0,
                &mut dh,
            );
            {
                let (dg, db) = grads[bo.ln2_g..bo.ln2_b + d].split_at_mut(d);
                layer_norm_back(
                    &dh,
                    &bc.xhat2,
                    &bc.rstd2,
                    &p[bo.ln2_g..bo.ln2_g + d],
                    d,
                    dg,
                    db,
                    &mut dx,
                );
            }

            gemm(
                K,
                b * d,
                K,
                1.0,
                &dx,
                false,
                &bc.h1,
                true,
                1.0,
                &mut grads[bo.wt..bo.wt + K * K],
            );
            for k in 0..K {
                grads[bo.bt + k] += dx[k * b * d..(k + 1) * b * d].iter().sum::<f32>();
            }
            gemm(
                K,
                K,
                b * d,
                1.0,
                &p[bo.wt..bo.wt + K * K],
                true,
                &dx,
                false,
                0.0,
                &mut dh,
            );
            {
                let (dg, db) = grads[bo.ln1_g..bo.ln1_b + d].split_at_mut(d);
                layer_norm_back(
                    &dh,
                    &bc.xhat1,
                    &bc.rstd1,
                    &p[bo.ln1_g..bo.ln1_g + d],
                    d,
                    dg,
                    db,
                    &mut dx,
                );
            }
        }

        for k in 0..K {
            for s in 0..b {
                let r = k * b + s;
                let row = &dx[r * d..(r + 1) * d];
                let tok = usize::from(cache.tokens[r]);
                let dw = usize::from(cache.dows[s]);
                for i in 0..d {
                    grads[o.tok + tok * d + i] += row[i];
                    grads[o.slot + k * d + i] += row[i];
                    grads[o.dow + dw * d + i] += row[i];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ActivityCode;

    fn small() -> Architecture {
        Architecture {
            width: 8,
            blocks: 2,
            hidden: 12,
            dropout: 0.0,
        }
    }

    fn grids() -> Vec<SlotGrid> {
        let mut a = SlotGrid::filled(Slot::Act(ActivityCode::HOME), 2);
        for k in 30..60 {
            a.slots[k] = Slot::Act(ActivityCode::WORK);
        }
        for k in 40..50 {
            a.slots[k] = Slot::Masked;
        }
        let mut b = SlotGrid::filled(Slot::Act(ActivityCode::LEISURE), 6);
        b.slots[0] = Slot::Empty;
        vec![a, b]
    }

    #[test]
    fn default_size_and_groups() {
        let m = Model::new(Architecture::default(), 1).unwrap();
        assert!(
            (100_000..130_000).contains(&m.param_count()),
            "{}",
            m.param_count()
        );
        let mut covered = vec![0u8; m.param_count()];
        for g in LayerGroup::ALL {
            let r = m.group_range(g);
            assert!(!r.is_empty());
            covered[r].iter_mut().for_each(|c| *c += 1);
        }
        assert!(covered.iter().all(|&c| c == 1));
        for t in m.layout() {
            assert!(m.group_range(t.group).contains(&t.offset));
        }
    }

    /// Loss = Σ logits · fixed weights, so dL/dlogits is that weight vector.
    fn probe_loss(m: &Model, g: &[SlotGrid], w: &[f32]) -> f64 {
        let c = m.forward(g, None);
        c.logits
            .iter()
            .zip(w)
            .map(|(a, b)| f64::from(*a) * f64::from(*b))
            .sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut m = Model::new(small(), 9).unwrap();
        let g = grids();
        let cache = m.forward(&g, None);
        let w: Vec<f32> = (0..cache.logits.len())
            .map(|i| ((i * 37 % 101) as f32 / 101.0) - 0.5)
            .collect();
        let mut grads = vec![0.0; m.param_count()];
        m.backward(&cache, &w, &mut grads);
        // ReLU kinks make large steps unreliable and f32 noise makes tiny
        // ones unreliable, so a parameter passes if either step agrees, and
        // a few parameters sitting right on a kink are tolerated.
        let mut checked = 0;
        let mut failures = Vec::new();
        for t in m.layout().to_vec() {
            for idx in t.range().step_by(7) {
                let ana = f64::from(grads[idx]);
                let mut errs = Vec::new();
                let ok = [1e-3f32, 3e-4].iter().any(|&step| {
                    let orig = m.params[idx];
                    m.params[idx] = orig + step;
                    let up = probe_loss(&m, &g, &w);
                    m.params[idx] = orig - step;
                    let down = probe_loss(&m, &g, &w);
                    m.params[idx] = orig;
                    let num = (up - down) / (2.0 * f64::from(step));
                    errs.push(num);
                    (num - ana).abs() <= 3e-2 * num.abs().max(ana.abs()) + 1e-2
                });
                if !ok {
                    failures.push(alloc::format!(
                        "{} [{idx}]: numeric {errs:?} analytic {ana}",
                        t.name
                    ));
                }
                checked += 1;
            }
        }
        assert!(checked > 100);
        assert!(failures.len() * 50 <= checked, "{failures:#?}");
    }

    #[test]
    fn logits_layout_matches_forward() {
        let m = Model::new(small(), 2).unwrap();
        let g = grids();
        let flat = m.logits(&g);
        let cache = m.forward(&g, None);
        // Sample 1, slot 5 lives at row 5 * 2 + 1 of the slot-major cache.
        assert_eq!(
            &flat[(96 + 5) * C..(96 + 6) * C],
            &cache.logits[11 * C..12 * C]
        );
        let again = Model::from_params(small(), m.params().to_vec()).unwrap();
        assert_eq!(again.logits(&g), flat);
        assert!(Model::from_params(small(), vec![0.0; 3]).is_err());
    }
}
