//! Masked-latent corruption: ratio schedule, block masks, mask tokens and
//! the L1 reconstruction objective.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::rng::{self, streams};
use crate::scalar::{pairwise_sum, Scalar};
use crate::tensor::{LatentBatch, LatentTensor};

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RatioSchedule {
    ratios: Vec<f64>,
    probs: Vec<f64>,
}

impl Default for RatioSchedule {
    fn default() -> Self {
        RatioSchedule {
            ratios: vec![0.0, 0.25, 0.5, 0.75],
            probs: vec![0.7, 0.1, 0.1, 0.1],
        }
    }
}

impl RatioSchedule {
    pub fn new(ratios: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if ratios.is_empty() || ratios.len() != probs.len() {
            return invalid(format!("{} ratios but {} probabilities", ratios.len(), probs.len()));
        }
        if let Some(r) = ratios.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return invalid(format!("mask ratio {r} outside [0, 1)"));
        }
        if probs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return invalid("probabilities must be finite and non-negative");
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return invalid(format!("probabilities sum to {total}, not 1"));
        }
        Ok(RatioSchedule { ratios, probs })
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// One categorical draw.
    pub fn draw(&self, rng: &mut rng::Rng) -> f64 {
        let dist = WeightedIndex::new(&self.probs).expect("validated weights");
        self.ratios[dist.sample(rng)]
    }
}

pub fn sample_ratio(schedule: &RatioSchedule, seed: u64) -> f64 {
    schedule.draw(&mut rng::stream(seed, streams::MASK_RATIO))
}

/// `n` successive draws from one stream.
pub fn sample_ratios(schedule: &RatioSchedule, n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, streams::MASK_RATIO);
    (0..n).map(|_| schedule.draw(&mut r)).collect()
}

/// Keep/drop flags over a `(T, H, W)` grid, constant within each block.
///
/// Frame 0 is cut into `1×u×u` blocks; frames from 1 on are grouped `u` at a
/// time, so blocks there are `u×u×u`. Blocks that run past an edge are
/// truncated and count as blocks of their own.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskVolume {
    grid: [usize; 3],
    unit: usize,
    keep: Vec<bool>,
    blocks: usize,
    dropped: usize,
}

impl MaskVolume {
    pub fn all_kept(grid: [usize; 3], unit: usize) -> Result<Self> {
        let blocks = block_list(grid, unit)?.len();
        Ok(MaskVolume {
            grid,
            unit,
            keep: vec![true; grid.iter().product()],
            blocks,
            dropped: 0,
        })
    }

    pub fn all_dropped(grid: [usize; 3], unit: usize) -> Result<Self> {
        let mut m = Self::all_kept(grid, unit)?;
        m.keep.iter_mut().for_each(|k| *k = false);
        m.dropped = m.blocks;
        Ok(m)
    }

    pub fn grid(&self) -> [usize; 3] {
        self.grid
    }

    pub fn unit(&self) -> usize {
        self.unit
    }

    #[inline]
    pub fn kept(&self, t: usize, h: usize, w: usize) -> bool {
        self.keep[(t * self.grid[1] + h) * self.grid[2] + w]
    }

    pub fn values(&self) -> &[bool] {
        &self.keep
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn dropped_blocks(&self) -> usize {
        self.dropped
    }

    /// Fraction of blocks dropped.
    pub fn realized_ratio(&self) -> f64 {
        self.dropped as f64 / self.blocks as f64
    }

    /// Fraction of positions dropped.
    pub fn dropped_fraction(&self) -> f64 {
        self.keep.iter().filter(|k| !**k).count() as f64 / self.keep.len() as f64
    }

    /// First position of the block containing `(t, h, w)`.
    pub fn block_origin(&self, t: usize, h: usize, w: usize) -> (usize, usize, usize) {
        block_origin(self.unit, t, h, w)
    }
}

pub fn block_origin(unit: usize, t: usize, h: usize, w: usize) -> (usize, usize, usize) {
    let t0 = if t == 0 { 0 } else { 1 + (t - 1) / unit * unit };
    (t0, h / unit * unit, w / unit * unit)
}

/// Half-open `(t, h, w)` ranges of every block, in scan order.
fn block_list(grid: [usize; 3], unit: usize) -> Result<Vec<[(usize, usize); 3]>> {
    let [t, h, w] = grid;
    if unit == 0 {
        return invalid("mask unit must be at least 1");
    }
    if t == 0 || h < unit || w < unit {
        return Err(Error::Shape(format!("grid {t}x{h}x{w} is smaller than mask unit {unit}")));
    }
    let mut frames = vec![(0, 1)];
    let mut f = 1;
    while f < t {
        frames.push((f, (f + unit).min(t)));
        f += unit;
    }
    let spans = |n: usize| (0..n).step_by(unit).map(move |a| (a, (a + unit).min(n)));
    let mut out = Vec::new();
    for &ft in &frames {
        for sh in spans(h) {
            for sw in spans(w) {
                out.push([ft, sh, sw]);
            }
        }
    }
    Ok(out)
}

/// Drops exactly `round(ratio · n_blocks)` blocks, chosen uniformly without
/// replacement.
pub fn gen_mask(grid: [usize; 3], ratio: f64, unit: usize, seed: u64) -> Result<MaskVolume> {
    gen_mask_with(grid, ratio, unit, &mut rng::stream(seed, streams::MASK_LAYOUT))
}

fn gen_mask_with(grid: [usize; 3], ratio: f64, unit: usize, rng: &mut rng::Rng) -> Result<MaskVolume> {
    if !(0.0..1.0).contains(&ratio) {
        return invalid(format!("mask ratio {ratio} outside [0, 1)"));
    }
    let blocks = block_list(grid, unit)?;
    let n = blocks.len();
    let drop = ((ratio * n as f64).round() as usize).min(n);
    let mut mask = MaskVolume::all_kept(grid, unit)?;
    for b in index::sample(rng, n, drop) {
        let [(t0, t1), (h0, h1), (w0, w1)] = blocks[b];
        for t in t0..t1 {
            for h in h0..h1 {
                for w in w0..w1 {
                    mask.keep[(t * grid[1] + h) * grid[2] + w] = false;
                }
            }
        }
    }
    mask.dropped = drop;
    Ok(mask)
}

/// Replacement vector for dropped positions.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskToken<S>(Vec<S>);

impl<S: Scalar> MaskToken<S> {
    pub fn new(values: Vec<S>) -> Result<Self> {
        if values.is_empty() {
            return invalid("mask token is empty");
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("mask token".into()));
        }
        Ok(MaskToken(values))
    }

    pub fn zeros(channels: usize) -> Self {
        MaskToken(vec![S::zero(); channels])
    }

    pub fn values(&self) -> &[S] {
        &self.0
    }
}

/// `z ⊙ M + (1 − M) ⊙ m`
pub fn apply_mask<S: Scalar>(z: &LatentTensor<S>, mask: &MaskVolume, token: &MaskToken<S>) -> Result<LatentTensor<S>> {
    let d = z.dims();
    if mask.grid != [d.t, d.h, d.w] {
        return Err(Error::Shape(format!(
            "mask grid {:?} does not match tensor {d}",
            mask.grid
        )));
    }
    if token.0.len() != d.c {
        return Err(Error::Shape(format!("token has {} channels, tensor {}", token.0.len(), d.c)));
    }
    let mut out = z.data().to_vec();
    for (pos, u) in out.chunks_exact_mut(d.c).enumerate() {
        if !mask.keep[pos] {
            u.copy_from_slice(&token.0);
        }
    }
    LatentTensor::from_vec(d, out)
}

/// Mean absolute difference over every entry.
pub fn lmr_l1<S: Scalar>(x: &LatentTensor<S>, x_hat: &LatentTensor<S>) -> Result<S> {
    if x.dims() != x_hat.dims() {
        return Err(Error::Shape(format!("{} vs {}", x.dims(), x_hat.dims())));
    }
    let diffs: Vec<S> = x.data().iter().zip(x_hat.data()).map(|(&a, &b)| (a - b).abs()).collect();
    Ok(pairwise_sum(&diffs) / S::from_usize_lossy(diffs.len()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedBatch<S> {
    pub batch: LatentBatch<S>,
    pub masks: Vec<MaskVolume>,
    pub ratio_requested: Vec<f64>,
    pub ratio_realized: Vec<f64>,
    /// L1 between each masked item and its original.
    pub l1: Vec<S>,
}

impl<S: Scalar> MaskedBatch<S> {
    pub fn mean_l1(&self) -> S {
        pairwise_sum(&self.l1) / S::from_usize_lossy(self.l1.len())
    }
}

/// Masks every item with its own ratio draw and reports the perturbation.
/// The decoder is the identity here, so the L1 term measures the injected
/// corruption alone.
pub fn masked_identity_pipeline<S: Scalar>(
    z: &LatentBatch<S>,
    schedule: &RatioSchedule,
    token: &MaskToken<S>,
    unit: usize,
    seed: u64,
) -> Result<MaskedBatch<S>> {
    let d = z.dims();
    let results = z
        .items()
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let ratio = schedule.draw(&mut rng::stream(seed, streams::MASK_RATIO + i as u64));
            let mask = gen_mask_with([d.t, d.h, d.w], ratio, unit, &mut rng::stream(seed, streams::MASK_LAYOUT + i as u64))?;
            let masked = apply_mask(x, &mask, token)?;
            let l1 = lmr_l1(x, &masked)?;
            Ok((masked, mask, ratio, l1))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = MaskedBatch {
        batch: z.clone(),
        masks: Vec::with_capacity(results.len()),
        ratio_requested: Vec::with_capacity(results.len()),
        ratio_realized: Vec::with_capacity(results.len()),
        l1: Vec::with_capacity(results.len()),
    };
    let mut items = Vec::with_capacity(results.len());
    for (masked, mask, ratio, l1) in results {
        items.push(masked);
        out.ratio_realized.push(mask.realized_ratio());
        out.masks.push(mask);
        out.ratio_requested.push(ratio);
        out.l1.push(l1);
    }
    out.batch = LatentBatch::new(items)?;
    Ok(out)
}
