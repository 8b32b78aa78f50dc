//! Training and held-out evaluation of the sinogram U-Net.
//!
//! Each pair is scaled by the maximum of its noisy input sinogram; the clean
//! target is divided by the same number so the network output can be
//! returned to intensity units with the input's scale alone.
//!
//! Randomness: the train/validation split and the per-epoch batch order come
//! from the shuffle stream of the configured seed; weights come from the
//! weight-init stream. Per-sample work may run on several threads but every
//! reduction is summed in sample order, so runs are bit-reproducible
//! regardless of thread count.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{SinoGeometry, Sinogram};
use crate::io::{self, Manifest};
use crate::metrics::MetricsReport;
use crate::nn::{Adam, Tape, Tensor};
use crate::recon::{osem_with, projector_for, ReconConfig};
use crate::rng::{self, Stream};
use crate::sim::dataset::NoiseSpec;
use crate::sim::noise::NoiseLevel;
use crate::unet::{UNet, UNetConfig};

/// Angle up-sampling factor between network input and output.
pub const ANGLE_FACTOR: usize = 4;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.json";

/// Divides `sino` by its maximum. Returns the scaled sinogram and the scale.
pub fn normalize(sino: &Sinogram) -> Result<(Sinogram, f32)> {
    let scale = sino.max();
    if !(scale > 0.0) {
        return Err(Error::ZeroMass("normalize"));
    }
    let data = sino.data().iter().map(|&v| v / scale).collect();
    Ok((Sinogram::new(*sino.geometry(), data)?, scale))
}

pub fn denormalize(sino: &Sinogram, scale: f32) -> Result<Sinogram> {
    Sinogram::new(*sino.geometry(), sino.data().iter().map(|&v| v * scale).collect())
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub manifest: PathBuf,
    /// Receives the checkpoint and history; nothing is written when `None`.
    pub output_dir: Option<PathBuf>,
    /// Fraction of pairs used for training; the rest validate.
    pub split: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub base_channels: usize,
    pub bottleneck_channels: usize,
    /// Restricts training to one noise level, or uses all pairs.
    pub noise: NoiseSpec,
    /// Stops after this many optimiser steps in total.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from(crate::sim::dataset::MANIFEST_FILE),
            output_dir: None,
            split: 0.9,
            batch_size: 16,
            epochs: 10,
            learning_rate: 1e-3,
            seed: 0,
            base_channels: 32,
            bottleneck_channels: 512,
            noise: NoiseSpec::Mixed,
            max_steps: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl TrainConfig {
    /// Parses `key = value` lines; `#` starts a comment. Relative paths are
    /// resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut bottleneck = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "manifest" => cfg.manifest = base_dir.join(value),
                "output_dir" => cfg.output_dir = Some(base_dir.join(value)),
                "split" => cfg.split = parse_value(key, value)?,
                "batch_size" => cfg.batch_size = parse_value(key, value)?,
                "epochs" => cfg.epochs = parse_value(key, value)?,
                "learning_rate" => cfg.learning_rate = parse_value(key, value)?,
                "seed" => cfg.seed = parse_value(key, value)?,
                "base_channels" => cfg.base_channels = parse_value(key, value)?,
                "bottleneck_channels" => bottleneck = Some(parse_value(key, value)?),
                "noise" => cfg.noise = value.parse()?,
                "max_steps" => cfg.max_steps = Some(parse_value(key, value)?),
                "loss" if value == "mse" => {}
                "normalization" if value == "input-max" => {}
                _ => {
                    return Err(Error::Config(format!(
                        "line {}: unsupported setting `{key} = {value}`",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.bottleneck_channels = bottleneck.unwrap_or(16 * cfg.base_channels);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".to_owned()));
        }
        if !(self.split > 0.0 && self.split <= 1.0) {
            return Err(Error::Config(format!("split must be in (0, 1], got {}", self.split)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".to_owned()));
        }
        Ok(())
    }

    /// Network configuration for inputs of `in_angles x detector_bins`.
    pub fn model_config(&self, in_angles: usize, detector_bins: usize) -> UNetConfig {
        UNetConfig {
            base_channels: self.base_channels,
            bottleneck_channels: self.bottleneck_channels,
            in_angles,
            out_angles: ANGLE_FACTOR * in_angles,
            detector_bins,
            ..UNetConfig::default()
        }
    }
}

// ---------------------------------------------------------------------------
// data

/// One normalised training example.
#[derive(Debug, Clone)]
pub struct Sample {
    pub input: Vec<f32>,
    pub target: Vec<f32>,
    pub scale: f32,
}

/// In-memory training set with uniform extents.
#[derive(Debug, Clone)]
pub struct Dataset {
    samples: Vec<Sample>,
    in_angles: usize,
    bins: usize,
}

impl Dataset {
    /// Builds from `(noisy sparse input, clean dense target)` pairs.
    pub fn from_pairs(pairs: &[(Sinogram, Sinogram)]) -> Result<Self> {
        let Some((first, _)) = pairs.first() else {
            return Err(Error::EmptyDataset);
        };
        let (in_angles, bins) = (first.n_angles(), first.n_bins());
        let mut samples = Vec::with_capacity(pairs.len());
        for (i, (input, target)) in pairs.iter().enumerate() {
            if input.n_angles() != in_angles || input.n_bins() != bins {
                return Err(Error::Manifest(format!(
                    "pair {i}: input is {}x{}, expected {in_angles}x{bins}",
                    input.n_angles(),
                    input.n_bins()
                )));
            }
            if target.n_angles() != ANGLE_FACTOR * in_angles || target.n_bins() != bins {
                return Err(Error::Manifest(format!(
                    "pair {i}: target is {}x{}, expected {}x{bins}",
                    target.n_angles(),
                    target.n_bins(),
                    ANGLE_FACTOR * in_angles
                )));
            }
            let (input, scale) = normalize(input)?;
            samples.push(Sample {
                input: input.data().to_vec(),
                target: target.data().iter().map(|&v| v / scale).collect(),
                scale,
            });
        }
        Ok(Self {
            samples,
            in_angles,
            bins,
        })
    }

    /// Loads every manifest pair whose noise level matches `noise`.
    pub fn load(manifest: &Manifest, noise: NoiseSpec) -> Result<Self> {
        let entries = select_entries(manifest, noise)?;
        let load_one = |e: &&io::ManifestEntry| -> Result<(Sinogram, Sinogram)> {
            Ok((
                io::read_sinogram(manifest.resolve(&e.input))?,
                io::read_sinogram(manifest.resolve(&e.target))?,
            ))
        };
        #[cfg(feature = "parallel")]
        let pairs: Result<Vec<_>> = {
            use rayon::prelude::*;
            entries.par_iter().map(load_one).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let pairs: Result<Vec<_>> = entries.iter().map(load_one).collect();
        Self::from_pairs(&pairs?)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(angles, bins)` of the network input.
    pub fn input_dims(&self) -> (usize, usize) {
        (self.in_angles, self.bins)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    fn batch(&self, indices: &[usize]) -> (Tensor<f32>, Tensor<f32>) {
        let (a, d) = (self.in_angles, self.bins);
        let mut x = Vec::with_capacity(indices.len() * a * d);
        let mut t = Vec::with_capacity(indices.len() * ANGLE_FACTOR * a * d);
        for &i in indices {
            x.extend_from_slice(&self.samples[i].input);
            t.extend_from_slice(&self.samples[i].target);
        }
        let b = indices.len();
        (
            Tensor::new(&[b, 1, a, d], x).expect("batch extents match"),
            Tensor::new(&[b, 1, ANGLE_FACTOR * a, d], t).expect("batch extents match"),
        )
    }
}

fn select_entries(manifest: &Manifest, noise: NoiseSpec) -> Result<Vec<&io::ManifestEntry>> {
    let entries: Vec<_> = manifest
        .entries
        .iter()
        .filter(|e| match noise {
            NoiseSpec::Mixed => true,
            NoiseSpec::Fixed(level) => e.noise == level.label(),
        })
        .collect();
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(entries)
}

// ---------------------------------------------------------------------------
// training

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// Sinogram-space metrics of the validation outputs.
    pub val_metrics: Option<MetricsReport>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Loss of every optimiser step in order.
    pub step_losses: Vec<f64>,
    pub best_epoch: usize,
    /// Validation loss of the kept checkpoint (training loss when there is
    /// no validation split).
    pub best_loss: f64,
    pub train_pairs: usize,
    pub val_pairs: usize,
    pub wall_clock_seconds: f64,
}

impl TrainHistory {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("history serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid history: {e}")))
    }
}

/// Progress notifications emitted during training.
#[derive(Debug)]
pub enum Progress<'a> {
    Step { epoch: usize, step: usize, loss: f64 },
    Epoch(&'a EpochRecord),
}

/// Train/validation index split for `n` items.
pub fn split_indices(n: usize, split: f64, rng: &mut Stream) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let n_train = ((n as f64 * split).round() as usize).clamp(1, n.max(1));
    let val = order.split_off(n_train.min(n));
    (order, val)
}

/// One optimiser step on a batch; returns the batch loss before the update.
pub fn train_step(model: &mut UNet, adam: &Adam, input: Tensor<f32>, target: Tensor<f32>) -> Result<f64> {
    let mut tape = Tape::new();
    let x = tape.leaf(input, false);
    let t = tape.leaf(target, false);
    let trace = model.forward_tape(&mut tape, x, true)?;
    let loss = tape.mse_loss(trace.output, t)?;
    let value = tape.value(loss).data()[0] as f64;
    if !value.is_finite() {
        return Err(Error::Internal(format!("training loss became {value}")));
    }
    let mut grads = tape.backward(loss)?;
    drop(tape);
    model.set_grads(&trace, &mut grads)?;
    adam.step(model.params_mut())
        .map(|_| value)
}

/// Mean per-sample MSE and mean sinogram metrics over `indices`.
pub fn validate(model: &UNet, data: &Dataset, indices: &[usize], batch: usize) -> Result<(f64, MetricsReport)> {
    let (a, d) = data.input_dims();
    let out_len = ANGLE_FACTOR * a * d;
    let mut losses = Vec::with_capacity(indices.len());
    let mut reports = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(batch.max(1)) {
        let (x, _) = data.batch(chunk);
        let y = model.forward_linear(&x)?;
        for (k, &i) in chunk.iter().enumerate() {
            let out = &y.data()[k * out_len..(k + 1) * out_len];
            let target = &data.samples[i].target;
            let mse: f64 = out
                .iter()
                .zip(target)
                .map(|(&p, &t)| (p as f64 - t as f64).powi(2))
                .sum::<f64>()
                / out_len as f64;
            losses.push(mse);
            let clamped: Vec<f32> = out.iter().map(|v| v.max(0.0)).collect();
            reports.push(score(target, &clamped, d, ANGLE_FACTOR * a)?);
        }
    }
    let loss = losses.iter().sum::<f64>() / losses.len().max(1) as f64;
    let report = MetricsReport::mean(&reports).ok_or(Error::EmptyDataset)?;
    Ok((loss, report))
}

fn score(reference: &[f32], estimate: &[f32], width: usize, height: usize) -> Result<MetricsReport> {
    let max = reference.iter().copied().fold(0.0f32, f32::max) as f64;
    if !(max > 0.0) {
        return Err(Error::ReferenceZero);
    }
    let r: Vec<f64> = reference.iter().map(|&v| v as f64 / max).collect();
    let e: Vec<f64> = estimate.iter().map(|&v| v as f64 / max).collect();
    MetricsReport::compute_normalized(&r, &e, width, height)
}

/// Result of [`train_on`]: the best model seen and the run history.
#[derive(Debug)]
pub struct TrainOutcome {
    pub model: UNet,
    pub history: TrainHistory,
}

/// Trains on an in-memory dataset. The returned model is the one with the
/// lowest validation loss; when `cfg.output_dir` is set it is also written
/// there each time it improves, together with the history.
pub fn train_on(cfg: &TrainConfig, data: &Dataset, progress: &mut dyn FnMut(Progress)) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (a, d) = data.input_dims();
    let mut model = UNet::new(cfg.model_config(a, d), cfg.seed)?;
    let adam = Adam::with_lr(cfg.learning_rate);
    let mut rng = Stream::new(cfg.seed, rng::SHUFFLE_STREAM);
    let (train_idx, val_idx) = split_indices(data.len(), cfg.split, &mut rng);
    if let Some(dir) = &cfg.output_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let started = Instant::now();
    let mut history = TrainHistory {
        epochs: Vec::with_capacity(cfg.epochs),
        step_losses: Vec::new(),
        best_epoch: 0,
        best_loss: f64::INFINITY,
        train_pairs: train_idx.len(),
        val_pairs: val_idx.len(),
        wall_clock_seconds: 0.0,
    };
    let mut best = model.clone();
    let max_steps = cfg.max_steps.unwrap_or(usize::MAX);
    for epoch in 1..=cfg.epochs {
        if history.step_losses.len() >= max_steps {
            break;
        }
        let epoch_start = Instant::now();
        let mut order = train_idx.clone();
        rng.shuffle(&mut order);
        let mut total = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(cfg.batch_size) {
            if history.step_losses.len() >= max_steps {
                break;
            }
            let (x, t) = data.batch(chunk);
            let loss = train_step(&mut model, &adam, x, t)?;
            history.step_losses.push(loss);
            total += loss;
            steps += 1;
            progress(Progress::Step {
                epoch,
                step: history.step_losses.len(),
                loss,
            });
        }
        let train_loss = total / steps.max(1) as f64;
        let (val_loss, val_metrics) = if val_idx.is_empty() {
            (None, None)
        } else {
            let (l, m) = validate(&model, data, &val_idx, cfg.batch_size)?;
            (Some(l), Some(m))
        };
        let record = EpochRecord {
            epoch,
            steps,
            train_loss,
            val_loss,
            val_metrics,
            seconds: epoch_start.elapsed().as_secs_f64(),
        };
        let criterion = val_loss.unwrap_or(train_loss);
        if criterion < history.best_loss {
            history.best_loss = criterion;
            history.best_epoch = epoch;
            best = model.clone();
            if let Some(dir) = &cfg.output_dir {
                best.save(dir.join(CHECKPOINT_FILE))?;
            }
        }
        progress(Progress::Epoch(&record));
        history.epochs.push(record);
        history.wall_clock_seconds = started.elapsed().as_secs_f64();
        if let Some(dir) = &cfg.output_dir {
            io::write_file(&dir.join(HISTORY_FILE), history.to_json().as_bytes())?;
        }
    }
    Ok(TrainOutcome { model: best, history })
}

/// Loads the manifest named in `cfg` and trains on it.
pub fn train(cfg: &TrainConfig, progress: &mut dyn FnMut(Progress)) -> Result<TrainOutcome> {
    let manifest = Manifest::read(&cfg.manifest)?;
    let data = Dataset::load(&manifest, cfg.noise)?;
    train_on(cfg, &data, progress)
}

// ---------------------------------------------------------------------------
// evaluation

/// Anything that maps a sparse-view sinogram to a dense-view one.
pub trait Interpolator: Sync {
    fn interpolate(&self, input: &Sinogram) -> Result<Sinogram>;
}

/// Geometry of the dense-view sinogram matching `sparse`.
pub fn dense_geometry(sparse: &SinoGeometry) -> SinoGeometry {
    SinoGeometry {
        n_angles: ANGLE_FACTOR * sparse.n_angles,
        ..*sparse
    }
}

impl Interpolator for UNet {
    fn interpolate(&self, input: &Sinogram) -> Result<Sinogram> {
        let (norm, scale) = normalize(input)?;
        let y = self.forward(&norm.to_tensor(1.0))?;
        Sinogram::from_tensor(&y, dense_geometry(input.geometry()), scale)
    }
}

/// Baseline: every dense view copies the nearest measured view (ties go to
/// the earlier one). Full-circle scans wrap around; other ranges clamp.
#[derive(Debug, Clone, Copy, Default)]
pub struct NearestAngle;

impl Interpolator for NearestAngle {
    fn interpolate(&self, input: &Sinogram) -> Result<Sinogram> {
        let g = dense_geometry(input.geometry());
        let n = input.n_angles();
        let wraps = (input.geometry().angular_range_deg - 360.0).abs() < 1e-9;
        let mut data = Vec::with_capacity(g.n_angles * g.n_bins);
        for i in 0..g.n_angles {
            let k = (i + 1) / ANGLE_FACTOR;
            let k = if wraps { k % n } else { k.min(n - 1) };
            data.extend_from_slice(input.row(k));
        }
        Sinogram::new(g, data)
    }
}

/// Adapts a closure into an [`Interpolator`].
pub struct FromFn<F>(pub F);

impl<F> Interpolator for FromFn<F>
where
    F: Fn(&Sinogram) -> Result<Sinogram> + Sync,
{
    fn interpolate(&self, input: &Sinogram) -> Result<Sinogram> {
        (self.0)(input)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// Only evaluate this level; all levels present otherwise.
    pub noise: Option<NoiseLevel>,
    /// OSEM settings for the image-space comparison; skipped when `None`.
    pub recon: Option<ReconConfig>,
    /// Evaluate at most this many pairs per level.
    pub limit: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            noise: None,
            recon: Some(ReconConfig::default()),
            limit: None,
        }
    }
}

/// Aggregated results for one noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub noise: NoiseLevel,
    pub pairs: usize,
    /// Model output vs clean dense target.
    pub proposed: MetricsReport,
    /// Nearest-angle replication of the input vs clean dense target.
    pub baseline: MetricsReport,
    /// OSEM of the noisy sparse input vs phantom.
    pub standard_recon: Option<MetricsReport>,
    /// OSEM of the model output vs phantom.
    pub proposed_recon: Option<MetricsReport>,
}

struct PairScores {
    proposed: MetricsReport,
    baseline: MetricsReport,
    recon: Option<(MetricsReport, MetricsReport)>,
}

fn score_pair(model: &dyn Interpolator, manifest: &Manifest, e: &io::ManifestEntry, recon: Option<&ReconConfig>) -> Result<PairScores> {
    let input = io::read_sinogram(manifest.resolve(&e.input))?;
    let target = io::read_sinogram(manifest.resolve(&e.target))?;
    let output = model.interpolate(&input)?;
    if output.geometry() != target.geometry() {
        return Err(Error::CheckpointMismatch(format!(
            "pair {}: model produced {}x{}, target is {}x{}",
            e.index,
            output.n_angles(),
            output.n_bins(),
            target.n_angles(),
            target.n_bins()
        )));
    }
    let baseline = NearestAngle.interpolate(&input)?;
    let recon = match recon {
        None => None,
        Some(cfg) => {
            let phantom = io::read_image(manifest.resolve(&e.phantom))?;
            let standard = osem_with(&projector_for(&input)?, &input, cfg)?;
            let proposed = osem_with(&projector_for(&output)?, &output, cfg)?;
            Some((
                MetricsReport::compute(&phantom, &standard)?,
                MetricsReport::compute(&phantom, &proposed)?,
            ))
        }
    };
    Ok(PairScores {
        proposed: MetricsReport::compute(&target, &output)?,
        baseline: MetricsReport::compute(&target, &baseline)?,
        recon,
    })
}

/// Scores `model` on the manifest pairs, one row per noise level in
/// low, medium, high order. The model is only read.
pub fn evaluate(model: &dyn Interpolator, manifest: &Manifest, opts: &EvalOptions) -> Result<Vec<EvalRow>> {
    let mut rows = Vec::new();
    for level in NoiseLevel::ALL {
        if opts.noise.is_some_and(|n| n != level) {
            continue;
        }
        let mut entries: Vec<&io::ManifestEntry> =
            manifest.entries.iter().filter(|e| e.noise == level.label()).collect();
        if let Some(limit) = opts.limit {
            entries.truncate(limit);
        }
        if entries.is_empty() {
            continue;
        }
        let one = |e: &&io::ManifestEntry| score_pair(model, manifest, e, opts.recon.as_ref());
        #[cfg(feature = "parallel")]
        let scores: Result<Vec<PairScores>> = {
            use rayon::prelude::*;
            entries.par_iter().map(one).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let scores: Result<Vec<PairScores>> = entries.iter().map(one).collect();
        let scores = scores?;

        let mean = |f: &dyn Fn(&PairScores) -> Option<MetricsReport>| -> Option<MetricsReport> {
            let v: Option<Vec<_>> = scores.iter().map(f).collect();
            v.and_then(|v| MetricsReport::mean(&v)).map(|r| r.with_noise(level.label()))
        };
        rows.push(EvalRow {
            noise: level,
            pairs: scores.len(),
            proposed: mean(&|s| Some(s.proposed.clone())).ok_or(Error::EmptyDataset)?,
            baseline: mean(&|s| Some(s.baseline.clone())).ok_or(Error::EmptyDataset)?,
            standard_recon: mean(&|s| s.recon.as_ref().map(|r| r.0.clone())),
            proposed_recon: mean(&|s| s.recon.as_ref().map(|r| r.1.clone())),
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(rows)
}

fn title(level: NoiseLevel) -> String {
    let l = level.label();
    l[..1].to_uppercase() + &l[1..]
}

/// Sinogram-space and image-space tables for evaluation rows.
pub fn format_tables(rows: &[EvalRow]) -> String {
    let mut s = String::new();
    let proposed: Vec<_> = rows.iter().map(|r| (title(r.noise), r.proposed.clone())).collect();
    let baseline: Vec<_> = rows.iter().map(|r| (title(r.noise), r.baseline.clone())).collect();
    let _ = writeln!(s, "Denoised sinograms (proposed)");
    s.push_str(&crate::metrics::denoise_table(&proposed));
    let _ = writeln!(s, "\nNearest-angle baseline");
    s.push_str(&crate::metrics::denoise_table(&baseline));
    let recon: Vec<_> = rows
        .iter()
        .filter_map(|r| Some((title(r.noise), r.standard_recon.clone()?, r.proposed_recon.clone()?)))
        .collect();
    if !recon.is_empty() {
        let _ = writeln!(s, "\nReconstruction (OSEM)");
        s.push_str(&crate::metrics::recon_table(&recon));
    }
    s
}
