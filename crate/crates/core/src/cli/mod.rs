//! The command implementations behind the `cathseg` binary.
//!
//! Every command validates its configuration and inputs before it creates or
//! writes anything, and every output file is written atomically.

mod config;

pub use config::{EvaluateConfig, Paths, RunConfig, TrainingConfig};

use crate::centerline::{extract_centerline, save_overlay, Centerline};
use crate::error::Error;
use crate::fsutil::write_atomic;
use crate::imagecore::save_probability;
use crate::metrics::{summarize, write_report_csv, EvaluationSummary, FrameResult};
use crate::nn::{
    encode_checkpoint, load_checkpoint, save_checkpoint, train, CheckpointMeta, Model, Sample, Sgd, TrainOptions,
};
use crate::synthgen::{generate_dataset, list_sequences, load_sequence, Manifest, SequenceData};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Failure of a command, grouped by process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("unmatched frames: {}", .0.join(", "))]
    Mismatch(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Mismatch(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Image { .. } => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Reads the configuration at `path`, or the defaults without one.
pub fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).map_err(|e| CliError::Usage(e.to_string())),
        None => Ok(RunConfig::default()),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Generates `n` synthetic sequences into `out_dir` and returns the manifest.
pub fn cmd_gen_data(cfg: &RunConfig, out_dir: &Path, n: usize, seed: Option<u64>) -> CliResult<Manifest> {
    cfg.validate()?;
    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let mut synth = cfg.synth.clone();
    if let Some(s) = seed {
        synth.seed = s;
    }
    Ok(generate_dataset(&synth, n, out_dir)?)
}

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    /// Overrides `training.epochs`.
    pub epochs: Option<usize>,
    /// Overrides `training.seed`.
    pub seed: Option<u64>,
    /// Checkpoint to continue from.
    pub resume: Option<PathBuf>,
    /// Where the per-epoch loss trace goes; defaults next to the checkpoint.
    pub loss_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
    /// `(epoch, mean loss)` for every epoch trained so far, including earlier runs.
    pub trace: Vec<(usize, f64)>,
}

/// `model.ckpt` → `model.loss.csv`.
pub fn default_loss_path(checkpoint: &Path) -> PathBuf {
    let stem = checkpoint.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    checkpoint.with_file_name(format!("{stem}.loss.csv"))
}

/// Training samples of every sequence under `data_dir`: each frame with its
/// input stack and ground-truth mask.
pub fn load_training_set(data_dir: &Path, input_frames: usize) -> CliResult<Vec<Sample>> {
    if !data_dir.is_dir() {
        return Err(usage(format!("data directory {} does not exist", data_dir.display())));
    }
    let seqs = list_sequences(data_dir)?;
    if seqs.is_empty() {
        return Err(usage(format!("no seq_* directories in {}", data_dir.display())));
    }
    let mut samples = Vec::new();
    for dir in seqs {
        let data = load_sequence(&dir)?;
        let Some(masks) = data.sequence.masks() else {
            return Err(usage(format!("{} has no ground-truth masks", dir.display())));
        };
        for (i, mask) in masks.iter().enumerate() {
            let frames = data.sequence.stack(i, input_frames).into_iter().cloned().collect();
            samples.push(Sample { frames, mask: mask.clone() });
        }
    }
    Ok(samples)
}

fn read_trace(path: &Path, upto: usize) -> CliResult<Vec<(usize, f64)>> {
    if !path.is_file() {
        return Ok(Vec::new());
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Io(e.to_string()))?;
    let mut out = Vec::new();
    for row in rdr.deserialize::<(usize, f64)>() {
        let row = row.map_err(|e| usage(format!("bad loss trace {}: {e}", path.display())))?;
        if row.0 < upto {
            out.push(row);
        }
    }
    Ok(out)
}

fn write_trace(path: &Path, trace: &[(usize, f64)]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["epoch", "mean_loss"]).map_err(io)?;
    for (e, l) in trace {
        w.write_record([e.to_string(), format!("{l}")]).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(write_atomic(path, &bytes)?)
}

/// Trains on every sequence in `data_dir` and writes the checkpoint and the
/// loss trace, both refreshed after every epoch. With `resume`, the weights
/// and epoch count come from that checkpoint and the loss trace continues.
pub fn cmd_train(cfg: &RunConfig, data_dir: &Path, out_checkpoint: &Path, args: &TrainArgs) -> CliResult<TrainReport> {
    cfg.validate()?;
    let seed = args.seed.unwrap_or(cfg.training.seed);
    let epochs = args.epochs.unwrap_or(cfg.training.epochs);
    let (mut model, start) = match &args.resume {
        Some(path) => {
            let (model, meta) = load_checkpoint(path)?;
            if meta.model != cfg.model {
                log::warn!("resuming with the model topology stored in {}", path.display());
            }
            (model, meta.epochs_completed)
        }
        None => (Model::new(cfg.model.clone(), &mut ChaCha8Rng::seed_from_u64(seed))?, 0),
    };
    let samples = load_training_set(data_dir, model.config().input_frames)?;
    let dims = (samples[0].mask.width, samples[0].mask.height);
    let div = model.config().divisor();
    if dims.0 % div != 0 || dims.1 % div != 0 {
        return Err(usage(format!("{}x{} frames are not divisible by {div}", dims.0, dims.1)));
    }
    let loss_csv = args.loss_csv.clone().unwrap_or_else(|| default_loss_path(out_checkpoint));
    let mut trace = match &args.resume {
        Some(r) => read_trace(&args.loss_csv.clone().unwrap_or_else(|| default_loss_path(r)), start)?,
        None => Vec::new(),
    };

    if let Some(parent) = out_checkpoint.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(Error::from)?;
    }
    let meta = |done: usize, model: &Model| CheckpointMeta {
        model: model.config().clone(),
        epochs_completed: done,
        input_size: Some(dims),
    };
    save_checkpoint(out_checkpoint, &model, &meta(start, &model))?;
    write_trace(&loss_csv, &trace)?;

    let mut optimizer = Sgd::new(cfg.optimizer);
    let options = TrainOptions {
        epochs: 1,
        batch_size: cfg.training.batch_size,
        augment: cfg.training.augment.then(|| cfg.augment.clone()),
    };
    for epoch in start..start + epochs {
        // one stream per epoch, so a resumed run draws what an uninterrupted one would
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1 + epoch as u64);
        let losses = train(&samples, &mut model, &mut optimizer, &options, &mut rng, &mut |_, _| {})?;
        log::info!("epoch {epoch}: loss {:.5}", losses[0]);
        trace.push((epoch, losses[0]));
        save_checkpoint(out_checkpoint, &model, &meta(epoch + 1, &model))?;
        write_trace(&loss_csv, &trace)?;
    }
    Ok(TrainReport { checkpoint: out_checkpoint.to_path_buf(), loss_csv, trace })
}

/// Bytes of the checkpoint `cmd_train` writes with zero epochs.
pub fn initial_checkpoint(cfg: &RunConfig, seed: u64, input_size: Option<(usize, usize)>) -> CliResult<Vec<u8>> {
    let model = Model::new(cfg.model.clone(), &mut ChaCha8Rng::seed_from_u64(seed))?;
    let meta = CheckpointMeta { model: cfg.model.clone(), epochs_completed: 0, input_size };
    Ok(encode_checkpoint(&model, &meta)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractReport {
    /// `(sequence output dir, centerlines)` per processed sequence.
    pub sequences: Vec<(PathBuf, Vec<Centerline>)>,
}

/// Sequence directories to process: the `seq_*` children of `input`, or
/// `input` itself when it has none. Paired with the output directory of each.
fn sequence_dirs(input: &Path, out: &Path) -> CliResult<Vec<(PathBuf, PathBuf)>> {
    if !input.is_dir() {
        return Err(usage(format!("{} is not a directory", input.display())));
    }
    let children = list_sequences(input)?;
    if children.is_empty() {
        return Ok(vec![(input.to_path_buf(), out.to_path_buf())]);
    }
    Ok(children
        .into_iter()
        .map(|c| {
            let name = c.file_name().expect("listed directory").to_owned();
            (c, out.join(name))
        })
        .collect())
}

/// Extracts a centerline for every frame of one sequence or of every
/// sequence in a dataset. Writes `prob_i.png` (model mode only),
/// `centerline_i.json` and `overlay_i.png` per frame. With `checkpoint` set
/// to `None` the ground-truth masks serve as probability maps.
pub fn cmd_extract(cfg: &RunConfig, checkpoint: Option<&Path>, input: &Path, out: &Path) -> CliResult<ExtractReport> {
    cfg.validate()?;
    let model = match checkpoint {
        Some(path) => {
            if !path.is_file() {
                return Err(CliError::Io(format!("checkpoint {} not found", path.display())));
            }
            Some(load_checkpoint(path)?)
        }
        None => None,
    };
    let dirs = sequence_dirs(input, out)?;
    let mut loaded: Vec<(SequenceData, PathBuf)> = Vec::with_capacity(dirs.len());
    for (dir, dst) in dirs {
        let data = load_sequence(&dir)?;
        let (w, h) = data.sequence.dims();
        match &model {
            Some((m, meta)) => {
                if meta.input_size.is_some_and(|s| s != (w, h)) {
                    let (tw, th) = meta.input_size.unwrap();
                    return Err(usage(format!(
                        "{}: frames are {w}x{h} but the checkpoint was trained on {tw}x{th}",
                        dir.display()
                    )));
                }
                let div = m.config().divisor();
                if w % div != 0 || h % div != 0 {
                    return Err(usage(format!("{}: {w}x{h} frames are not divisible by {div}", dir.display())));
                }
            }
            None => {
                if data.sequence.masks().is_none() {
                    return Err(usage(format!("{}: no masks for extraction without a model", dir.display())));
                }
            }
        }
        loaded.push((data, dst));
    }

    let mut sequences = Vec::with_capacity(loaded.len());
    for (data, dst) in loaded {
        std::fs::create_dir_all(&dst).map_err(Error::from)?;
        let seq = &data.sequence;
        let centerlines = (0..seq.len())
            .into_par_iter()
            .map(|i| -> CliResult<Centerline> {
                let pm = match &model {
                    Some((m, _)) => {
                        let pm = m.predict(&seq.stack(i, m.config().input_frames))?;
                        save_probability(&pm, &dst.join(format!("prob_{i}.png")))?;
                        pm
                    }
                    None => seq.masks().expect("checked above")[i].to_probability(),
                };
                let c = extract_centerline(&pm, &cfg.extract)?;
                c.save(&dst.join(format!("centerline_{i}.json")))?;
                save_overlay(&seq.frames()[i], &c, &dst.join(format!("overlay_{i}.png")))?;
                Ok(c)
            })
            .collect::<CliResult<Vec<_>>>()?;
        sequences.push((dst, centerlines));
    }
    Ok(ExtractReport { sequences })
}

/// `centerline_i.json` files under `dir`, keyed by (sequence, frame). The
/// sequence is the `seq_*` child name, or empty for a single sequence.
fn collect_centerlines(dir: &Path) -> CliResult<BTreeMap<(String, usize), PathBuf>> {
    if !dir.is_dir() {
        return Err(usage(format!("{} is not a directory", dir.display())));
    }
    let children = list_sequences(dir)?;
    let roots: Vec<(String, PathBuf)> = if children.is_empty() {
        vec![(String::new(), dir.to_path_buf())]
    } else {
        children.into_iter().map(|c| (c.file_name().unwrap().to_string_lossy().into_owned(), c)).collect()
    };
    let mut out = BTreeMap::new();
    for (seq, root) in roots {
        for entry in std::fs::read_dir(&root).map_err(Error::from)? {
            let path = entry.map_err(Error::from)?.path();
            let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            let frame = name.strip_prefix("centerline_").and_then(|r| r.strip_suffix(".json")).and_then(|n| n.parse().ok());
            if let Some(frame) = frame {
                out.insert((seq.clone(), frame), path);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct EvaluateReport {
    pub results: Vec<FrameResult>,
    pub summary: EvaluationSummary,
}

/// Compares predicted with ground-truth centerlines frame by frame and writes
/// `report.csv` and `summary.json` into `out`. Fails with
/// [`CliError::Mismatch`] before writing anything if any frame lacks its
/// counterpart.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    pred_dir: &Path,
    gt_dir: &Path,
    out: &Path,
    threshold_mm: Option<f64>,
) -> CliResult<EvaluateReport> {
    cfg.validate()?;
    let threshold = threshold_mm.unwrap_or(cfg.evaluate.threshold_mm);
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(usage("threshold must be positive"));
    }
    let gt = collect_centerlines(gt_dir)?;
    let pred = collect_centerlines(pred_dir)?;
    if gt.is_empty() {
        return Err(usage(format!("no ground-truth centerlines in {}", gt_dir.display())));
    }
    let label = |(seq, frame): &(String, usize)| {
        if seq.is_empty() {
            format!("frame {frame}")
        } else {
            format!("{seq}/frame {frame}")
        }
    };
    let mut unmatched: Vec<String> =
        gt.keys().filter(|k| !pred.contains_key(*k)).map(|k| format!("{} (no prediction)", label(k))).collect();
    unmatched.extend(pred.keys().filter(|k| !gt.contains_key(*k)).map(|k| format!("{} (no ground truth)", label(k))));
    if !unmatched.is_empty() {
        return Err(CliError::Mismatch(unmatched));
    }
    let single_name = gt_dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut results = Vec::with_capacity(gt.len());
    for (key, gt_path) in &gt {
        let g = Centerline::load(gt_path)?;
        let p = Centerline::load(&pred[key])?;
        let seq = if key.0.is_empty() { single_name.clone() } else { key.0.clone() };
        results.push(FrameResult::evaluate(&seq, key.1, &g, &p, cfg.pixel_spacing));
    }
    let summary = summarize(&results, cfg.pixel_spacing, threshold);
    std::fs::create_dir_all(out).map_err(Error::from)?;
    write_atomic(&out.join("report.csv"), &write_report_csv(&results)?)?;
    let json = serde_json::to_string_pretty(&summary).map_err(Error::from)?;
    write_atomic(&out.join("summary.json"), json.as_bytes())?;
    Ok(EvaluateReport { results, summary })
}
