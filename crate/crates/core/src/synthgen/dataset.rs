use super::{generate_sequence, SynthConfig, SyntheticSequence};
use crate::centerline::Centerline;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::imagecore::{load_image, load_mask, save_image_u16, save_mask, FrameSequence};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub config: SynthConfig,
    pub seed: u64,
    pub n_sequences: usize,
    pub sequences: Vec<String>,
    pub has_loop: Vec<bool>,
}

pub fn sequence_name(i: usize) -> String {
    format!("seq_{i:04}")
}

/// Sequence `i` of the dataset seeded with `seed`; independent of how many
/// sequences are generated alongside it.
pub fn sequence_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

fn write_sequence(dir: &Path, s: &SyntheticSequence) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let masks = s.sequence.masks().expect("synthetic sequences carry masks");
    for (i, ((frame, mask), c)) in s.sequence.frames().iter().zip(masks).zip(&s.centerlines).enumerate() {
        save_image_u16(frame, &dir.join(format!("frame_{i}.png")))?;
        save_mask(mask, &dir.join(format!("mask_{i}.png")))?;
        c.save(&dir.join(format!("centerline_{i}.json")))?;
    }
    Ok(())
}

/// Writes `n` sequences under `out_dir` as `seq_####/` directories holding
/// `frame_i.png` (16 bit), `mask_i.png` and `centerline_i.json`, plus a
/// `manifest.json` with the configuration. Sequences are generated in
/// parallel from per-sequence streams of `cfg.seed`.
pub fn generate_dataset(cfg: &SynthConfig, n: usize, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one sequence".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let has_loop = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = generate_sequence(cfg, &mut sequence_rng(cfg.seed, i))?;
            write_sequence(&out_dir.join(sequence_name(i)), &s)?;
            Ok(s.has_loop)
        })
        .collect::<Result<Vec<bool>>>()?;
    let manifest = Manifest {
        config: cfg.clone(),
        seed: cfg.seed,
        n_sequences: n,
        sequences: (0..n).map(sequence_name).collect(),
        has_loop,
    };
    write_atomic(&out_dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest)
}

/// Sequence directories (`seq_*`) under `dir`, sorted by name.
pub fn list_sequences(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        if entry.file_type()?.is_dir() && name.to_string_lossy().starts_with("seq_") {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

/// A sequence read back from disk. Masks and centerlines are present only if
/// every frame has one.
#[derive(Debug, Clone)]
pub struct SequenceData {
    pub name: String,
    pub sequence: FrameSequence,
    pub centerlines: Option<Vec<Centerline>>,
}

/// Reads `frame_0.png`, `frame_1.png`, ... until the first missing index,
/// with the matching masks and centerlines when present.
pub fn load_sequence(dir: &Path) -> Result<SequenceData> {
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut frames = Vec::new();
    while dir.join(format!("frame_{}.png", frames.len())).is_file() {
        frames.push(load_image(&dir.join(format!("frame_{}.png", frames.len())))?);
    }
    if frames.is_empty() {
        return Err(Error::InvalidArgument(format!("no frame_0.png in {}", dir.display())));
    }
    let n = frames.len();
    let mask_paths: Vec<PathBuf> = (0..n).map(|i| dir.join(format!("mask_{i}.png"))).collect();
    let masks = if mask_paths.iter().all(|p| p.is_file()) {
        Some(mask_paths.iter().map(|p| load_mask(p)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    let cl_paths: Vec<PathBuf> = (0..n).map(|i| dir.join(format!("centerline_{i}.json"))).collect();
    let centerlines = if cl_paths.iter().all(|p| p.is_file()) {
        Some(cl_paths.iter().map(|p| Centerline::load(p)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    Ok(SequenceData { name, sequence: FrameSequence::new(frames, masks)?, centerlines })
}
