use super::{dice_loss_batch, stack_frames, Model, Sgd, Tensor4};
use crate::augment::{augment_sample, AugmentConfig};
use crate::error::{Error, Result};
use crate::imagecore::{BinaryMask, Image};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One training example: the input stack (newest frame first) and the mask of
/// the newest frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub frames: Vec<Image>,
    pub mask: BinaryMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    /// `None` disables augmentation.
    pub augment: Option<AugmentConfig>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { epochs: 1, batch_size: 4, augment: Some(AugmentConfig::default()) }
    }
}

fn check_dataset(dataset: &[Sample], frames: usize) -> Result<()> {
    let Some(first) = dataset.first() else {
        return Err(Error::InvalidArgument("training set is empty".into()));
    };
    let dims = (first.mask.width, first.mask.height);
    for (i, s) in dataset.iter().enumerate() {
        if s.frames.len() != frames {
            return Err(Error::Shape(format!("sample {i} has {} frames, model expects {frames}", s.frames.len())));
        }
        if (s.mask.width, s.mask.height) != dims || s.frames.iter().any(|f| (f.width, f.height) != dims) {
            return Err(Error::Shape(format!("sample {i} differs in size from sample 0")));
        }
    }
    Ok(())
}

/// Trains `model` in place and returns the mean loss of every epoch.
///
/// Each epoch visits the samples in a fresh random order in mini-batches;
/// `on_epoch` is called after every epoch with its index and mean loss.
/// Randomness (order, augmentation, dropout) comes only from `rng`.
pub fn train<R: Rng>(
    dataset: &[Sample],
    model: &mut Model,
    optimizer: &mut Sgd,
    options: &TrainOptions,
    rng: &mut R,
    on_epoch: &mut dyn FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if options.epochs == 0 {
        return Ok(Vec::new());
    }
    check_dataset(dataset, model.config().input_frames)?;
    if options.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    if let Some(a) = &options.augment {
        a.validate()?;
    }
    optimizer.config.validate()?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut trace = Vec::with_capacity(options.epochs);
    for epoch in 0..options.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(options.batch_size) {
            let batch: Vec<(Vec<Image>, BinaryMask)> = chunk
                .iter()
                .map(|&i| {
                    let s = &dataset[i];
                    match &options.augment {
                        Some(cfg) => {
                            let mut local = ChaCha8Rng::seed_from_u64(rng.random());
                            augment_sample(&s.frames, &s.mask, cfg, &mut local)
                        }
                        None => (s.frames.clone(), s.mask.clone()),
                    }
                })
                .collect();
            let stacks: Vec<Vec<&Image>> = batch.iter().map(|(f, _)| f.iter().collect()).collect();
            let x = stack_frames(&stacks)?;
            let [n, _, h, w] = x.dims();
            let targets = Tensor4::new(
                [n, 1, h, w],
                batch.iter().flat_map(|(_, m)| m.data.iter().map(|&v| v as f64)).collect(),
            )?;
            model.zero_grad();
            let (probs, tape) = model.forward_train(&x, rng)?;
            let (_, losses, grad) = dice_loss_batch(&targets, &probs);
            model.backward(&tape, &grad)?;
            optimizer.step(model.params_mut())?;
            total += losses.iter().sum::<f64>();
        }
        let mean = total / dataset.len() as f64;
        on_epoch(epoch, mean);
        trace.push(mean);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::{dilate_5x5, rasterize_curve};
    use crate::nn::{ModelConfig, SgdConfig};

    fn sample(seed: u64, size: usize) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = [0.0, rng.random_range(2.0..size as f64 - 2.0)];
        let b = [size as f64 / 2.0, rng.random_range(2.0..size as f64 - 2.0)];
        let c = [size as f64 - 4.0, rng.random_range(2.0..size as f64 - 2.0)];
        let mask = dilate_5x5(&rasterize_curve(&[a, b, c], size, size).unwrap());
        let frame = Image {
            width: size,
            height: size,
            data: mask.data.iter().map(|&v| if v == 1 { 0.2 } else { 0.8 } + rng.random_range(-0.05..0.05)).collect(),
        };
        Sample { frames: vec![frame; 4], mask }
    }

    fn model(seed: u64) -> Model {
        Model::new(ModelConfig::with_levels(2, 4), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn zero_epochs_leave_model_untouched() {
        let mut m = model(1);
        let before = m.clone();
        let mut opt = Sgd::new(SgdConfig::default());
        let opts = TrainOptions { epochs: 0, ..Default::default() };
        let trace = train(&[sample(0, 16)], &mut m, &mut opt, &opts, &mut ChaCha8Rng::seed_from_u64(0), &mut |_, _| {})
            .unwrap();
        assert!(trace.is_empty());
        assert_eq!(m.state(), before.state());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let mut opt = Sgd::new(SgdConfig::default());
        let r = train(&[], &mut model(1), &mut opt, &TrainOptions::default(), &mut ChaCha8Rng::seed_from_u64(0), &mut |_, _| {});
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn memorizes_a_single_sample() {
        let data = vec![sample(7, 16)];
        let mut m = model(2);
        let mut opt = Sgd::new(SgdConfig::default());
        let opts = TrainOptions { epochs: 200, batch_size: 4, augment: None };
        let trace = train(&data, &mut m, &mut opt, &opts, &mut ChaCha8Rng::seed_from_u64(3), &mut |_, _| {}).unwrap();
        assert_eq!(trace.len(), 200);
        assert!(*trace.last().unwrap() < -0.9, "final loss {}", trace.last().unwrap());
    }

    #[test]
    fn fixed_seed_is_bitwise_reproducible() {
        let data: Vec<Sample> = (0..5).map(|i| sample(i, 16)).collect();
        let run = || {
            let mut m = model(4);
            let mut opt = Sgd::new(SgdConfig::default());
            let opts = TrainOptions { epochs: 3, batch_size: 2, ..Default::default() };
            let t = train(&data, &mut m, &mut opt, &opts, &mut ChaCha8Rng::seed_from_u64(5), &mut |_, _| {}).unwrap();
            (t, m.state().iter().map(|s| s.to_vec()).collect::<Vec<_>>())
        };
        assert_eq!(run(), run());
    }
}
