use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pass::accumulate_example;
use super::{adam_step, init_params, one_hot, AdamState, DropoutMasks, Hyperparams, MlpParams, NetError};
use crate::corpus::SentimentLabel;
use crate::num::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss of each epoch, measured with dropout active.
    pub epoch_losses: Vec<f64>,
    pub epochs: usize,
    pub seed: u64,
    pub examples: usize,
}

/// Trains a fresh network on `pairs`.
///
/// Weights come from `init_params(dim, hidden, bound, seed)`; shuffling and
/// dropout draw from a second ChaCha stream of the same seed. Each minibatch
/// minimizes the mean loss of its examples, so the last, shorter batch is not
/// over-weighted.
pub fn train<T, V>(
    pairs: &[(V, SentimentLabel)],
    hyper: &Hyperparams,
    seed: u64,
) -> Result<(MlpParams<T>, TrainReport), NetError>
where
    T: Scalar,
    V: AsRef<[T]>,
{
    hyper.validate()?;
    let first = pairs.first().ok_or(NetError::EmptyDataset)?;
    let dim = first.0.as_ref().len();
    if let Some((x, _)) = pairs.iter().find(|(x, _)| x.as_ref().len() != dim) {
        return Err(NetError::DimMismatch { expected: dim, found: x.as_ref().len() });
    }

    let mut params = init_params::<T>(dim, hyper.hidden_units, hyper.init_bound, seed);
    let mut state = AdamState::new(&params);
    let mut grads = params.zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);

    let targets: Vec<[T; 3]> = pairs.iter().map(|(_, l)| one_hot(*l)).collect();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    let dropout = hyper.dropout_rate > 0.0;

    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for batch in order.chunks(hyper.batch_size) {
            grads.fill_zero();
            let weight = T::one() / T::lit(batch.len() as f64);
            for &idx in batch {
                let masks = dropout.then(|| {
                    DropoutMasks::sample(hyper.hidden_units, hyper.dropout_rate, &mut rng)
                });
                let loss = accumulate_example(
                    &params,
                    pairs[idx].0.as_ref(),
                    &targets[idx],
                    masks.as_ref(),
                    weight,
                    &mut grads,
                )?;
                epoch_loss += loss.as_f64();
            }
            adam_step(&mut params, &grads, &mut state, hyper);
        }
        epoch_losses.push(epoch_loss / pairs.len() as f64);
    }

    let report = TrainReport { epoch_losses, epochs: hyper.epochs, seed, examples: pairs.len() };
    Ok((params, report))
}
