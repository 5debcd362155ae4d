//! Forward pass, loss, and backpropagation.
//!
//! Hidden activations are mostly zero (ReLU plus a 0.75 drop rate), so every
//! matrix product skips zero inputs. Skipping adds nothing but exact zeros,
//! which keeps results identical to the dense computation.

use rand::Rng;

use super::{MlpParams, NetError};
use crate::corpus::SentimentLabel;
use crate::num::Scalar;

/// Per-unit multipliers for the two hidden layers: `0` for dropped units,
/// `1 / (1 - rate)` for survivors.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks<T> {
    pub h1: Vec<T>,
    pub h2: Vec<T>,
}

impl<T: Scalar> DropoutMasks<T> {
    pub fn sample<R: Rng + ?Sized>(hidden: usize, rate: f64, rng: &mut R) -> Self {
        let keep = T::lit(1.0 / (1.0 - rate));
        let draw = |rng: &mut R| {
            (0..hidden)
                .map(|_| if rate > 0.0 && rng.gen::<f64>() < rate { T::zero() } else { keep })
                .collect()
        };
        let h1 = draw(rng);
        let h2 = draw(rng);
        DropoutMasks { h1, h2 }
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations<T> {
    pub z1: Vec<T>,
    /// `relu(z1)` after dropout.
    pub h1: Vec<T>,
    pub z2: Vec<T>,
    pub h2: Vec<T>,
    pub out: [T; 3],
}

#[inline]
fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `acc += sum_i input_i * w.row(i)` over nonzero inputs, in index order.
#[inline]
fn accumulate_rows<T: Scalar>(acc: &mut [T], input: &[T], w: &super::Matrix<T>) {
    for (i, &xi) in input.iter().enumerate() {
        if xi != T::zero() {
            for (a, &wij) in acc.iter_mut().zip(w.row(i)) {
                *a += xi * wij;
            }
        }
    }
}

fn hidden_layer<T: Scalar>(z: &[T], mask: Option<&[T]>) -> Vec<T> {
    match mask {
        None => z.iter().map(|&v| v.max(T::zero())).collect(),
        Some(m) => z.iter().zip(m).map(|(&v, &k)| v.max(T::zero()) * k).collect(),
    }
}

/// Full forward pass. `masks = None` is inference: no dropout, no rescaling.
pub fn forward<T: Scalar>(
    params: &MlpParams<T>,
    x: &[T],
    masks: Option<&DropoutMasks<T>>,
) -> Result<Activations<T>, NetError> {
    if x.len() != params.dim() {
        return Err(NetError::DimMismatch { expected: params.dim(), found: x.len() });
    }
    let mut z1 = params.b1.clone();
    accumulate_rows(&mut z1, x, &params.w1);
    let h1 = hidden_layer(&z1, masks.map(|m| m.h1.as_slice()));
    let mut z2 = params.b2.clone();
    accumulate_rows(&mut z2, &h1, &params.w2);
    let h2 = hidden_layer(&z2, masks.map(|m| m.h2.as_slice()));
    let mut z3 = params.b3.clone();
    accumulate_rows(&mut z3, &h2, &params.w3);
    let out = [sigmoid(z3[0]), sigmoid(z3[1]), sigmoid(z3[2])];
    Ok(Activations { z1, h1, z2, h2, out })
}

/// Inference-mode output scores (positive, negative, neutral).
pub fn forward_infer<T: Scalar>(params: &MlpParams<T>, x: &[T]) -> Result<[T; 3], NetError> {
    forward(params, x, None).map(|a| a.out)
}

pub fn one_hot<T: Scalar>(label: SentimentLabel) -> [T; 3] {
    let mut t = [T::zero(); 3];
    t[label.index()] = T::one();
    t
}

fn clamp_eps<T: Scalar>() -> T {
    // 1 - 1e-12 is not representable in f32
    T::lit(1e-12).max(T::epsilon())
}

/// Binary cross-entropy averaged over the three sigmoid units, with outputs
/// clamped away from 0 and 1.
pub fn bce_loss<T: Scalar>(out: &[T; 3], target: &[T; 3]) -> T {
    let eps = clamp_eps::<T>();
    let mut total = T::zero();
    for (&o, &t) in out.iter().zip(target) {
        let o = o.max(eps).min(T::one() - eps);
        total -= t * o.ln() + (T::one() - t) * (T::one() - o).ln();
    }
    total / T::lit(3.0)
}

/// Forward + backward for one example, adding `weight * dLoss/dParams` into
/// `grads`. Returns the example's loss. The output gradient is the analytic
/// `(o - t) / 3` of the unclamped loss.
pub(crate) fn accumulate_example<T: Scalar>(
    params: &MlpParams<T>,
    x: &[T],
    target: &[T; 3],
    masks: Option<&DropoutMasks<T>>,
    weight: T,
    grads: &mut MlpParams<T>,
) -> Result<T, NetError> {
    let acts = forward(params, x, masks)?;
    let hidden = params.hidden();
    let third = T::lit(3.0);

    let d3: [T; 3] = std::array::from_fn(|k| weight * (acts.out[k] - target[k]) / third);
    for (g, d) in grads.b3.iter_mut().zip(&d3) {
        *g += *d;
    }

    // Units that pass gradient: positive pre-activation and not dropped.
    let alive = |z: &[T], m: Option<&[T]>, i: usize| {
        z[i] > T::zero() && m.is_none_or(|m| m[i] != T::zero())
    };
    let m1 = masks.map(|m| m.h1.as_slice());
    let m2 = masks.map(|m| m.h2.as_slice());

    let mut dz2 = vec![T::zero(); hidden];
    let mut active2 = Vec::with_capacity(hidden);
    for i in 0..hidden {
        if !alive(&acts.z2, m2, i) {
            continue;
        }
        let h = acts.h2[i];
        let g = grads.w3.row_mut(i);
        let w = params.w3.row(i);
        let mut dh = T::zero();
        for k in 0..3 {
            g[k] += h * d3[k];
            dh += w[k] * d3[k];
        }
        dz2[i] = dh * m2.map_or(T::one(), |m| m[i]);
        active2.push(i);
    }
    for &j in &active2 {
        grads.b2[j] += dz2[j];
    }

    let mut dz1 = vec![T::zero(); hidden];
    let mut active1 = Vec::with_capacity(hidden);
    for i in 0..hidden {
        if !alive(&acts.z1, m1, i) {
            continue;
        }
        let h = acts.h1[i];
        let w = params.w2.row(i);
        let g = grads.w2.row_mut(i);
        let mut dh = T::zero();
        for &j in &active2 {
            g[j] += h * dz2[j];
            dh += w[j] * dz2[j];
        }
        dz1[i] = dh * m1.map_or(T::one(), |m| m[i]);
        active1.push(i);
    }
    for &j in &active1 {
        grads.b1[j] += dz1[j];
    }

    for (i, &xi) in x.iter().enumerate() {
        if xi == T::zero() {
            continue;
        }
        let g = grads.w1.row_mut(i);
        for &j in &active1 {
            g[j] += xi * dz1[j];
        }
    }

    Ok(bce_loss(&acts.out, target))
}

/// Exact gradient of `bce_loss(forward(x))` for fixed dropout masks.
pub fn backward<T: Scalar>(
    params: &MlpParams<T>,
    x: &[T],
    target: &[T; 3],
    masks: Option<&DropoutMasks<T>>,
) -> Result<MlpParams<T>, NetError> {
    let mut grads = params.zeros_like();
    accumulate_example(params, x, target, masks, T::one(), &mut grads)?;
    Ok(grads)
}

/// Gradient of the summed loss over a batch, dropout off.
pub fn batch_gradient<T: Scalar>(
    params: &MlpParams<T>,
    batch: &[(&[T], [T; 3])],
) -> Result<MlpParams<T>, NetError> {
    let mut grads = params.zeros_like();
    for (x, t) in batch {
        accumulate_example(params, x, t, None, T::one(), &mut grads)?;
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::init_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use SentimentLabel::*;

    fn small() -> MlpParams<f64> {
        init_params(8, 5, 0.5, 3)
    }

    fn x8() -> Vec<f64> {
        vec![0.3, -0.1, 0.0, 0.7, 0.2, -0.5, 0.9, 0.0]
    }

    #[test]
    fn zero_params_give_half() {
        let p = MlpParams::<f64>::zeros(6, 4);
        assert_eq!(forward_infer(&p, &[1.0, 2.0, -3.0, 0.0, 0.5, 9.0]).unwrap(), [0.5; 3]);
    }

    #[test]
    fn infer_is_repeatable_and_checks_dim() {
        let p = small();
        assert_eq!(forward_infer(&p, &x8()).unwrap(), forward_infer(&p, &x8()).unwrap());
        assert_eq!(
            forward_infer(&p, &[0.0; 3]).unwrap_err(),
            NetError::DimMismatch { expected: 8, found: 3 }
        );
    }

    #[test]
    fn zero_rate_train_mode_equals_infer() {
        let p = small();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let masks = DropoutMasks::sample(5, 0.0, &mut rng);
        assert_eq!(forward(&p, &x8(), Some(&masks)).unwrap().out, forward_infer(&p, &x8()).unwrap());
    }

    #[test]
    fn masks_drop_and_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m: DropoutMasks<f64> = DropoutMasks::sample(1000, 0.75, &mut rng);
        assert!(m.h1.iter().all(|&v| v == 0.0 || v == 4.0));
        let kept = m.h1.iter().filter(|&&v| v > 0.0).count();
        assert!((150..350).contains(&kept), "{kept}");
    }

    #[test]
    fn loss_closed_forms() {
        for l in SentimentLabel::ALL {
            let v = bce_loss(&[0.5f64; 3], &one_hot(l));
            assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
        }
        assert!(bce_loss(&[1.0f64, 0.0, 0.0], &one_hot(Positive)) <= 3e-11);
        let v32 = bce_loss(&[1.0f32, 0.0, 0.0], &one_hot(Positive));
        assert!(v32.is_finite() && v32 < 1e-6);
    }

    #[test]
    fn loss_permutation_equivariant() {
        let o = [0.2f64, 0.7, 0.4];
        let t = one_hot::<f64>(Negative);
        let perm = [2, 0, 1];
        let po: [f64; 3] = std::array::from_fn(|i| o[perm[i]]);
        let pt: [f64; 3] = std::array::from_fn(|i| t[perm[i]]);
        assert!((bce_loss(&o, &t) - bce_loss(&po, &pt)).abs() < 1e-15);
    }

    #[test]
    fn zero_input_gives_zero_first_layer_gradient() {
        let p = small();
        let g = backward(&p, &[0.0; 8], &one_hot(Neutral), None).unwrap();
        assert!(g.w1.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_example_doubles_gradient() {
        let p = small();
        let x = x8();
        let t = one_hot::<f64>(Positive);
        let single = batch_gradient(&p, &[(&x, t)]).unwrap();
        let double = batch_gradient(&p, &[(&x, t), (&x, t)]).unwrap();
        for (a, b) in single.tensors().iter().zip(double.tensors()) {
            for (u, v) in a.iter().zip(b.iter()) {
                assert_eq!(2.0 * u, *v);
            }
        }
    }

    #[test]
    fn dropped_units_get_no_gradient() {
        let p = small();
        let masks = DropoutMasks { h1: vec![0.0, 4.0, 0.0, 4.0, 4.0], h2: vec![4.0, 0.0, 4.0, 4.0, 0.0] };
        let g = backward(&p, &x8(), &one_hot(Negative), Some(&masks)).unwrap();
        for i in [0usize, 2] {
            assert_eq!(g.b1[i], 0.0);
            assert!(g.w2.row(i).iter().all(|&v| v == 0.0));
        }
        for i in [1usize, 4] {
            assert!(g.w3.row(i).iter().all(|&v| v == 0.0));
        }
    }
}
