use super::{shape_err, NumError, Scalar, Tensor};

/// Prediction clamp used by [`bce_loss`].
pub const BCE_EPSILON: f64 = 1e-7;

fn clamp_pred<T: Scalar>(pred: T) -> T {
    let eps = T::lit(BCE_EPSILON);
    pred.max(eps).min(T::one() - eps)
}

/// Binary cross-entropy `-[l ln p + (1 - l) ln(1 - p)]`, with `p` clamped to
/// `[eps, 1 - eps]`. This is the minimized (negated) form.
pub fn bce_loss<T: Scalar>(label: T, pred: T) -> T {
    let p = clamp_pred(pred);
    -(label * p.ln() + (T::one() - label) * (T::one() - p).ln())
}

/// d bce / d pred, evaluated at the clamped prediction.
pub fn bce_loss_backward<T: Scalar>(label: T, pred: T) -> T {
    let p = clamp_pred(pred);
    -label / p + (T::one() - label) / (T::one() - p)
}

fn check_same_len<T: Scalar>(op: &'static str, u: &Tensor<T>, v: &Tensor<T>) -> Result<(), NumError> {
    if u.len() != v.len() || u.is_empty() {
        return Err(shape_err(op, format!("lengths {} and {}", u.len(), v.len())));
    }
    Ok(())
}

/// Mean squared error `(1/n) Σ (u_i - v_i)^2`.
pub fn mse<T: Scalar>(u: &Tensor<T>, v: &Tensor<T>) -> Result<T, NumError> {
    check_same_len("mse", u, v)?;
    let sum: T = u.data().iter().zip(v.data()).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok(sum / T::lit(u.len() as f64))
}

/// Gradient of [`mse`] with respect to `u`; the gradient for `v` is its negation.
pub fn mse_backward<T: Scalar>(u: &Tensor<T>, v: &Tensor<T>, grad: T) -> Result<Tensor<T>, NumError> {
    check_same_len("mse_backward", u, v)?;
    let scale = grad * T::lit(2.0 / u.len() as f64);
    Ok(Tensor::from_vec(
        u.data().iter().zip(v.data()).map(|(&a, &b)| scale * (a - b)).collect(),
    ))
}

/// Pairs entering the denominator of the ratio loss, as indices into
/// `[A, B, C, D]`.
const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Relative regression loss:
/// `6·d(D, D̂) / (1 + d(A,B) + d(A,C) + d(A,D) + d(B,C) + d(B,D) + d(C,D))`
/// where `d` is [`mse`].
pub fn ratio_loss<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    c: &Tensor<T>,
    d: &Tensor<T>,
    predicted: &Tensor<T>,
) -> Result<T, NumError> {
    let e = [a, b, c, d];
    let numerator = T::lit(6.0) * mse(d, predicted)?;
    let mut denominator = T::one();
    for (i, j) in PAIRS {
        denominator += mse(e[i], e[j])?;
    }
    let loss = numerator / denominator;
    if !loss.is_finite() {
        return Err(NumError::NonFinite { op: "ratio_loss" });
    }
    Ok(loss)
}

/// Gradients of [`ratio_loss`] with respect to `[A, B, C, D, D̂]`, scaled by
/// `grad`.
pub fn ratio_loss_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    c: &Tensor<T>,
    d: &Tensor<T>,
    predicted: &Tensor<T>,
    grad: T,
) -> Result<[Tensor<T>; 5], NumError> {
    let e = [a, b, c, d];
    let numerator = T::lit(6.0) * mse(d, predicted)?;
    let mut denominator = T::one();
    for (i, j) in PAIRS {
        denominator += mse(e[i], e[j])?;
    }
    let mut grads: [Tensor<T>; 5] = std::array::from_fn(|_| Tensor::zeros(&[a.len()]));

    // numerator term: (6 / den) * d mse(D, D̂)
    let g_num = mse_backward(d, predicted, grad * T::lit(6.0) / denominator)?;
    grads[3].add_assign(&g_num)?;
    let mut neg = g_num;
    neg.scale(-T::one());
    grads[4].add_assign(&neg)?;

    // denominator terms: -(num / den^2) * d mse(e_i, e_j)
    let g_den = -grad * numerator / (denominator * denominator);
    for (i, j) in PAIRS {
        let g = mse_backward(e[i], e[j], g_den)?;
        grads[i].add_assign(&g)?;
        let mut neg = g;
        neg.scale(-T::one());
        grads[j].add_assign(&neg)?;
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::gradcheck::{assert_grad_close, numeric_gradient};
    use crate::numkit::Rng;
    use rand::Rng as _;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(v.to_vec())
    }

    #[test]
    fn bce_reference_values() {
        assert!((bce_loss(1.0f64, 0.5) - std::f64::consts::LN_2).abs() < 1e-9);
        assert!(bce_loss(1.0f64, 1.0 - 1e-7) < 1e-6);
        // -ln(1 - 0.9) evaluated directly
        let expected = -(1.0f64 - 0.9).ln();
        assert!((bce_loss(0.0f64, 0.9) - expected).abs() < 1e-12);
        assert!((expected - std::f64::consts::LN_10).abs() < 1e-12);
        // clamping keeps saturated predictions finite
        assert!(bce_loss(1.0f32, 0.0).is_finite());
        assert!(bce_loss(0.0f32, 1.0).is_finite());
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        for &(l, p) in &[(1.0, 0.3), (0.0, 0.3), (1.0, 0.9), (0.0, 0.75)] {
            let num = numeric_gradient(&[p], 1e-6, |v| bce_loss(l, v[0]));
            assert_grad_close(&[bce_loss_backward(l, p)], &num, 1e-4);
        }
    }

    #[test]
    fn mse_values() {
        assert_eq!(mse(&t(&[1.0, 2.0]), &t(&[1.0, 2.0])).unwrap(), 0.0);
        assert_eq!(mse(&t(&[0.0]), &t(&[2.0])).unwrap(), 4.0);
        assert!(mse(&t(&[0.0]), &t(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn mse_matches_loop_oracle() {
        let mut rng = Rng::new(5, "mse");
        let u: Vec<f64> = (0..80).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..80).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut acc = 0.0;
        for i in 0..80 {
            let diff = u[i] - v[i];
            acc += diff * diff;
        }
        let oracle = acc / 80.0;
        assert!((mse(&t(&u), &t(&v)).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn ratio_loss_hand_value() {
        let l = ratio_loss(&t(&[0.0]), &t(&[1.0]), &t(&[0.0]), &t(&[1.0]), &t(&[0.0])).unwrap();
        assert!((l - 1.2).abs() < 1e-12);
    }

    #[test]
    fn ratio_loss_zero_iff_exact() {
        let a = t(&[0.1, 0.2]);
        let b = t(&[0.3, -0.2]);
        let c = t(&[1.0, 0.0]);
        let d = t(&[0.5, 0.5]);
        assert_eq!(ratio_loss(&a, &b, &c, &d, &d).unwrap(), 0.0);
        assert!(ratio_loss(&a, &b, &c, &d, &t(&[0.5, 0.50001])).unwrap() > 0.0);
    }

    #[test]
    fn ratio_loss_gradient_matches_finite_differences() {
        let n = 6;
        for seed in 0..10u64 {
            let mut rng = Rng::new(seed, "ratio");
            let xs: Vec<Tensor<f64>> = (0..5)
                .map(|_| Tensor::from_fn(&[n], |_| rng.gen_range(-1.0..1.0)))
                .collect();
            let grads = ratio_loss_backward(&xs[0], &xs[1], &xs[2], &xs[3], &xs[4], 1.0).unwrap();
            for k in 0..5 {
                let num = numeric_gradient(xs[k].data(), 1e-5, |v| {
                    let mut probe = xs.clone();
                    probe[k] = Tensor::from_vec(v.to_vec());
                    ratio_loss(&probe[0], &probe[1], &probe[2], &probe[3], &probe[4]).unwrap()
                });
                assert_grad_close(grads[k].data(), &num, 1e-4);
            }
        }
    }
}
