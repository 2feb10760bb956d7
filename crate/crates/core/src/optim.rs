//! Initialization, loss, optimizer, and learning-rate schedule.

use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

/// Xavier (Glorot) uniform initialization: i.i.d. draws from
/// [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))].
///
/// For convolutions, fan_in = in_ch * k and fan_out = out_ch * k; for dense
/// layers the fans are the layer widths.
pub fn xavier_init(fan_in: usize, fan_out: usize, shape: &[usize], rng: &mut Rng) -> Result<Tensor> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::invalid(
            "xavier_init",
            format!("fans must be >= 1, got fan_in={fan_in}, fan_out={fan_out}"),
        ));
    }
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::uniform(rng, -bound, bound, shape)
}

/// Numerically stable softmax over the last axis of a [b, c] tensor.
/// Subtracts the row max before exponentiating.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    if logits.rank() != 2 {
        return Err(Error::shape(
            "softmax",
            format!("expects [b, c], got {:?}", logits.shape()),
        ));
    }
    let (b, c) = (logits.shape()[0], logits.shape()[1]);
    let mut probs = Tensor::zeros(&[b, c]);
    let ld = logits.data();
    let pd = probs.data_mut();
    for r in 0..b {
        let row = &ld[r * c..(r + 1) * c];
        let max = row.iter().cloned().fold(f64::MIN, f64::max);
        let mut sum = 0.0;
        for (p, &v) in pd[r * c..(r + 1) * c].iter_mut().zip(row.iter()) {
            *p = (v - max).exp();
            sum += *p;
        }
        let inv = 1.0 / sum;
        for p in pd[r * c..(r + 1) * c].iter_mut() {
            *p *= inv;
        }
    }
    Ok(probs)
}

/// Loss, probabilities and logit gradient of softmax cross-entropy.
#[derive(Debug)]
pub struct SoftmaxCrossEntropy {
    /// Mean negative log-likelihood over the batch.
    pub loss: f64,
    pub probs: Tensor,
    /// (probs - onehot) / b, ready to feed the model backward pass.
    pub dlogits: Tensor,
}

pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<SoftmaxCrossEntropy> {
    if logits.rank() != 2 {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("logits must be [b, c], got {:?}", logits.shape()),
        ));
    }
    let (b, c) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != b {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("{} labels for batch of {b}", labels.len()),
        ));
    }
    if !logits.all_finite() {
        return Err(Error::non_finite(
            "softmax_cross_entropy",
            "logits contain NaN or infinity",
        ));
    }
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::invalid(
                "softmax_cross_entropy",
                format!("label {y} at index {i} out of range for {c} classes"),
            ));
        }
    }

    let probs = softmax(logits)?;
    let mut loss = 0.0;
    let mut dlogits = probs.clone();
    {
        let dd = dlogits.data_mut();
        let pd = probs.data();
        let inv_b = 1.0 / b as f64;
        for (i, &y) in labels.iter().enumerate() {
            loss -= pd[i * c + y].ln();
            dd[i * c + y] -= 1.0;
        }
        for v in dd.iter_mut() {
            *v *= inv_b;
        }
        loss *= inv_b;
    }
    Ok(SoftmaxCrossEntropy {
        loss,
        probs,
        dlogits,
    })
}

/// Adam accumulator state: one first/second-moment tensor per parameter,
/// plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zeroed moments matching the given parameters, with the defaults of
    /// the Adam algorithm (beta1 0.9, beta2 0.999, eps 1e-8).
    pub fn new(params: &[&Tensor]) -> Self {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Reassemble a state from checkpointed parts.
    pub fn from_parts(
        m: Vec<Tensor>,
        v: Vec<Tensor>,
        t: u64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Result<Self> {
        if m.len() != v.len() {
            return Err(Error::shape(
                "AdamState",
                format!("{} first moments vs {} second moments", m.len(), v.len()),
            ));
        }
        for (a, b) in m.iter().zip(v.iter()) {
            if a.shape() != b.shape() {
                return Err(Error::shape(
                    "AdamState",
                    format!("moment shapes differ: {:?} vs {:?}", a.shape(), b.shape()),
                ));
            }
            if b.data().iter().any(|&x| x < 0.0) {
                return Err(Error::invalid(
                    "AdamState",
                    "second moments must be non-negative",
                ));
            }
        }
        Ok(AdamState {
            m,
            v,
            t,
            beta1,
            beta2,
            eps,
        })
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One Adam update over all parameters:
/// m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2; bias-corrected;
/// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
///
/// The step is atomic: gradients are validated (shapes, finiteness) before
/// any parameter or moment is touched, and `t` increments exactly once.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if lr <= 0.0 {
        return Err(Error::invalid("adam_step", format!("lr must be > 0, got {lr}")));
    }
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "{} params, {} grads, {} moment pairs",
                params.len(),
                grads.len(),
                state.len()
            ),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads.iter()).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "param {i}: shape {:?} vs grad {:?}",
                    p.shape(),
                    g.shape()
                ),
            ));
        }
        if !g.all_finite() {
            return Err(Error::non_finite(
                "adam_step",
                format!("gradient {i} contains NaN or infinity; step aborted"),
            ));
        }
    }

    state.t += 1;
    let t = state.t;
    let bc1 = 1.0 - state.beta1.powi(t as i32);
    let bc2 = 1.0 - state.beta2.powi(t as i32);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let pd = p.data_mut();
        let gd = g.data();
        let md = m.data_mut();
        let vd = v.data_mut();
        for i in 0..pd.len() {
            md[i] = state.beta1 * md[i] + (1.0 - state.beta1) * gd[i];
            vd[i] = state.beta2 * vd[i] + (1.0 - state.beta2) * gd[i] * gd[i];
            let m_hat = md[i] / bc1;
            let v_hat = vd[i] / bc2;
            pd[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Step-decay schedule: the base rate is multiplied by `factor` at the start
/// of each milestone epoch.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub milestones: Vec<usize>,
    pub factor: f64,
}

impl Default for LrSchedule {
    /// 0.01 decayed by 0.1 at epochs 10, 30 and 50.
    fn default() -> Self {
        LrSchedule {
            base_lr: 0.01,
            milestones: vec![10, 30, 50],
            factor: 0.1,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.base_lr <= 0.0 {
            return Err(Error::invalid("LrSchedule", "base_lr must be > 0"));
        }
        if !(0.0 < self.factor && self.factor < 1.0) {
            return Err(Error::invalid("LrSchedule", "factor must be in (0, 1)"));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "LrSchedule",
                "milestones must be strictly increasing",
            ));
        }
        Ok(())
    }
}

/// Piecewise-constant learning rate for a 0-indexed epoch.
pub fn lr_at(schedule: &LrSchedule, epoch: usize) -> f64 {
    let decays = schedule.milestones.iter().filter(|&&m| epoch >= m).count();
    schedule.base_lr * schedule.factor.powi(decays as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::fd_check;
    use std::cell::RefCell;

    #[test]
    fn xavier_forced_bound() {
        let mut rng = Rng::new(1);
        // fan_in = fan_out = 3 gives bound sqrt(6/6) = 1.
        let t = xavier_init(3, 3, &[1000], &mut rng).unwrap();
        assert!(t.data().iter().all(|&v| (-1.0..1.0).contains(&v)));
    }

    #[test]
    fn xavier_empirical_variance() {
        let mut rng = Rng::new(2);
        let (fan_in, fan_out) = (20, 30);
        let t = xavier_init(fan_in, fan_out, &[100_000], &mut rng).unwrap();
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let expect = 2.0 / (fan_in + fan_out) as f64;
        assert!(
            (var - expect).abs() / expect < 0.05,
            "var {var} vs expected {expect}"
        );
    }

    #[test]
    fn xavier_deterministic_and_guards_fans() {
        let mut a = Rng::new(3);
        let mut b = Rng::new(3);
        assert_eq!(
            xavier_init(4, 5, &[2, 3], &mut a).unwrap(),
            xavier_init(4, 5, &[2, 3], &mut b).unwrap()
        );
        assert!(xavier_init(0, 5, &[2], &mut a).is_err());
    }

    #[test]
    fn uniform_logits_give_ln3_loss() {
        let logits = Tensor::zeros(&[2, 3]);
        let out = softmax_cross_entropy(&logits, &[0, 2]).unwrap();
        for &p in out.probs.data() {
            assert!((p - 1.0 / 3.0).abs() <= 1e-12);
        }
        assert!((out.loss - 3.0f64.ln()).abs() <= 1e-12);
    }

    #[test]
    fn shift_invariance() {
        let logits = Tensor::new(vec![1, 3], vec![0.3, -1.2, 2.0]).unwrap();
        let shifted = logits.map(|v| v + 123.0);
        let a = softmax_cross_entropy(&logits, &[1]).unwrap();
        let b = softmax_cross_entropy(&shifted, &[1]).unwrap();
        assert!((a.loss - b.loss).abs() <= 1e-12);
        assert!(a.probs.sub(&b.probs).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn rows_sum_to_one_even_for_extreme_logits() {
        let logits = Tensor::new(vec![2, 3], vec![700.0, -700.0, 0.0, 650.0, 649.0, -650.0]).unwrap();
        let probs = softmax(&logits).unwrap();
        for r in 0..2 {
            let s: f64 = probs.data()[r * 3..(r + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() <= 1e-12, "row {r} sums to {s}");
        }
    }

    #[test]
    fn dlogits_rows_sum_to_zero() {
        let mut rng = Rng::new(4);
        let logits = Tensor::uniform(&mut rng, -3.0, 3.0, &[5, 4]).unwrap();
        let out = softmax_cross_entropy(&logits, &[0, 1, 2, 3, 1]).unwrap();
        for r in 0..5 {
            let s: f64 = out.dlogits.data()[r * 4..(r + 1) * 4].iter().sum();
            assert!(s.abs() <= 1e-12);
        }
    }

    #[test]
    fn dlogits_match_finite_differences() {
        // A narrow logit range keeps every gradient component well above the
        // finite-difference roundoff floor, so the 1e-8 target is meaningful.
        let mut rng = Rng::new(5);
        let logits = Tensor::uniform(&mut rng, -1.0, 1.0, &[4, 3]).unwrap();
        let labels = [0usize, 2, 1, 1];
        let out = softmax_cross_entropy(&logits, &labels).unwrap();

        let cell = RefCell::new(logits);
        let loss = || {
            softmax_cross_entropy(&cell.borrow(), &labels)
                .unwrap()
                .loss
        };
        let err = fd_check(
            out.dlogits.data(),
            |i| cell.borrow().data()[i],
            |i, v| cell.borrow_mut().data_mut()[i] = v,
            loss,
            1e-5,
        );
        assert!(err <= 1e-8, "rel err {err}");
    }

    #[test]
    fn rejects_bad_labels_and_non_finite() {
        let logits = Tensor::zeros(&[1, 3]);
        assert!(softmax_cross_entropy(&logits, &[3]).is_err());
        let bad = Tensor::new(vec![1, 2], vec![f64::NAN, 0.0]).unwrap();
        assert!(softmax_cross_entropy(&bad, &[0]).is_err());
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = Tensor::vector(vec![1.0, -2.0, 3.0]);
        let before = p.clone();
        let mut state = AdamState::new(&[&p]);
        for _ in 0..100 {
            adam_step(
                &mut [&mut p],
                &[Tensor::zeros(&[3])],
                &mut state,
                0.01,
            )
            .unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_magnitude_is_lr() {
        // At t=1 the bias corrections cancel, so the update is exactly
        // -lr * g / (|g| + eps): magnitude lr up to the eps effect, for any |g|.
        let lr = 0.01;
        for &g in &[1e-6, 0.1, 7.0, 1e4] {
            let mut p = Tensor::vector(vec![0.0]);
            let mut state = AdamState::new(&[&p]);
            adam_step(&mut [&mut p], &[Tensor::vector(vec![g])], &mut state, lr).unwrap();
            let exact = -lr * g / (g.abs() + state.eps);
            assert!(
                (p.data()[0] - exact).abs() <= 1e-12,
                "g={g}: update {} vs closed form {exact}",
                p.data()[0]
            );
            let eps_effect = state.eps / g.abs();
            assert!(
                (p.data()[0] + lr).abs() <= lr * eps_effect + 1e-12,
                "g={g}: update {} strays from -lr beyond the eps effect",
                p.data()[0]
            );
            assert_eq!(state.t, 1);
        }
    }

    #[test]
    fn converges_on_scalar_quadratic() {
        // minimize (x - 3)^2 from x = 0, lr = 0.01
        let mut x = Tensor::vector(vec![0.0]);
        let mut state = AdamState::new(&[&x]);
        let mut steps = 0;
        for _ in 0..2000 {
            let g = 2.0 * (x.data()[0] - 3.0);
            adam_step(
                &mut [&mut x],
                &[Tensor::vector(vec![g])],
                &mut state,
                0.01,
            )
            .unwrap();
            steps += 1;
            if (x.data()[0] - 3.0).abs() < 1e-3 {
                break;
            }
        }
        assert!(
            (x.data()[0] - 3.0).abs() < 1e-3,
            "x = {} after {steps} steps",
            x.data()[0]
        );
    }

    #[test]
    fn aborts_atomically_on_non_finite_gradient() {
        let mut p = Tensor::vector(vec![1.0]);
        let mut state = AdamState::new(&[&p]);
        let err = adam_step(
            &mut [&mut p],
            &[Tensor::vector(vec![f64::INFINITY])],
            &mut state,
            0.01,
        )
        .unwrap_err();
        assert!(err.to_string().contains("non-finite"));
        assert_eq!(p.data()[0], 1.0);
        assert_eq!(state.t, 0);
        assert_eq!(state.m[0].data()[0], 0.0);
    }

    #[test]
    fn schedule_exact_table() {
        let s = LrSchedule::default();
        for (epoch, want) in [
            (0usize, 0.01),
            (9, 0.01),
            (10, 0.001),
            (29, 0.001),
            (30, 1e-4),
            (49, 1e-4),
            (50, 1e-5),
            (100, 1e-5),
            (1000, 1e-5),
        ] {
            let got = lr_at(&s, epoch);
            assert!(
                (got - want).abs() <= f64::EPSILON * want,
                "epoch {epoch}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn schedule_is_non_increasing() {
        let s = LrSchedule::default();
        let mut prev = f64::INFINITY;
        for epoch in 0..200 {
            let lr = lr_at(&s, epoch);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn schedule_validation() {
        let mut s = LrSchedule::default();
        assert!(s.validate().is_ok());
        s.milestones = vec![10, 10];
        assert!(s.validate().is_err());
    }
}
