//! Squashed-Gaussian policy head.
//!
//! The actor network outputs `2 * action_dim` values: a pre-squash mean and a
//! log standard deviation (clamped to `[-20, 2]`). Actions are squashed to the
//! action box via `a = c + h * tanh(u / h)` where `c` is the box center and
//! `h` the per-dimension half range. Dividing by `h` inside the tanh makes the
//! head degenerate to an unbounded Gaussian as the bounds widen.

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

const LOG_STD_MIN: f64 = -20.0;
const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8; // 0.5 * ln(2*pi)
const PREIMAGE_EPS: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GaussianPolicyHead {
    pub action_low: Array1<f64>,
    pub action_high: Array1<f64>,
}

/// Everything about one sampled action needed to backpropagate through it.
#[derive(Debug, Clone)]
pub struct SampledAction {
    pub action: Array1<f64>,
    /// Standard-normal noise used for the reparameterized sample.
    pub eps: Array1<f64>,
    /// `tanh(u / h)` per dimension.
    pub squash: Array1<f64>,
    pub sigma: Array1<f64>,
    /// 1.0 where the raw log-std was inside the clamp range, else 0.0.
    pub clamp_mask: Array1<f64>,
    pub log_prob: f64,
}

impl GaussianPolicyHead {
    pub fn new(action_low: Array1<f64>, action_high: Array1<f64>) -> Result<Self> {
        if action_low.len() != action_high.len() {
            return Err(Error::Config("action bound lengths differ".into()));
        }
        if action_low
            .iter()
            .zip(action_high.iter())
            .any(|(l, h)| !(l < h))
        {
            return Err(Error::Config("action_low must be < action_high".into()));
        }
        Ok(GaussianPolicyHead {
            action_low,
            action_high,
        })
    }

    /// Symmetric unit box `[-1, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        GaussianPolicyHead {
            action_low: Array1::from_elem(dim, -1.0),
            action_high: Array1::from_elem(dim, 1.0),
        }
    }

    pub fn action_dim(&self) -> usize {
        self.action_low.len()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.action_dim()
    }

    fn center(&self, d: usize) -> f64 {
        0.5 * (self.action_low[d] + self.action_high[d])
    }

    fn half(&self, d: usize) -> f64 {
        0.5 * (self.action_high[d] - self.action_low[d])
    }

    fn check_output(&self, o: ArrayView1<f64>) -> Result<()> {
        if o.len() != self.output_dim() {
            return Err(Error::DimMismatch {
                expected: self.output_dim(),
                got: o.len(),
                context: "policy head input",
            });
        }
        Ok(())
    }

    /// Clamped log-std and a clamp mask (1 inside the range, 0 where clamped).
    fn log_std(&self, o: ArrayView1<f64>, d: usize) -> (f64, f64) {
        let raw = o[self.action_dim() + d];
        if raw < LOG_STD_MIN {
            (LOG_STD_MIN, 0.0)
        } else if raw > LOG_STD_MAX {
            (LOG_STD_MAX, 0.0)
        } else {
            (raw, 1.0)
        }
    }

    /// Deterministic (mean) action.
    pub fn mean_action(&self, o: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_output(o)?;
        let a = self.action_dim();
        let mut out = Array1::zeros(a);
        for d in 0..a {
            let h = self.half(d);
            out[d] = self.center(d) + h * (o[d] / h).tanh();
        }
        Ok(out)
    }

    /// Reparameterized sample `a = c + h * tanh((m + sigma*eps)/h)`.
    pub fn sample<R: Rng + ?Sized>(&self, o: ArrayView1<f64>, rng: &mut R) -> Result<SampledAction> {
        self.check_output(o)?;
        let a = self.action_dim();
        let mut action = Array1::zeros(a);
        let mut eps = Array1::zeros(a);
        let mut squash = Array1::zeros(a);
        let mut sigma = Array1::zeros(a);
        let mut clamp_mask = Array1::zeros(a);
        let mut log_prob = 0.0;
        for d in 0..a {
            let m = o[d];
            let (l, mask) = self.log_std(o, d);
            let s = l.exp();
            let e: f64 = rng.sample(StandardNormal);
            let h = self.half(d);
            let u = m + s * e;
            let x = (u / h).tanh();
            action[d] = self.center(d) + h * x;
            eps[d] = e;
            squash[d] = x;
            sigma[d] = s;
            clamp_mask[d] = mask;
            log_prob += -0.5 * e * e - l - HALF_LN_2PI - (1.0 - x * x).max(1e-300).ln();
        }
        Ok(SampledAction {
            action,
            eps,
            squash,
            sigma,
            clamp_mask,
            log_prob,
        })
    }

    /// Log-density of `action` under the squashed Gaussian, including the
    /// squash Jacobian correction. Actions on (or outside) the bounds are
    /// clamped to an interior pre-image with epsilon 1e-6.
    pub fn log_prob(&self, o: ArrayView1<f64>, action: ArrayView1<f64>) -> Result<f64> {
        Ok(self.log_prob_with_output_grad(o, action)?.0)
    }

    /// Log-density plus its gradient with respect to the head input `o`
    /// (mean entries first, then log-std entries; clamped log-std entries get
    /// zero gradient).
    pub fn log_prob_with_output_grad(
        &self,
        o: ArrayView1<f64>,
        action: ArrayView1<f64>,
    ) -> Result<(f64, Array1<f64>)> {
        self.check_output(o)?;
        let a = self.action_dim();
        if action.len() != a {
            return Err(Error::DimMismatch {
                expected: a,
                got: action.len(),
                context: "policy head action",
            });
        }
        let mut grad = Array1::zeros(2 * a);
        let mut logp = 0.0;
        for d in 0..a {
            let m = o[d];
            let (l, mask) = self.log_std(o, d);
            let s = l.exp();
            let h = self.half(d);
            let x = ((action[d] - self.center(d)) / h).clamp(-1.0 + PREIMAGE_EPS, 1.0 - PREIMAGE_EPS);
            let u = h * atanh(x);
            let z = (u - m) / s;
            logp += -0.5 * z * z - l - HALF_LN_2PI - (1.0 - x * x).ln();
            grad[d] = z / s;
            grad[a + d] = (z * z - 1.0) * mask;
        }
        Ok((logp, grad))
    }

    /// Gradient (w.r.t. the head input `o`) of the per-sample SAC actor loss
    /// `-(q - alpha * log_prob)` at a reparameterized sample, where `dq_da` is
    /// the critic's gradient with respect to the action.
    pub fn sac_actor_output_grad(
        &self,
        sample: &SampledAction,
        dq_da: ArrayView1<f64>,
        alpha: f64,
    ) -> Array1<f64> {
        let a = self.action_dim();
        let mut grad = Array1::zeros(2 * a);
        for d in 0..a {
            let h = self.half(d);
            let x = sample.squash[d];
            let da_du = 1.0 - x * x;
            let dlogp_du = 2.0 * x / h;
            let se = sample.sigma[d] * sample.eps[d];
            // d/dm of (alpha*logp - q)
            let dm = alpha * dlogp_du - dq_da[d] * da_du;
            // d/dl adds the direct -l density term and the u = m + e^l*eps path
            let dl = alpha * (-1.0 + dlogp_du * se) - dq_da[d] * da_du * se;
            grad[d] = dm;
            grad[a + d] = dl * sample.clamp_mask[d];
        }
        grad
    }
}

fn atanh(x: f64) -> f64 {
    0.5 * ((1.0 + x) / (1.0 - x)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Mlp};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standard_normal_at_mode_in_wide_bound_limit() {
        let head = GaussianPolicyHead::new(array![-1e6], array![1e6]).unwrap();
        let o = array![0.0, 0.0]; // mean 0, log-std 0
        let lp = head.log_prob(o.view(), array![0.0].view()).unwrap();
        assert_abs_diff_eq!(lp, -HALF_LN_2PI, epsilon = 1e-9);
    }

    #[test]
    fn sampled_actions_respect_bounds_and_finite_logp() {
        let head = GaussianPolicyHead::new(array![-1.0, 0.5], array![1.0, 2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let o = array![0.3, -4.0, 1.5, 0.5]; // deliberately extreme mean/log-std
        for _ in 0..500 {
            let s = head.sample(o.view(), &mut rng).unwrap();
            for d in 0..2 {
                assert!(s.action[d] > head.action_low[d] && s.action[d] < head.action_high[d]);
            }
            assert!(s.log_prob.is_finite());
        }
    }

    #[test]
    fn density_integrates_to_one() {
        // numerical quadrature oracle over a fine 1-D grid
        let head = GaussianPolicyHead::new(array![-2.0], array![3.0]).unwrap();
        let o = array![0.4, -0.3];
        let n = 200_000;
        let (lo, hi) = (-2.0 + 1e-9, 3.0 - 1e-9);
        let dx = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            let a = lo + (i as f64 + 0.5) * dx;
            total += head.log_prob(o.view(), array![a].view()).unwrap().exp() * dx;
        }
        assert!((total - 1.0).abs() < 1e-3, "integral {total}");
    }

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        // gradient w.r.t. actor parameters through a small net, rel err < 1e-4
        let head = GaussianPolicyHead::unit(2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Mlp::new(&[3, 6, 4], Activation::Tanh, &mut rng).unwrap();
        let state = array![0.2, -0.5, 0.9];
        let action = array![0.3, -0.6];

        let o = net.forward(state.view()).unwrap();
        let (_, dlogp_do) = head.log_prob_with_output_grad(o.view(), action.view()).unwrap();
        let (grads, _) = net.backward_single(state.view(), dlogp_do.view()).unwrap();
        let analytic = grads.to_flat();

        let numeric = crate::nn::gradcheck::numerical_grad(
            &net,
            &mut |n| {
                let o = n.forward(state.view()).unwrap();
                head.log_prob(o.view(), action.view()).unwrap()
            },
            1e-5,
        );
        let err = crate::nn::gradcheck::max_rel_err(&analytic, &numeric);
        assert!(err < 1e-4, "max rel err {err}");
    }

    #[test]
    fn boundary_action_is_clamped_not_an_error() {
        let head = GaussianPolicyHead::unit(1);
        let o = array![0.0, 0.0];
        let lp = head.log_prob(o.view(), array![1.0].view()).unwrap();
        assert!(lp.is_finite());
    }

    #[test]
    fn mean_action_is_squashed_mean() {
        let head = GaussianPolicyHead::new(array![0.0], array![4.0]).unwrap();
        let o = array![1.0, -3.0];
        let a = head.mean_action(o.view()).unwrap();
        assert_abs_diff_eq!(a[0], 2.0 + 2.0 * (1.0f64 / 2.0).tanh(), epsilon = 1e-12);
    }
}
