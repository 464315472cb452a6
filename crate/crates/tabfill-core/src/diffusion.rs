//! Noise schedules and the Gaussian / multinomial diffusion math.
//!
//! Timesteps are 1-based: `t` ranges over `1..=t_count`, with
//! `alpha_bar_prev(1) == 1`. All operations are pure; sampling noise is
//! supplied by the caller.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Probabilities are floored at this value before any logarithm.
pub const KL_PROB_FLOOR: f64 = 1e-12;

/// Derived betas in the cosine schedule are clipped to this maximum.
pub const BETA_MAX_CLIP: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleError {
    ZeroTimesteps,
    BadBetaRange { beta_min: f64, beta_max: f64 },
    BetaOutOfRange { t: usize, beta: f64 },
}

impl core::fmt::Display for ScheduleError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ScheduleError::ZeroTimesteps => write!(f, "schedule needs at least 1 timestep"),
            ScheduleError::BadBetaRange { beta_min, beta_max } => {
                write!(f, "need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]")
            }
            ScheduleError::BetaOutOfRange { t, beta } => {
                write!(f, "beta[{t}] = {beta} outside [0, 1)")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ScheduleError {}

/// Per-timestep noise variances and the derived cumulative products.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    posterior_sigmas: Vec<f64>,
}

impl DiffusionSchedule {
    /// Builds a schedule directly from betas.
    ///
    /// Accepts `beta == 0` so tests can build degenerate identity
    /// schedules; [`make_schedule`] enforces strictly positive betas.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self, ScheduleError> {
        if betas.is_empty() {
            return Err(ScheduleError::ZeroTimesteps);
        }
        for (i, &b) in betas.iter().enumerate() {
            if !(0.0..1.0).contains(&b) || !b.is_finite() {
                return Err(ScheduleError::BetaOutOfRange { t: i + 1, beta: b });
            }
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut prod = 1.0;
        for &a in &alphas {
            prod *= a;
            alpha_bars.push(prod);
        }
        // sigma_t^2 = beta_t * (1 - abar_{t-1}) / (1 - abar_t), with
        // abar_0 = 1, so sigma_1 = 0: no noise is added at the last
        // reverse step.
        let mut posterior_sigmas = Vec::with_capacity(betas.len());
        for t in 1..=betas.len() {
            let abar_prev = if t >= 2 { alpha_bars[t - 2] } else { 1.0 };
            let denom = 1.0 - alpha_bars[t - 1];
            let var = if denom > 0.0 { betas[t - 1] * (1.0 - abar_prev) / denom } else { 0.0 };
            posterior_sigmas.push(libm::sqrt(var));
        }
        Ok(DiffusionSchedule { betas, alphas, alpha_bars, posterior_sigmas })
    }

    pub fn t_count(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    /// `alpha_bar(t - 1)`, defined as 1 for `t == 1`.
    pub fn alpha_bar_prev(&self, t: usize) -> f64 {
        if t >= 2 {
            self.alpha_bars[t - 2]
        } else {
            1.0
        }
    }

    /// Fixed reverse-process noise scale `sqrt(beta_t (1 - abar_{t-1}) / (1 - abar_t))`.
    pub fn sigma(&self, t: usize) -> f64 {
        self.posterior_sigmas[t - 1]
    }
}

/// Builds a linear or cosine schedule with `t_count` steps.
///
/// Linear: betas evenly spaced on `[beta_min, beta_max]`. Cosine:
/// `abar_t = f(t)/f(0)` with `f(t) = cos^2(((t/T + 0.008)/1.008) pi/2)`
/// and `beta_t = 1 - abar_t/abar_{t-1}` clipped to [`BETA_MAX_CLIP`];
/// the beta range arguments are ignored.
pub fn make_schedule(
    t_count: usize,
    kind: ScheduleKind,
    beta_min: f64,
    beta_max: f64,
) -> Result<DiffusionSchedule, ScheduleError> {
    if t_count == 0 {
        return Err(ScheduleError::ZeroTimesteps);
    }
    let betas = match kind {
        ScheduleKind::Linear => {
            if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
                return Err(ScheduleError::BadBetaRange { beta_min, beta_max });
            }
            if t_count == 1 {
                alloc::vec![beta_min]
            } else {
                (0..t_count)
                    .map(|i| {
                        beta_min + (beta_max - beta_min) * i as f64 / (t_count - 1) as f64
                    })
                    .collect()
            }
        }
        ScheduleKind::Cosine => {
            let f = |t: f64| {
                let c = libm::cos((t / t_count as f64 + 0.008) / 1.008
                    * core::f64::consts::FRAC_PI_2);
                c * c
            };
            let f0 = f(0.0);
            let mut betas = Vec::with_capacity(t_count);
            let mut abar_prev = 1.0;
            for t in 1..=t_count {
                let abar = f(t as f64) / f0;
                let beta = (1.0 - abar / abar_prev).min(BETA_MAX_CLIP);
                betas.push(beta);
                abar_prev = abar;
            }
            betas
        }
    };
    DiffusionSchedule::from_betas(betas)
}

/// One forward step: `x_t = sqrt(alpha_t) x_{t-1} + sqrt(beta_t) eps`.
pub fn gaussian_forward_step(
    x_prev: &[f64],
    t: usize,
    eps: &[f64],
    sched: &DiffusionSchedule,
) -> Vec<f64> {
    assert_eq!(x_prev.len(), eps.len());
    let a = libm::sqrt(sched.alpha(t));
    let b = libm::sqrt(sched.beta(t));
    x_prev.iter().zip(eps).map(|(&x, &e)| a * x + b * e).collect()
}

/// Closed-form jump to timestep `t`:
/// `x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps`.
pub fn gaussian_forward(
    x0: &[f64],
    t: usize,
    eps: &[f64],
    sched: &DiffusionSchedule,
) -> Vec<f64> {
    assert_eq!(x0.len(), eps.len());
    let abar = sched.alpha_bar(t);
    let a = libm::sqrt(abar);
    let b = libm::sqrt(1.0 - abar);
    x0.iter().zip(eps).map(|(&x, &e)| a * x + b * e).collect()
}

/// Reverse-process mean
/// `mu = (x_t - beta_t / sqrt(1 - abar_t) eps_pred) / sqrt(alpha_t)`.
///
/// The caller adds `sigma(t) * z` noise for `t > 1` and none at `t == 1`.
pub fn gaussian_reverse_mean(
    x_t: &[f64],
    eps_pred: &[f64],
    t: usize,
    sched: &DiffusionSchedule,
) -> Vec<f64> {
    assert_eq!(x_t.len(), eps_pred.len());
    let beta = sched.beta(t);
    let denom = libm::sqrt(1.0 - sched.alpha_bar(t));
    // For a degenerate beta = 0 step the coefficient is exactly 0 even
    // when 1 - abar_t is also 0.
    let coef = if beta == 0.0 { 0.0 } else { beta / denom };
    let inv_sqrt_alpha = 1.0 / libm::sqrt(sched.alpha(t));
    x_t.iter()
        .zip(eps_pred)
        .map(|(&x, &e)| inv_sqrt_alpha * (x - coef * e))
        .collect()
}

/// Mean squared error restricted to the entries where `include` is true.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskedMse {
    pub sum_sq: f64,
    pub count: usize,
}

impl MaskedMse {
    pub const EMPTY: MaskedMse = MaskedMse { sum_sq: 0.0, count: 0 };

    pub fn accumulate(&mut self, diff: f64) {
        self.sum_sq += diff * diff;
        self.count += 1;
    }

    pub fn merge(&mut self, other: MaskedMse) {
        self.sum_sq += other.sum_sq;
        self.count += other.count;
    }

    /// 0 when no entries were included; check [`has_targets`](Self::has_targets).
    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum_sq / self.count as f64
        }
    }

    pub fn has_targets(&self) -> bool {
        self.count > 0
    }
}

/// MSE between true and predicted noise over target entries only.
pub fn gaussian_loss(eps_true: &[f64], eps_pred: &[f64], target: &[bool]) -> MaskedMse {
    assert_eq!(eps_true.len(), eps_pred.len());
    assert_eq!(eps_true.len(), target.len());
    let mut mse = MaskedMse::EMPTY;
    for i in 0..eps_true.len() {
        if target[i] {
            mse.accumulate(eps_true[i] - eps_pred[i]);
        }
    }
    mse
}

/// Mixes a category distribution with the uniform distribution:
/// `abar * x0 + (1 - abar) / K`.
pub fn mix_with_uniform(x0: &[f64], alpha_bar: f64) -> Vec<f64> {
    let k = x0.len() as f64;
    x0.iter().map(|&p| alpha_bar * p + (1.0 - alpha_bar) / k).collect()
}

/// Forward marginal `q(x_t | x_0)` of the multinomial process.
pub fn multinomial_forward_probs(
    x0: &[f64],
    t: usize,
    sched: &DiffusionSchedule,
) -> Vec<f64> {
    mix_with_uniform(x0, sched.alpha_bar(t))
}

/// Posterior `q(x_{t-1} | x_t, x_0)`, normalized:
/// `pi = [alpha_t x_t + (1-alpha_t)/K] * [abar_{t-1} x0 + (1-abar_{t-1})/K]`.
///
/// `x0_probs` may be a point mass (training target) or a predicted
/// distribution (sampling). At `t == 1` the sampler decodes directly from
/// the predicted `x0` probabilities instead.
pub fn multinomial_posterior(
    x_t: &[f64],
    x0_probs: &[f64],
    t: usize,
    sched: &DiffusionSchedule,
) -> Vec<f64> {
    assert_eq!(x_t.len(), x0_probs.len());
    let k = x_t.len() as f64;
    let alpha = sched.alpha(t);
    let abar_prev = sched.alpha_bar_prev(t);
    let mut pi: Vec<f64> = x_t
        .iter()
        .zip(x0_probs)
        .map(|(&xt, &x0)| {
            (alpha * xt + (1.0 - alpha) / k) * (abar_prev * x0 + (1.0 - abar_prev) / k)
        })
        .collect();
    let sum: f64 = pi.iter().sum();
    for p in pi.iter_mut() {
        *p /= sum;
    }
    pi
}

/// `KL(q || p) = sum q ln(q / p)` with `p` floored at [`KL_PROB_FLOOR`]
/// and `0 ln(0/.) = 0`. Natural log.
pub fn categorical_kl(q: &[f64], p: &[f64]) -> f64 {
    assert_eq!(q.len(), p.len());
    let mut kl = 0.0;
    for (&qi, &pi) in q.iter().zip(p) {
        if qi > 0.0 {
            kl += qi * libm::log(qi / pi.max(KL_PROB_FLOOR));
        }
    }
    kl
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_linear_schedule() {
        let s = make_schedule(1, ScheduleKind::Linear, 0.5, 0.5).unwrap();
        assert_eq!(s.beta(1), 0.5);
        assert_eq!(s.alpha_bar(1), 0.5);
        assert_eq!(s.alpha_bar_prev(1), 1.0);
        assert_eq!(s.sigma(1), 0.0);
    }

    #[test]
    fn alpha_bar_strictly_decreasing() {
        for sched in [
            make_schedule(100, ScheduleKind::Linear, 1e-4, 0.02).unwrap(),
            make_schedule(100, ScheduleKind::Cosine, 0.0, 0.0).unwrap(),
        ] {
            for t in 2..=sched.t_count() {
                assert!(sched.alpha_bar(t) < sched.alpha_bar(t - 1));
                assert!(sched.beta(t) > 0.0 && sched.beta(t) < 1.0);
            }
        }
    }

    #[test]
    fn cosine_matches_direct_formula() {
        // Frozen from direct evaluation of f(t)/f(0) at T = 4; the final
        // step's ratio exceeds the 0.999 beta clip, so abar_4 follows the
        // clipped product abar_3 * (1 - 0.999) instead.
        let s = make_schedule(4, ScheduleKind::Cosine, 0.0, 0.0).unwrap();
        let expected = [
            0.84701216132690473,
            0.49384359044063771,
            0.14427210238573571,
            0.14427210238573571e-3,
        ];
        for (t, &want) in expected.iter().enumerate() {
            let got = s.alpha_bar(t + 1);
            assert!(
                (got - want).abs() < 1e-12 * want.max(1e-3),
                "t={} got={got} want={want}",
                t + 1
            );
        }
        assert_eq!(s.beta(4), BETA_MAX_CLIP);
    }

    #[test]
    fn forward_degenerate_cases() {
        let s = make_schedule(10, ScheduleKind::Linear, 0.01, 0.2).unwrap();
        let x0 = [1.5, -0.5];
        let zero = [0.0, 0.0];
        let eps = [0.3, -1.1];

        let xt = gaussian_forward(&x0, 7, &zero, &s);
        let a = libm::sqrt(s.alpha_bar(7));
        assert!((xt[0] - a * 1.5).abs() < 1e-15);
        assert!((xt[1] + a * 0.5).abs() < 1e-15);

        let xt = gaussian_forward(&zero, 7, &eps, &s);
        let b = libm::sqrt(1.0 - s.alpha_bar(7));
        assert!((xt[0] - b * 0.3).abs() < 1e-15);

        // Degenerate identity schedule: beta -> 0 keeps x_t = x_0.
        let id = DiffusionSchedule::from_betas(alloc::vec![0.0, 0.0]).unwrap();
        assert_eq!(gaussian_forward(&x0, 2, &eps, &id), x0.to_vec());
    }

    #[test]
    fn reverse_mean_degenerate_cases() {
        let id = DiffusionSchedule::from_betas(alloc::vec![0.0]).unwrap();
        let x_t = [0.7, -2.0];
        assert_eq!(gaussian_reverse_mean(&x_t, &[1.0, 1.0], 1, &id), x_t.to_vec());

        let s = make_schedule(5, ScheduleKind::Linear, 0.05, 0.3).unwrap();
        let mu = gaussian_reverse_mean(&x_t, &[0.0, 0.0], 3, &s);
        let want = x_t[0] / libm::sqrt(s.alpha(3));
        assert!((mu[0] - want).abs() < 1e-15);
    }

    #[test]
    fn reverse_mean_hand_computed() {
        // alpha_2 = 0.99, abar_2 = 0.9 via betas [1 - 0.9/0.99, 0.01];
        // mu for x_t = 1, eps = 0.5 frozen from direct substitution into
        // the reverse-mean formula.
        let s = DiffusionSchedule::from_betas(alloc::vec![1.0 - 0.9 / 0.99, 0.01]).unwrap();
        assert!((s.alpha(2) - 0.99).abs() < 1e-15);
        assert!((s.alpha_bar(2) - 0.9).abs() < 1e-15);
        let mu = gaussian_reverse_mean(&[1.0], &[0.5], 2, &s);
        assert!((mu[0] - 0.98914677210511887).abs() < 1e-12);
    }

    #[test]
    fn forward_then_reverse_recovers_x0_for_tiny_beta() {
        let s = DiffusionSchedule::from_betas(alloc::vec![1e-14; 5]).unwrap();
        let x0 = [0.4, -1.2, 2.0];
        let eps = [1.0, -0.5, 0.25];
        for t in 1..=5 {
            let xt = gaussian_forward(&x0, t, &eps, &s);
            let mu = gaussian_reverse_mean(&xt, &eps, t, &s);
            for i in 0..3 {
                assert!((mu[i] - x0[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn two_forward_steps_match_composed_closed_form() {
        let s = make_schedule(2, ScheduleKind::Linear, 0.1, 0.3).unwrap();
        let x0 = [0.8, -0.3, 1.7];
        let e1 = [0.5, -1.0, 0.2];
        let e2 = [-0.7, 0.4, 1.1];
        let x1 = gaussian_forward_step(&x0, 1, &e1, &s);
        let x2 = gaussian_forward_step(&x1, 2, &e2, &s);

        // Reparametrized combined noise for the closed form.
        let (b1, b2, a2) = (s.beta(1), s.beta(2), s.alpha(2));
        let denom = libm::sqrt(1.0 - s.alpha_bar(2));
        let eps: Vec<f64> = e1
            .iter()
            .zip(&e2)
            .map(|(&u, &v)| (libm::sqrt(a2 * b1) * u + libm::sqrt(b2) * v) / denom)
            .collect();
        let direct = gaussian_forward(&x0, 2, &eps, &s);
        for i in 0..3 {
            assert!((x2[i] - direct[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn masked_mse_cases() {
        let l = gaussian_loss(&[1.0, 2.0], &[1.0, 2.0], &[true, true]);
        assert_eq!(l.mean(), 0.0);
        assert!(l.has_targets());

        let l = gaussian_loss(&[3.0, 0.0], &[1.0, 5.0], &[true, false]);
        assert_eq!(l.mean(), 4.0);
        assert_eq!(l.count, 1);

        let l = gaussian_loss(&[3.0], &[1.0], &[false]);
        assert_eq!(l.mean(), 0.0);
        assert!(!l.has_targets());
    }

    #[test]
    fn uniform_mixing() {
        assert_eq!(mix_with_uniform(&[1.0, 0.0], 1.0), alloc::vec![1.0, 0.0]);
        assert_eq!(mix_with_uniform(&[1.0, 0.0, 0.0], 0.0), alloc::vec![1.0 / 3.0; 3]);
        // K = 2, abar = 0.5: 0.5 * [1,0] + 0.25 = [0.75, 0.25].
        assert_eq!(mix_with_uniform(&[1.0, 0.0], 0.5), alloc::vec![0.75, 0.25]);
    }

    #[test]
    fn posterior_point_mass_under_identity_schedule() {
        let id = DiffusionSchedule::from_betas(alloc::vec![0.0, 0.0]).unwrap();
        let x_t = [0.0, 1.0, 0.0];
        let pi = multinomial_posterior(&x_t, &x_t, 2, &id);
        assert_eq!(pi, alloc::vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn posterior_with_uniform_x0_follows_first_factor() {
        let s = make_schedule(4, ScheduleKind::Linear, 0.1, 0.4).unwrap();
        let x_t = [1.0, 0.0, 0.0];
        let uniform = [1.0 / 3.0; 3];
        let pi = multinomial_posterior(&x_t, &uniform, 3, &s);
        let alpha = s.alpha(3);
        let mut want: Vec<f64> =
            x_t.iter().map(|&x| alpha * x + (1.0 - alpha) / 3.0).collect();
        let sum: f64 = want.iter().sum();
        want.iter_mut().for_each(|w| *w /= sum);
        for i in 0..3 {
            assert!((pi[i] - want[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn posterior_hand_computed() {
        // betas [0.5, 0.1] give alpha_2 = 0.9, abar_1 = 0.5; expected
        // values frozen from elementwise product + normalization.
        let s = DiffusionSchedule::from_betas(alloc::vec![0.5, 0.1]).unwrap();
        let pi = multinomial_posterior(&[0.0, 1.0, 0.0], &[0.7, 0.2, 0.1], 2, &s);
        let want = [0.063008130081300813, 0.91056910569105691, 0.026422764227642276];
        for i in 0..3 {
            assert!((pi[i] - want[i]).abs() < 1e-12);
        }
        let sum: f64 = pi.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kl_cases() {
        assert_eq!(categorical_kl(&[0.4, 0.6], &[0.4, 0.6]), 0.0);
        let kl = categorical_kl(&[1.0, 0.0], &[0.5, 0.5]);
        assert!((kl - core::f64::consts::LN_2).abs() < 1e-15);
        // Frozen from direct summation.
        let kl = categorical_kl(&[0.7, 0.3], &[0.3, 0.7]);
        assert!((kl - 0.33891914415488145).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_schedule(0, ScheduleKind::Linear, 0.1, 0.2).is_err());
        assert!(make_schedule(5, ScheduleKind::Linear, 0.0, 0.2).is_err());
        assert!(make_schedule(5, ScheduleKind::Linear, 0.3, 0.2).is_err());
        assert!(make_schedule(5, ScheduleKind::Linear, 0.3, 1.0).is_err());
        assert!(DiffusionSchedule::from_betas(alloc::vec![1.0]).is_err());
    }
}
