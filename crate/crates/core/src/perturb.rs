//! Perturbed model-based planning: add i.i.d. `Unif(0, xi)` noise to the
//! rewards of the empirical MDP, plan on the perturbed model, and return the
//! resulting policy. The perturbation breaks Q-value ties so the empirically
//! optimal policy is unique with high probability and can be recovered
//! exactly by finitely many QVI/PI iterations.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed_unit, Stream};
use crate::sampling::{empirical_mdp, sample_empirical_kernel, EmpiricalModel};
use crate::solver::{
    bellman_optimality_step, evaluate_policy_exact, greedy_policy, solve_optimal_oracle, Method,
};
use crate::types::{Policy, QVector, TabularMdp};

/// Reward-perturbation parameters. `xi` is the noise scale actually applied;
/// `alpha` and `c1` record the formula it was derived from (when it was).
/// `xi = 0` is the degenerate unperturbed case, kept available for
/// side-by-side experiments.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub xi: f64,
    pub alpha: f64,
    pub c1: f64,
    pub seed: u64,
}

impl PerturbationConfig {
    /// Explicit noise scale.
    pub fn explicit(xi: f64, seed: u64) -> Result<Self> {
        if !xi.is_finite() || xi < 0.0 {
            return Err(Error::invalid(format!("xi must be finite and nonnegative, got {xi}")));
        }
        Ok(Self { xi, alpha: 1.0, c1: 1.0, seed })
    }

    ///`xi = c1 (1-gamma) eps / (|S|^alpha |A|^alpha)`.
    pub fn from_scale_formula(
        num_states: usize,
        num_actions: usize,
        discount: f64,
        epsilon: f64,
        c1: f64,
        alpha: f64,
        seed: u64,
    ) -> Result<Self> {
        let xi = perturbation_scale(num_states, num_actions, discount, epsilon, c1, alpha)?;
        Ok(Self { xi, alpha, c1, seed })
    }

    pub fn validate(&self) -> Result<()> {
        if !self.xi.is_finite() || self.xi < 0.0 {
            return Err(Error::invalid("xi must be finite and nonnegative"));
        }
        if self.alpha < 1.0 {
            return Err(Error::invalid("alpha must be at least 1"));
        }
        if self.c1 <= 0.0 || self.c1.is_nan() {
            return Err(Error::invalid("c1 must be positive"));
        }
        Ok(())
    }
}

/// Planner parameters: target accuracy, failure probability, the sample and
/// iteration constants, and the inner optimization method.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub c0: f64,
    pub c2: f64,
    pub method: MethodChoice,
}

/// Serde-friendly mirror of [`Method`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodChoice {
    #[serde(rename = "qvi")]
    Qvi,
    #[serde(rename = "pi")]
    Pi,
}

impl From<MethodChoice> for Method {
    fn from(m: MethodChoice) -> Self {
        match m {
            MethodChoice::Qvi => Method::Qvi,
            MethodChoice::Pi => Method::Pi,
        }
    }
}

impl PlannerConfig {
    pub fn new(epsilon: f64, delta: f64, method: MethodChoice) -> Self {
        // Default universal constants; tunable, not claimed.
        Self { epsilon, delta, c0: 4.0, c2: 4.0, method }
    }

    pub fn validate_for(&self, discount: f64) -> Result<()> {
        let horizon = 1.0 / (1.0 - discount);
        if !(self.epsilon > 0.0 && self.epsilon <= horizon) {
            return Err(Error::invalid(format!(
                "epsilon must lie in (0, {horizon}], got {}",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.c0 > 0.0 && self.c2 > 0.0) {
            return Err(Error::invalid("c0 and c2 must be positive"));
        }
        Ok(())
    }
}

/// The perturbation scale `c1 (1-gamma) eps / (|S|^alpha |A|^alpha)`.
///
/// Large `alpha` underflows quickly in 64-bit arithmetic (`alpha = 5`
/// already underflows past |S||A| ~ 150); values that flush to zero are
/// rejected with guidance to lower `alpha`.
pub fn perturbation_scale(
    num_states: usize,
    num_actions: usize,
    discount: f64,
    epsilon: f64,
    c1: f64,
    alpha: f64,
) -> Result<f64> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::invalid("num_states and num_actions must be positive"));
    }
    if discount <= 0.0 || discount >= 1.0 || discount.is_nan() {
        return Err(Error::invalid("discount must lie in (0, 1)"));
    }
    if epsilon <= 0.0 || epsilon.is_nan() {
        return Err(Error::invalid("epsilon must be positive"));
    }
    if c1 <= 0.0 || c1.is_nan() {
        return Err(Error::invalid("c1 must be positive"));
    }
    if alpha < 1.0 {
        return Err(Error::invalid("alpha must be at least 1"));
    }
    let denom = (num_states as f64).powf(alpha) * (num_actions as f64).powf(alpha);
    let xi = c1 * (1.0 - discount) * epsilon / denom;
    if xi == 0.0 || !xi.is_finite() {
        return Err(Error::invalid(format!(
            "perturbation scale underflowed to {xi} at |S|={num_states}, |A|={num_actions}, alpha={alpha}; lower alpha"
        )));
    }
    Ok(xi)
}

/// Adds `zeta(s,a) ~ Unif(0, xi)` to every reward entry, keyed per pair by
/// `(seed, RewardNoise, sa)`. Kernel and discount are untouched.
pub fn perturb_rewards(mdp: &TabularMdp, cfg: &PerturbationConfig) -> Result<TabularMdp> {
    cfg.validate()?;
    if cfg.xi == 0.0 {
        return Ok(mdp.clone());
    }
    let perturbed = DVector::from_fn(mdp.num_pairs(), |i, _| {
        mdp.reward()[i] + cfg.xi * keyed_unit(cfg.seed, Stream::RewardNoise, i as u64, 0)
    });
    mdp.with_reward(perturbed)
}

/// Samples per pair demanded by the sample-size formula:
/// `ceil( c0 log(|S||A| / ((1-gamma) eps delta)) / ((1-gamma)^3 eps^2) )`.
pub fn required_sample_size(
    cfg: &PlannerConfig,
    num_states: usize,
    num_actions: usize,
    discount: f64,
) -> Result<u64> {
    cfg.validate_for(discount)?;
    if num_states == 0 || num_actions == 0 {
        return Err(Error::invalid("num_states and num_actions must be positive"));
    }
    let sa = (num_states * num_actions) as f64;
    let gap = 1.0 - discount;
    let raw = cfg.c0 * (sa / (gap * cfg.epsilon * cfg.delta)).ln() / (gap.powi(3) * cfg.epsilon * cfg.epsilon);
    if !raw.is_finite() {
        return Err(Error::invalid("sample-size formula overflowed"));
    }
    Ok(raw.ceil() as u64)
}

/// Iteration budget from the planner constants:
/// `ceil( c2/(1-gamma) * log(|S||A| / ((1-gamma) eps delta)) )`.
pub fn planned_iterations(
    cfg: &PlannerConfig,
    num_states: usize,
    num_actions: usize,
    discount: f64,
) -> usize {
    let sa = (num_states * num_actions) as f64;
    let gap = 1.0 - discount;
    (cfg.c2 / gap * (sa / (gap * cfg.epsilon * cfg.delta)).ln()).ceil().max(1.0) as usize
}

/// Output of [`plan_perturbed`]. For QVI, `q` is the final iterate the
/// greedy policy was read from; for PI it is the exact Q of the returned
/// policy.
#[derive(Clone, Debug)]
pub struct PlanResult {
    pub policy: Policy,
    pub q: QVector,
    pub iters: usize,
}

/// Builds the perturbed empirical MDP and runs the chosen method for the
/// formula-driven number of iterations. Whenever the separation gap of the
/// perturbed optimal Q exceeds twice the optimization-error bound
/// `2 gamma^{k+1} / (1-gamma)^2`, the returned policy is exactly the
/// optimal policy of the perturbed empirical MDP.
pub fn plan_perturbed(
    em: &EmpiricalModel,
    base_reward: &DVector<f64>,
    discount: f64,
    pcfg: &PerturbationConfig,
    cfg: &PlannerConfig,
) -> Result<PlanResult> {
    cfg.validate_for(discount)?;
    let m_hat = empirical_mdp(em, base_reward, discount)?;
    let m_hat_p = perturb_rewards(&m_hat, pcfg)?;
    let k = planned_iterations(cfg, m_hat_p.num_states(), m_hat_p.num_actions(), discount);

    match Method::from(cfg.method) {
        Method::Qvi => {
            let mut q = QVector(DVector::zeros(m_hat_p.num_pairs()));
            let mut iters = 0;
            for _ in 0..k {
                let next = bellman_optimality_step(&m_hat_p, &q)?;
                let stalled = next.sup_distance(&q) == 0.0;
                q = next;
                iters += 1;
                if stalled {
                    break;
                }
            }
            let policy = greedy_policy(&q, m_hat_p.num_actions())?;
            Ok(PlanResult { policy, q, iters })
        }
        Method::Pi => {
            let out = crate::solver::solve_optimal(&m_hat_p, Method::Pi, k, 1e-12)?;
            Ok(PlanResult { policy: out.policy, q: out.q, iters: out.iters })
        }
    }
}

/// End-to-end run against a known ground-truth MDP.
#[derive(Clone, Debug)]
pub struct PlanOutcome {
    pub policy: Policy,
    /// `||V* - V^pihat||_inf`, evaluated exactly on the true MDP.
    pub achieved_gap: f64,
    /// `||Q* - Q^pihat||_inf`; satisfies `q_gap <= gamma * achieved_gap`
    /// up to roundoff, since the Q difference is `gamma P (V difference)`.
    pub q_gap: f64,
    pub samples_per_pair: u64,
    pub iters: usize,
}

/// Samples `N` from the formula, plans on the perturbed empirical MDP, and
/// scores the learned policy by exact evaluation on the true model.
pub fn end_to_end(
    mdp_true: &TabularMdp,
    cfg: &PlannerConfig,
    pcfg: &PerturbationConfig,
    sample_seed: u64,
) -> Result<PlanOutcome> {
    let n = required_sample_size(cfg, mdp_true.num_states(), mdp_true.num_actions(), mdp_true.discount())?;
    let em = sample_empirical_kernel(mdp_true, n, sample_seed)?;
    let plan = plan_perturbed(&em, mdp_true.reward(), mdp_true.discount(), pcfg, cfg)?;

    let optimal = solve_optimal_oracle(mdp_true)?;
    let (v_learned, q_learned) = evaluate_policy_exact(mdp_true, &plan.policy)?;
    Ok(PlanOutcome {
        policy: plan.policy,
        achieved_gap: optimal.value.sup_distance(&v_learned),
        q_gap: optimal.q.sup_distance(&q_learned),
        samples_per_pair: n,
        iters: plan.iters,
    })
}
