//! Bellman operators and exact solvers for tabular MDPs.
//!
//! Policy evaluation solves the linear system `(I - gamma P_pi) V = r_pi`
//! by dense LU with partial pivoting, which is exact up to roundoff for the
//! instance sizes this toolkit targets (|S| <= 2000). Planning is offered
//! both as Q-value iteration (fixed-point iteration of the optimality
//! operator, a gamma-contraction in the sup norm) and as policy iteration
//! (greedy improvement against exact evaluations, which terminates in
//! finitely many steps under a deterministic tie-break).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::types::{Policy, PolicyMatrices, QVector, TabularMdp, ValueVector};

/// Relative residual tolerance for the exact policy-evaluation solve.
const EVAL_RESIDUAL_TOL: f64 = 1e-10;

/// Variance entries below this are treated as corrupted rather than noise.
const VARIANCE_NEG_TOL: f64 = -1e-9;

/// Builds the projection `Pi^pi`, the induced stochastic matrices
/// `P^pi = P Pi^pi` and `P_pi = Pi^pi P`, and the restricted reward `r_pi`.
pub fn policy_matrices(mdp: &TabularMdp, pi: &Policy) -> Result<PolicyMatrices> {
    pi.validate_for(mdp)?;
    let (s_n, a_n) = (mdp.num_states(), mdp.num_actions());
    let pairs = s_n * a_n;

    let mut projection = DMatrix::zeros(s_n, pairs);
    let mut r_pi = DVector::zeros(s_n);
    for s in 0..s_n {
        let col = mdp.sa(s, pi.action(s));
        projection[(s, col)] = 1.0;
        r_pi[s] = mdp.reward()[col];
    }

    // P_pi(s, s') = P(s' | s, pi(s)): row selection, no arithmetic.
    let mut p_sub = DMatrix::zeros(s_n, s_n);
    for s in 0..s_n {
        p_sub.set_row(s, &mdp.kernel().row(mdp.sa(s, pi.action(s))));
    }
    // P^pi(sa, s'a') = P(s' | sa) 1{a' = pi(s')}: column scatter.
    let mut p_super = DMatrix::zeros(pairs, pairs);
    for i in 0..pairs {
        for s_next in 0..s_n {
            let p = mdp.kernel()[(i, s_next)];
            if p != 0.0 {
                p_super[(i, mdp.sa(s_next, pi.action(s_next)))] = p;
            }
        }
    }

    Ok(PolicyMatrices { projection, p_super, p_sub, r_pi })
}

/// LU factorization of `(I - gamma P_pi)`, reusable across right-hand sides.
///
/// Nonsingular for any row-stochastic `P_pi` and `gamma < 1`, since the
/// spectral radius of `gamma P_pi` is at most `gamma`.
pub struct Resolvent {
    lu: nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    matrix: DMatrix<f64>,
    dim: usize,
}

impl Resolvent {
    /// Factorizes `I - gamma * p` for a square row-stochastic `p`.
    pub fn new(p: &DMatrix<f64>, gamma: f64) -> Result<Self> {
        if p.nrows() != p.ncols() {
            return Err(Error::dims(format!(
                "resolvent needs a square matrix, got {} x {}",
                p.nrows(),
                p.ncols()
            )));
        }
        let dim = p.nrows();
        let matrix = DMatrix::identity(dim, dim) - p * gamma;
        let lu = nalgebra::linalg::LU::new(matrix.clone());
        Ok(Self { lu, matrix, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Solves `(I - gamma P) x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        if b.len() != self.dim {
            return Err(Error::dims(format!(
                "rhs length {} does not match system dimension {}",
                b.len(),
                self.dim
            )));
        }
        self.lu
            .solve(b)
            .ok_or_else(|| Error::numerical("LU solve failed on (I - gamma P); matrix singular"))
    }

    /// Solve with a residual guarantee: `||(I - gamma P) x - b||_inf`
    /// must not exceed `tol * (1 + ||b||_inf)`.
    pub fn solve_checked(&self, b: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
        let x = self.solve(b)?;
        let residual = (&self.matrix * &x - b).amax();
        let bound = tol * (1.0 + b.amax());
        if residual > bound {
            return Err(Error::numerical(format!(
                "policy-evaluation residual {residual:.3e} exceeds {bound:.3e}"
            )));
        }
        Ok(x)
    }

    /// The dense inverse `(I - gamma P)^-1`, column by column.
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        let mut inv = DMatrix::zeros(self.dim, self.dim);
        let mut e = DVector::zeros(self.dim);
        for j in 0..self.dim {
            e[j] = 1.0;
            let col = self.solve(&e)?;
            inv.set_column(j, &col);
            e[j] = 0.0;
        }
        Ok(inv)
    }
}

/// Exact policy evaluation: `V = (I - gamma P_pi)^-1 r_pi`, `Q = r + gamma P V`.
pub fn evaluate_policy_exact(mdp: &TabularMdp, pi: &Policy) -> Result<(ValueVector, QVector)> {
    let mats = policy_matrices(mdp, pi)?;
    let resolvent = Resolvent::new(&mats.p_sub, mdp.discount())?;
    let v = resolvent.solve_checked(&mats.r_pi, EVAL_RESIDUAL_TOL)?;
    let q = mdp.reward() + mdp.kernel() * &v * mdp.discount();
    Ok((ValueVector(v), QVector(q)))
}

/// One application of the Bellman optimality operator
/// `T(Q)(s,a) = r(s,a) + gamma sum_s' P(s'|s,a) max_a' Q(s',a')`.
pub fn bellman_optimality_step(mdp: &TabularMdp, q: &QVector) -> Result<QVector> {
    if q.len() != mdp.num_pairs() {
        return Err(Error::dims(format!(
            "Q has length {}, expected {}",
            q.len(),
            mdp.num_pairs()
        )));
    }
    let v_max = state_maxima(&q.0, mdp.num_actions());
    let out = mdp.reward() + mdp.kernel() * &v_max * mdp.discount();
    Ok(QVector(out))
}

/// Per-state maxima of a flattened Q vector.
fn state_maxima(q: &DVector<f64>, num_actions: usize) -> DVector<f64> {
    let num_states = q.len() / num_actions;
    DVector::from_fn(num_states, |s, _| {
        (0..num_actions)
            .map(|a| q[s * num_actions + a])
            .fold(f64::NEG_INFINITY, f64::max)
    })
}

/// Greedy action extraction; ties go to the smallest action index so that
/// every run of every solver is reproducible.
pub fn greedy_policy(q: &QVector, num_actions: usize) -> Result<Policy> {
    if num_actions == 0 || !q.len().is_multiple_of(num_actions) {
        return Err(Error::dims(format!(
            "Q length {} is not a multiple of num_actions {num_actions}",
            q.len()
        )));
    }
    if q.0.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("Q contains non-finite entries"));
    }
    let num_states = q.len() / num_actions;
    let actions = (0..num_states)
        .map(|s| {
            let mut best = 0;
            for a in 1..num_actions {
                if q.0[s * num_actions + a] > q.0[s * num_actions + best] {
                    best = a;
                }
            }
            best
        })
        .collect();
    Ok(Policy::new(actions))
}

/// Per-row variance of `v` under each distribution in `kernel_rows`:
/// `Var(row) = sum_i p_i v_i^2 - (sum_i p_i v_i)^2`.
///
/// Tiny negative values from cancellation are clamped to zero; anything
/// below -1e-9 is reported as numerical corruption.
pub fn variance_of_value(kernel_rows: &DMatrix<f64>, v: &ValueVector) -> Result<DVector<f64>> {
    if kernel_rows.ncols() != v.len() {
        return Err(Error::dims(format!(
            "kernel has {} columns, value vector has length {}",
            kernel_rows.ncols(),
            v.len()
        )));
    }
    let v_sq = v.0.component_mul(&v.0);
    let mean = kernel_rows * &v.0;
    let second = kernel_rows * v_sq;
    let mut var = second - mean.component_mul(&mean);
    for x in var.iter_mut() {
        if *x < 0.0 {
            if *x < VARIANCE_NEG_TOL {
                return Err(Error::numerical(format!(
                    "variance entry {x:.3e} below {VARIANCE_NEG_TOL:e}"
                )));
            }
            *x = 0.0;
        }
    }
    Ok(var)
}

/// Planning method selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Q-value iteration from `Q = 0`.
    Qvi,
    /// Policy iteration with exact evaluation at every step.
    Pi,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qvi" => Ok(Method::Qvi),
            "pi" => Ok(Method::Pi),
            other => Err(Error::invalid(format!("unknown method `{other}` (use qvi|pi)"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Qvi => "qvi",
            Method::Pi => "pi",
        })
    }
}

/// Result of [`solve_optimal`]: the returned `value`/`q` are always the
/// exact evaluation of `policy`, regardless of the method used to find it.
#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub policy: Policy,
    pub value: ValueVector,
    pub q: QVector,
    pub iters: usize,
    pub converged: bool,
}

/// Finds an optimal policy.
///
/// QVI iterates the optimality operator until
/// `||Q_{k+1} - Q_k||_inf <= tol (1-gamma) / (2 gamma)`, which makes the
/// greedy policy of the final iterate `tol`-optimal; PI alternates greedy
/// improvement and exact evaluation until the policy is stationary. Hitting
/// `max_iters` returns the best iterate with `converged = false`.
pub fn solve_optimal(
    mdp: &TabularMdp,
    method: Method,
    max_iters: usize,
    tol: f64,
) -> Result<SolveOutcome> {
    if max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    if tol <= 0.0 || tol.is_nan() {
        return Err(Error::invalid("tol must be positive"));
    }
    match method {
        Method::Qvi => {
            let gamma = mdp.discount();
            let stop = tol * (1.0 - gamma) / (2.0 * gamma);
            let mut q = QVector(DVector::zeros(mdp.num_pairs()));
            let mut iters = 0;
            let mut converged = false;
            while iters < max_iters {
                let next = bellman_optimality_step(mdp, &q)?;
                let diff = next.sup_distance(&q);
                q = next;
                iters += 1;
                if diff <= stop {
                    converged = true;
                    break;
                }
            }
            let policy = greedy_policy(&q, mdp.num_actions())?;
            let (value, q_exact) = evaluate_policy_exact(mdp, &policy)?;
            Ok(SolveOutcome { policy, value, q: q_exact, iters, converged })
        }
        Method::Pi => {
            // Start greedy on immediate rewards.
            let mut policy = greedy_policy(&QVector(mdp.reward().clone()), mdp.num_actions())?;
            let mut iters = 0;
            let mut converged = false;
            let (mut value, mut q) = evaluate_policy_exact(mdp, &policy)?;
            while iters < max_iters {
                let improved = greedy_policy(&q, mdp.num_actions())?;
                iters += 1;
                if improved == policy {
                    converged = true;
                    break;
                }
                policy = improved;
                let (v_new, q_new) = evaluate_policy_exact(mdp, &policy)?;
                value = v_new;
                q = q_new;
            }
            Ok(SolveOutcome { policy, value, q, iters, converged })
        }
    }
}

/// Exact optimum for oracle use: PI with a generous iteration budget.
pub fn solve_optimal_oracle(mdp: &TabularMdp) -> Result<SolveOutcome> {
    let out = solve_optimal(mdp, Method::Pi, 100_000, 1e-10)?;
    if !out.converged {
        return Err(Error::numerical("policy iteration failed to reach a fixed point"));
    }
    Ok(out)
}
