//! Experiment sweeps over `(discount, n, seed)` grids, CSV emission, and
//! log-log slope fitting for the error-scaling laws.
//!
//! A sweep is deterministic for a fixed spec: cells draw all randomness
//! from keyed streams, run independently (in parallel), and are sorted by
//! `(discount, n, seed)` before emission. The one non-reproducible field is
//! `wall_time_ms`, which records real elapsed time; byte-level
//! reproducibility of the CSV is defined over the remaining columns.
//!
//! Per mode:
//! * `plan`: sample an empirical kernel, plan on the perturbed empirical
//!   MDP, score the learned policy exactly on the true MDP. `bound_instance`
//!   is the statistical half of the planning bound, `bound_worst` the full
//!   bound including the perturbation shift `2 xi / (1-gamma)`.
//! * `evaluate`: plug-in evaluation of the true MDP's optimal policy (fixed,
//!   hence independent of the samples); bounds from the evaluation report.
//! * `lemmas`: per-seed hard-assertion battery; `error_sup` is the worst
//!   violation margin (0 when everything holds).
//! * `tiebreak`: per-(discount, seed) certification; `error_sup` is the
//!   failure rate, `bound_instance` the separation threshold, `bound_worst`
//!   the certification acceptance level. The `n` column records the trial
//!   count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::families::{generate_mdp, MdpFamily};
use crate::perturb::{
    perturbation_scale, plan_perturbed, MethodChoice, PerturbationConfig, PlannerConfig,
};
use crate::bounds::eval_bound_report;
use crate::rng::{derive_seed, Stream};
use crate::sampling::sample_empirical_kernel;
use crate::solver::{evaluate_policy_exact, solve_optimal_oracle};
use crate::tiebreak::certify_tie_breaking;
use crate::verify::{absorbing_equivalence_deviation, resolvent_check};
use crate::types::Policy;

/// What a sweep cell runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepMode {
    #[serde(rename = "plan")]
    Plan,
    #[serde(rename = "evaluate")]
    Evaluate,
    #[serde(rename = "lemmas")]
    Lemmas,
    #[serde(rename = "tiebreak")]
    Tiebreak,
}

fn default_method() -> MethodChoice {
    MethodChoice::Pi
}

fn default_c0() -> f64 {
    4.0
}

fn default_c1() -> f64 {
    1.0
}

fn default_c2() -> f64 {
    4.0
}

fn default_alpha() -> f64 {
    1.0
}

fn default_trials() -> u64 {
    1000
}

/// Grid specification for a sweep. JSON field names match the struct.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub family: MdpFamily,
    pub num_states: usize,
    pub num_actions: usize,
    pub discounts: Vec<f64>,
    pub sample_sizes: Vec<u64>,
    pub epsilon: f64,
    pub delta: f64,
    pub seeds: Vec<u64>,
    pub mode: SweepMode,
    #[serde(default)]
    pub output_path: String,
    /// Fixed noise scale; when absent, `xi` comes from the scale formula
    /// with `(c1, alpha)`.
    #[serde(default)]
    pub xi: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default = "default_c0")]
    pub c0: f64,
    #[serde(default = "default_c2")]
    pub c2: f64,
    #[serde(default = "default_method")]
    pub method: MethodChoice,
    /// Trials per certification cell (tiebreak mode).
    #[serde(default = "default_trials")]
    pub trials: u64,
    /// Seed for the instance generator (kept apart from sampling seeds so
    /// the instance is fixed across the grid).
    #[serde(default)]
    pub instance_seed: u64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.discounts.is_empty() || self.seeds.is_empty() {
            return Err(Error::invalid("discount and seed grids must be nonempty"));
        }
        if matches!(self.mode, SweepMode::Plan | SweepMode::Evaluate) && self.sample_sizes.is_empty() {
            return Err(Error::invalid("sample-size grid must be nonempty"));
        }
        for g in &self.discounts {
            if *g <= 0.0 || *g >= 1.0 || g.is_nan() {
                return Err(Error::invalid(format!("discount {g} outside (0, 1)")));
            }
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// One sweep cell's outcome.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRecord {
    pub family: MdpFamily,
    pub discount: f64,
    pub n: u64,
    pub seed: u64,
    pub error_sup: f64,
    pub bound_instance: f64,
    pub bound_worst: f64,
    pub wall_time_ms: u64,
}

/// Statistical half of the planning error bound at separation level omega.
fn planning_bound(sa: f64, gamma: f64, omega: f64, delta: f64, n: f64) -> f64 {
    let gap = 1.0 - gamma;
    let log_factor = (32.0 * sa / (gap.powi(3) * omega * delta)).ln();
    (2.0 * log_factor / (n * gap.powi(3))).sqrt()
}

fn run_cell(spec: &ExperimentSpec, discount: f64, n: u64, seed: u64) -> Result<SweepRecord> {
    let start = Instant::now();
    let (s_n, a_n) = (spec.num_states, spec.num_actions);
    let record = |error_sup: f64, bound_instance: f64, bound_worst: f64, n: u64| SweepRecord {
        family: spec.family,
        discount,
        n,
        seed,
        error_sup,
        bound_instance,
        bound_worst,
        wall_time_ms: start.elapsed().as_millis() as u64,
    };

    match spec.mode {
        SweepMode::Plan => {
            let mdp = generate_mdp(spec.family, s_n, a_n, discount, spec.instance_seed)?;
            let xi = match spec.xi {
                Some(xi) => xi,
                None => perturbation_scale(s_n, a_n, discount, spec.epsilon, spec.c1, spec.alpha)?,
            };
            let em = sample_empirical_kernel(&mdp, n, seed)?;
            let pcfg = PerturbationConfig {
                xi,
                alpha: spec.alpha,
                c1: spec.c1,
                seed: derive_seed(seed, Stream::Trial, 1),
            };
            let cfg = PlannerConfig {
                epsilon: spec.epsilon,
                delta: spec.delta,
                c0: spec.c0,
                c2: spec.c2,
                method: spec.method,
            };
            let plan = plan_perturbed(&em, mdp.reward(), discount, &pcfg, &cfg)?;
            let optimal = solve_optimal_oracle(&mdp)?;
            let (v_learned, _) = evaluate_policy_exact(&mdp, &plan.policy)?;
            let error_sup = optimal.value.sup_distance(&v_learned);

            let sa = (s_n * a_n) as f64;
            let gap = 1.0 - discount;
            let omega = xi * spec.delta * gap / (4.0 * sa * a_n as f64);
            let stat_half = 6.0 * planning_bound(sa, discount, omega, spec.delta, n as f64);
            let full = 2.0 * stat_half + 2.0 * xi / gap;
            Ok(record(error_sup, stat_half, full, n))
        }
        SweepMode::Evaluate => {
            let mdp = generate_mdp(spec.family, s_n, a_n, discount, spec.instance_seed)?;
            let pi = solve_optimal_oracle(&mdp)?.policy;
            let em = sample_empirical_kernel(&mdp, n, seed)?;
            let report = eval_bound_report(&mdp, &em, &pi, spec.delta)?;
            Ok(record(report.empirical_error, report.instance_bound, report.worst_case_bound, n))
        }
        SweepMode::Lemmas => {
            let mdp = generate_mdp(spec.family, s_n, a_n, discount, derive_seed(seed, Stream::Trial, 2))?;
            let pi = Policy::new(vec![0; s_n]);
            let ones = nalgebra::DVector::from_element(s_n, 1.0);
            let rc = resolvent_check(&mdp, &pi, &(ones.clone() * 0.5), &ones)?;
            let dev = absorbing_equivalence_deviation(&mdp)?;
            let worst = dev
                .max(rc.neumann_error)
                .max(-rc.min_entry)
                .max(rc.one_norm_excess)
                .max(rc.ones_residual)
                .max(rc.monotonicity_violation);
            let violation = if rc.passes() && dev <= 1e-8 { 0.0 } else { worst };
            Ok(record(violation, 0.0, 0.0, 0))
        }
        SweepMode::Tiebreak => {
            let mdp = generate_mdp(spec.family, s_n, a_n, discount, spec.instance_seed)?;
            let xi = match spec.xi {
                Some(xi) => xi,
                None => perturbation_scale(s_n, a_n, discount, spec.epsilon, spec.c1, spec.alpha)?,
            };
            let report = certify_tie_breaking(&mdp, xi, spec.delta, spec.trials, seed)?;
            let slack = 3.0 * (spec.delta * (1.0 - spec.delta) / spec.trials as f64).sqrt();
            Ok(record(report.failure_rate, report.threshold, spec.delta + slack, spec.trials))
        }
    }
}

/// Runs every cell of the grid and returns records sorted by
/// `(discount, n, seed)`.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepRecord>> {
    spec.validate()?;
    let mut cells: Vec<(f64, u64, u64)> = Vec::new();
    for &discount in &spec.discounts {
        match spec.mode {
            SweepMode::Plan | SweepMode::Evaluate => {
                for &n in &spec.sample_sizes {
                    for &seed in &spec.seeds {
                        cells.push((discount, n, seed));
                    }
                }
            }
            SweepMode::Lemmas | SweepMode::Tiebreak => {
                for &seed in &spec.seeds {
                    cells.push((discount, 0, seed));
                }
            }
        }
    }
    let mut records = cells
        .par_iter()
        .map(|&(discount, n, seed)| run_cell(spec, discount, n, seed))
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| {
        a.discount
            .total_cmp(&b.discount)
            .then(a.n.cmp(&b.n))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(records)
}

/// Stable CSV header.
pub const CSV_HEADER: &str = "family,discount,n,seed,error_sup,bound_instance,bound_worst,wall_time_ms";

/// Renders records in the stable schema, one line per record.
pub fn to_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.family, r.discount, r.n, r.seed, r.error_sup, r.bound_instance, r.bound_worst, r.wall_time_ms
        ));
    }
    out
}

pub fn write_csv(records: &[SweepRecord], path: &str) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(to_csv(records).as_bytes())?;
    Ok(())
}

/// Record field selectors for slope fitting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordField {
    N,
    Discount,
    /// `1/(1 - discount)`, the effective horizon.
    InvHorizon,
    ErrorSup,
    BoundInstance,
    BoundWorst,
}

impl RecordField {
    fn get(&self, r: &SweepRecord) -> f64 {
        match self {
            RecordField::N => r.n as f64,
            RecordField::Discount => r.discount,
            RecordField::InvHorizon => 1.0 / (1.0 - r.discount),
            RecordField::ErrorSup => r.error_sup,
            RecordField::BoundInstance => r.bound_instance,
            RecordField::BoundWorst => r.bound_worst,
        }
    }
}

/// Ordinary least squares on `(log x, log median-y)`.
#[derive(Clone, Debug, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Count of records dropped for non-positive x or y.
    pub excluded: usize,
    /// The fitted `(x, median y)` points.
    pub points: Vec<(f64, f64)>,
}

/// Groups records by the `x` field, takes the median of the `y` field per
/// group, and fits a line in log-log space. Needs at least 3 distinct
/// positive x values with positive median y.
pub fn fit_loglog_slope(
    records: &[SweepRecord],
    x_field: RecordField,
    y_field: RecordField,
) -> Result<SlopeFit> {
    use std::collections::BTreeMap;
    let mut excluded = 0usize;
    let mut groups: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let x = x_field.get(r);
        let y = y_field.get(r);
        if !x.is_finite() || x <= 0.0 || !y.is_finite() {
            excluded += 1;
            continue;
        }
        groups.entry(x.to_bits()).or_insert_with(|| (x, Vec::new())).1.push(y);
    }

    let mut points = Vec::new();
    for (_, (x, mut ys)) in groups {
        ys.sort_by(f64::total_cmp);
        let m = ys.len();
        let median = if m % 2 == 1 { ys[m / 2] } else { 0.5 * (ys[m / 2 - 1] + ys[m / 2]) };
        if median > 0.0 {
            points.push((x, median));
        } else {
            excluded += 1;
        }
    }
    if points.len() < 3 {
        return Err(Error::invalid(format!(
            "slope fit needs at least 3 usable x values, have {} ({excluded} excluded)",
            points.len()
        )));
    }

    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("all x values coincide; slope undefined"));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = logs.iter().map(|p| (p.1 - (intercept + slope * p.0)).powi(2)).sum();
    let ss_tot: f64 = logs.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= 1e-30 {
        1.0
    } else {
        0.0
    };
    Ok(SlopeFit { slope, intercept, r2, excluded, points })
}
