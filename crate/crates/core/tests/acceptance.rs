//! Acceptance suite: one test per release criterion, each printing a
//! `[PASS]`/`[FAIL]` line (visible with `--nocapture`). Every tolerance and
//! threshold is pinned in the assertions below; the statistical criteria
//! use fixed seed sets, so reruns are bit-for-bit repeatable.

use rayon::prelude::*;

use tabrl::absorbing::{net_match, NetMatchOutcome};
use tabrl::bounds::{
    auxiliary_sequence, bernstein_condition_check, check_variance_resolvent_bound, default_depth,
    eval_bound_report, separation_gap,
};
use tabrl::families::{generate_mdp, MdpFamily};
use tabrl::perturb::{perturb_rewards, MethodChoice, PerturbationConfig};
use tabrl::rng::{derive_seed, keyed_u64, keyed_unit, Stream};
use tabrl::sampling::{empirical_mdp, sample_empirical_kernel};
use tabrl::solver::{evaluate_policy_exact, solve_optimal, solve_optimal_oracle, Method};
use tabrl::sweep::{fit_loglog_slope, run_sweep, to_csv, ExperimentSpec, RecordField, SweepMode};
use tabrl::tiebreak::certify_tie_breaking;
use tabrl::types::{Policy, TabularMdp, ValueVector};
use tabrl::verify::{absorbing_equivalence_deviation, lipschitz_check, resolvent_check};

use nalgebra::DVector;

fn pass(n: u32, msg: impl AsRef<str>) {
    println!("[PASS] criterion {:>2}: {}", n, msg.as_ref());
}

fn mixed_instance(seed: u64, max_states: usize, max_actions: usize, gammas: &[f64]) -> TabularMdp {
    let s = 2 + (keyed_u64(seed, Stream::Trial, 0, 0) % (max_states as u64 - 1)) as usize;
    let a = 1 + (keyed_u64(seed, Stream::Trial, 0, 1) % max_actions as u64) as usize;
    let gamma = gammas[(keyed_u64(seed, Stream::Trial, 0, 2) % gammas.len() as u64) as usize];
    generate_mdp(MdpFamily::RandomDirichlet, s, a, gamma, derive_seed(seed, Stream::Trial, 3)).unwrap()
}

fn random_policy(mdp: &TabularMdp, seed: u64) -> Policy {
    Policy::new(
        (0..mdp.num_states())
            .map(|s| (keyed_u64(seed, Stream::Trial, s as u64, 9) % mdp.num_actions() as u64) as usize)
            .collect(),
    )
}

/// Criterion 1: the u*-absorbing MDP shares the optimum with the original,
/// over 200 seeded instances and every state-action pair, at 1e-8.
#[test]
fn criterion_01_absorbing_u_star_equivalence() {
    let worst = (0..200u64)
        .into_par_iter()
        .map(|i| {
            let mdp = mixed_instance(1_000 + i, 6, 3, &[0.5, 0.9, 0.95]);
            absorbing_equivalence_deviation(&mdp).unwrap()
        })
        .reduce(|| 0.0, f64::max);
    assert!(worst <= 1e-8, "worst deviation {worst:.3e}");
    pass(1, format!("u*-absorbing equivalence over 200 instances, worst deviation {worst:.2e}"));
}

/// Criterion 2: the variance-resolvent bound and the classical r-based
/// bound hold on 10,000 seeded (P, pi, r >= 0, gamma) instances.
#[test]
fn criterion_02_variance_resolvent_bounds() {
    let violations: usize = (0..10_000u64)
        .into_par_iter()
        .map(|i| {
            let mdp = mixed_instance(20_000 + i, 6, 3, &[0.5, 0.9, 0.99]);
            let pi = random_policy(&mdp, 21_000 + i);
            let r = DVector::from_fn(mdp.num_states(), |s, _| {
                keyed_unit(22_000 + i, Stream::FamilyReward, s as u64, 0)
            });
            let check = check_variance_resolvent_bound(&mdp, &pi, &r).unwrap();
            usize::from(!(check.holds && check.classical_holds))
        })
        .sum();
    assert_eq!(violations, 0, "{violations} bound violations");
    pass(2, "variance-resolvent and classical bounds, 10,000 instances, zero violations");
}

/// Criterion 3: resolvent properties (a)-(e) at stated tolerances over
/// 1,000 seeded instances.
#[test]
fn criterion_03_resolvent_battery() {
    let failures: usize = (0..1_000u64)
        .into_par_iter()
        .map(|i| {
            let mdp = mixed_instance(30_000 + i, 6, 3, &[0.5, 0.9, 0.95]);
            let pi = random_policy(&mdp, 31_000 + i);
            let r1 = DVector::from_fn(mdp.num_states(), |s, _| {
                keyed_unit(32_000 + i, Stream::FamilyReward, s as u64, 0)
            });
            let r2 = DVector::from_fn(mdp.num_states(), |s, _| {
                r1[s] + keyed_unit(33_000 + i, Stream::FamilyReward, s as u64, 0)
            });
            let check = resolvent_check(&mdp, &pi, &r1, &r2).unwrap();
            usize::from(!check.passes())
        })
        .sum();
    assert_eq!(failures, 0, "{failures} resolvent-property failures");
    pass(3, "resolvent properties (a)-(e), 1,000 instances, zero failures");
}

/// Criterion 4: QVI and PI match exhaustive policy enumeration on 100
/// seeded small instances, with identical exact value vectors at 1e-9.
#[test]
fn criterion_04_planner_vs_enumeration() {
    (0..100u64).into_par_iter().for_each(|i| {
        let mdp = mixed_instance(40_000 + i, 4, 3, &[0.5, 0.9, 0.95]);
        let (s_n, a_n) = (mdp.num_states(), mdp.num_actions());
        let mut best: Option<DVector<f64>> = None;
        for code in 0..a_n.pow(s_n as u32) {
            let mut c = code;
            let actions: Vec<usize> = (0..s_n)
                .map(|_| {
                    let a = c % a_n;
                    c /= a_n;
                    a
                })
                .collect();
            let (v, _) = evaluate_policy_exact(&mdp, &Policy::new(actions)).unwrap();
            best = Some(match best {
                None => v.0,
                Some(b) => b.zip_map(&v.0, f64::max),
            });
        }
        let best = ValueVector(best.unwrap());
        for method in [Method::Qvi, Method::Pi] {
            let out = solve_optimal(&mdp, method, 100_000, 1e-10).unwrap();
            let gap = out.value.sup_distance(&best);
            assert!(gap <= 1e-9, "instance {i} ({method}): gap to enumeration {gap:.3e}");
        }
    });
    pass(4, "QVI and PI match exhaustive enumeration on 100 instances");
}

/// Criterion 5: reward perturbation shifts any policy's value by at most
/// xi/(1-gamma), over 1,000 sampled (instance, pi, xi) triples.
#[test]
fn criterion_05_perturbation_shift_bound() {
    (0..1_000u64).into_par_iter().for_each(|i| {
        let mdp = mixed_instance(50_000 + i, 6, 3, &[0.5, 0.9, 0.95]);
        let pi = random_policy(&mdp, 51_000 + i);
        let xi = 1e-4 + keyed_unit(52_000 + i, Stream::Trial, 0, 0);
        let cfg = PerturbationConfig::explicit(xi, 53_000 + i).unwrap();
        let perturbed = perturb_rewards(&mdp, &cfg).unwrap();
        let (v, _) = evaluate_policy_exact(&mdp, &pi).unwrap();
        let (v_p, _) = evaluate_policy_exact(&perturbed, &pi).unwrap();
        let shift = v.sup_distance(&v_p);
        let bound = xi / (1.0 - mdp.discount()) + 1e-12;
        assert!(shift <= bound, "triple {i}: shift {shift:.6e} > bound {bound:.6e}");
    });
    pass(5, "perturbation value shift within xi/(1-gamma) on 1,000 triples");
}

/// Criterion 6: Lipschitz continuity of the absorbing optimum in the
/// absorbing reward, over 500 sampled empirical instances.
#[test]
fn criterion_06_absorbing_lipschitz() {
    (0..500u64).into_par_iter().for_each(|i| {
        let mdp = mixed_instance(60_000 + i, 5, 3, &[0.5, 0.9]);
        let em = sample_empirical_kernel(&mdp, 200, 61_000 + i).unwrap();
        let m_hat = empirical_mdp(&em, mdp.reward(), mdp.discount()).unwrap();
        let horizon = 1.0 / (1.0 - mdp.discount());
        let s = (keyed_u64(62_000 + i, Stream::Trial, 0, 0) % mdp.num_states() as u64) as usize;
        let a = (keyed_u64(62_000 + i, Stream::Trial, 0, 1) % mdp.num_actions() as u64) as usize;
        let u1 = (2.0 * keyed_unit(63_000 + i, Stream::Trial, 0, 0) - 1.0) * 0.95 * horizon;
        let u2 = (2.0 * keyed_unit(63_000 + i, Stream::Trial, 0, 1) - 1.0) * 0.95 * horizon;
        let (lhs, bound) = lipschitz_check(&m_hat, s, a, u1, u2).unwrap();
        assert!(lhs <= bound + 1e-8, "tuple {i}: {lhs:.6e} > {bound:.6e}");
    });
    pass(6, "absorbing-reward Lipschitz bound on 500 sampled tuples");
}

/// Criterion 7: plug-in evaluation error is covered by the worst-case bound
/// on at least 95% - 3 sigma of 1,000 sampling seeds (|S|=5, |A|=3,
/// gamma=0.9, N=2000, delta=0.05), and the instance bound never exceeds the
/// worst-case bound.
#[test]
fn criterion_07_evaluation_bound_certification() {
    let mdp = generate_mdp(MdpFamily::RandomDirichlet, 5, 3, 0.9, 100).unwrap();
    let pi = solve_optimal_oracle(&mdp).unwrap().policy;
    let results: Vec<(bool, bool)> = (0..1_000u64)
        .into_par_iter()
        .map(|seed| {
            let em = sample_empirical_kernel(&mdp, 2000, seed).unwrap();
            let report = eval_bound_report(&mdp, &em, &pi, 0.05).unwrap();
            (
                report.empirical_error <= report.worst_case_bound,
                report.instance_bound <= report.worst_case_bound + 1e-12,
            )
        })
        .collect();
    let covered = results.iter().filter(|r| r.0).count();
    let ordered = results.iter().filter(|r| r.1).count();
    let needed = (0.95 - 3.0 * (0.05f64 * 0.95 / 1000.0).sqrt()) * 1000.0;
    assert!(covered as f64 >= needed, "covered {covered}/1000 < {needed:.1}");
    assert_eq!(ordered, 1000, "instance bound exceeded worst-case bound on {} seeds", 1000 - ordered);
    pass(7, format!("evaluation bound covers the error on {covered}/1000 seeds (need {needed:.0})"));
}

/// Criterion 8: the Bernstein condition with beta1 = 2 log(4 m |S| / delta)
/// fails on at most delta + 3 sigma of 1,000 sampling seeds.
#[test]
fn criterion_08_bernstein_condition_certification() {
    let mdp = generate_mdp(MdpFamily::RandomDirichlet, 5, 3, 0.9, 100).unwrap();
    let pi = solve_optimal_oracle(&mdp).unwrap().policy;
    let m = default_depth(0.9);
    let aux = auxiliary_sequence(&mdp, &pi, m).unwrap();
    let delta = 0.05f64;
    let beta1 = 2.0 * (4.0 * m as f64 * 5.0 / delta).ln();
    let failures: usize = (0..1_000u64)
        .into_par_iter()
        .map(|seed| {
            let em = sample_empirical_kernel(&mdp, 2000, seed).unwrap();
            let rep =
                bernstein_condition_check(mdp.kernel(), em.kernel_hat(), &pi, &aux, beta1, 2000)
                    .unwrap();
            usize::from(!rep.all_hold)
        })
        .sum();
    let allowed = (delta + 3.0 * (delta * (1.0 - delta) / 1000.0).sqrt()) * 1000.0;
    assert!((failures as f64) <= allowed, "failures {failures}/1000 > {allowed:.1}");
    pass(8, format!("Bernstein condition failed on {failures}/1000 seeds (allow {allowed:.0})"));
}

/// Criterion 9: tie-breaking separation on the symmetric-adversarial
/// instance (|S|=4, |A|=3, gamma=0.9, xi=0.1, delta=0.1, 1,000 trials),
/// plus the xi = 0 control failing every trial.
#[test]
fn criterion_09_tie_breaking_certification() {
    let mdp = generate_mdp(MdpFamily::SymmetricAdversarial, 4, 3, 0.9, 7).unwrap();
    let report = certify_tie_breaking(&mdp, 0.1, 0.1, 1000, 42).unwrap();
    assert!(report.pass, "failure rate {:.4} above tolerance", report.failure_rate);
    let control = certify_tie_breaking(&mdp, 0.0, 0.1, 1000, 42).unwrap();
    assert_eq!(control.failures, 1000, "xi = 0 control must fail every trial");
    pass(9, format!(
        "tie-breaking gap cleared threshold {:.2e} on {}/1000 trials; xi=0 control failed 1000/1000",
        report.threshold,
        1000 - report.failures
    ));
}

fn scaling_spec() -> ExperimentSpec {
    ExperimentSpec {
        family: MdpFamily::Chain,
        num_states: 8,
        num_actions: 2,
        discounts: vec![0.9],
        sample_sizes: (6..=14).map(|k| 1u64 << k).collect(),
        epsilon: 0.01,
        delta: 0.1,
        seeds: (0..50).collect(),
        mode: SweepMode::Plan,
        output_path: String::new(),
        xi: Some(1e-6),
        alpha: 1.0,
        c1: 1.0,
        c0: 4.0,
        c2: 4.0,
        method: MethodChoice::Pi,
        trials: 1000,
        instance_seed: 0,
    }
}

/// Criterion 10: N-scaling on the chain family — log-log slope of the
/// median planning error over N in [-0.6, -0.4] with r^2 >= 0.9.
#[test]
fn criterion_10_sample_size_scaling_law() {
    let records = run_sweep(&scaling_spec()).unwrap();
    let fit = fit_loglog_slope(&records, RecordField::N, RecordField::ErrorSup).unwrap();
    assert!(
        (-0.6..=-0.4).contains(&fit.slope),
        "slope {:.4} outside [-0.6, -0.4]",
        fit.slope
    );
    assert!(fit.r2 >= 0.9, "r2 {:.4} below 0.9", fit.r2);
    pass(10, format!("N-scaling slope {:.3} (r2 = {:.3}) across N = 2^6..2^14", fit.slope, fit.r2));
}

/// Criterion 11: gamma-scaling at fixed N=4096 — slope of log median error
/// against log 1/(1-gamma) in [1.0, 2.0].
#[test]
fn criterion_11_horizon_scaling_law() {
    let mut spec = scaling_spec();
    spec.discounts = vec![0.8, 0.9, 0.95, 0.975];
    spec.sample_sizes = vec![4096];
    let records = run_sweep(&spec).unwrap();
    let fit = fit_loglog_slope(&records, RecordField::InvHorizon, RecordField::ErrorSup).unwrap();
    assert!(
        (1.0..=2.0).contains(&fit.slope),
        "slope {:.4} outside [1.0, 2.0]",
        fit.slope
    );
    pass(11, format!("horizon-scaling slope {:.3} (r2 = {:.3}) at N = 4096", fit.slope, fit.r2));
}

/// Criterion 12: on empirical instances whose optimal Q separates at level
/// omega, every (s, a) pair admits a net point whose absorbing model
/// reproduces the optimal policy exactly, with the canonical reward within
/// (1-gamma) omega / 4 of the chosen point.
#[test]
fn criterion_12_net_matching() {
    let omega = 0.02;
    let gamma = 0.9;
    let mut qualifying_pairs = 0usize;
    let mut skipped_instances = 0usize;
    for inst in 0..25u64 {
        let mdp = generate_mdp(MdpFamily::RandomDirichlet, 4, 3, gamma, 3_000 + inst).unwrap();
        let em = sample_empirical_kernel(&mdp, 500, inst).unwrap();
        let m_hat = empirical_mdp(&em, mdp.reward(), gamma).unwrap();
        let q_hat = solve_optimal_oracle(&m_hat).unwrap().q;
        let (gap, _) = separation_gap(&q_hat, 3).unwrap();
        if gap < omega {
            skipped_instances += 1;
            continue;
        }
        for s in 0..4 {
            for a in 0..3 {
                match net_match(&em, mdp.reward(), gamma, s, a, omega).unwrap() {
                    NetMatchOutcome::Checked { matches, u0, u_hat_star, .. } => {
                        qualifying_pairs += 1;
                        assert!(matches, "instance {inst} pair ({s},{a}): policies differ");
                        let snap = (u_hat_star - u0).abs();
                        let step = (1.0 - gamma) * omega / 4.0;
                        assert!(snap <= step + 1e-12, "snap distance {snap:.3e} > {step:.3e}");
                    }
                    NetMatchOutcome::NotApplicable { gap } => {
                        panic!("instance {inst}: separation vanished mid-check (gap {gap})")
                    }
                }
            }
        }
    }
    assert!(qualifying_pairs >= 100, "only {qualifying_pairs} qualifying pairs");
    pass(12, format!(
        "net matching on {qualifying_pairs} qualifying (s,a) pairs ({skipped_instances}/25 instances below omega)"
    ));
}

/// Criterion 13: reruns with identical configs reproduce output exactly.
/// Certification reports are byte-identical; sweep CSVs are byte-identical
/// in every column except the wall-clock timing field.
#[test]
fn criterion_13_reproducibility() {
    let mut spec = scaling_spec();
    spec.sample_sizes = vec![64, 256];
    spec.seeds = (0..8).collect();
    let a = to_csv(&run_sweep(&spec).unwrap());
    let b = to_csv(&run_sweep(&spec).unwrap());
    let strip = |csv: &str| {
        csv.lines()
            .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_owned()).unwrap_or_default())
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&a), strip(&b), "sweep CSVs differ beyond the timing column");

    let mdp = generate_mdp(MdpFamily::SymmetricAdversarial, 4, 3, 0.9, 7).unwrap();
    let r1 = serde_json::to_string(&certify_tie_breaking(&mdp, 0.1, 0.1, 200, 5).unwrap()).unwrap();
    let r2 = serde_json::to_string(&certify_tie_breaking(&mdp, 0.1, 0.1, 200, 5).unwrap()).unwrap();
    assert_eq!(r1, r2, "certification reports differ");

    let em1 = sample_empirical_kernel(&mdp, 500, 11).unwrap();
    let em2 = sample_empirical_kernel(&mdp, 500, 11).unwrap();
    assert_eq!(em1.to_json_string(), em2.to_json_string(), "empirical models differ");
    pass(13, "sweeps, certifications, and sampling reproduce byte-identically");
}
