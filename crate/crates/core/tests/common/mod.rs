//! Shared fixtures and the invariant suite. Each invariant runs 100
//! randomized small instances (d ≤ 6, n ≤ 12) through a deterministic
//! proptest runner; `properties` wraps them as unit tests and `acceptance`
//! reports them as one criterion.

#![allow(dead_code)]

use std::collections::HashSet;

use fclub::baselines::{build_policy, AlgorithmParams, Baseline};
use fclub::environment::{generate_world, EnvStreams, World};
use fclub::federation::{gamma_bound, Federation};
use fclub::harness::experiment::{emit_csv, mean_std, read_trace_csv, run_experiment};
use fclub::harness::horizon::{communication_bound, HorizonInputs};
use fclub::harness::ExperimentConfig;
use fclub::policy::simulate;
use fclub::privatizer::{dyadic_cover, tree_depth, NodeId, PrivacyBudget, Privatizer};
use fclub::stats::{
    confidence_f, det_ratio, max_generalized_eigenvalue, min_eigenvalue, ridge_estimate, ucb_score,
    SufficientStatistics,
};
use fclub::trace::{Trace, TraceRecord};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const CASES: u32 = 100;

pub fn runner() -> TestRunner {
    let config = Config { cases: CASES, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

pub fn params(horizon: u64, m: usize) -> AlgorithmParams {
    AlgorithmParams {
        horizon,
        num_clusters: m,
        upload_threshold: 1.01,
        download_threshold: 1.01,
        alpha1: 1.0,
        alpha2: 1.0,
        lambda: 1.0,
        alpha: 1.0 / (8.0 * horizon as f64),
        sigma0: 0.1,
        epsilon: 1.0,
        delta: 0.1,
    }
}

/// `(n, m, L, d, seed)` with m ≤ d ≤ 6, n ≤ 12, L ≤ n.
pub fn small_world() -> impl Strategy<Value = (usize, usize, usize, usize, u64)> {
    (2usize..=6, any::<u64>())
        .prop_flat_map(|(d, seed)| (Just(d), 1..=d.min(4), Just(seed)))
        .prop_flat_map(|(d, m, seed)| (Just(d), Just(m), m.max(2)..=12usize, Just(seed)))
        .prop_flat_map(|(d, m, n, seed)| (Just(n), Just(m), 1..=n.min(4), Just(d), Just(seed)))
}

pub fn world_of((n, m, l, d, seed): (usize, usize, usize, usize, u64)) -> World {
    generate_world(n, m, l, d, std::f64::consts::SQRT_2, 0.1, seed).expect("feasible world")
}

pub fn gaussian_vec(d: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal))
}

pub fn random_stats(d: usize, obs: usize, rng: &mut impl Rng) -> SufficientStatistics {
    let mut s = SufficientStatistics::zeros(d);
    for _ in 0..obs {
        let x = gaussian_vec(d, rng);
        let y: f64 = rng.sample(StandardNormal);
        s.observe(&x, y);
    }
    s
}

pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

fn err(msg: String) -> TestCaseError {
    TestCaseError::fail(msg)
}

fn run_prop<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner().run(&strategy, test).map_err(|e| e.to_string())
}

// ── core-stats ──────────────────────────────────────────────────────────

pub fn confidence_f_monotone() -> Result<(), String> {
    run_prop((0.0f64..1e9, 0.0f64..1e9), |(a, b)| {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (f_lo, f_hi) = (confidence_f(lo).unwrap(), confidence_f(hi).unwrap());
        prop_assert!(f_lo >= f_hi, "F({lo}) = {f_lo} < F({hi}) = {f_hi}");
        prop_assert!(confidence_f(1e15).unwrap() < 1e-6);
        Ok(())
    })
}

pub fn ridge_gradient() -> Result<(), String> {
    run_prop((1usize..=6, 0usize..20, 0.01f64..10.0, any::<u64>()), |(d, obs, lambda, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_stats(d, obs, &mut rng);
        let theta = ridge_estimate(&s, lambda).unwrap();
        let mut a = s.gram.clone();
        for i in 0..d {
            a[(i, i)] += lambda;
        }
        let resid = (&a * &theta - &s.moment).norm();
        prop_assert!(resid <= 1e-8 * (1.0 + s.moment.norm()), "residual {resid}");
        Ok(())
    })
}

pub fn det_ratio_psd() -> Result<(), String> {
    run_prop((1usize..=6, 0usize..10, 1usize..10, any::<u64>()), |(d, base_obs, extra_obs, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_stats(d, base_obs, &mut rng).gram;
        let a = &b + random_stats(d, extra_obs, &mut rng).gram;
        let r = det_ratio(&a, &b, 1.0).unwrap();
        prop_assert!(r >= 1.0 - 1e-12, "ratio {r}");
        prop_assert_eq!(det_ratio(&b, &b, 1.0).unwrap(), 1.0);
        Ok(())
    })
}

pub fn ucb_beta_zero() -> Result<(), String> {
    run_prop((1usize..=6, any::<u64>()), |(d, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_stats(d, 3 * d, &mut rng);
        let x = gaussian_vec(d, &mut rng);
        let score = ucb_score(&x, &s, 0.0, 0.0).unwrap();
        let inner = x.dot(&ridge_estimate(&s, 0.0).unwrap());
        prop_assert!((score - inner).abs() <= 1e-9 * (1.0 + inner.abs()), "{score} vs {inner}");
        Ok(())
    })
}

// ── privatizer ──────────────────────────────────────────────────────────

pub fn perturbation_symmetry() -> Result<(), String> {
    run_prop((1usize..=6, 0.1f64..10.0, 0.01f64..0.5, 1u64..200, any::<u64>()), |(d, eps, delta, t_c, seed)| {
        let budget = PrivacyBudget::new(eps, delta, t_c).unwrap();
        let mut p = Privatizer::new(&budget, d, seed);
        for _ in 0..=t_c.min(40) {
            let h = p.next_perturbation().unwrap();
            prop_assert!(h.matrix == h.matrix.transpose(), "asymmetric perturbation");
        }
        Ok(())
    })
}

/// Greedy left-to-right cover of `[1, c]` by aligned dyadic blocks,
/// enumerated over every candidate block.
fn brute_force_cover(c: u64) -> Vec<(u32, u64)> {
    let mut out = Vec::new();
    let mut covered = 0u64;
    while covered < c {
        let mut best = None;
        for level in 0..64u32 {
            let size = 1u64 << level;
            if size > c - covered {
                break;
            }
            if covered % size == 0 {
                best = Some((level, covered / size));
            }
        }
        let (level, index) = best.expect("a unit block always fits");
        out.push((level, index));
        covered += 1u64 << level;
    }
    out
}

pub fn partial_sum_structure() -> Result<(), String> {
    run_prop((1usize..=4, 1u64..=64, any::<u64>()), |(d, t_c, seed)| {
        let budget = PrivacyBudget::new(1.0, 0.1, t_c).unwrap();
        let nu = tree_depth(t_c) as usize;
        let mut p = Privatizer::new(&budget, d, seed);
        for c in 0..=t_c {
            let cover = dyadic_cover(c);
            prop_assert!(cover.len() <= nu, "pop {c} touches {} > {nu} nodes", cover.len());
            let expected: Vec<NodeId> = if c == 0 {
                vec![NodeId::Root]
            } else {
                brute_force_cover(c).into_iter().map(|(level, index)| NodeId::Tree { level, index }).collect()
            };
            prop_assert_eq!(&cover, &expected);
            let mut total = DMatrix::zeros(d + 1, d + 1);
            for node in &expected {
                total += p.node_noise(*node);
            }
            let got = p.next_perturbation().unwrap();
            let want_m = total.view((0, 0), (d, d)).into_owned();
            let want_v = total.view((0, d), (d, 1)).column(0).into_owned();
            prop_assert!((&got.matrix - &want_m).norm() <= 1e-9 * (1.0 + want_m.norm()));
            prop_assert!((&got.vector - &want_v).norm() <= 1e-9 * (1.0 + want_v.norm()));
        }
        Ok(())
    })
}

// ── environment ─────────────────────────────────────────────────────────

pub fn world_gap() -> Result<(), String> {
    run_prop(small_world(), |spec| {
        let w = world_of(spec);
        let mut best = f64::INFINITY;
        for a in 0..w.num_users() {
            for b in 0..w.num_users() {
                if w.membership[a] != w.membership[b] {
                    best = best.min((w.theta(a) - w.theta(b)).norm());
                }
            }
        }
        if w.num_clusters > 1 {
            prop_assert!((best - 2f64.sqrt()).abs() <= 1e-9, "gap {best}");
        }
        Ok(())
    })
}

pub fn item_second_moment() -> Result<(), String> {
    run_prop(small_world(), |spec| {
        let w = world_of(spec);
        let d = w.dim();
        let mut streams = EnvStreams::new(spec.4);
        let mut acc = DMatrix::zeros(d, d);
        let k = 10;
        for t in 1..=1000 {
            for x in w.sample_round(t, k, &mut streams).items {
                acc.ger(1.0, &x, &x, 1.0);
            }
        }
        let lam = min_eigenvalue(&(acc / (1000.0 * k as f64)));
        prop_assert!(lam >= 0.5 / d as f64, "min eigenvalue {lam} < 0.5/{d}");
        Ok(())
    })
}

pub fn regret_nonnegative() -> Result<(), String> {
    run_prop((small_world(), 1usize..12), |(spec, k)| {
        let w = world_of(spec);
        let mut streams = EnvStreams::new(spec.4 ^ 0x5eed);
        for t in 1..=20 {
            let mut round = w.sample_round(t, k, &mut streams);
            let best = (0..k)
                .map(|i| w.expected_reward(round.user, &round.items[i]))
                .fold(f64::NEG_INFINITY, f64::max);
            for i in 0..k {
                let r = w.instant_regret(round.user, &round.items, i).unwrap();
                prop_assert!(r >= 0.0);
                let ties = w.expected_reward(round.user, &round.items[i]) == best;
                prop_assert_eq!(r == 0.0, ties);
            }
            // a duplicated best item ties exactly
            let arg = (0..k)
                .find(|&i| w.expected_reward(round.user, &round.items[i]) == best)
                .unwrap();
            round.items.push(round.items[arg].clone());
            prop_assert_eq!(w.instant_regret(round.user, &round.items, k).unwrap(), 0.0);
        }
        Ok(())
    })
}

// ── federation ──────────────────────────────────────────────────────────

fn member_of(fed: &Federation, world: &World, user: usize) -> (usize, usize) {
    let l = world.assignment[user];
    (l, fed.servers()[l].cluster_of(user).expect("user on its server"))
}

/// `S^g + Σ ΔS` equals phase-start releases plus every later rank-1 term
/// and perturbation rotation, for every group at every round.
pub fn sync_identity() -> Result<(), String> {
    run_prop((small_world(), any::<bool>(), 16u64..256), |(spec, private, horizon)| {
        let world = world_of(spec);
        let d = world.dim();
        let baseline = if private { Baseline::FclubCdp } else { Baseline::FclubDc };
        let cfg = params(horizon, spec.1).federation(baseline).unwrap();
        let mut fed = Federation::new(baseline.as_str(), &world, cfg, spec.4).unwrap();
        // per member: (phase release gram, data gram since renewal, uploads since renewal)
        let mut track: std::collections::HashMap<(usize, usize), (DMatrix<f64>, DMatrix<f64>, u64)> = Default::default();
        let mut failure = None;
        simulate(&mut fed, &world, horizon, 5, spec.4, |fed, rep| {
            let t = rep.round.t;
            if (t + 1).is_power_of_two() && fed.global().partition.version == fed.phase() {
                track.clear();
                for u in fed.last_phase_uploads() {
                    track.insert((u.server, u.cluster), (u.stats.gram.clone() - &u.perturbation.matrix, DMatrix::zeros(d, d), 0));
                }
            }
            let member = member_of(fed, &world, rep.round.user);
            let x = &rep.round.items[rep.chosen];
            let entry = track.get_mut(&member).expect("tracked member");
            entry.1.ger(1.0, x, x, 1.0);
            entry.2 += fed.last_events().uploaded as u64;
            let rho = fed.rho();
            for (k, group) in fed.global().partition.groups.iter().enumerate() {
                let mut lhs = fed.global().global_stats[k].gram.clone();
                let mut rhs = DMatrix::zeros(d, d);
                for &(l, j) in group {
                    let c = &fed.servers()[l].clusters[j];
                    lhs += &c.upload_buffer.gram;
                    let (release, data, uploads) = &track[&(l, j)];
                    rhs += release + data + &c.next.matrix;
                    for i in 0..d {
                        rhs[(i, i)] += 3.0 * rho * (*uploads as f64 + 1.0);
                    }
                }
                let rel = rel_diff(&lhs, &rhs);
                if rel > 1e-6 && failure.is_none() {
                    failure = Some(format!("t={t} group {k}: relative gap {rel}"));
                }
            }
            Ok(())
        })
        .unwrap();
        match failure {
            Some(f) => Err(err(f)),
            None => Ok(()),
        }
    })
}

/// Largest `θᵀVθ / θᵀSθ` between the fully synchronized group gram and the
/// acting member's gram, both shifted by the determinant floor.
pub fn sync_ratio(fed: &Federation, world: &World, user: usize) -> (f64, usize) {
    let member = member_of(fed, world, user);
    let k = fed.global().group_of(member);
    let group = fed.global().group_members(k);
    let d = world.dim();
    let mut full = DMatrix::<f64>::identity(d, d) * fed.floor();
    for &(l, j) in group {
        let server = &fed.servers()[l];
        for &u in &server.clusters[j].members {
            full += &server.user_stats[server.position(u).unwrap()].gram;
        }
    }
    let local = &fed.servers()[member.0].clusters[member.1].synced.gram + DMatrix::<f64>::identity(d, d) * fed.floor();
    (max_generalized_eigenvalue(&full, &local).unwrap(), group.len())
}

pub fn gamma_bound_holds() -> Result<(), String> {
    run_prop((small_world(), 16u64..512), |(spec, horizon)| {
        let world = world_of(spec);
        let cfg = params(horizon, spec.1).federation(Baseline::FclubDc).unwrap();
        let mut fed = Federation::new("fclub_dc", &world, cfg, spec.4).unwrap();
        let mut worst: Option<String> = None;
        simulate(&mut fed, &world, horizon, 5, spec.4, |fed, rep| {
            if rep.record.partition_correct {
                let (ratio, sharing) = sync_ratio(fed, &world, rep.round.user);
                let g = gamma_bound(1.01, 1.01, sharing);
                if ratio > g * g + 1e-6 && worst.is_none() {
                    worst = Some(format!("t={} ratio {ratio} > Γ²={}", rep.round.t, g * g));
                }
            }
            Ok(())
        })
        .unwrap();
        match worst {
            Some(w) => Err(err(w)),
            None => Ok(()),
        }
    })
}

pub fn monotone_graphs() -> Result<(), String> {
    run_prop((small_world(), 64u64..1024), |(spec, horizon)| {
        let world = world_of(spec);
        let cfg = params(horizon, spec.1).federation(Baseline::FclubDc).unwrap();
        let mut fed = Federation::new("fclub_dc", &world, cfg, spec.4).unwrap();
        let edges = |fed: &Federation| -> HashSet<(usize, usize, usize)> {
            let mut out = HashSet::new();
            for s in fed.servers() {
                for a in 0..s.users.len() {
                    for b in 0..s.users.len() {
                        if s.graph[a][b] {
                            out.insert((s.id, s.users[a], s.users[b]));
                        }
                    }
                }
            }
            out
        };
        let mut prev = edges(&fed);
        let mut ok = true;
        simulate(&mut fed, &world, horizon, 5, spec.4, |fed, rep| {
            if (rep.round.t + 1).is_power_of_two() {
                let now = edges(fed);
                ok &= now.is_subset(&prev);
                prev = now;
            }
            Ok(())
        })
        .unwrap();
        prop_assert!(ok, "an edge reappeared");
        Ok(())
    })
}

pub fn comm_within_bound() -> Result<(), String> {
    run_prop((small_world(), 16u64..512), |(spec, horizon)| {
        let world = world_of(spec);
        let p = params(horizon, spec.1);
        let cfg = p.federation(Baseline::FclubCdp).unwrap();
        let mut fed = Federation::new("fclub_cdp", &world, cfg, spec.4).unwrap();
        let trace = simulate(&mut fed, &world, horizon, 5, spec.4, |_, _| Ok(())).unwrap();
        let budget = PrivacyBudget::for_horizon(1.0, 0.1, world.dim(), horizon, 1.01, 1.01).unwrap();
        let inputs = HorizonInputs {
            n: world.num_users(),
            m: spec.1,
            servers: world.num_servers,
            d: world.dim(),
            horizon,
            gamma: world.gap,
            sigma0: 0.1,
            epsilon: 1.0,
            delta: 0.1,
            alpha: p.alpha,
            lambda_x: 1.0 / world.dim() as f64,
            nu: budget.nu,
        };
        let bound = communication_bound(&inputs, 1.01, 1.01);
        prop_assert!((trace.final_comm() as f64) <= 2.0 * bound, "{} > 2·{bound}", trace.final_comm());
        Ok(())
    })
}

/// Fraction of seeded runs in which a correct partition, once reached at a
/// phase start, stays correct at every later phase start.
pub fn partition_stability(baseline: Baseline, seeds: u64, horizon: u64) -> (usize, usize, usize) {
    let (n, m, l, d) = (12, 3, 3, 6);
    let mut stable = 0;
    let mut reached = 0;
    for seed in 0..seeds {
        let world = generate_world(n, m, l, d, std::f64::consts::SQRT_2, 0.1, seed).unwrap();
        let mut policy = build_policy(baseline, &world, &params(horizon, m), seed).unwrap();
        let trace = simulate(policy.as_mut(), &world, horizon, 10, seed, |_, _| Ok(())).unwrap();
        let phases: Vec<bool> = trace
            .rows
            .iter()
            .filter(|r| (r.t + 1).is_power_of_two())
            .map(|r| r.partition_correct)
            .collect();
        match phases.iter().position(|&c| c) {
            Some(first) => {
                reached += 1;
                stable += phases[first..].iter().all(|&c| c) as usize;
            }
            None => stable += 1,
        }
    }
    (stable, reached, seeds as usize)
}

pub fn partition_stable() -> Result<(), String> {
    for b in [Baseline::FclubDc, Baseline::FclubCdp] {
        let (stable, _, total) = partition_stability(b, 20, 4096);
        if (stable as f64) < 0.95 * total as f64 {
            return Err(format!("{b}: stable in {stable}/{total} runs"));
        }
    }
    Ok(())
}

// ── baselines ───────────────────────────────────────────────────────────

type Stream = Vec<(usize, Vec<DVector<f64>>, u64)>;

/// Every baseline sees the same users, items and reward noise; traces are
/// monotone.
pub fn common_random_numbers() -> Result<(), String> {
    run_prop((small_world(), 8u64..128), |(spec, horizon)| {
        let world = world_of(spec);
        let p = params(horizon, spec.1);
        let mut reference: Option<Stream> = None;
        for b in Baseline::ALL {
            let mut policy = build_policy(b, &world, &p, spec.4).unwrap();
            let mut seen: Stream = Vec::new();
            let trace = simulate(policy.as_mut(), &world, horizon, 6, spec.4, |_, rep| {
                let x = &rep.round.items[rep.chosen];
                let noise = rep.reward - world.expected_reward(rep.round.user, x);
                seen.push((rep.round.user, rep.round.items.clone(), noise.to_bits()));
                Ok(())
            })
            .unwrap();
            for w in trace.rows.windows(2) {
                prop_assert!(w[1].cumulative_regret >= w[0].cumulative_regret);
                prop_assert!(w[1].comm_count_cumulative >= w[0].comm_count_cumulative);
            }
            match &reference {
                None => reference = Some(seen),
                Some(r) => {
                    // noise recovered from reward − mean can differ in the last bit
                    for (a, b2) in r.iter().zip(&seen) {
                        prop_assert_eq!(a.0, b2.0);
                        prop_assert_eq!(&a.1, &b2.1);
                        let (na, nb) = (f64::from_bits(a.2), f64::from_bits(b2.2));
                        prop_assert!((na - nb).abs() <= 1e-12, "noise {na} vs {nb}");
                    }
                }
            }
        }
        Ok(())
    })
}

// ── harness ─────────────────────────────────────────────────────────────

fn record() -> impl Strategy<Value = TraceRecord> {
    (any::<f64>(), any::<f64>(), any::<u64>(), 0usize..100, any::<bool>()).prop_map(|(a, b, c, k, p)| TraceRecord {
        t: 0,
        instant_regret: if a.is_nan() { 0.0 } else { a },
        cumulative_regret: if b.is_nan() { 0.0 } else { b },
        comm_count_cumulative: c,
        num_global_clusters: k,
        partition_correct: p,
    })
}

pub fn csv_round_trip() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_prop((proptest::collection::vec(record(), 0..20), any::<u64>(), "[a-z_]{1,10}"), |(rows, seed, name)| {
        let mut trace = Trace::new(&name, seed);
        for (i, mut r) in rows.into_iter().enumerate() {
            r.t = i as u64 + 1;
            trace.rows.push(r);
        }
        let path = dir.path().join("t.csv");
        emit_csv(&trace, &path).unwrap();
        let back = read_trace_csv(&path).unwrap();
        if trace.rows.is_empty() {
            prop_assert!(back.rows.is_empty());
        } else {
            prop_assert_eq!(back, trace);
        }
        Ok(())
    })
}

pub fn tiny_config(out: &std::path::Path, seed_hi: u64, horizon: u64, baselines: &[&str]) -> ExperimentConfig {
    let list: Vec<String> = baselines.iter().map(|b| format!("\"{b}\"")).collect();
    let text = format!(
        "[world]\nn = 6\nm = 2\nL = 2\nd = 3\n[algorithm]\nT = {horizon}\nK = 4\n[run]\nseeds = \"0..{seed_hi}\"\nbaselines = [{}]\nout = \"{}\"\n",
        list.join(","),
        out.display()
    );
    ExperimentConfig::from_toml_str(&text, &[]).unwrap()
}

pub fn aggregation_exact() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_prop((1u64..4, 2u64..60, any::<bool>()), |(seed_hi, horizon, dense)| {
        let mut cfg = tiny_config(dir.path(), seed_hi, horizon, &["linucb", "fclub_cdp"]);
        cfg.run.dense = dense;
        let outcome = run_experiment(&cfg).unwrap();
        for row in &outcome.summary {
            let values: Vec<f64> = (0..=seed_hi)
                .map(|s| {
                    let tr = read_trace_csv(&dir.path().join(format!("{}_seed{s}.csv", row.policy))).unwrap();
                    tr.rows.iter().find(|r| r.t == row.t).unwrap().cumulative_regret
                })
                .collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            prop_assert_eq!(row.mean_regret, mean);
            prop_assert_eq!(row.mean_regret, mean_std(&values).0);
            prop_assert_eq!(row.seeds, values.len());
        }
        Ok(())
    })
}

pub fn deterministic_output() -> Result<(), String> {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_prop((0u64..1000, 2u64..80), |(seed, horizon)| {
        let all = ["linucb", "club", "homo", "homo_dc", "fclub", "fclub_dc", "fclub_cdp"];
        for dir in [&a, &b] {
            let mut cfg = tiny_config(dir.path(), 0, horizon, &all);
            cfg.run.seeds = fclub::harness::SeedSpec::List(vec![seed]);
            cfg.run.dense = true;
            cfg.run.timing = false;
            run_experiment(&cfg).unwrap();
        }
        for name in all {
            let file = format!("{name}_seed{seed}.csv");
            let x = std::fs::read(a.path().join(&file)).unwrap();
            let y = std::fs::read(b.path().join(&file)).unwrap();
            prop_assert!(x == y, "{file} differs");
        }
        prop_assert_eq!(
            std::fs::read(a.path().join("summary.csv")).unwrap(),
            std::fs::read(b.path().join("summary.csv")).unwrap()
        );
        Ok(())
    })
}

pub type Invariant = (&'static str, fn() -> Result<(), String>);

pub const SUITE: [Invariant; 19] = [
    ("confidence_f_monotone", confidence_f_monotone),
    ("ridge_gradient", ridge_gradient),
    ("det_ratio_psd", det_ratio_psd),
    ("ucb_beta_zero", ucb_beta_zero),
    ("perturbation_symmetry", perturbation_symmetry),
    ("partial_sum_structure", partial_sum_structure),
    ("world_gap", world_gap),
    ("item_second_moment", item_second_moment),
    ("regret_nonnegative", regret_nonnegative),
    ("sync_identity", sync_identity),
    ("gamma_bound_holds", gamma_bound_holds),
    ("monotone_graphs", monotone_graphs),
    ("comm_within_bound", comm_within_bound),
    ("partition_stable", partition_stable),
    ("common_random_numbers", common_random_numbers),
    ("csv_round_trip", csv_round_trip),
    ("aggregation_exact", aggregation_exact),
    ("deterministic_output", deterministic_output),
    ("mean_std_matches_definition", mean_std_definition),
];

pub fn mean_std_definition() -> Result<(), String> {
    run_prop(proptest::collection::vec(-1e6f64..1e6, 2..20), |v| {
        let (mean, std) = mean_std(&v);
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
        prop_assert_eq!(mean, m);
        prop_assert!((std - var.sqrt()).abs() <= 1e-9 * (1.0 + var.sqrt()));
        Ok(())
    })
}
