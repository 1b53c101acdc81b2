//! Acceptance suite. Every test prints one `criterion N: PASS|FAIL ...` line
//! and then asserts the same condition.

use std::time::{Duration, Instant};

use stochflow::fields::families::{self, LogGrowthParams};
use stochflow::flow::{homeomorphism_report, simulate_flow, FlowGrid, Resolution};
use stochflow::integrate::{
    detect_explosion, solve_ito_corrected, solve_ito_uncorrected, solve_regularized, SolverConfig,
};
use stochflow::verify::bounds::{alpha_n_with, BoundConstants};
use stochflow::verify::convergence::convergence_curve;
use stochflow::verify::estimate::collect_samples;
use stochflow::verify::inequality::{two_point_local_ratios, uniform_level_moments, verify_inequality, InequalityParams};
use stochflow::verify::MomentEstimate;
use stochflow::wiener::{gaussian_abs_moment, DyadicPath, GaussianStream};
use stochflow::VectorFieldSystem;

fn report(n: u32, title: &str, pass: bool, detail: &str, elapsed: Duration, budget_s: f64) -> bool {
    let in_time = elapsed.as_secs_f64() <= budget_s;
    let ok = pass && in_time;
    println!(
        "criterion {n} [{title}]: {} ({detail}; {:.1} s of {budget_s} s)",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    ok
}

fn h_family(d: usize) -> VectorFieldSystem {
    families::log_growth(&LogGrowthParams::default(), d, 2).unwrap()
}

fn column<T>(rows: &[T], f: impl Fn(&T) -> f64) -> Vec<f64> {
    rows.iter().map(f).collect()
}

#[test]
fn criterion_01_geometric_exactness() {
    let start = Instant::now();
    let sys = families::geometric(1.0, 0.0).unwrap();
    let worst_at = |cfg: &SolverConfig| -> Vec<f64> {
        (2..=12)
            .map(|n| {
                (0..100)
                    .map(|i| {
                        let path = DyadicPath::generate(12, 1, 1, i).unwrap();
                        let exact = path.node(12, 4096).unwrap()[0].exp();
                        let z = solve_regularized(&sys, &path, n, &[1.0], cfg).unwrap().terminal().unwrap()[0];
                        (z - exact).abs() / exact
                    })
                    .fold(0.0, f64::max)
            })
            .collect()
    };
    let cfg = SolverConfig {
        substeps_per_interval: 32,
        ..SolverConfig::default()
    };
    let worst = worst_at(&cfg);
    let default_worst = worst_at(&SolverConfig::default());
    let max = worst.iter().copied().fold(0.0, f64::max);
    let detail = format!(
        "32 substeps: worst rel err {max:.2e}; default 8 substeps per level 2..12: {:?}",
        default_worst.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>()
    );
    let ok = report(1, "geometric exactness", max <= 1e-6, &detail, start.elapsed(), 10.0);
    assert!(ok);
}

#[test]
fn criterion_02_stratonovich_targeting() {
    let start = Instant::now();
    let sys = families::geometric(1.0, 0.0).unwrap();
    let cfg = SolverConfig::default();
    let rows = collect_samples(100_000, 2, |seed, i| {
        let path = DyadicPath::generate(12, 1, seed, i)?;
        let wz = solve_regularized(&sys, &path, 12, &[1.0], &cfg)?.terminal().unwrap()[0];
        let ito = solve_ito_corrected(&sys, &path, &[1.0], &cfg)?.terminal().unwrap()[0];
        let raw = solve_ito_uncorrected(&sys, &path, &[1.0], &cfg)?.terminal().unwrap()[0];
        Ok([wz, ito, raw])
    })
    .unwrap();
    let target = 0.5f64.exp();
    let wz = MomentEstimate::from_samples(1.0, &column(&rows, |r| r[0]));
    let ito = MomentEstimate::from_samples(1.0, &column(&rows, |r| r[1]));
    let raw = MomentEstimate::from_samples(1.0, &column(&rows, |r| r[2]));
    let outside = |e: &MomentEstimate| (raw.estimate() - e.estimate()).abs() > e.half_width();
    let pass = wz.within(target, 3.0) && ito.within(target, 3.0) && outside(&wz) && outside(&ito);
    let detail = format!(
        "regularized {:.4}+-{:.4}, Ito corrected {:.4}+-{:.4}, uncorrected {:.4}, target {target:.4}",
        wz.estimate(),
        wz.half_width(),
        ito.estimate(),
        ito.half_width(),
        raw.estimate()
    );
    assert!(report(2, "Stratonovich targeting", pass, &detail, start.elapsed(), 120.0));
}

#[test]
fn criterion_03_two_point_lognormal() {
    let start = Instant::now();
    let sys = families::geometric(1.0, 0.0).unwrap();
    let consts = BoundConstants {
        l1: 1.0,
        l2: 0.5,
        ..BoundConstants::default()
    };
    let prm = InequalityParams {
        p: 2.0,
        x: vec![1.0],
        distance: 1e-3,
        n_max: 4,
        paths: 1_000_000,
        seed: 42,
        ..InequalityParams::default()
    };
    let r = verify_inequality("two-point-lipschitz", &sys, &consts, &prm).unwrap();
    let e = r.estimate.clone().unwrap();
    let d4 = 1e-3f64.powi(4);
    let oracle = d4 * 8f64.exp();
    let stated = d4 * 9f64.exp();
    let pass = e.within(oracle, 3.0) && e.estimate() <= stated && e.estimate() <= r.rhs && r.verdict;
    let detail = format!(
        "E|dx|^4 / d^4 = {:.1} +- {:.1} (oracle e^8 = {:.1}), <= e^9 = {:.1}, formula RHS e^10 = {:.1}, margin incl. CI {:.3e}",
        e.estimate() / d4,
        e.half_width() / d4,
        oracle / d4,
        stated / d4,
        r.rhs / d4,
        r.margin
    );
    assert!(report(3, "two-point bound with lognormal oracle", pass, &detail, start.elapsed(), 60.0));
}

/// `E(|g_1| + ... + |g_N|)^q` for integer `q` via the multinomial expansion.
fn half_normal_sum_moment(noise: usize, q: u32) -> f64 {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    let m = |k: u32| if k == 0 { 1.0 } else { gaussian_abs_moment(f64::from(k)).unwrap() };
    fn compositions(parts: usize, total: u32, acc: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            acc.push(total);
            out.push(acc.clone());
            acc.pop();
            return;
        }
        for k in 0..=total {
            acc.push(k);
            compositions(parts - 1, total - k, acc, out);
            acc.pop();
        }
    }
    let mut all = Vec::new();
    compositions(noise, q, &mut Vec::new(), &mut all);
    all.iter()
        .map(|ks| fact(q) / ks.iter().map(|&k| fact(k)).product::<f64>() * ks.iter().map(|&k| m(k)).product::<f64>())
        .sum()
}

#[test]
fn criterion_04_gamma_norms() {
    let start = Instant::now();
    const SAMPLES: usize = 1 << 21;
    let mut failures = Vec::new();
    let mut worst_ratio = 0.0f64;
    let mut worst_z = 0.0f64;
    for noise in [1usize, 3] {
        for n in 2..=10u32 {
            let per_path = 1usize << n;
            let paths = SAMPLES / per_path;
            let seed = 4000 + 10 * u64::from(n) + noise as u64;
            let gammas: Vec<Vec<f64>> = collect_samples(paths, seed, |seed, i| {
                let w = DyadicPath::generate(n, noise, seed, i)?;
                (0..per_path)
                    .map(|l| w.gamma_n(n, (l as f64 + 0.5) / per_path as f64))
                    .collect()
            })
            .unwrap();
            let flat: Vec<f64> = gammas.into_iter().flatten().collect();
            for q in [2u32, 4, 8, 16] {
                let e = MomentEstimate::from_samples(f64::from(q), &flat);
                let exact = half_normal_sum_moment(noise, q);
                let z = (e.estimate() - exact).abs() / e.half_width();
                worst_z = worst_z.max(z);
                let ratio = e.norm().0 / (noise as f64 * f64::from(q).sqrt());
                worst_ratio = worst_ratio.max(ratio);
                if z > 3.0 || ratio > 2.0 {
                    failures.push(format!("N={noise} n={n} q={q}: z={z:.2} ratio={ratio:.3}"));
                }
            }
        }
    }
    let detail = format!(
        "worst |est - exact| / half-width {worst_z:.2}, worst ||Gamma||_q/(N sqrt q) {worst_ratio:.3}; failures {failures:?}"
    );
    assert!(report(4, "Gamma_n moments", failures.is_empty(), &detail, start.elapsed(), 30.0));
}

#[test]
fn criterion_05_alpha_properties() {
    let start = Instant::now();
    let mut rng = GaussianStream::new(5, 0);
    let mut violations = 0;
    for _ in 0..100 {
        let p = 2.0 + 6.0 * rng.next_uniform();
        let noise = 1 + (rng.next_uniform() * 4.0) as usize;
        let mut c = || 2.0 * rng.next_uniform();
        let (l1, l2, k1, k2) = (c(), c(), c(), c());
        let alphas: Vec<f64> = (1..=40)
            .map(|n| alpha_n_with(p, n, noise, 1.0, l1, l2, k1, k2).unwrap())
            .collect();
        if alphas.windows(2).any(|w| w[1] > w[0]) {
            violations += 1;
        }
    }
    let limit = alpha_n_with(2.0, 60, 1, 1.0, 1.0, 0.0, 0.0, 0.0).unwrap();
    let pass = violations == 0 && (limit - 96.0).abs() < 1e-9;
    let detail = format!("monotonicity violations {violations}/100, alpha_60 = {limit:.12}");
    assert!(report(5, "alpha_n properties", pass, &detail, start.elapsed(), 1.0));
}

#[test]
fn criterion_06_convergence() {
    let start = Instant::now();
    let sys = h_family(2);
    let grid = FlowGrid::ball_lattice(2, 4.0, 25).unwrap();
    let curve = convergence_curve(&sys, &grid, &[4, 6, 8, 10], 200, 42, 2.0, &SolverConfig::default()).unwrap();
    let finest = curve.levels.last().unwrap().median;
    let pass = curve.reference_level == 14
        && curve.reduction() <= 0.25
        && curve.monotone()
        && curve.reference_disagreement <= 0.1 * finest
        && curve.discarded == 0;
    let detail = format!(
        "medians {:?}, reduction {:.4}, slope {:.3}/level, reference disagreement {:.2e} vs 10% of {:.2e}, discarded {}",
        curve.medians().iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>(),
        curve.reduction(),
        curve.median_slope,
        curve.reference_disagreement,
        finest,
        curve.discarded
    );
    assert!(report(6, "regularized flow convergence", pass, &detail, start.elapsed(), 900.0));
}

#[test]
fn criterion_07_global_flow_diagnostics() {
    let start = Instant::now();
    let times = [0.25, 0.5, 1.0];
    let run = |d: usize| {
        let sys = h_family(d);
        let grid = FlowGrid::ball_lattice(d, 4.0, 50).unwrap();
        collect_samples(100, 7, |seed, i| {
            let path = DyadicPath::generate(12, 2, seed, i)?;
            let flow = simulate_flow(&sys, &path, Resolution::Reference, &grid, &SolverConfig::default())?;
            times.iter().map(|&t| homeomorphism_report(&flow, t, 0.5)).collect::<Result<Vec<_>, _>>()
        })
        .unwrap()
    };
    let planar = run(2);
    let explosions: usize = planar.iter().flatten().map(|r| r.explosions).sum();
    let min_margin = planar.iter().flatten().map(|r| r.injectivity_margin).fold(f64::INFINITY, f64::min);
    let line = run(1);
    let ordered = line.iter().flatten().all(|r| r.order_preserved == Some(true) && r.explosions == 0);

    let blowup = families::explosive(1, 0.0).unwrap();
    let path = DyadicPath::generate(12, 1, 0, 0).unwrap();
    let tau = detect_explosion(&solve_regularized(&blowup, &path, 12, &[2.0], &SolverConfig::default()).unwrap());
    let tau_ok = tau.is_some_and(|t| (0.48..=0.52).contains(&t));

    let pass = explosions == 0 && min_margin > 0.0 && ordered && tau_ok;
    let detail = format!(
        "explosions {explosions} over 100 paths x 50 points x 3 times, min injectivity margin {min_margin:.3e}, d=1 order preserved {ordered}, blow-up detected at {tau:?}"
    );
    assert!(report(7, "global flow diagnostics", pass, &detail, start.elapsed(), 600.0));
}

#[test]
fn criterion_08_uniform_level_moments() {
    let start = Instant::now();
    let sys = h_family(2);
    let prm = InequalityParams {
        p: 4.0,
        x: vec![1.0, 0.5],
        levels: vec![4, 6, 8, 10],
        n_max: 10,
        paths: 10_000,
        seed: 8,
        ..InequalityParams::default()
    };
    let study = uniform_level_moments(&sys, &prm).unwrap();
    let pass = study.ratio <= 1.5 && study.explosions == 0;
    let detail = format!(
        "E Y_n^4 per level {:?}, max/min {:.4}",
        study.estimates.iter().map(|e| format!("{:.4}", e.estimate())).collect::<Vec<_>>(),
        study.ratio
    );
    assert!(report(8, "uniform-in-level moments", pass, &detail, start.elapsed(), 300.0));
}

#[test]
fn criterion_09_local_two_point_boundedness() {
    let start = Instant::now();
    let sys = h_family(2);
    let prm = InequalityParams {
        x: vec![1.0, 0.5],
        k_max: 10,
        level: Some(10),
        n_max: 10,
        paths: 10_000,
        seed: 9,
        ..InequalityParams::default()
    };
    let study = two_point_local_ratios(&sys, &[2.0, 4.0], &prm).unwrap();
    let pass = study.ratios.iter().all(|r| *r <= 5.0) && study.explosions == 0;
    let detail = format!("max/min over k=1..10: p=2 {:.4}, p=4 {:.4}", study.ratios[0], study.ratios[1]);
    assert!(report(9, "local two-point boundedness", pass, &detail, start.elapsed(), 600.0));
}

#[test]
fn criterion_10_determinism_and_merge() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "seed = 42\npaths = 40\nlevels = [2, 4, 6]\nradius = 2.0\n\
         [family]\nname = \"log-growth\"\nd = 2\nnoise = 2\n[grid]\npoints = 6\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for workers in [1, 4, 8] {
        let out = dir.path().join(format!("w{workers}"));
        let code = stochflow_cli::main_with_args([
            "stochflow",
            "convergence",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--workers",
            &workers.to_string(),
        ]);
        assert!(code == 0 || code == 2, "exit code {code}");
        outputs.push((
            std::fs::read(out.join("convergence.json")).unwrap(),
            std::fs::read(out.join("convergence_curve.csv")).unwrap(),
        ));
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);

    let mut g = GaussianStream::new(10, 0);
    let xs: Vec<f64> = (0..10_000).map(|_| g.next_gaussian().exp()).collect();
    let whole = MomentEstimate::from_samples(2.0, &xs);
    let mut merge_ok = true;
    for (shards, rev) in [(3usize, false), (7, true), (64, false), (1000, true)] {
        let mut parts: Vec<MomentEstimate> = xs.chunks(xs.len().div_ceil(shards)).map(|c| MomentEstimate::from_samples(2.0, c)).collect();
        if rev {
            parts.reverse();
        }
        let mut acc = MomentEstimate::new(2.0);
        parts.iter().for_each(|p| acc.merge(p));
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        merge_ok &= acc.count == whole.count
            && rel(acc.sum(), whole.sum())
            && rel(acc.sum_of_squares(), whole.sum_of_squares())
            && acc.max == whole.max;
    }
    let detail = format!("reports identical across 1/4/8 workers: {identical}; shard merges within 1e-12: {merge_ok}");
    assert!(report(10, "determinism and merge", identical && merge_ok, &detail, start.elapsed(), 60.0));
}
