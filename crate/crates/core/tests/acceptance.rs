//! Acceptance suite: one line per criterion, non-zero exit on any failure.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use fairpost_core::dataset::{
    self, generate_synthetic, BetaShape, GroupBias, SampleRecord, ScoreConcentration, ScoredDataset, SyntheticConfig,
};
use fairpost_core::fst::{self, admm_cubic_step, primal_from_mu, ConstraintSystem, FstOptions, Solver};
use fairpost_core::hps::{self, solve_lp, BaseRates};
use fairpost_core::metrics::{self, pareto_filter, EoMode, FairnessReport};
use fairpost_core::tuning::{self, TuneConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

type Check = Result<String, String>;

/// Id, name, runtime budget in seconds, check.
type Criterion = (u32, &'static str, Option<u64>, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn record(i: usize, label: u8, group: u8, score: f64) -> SampleRecord {
    SampleRecord {
        id: format!("r{i:03}"),
        logits: None,
        score: Some(score),
        label,
        groups: BTreeMap::from([("g".to_string(), group)]),
        subgroups: None,
        split: None,
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---------------------------------------------------------------- 1

struct Brute {
    eo: [f64; 2],
    avg_eo: [f64; 2],
    geo: [f64; 2],
    ba: f64,
    spd: f64,
}

/// Direct counting over (group, label, prediction) cells.
fn brute_force(labels: &[u8], groups: &[u8], preds: &[u8], scores: &[f64]) -> Brute {
    // cnt[g][y][p], with g = 2 the whole population
    let mut cnt = [[[0u32; 2]; 2]; 3];
    let mut ssum = [[0.0f64; 2]; 3];
    for i in 0..labels.len() {
        let (g, y, p) = (groups[i] as usize, labels[i] as usize, preds[i] as usize);
        for gg in [g, 2] {
            cnt[gg][y][p] += 1;
            ssum[gg][y] += scores[i];
        }
    }
    let tpr = |g: usize| f64::from(cnt[g][1][1]) / f64::from(cnt[g][1][0] + cnt[g][1][1]);
    let fpr = |g: usize| f64::from(cnt[g][0][1]) / f64::from(cnt[g][0][0] + cnt[g][0][1]);
    let mean = |g: usize, y: usize| ssum[g][y] / f64::from(cnt[g][y][0] + cnt[g][y][1]);
    let mut eo = [0.0; 2];
    let mut avg_eo = [0.0; 2];
    let mut geo = [0.0; 2];
    for (m, reference) in [0usize, 2].into_iter().enumerate() {
        let dt = (tpr(1) - tpr(reference)).abs();
        let df = (fpr(1) - fpr(reference)).abs();
        eo[m] = dt.max(df);
        avg_eo[m] = (dt + df) / 2.0;
        geo[m] = (mean(1, 1) - mean(reference, 1)).abs().max((mean(1, 0) - mean(reference, 0)).abs());
    }
    let rate = |g: usize| f64::from(cnt[g][0][1] + cnt[g][1][1]) / f64::from(cnt[g].iter().flatten().sum::<u32>());
    Brute {
        eo,
        avg_eo,
        geo,
        ba: (tpr(2) + 1.0 - fpr(2)) / 2.0,
        spd: rate(1) - rate(0),
    }
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut done = 0;
    let mut worst = 0.0f64;
    while done < 200 {
        let n = rng.random_range(8..=50);
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let groups: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let preds: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let cells_ok = (0..2).all(|g| (0..2).all(|y| (0..n).any(|i| groups[i] == g && labels[i] == y)));
        if !cells_ok {
            continue;
        }
        let ds = ScoredDataset::new((0..n).map(|i| record(i, labels[i], groups[i], scores[i])).collect()).unwrap();
        let b = brute_force(&labels, &groups, &preds, &scores);
        for (m, mode) in [EoMode::Complement, EoMode::Overall].into_iter().enumerate() {
            let pairs = [
                ("eo", metrics::equalized_odds(&ds, &preds, "g", mode).unwrap(), b.eo[m]),
                ("avg_eo", metrics::average_equalized_odds(&ds, &preds, "g", mode).unwrap(), b.avg_eo[m]),
                ("geo", metrics::geo_difference_with_mode(&ds, &scores, "g", mode).unwrap(), b.geo[m]),
            ];
            for (name, got, want) in pairs {
                worst = worst.max((got - want).abs());
                ensure!(close(got, want, 1e-12), "dataset {done} {name} ({mode:?}): {got} vs {want}");
            }
        }
        let ba = metrics::balanced_accuracy(&ds, &preds).unwrap();
        let spd = metrics::statistical_parity_difference(&ds, &preds, "g").unwrap();
        worst = worst.max((ba - b.ba).abs()).max((spd - b.spd).abs());
        ensure!(close(ba, b.ba, 1e-12), "dataset {done} balanced accuracy: {ba} vs {}", b.ba);
        ensure!(close(spd, b.spd, 1e-12), "dataset {done} spd: {spd} vs {}", b.spd);
        done += 1;
    }
    Ok(format!("200 datasets, max deviation {worst:.1e}"))
}

// ---------------------------------------------------------------- 2

/// Minimizer of a strictly convex function on (0, 1) by bisection on its
/// increasing derivative.
fn bisect_derivative(d: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        if d(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_q = 0.0f64;
    for _ in 0..1000 {
        let r: f64 = rng.random_range(1e-4..1.0 - 1e-4);
        let mu = if rng.random::<bool>() { rng.random_range(-20.0..20.0) } else { rng.random_range(-0.5..0.5) };
        let s = primal_from_mu(r, mu).unwrap();
        let oracle = bisect_derivative(|s| -r / s + (1.0 - r) / (1.0 - s) + mu);
        worst_q = worst_q.max((s - oracle).abs());
        ensure!(close(s, oracle, 1e-8), "primal_from_mu({r}, {mu}) = {s}, oracle {oracle}");
    }
    let mut worst_c = 0.0f64;
    for _ in 0..1000 {
        let r: f64 = rng.random_range(1e-4..1.0 - 1e-4);
        let v: f64 = rng.random_range(-1.0..2.0);
        let rho = log_uniform(&mut rng, 1e-3, 1e4);
        let s = admm_cubic_step(r, v, rho).unwrap();
        let oracle = bisect_derivative(|s| -r / s + (1.0 - r) / (1.0 - s) + rho * (s - v));
        worst_c = worst_c.max((s - oracle).abs());
        ensure!(close(s, oracle, 1e-8), "admm_cubic_step({r}, {v}, {rho}) = {s}, oracle {oracle}");
    }
    for _ in 0..200 {
        let r: f64 = rng.random_range(1e-6..1.0 - 1e-6);
        ensure!(close(primal_from_mu(r, 0.0).unwrap(), r, 1e-12), "mu = 0 is not the identity at r = {r}");
        let rho = log_uniform(&mut rng, 1e-4, 1e8);
        let s = admm_cubic_step(0.5, 0.5, rho).unwrap();
        ensure!(close(s, 0.5, 1e-12), "symmetric cubic at rho = {rho} gave {s}");
    }
    Ok(format!("max deviation quadratic {worst_q:.1e}, cubic {worst_c:.1e}"))
}

// ---------------------------------------------------------------- 3

fn cross_entropy_sum(r: &[f64], s: &[f64]) -> f64 {
    r.iter().zip(s).map(|(&r, &s)| -(r * s.ln() + (1.0 - r) * (1.0 - s).ln())).sum()
}

/// Projection onto `{s : |a_y · s| <= eps, lo <= s <= hi}` by Dykstra's
/// alternating projections.
fn dykstra(x: &[f64], rows: &[Vec<f64>; 2], eps: f64, lo: f64, hi: f64) -> Vec<f64> {
    let n = x.len();
    let mut z = x.to_vec();
    let mut incr = vec![vec![0.0; n]; 5];
    for _ in 0..1_000_000 {
        let before = z.clone();
        let before_incr = incr.clone();
        for set in 0..5 {
            let v: Vec<f64> = z.iter().zip(&incr[set]).map(|(a, b)| a + b).collect();
            let p: Vec<f64> = if set == 4 {
                v.iter().map(|t| t.clamp(lo, hi)).collect()
            } else {
                let (a, sign) = (&rows[set / 2], if set % 2 == 0 { 1.0 } else { -1.0 });
                let dot: f64 = a.iter().zip(&v).map(|(p, q)| sign * p * q).sum();
                let nrm: f64 = a.iter().map(|p| p * p).sum();
                let step = ((dot - eps) / nrm).max(0.0);
                v.iter().zip(a).map(|(t, p)| t - step * sign * p).collect()
            };
            incr[set] = v.iter().zip(&p).map(|(a, b)| a - b).collect();
            z = p;
        }
        let settled = incr.iter().flatten().zip(before_incr.iter().flatten()).all(|(a, b)| (a - b).abs() < 1e-15);
        if settled && z.iter().zip(&before).all(|(a, b)| (a - b).abs() < 1e-15) {
            break;
        }
    }
    z
}

/// Projected gradient descent on the primal with backtracking.
fn primal_oracle(r: &[f64], rows: &[Vec<f64>; 2], eps: f64) -> Vec<f64> {
    let (lo, hi) = (1e-9, 1.0 - 1e-9);
    let grad = |s: &[f64]| -> Vec<f64> { r.iter().zip(s).map(|(&r, &s)| -r / s + (1.0 - r) / (1.0 - s)).collect() };
    // start away from the box faces, where the curvature is extreme
    let mut s = dykstra(r, rows, eps, 1e-3, 1.0 - 1e-3);
    let mut f = cross_entropy_sum(r, &s);
    let mut step = 1e-2;
    let mut stalls = 0;
    for _ in 0..20_000 {
        let g = grad(&s);
        loop {
            let trial: Vec<f64> = s.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let next = dykstra(&trial, rows, eps, lo, hi);
            let d: Vec<f64> = next.iter().zip(&s).map(|(a, b)| a - b).collect();
            let lin: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            let quad: f64 = d.iter().map(|x| x * x).sum::<f64>() / (2.0 * step);
            let fn_ = cross_entropy_sum(r, &next);
            if fn_ <= f + lin + quad + 1e-13 * f.abs().max(1.0) {
                let moved = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                s = next;
                f = fn_;
                step *= 1.5;
                // a tiny move only signals convergence when the step is not
                // being held down by the boundary
                if moved < 1e-13 && step > 1e-6 {
                    return s;
                }
                stalls = 0;
                break;
            }
            step *= 0.5;
            if step < 1e-16 {
                stalls += 1;
                if stalls > 1 {
                    return s;
                }
                step = 1e-2;
                break;
            }
        }
    }
    s
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_ce = 0.0f64;
    let mut worst_geo = f64::NEG_INFINITY;
    let mut worst_rms = 0.0f64;
    for inst in 0..20 {
        let n = rng.random_range(6..=20);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(0.02..0.98)).collect();
        let mut groups: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        groups[0] = 1;
        groups[1] = 0;
        groups[2] = 1;
        groups[3] = 0;
        // oracle-side constraint rows, built directly from the definition
        let mut u = [[0.0f64; 2]; 2];
        for i in 0..n {
            u[0][groups[i] as usize] += 1.0 - r[i];
            u[1][groups[i] as usize] += r[i];
        }
        let rows: [Vec<f64>; 2] = [0usize, 1].map(|y| {
            (0..n)
                .map(|i| {
                    let w = if y == 1 { r[i] } else { 1.0 - r[i] };
                    if groups[i] == 1 { w / u[y][1] } else { -w / u[y][0] }
                })
                .collect()
        });
        let baseline: f64 = rows
            .iter()
            .map(|a| a.iter().zip(&r).map(|(p, q)| p * q).sum::<f64>().abs())
            .fold(0.0, f64::max);
        let eps = baseline * rng.random_range(0.2..0.7);
        let oracle = primal_oracle(&r, &rows, eps);
        let oracle_ce = cross_entropy_sum(&r, &oracle);

        let ds = ScoredDataset::new((0..n).map(|i| record(i, u8::from(r[i] > 0.5), groups[i], r[i])).collect()).unwrap();
        let membership = ds.membership("g").unwrap();
        let mut fitted = Vec::new();
        for solver in [Solver::Pgd, Solver::Admm] {
            let opts = FstOptions { solver, ..Default::default() };
            let m = fst::fit(&ds, "g", eps, &opts).map_err(|e| format!("instance {inst} {solver:?}: {e}"))?;
            let s = m.transform_scores(&r, &membership).unwrap();
            let ce = cross_entropy_sum(&r, &s);
            let geo = metrics::proxy_geo_difference(&r, &s, &membership, "g", EoMode::Complement).unwrap();
            worst_ce = worst_ce.max((ce - oracle_ce).abs());
            worst_geo = worst_geo.max(geo - eps);
            ensure!(close(ce, oracle_ce, 1e-3), "instance {inst} {solver:?}: cross-entropy {ce} vs oracle {oracle_ce}");
            ensure!(geo <= eps + 1e-3, "instance {inst} {solver:?}: GEO {geo} > eps {eps} + 1e-3");
            fitted.push(s);
        }
        let rms = (fitted[0].iter().zip(&fitted[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64).sqrt();
        worst_rms = worst_rms.max(rms);
        ensure!(rms <= 1e-4, "instance {inst}: solvers disagree, RMS {rms}");
    }
    Ok(format!(
        "20 instances x 2 solvers, max |CE - oracle| {worst_ce:.1e}, max GEO - eps {worst_geo:.1e}, max solver RMS {worst_rms:.1e}"
    ))
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut fits = 0;
    for inst in 0..30 {
        let n = rng.random_range(50..500);
        let records: Vec<SampleRecord> = (0..n)
            .map(|i| {
                let g = u8::from(i % 3 == 0);
                let s: f64 = if rng.random_range(0..20) == 0 { 0.0 } else { rng.random() };
                record(i, rng.random_range(0..2), g, s)
            })
            .collect();
        let ds = ScoredDataset::new(records).unwrap();
        let sys = ConstraintSystem::from_dataset(&ds, "g", 1.0, EoMode::Complement).unwrap();
        let baseline = sys.geo_gap(sys.scores());
        for eps in [baseline, baseline * 1.5, 1.0] {
            for solver in [Solver::Pgd, Solver::Admm] {
                let opts = FstOptions { solver, ..Default::default() };
                let m = fst::fit(&ds, "g", eps, &opts).map_err(|e| format!("instance {inst}: {e}"))?;
                ensure!(m.lambdas == [0.0; 4], "instance {inst} eps {eps} {solver:?}: lambdas {:?}", m.lambdas);
                let out = m.apply(&ds).unwrap();
                ensure!(out == ds, "instance {inst} eps {eps} {solver:?}: transform changed scores");
                fits += 1;
            }
        }
    }
    Ok(format!("{fits} fits at eps >= baseline GEO, all lambda = 0 and bit-identical scores"))
}

// ---------------------------------------------------------------- 5

fn random_base_rates(rng: &mut ChaCha8Rng, grid_friendly: bool) -> BaseRates {
    let draw = |rng: &mut ChaCha8Rng| {
        if grid_friendly {
            f64::from(rng.random_range(1..10u8)) / 10.0
        } else {
            rng.random_range(0.02..0.98)
        }
    };
    let tpr = [draw(rng), draw(rng)];
    let fpr = [draw(rng), draw(rng)];
    let w: [f64; 4] = [0; 4].map(|_| rng.random_range(0.05..1.0));
    let total: f64 = w.iter().sum();
    BaseRates {
        tpr,
        fpr,
        priors: [[w[0] / total, w[1] / total], [w[2] / total, w[3] / total]],
        n: 1000,
    }
}

/// Minimum objective over grid points (step 1e-2) meeting both equalities
/// to 1e-6. The last coordinate is enumerated around its continuous
/// solution, which visits every feasible grid point.
fn grid_minimum(b: &BaseRates) -> (f64, usize) {
    let mut best = f64::INFINITY;
    let mut feasible = 0;
    for i in 0..=100 {
        for j in 0..=100 {
            let (p00, p01) = (f64::from(i) / 100.0, f64::from(j) / 100.0);
            let t0 = p01 * b.tpr[0] + p00 * (1.0 - b.tpr[0]);
            let f0 = p01 * b.fpr[0] + p00 * (1.0 - b.fpr[0]);
            for k in 0..=100 {
                let p10 = f64::from(k) / 100.0;
                let p11_star = (t0 - p10 * (1.0 - b.tpr[1])) / b.tpr[1];
                let centre = (p11_star * 100.0).floor() as i64;
                for l in (centre - 1).max(0)..=(centre + 2).min(100) {
                    let p11 = l as f64 / 100.0;
                    let t1 = p11 * b.tpr[1] + p10 * (1.0 - b.tpr[1]);
                    let f1 = p11 * b.fpr[1] + p10 * (1.0 - b.fpr[1]);
                    if (t0 - t1).abs() <= 1e-6 && (f0 - f1).abs() <= 1e-6 {
                        feasible += 1;
                        best = best.min(b.expected_error(&[[p00, p01], [p10, p11]]));
                    }
                }
            }
        }
    }
    (best, feasible)
}

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut grid_points = 0;
    let mut min_gap = f64::INFINITY;
    for fixture in 0..100 {
        let b = random_base_rates(&mut rng, fixture % 4 == 0);
        let p = solve_lp(&b).map_err(|e| format!("fixture {fixture}: {e}"))?;
        let (tpr, fpr) = b.post_rates(&p);
        ensure!(
            (tpr[0] - tpr[1]).abs() <= 1e-9 && (fpr[0] - fpr[1]).abs() <= 1e-9,
            "fixture {fixture}: infeasible solution {p:?}"
        );
        ensure!(p.iter().flatten().all(|v| (0.0..=1.0).contains(v)), "fixture {fixture}: p out of box");
        let obj = b.expected_error(&p);
        let (grid_best, feasible) = grid_minimum(&b);
        grid_points += feasible;
        ensure!(obj <= grid_best + 1e-12, "fixture {fixture}: LP {obj} > grid {grid_best}");
        min_gap = min_gap.min(grid_best - obj);
        let report = hps::expected_report(&hps::HpsModel::with_mixing("g", b, p));
        ensure!(report.eo <= 1e-9, "fixture {fixture}: expected EO {}", report.eo);
    }
    Ok(format!("100 fixtures, {grid_points} feasible grid points, min (grid - LP) {min_gap:.1e}"))
}

// ---------------------------------------------------------------- 6

fn effect_size_config(seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        n: 50_000,
        positive_rate: 0.3,
        group_rate: 0.2,
        score_concentration: ScoreConcentration {
            positive: BetaShape { alpha: 10.0, beta: 2.0 },
            negative: BetaShape { alpha: 3.0, beta: 6.0 },
        },
        group_bias: GroupBias { tpr: 0.0, fpr: 0.2 },
        seed,
        ..Default::default()
    }
}

fn criterion_6() -> Check {
    let ds = generate_synthetic(&effect_size_config(1)).unwrap();
    let base = FairnessReport::from_scores(&ds, &ds.scores().unwrap(), 0.5, "religion", EoMode::Complement).unwrap();
    ensure!(close(base.eo, 0.20, 0.02), "generator baseline EO {} not within 0.20 +- 0.02", base.eo);
    let (dev, test) = dataset::split(&ds, 0.5, 11).unwrap();
    let cfg = TuneConfig {
        attribute: "religion".into(),
        calibrate: true,
        seed: 5,
        ..Default::default()
    };
    let out = tuning::run(&dev, &test, &cfg).map_err(|e| e.to_string())?;
    let bt = &out.baseline_test;
    let best = out
        .frontier
        .points
        .iter()
        .filter_map(|p| p.test.as_ref().map(|t| (p, t)))
        .filter(|(_, t)| t.balanced_accuracy >= bt.balanced_accuracy - 0.02)
        .min_by(|a, b| a.1.eo.total_cmp(&b.1.eo));
    let Some((p, t)) = best else {
        return Err("no frontier point within 2 pp balanced accuracy".into());
    };
    let reduction = 1.0 - t.eo / bt.eo;
    ensure!(
        reduction >= 0.5,
        "best admissible frontier point (eps {:?}, t {}) reduces test EO {:.4} -> {:.4} ({:.0}%)",
        p.epsilon,
        p.threshold,
        bt.eo,
        t.eo,
        100.0 * reduction
    );
    Ok(format!(
        "baseline EO {:.3}; eps {:?}, t {}: test EO {:.3} -> {:.3} (-{:.0}%), balanced accuracy {:.4} -> {:.4}",
        base.eo,
        p.epsilon.unwrap_or(f64::NAN),
        p.threshold,
        bt.eo,
        t.eo,
        100.0 * reduction,
        bt.balanced_accuracy,
        t.balanced_accuracy
    ))
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Check {
    let mut slowest = Duration::ZERO;
    let mut worst_rms = 0.0f64;
    let mut iters = Vec::new();
    for seed in 0..10 {
        let cfg = SyntheticConfig {
            n: 100_000,
            group_bias: GroupBias { tpr: -0.1, fpr: 0.1 },
            seed,
            ..Default::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        let membership = ds.membership("religion").unwrap();
        let scores = ds.scores().unwrap();
        let mut fitted = Vec::new();
        for solver in [Solver::Admm, Solver::Pgd] {
            let opts = FstOptions { solver, ..Default::default() };
            let start = Instant::now();
            let m = fst::fit(&ds, "religion", 0.01, &opts).map_err(|e| format!("seed {seed} {solver:?}: {e}"))?;
            let took = start.elapsed();
            slowest = slowest.max(took);
            ensure!(took <= Duration::from_secs(120), "seed {seed} {solver:?}: fit took {took:?}");
            ensure!(m.diagnostics.fitted_geo <= 0.01 + 1e-3, "seed {seed} {solver:?}: {:?}", m.diagnostics);
            iters.push(m.diagnostics.iterations);
            fitted.push(m.transform_scores(&scores, &membership).unwrap());
        }
        let rms = (fitted[0].iter().zip(&fitted[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / scores.len() as f64).sqrt();
        worst_rms = worst_rms.max(rms);
        ensure!(rms <= 1e-4, "seed {seed}: solvers disagree, RMS {rms}");
    }
    Ok(format!(
        "20 fits on n = 100000, slowest {slowest:.2?}, iterations {}..{}, max solver RMS {worst_rms:.1e}",
        iters.iter().min().unwrap(),
        iters.iter().max().unwrap()
    ))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Check {
    let cfg = SyntheticConfig {
        n: 20_000,
        positive_rate: 0.2,
        group_rate: 0.15,
        group_bias: GroupBias { tpr: -0.1, fpr: 0.1 },
        seed: 8,
        ..Default::default()
    };
    let a = generate_synthetic(&cfg).unwrap();
    let b = generate_synthetic(&cfg).unwrap();
    let bytes = dataset::to_bytes(&a, dataset::Format::Jsonl).unwrap();
    ensure!(bytes == dataset::to_bytes(&b, dataset::Format::Jsonl).unwrap(), "generator not deterministic");
    let (dev, test) = dataset::split(&a, 0.6, 3).unwrap();

    let tune = TuneConfig {
        attribute: "religion".into(),
        calibrate: true,
        seed: 9,
        ..Default::default()
    };
    let first = serde_json::to_vec(&tuning::run(&dev, &test, &tune).unwrap()).unwrap();
    let second = serde_json::to_vec(&tuning::run(&dev, &test, &tune).unwrap()).unwrap();
    ensure!(first == second, "pipeline reports differ between runs");

    let (train, eval) = dataset::split(&dev, 0.5, 9).unwrap();
    let grid = tuning::fst_grid(&train, &eval, "religion", &tune.epsilons, &tune.thresholds, true, &tune.fst).unwrap();
    let freeze = |g: &tuning::FstGrid| serde_json::to_vec(&(&g.models, &g.calibrator)).unwrap();
    let before = freeze(&grid);
    for p in &grid.points {
        let m = p.epsilon.and_then(|e| grid.model_for(e));
        tuning::evaluate_on_test(p, m, grid.calibrator.as_ref(), &test, "religion", EoMode::Complement).unwrap();
    }
    ensure!(before == freeze(&grid), "model artifacts changed by test evaluation");

    let preds = metrics::threshold_predictions(&eval.scores().unwrap(), 0.5);
    let hps_model = hps::fit(&eval, &preds, "religion").unwrap();
    let hps_before = serde_json::to_vec(&hps_model).unwrap();
    let test_preds = metrics::threshold_predictions(&test.scores().unwrap(), 0.5);
    let x = hps_model.apply_dataset(&test, &test_preds, 17).unwrap();
    let y = hps_model.apply_dataset(&test, &test_preds, 17).unwrap();
    ensure!(x == y, "HPS sampling not deterministic for a fixed seed");
    ensure!(hps_before == serde_json::to_vec(&hps_model).unwrap(), "HPS model changed by application");
    Ok(format!("report {} bytes identical across runs; {} grid points evaluated on frozen artifacts", first.len(), grid.points.len()))
}

// ---------------------------------------------------------------- 9

#[derive(Deserialize)]
struct PearsonFixture {
    xs: Vec<f64>,
    ys: Vec<f64>,
    rho: f64,
    p_value: f64,
}

fn criterion_9() -> Check {
    let fixtures: Vec<PearsonFixture> = serde_json::from_str(include_str!("data/pearson_fixtures.json")).unwrap();
    ensure!(fixtures.len() == 50, "expected 50 fixtures, found {}", fixtures.len());
    let (mut worst_r, mut worst_p) = (0.0f64, 0.0f64);
    for (i, f) in fixtures.iter().enumerate() {
        let got = metrics::pearson(&f.xs, &f.ys).map_err(|e| format!("fixture {i}: {e}"))?;
        worst_r = worst_r.max((got.rho - f.rho).abs());
        worst_p = worst_p.max((got.p_value - f.p_value).abs());
        ensure!(close(got.rho, f.rho, 1e-10), "fixture {i}: rho {} vs {}", got.rho, f.rho);
        ensure!(close(got.p_value, f.p_value, 1e-8), "fixture {i}: p {} vs {}", got.p_value, f.p_value);
        let same = metrics::pearson(&f.xs, &f.xs).unwrap();
        ensure!(same.rho == 1.0 && same.p_value == 0.0, "fixture {i}: identity gave {same:?}");
        let neg: Vec<f64> = f.xs.iter().map(|x| -x).collect();
        let anti = metrics::pearson(&f.xs, &neg).unwrap();
        ensure!(anti.rho == -1.0, "fixture {i}: antisymmetry gave {}", anti.rho);
        let flipped = metrics::pearson(&f.xs, &f.ys.iter().map(|y| -y).collect::<Vec<_>>()).unwrap();
        ensure!(flipped.rho == -got.rho && flipped.p_value == got.p_value, "fixture {i}: sign flip not exact");
    }
    Ok(format!("50 fixtures, max |drho| {worst_r:.1e}, max |dp| {worst_p:.1e}"))
}

// ---------------------------------------------------------------- 10

fn criterion_10() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut kept = 0;
    for set in 0..100 {
        let n = rng.random_range(1..60);
        // coarse values force ties and duplicates
        let levels = if set % 2 == 0 { 8 } else { 1000 };
        let pts: Vec<(usize, f64, f64)> = (0..n)
            .map(|i| {
                let eo = f64::from(rng.random_range(0..levels)) / f64::from(levels);
                let ba = f64::from(rng.random_range(0..levels)) / f64::from(levels);
                (i, eo, ba)
            })
            .collect();
        let dominated = |p: &(usize, f64, f64)| {
            pts.iter().any(|q| q.1 <= p.1 && q.2 >= p.2 && (q.1 < p.1 || q.2 > p.2))
        };
        let mut oracle: Vec<usize> = pts.iter().filter(|p| !dominated(p)).map(|p| p.0).collect();
        let front = pareto_filter(pts.clone(), |p| (p.1, p.2));
        ensure!(front.windows(2).all(|w| w[0].1 <= w[1].1), "set {set}: frontier not sorted by eo");
        let mut got: Vec<usize> = front.iter().map(|p| p.0).collect();
        got.sort_unstable();
        oracle.sort_unstable();
        ensure!(got == oracle, "set {set}: frontier {got:?} vs oracle {oracle:?}");
        kept += got.len();
    }
    Ok(format!("100 point sets, {kept} frontier points, identical to the dominance oracle"))
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "metric oracle equivalence", Some(5), criterion_1),
        (2, "FST inner solvers", Some(5), criterion_2),
        (3, "FST convex-oracle equivalence", Some(30), criterion_3),
        (4, "FST identity law", None, criterion_4),
        (5, "HPS LP optimality", Some(60), criterion_5),
        (6, "end-to-end effect size", Some(300), criterion_6),
        (7, "FST scale and runtime", None, criterion_7),
        (8, "no test leakage, determinism", None, criterion_8),
        (9, "Pearson correctness", None, criterion_9),
        (10, "Pareto correctness", None, criterion_10),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let result = match (result, budget) {
            (Ok(_), Some(limit)) if took > Duration::from_secs(limit) => {
                Err(format!("runtime {took:.2?} exceeds {limit} s"))
            }
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("criterion {id:>2} PASS  {name} [{took:.2?}]: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name} [{took:.2?}]: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 10 acceptance criteria passed");
}
