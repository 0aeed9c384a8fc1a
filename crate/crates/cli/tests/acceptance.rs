//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::cell::{Cell, RefCell};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use freshsched_core::analytic::{
    conservation_rhs, fcfs_metrics, query1_metrics, query_k_metrics, update1_metrics, update_k_metrics,
};
use freshsched_core::sim::{littles_law_residual, run_replication_traced, simulate_point, SimConfig, SummaryStats};
use freshsched_core::{Metric, ModelParams, PolicySpec, Threshold};
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

/// One seed for every simulation in the gate, the CLI default.
const SEED: u64 = 1;

fn params(lu: f64, lq: f64) -> ModelParams {
    ModelParams::new(lu, 1.0, lq, 1.0).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_freshsched")
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run_cli(args: &[&str], cwd: &Path) -> Run {
    let out = Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .env_remove("FRESHSCHED_SEED")
        .output()
        .expect("failed to start freshsched");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Value printed on a `label = value` line.
fn printed(stdout: &str, label: &str) -> Option<f64> {
    stdout
        .lines()
        .find(|l| l.starts_with(label))
        .and_then(|l| l.split('=').nth(1))
        .and_then(|v| v.trim().parse().ok())
}

/// A stable simulated point kept for the Little's-law sweep.
struct SimRecord {
    label: String,
    params: ModelParams,
    stats: SummaryStats,
}

#[derive(Default)]
struct Gate {
    sims: Vec<SimRecord>,
    /// Per-replication metrics of the long single runs of criterion 6.
    traces: Vec<(String, ModelParams, freshsched_core::ReplicationMetrics)>,
    failed: usize,
}

impl Gate {
    fn simulate(&mut self, label: &str, p: &ModelParams, policy: &PolicySpec) -> SummaryStats {
        let stats = simulate_point(p, policy, &SimConfig::standard(SEED)).unwrap();
        self.sims.push(SimRecord {
            label: format!("{label} {policy} @ ({}, {})", p.lambda_u(), p.lambda_q()),
            params: *p,
            stats: stats.clone(),
        });
        stats
    }

    fn report(&mut self, id: u32, title: &str, limit: Option<Duration>, start: Instant, checks: Vec<(bool, String)>) {
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed < l);
        let pass = in_time && checks.iter().all(|(ok, _)| *ok);
        if !pass {
            self.failed += 1;
        }
        let budget = limit.map(|l| format!(" / {} s", l.as_secs())).unwrap_or_default();
        println!(
            "[{}] criterion {id:>2}: {title} ({:.2} s{budget})",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        for (ok, detail) in checks {
            println!("         {} {detail}", if ok { "ok  " } else { "FAIL" });
        }
        if !in_time {
            println!("         FAIL runtime over budget");
        }
    }
}

fn mean_hw(s: &SummaryStats, m: Metric) -> (f64, f64) {
    let x = s.get(m);
    (x.mean.unwrap(), x.half_width.unwrap())
}

fn criterion_1(g: &mut Gate, scratch: &Path) {
    let start = Instant::now();
    let mut checks = Vec::new();
    let run = run_cli(&["analyze", "--policy", "fcfs", "--lambda-u", "0.5", "--lambda-q", "0.1"], scratch);
    let t_q = printed(&run.stdout, "E[T_q]");
    let a = printed(&run.stdout, "E[A]");
    checks.push((
        run.code == 0 && t_q == Some(2.5) && a == Some(4.5),
        format!("analyze prints E[T_q] = {t_q:?}, E[A] = {a:?} (want 2.5, 4.5)"),
    ));
    let exact = fcfs_metrics(&params(0.5, 0.1)).unwrap();
    checks.push((
        exact.expected_response_time == 2.5 && exact.expected_paoi == 4.5,
        format!("closed form {} / {}", exact.expected_response_time, exact.expected_paoi),
    ));
    let s = g.simulate("c1", &params(0.5, 0.1), &PolicySpec::Fcfs);
    let (tq, _) = mean_hw(&s, Metric::ResponseTime);
    let (paoi, _) = mean_hw(&s, Metric::Paoi);
    checks.push((rel(tq, 2.5) < 0.05, format!("simulated E[T_q] {tq:.4}, {:.2}% off", 100.0 * rel(tq, 2.5))));
    checks.push((rel(paoi, 4.5) < 0.05, format!("simulated E[A] {paoi:.4}, {:.2}% off", 100.0 * rel(paoi, 4.5))));
    g.report(1, "FCFS closed form vs simulation", Some(Duration::from_secs(5)), start, checks);
}

fn criterion_2(g: &mut Gate) {
    let start = Instant::now();
    let mut checks = Vec::new();
    let p = params(0.8, 0.1);
    let q1 = query1_metrics(&p).unwrap();
    checks.push((
        (q1.expected_response_time - 1.1111).abs() < 5e-5 && (q1.expected_paoi - 12.3611).abs() < 5e-5,
        format!("Query-1 E[T_q] {:.6}, E[A] {:.6}", q1.expected_response_time, q1.expected_paoi),
    ));
    let s = g.simulate("c2", &p, &PolicySpec::query_k(1).unwrap());
    let (paoi, hw) = mean_hw(&s, Metric::Paoi);
    checks.push((
        rel(paoi, q1.expected_paoi) < 0.05,
        format!(
            "simulated Query-1 E[A] {paoi:.4} +- {hw:.4}, {:.2}% from 12.3611 (reference simulation: 12.46)",
            100.0 * rel(paoi, q1.expected_paoi)
        ),
    ));
    let fcfs = fcfs_metrics(&p).unwrap();
    let fs = g.simulate("c2", &p, &PolicySpec::Fcfs);
    let (fm, fhw) = mean_hw(&fs, Metric::Paoi);
    checks.push((
        (fcfs.expected_paoi - 11.25).abs() < 1e-12 && (11.62 - fcfs.expected_paoi).abs() <= 2.0 * fhw,
        format!(
            "FCFS E[A] {} ; reference 11.62 lies within 2 x {fhw:.4} of it (our simulation {fm:.4})",
            fcfs.expected_paoi
        ),
    ));
    g.report(2, "Query-1 priority formulas", Some(Duration::from_secs(10)), start, checks);
}

fn criterion_3(g: &mut Gate, scratch: &Path) {
    let start = Instant::now();
    let mut checks = Vec::new();
    let run = run_cli(
        &["solve", "--policy", "query-k", "--k", "3", "--lambda-u", "0.8", "--lambda-q", "0.1"],
        scratch,
    );
    let a = printed(&run.stdout, "E[A]");
    checks.push((
        run.code == 0 && a.is_some_and(|a| rel(a, 11.15) < 0.05),
        format!(
            "solve prints E[A] = {a:?}, {:.2}% from the reference 11.15",
            a.map(|a| 100.0 * rel(a, 11.15)).unwrap_or(f64::NAN)
        ),
    ));
    let p = params(0.8, 0.1);
    let chain = query_k_metrics(&p, 3, None).unwrap();
    let s = g.simulate("c3", &p, &PolicySpec::query_k(3).unwrap());
    for (m, exact) in [
        (Metric::Paoi, chain.expected_paoi),
        (Metric::ResponseTime, chain.expected_response_time),
    ] {
        let (mean, hw) = mean_hw(&s, m);
        checks.push((
            (mean - exact).abs() <= 2.0 * hw,
            format!("{}: chain {exact:.4}, simulation {mean:.4} +- {hw:.4}", m.name()),
        ));
    }
    g.report(3, "Query-3 chain vs reference value and simulation", Some(Duration::from_secs(60)), start, checks);
}

fn criterion_4(g: &mut Gate) {
    let start = Instant::now();
    let mut checks = Vec::new();
    for (lu, lq) in [(0.2, 0.1), (0.3, 0.3), (0.8, 0.1)] {
        let p = params(lu, lq);
        let pairs = [
            ("Query", query_k_metrics(&p, 1, None).unwrap(), query1_metrics(&p).unwrap()),
            ("Update", update_k_metrics(&p, 1, None).unwrap(), update1_metrics(&p).unwrap()),
        ];
        for (name, chain, exact) in pairs {
            let worst = [
                rel(chain.expected_response_time, exact.expected_response_time),
                rel(chain.expected_update_system_time, exact.expected_update_system_time),
                rel(chain.expected_paoi, exact.expected_paoi),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            checks.push((
                worst < 1e-4,
                format!("{name}-1 chain vs closed form at rho {:.1}: max rel err {worst:.2e}", p.rho()),
            ));
        }
    }
    g.report(4, "k = 1 chain reproduces the priority closed forms", Some(Duration::from_secs(60)), start, checks);
}

fn criterion_5(g: &mut Gate) {
    let start = Instant::now();
    let mut checks = Vec::new();
    let third = 1.0 / 3.0;
    let p = params(third, third);
    let rhs = conservation_rhs(&p).unwrap();
    let policies = [
        PolicySpec::Fcfs,
        PolicySpec::query_k(1).unwrap(),
        PolicySpec::query_k(3).unwrap(),
        PolicySpec::update_k(1).unwrap(),
        PolicySpec::update_k(3).unwrap(),
        PolicySpec::joint(Threshold::Finite(3), Threshold::Finite(3)).unwrap(),
    ];
    for policy in policies {
        let s = g.simulate("c5", &p, &policy);
        let lhs = s.nq.mean.unwrap() / p.mu_q() + s.nu.mean.unwrap() / p.mu_u();
        checks.push((
            rel(lhs, rhs) < 0.03,
            format!("{policy}: E[N_q] + E[N_u] = {lhs:.4} vs {rhs:.4} ({:.2}%)", 100.0 * rel(lhs, rhs)),
        ));
    }
    g.report(5, "conservation law in simulation", Some(Duration::from_secs(30)), start, checks);
}

fn criterion_6(g: &mut Gate) {
    let start = Instant::now();
    let mut checks = Vec::new();
    let policies = [
        PolicySpec::Fcfs,
        PolicySpec::query_k(1).unwrap(),
        PolicySpec::query_k(3).unwrap(),
        PolicySpec::update_k(1).unwrap(),
        PolicySpec::update_k(3).unwrap(),
        PolicySpec::joint(Threshold::Finite(2), Threshold::Finite(3)).unwrap(),
        PolicySpec::QueryK(Threshold::Unbounded),
    ];
    for policy in policies {
        let mut runner = TestRunner::new_with_rng(
            Config {
                cases: 4,
                failure_persistence: None,
                ..Config::default()
            },
            TestRng::deterministic_rng(RngAlgorithm::ChaCha),
        );
        let samples = Cell::new(0usize);
        let kept = RefCell::new(Vec::new());
        let result = runner.run(&(0.2f64..0.6, 0.1f64..0.3, proptest::num::u64::ANY), |(lu, lq, seed)| {
            let p = params(lu, lq);
            let horizon = (12_000.0 / lu).ceil();
            let cfg = SimConfig::new(horizon, 0.0, 1, seed).unwrap();
            let trace = run_replication_traced(&p, &policy, &cfg, 0).unwrap();
            if trace.update_samples.len() < 10_000 {
                return Err(TestCaseError::fail(format!("only {} updates", trace.update_samples.len())));
            }
            for s in &trace.update_samples {
                let x = s.arrival - s.previous_arrival;
                let t = s.completion - s.arrival;
                if s.peak_age.to_bits() != (x + t).to_bits() {
                    return Err(TestCaseError::fail(format!("A = {} but X + T = {}", s.peak_age, x + t)));
                }
            }
            samples.set(samples.get() + trace.update_samples.len());
            kept.borrow_mut().push((p, trace.metrics));
            Ok(())
        });
        let samples = samples.get();
        for (p, m) in kept.into_inner() {
            g.traces.push((format!("c6 {policy}"), p, m));
        }
        checks.push((
            result.is_ok(),
            match result {
                Ok(()) => format!("{policy}: {samples} samples over 4 runs, all bit-exact"),
                Err(e) => format!("{policy}: {e}"),
            },
        ));
    }
    g.report(6, "per-sample peak age identity", None, start, checks);
}

/// `(mean, half-width)` of response time and peak age for each policy.
fn series(g: &mut Gate, label: &str, p: &ModelParams, policies: &[PolicySpec]) -> Vec<[(f64, f64); 2]> {
    policies
        .iter()
        .map(|policy| {
            let s = g.simulate(label, p, policy);
            [mean_hw(&s, Metric::ResponseTime), mean_hw(&s, Metric::Paoi)]
        })
        .collect()
}

/// Adjacent points move in direction `sign` (+1 up, -1 down), with ties
/// allowed within the larger of the two half-widths.
fn monotone(points: &[(f64, f64)], sign: f64) -> Result<(), String> {
    for (i, w) in points.windows(2).enumerate() {
        let (a, ha) = w[0];
        let (b, hb) = w[1];
        if sign * (b - a) < -ha.max(hb) {
            return Err(format!("step {} -> {}: {a:.4} to {b:.4}", i + 1, i + 2));
        }
    }
    Ok(())
}

fn flat_from(points: &[(f64, f64)], first: usize) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for k in first..points.len() {
        let (a, b) = (points[k - 1].0, points[k].0);
        let d = (b - a).abs() / a.abs();
        worst = worst.max(d);
        if d >= 0.02 {
            return Err(format!("k={} -> {}: {:.2}% change", k, k + 1, 100.0 * d));
        }
    }
    Ok(worst)
}

fn criterion_7(g: &mut Gate) {
    let start = Instant::now();
    let mut checks = Vec::new();
    let third = 1.0 / 3.0;
    let p = params(third, third);
    for (family, sign) in [("Query", 1.0), ("Update", -1.0)] {
        let policies: Vec<PolicySpec> = (1..=12)
            .map(|k| match family {
                "Query" => PolicySpec::query_k(k).unwrap(),
                _ => PolicySpec::update_k(k).unwrap(),
            })
            .collect();
        let rows = series(g, "c7", &p, &policies);
        let t: Vec<_> = rows.iter().map(|r| r[0]).collect();
        let a: Vec<_> = rows.iter().map(|r| r[1]).collect();
        let dir = |s: f64| if s > 0.0 { "nondecreasing" } else { "nonincreasing" };
        for (name, pts, s) in [("response time", &t, sign), ("peak age", &a, -sign)] {
            let m = monotone(pts, s);
            checks.push((
                m.is_ok(),
                format!("{family}-k {name} {} in k: {}", dir(s), m.err().unwrap_or_else(|| "yes".into())),
            ));
            // Index 8 is k = 9: compare k = 9 -> 10, 10 -> 11, 11 -> 12.
            let f = flat_from(pts, 9);
            checks.push((
                f.is_ok(),
                match f {
                    Ok(w) => format!("{family}-k {name} flat for k >= 9: largest step {:.2}%", 100.0 * w),
                    Err(e) => format!("{family}-k {name} not flat for k >= 9: {e}"),
                },
            ));
        }
        checks.push((
            true,
            format!(
                "{family}-k k=1..12 response time {:.3} -> {:.3}, peak age {:.3} -> {:.3}",
                t[0].0, t[11].0, a[0].0, a[11].0
            ),
        ));
    }
    g.report(7, "threshold tradeoff monotone and saturating", None, start, checks);
}

fn criterion_8(g: &mut Gate) {
    let start = Instant::now();
    let mut checks = Vec::new();
    let third = 1.0 / 3.0;
    let p = params(third, third);
    let values = [1u32, 3, 5];
    let mut grid = [[[(0.0, 0.0); 2]; 3]; 3];
    for (i, &m) in values.iter().enumerate() {
        for (j, &n) in values.iter().enumerate() {
            let policy = PolicySpec::joint(Threshold::Finite(m), Threshold::Finite(n)).unwrap();
            grid[i][j] = series(g, "c8", &p, &[policy])[0];
        }
    }
    // Larger M: peak age up, response time down. Larger N: the reverse.
    for (axis, fixed) in [("M", true), ("N", false)] {
        for o in 0..3 {
            let line: Vec<[(f64, f64); 2]> = (0..3).map(|v| if fixed { grid[v][o] } else { grid[o][v] }).collect();
            let t: Vec<_> = line.iter().map(|c| c[0]).collect();
            let a: Vec<_> = line.iter().map(|c| c[1]).collect();
            let (ts, as_) = if fixed { (-1.0, 1.0) } else { (1.0, -1.0) };
            let other = if fixed { "N" } else { "M" };
            let mt = monotone(&t, ts);
            let ma = monotone(&a, as_);
            checks.push((
                mt.is_ok() && ma.is_ok(),
                format!(
                    "{other}={} growing {axis}: response time {:.3}/{:.3}/{:.3}, peak age {:.3}/{:.3}/{:.3}{}",
                    values[o],
                    t[0].0,
                    t[1].0,
                    t[2].0,
                    a[0].0,
                    a[1].0,
                    a[2].0,
                    mt.err().or(ma.err()).map(|e| format!(" ({e})")).unwrap_or_default()
                ),
            ));
        }
    }
    g.report(8, "Joint-(M,N) direction", None, start, checks);
}

fn criterion_9(g: &mut Gate) {
    let start = Instant::now();
    let mut checks = Vec::new();
    let mut worst = (0.0f64, String::new());
    let mut bad = Vec::new();
    let mut count = 0;
    let mut consider = |label: &str, p: &ModelParams, m: &freshsched_core::ReplicationMetrics| {
        let r = littles_law_residual(m, p);
        if !r.reliable {
            return;
        }
        count += 1;
        let w = r.query.max(r.update);
        if w > worst.0 {
            worst = (w, label.to_string());
        }
        if w >= 0.03 {
            bad.push(format!("{label}: query {:.2}%, update {:.2}%", 100.0 * r.query, 100.0 * r.update));
        }
    };
    for s in &g.sims {
        consider(&s.label, &s.params, &s.stats.mean_metrics());
    }
    for (label, p, m) in &g.traces {
        consider(label, p, m);
    }
    checks.push((
        bad.is_empty(),
        format!(
            "{count} stable simulations, largest residual {:.2}% ({})",
            100.0 * worst.0,
            worst.1
        ),
    ));
    for b in bad {
        checks.push((false, b));
    }
    g.report(9, "Little's law residuals below 3%", None, start, checks);
}

fn criterion_10(g: &mut Gate, scratch: &Path) {
    let start = Instant::now();
    let mut checks = Vec::new();
    let config = configs_dir().join("query_threshold.toml");
    let config = config.to_str().unwrap();
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("analyze", vec!["analyze", "--lambda-u", "0.5", "--lambda-q", "0.1"]),
        ("simulate", vec!["simulate", "--lambda-u", "0.5", "--lambda-q", "0.1", "--seed", "1"]),
        ("solve", vec!["solve", "--policy", "query-k", "--k", "3", "--lambda-u", "0.8", "--lambda-q", "0.1"]),
        ("compare", vec!["compare", "--policy", "query-k", "--k", "1", "--lambda-u", "0.8", "--lambda-q", "0.1"]),
        ("sweep", vec!["sweep", "--config", config]),
    ];
    for (name, args) in commands {
        let outputs: Vec<Vec<u8>> = (0..2)
            .map(|i| {
                let path = scratch.join(format!("{name}-{i}.csv"));
                let mut a = args.clone();
                let p = path.to_str().unwrap().to_string();
                a.push("--out");
                a.push(&p);
                let run = run_cli(&a, scratch);
                assert_eq!(run.code, 0, "{name}: {}", run.stderr);
                std::fs::read(&path).unwrap()
            })
            .collect();
        checks.push((
            outputs[0] == outputs[1] && !outputs[0].is_empty(),
            format!("{name}: two runs, {} bytes, identical: {}", outputs[0].len(), outputs[0] == outputs[1]),
        ));
    }
    g.report(10, "byte-identical CSV on repeat", None, start, checks);
}

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let mut g = Gate::default();
    println!("acceptance: all simulations use seed {SEED}, 20000 time units x 10 replications");
    criterion_1(&mut g, scratch.path());
    criterion_2(&mut g);
    criterion_3(&mut g, scratch.path());
    criterion_4(&mut g);
    criterion_5(&mut g);
    criterion_6(&mut g);
    criterion_7(&mut g);
    criterion_8(&mut g);
    criterion_9(&mut g);
    criterion_10(&mut g, scratch.path());
    println!("acceptance: {} of 10 criteria passed", 10 - g.failed);
    if g.failed > 0 {
        std::process::exit(1);
    }
}
