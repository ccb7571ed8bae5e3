//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use adlift::assignment::{hash_digits, Assigner, Assignment, HashConfig};
use adlift::gibbs::{draw_params, posterior_shapes, GibbsConfig};
use adlift::identity::{diluted_atl, multidevice_skew_factor, ContaminationScenario};
use adlift::model::{CampaignLogs, CountTable, HiddenCounts, ImpressionTag};
use adlift::simulator::{simulate, ContaminationMode, SimConfig, SimOutput, CAMPAIGN_START};
use adlift_cli::analysis::analyze_logs;
use adlift_cli::config::AnalysisSettings;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const BIN: &str = env!("CARGO_BIN_EXE_adlift");

// Pinned tolerances.
const ROW_RUNTIME: Duration = Duration::from_secs(1);
const GIBBS_RUNTIME: Duration = Duration::from_secs(10);
const CONJUGACY_RUNTIME: Duration = Duration::from_secs(30);
const RECOVERY_RUNTIME: Duration = Duration::from_secs(600);
const GIBBS_LIFT_TOL: f64 = 0.03;
const GIBBS_MIN_CONF: f64 = 0.995;
const GIBBS_MIN_SEEDS: usize = 9;
const MC_SIGMAS: f64 = 3.0;
const COVERAGE_RANGE: (f64, f64) = (0.85, 0.95);
const CHI_SQUARE_ALPHA: f64 = 0.01;
const CONTROL_FRACTION_TOL: f64 = 0.002;

/// `(id, [TU, TC, TWU, TWC, CU, CC], [ATL, INC, ATT, R_T, R_C, R_TW, w])`
/// from the published results table.
const TABLE1: [(u32, [u64; 6], [i64; 7]); 7] = [
    (
        1,
        [263_501, 1_670, 148_058, 955, 16_065, 79],
        [63, 39, 25, 63, 49, 65, 56],
    ),
    (
        2,
        [2_195_456, 12_609, 918_316, 8_573, 145_216, 748],
        [18, 15, 14, 57, 52, 93, 42],
    ),
    (
        3,
        [734_135, 3_390, 346_656, 1_840, 69_511, 296],
        [17, 14, 8, 46, 43, 53, 47],
    ),
    (
        4,
        [4_938_065, 1_423, 657_002, 503, 459_553, 93],
        [534, 84, 6, 3, 2, 8, 13],
    ),
    (
        5,
        [2_409_520, 902, 364_234, 343, 110_991, 32],
        [153, 60, 6, 4, 3, 9, 15],
    ),
    (
        6,
        [1_955_475, 122_968, 787_613, 69_874, 205_131, 12_520],
        [5, 5, 46, 629, 610, 887, 40],
    ),
    (
        7,
        [2_833_414, 511, 681_506, 380, 198_932, 33],
        [12, 11, 1, 2, 2, 6, 24],
    ),
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Run {
    ok: bool,
    stdout: Vec<u8>,
    stderr: String,
    elapsed: Duration,
}

fn run(args: &[&str]) -> Run {
    let start = Instant::now();
    let out = Command::new(BIN).args(args).output().expect("binary runs");
    Run {
        ok: out.status.success(),
        stdout: out.stdout,
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        elapsed: start.elapsed(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn table(row: &[u64; 6]) -> CountTable {
    let [tu, tc, twu, twc, cu, cc] = *row;
    CountTable::from_unit_totals(tu, tc, twu, twc, cu, cc)
}

fn write_table(dir: &Path, name: &str, t: &CountTable) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string(t).unwrap()).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn f(v: &Value, path: &[&str]) -> f64 {
    path.iter()
        .fold(v, |v, k| &v[*k])
        .as_f64()
        .unwrap_or_else(|| panic!("missing {path:?}"))
}

fn table1_rows(dir: &Path) -> Outcome {
    let mut mismatches = Vec::new();
    let mut slowest = Duration::ZERO;
    let names = ["ATL", "INC", "ATT", "R_T", "R_C", "R_TW", "w"];
    for (id, counts, expected) in TABLE1 {
        let counts_path = write_table(dir, &format!("row{id}.json"), &table(&counts));
        let row_path = dir.join(format!("row{id}.csv"));
        let report = dir.join(format!("row{id}.report.json"));
        let r = run(&[
            "analyze",
            "--counts",
            s(&counts_path),
            "--id",
            &id.to_string(),
            "--seed",
            "1",
            "--table",
            s(&row_path),
            "--out",
            s(&report),
        ]);
        slowest = slowest.max(r.elapsed);
        if !r.ok {
            mismatches.push(format!("row {id}: {}", r.stderr.trim()));
            continue;
        }
        let text = fs::read_to_string(&row_path).unwrap();
        let cols: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        let got: Vec<i64> = [1, 2, 3, 8, 9, 10, 11]
            .iter()
            .map(|&i| cols[i].parse().unwrap())
            .collect();
        for ((name, g), e) in names.iter().zip(&got).zip(expected) {
            if *g != e {
                mismatches.push(format!("row {id} {name} {g} vs {e}"));
            }
        }
    }
    let fast = slowest < ROW_RUNTIME;
    outcome(
        mismatches.is_empty() && fast,
        format!(
            "49 values, {} mismatched [{}], slowest run {:.2}s",
            mismatches.len(),
            mismatches.join("; "),
            slowest.as_secs_f64()
        ),
    )
}

fn worked_example(dir: &Path) -> Outcome {
    let report = read_json(&dir.join("row1.report.json"));
    let trace = &report["estimate"]["hand_trace"];
    let got = ["ace_bp", "w_pct", "att_bp", "r_cw_bp"].map(|k| trace[k].as_i64().unwrap());
    outcome(
        got == [14, 56, 25, 40],
        format!(
            "ACE {}bp, w {}%, ATT {}bp, R_CW {}bp",
            got[0], got[1], got[2], got[3]
        ),
    )
}

fn gibbs_golden(dir: &Path) -> Outcome {
    let counts = write_table(dir, "campaign2.json", &table(&TABLE1[1].1));
    let mut good = 0;
    let mut lines = Vec::new();
    let mut slowest = Duration::ZERO;
    for seed in 1..=10u64 {
        let out = dir.join(format!("ci{seed}.json"));
        let r = run(&[
            "ci",
            "--counts",
            s(&counts),
            "--seed",
            &seed.to_string(),
            "--out",
            s(&out),
        ]);
        slowest = slowest.max(r.elapsed);
        if !r.ok {
            lines.push(format!("seed {seed}: {}", r.stderr.trim()));
            continue;
        }
        let v = read_json(&out);
        let q = [
            f(&v, &["atl", "p5"]),
            f(&v, &["atl", "p50"]),
            f(&v, &["atl", "p95"]),
        ];
        let g = f(&v, &["g_conf"]);
        let close = q
            .iter()
            .zip([0.07, 0.18, 0.30])
            .all(|(x, t)| (x - t).abs() <= GIBBS_LIFT_TOL);
        if close && g >= GIBBS_MIN_CONF {
            good += 1;
        }
        lines.push(format!(
            "{seed}:{:.1}/{:.1}/{:.1} g={:.4}",
            100.0 * q[0],
            100.0 * q[1],
            100.0 * q[2],
            g
        ));
    }
    outcome(
        good >= GIBBS_MIN_SEEDS && slowest < GIBBS_RUNTIME,
        format!(
            "{good}/10 seeds in tolerance, slowest {:.2}s [{}]",
            slowest.as_secs_f64(),
            lines.join(", ")
        ),
    )
}

fn conjugacy() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let n = 10_000;
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..50 {
        let tw1 = rng.random_range(0..2_000);
        let tw0 = rng.random_range(1..200_000);
        let tl1 = rng.random_range(0..2_000);
        let tl0 = rng.random_range(0..200_000);
        let c1 = rng.random_range(0..500);
        let c0 = rng.random_range(1..50_000);
        let t = CountTable {
            tw1,
            tw0,
            tl1,
            tl0,
            c1,
            c0,
            conv_t: tw1 + tl1,
            conv_tw: tw1,
            conv_c: c1,
            uniq_t: tw1 + tw0 + tl1 + tl0,
            uniq_tw: tw1 + tw0,
            uniq_c: c1 + c0,
        };
        let cw1 = rng.random_range(0..=c1);
        let cw0 = rng.random_range(0..=c0);
        let h = HiddenCounts {
            cw1,
            cw0,
            cl1: c1 - cw1,
            cl0: c0 - cw0,
        };
        let shapes = posterior_shapes(&t, &h);
        let mut sums = [0.0; 4];
        for _ in 0..n {
            let p = draw_params(&t, &h, &mut rng);
            for (acc, x) in sums.iter_mut().zip([p.w, p.r_tw, p.r_cw, p.r_l]) {
                *acc += x;
            }
        }
        for ((a, b), sum) in shapes.iter().zip(sums) {
            let mean = a / (a + b);
            let var = a * b / ((a + b).powi(2) * (a + b + 1.0));
            let z = (sum / n as f64 - mean) / (var / n as f64).sqrt();
            worst = worst.max(z.abs());
            if z.abs() > MC_SIGMAS {
                failures += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures == 0 && elapsed < CONJUGACY_RUNTIME,
        format!(
            "200 posterior means, {failures} beyond {MC_SIGMAS} sigma, worst |z| {worst:.2}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn recovery_config(seed: u64, multiplier: f64) -> SimConfig {
    SimConfig {
        n_consumers: 100_000,
        holdout: 0.2,
        base_rate: 0.05,
        baseline_spread: 0.5,
        true_lift: 0.3,
        win_rate: 0.5,
        winner_baseline_multiplier: multiplier,
        opps_per_device: 2,
        background_rate: 0.2,
        emit_bid_opps: false,
        seed,
        ..SimConfig::default()
    }
}

fn settings_for(cfg: &SimConfig, seed: u64) -> AnalysisSettings {
    AnalysisSettings {
        campaign_id: Some(cfg.campaign_id.clone()),
        holdout_fraction: cfg.holdout,
        pv_window_seconds: cfg.pv_window,
        hash_digits: cfg.hash_digits,
        salt: Some(cfg.salt.clone()),
        gibbs: GibbsConfig {
            seed,
            ..GibbsConfig::default()
        },
        ..AnalysisSettings::default()
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn estimator_recovery() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for multiplier in [1.0, 2.0] {
        let mut covered = 0;
        let mut errors = Vec::new();
        for seed in 1..=100u64 {
            let cfg = recovery_config(seed, multiplier);
            let sim = simulate(&cfg).unwrap();
            let report = analyze_logs(&sim.logs, &settings_for(&cfg, seed), None, true).unwrap();
            let truth = sim.truth.summary.true_att;
            if report.gibbs.as_ref().unwrap().att.contains(truth) {
                covered += 1;
            }
            errors.push(report.estimate.standard.unwrap() - truth);
        }
        let coverage = covered as f64 / 100.0;
        let (bias, se) = mean_and_se(&errors);
        let sign_ok = if multiplier > 1.0 {
            bias > MC_SIGMAS * se
        } else {
            bias.abs() <= MC_SIGMAS * se
        };
        let coverage_ok = (COVERAGE_RANGE.0..=COVERAGE_RANGE.1).contains(&coverage);
        pass &= sign_ok && coverage_ok;
        parts.push(format!(
            "multiplier {multiplier}: coverage {:.0}%, standard-estimator error {:+.2e} (se {:.1e})",
            100.0 * coverage,
            bias,
            se
        ));
    }
    let elapsed = start.elapsed();
    outcome(
        pass && elapsed < RECOVERY_RUNTIME,
        format!("{}; {:.0}s", parts.join("; "), elapsed.as_secs_f64()),
    )
}

/// Per-consumer conversion and device totals by arm, from the logs.
struct ArmTotals {
    test_devices: u64,
    control_devices: u64,
    test_conv: u64,
    control_conv: u64,
}

fn consumer_totals(logs: &CampaignLogs) -> BTreeMap<String, ArmTotals> {
    let consumer = |u: &str| u.rsplit_once("-d").unwrap().0.to_string();
    let mut arm: HashMap<&str, bool> = HashMap::new();
    for imp in &logs.impressions {
        arm.insert(imp.user_id.as_str(), imp.tag == ImpressionTag::Control);
    }
    let mut out: BTreeMap<String, ArmTotals> = BTreeMap::new();
    let blank = || ArmTotals {
        test_devices: 0,
        control_devices: 0,
        test_conv: 0,
        control_conv: 0,
    };
    for (&device, &control) in &arm {
        let t = out.entry(consumer(device)).or_insert_with(blank);
        if control {
            t.control_devices += 1;
        } else {
            t.test_devices += 1;
        }
    }
    for ev in &logs.events {
        if ev.timestamp < CAMPAIGN_START {
            continue;
        }
        let t = out.get_mut(&consumer(ev.user_id.as_str())).unwrap();
        if arm[ev.user_id.as_str()] {
            t.control_conv += 1;
        } else {
            t.test_conv += 1;
        }
    }
    out
}

/// Device-grain lift `R_T / R_C - 1` with a consumer-clustered
/// delta-method standard error.
fn device_lift_with_se(logs: &CampaignLogs) -> (f64, f64) {
    let totals = consumer_totals(logs);
    let sum = |g: fn(&ArmTotals) -> u64| totals.values().map(g).sum::<u64>() as f64;
    let (nt, nc) = (sum(|t| t.test_devices), sum(|t| t.control_devices));
    let r_t = sum(|t| t.test_conv) / nt;
    let r_c = sum(|t| t.control_conv) / nc;
    let (mut vt, mut vc, mut cov) = (0.0, 0.0, 0.0);
    for t in totals.values() {
        let zt = (t.test_conv as f64 - r_t * t.test_devices as f64) / nt;
        let zc = (t.control_conv as f64 - r_c * t.control_devices as f64) / nc;
        vt += zt * zt;
        vc += zc * zc;
        cov += zt * zc;
    }
    let var = vt / r_c.powi(2) + r_t.powi(2) * vc / r_c.powi(4) - 2.0 * r_t * cov / r_c.powi(3);
    (r_t / r_c - 1.0, var.sqrt())
}

fn toy(k: u32, n_consumers: u64, seed: u64) -> (SimConfig, SimOutput) {
    let cfg = SimConfig {
        emit_bid_opps: false,
        ..SimConfig::contamination_toy(k, 0.9, 1.0, n_consumers, seed)
    };
    let out = simulate(&cfg).unwrap();
    (cfg, out)
}

fn dilution() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for k in 1..=3u32 {
        let (cfg, sim) = toy(k, 1_000_000 / u64::from(k), 100 + u64::from(k));
        let report = analyze_logs(&sim.logs, &settings_for(&cfg, 1), None, false).unwrap();
        let measured = report.estimate.point.atl;
        let (oracle_lift, se) = device_lift_with_se(&sim.logs);
        let predicted = diluted_atl(&ContaminationScenario::new(k, 0.9, 1.0).unwrap()).unwrap();
        let ok =
            (measured - predicted).abs() <= MC_SIGMAS * se && (measured - oracle_lift).abs() < 1e-9;
        pass &= ok;
        parts.push(format!(
            "k={k}: ATL {measured:.3} vs {predicted:.3} (se {se:.3})"
        ));
    }
    outcome(pass, parts.join("; "))
}

fn skew() -> Outcome {
    let p = 0.1;
    let cfg = SimConfig {
        n_consumers: 1_000_000,
        holdout: p,
        device_count_distribution: vec![(1, 0.5), (2, 0.5)],
        win_rate: 1.0,
        opps_per_device: 1,
        contamination_mode: ContaminationMode::Mixed1d2d,
        emit_bid_opps: false,
        seed: 77,
        ..SimConfig::default()
    };
    let sim = simulate(&cfg).unwrap();
    let totals = consumer_totals(&sim.logs);
    // Indicators per consumer: [C1, C2, T1, T2] with signs for the log ratio.
    let rows: Vec<[f64; 4]> = totals
        .values()
        .map(|t| {
            let devices = t.test_devices + t.control_devices;
            let (c, tt) = (t.control_devices > 0, t.test_devices > 0);
            [
                (devices == 1 && c) as u8 as f64,
                (devices == 2 && c) as u8 as f64,
                (devices == 1 && tt) as u8 as f64,
                (devices == 2 && tt) as u8 as f64,
            ]
        })
        .collect();
    let mut tot = [0.0; 4];
    for r in &rows {
        for j in 0..4 {
            tot[j] += r[j];
        }
    }
    let ratio = (tot[1] / tot[0]) / (tot[3] / tot[2]);
    let signs = [-1.0, 1.0, 1.0, -1.0];
    let u: Vec<f64> = rows
        .iter()
        .map(|r| (0..4).map(|j| signs[j] * r[j] / tot[j]).sum())
        .collect();
    let n = u.len() as f64;
    let mean = u.iter().sum::<f64>() / n;
    let var_log = u.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    let se = ratio * var_log.sqrt();
    let expected = multidevice_skew_factor(p).unwrap();
    outcome(
        (ratio - expected).abs() <= MC_SIGMAS * se,
        format!("(C2/C1)/(T2/T1) = {ratio:.4} vs {expected:.4} (se {se:.4})"),
    )
}

fn cid_restoration(dir: &Path) -> Outcome {
    let n = "300000";
    let mut details = Vec::new();
    let mut pass = true;
    for (name, assign) in [("device", "user"), ("consumer", "consumer")] {
        let out = dir.join(format!("toy-{name}"));
        let r = run(&[
            "simulate",
            "--preset",
            "contamination-toy",
            "--k",
            "3",
            "--p",
            "0.9",
            "--a",
            "1",
            "--n",
            n,
            "--seed",
            "11",
            "--assign-by",
            assign,
            "--set",
            "emit_bid_opps=false",
            "--out-dir",
            s(&out),
        ]);
        if !r.ok {
            return outcome(false, r.stderr);
        }
    }
    let analyze = |name: &str, grain: &str| -> Result<Value, String> {
        let d = dir.join(format!("toy-{name}"));
        let report = d.join(format!("report-{grain}.json"));
        let r = run(&[
            "analyze",
            "--config",
            s(&d.join("campaign.conf")),
            "--impressions",
            s(&d.join("impressions.jsonl")),
            "--events",
            s(&d.join("events.jsonl")),
            "--grain",
            grain,
            "--cid-graph",
            s(&d.join("graph.csv")),
            "--min-degree",
            "2",
            "--seed",
            "5",
            "--out",
            s(&report),
        ]);
        if r.ok {
            Ok(read_json(&report))
        } else {
            Err(r.stderr)
        }
    };
    let truth = read_json(&dir.join("toy-consumer/truth_summary.json"));
    let true_atl = f(&truth, &["truth", "true_atl"]);

    match analyze("consumer", "cid") {
        Ok(v) => {
            let (p5, p95) = (
                f(&v, &["gibbs", "atl", "p5"]),
                f(&v, &["gibbs", "atl", "p95"]),
            );
            let discards = f(&v, &["discards", "remap", "impressions", "unmapped"])
                + f(&v, &["discards", "remap", "impressions", "low_degree"]);
            let ok = p5 <= true_atl && true_atl <= p95 && discards == 0.0;
            pass &= ok;
            details.push(format!(
                "CID grain 90% interval [{p5:.3}, {p95:.3}] vs true {true_atl:.3}"
            ));
        }
        Err(e) => return outcome(false, e),
    }
    match analyze("device", "user") {
        Ok(v) => {
            let atl = f(&v, &["estimate", "point", "atl"]);
            let p95 = f(&v, &["gibbs", "atl", "p95"]);
            let predicted = diluted_atl(&ContaminationScenario::new(3, 0.9, 1.0).unwrap()).unwrap();
            let ok = p95 < true_atl;
            pass &= ok;
            details.push(format!(
                "userID grain ATL {atl:.3} (p95 {p95:.3}, diluted prediction {predicted:.3})"
            ));
        }
        Err(e) => return outcome(false, e),
    }
    outcome(pass, details.join("; "))
}

type ArgsFn<'a> = dyn Fn(&Path) -> Vec<String> + 'a;
type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

/// Runs a command twice in fresh directories and compares stdout plus the
/// named output files byte for byte.
fn same_twice(dir: &Path, label: &str, args: &ArgsFn, files: &[&str]) -> Result<bool, String> {
    let mut captured = Vec::new();
    for round in 0..2 {
        let d = dir.join(format!("det-{label}-{round}"));
        fs::create_dir_all(&d).unwrap();
        let args = args(&d);
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let r = run(&refs);
        if !r.ok {
            return Err(format!("{label}: {}", r.stderr.trim()));
        }
        let mut blob = r.stdout;
        for name in files {
            blob.extend(fs::read(d.join(name)).unwrap());
        }
        captured.push(blob);
    }
    Ok(captured[0] == captured[1])
}

fn determinism(dir: &Path) -> Outcome {
    let owned = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let sim = dir.join("det-simulate-0");
    let counts = write_table(dir, "det-counts.json", &table(&TABLE1[0].1));

    let simulate = |d: &Path| {
        let mut a = owned(&[
            "simulate",
            "--n",
            "20000",
            "--seed",
            "4",
            "--set",
            "background_rate=0.3",
            "--out-dir",
        ]);
        a.push(s(d).to_string());
        a
    };
    let analyze = |d: &Path| {
        let mut a = owned(&["analyze", "--seed", "9", "--chains", "3"]);
        for (flag, file) in [
            ("--config", "campaign.conf"),
            ("--impressions", "impressions.jsonl"),
            ("--events", "events.jsonl"),
            ("--bidopps", "bidopps.jsonl"),
        ] {
            a.push(flag.to_string());
            a.push(s(&sim.join(file)).to_string());
        }
        a.push("--table".into());
        a.push(s(&d.join("row.csv")).to_string());
        a
    };
    let ci = |d: &Path| {
        let mut a = owned(&[
            "ci",
            "--seed",
            "3",
            "--chains",
            "2",
            "--counts",
            s(&counts),
            "--draws",
        ]);
        a.push(s(&d.join("draws.csv")).to_string());
        a
    };
    let contamination = |_: &Path| owned(&["contamination", "--k", "3", "--p", "0.9", "--a", "1"]);

    let sim_files = [
        "bidopps.jsonl",
        "impressions.jsonl",
        "events.jsonl",
        "truth.csv",
        "truth_summary.json",
        "graph.csv",
        "campaign.conf",
    ];
    let checks: [(&str, &ArgsFn, &[&str]); 4] = [
        ("simulate", &simulate, &sim_files),
        ("analyze", &analyze, &["row.csv"]),
        ("ci", &ci, &["draws.csv"]),
        ("contamination", &contamination, &[]),
    ];
    let mut problems = Vec::new();
    for (label, args, files) in checks {
        match same_twice(dir, label, args, files) {
            Ok(true) => {}
            Ok(false) => problems.push(format!("{label} output differs")),
            Err(e) => problems.push(e),
        }
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            "simulate, analyze, ci and contamination each byte-identical across two runs"
                .to_string()
        } else {
            problems.join("; ")
        },
    )
}

fn assignment_uniformity() -> Outcome {
    let n = 1_000_000;
    let cfg = HashConfig::new(4, "acceptance").unwrap();
    let mut counts = vec![0u64; cfg.modulus() as usize];
    let assigner = Assigner::new(0.1, HashConfig::new(6, "acceptance").unwrap()).unwrap();
    let mut control = 0u64;
    for i in 0..n {
        let id = format!("uid-{i}");
        counts[hash_digits(&id, &cfg) as usize] += 1;
        control += u64::from(assigner.assign_key(&id) == Assignment::Control);
    }
    let expected = n as f64 / counts.len() as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let critical = ChiSquared::new((counts.len() - 1) as f64)
        .unwrap()
        .inverse_cdf(1.0 - CHI_SQUARE_ALPHA);
    let frac = control as f64 / n as f64;
    outcome(
        stat < critical && (frac - 0.1).abs() <= CONTROL_FRACTION_TOL,
        format!("chi-square {stat:.0} < {critical:.0}; control fraction {frac:.4}"),
    )
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let criteria: Vec<(&str, Check)> = vec![
        ("1 results-table rows", Box::new(|| table1_rows(dir))),
        ("2 worked-example trace", Box::new(|| worked_example(dir))),
        ("3 Gibbs golden intervals", Box::new(|| gibbs_golden(dir))),
        ("4 conjugacy", Box::new(conjugacy)),
        ("5 estimator recovery", Box::new(estimator_recovery)),
        ("6 dilution concordance", Box::new(dilution)),
        ("7 skew concordance", Box::new(skew)),
        ("8 CID restoration", Box::new(|| cid_restoration(dir))),
        ("9 determinism", Box::new(|| determinism(dir))),
        ("10 assignment uniformity", Box::new(assignment_uniformity)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "{} criterion {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
