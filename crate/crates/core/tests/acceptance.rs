//! Acceptance gate: one line per criterion, non-zero exit if any fails.
//! Run with `cargo test -p handrub-core --test acceptance`.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::*;
use handrub_core::dataset::synth::{synthetic_dataset, SynthSpec};
use handrub_core::dataset::{
    evaluate_classifier, evaluate_scores, extract_training_set, split_dataset, train_baseline, SplitSpec, TrainConfig,
};
use handrub_core::eventlog::feedback_log_string;
use handrub_core::metrics::who_compliance_check;
use handrub_core::sensors::{evaluate_dispense_gate, parse_distance_line, DispenseConfig, DistanceReading};
use handrub_core::simulate::{simulate, SimulationConfig};
use handrub_core::vision::{
    compute_foreground_mask, decide_step, BackgroundModel, BaselineClassifier, ClassIndex, ClassScores,
    DecisionPolicy, FrameSample, Roi, NUM_CLASSES,
};
use handrub_core::{scenario, EngineConfig, SessionConfig, SessionDriver};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn golden_protocol() -> Check {
    let golden = fs::read_to_string(fixture("golden_feedback.jsonl")).map_err(|e| e.to_string())?;
    for run in 1..=3 {
        let mut driver = SessionDriver::new(EngineConfig::default(), Box::new(scenario::classifier()))
            .map_err(|e| e.to_string())?;
        for input in scenario::inputs() {
            driver.feed(&input);
        }
        let log = feedback_log_string(driver.feedback_log());
        ensure(log == golden, || format!("run {run} differs from golden log"))?;
    }
    Ok(format!(
        "3 runs byte-identical ({} lines); cross-platform half not checked here",
        golden.lines().count()
    ))
}

fn redispense_property() -> Check {
    let config = SessionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut prompts = 0;
    for session in 0..1000 {
        let n = rng.random_range(0..30);
        let attempts: Vec<Attempt> = (0..n)
            .map(|_| Attempt {
                pass: rng.random_bool(0.7),
                via_tick: rng.random_bool(0.5),
                rub_ms: rng.random_range(0..12_000),
                noise: rng.random_bool(0.1),
                interrupt: rng.random_bool(0.1),
            })
            .collect();
        let driven = drive(&attempts, &config);
        let events: Vec<_> = driven.feedback.iter().map(|r| r.event.clone()).collect();
        let violations = cadence_violations(&events, config.group_size);
        ensure(violations.is_empty(), || format!("session {session}: {violations:?}"))?;
        ensure(without_interruptions(&driven.feedback) == reference_feedback(&attempts, &config), || {
            format!("session {session}: differs from reference interpreter")
        })?;
        prompts += events
            .iter()
            .filter(|e| matches!(e, handrub_core::FeedbackEvent::PromptDispense))
            .count();
    }
    Ok(format!("1000 sessions, {prompts} dispense prompts, 0 violations"))
}

fn timing_reproduction() -> Check {
    let config = SimulationConfig::load_fixed_durations(&fixture("fixed_durations.json")).map_err(|e| e.to_string())?;
    let out = simulate(&config, 1, 0).map_err(|e| e.to_string())?;
    let total = out.report.mean_total_s;
    ensure((total - 27.2).abs() <= 1e-9, || format!("mean_total_s = {total}"))?;
    ensure(who_compliance_check(total), || "not compliant".into())?;
    Ok(format!("mean_total_s = {total}, compliant"))
}

fn who_bounds() -> Check {
    for x in [20.0, 27.2, 30.0] {
        ensure(who_compliance_check(x), || format!("{x} rejected"))?;
    }
    for x in [19.999, 30.001] {
        ensure(!who_compliance_check(x), || format!("{x} accepted"))?;
    }
    Ok("20.0, 27.2, 30.0 in; 19.999, 30.001 out".into())
}

fn evaluation_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for set in 0..100 {
        let n = rng.random_range(1..=500);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..NUM_CLASSES)).collect();
        let scores: Vec<ClassScores> = (0..n)
            .map(|i| {
                let mut s = [0.0; NUM_CLASSES];
                for v in &mut s {
                    *v = match rng.random_range(0..10) {
                        0 => 0.0,
                        1 => 1.0,
                        2 => 0.5,
                        _ => rng.random_range(0.0..=1.0),
                    };
                }
                ClassScores::new(i as u64, s).unwrap()
            })
            .collect();
        let items = truth
            .iter()
            .map(|&t| ClassIndex::new(t as u8).unwrap())
            .zip(scores.iter());
        let report = evaluate_scores(items).map_err(|e| e.to_string())?;
        let oracle = eval_oracle(&truth, &scores);
        worst = worst
            .max((report.loss - oracle.loss).abs())
            .max((report.accuracy - oracle.accuracy).abs());
        ensure(worst < 1e-9, || format!("set {set}: deviation {worst}"))?;
        ensure(report.confusion.0 == oracle.confusion, || format!("set {set}: confusion differs"))?;
        let rows = report.confusion.row_sums();
        for (c, &row) in rows.iter().enumerate() {
            let expected = truth.iter().filter(|&&t| t == c).count() as u64;
            ensure(row == expected, || format!("set {set}: row {c} sums to {row}"))?;
        }
        ensure(report.confusion.trace() == (report.accuracy * n as f64).round() as u64, || {
            format!("set {set}: trace identity")
        })?;
    }
    Ok(format!("100 sets, max deviation {worst:.1e}"))
}

fn decide_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for w in 0..10_000 {
        let n = rng.random_range(1..=8);
        let target = rng.random_range(0..NUM_CLASSES);
        let tau = rng.random_range(0.01..0.99);
        let k = rng.random_range(1..=n);
        let window: Vec<ClassScores> = (0..n)
            .map(|i| {
                let mut s = [0.0; NUM_CLASSES];
                for v in &mut s {
                    *v = if rng.random_bool(0.1) { tau } else { rng.random_range(0.0..=1.0) };
                }
                ClassScores::new(i as u64, s).unwrap()
            })
            .collect();
        let class = ClassIndex::new(target as u8).unwrap();
        let decide = |tau: f64, k: usize| {
            decide_step(&window, class, &DecisionPolicy { tau, window_n: n, k_required: k }).unwrap()
        };
        let v = decide(tau, k);
        ensure((v.passed, v.hits) == decide_oracle(&window, target, tau, k), || format!("window {w} mismatch"))?;
        let lower = rng.random_range(0.005..tau);
        ensure(!v.passed || decide(lower, k).passed, || format!("window {w}: lowering tau failed it"))?;
        if k < n {
            ensure(v.passed || !decide(tau, k + 1).passed, || format!("window {w}: raising k passed it"))?;
        }
    }
    Ok("10000 windows, 0 mismatches, monotone in tau and k".into())
}

fn segmentation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut pixels = 0usize;
    for f in 0..200 {
        let (w, h) = (rng.random_range(8..80), rng.random_range(8..60));
        let mut frame = FrameSample::uniform(0, w, h, [240; 3]).unwrap();
        for _ in 0..rng.random_range(1..4) {
            let v = rng.random_range(0..200u8);
            let roi = Roi::new(rng.random_range(0..w), rng.random_range(0..h), rng.random_range(1..w), rng.random_range(1..h));
            frame.fill_rect(roi, [v, v.saturating_add(rng.random_range(0..20)), v]);
        }
        let mut previous: Option<Vec<bool>> = None;
        for tolerance in (0..16u8).map(|i| i * 17) {
            let mask = compute_foreground_mask(&frame, &BackgroundModel { reference_luma: 240, tolerance });
            ensure(mask.bits() == &mask_oracle(&frame, 240, tolerance)[..], || {
                format!("frame {f}, tolerance {tolerance}: mask differs")
            })?;
            if let Some(prev) = &previous {
                ensure(mask.bits().iter().zip(prev).all(|(m, p)| !m || *p), || {
                    format!("frame {f}, tolerance {tolerance}: mask grew")
                })?;
            }
            previous = Some(mask.bits().to_vec());
        }
        pixels += (w * h) as usize;
    }
    Ok(format!("200 frames ({pixels} px) x 16 tolerances exact and monotone"))
}

fn baseline_learnability() -> Check {
    let (manifest, store) = synthetic_dataset(&SynthSpec::default()).map_err(|e| e.to_string())?;
    let splits = split_dataset(&manifest, &SplitSpec::default()).map_err(|e| e.to_string())?;
    let train = extract_training_set(&splits.train, &store, 1).map_err(|e| e.to_string())?;
    let (model, _) = train_baseline(&train, &TrainConfig::default(), manifest.digest()).map_err(|e| e.to_string())?;
    let classifier = BaselineClassifier::new(model).map_err(|e| e.to_string())?;
    let report = evaluate_classifier(&classifier, &splits.test, &store, 1).map_err(|e| e.to_string())?;
    ensure(report.accuracy >= 0.95, || format!("test accuracy {:.4}", report.accuracy))?;
    let grad_err = (0..3).map(gradient_check).fold(0.0, f64::max);
    ensure(grad_err < 1e-4, || format!("gradient relative error {grad_err:.2e}"))?;
    Ok(format!(
        "test accuracy {:.4} on {} frames, gradient rel. error {grad_err:.1e}",
        report.accuracy, report.n_frames
    ))
}

fn sensor_gate() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut confirmations = 0;
    for s in 0..1000 {
        let config = DispenseConfig {
            min_cm: rng.random_range(0..10) as f64,
            max_cm: rng.random_range(15..40) as f64,
            hold_ms: rng.random_range(0..800),
            debounce_ms: rng.random_range(0..3000),
        };
        let mut t = 0;
        let mut cm: f64 = rng.random_range(0.0..50.0);
        let readings: Vec<DistanceReading> = (0..rng.random_range(0..200))
            .map(|_| {
                t += rng.random_range(1..300);
                cm = (cm + rng.random_range(-8.0..8.0)).clamp(0.0, 60.0).round();
                DistanceReading::new(t, cm).unwrap()
            })
            .collect();
        let got = evaluate_dispense_gate(&readings, &config).map_err(|e| e.to_string())?;
        ensure(got == gate_oracle(&readings, &config), || format!("stream {s}: differs from oracle"))?;
        ensure(got.windows(2).all(|w| w[1] - w[0] >= config.debounce_ms), || format!("stream {s}: debounce"))?;
        confirmations += got.len();
    }
    let re = regex::bytes::Regex::new(r"\A[0-9]+\r?\n?\z").unwrap();
    let alphabet = b"0123456789\r\n- x";
    for i in 0..100_000 {
        let len = rng.random_range(0..=64);
        let line: Vec<u8> = (0..len)
            .map(|_| {
                if rng.random_bool(0.8) {
                    alphabet[rng.random_range(0..alphabet.len())]
                } else {
                    rng.random()
                }
            })
            .collect();
        let got = catch_unwind(|| parse_distance_line(&line)).map_err(|_| format!("parser panicked on {line:?}"))?;
        let expected = re.is_match(&line)
            && line
                .iter()
                .filter(|b| b.is_ascii_digit())
                .skip_while(|&&b| b == b'0')
                .try_fold(0u32, |acc, b| {
                    let v = acc * 10 + (b - b'0') as u32;
                    (v <= 500).then_some(v)
                })
                .is_some();
        ensure(got.is_ok() == expected, || format!("line {i} {line:?}: parser {got:?}, grammar {expected}"))?;
    }
    Ok(format!("1000 streams ({confirmations} confirmations) match oracle; 100000 lines agree with grammar"))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Check); 9] = [
        ("protocol golden log", Duration::from_secs(1), golden_protocol),
        ("re-dispense cadence", Duration::from_secs(10), redispense_property),
        ("timing reproduction", Duration::from_secs(1), timing_reproduction),
        ("WHO bounds", Duration::from_secs(1), who_bounds),
        ("evaluation oracle", Duration::from_secs(5), evaluation_oracle),
        ("decision rule equivalence", Duration::from_secs(5), decide_equivalence),
        ("segmentation", Duration::from_secs(5), segmentation),
        ("baseline learnability", Duration::from_secs(60), baseline_learnability),
        ("sensor gate", Duration::from_secs(10), sensor_gate),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over budget")),
            Err(e) => (false, e),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} {name}: {detail} [{} ms / {} ms]",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_millis(),
            budget.as_millis()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
