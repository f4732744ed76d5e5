mod common;

use std::collections::BTreeMap;

use common::*;
use handrub_core::metrics::{aggregate, collect_metrics, report_csv, who_compliance_check, SessionMetrics};
use handrub_core::session::{FeedbackEvent, FeedbackRecord, RubStep, SessionConfig};
use proptest::prelude::*;

/// Per-step time by index: each instruction lasts until the entry after it.
fn step_time_oracle(log: &[FeedbackRecord]) -> BTreeMap<RubStep, u64> {
    let mut out = BTreeMap::new();
    for i in 0..log.len() {
        if let FeedbackEvent::ShowInstruction(s) = log[i].event {
            if i + 1 < log.len() {
                *out.entry(s).or_insert(0) += log[i + 1].t_ms - log[i].t_ms;
            }
        }
    }
    out
}

fn attempt() -> impl Strategy<Value = Attempt> {
    (prop::bool::weighted(0.8), any::<bool>(), 0u64..12_000, prop::bool::weighted(0.1)).prop_map(
        |(pass, via_tick, rub_ms, interrupt)| Attempt {
            pass,
            via_tick,
            rub_ms,
            noise: false,
            interrupt,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn step_timings_match_log_scan(attempts in prop::collection::vec(attempt(), 0..30)) {
        let driven = drive(&attempts, &SessionConfig::default());
        let m = collect_metrics("p", &driven.feedback);
        let oracle = step_time_oracle(&driven.feedback);
        prop_assert_eq!(m.step_timings.len(), oracle.len());
        for (s, ms) in oracle {
            prop_assert!((m.step_timings[&s] - ms as f64 / 1000.0).abs() < 1e-9);
        }
        let total: f64 = m.step_timings.values().sum();
        prop_assert!((m.total_rub_s - total).abs() < 1e-9);
        prop_assert_eq!(m.compliant, who_compliance_check(m.total_rub_s));
        prop_assert!(m.complete);
    }

    #[test]
    fn compliance_is_the_closed_interval(x in 0.0..60.0f64) {
        prop_assert_eq!(who_compliance_check(x), (20.0..=30.0).contains(&x));
    }

    #[test]
    fn aggregate_means(totals in prop::collection::vec(prop::collection::vec(0.0..10.0f64, 7), 1..20)) {
        let sessions: Vec<SessionMetrics> = totals.iter().enumerate().map(|(i, d)| {
            let step_timings: BTreeMap<RubStep, f64> = RubStep::all().zip(d.iter().copied()).collect();
            let total_rub_s = d.iter().sum();
            SessionMetrics {
                session_id: format!("s{i}"),
                step_timings,
                dispense_durations_s: vec![],
                total_rub_s,
                compliant: who_compliance_check(total_rub_s),
                complete: true,
                all_passed: true,
            }
        }).collect();
        let r = aggregate(&sessions).unwrap();
        for (k, s) in RubStep::all().enumerate() {
            let mean = totals.iter().map(|d| d[k]).sum::<f64>() / totals.len() as f64;
            prop_assert!((r.per_step_mean_s[&s] - mean).abs() < 1e-9);
        }
        let compliant = sessions.iter().filter(|m| m.compliant).count() as f64 / sessions.len() as f64;
        prop_assert_eq!(r.compliance_rate, compliant);
        prop_assert_eq!(report_csv(&r).lines().count(), 9);
    }
}

#[test]
fn who_bounds_exact() {
    for x in [20.0, 27.2, 30.0] {
        assert!(who_compliance_check(x), "{x}");
    }
    for x in [19.999, 30.001] {
        assert!(!who_compliance_check(x), "{x}");
    }
}

#[test]
fn incomplete_log_is_flagged() {
    let driven = drive(&[], &SessionConfig::default());
    let m = collect_metrics("cut", &driven.feedback[..5]);
    assert!(!m.complete);
    assert!(aggregate(&[]).is_err());
}
