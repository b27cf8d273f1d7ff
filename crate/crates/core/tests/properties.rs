mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use chrono::{Duration, NaiveDate};
use finval::audit::NullSink;
use finval::deliberation::compute_disagreements;
use finval::detector::{detect, zscores, DetectorConfig, StdMode};
use finval::experts::{bounded_prompt, parse_verdicts, ExpertFinding, Verdict, VerdictEntry};
use finval::gateway::{Gateway, MockBackend, MockScript};
use finval::payload::{parse_payload_text, render_payload_text, ValidationPayload};
use finval::providers::{is_valid_ticker, resolve_ticker, FixtureMarketData, MarketData};
use finval::series::{pct_change, Change, PctChangeSeries, SeriesMetadata};
use proptest::prelude::*;
use rust_decimal::Decimal;

use common::*;

fn date(offset: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(1980, 1, 1).unwrap() + Duration::days(offset as i64)
}

fn decimal() -> impl Strategy<Value = Decimal> {
    (-10_000_000_000_000i64..10_000_000_000_000, 0u32..=12).prop_map(|(m, s)| Decimal::new(m, s).normalize())
}

fn payload() -> impl Strategy<Value = ValidationPayload> {
    let data = prop::collection::btree_map(0u32..20_000, prop::option::of(decimal()), 1..8);
    let extra = prop::collection::btree_map("[A-Z_]{3,10}", "[ -~]{0,20}", 0..3);
    ("[A-Za-z][A-Za-z0-9_:.]{0,15}", data, "[ -~]*[A-Za-z][ -~]{0,20}", extra).prop_map(
        |(series_id, data, title, mut extra)| {
            extra.insert("TITLE".into(), title);
            ValidationPayload {
                series_id,
                data: data.into_iter().map(|(d, v)| (date(d), v)).collect(),
                metadata: SeriesMetadata::from_map(extra).unwrap(),
            }
        },
    )
}

proptest! {
    #[test]
    fn payload_text_round_trips(p in payload()) {
        let text = render_payload_text(&p);
        prop_assert_eq!(parse_payload_text(&text).unwrap(), p.clone());
        prop_assert_eq!(render_payload_text(&p), text);
    }

    #[test]
    fn payload_rendering_is_injective(p in payload(), q in payload()) {
        if p != q {
            prop_assert_ne!(render_payload_text(&p), render_payload_text(&q));
        }
    }

    #[test]
    fn payload_json_round_trips(p in payload()) {
        let json = serde_json::to_string(&p).unwrap();
        let back: ValidationPayload = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, p);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn verdicts_total_on_generated_replies(seed in any::<u64>()) {
        let (raw, n) = random_verdict_reply(seed);
        let parsed = parse_verdicts(&raw, n).unwrap();
        prop_assert!(parsed.entries.keys().copied().eq(1..=n));
        prop_assert!(parsed.entries.values().all(|e| !e.reasoning.trim().is_empty()));
    }

    #[test]
    fn verdicts_never_partial_on_arbitrary_text(raw in "(?s).{0,300}", n in 1usize..10) {
        if let Ok(parsed) = parse_verdicts(&raw, n) {
            prop_assert!(parsed.entries.keys().copied().eq(1..=n));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn flags_invariant_under_scaling(seed in any::<u64>()) {
        let g = random_series(seed);
        let config = DetectorConfig { z_threshold: 3.0, ..DetectorConfig::default() };
        let flags = |s| detect(s, &config).unwrap();
        let scaled = g.series.scaled(Decimal::from(7));
        let a: Vec<_> = flags(&g.series).into_iter().map(|a| (a.date, a.kind)).collect();
        let b: Vec<_> = flags(&scaled).into_iter().map(|a| (a.date, a.kind)).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn detect_is_deterministic_and_dates_unique(seed in any::<u64>()) {
        let g = random_series(seed);
        let config = DetectorConfig { z_threshold: 2.5, ..DetectorConfig::default() };
        let first = detect(&g.series, &config).unwrap();
        prop_assert_eq!(&first, &detect(&g.series, &config).unwrap());
        let dates: BTreeSet<_> = first.iter().map(|a| a.date).collect();
        prop_assert_eq!(dates.len(), first.len());
        prop_assert!(first.iter().all(|a| a.is_well_formed()));
    }

    #[test]
    fn pct_change_has_one_slot_per_step(seed in any::<u64>()) {
        let g = random_series(seed);
        prop_assert_eq!(pct_change(&g.series).unwrap().changes.len(), g.series.len() - 1);
    }

    #[test]
    fn zscores_invariant_under_affine_maps(
        values in prop::collection::vec(-500_000i64..500_000, 3..80),
        a in 1i64..10_000,
        b in -50_000i64..50_000,
    ) {
        let a = Decimal::new(a, 2);
        let b = Decimal::new(b, 2);
        let series = |f: &dyn Fn(Decimal) -> Decimal| PctChangeSeries {
            series_id: "x".into(),
            changes: values
                .iter()
                .enumerate()
                .map(|(i, v)| Change { date: date(i as u32), value: Some(f(Decimal::new(*v, 3))) })
                .collect(),
        };
        let plain = series(&|x| x);
        let mapped = series(&|x| a * x + b);
        match (zscores(&plain, StdMode::Sample), zscores(&mapped, StdMode::Sample)) {
            (Ok(z1), Ok(z2)) => {
                for ((d1, x), (d2, y)) in z1.iter().zip(&z2) {
                    prop_assert_eq!(d1, d2);
                    prop_assert!((x - y).abs() <= 1e-9, "{} vs {}", x, y);
                }
            }
            (Err(_), Err(_)) => {}
            (l, r) => prop_assert!(false, "one side failed: {:?} / {:?}", l.is_ok(), r.is_ok()),
        }
    }
}

proptest! {
    #[test]
    fn evidence_stays_within_cap(
        evidence in prop::collection::vec("[a-z ]{0,400}", 0..8),
        system in "[a-z ]{0,200}",
        cap in 50usize..3000,
    ) {
        let last = evidence.last().cloned();
        match bounded_prompt("x", &system, "1. q", evidence, cap) {
            Ok((user, truncated)) => {
                prop_assert!(system.chars().count() + user.chars().count() <= cap);
                if truncated {
                    prop_assert!(user.contains("[evidence truncated:"));
                    // the newest evidence survives, possibly clipped to its tail
                    let last = last.unwrap();
                    if last.is_empty() {
                        return Ok(());
                    }
                    let mut kept = user.trim_end_matches('\n').rsplit("\n\n").next().unwrap();
                    if kept.contains("[evidence truncated:") {
                        // clipped to nothing: the marker is the last block
                        kept = "";
                    }
                    prop_assert!(last.ends_with(kept), "{:?} is not a tail of {:?}", kept, last);
                    if !user.contains("clipped]") {
                        prop_assert_eq!(kept, last.as_str());
                    }
                }
            }
            // only when headers plus the truncation marker alone overflow
            Err(_) => prop_assert!(system.chars().count() + 150 > cap),
        }
    }

    #[test]
    fn resolved_tickers_match_the_pattern(reply in "[ -~\n]{0,30}") {
        let script = MockScript::new().push("ticker_resolver", &reply);
        let gateway = Gateway::new(Arc::new(MockBackend::new(script)), Arc::new(NullSink::default()));
        if let Ok(t) = resolve_ticker(&SeriesMetadata::with_title("S&P 500 INDEX"), &gateway) {
            prop_assert!(is_valid_ticker(&t));
        }
    }

    #[test]
    fn closes_never_fabricate_dates(offsets in prop::collection::vec(0u32..16_000, 1..20)) {
        let market = FixtureMarketData::load(&fixture("providers/closes.csv")).unwrap();
        let wanted: Vec<NaiveDate> = offsets.iter().map(|o| date(*o)).collect();
        if let Ok(found) = market.fetch_closes("^GSPC", &wanted) {
            prop_assert!(found.closes.keys().all(|d| wanted.contains(d)));
        }
    }

    #[test]
    fn disagreements_match_recomputation(votes in prop::collection::vec(prop::collection::vec(0usize..3, 1..6), 1..4)) {
        let n = votes.iter().map(Vec::len).max().unwrap();
        let all = [Verdict::Correct, Verdict::Incorrect, Verdict::Uncertain];
        let findings: Vec<ExpertFinding> = votes
            .iter()
            .enumerate()
            .map(|(i, v)| ExpertFinding {
                expert_id: format!("e{i}"),
                per_question: v
                    .iter()
                    .enumerate()
                    .map(|(q, k)| (q + 1, VerdictEntry { verdict: all[*k], reasoning: "r".into(), unparsed: false }))
                    .collect(),
                raw_response: String::new(),
            })
            .collect();
        let refs: Vec<&ExpertFinding> = findings.iter().collect();
        let got: Vec<usize> = compute_disagreements(n, &refs).iter().map(|d| d.index).collect();
        let mut want = Vec::new();
        for q in 1..=n {
            let distinct: BTreeSet<usize> = votes.iter().filter_map(|v| v.get(q - 1).copied()).collect();
            if distinct.len() > 1 {
                want.push(q);
            }
        }
        prop_assert_eq!(got, want);
    }
}
