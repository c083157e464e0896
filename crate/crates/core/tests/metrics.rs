use mlmprep_core::metrics::{
    accuracy, bio_to_spans, mean_f1, nested_f1, perplexity, span_f1, Average, Level, SpanAnnotation,
};
use proptest::prelude::*;

fn sp(s: usize, e: usize, l: &str) -> SpanAnnotation {
    SpanAnnotation::new(s, e, l)
}

/// Counts matches by pairing each gold span with an unused identical
/// prediction.
fn brute_force_f1(gold: &[SpanAnnotation], pred: &[SpanAnnotation]) -> (u64, u64, u64, f64) {
    let mut used = vec![false; pred.len()];
    let mut tp = 0;
    for g in gold {
        if let Some(i) = (0..pred.len()).find(|&i| !used[i] && pred[i] == *g) {
            used[i] = true;
            tp += 1;
        }
    }
    let fp = pred.len() as u64 - tp;
    let fn_ = gold.len() as u64 - tp;
    let f1 = if gold.is_empty() && pred.is_empty() {
        1.0
    } else {
        let p = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let r = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    };
    (tp, fp, fn_, f1)
}

fn spans_strategy() -> impl Strategy<Value = Vec<SpanAnnotation>> {
    proptest::collection::vec((0usize..20, 1usize..4, 0usize..4), 0..8).prop_map(|v| {
        v.into_iter()
            .map(|(s, len, l)| {
                sp(
                    s,
                    (s + len).min(20).max(s + 1),
                    ["PER", "LOC", "ORG", "MISC"][l],
                )
            })
            .collect()
    })
}

/// Inverse of `bio_to_spans` for non-overlapping spans.
fn spans_to_bio(spans: &[SpanAnnotation], n: usize) -> Vec<String> {
    let mut tags = vec!["O".to_string(); n];
    for s in spans {
        tags[s.start] = format!("B-{}", s.label);
        for t in &mut tags[s.start + 1..s.end] {
            *t = format!("I-{}", s.label);
        }
    }
    tags
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn span_f1_matches_brute_force(gold in spans_strategy(), pred in spans_strategy()) {
        let r = span_f1(&gold, &pred).unwrap();
        let (tp, fp, fn_, f1) = brute_force_f1(&gold, &pred);
        let c = r.counts.unwrap();
        prop_assert_eq!((c.tp, c.fp, c.fn_), (tp, fp, fn_));
        prop_assert!((r.value - f1).abs() <= 1e-12);
        prop_assert!(r.is_consistent());
        // swapping gold and prediction swaps precision and recall
        let s = span_f1(&pred, &gold).unwrap();
        prop_assert_eq!(s.precision, r.recall);
        prop_assert_eq!(s.value, r.value);
    }

    #[test]
    fn span_order_is_irrelevant(mut gold in spans_strategy(), pred in spans_strategy()) {
        let a = span_f1(&gold, &pred).unwrap();
        gold.reverse();
        prop_assert_eq!(a, span_f1(&gold, &pred).unwrap());
    }

    #[test]
    fn bio_round_trip(cuts in proptest::collection::vec((1usize..4, 0usize..3, any::<bool>()), 0..10)) {
        let mut spans = Vec::new();
        let mut at = 0;
        for (len, l, gap) in cuts {
            at += usize::from(gap);
            spans.push(sp(at, at + len, ["PER", "LOC", "ORG"][l]));
            at += len;
        }
        let tags = spans_to_bio(&spans, at + 1);
        prop_assert_eq!(bio_to_spans(&tags).unwrap(), spans);
    }

    #[test]
    fn class_metrics_ignore_order(pairs in proptest::collection::vec((0u8..4, 0u8..4), 1..50)) {
        let g: Vec<String> = pairs.iter().map(|p| p.0.to_string()).collect();
        let p: Vec<String> = pairs.iter().map(|p| p.1.to_string()).collect();
        let (mut gr, mut pr) = (g.clone(), p.clone());
        gr.reverse();
        pr.reverse();
        for avg in [Average::Macro, Average::Micro] {
            prop_assert_eq!(mean_f1(&g, &p, avg).unwrap().value, mean_f1(&gr, &pr, avg).unwrap().value);
        }
        prop_assert_eq!(accuracy(&g, &p).unwrap().value, accuracy(&gr, &pr).unwrap().value);
    }
}

#[test]
fn span_examples() {
    let r = span_f1(
        &[sp(0, 2, "PER"), sp(5, 7, "LOC")],
        &[sp(0, 2, "PER"), sp(5, 6, "LOC")],
    )
    .unwrap();
    assert_eq!(
        (r.precision, r.recall, r.value),
        (Some(0.5), Some(0.5), 0.5)
    );
    let r = span_f1(&[], &[sp(0, 1, "PER")]).unwrap();
    assert_eq!((r.precision, r.value), (Some(0.0), 0.0));
    assert_eq!(span_f1(&[], &[]).unwrap().value, 1.0);
}

#[test]
fn nested_examples() {
    let n = 5;
    let outer: Vec<_> = (0..n).map(|i| sp(2 * i, 2 * i + 2, "ORG")).collect();
    let inner: Vec<_> = (0..n)
        .map(|i| sp(2 * i, 2 * i + 1, "LOC").at_level(Level::Inner))
        .collect();
    let gold = [outer.clone(), inner].concat();
    let r = nested_f1(&gold, &outer).unwrap();
    assert_eq!(r.recall, Some(0.5));
    assert_eq!(r.precision, Some(1.0));
    assert!((r.value - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(nested_f1(&gold, &gold).unwrap().value, 1.0);
    assert_eq!(nested_f1(&[], &[]).unwrap().value, 1.0);
}

#[test]
fn class_examples() {
    let r = mean_f1(&["A", "A", "B", "B"], &["A", "B", "B", "B"], Average::Macro).unwrap();
    assert!((r.value - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-9);
    assert!((r.value - 0.733_333_333_3).abs() < 1e-9);
    let r = mean_f1(&["A", "A", "B", "B"], &["A", "A", "A", "A"], Average::Macro).unwrap();
    assert!((r.value - 1.0 / 3.0).abs() < 1e-9);
    assert!(mean_f1(&["A"], &["A", "B"], Average::Macro).is_err());

    let gold: Vec<u8> = (0..5010).map(|i| (i % 3) as u8).collect();
    let pred: Vec<u8> = (0..5010)
        .map(|i| if i % 2 == 0 { (i % 3) as u8 } else { 9 })
        .collect();
    let r = accuracy(&gold, &pred).unwrap();
    assert_eq!(r.total, Some(5010));
    assert_eq!(r.correct, Some(2505));
    assert_eq!(r.value, 0.5);
}

#[test]
fn perplexity_examples() {
    let v = 52_009f64;
    assert!((perplexity(&vec![v.ln(); 100]).unwrap() - v).abs() < 1e-9 * v);
    assert_eq!(perplexity(&[0.0, 0.0]).unwrap(), 1.0);
    assert!((perplexity(&[2f64.ln(), 8f64.ln()]).unwrap() - 4.0).abs() < 1e-12);
    assert!(perplexity(&[]).is_err());
    assert!(perplexity(&[f64::NAN]).is_err());
}
