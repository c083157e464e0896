//! Evaluation measures: exact-span F1, two-level nested-span F1, macro and
//! micro F1 for classification, accuracy and perplexity.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Outer,
    Inner,
}

/// A labelled token span `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpanAnnotation {
    pub start: usize,
    pub end: usize,
    pub label: String,
    #[serde(default = "outer")]
    pub level: Level,
}

fn outer() -> Level {
    Level::Outer
}

impl SpanAnnotation {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        SpanAnnotation {
            start,
            end,
            label: label.into(),
            level: Level::Outer,
        }
    }

    pub fn at_level(mut self, level: Level) -> Self {
        self.level = level;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.start >= self.end {
            return Err(Error::input(alloc::format!(
                "span [{}, {}) is empty",
                self.start,
                self.end
            )));
        }
        if self.label.is_empty() {
            return Err(Error::input("span label is empty"));
        }
        Ok(())
    }
}

/// Support counts behind a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Support {
    Prf { tp: u64, fp: u64, fn_: u64 },
    Accuracy { correct: u64, total: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PrfCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl PrfCounts {
    pub fn add(&mut self, other: PrfCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// Precision; 0 when nothing was predicted, unless nothing was expected
    /// either.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp, self.is_vacuous())
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_, self.is_vacuous())
    }

    /// Harmonic mean of precision and recall; 1 when both sides are empty.
    pub fn f1(&self) -> f64 {
        if self.is_vacuous() {
            return 1.0;
        }
        // 2tp / (2tp + fp + fn) equals 2PR/(P+R) and avoids the 0/0 case
        let denom = 2 * self.tp + self.fp + self.fn_;
        2.0 * self.tp as f64 / denom as f64
    }

    fn is_vacuous(&self) -> bool {
        self.tp == 0 && self.fp == 0 && self.fn_ == 0
    }
}

fn ratio(num: u64, den: u64, vacuous: bool) -> f64 {
    if den == 0 {
        if vacuous {
            1.0
        } else {
            0.0
        }
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: PrfCounts,
}

impl From<PrfCounts> for ClassScore {
    fn from(counts: PrfCounts) -> Self {
        ClassScore {
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            counts,
        }
    }
}

/// A single metric value with the counts it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub counts: Option<PrfCounts>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub correct: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub total: Option<u64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub per_class: BTreeMap<String, ClassScore>,
}

impl EvalReport {
    fn from_prf(metric: &str, counts: PrfCounts, per_class: BTreeMap<String, ClassScore>) -> Self {
        EvalReport {
            metric: metric.into(),
            value: counts.f1(),
            precision: Some(counts.precision()),
            recall: Some(counts.recall()),
            counts: Some(counts),
            correct: None,
            total: None,
            per_class,
        }
    }

    /// Checks that `value` is what the stored counts give.
    pub fn is_consistent(&self) -> bool {
        if let Some(c) = self.counts {
            if self.per_class.is_empty() || self.metric != "macro_f1" {
                return c.f1() == self.value;
            }
        }
        if self.metric == "macro_f1" {
            let n = self.per_class.len();
            let mean = self.per_class.values().map(|c| c.f1).sum::<f64>() / n as f64;
            return n > 0 && mean == self.value;
        }
        match (self.correct, self.total) {
            (Some(c), Some(t)) => t > 0 && c as f64 / t as f64 == self.value,
            _ => false,
        }
    }
}

/// Converts BIO tags to spans.
///
/// `I-X` continues a span only when the previous tag was `B-X` or `I-X`;
/// otherwise it opens a new span of type `X`. Any tag outside `O`, `B-*`,
/// `I-*` is an error.
pub fn bio_to_spans<S: AsRef<str>>(tags: &[S]) -> Result<Vec<SpanAnnotation>> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        let (begin, label) = match tag {
            "O" => {
                if let Some((s, l)) = open.take() {
                    spans.push(SpanAnnotation::new(s, i, l));
                }
                continue;
            }
            t => match t.split_once('-') {
                Some(("B", l)) if !l.is_empty() => (true, l),
                Some(("I", l)) if !l.is_empty() => (false, l),
                _ => {
                    return Err(Error::input(alloc::format!(
                        "unknown tag {t:?} at position {i}"
                    )))
                }
            },
        };
        let continues = !begin && open.is_some_and(|(_, l)| l == label);
        if !continues {
            if let Some((s, l)) = open.take() {
                spans.push(SpanAnnotation::new(s, i, l));
            }
            open = Some((i, label));
        }
    }
    if let Some((s, l)) = open {
        spans.push(SpanAnnotation::new(s, tags.len(), l));
    }
    Ok(spans)
}

/// Multiset match counts under exact `(level, start, end, label)` equality.
pub fn span_counts(gold: &[SpanAnnotation], pred: &[SpanAnnotation]) -> PrfCounts {
    let mut remaining: BTreeMap<&SpanAnnotation, u64> = BTreeMap::new();
    for g in gold {
        *remaining.entry(g).or_default() += 1;
    }
    let mut tp = 0;
    for p in pred {
        if let Some(n) = remaining.get_mut(p).filter(|n| **n > 0) {
            *n -= 1;
            tp += 1;
        }
    }
    PrfCounts {
        tp,
        fp: pred.len() as u64 - tp,
        fn_: gold.len() as u64 - tp,
    }
}

fn per_label(
    gold: &[SpanAnnotation],
    pred: &[SpanAnnotation],
    out: &mut BTreeMap<String, PrfCounts>,
) {
    let labels: alloc::collections::BTreeSet<&str> =
        gold.iter().chain(pred).map(|s| s.label.as_str()).collect();
    for label in labels {
        let g: Vec<_> = gold.iter().filter(|s| s.label == label).cloned().collect();
        let p: Vec<_> = pred.iter().filter(|s| s.label == label).cloned().collect();
        out.entry(label.to_string())
            .or_default()
            .add(span_counts(&g, &p));
    }
}

fn validate_all(spans: &[SpanAnnotation]) -> Result<()> {
    spans.iter().try_for_each(SpanAnnotation::validate)
}

/// Micro F1 over exact span matches, accumulated over documents. Spans only
/// match within the same document.
pub fn span_f1_docs(
    gold: &[Vec<SpanAnnotation>],
    pred: &[Vec<SpanAnnotation>],
) -> Result<EvalReport> {
    prf_docs("span_f1", gold, pred)
}

/// Exact-span F1 over one document. Levels take part in the match, so for
/// flat annotation leave every span at [`Level::Outer`].
pub fn span_f1(gold: &[SpanAnnotation], pred: &[SpanAnnotation]) -> Result<EvalReport> {
    prf_docs(
        "span_f1",
        core::slice::from_ref(&gold.to_vec()),
        core::slice::from_ref(&pred.to_vec()),
    )
}

/// Two-level micro F1: outer and inner spans are pooled, and a match needs
/// identical level, boundaries and label. The per-class breakdown is keyed
/// `outer` and `inner`.
pub fn nested_f1_docs(
    gold: &[Vec<SpanAnnotation>],
    pred: &[Vec<SpanAnnotation>],
) -> Result<EvalReport> {
    let mut report = prf_docs("nested_f1", gold, pred)?;
    let mut levels: BTreeMap<String, PrfCounts> = BTreeMap::new();
    for (g, p) in gold.iter().zip(pred) {
        for (level, name) in [(Level::Outer, "outer"), (Level::Inner, "inner")] {
            let g: Vec<_> = g.iter().filter(|s| s.level == level).cloned().collect();
            let p: Vec<_> = p.iter().filter(|s| s.level == level).cloned().collect();
            levels
                .entry(name.into())
                .or_default()
                .add(span_counts(&g, &p));
        }
    }
    report.per_class = levels.into_iter().map(|(k, c)| (k, c.into())).collect();
    Ok(report)
}

pub fn nested_f1(gold: &[SpanAnnotation], pred: &[SpanAnnotation]) -> Result<EvalReport> {
    nested_f1_docs(
        core::slice::from_ref(&gold.to_vec()),
        core::slice::from_ref(&pred.to_vec()),
    )
}

fn prf_docs(
    metric: &str,
    gold: &[Vec<SpanAnnotation>],
    pred: &[Vec<SpanAnnotation>],
) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::input(alloc::format!(
            "{} gold documents but {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    let mut total = PrfCounts::default();
    let mut labels = BTreeMap::new();
    for (g, p) in gold.iter().zip(pred) {
        validate_all(g)?;
        validate_all(p)?;
        total.add(span_counts(g, p));
        per_label(g, p, &mut labels);
    }
    let per_class = labels.into_iter().map(|(k, c)| (k, c.into())).collect();
    Ok(EvalReport::from_prf(metric, total, per_class))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Average {
    /// Unweighted mean of per-class F1 over the classes present in gold.
    #[default]
    Macro,
    /// F1 of pooled one-vs-rest counts.
    Micro,
}

fn check_lengths<T>(gold: &[T], pred: &[T]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::input(alloc::format!(
            "gold has {} items but prediction has {}",
            gold.len(),
            pred.len()
        )));
    }
    Ok(())
}

/// Per-class one-vs-rest F1 averaged over the classes that occur in `gold`.
pub fn mean_f1<S: AsRef<str>>(gold: &[S], pred: &[S], average: Average) -> Result<EvalReport> {
    check_lengths(gold, pred)?;
    let mut counts: BTreeMap<&str, PrfCounts> = BTreeMap::new();
    for (g, p) in gold.iter().zip(pred) {
        let (g, p) = (g.as_ref(), p.as_ref());
        if g == p {
            counts.entry(g).or_default().tp += 1;
        } else {
            counts.entry(g).or_default().fn_ += 1;
            counts.entry(p).or_default().fp += 1;
        }
    }
    let present: BTreeMap<String, ClassScore> = counts
        .iter()
        .filter(|(_, c)| c.tp + c.fn_ > 0)
        .map(|(k, c)| (k.to_string(), ClassScore::from(*c)))
        .collect();
    match average {
        Average::Macro => {
            let value = if present.is_empty() {
                1.0
            } else {
                present.values().map(|c| c.f1).sum::<f64>() / present.len() as f64
            };
            Ok(EvalReport {
                metric: "macro_f1".into(),
                value,
                precision: None,
                recall: None,
                counts: None,
                correct: None,
                total: None,
                per_class: present,
            })
        }
        Average::Micro => {
            let mut pooled = PrfCounts::default();
            counts.values().for_each(|c| pooled.add(*c));
            let mut r = EvalReport::from_prf("micro_f1", pooled, present);
            r.metric = "micro_f1".into();
            Ok(r)
        }
    }
}

pub fn accuracy<T: PartialEq>(gold: &[T], pred: &[T]) -> Result<EvalReport> {
    check_lengths(gold, pred)?;
    if gold.is_empty() {
        return Err(Error::input("accuracy of an empty set is undefined"));
    }
    let correct = gold.iter().zip(pred).filter(|(g, p)| g == p).count() as u64;
    let total = gold.len() as u64;
    Ok(EvalReport {
        metric: "accuracy".into(),
        value: correct as f64 / total as f64,
        precision: None,
        recall: None,
        counts: None,
        correct: Some(correct),
        total: Some(total),
        per_class: BTreeMap::new(),
    })
}

/// `exp` of the mean natural-log loss per token.
pub fn perplexity(nll_per_token: &[f64]) -> Result<f64> {
    if nll_per_token.is_empty() {
        return Err(Error::input(
            "perplexity of an empty loss list is undefined",
        ));
    }
    if let Some(bad) = nll_per_token.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::input(alloc::format!(
            "loss {bad} is not a finite non-negative value"
        )));
    }
    let mean = nll_per_token.iter().sum::<f64>() / nll_per_token.len() as f64;
    Ok(libm::exp(mean))
}
