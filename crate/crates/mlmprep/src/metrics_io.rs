//! Readers for evaluation files and the report computations behind the
//! `metrics` subcommands.
//!
//! * Column files: whitespace-separated columns, one token per line, blank
//!   lines between sentences, `#` comments and `-DOCSTART-` lines ignored.
//!   The tag is the last column. A single file may carry both gold and
//!   predicted tags as its last two columns.
//! * Nested files (GermEval 2014 layout): the last two columns are the outer
//!   and inner BIO tags.
//! * Span files (`.json` / `.jsonl`): one JSON array of spans per sentence,
//!   each `{"start","end","label","level"}` with `level` optional.
//! * Label files: one label per line in the last tab-separated column; when
//!   both files carry an id column the ids must agree line by line.
//! * Loss files: whitespace-separated natural-log losses.

use std::path::Path;

use mlmprep_core::metrics::{
    accuracy, bio_to_spans, mean_f1, nested_f1_docs, perplexity, span_f1_docs, Average, EvalReport,
    Level, SpanAnnotation,
};

use crate::{Error, Result};

type Rows = Vec<Vec<String>>;

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn record(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Record {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// One sentence of a column file as `(line number, columns)` rows.
pub type ColumnSentence = Vec<(usize, Vec<String>)>;

type SpanPairs = (Vec<Vec<SpanAnnotation>>, Vec<Vec<SpanAnnotation>>);

/// Sentences of a column file.
pub fn read_columns(path: &Path) -> Result<Vec<ColumnSentence>> {
    let text = read_text(path)?;
    let mut sentences = Vec::new();
    let mut current = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        if trimmed.starts_with('#') || trimmed.starts_with("-DOCSTART-") {
            continue;
        }
        let cols: Vec<String> = trimmed.split_whitespace().map(str::to_owned).collect();
        current.push((i + 1, cols));
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}

fn column_from_end(
    path: &Path,
    sentences: &[Vec<(usize, Vec<String>)>],
    back: usize,
    need: usize,
) -> Result<Vec<Rows>> {
    sentences
        .iter()
        .map(|s| {
            s.iter()
                .map(|(line, cols)| {
                    if cols.len() < need {
                        return Err(record(
                            path,
                            *line,
                            format!("expected at least {need} columns"),
                        ));
                    }
                    Ok(vec![cols[cols.len() - back].clone()])
                })
                .collect::<Result<Rows>>()
        })
        .collect()
}

fn spans_of(
    path: &Path,
    sentences: &[Vec<(usize, Vec<String>)>],
    tags: &[Rows],
    level: Level,
) -> Result<Vec<Vec<SpanAnnotation>>> {
    sentences
        .iter()
        .zip(tags)
        .map(|(s, t)| {
            let tags: Vec<&str> = t.iter().map(|c| c[0].as_str()).collect();
            let spans = bio_to_spans(&tags)
                .map_err(|e| record(path, s[0].0, format!("in sentence: {e}")))?;
            Ok(spans.into_iter().map(|sp| sp.at_level(level)).collect())
        })
        .collect()
}

fn is_span_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("json" | "jsonl")
    )
}

/// Span lists, one per non-blank line.
pub fn read_span_file(path: &Path) -> Result<Vec<Vec<SpanAnnotation>>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| record(path, i + 1, e.to_string())))
        .collect()
}

fn check_alignment(
    gold: &Path,
    g: &[Vec<(usize, Vec<String>)>],
    p: &[Vec<(usize, Vec<String>)>],
) -> Result<()> {
    if g.len() != p.len() {
        return Err(Error::Other(format!(
            "{}: {} sentences, prediction has {}",
            gold.display(),
            g.len(),
            p.len()
        )));
    }
    for (gs, ps) in g.iter().zip(p) {
        if gs.len() != ps.len() {
            return Err(record(
                gold,
                gs[0].0,
                format!(
                    "sentence has {} tokens, prediction has {}",
                    gs.len(),
                    ps.len()
                ),
            ));
        }
    }
    Ok(())
}

/// Gold and predicted spans per sentence for flat or nested annotation.
fn load_spans(gold: &Path, pred: Option<&Path>, nested: bool) -> Result<SpanPairs> {
    if is_span_file(gold) {
        let pred =
            pred.ok_or_else(|| Error::Other("span files need a separate prediction file".into()))?;
        return Ok((read_span_file(gold)?, read_span_file(pred)?));
    }
    let g = read_columns(gold)?;
    let levels: &[(usize, Level)] = if nested {
        &[(2, Level::Outer), (1, Level::Inner)]
    } else {
        &[(1, Level::Outer)]
    };
    let width = levels.len();
    let collect = |path: &Path,
                   sents: &[Vec<(usize, Vec<String>)>],
                   offset: usize|
     -> Result<Vec<Vec<SpanAnnotation>>> {
        let mut out = vec![Vec::new(); sents.len()];
        for &(back, level) in levels {
            let tags = column_from_end(path, sents, back + offset, width + offset)?;
            for (o, s) in out.iter_mut().zip(spans_of(path, sents, &tags, level)?) {
                o.extend(s);
            }
        }
        Ok(out)
    };
    match pred {
        Some(p) if is_span_file(p) => Ok((collect(gold, &g, 0)?, read_span_file(p)?)),
        Some(p) => {
            let ps = read_columns(p)?;
            check_alignment(gold, &g, &ps)?;
            Ok((collect(gold, &g, 0)?, collect(p, &ps, 0)?))
        }
        // gold tags sit just before the predicted ones
        None => Ok((collect(gold, &g, width)?, collect(gold, &g, 0)?)),
    }
}

pub fn ner_report(gold: &Path, pred: Option<&Path>) -> Result<EvalReport> {
    let (g, p) = load_spans(gold, pred, false)?;
    Ok(span_f1_docs(&g, &p)?)
}

pub fn nested_report(gold: &Path, pred: Option<&Path>) -> Result<EvalReport> {
    let (g, p) = load_spans(gold, pred, true)?;
    Ok(nested_f1_docs(&g, &p)?)
}

/// `(optional id, label)` per non-blank line.
pub fn read_labels(path: &Path) -> Result<Vec<(Option<String>, String)>> {
    let text = read_text(path)?;
    Ok(text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty())
        .map(|l| match l.rsplit_once('\t') {
            Some((id, label)) => (Some(id.trim().to_owned()), label.trim().to_owned()),
            None => (None, l.trim().to_owned()),
        })
        .collect())
}

fn paired_labels(gold: &Path, pred: &Path) -> Result<(Vec<String>, Vec<String>)> {
    let g = read_labels(gold)?;
    let p = read_labels(pred)?;
    for (i, ((gid, _), (pid, _))) in g.iter().zip(&p).enumerate() {
        if let (Some(a), Some(b)) = (gid, pid) {
            if a != b {
                return Err(Error::Other(format!(
                    "item {}: gold id {a:?} does not match predicted id {b:?}",
                    i + 1
                )));
            }
        }
    }
    Ok((
        g.into_iter().map(|x| x.1).collect(),
        p.into_iter().map(|x| x.1).collect(),
    ))
}

pub fn cls_report(gold: &Path, pred: &Path, average: Average) -> Result<EvalReport> {
    let (g, p) = paired_labels(gold, pred)?;
    Ok(mean_f1(&g, &p, average)?)
}

pub fn nli_report(gold: &Path, pred: &Path) -> Result<EvalReport> {
    let (g, p) = paired_labels(gold, pred)?;
    Ok(accuracy(&g, &p)?)
}

pub fn read_losses(path: &Path) -> Result<Vec<f64>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        for tok in line.split_whitespace() {
            out.push(
                tok.parse()
                    .map_err(|_| record(path, i + 1, format!("invalid loss {tok:?}")))?,
            );
        }
    }
    Ok(out)
}

pub fn ppl_value(path: &Path) -> Result<f64> {
    perplexity(&read_losses(path)?).map_err(|e| Error::file(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn conll_single_and_split_files() {
        let dir = tempfile::tempdir().unwrap();
        let both = write(
            dir.path(),
            "both.txt",
            "-DOCSTART- O O\n\nAngela B-PER B-PER\nMerkel I-PER O\nin O O\nBerlin B-LOC B-LOC\n\nJa O O\n",
        );
        let r = ner_report(&both, None).unwrap();
        let c = r.counts.unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (1, 1, 1));
        assert!((r.value - 0.5).abs() < 1e-12);

        let gold = write(dir.path(), "g.txt", "a B-PER\nb I-PER\n\nc O\n");
        let pred = write(dir.path(), "p.txt", "a B-PER\nb I-PER\n\nc O\n");
        assert_eq!(ner_report(&gold, Some(&pred)).unwrap().value, 1.0);
        let short = write(dir.path(), "s.txt", "a B-PER\n\nc O\n");
        assert!(ner_report(&gold, Some(&short)).is_err());
    }

    #[test]
    fn nested_tsv_and_json() {
        let dir = tempfile::tempdir().unwrap();
        let gold = write(
            dir.path(),
            "g.tsv",
            "# sent\n1\tDie\tO\tO\n2\tBerliner\tB-ORG\tB-LOCderiv\n3\tBank\tI-ORG\tO\n",
        );
        let pred = write(
            dir.path(),
            "p.tsv",
            "1\tDie\tO\tO\n2\tBerliner\tB-ORG\tO\n3\tBank\tI-ORG\tO\n",
        );
        let r = nested_report(&gold, Some(&pred)).unwrap();
        assert!((r.value - 2.0 / 3.0).abs() < 1e-12);

        let gj = write(
            dir.path(),
            "g.jsonl",
            "[{\"start\":1,\"end\":3,\"label\":\"ORG\"},{\"start\":1,\"end\":2,\"label\":\"LOCderiv\",\"level\":\"inner\"}]\n",
        );
        let pj = write(
            dir.path(),
            "p.jsonl",
            "[{\"start\":1,\"end\":3,\"label\":\"ORG\"}]\n",
        );
        assert_eq!(nested_report(&gj, Some(&pj)).unwrap().value, r.value);
    }

    #[test]
    fn labels_and_losses() {
        let dir = tempfile::tempdir().unwrap();
        let g = write(dir.path(), "g", "1\tA\n2\tA\n3\tB\n4\tB\n");
        let p = write(dir.path(), "p", "A\nB\nB\nB\n");
        let r = cls_report(&g, &p, Average::Macro).unwrap();
        assert!((r.value - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
        assert_eq!(nli_report(&g, &p).unwrap().value, 0.75);
        let bad = write(dir.path(), "b", "9\tA\n2\tB\n3\tB\n4\tB\n");
        assert!(nli_report(&g, &bad).is_err());

        let l = write(dir.path(), "l", &format!("{} {}\n", 2f64.ln(), 8f64.ln()));
        assert!((ppl_value(&l).unwrap() - 4.0).abs() < 1e-12);
        let empty = write(dir.path(), "e", "\n");
        assert!(ppl_value(&empty).is_err());
    }
}
