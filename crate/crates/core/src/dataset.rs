//! Dataset file ingestion and emission.
//!
//! One record per line, tab-separated fields:
//! question_id, paragraph_id, comma-separated features, label ("0", "1"
//! or "-" for unlabeled), comma-separated teacher scores. No header.
//! Numbers are written with 17 significant digits so a write/load
//! round-trip is bit-exact.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numfmt::fmt_g17;
use crate::types::{Dataset, Label, SampleRecord, Score};

pub fn load_dataset(path: impl AsRef<Path>, expected_teachers: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut records = Vec::new();
    let mut dims: Option<(usize, usize)> = None;
    let mut seen: HashSet<(String, String)> = HashSet::new();

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let record = parse_line(&line)
            .map_err(|message| Error::parse(path, lineno, message))?;

        match dims {
            None => {
                if let Some(n) = expected_teachers {
                    if record.teacher_scores.len() != n {
                        return Err(Error::parse(
                            path,
                            lineno,
                            format!("expected {n} teacher scores, found {}", record.teacher_scores.len()),
                        ));
                    }
                }
                dims = Some((record.features.len(), record.teacher_scores.len()));
            }
            Some((d, n)) => {
                if record.features.len() != d {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("feature count {} does not match {} from line 1", record.features.len(), d),
                    ));
                }
                if record.teacher_scores.len() != n {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("teacher score count {} does not match {} from line 1", record.teacher_scores.len(), n),
                    ));
                }
            }
        }

        let key = (record.question_id.clone(), record.paragraph_id.clone());
        if !seen.insert(key) {
            return Err(Error::parse(
                path,
                lineno,
                format!("duplicate record id ({}, {})", record.question_id, record.paragraph_id),
            ));
        }
        records.push(record);
    }

    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::new(records)
}

fn parse_line(line: &str) -> std::result::Result<SampleRecord, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 5 {
        return Err(format!("expected 5 tab-separated fields, found {}", fields.len()));
    }
    let question_id = fields[0].to_string();
    let paragraph_id = fields[1].to_string();
    if question_id.is_empty() || paragraph_id.is_empty() {
        return Err("empty id field".to_string());
    }

    let features = fields[2]
        .split(',')
        .map(|s| s.parse::<f64>().map_err(|_| format!("bad feature value {s:?}")))
        .collect::<std::result::Result<Vec<f64>, String>>()?;
    if features.iter().any(|x| !x.is_finite()) {
        return Err("non-finite feature value".to_string());
    }

    let label = match fields[3] {
        "1" => Some(Label::Positive),
        "0" => Some(Label::Negative),
        "-" => None,
        other => return Err(format!("bad label field {other:?} (expected 0, 1 or -)")),
    };

    let teacher_scores = fields[4]
        .split(',')
        .map(|s| {
            let v = s.parse::<f64>().map_err(|_| format!("bad teacher score {s:?}"))?;
            Score::new(v).map_err(|_| format!("teacher score {s} out of range [0, 1]"))
        })
        .collect::<std::result::Result<Vec<Score>, String>>()?;

    Ok(SampleRecord {
        question_id,
        paragraph_id,
        features,
        label,
        teacher_scores,
    })
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in dataset.records() {
        for id in [&r.question_id, &r.paragraph_id] {
            if id.contains(['\t', '\n', '\r']) {
                return Err(Error::InvalidParameter(format!(
                    "id {id:?} contains a field separator"
                )));
            }
        }
        let features: Vec<String> = r.features.iter().map(|&x| fmt_g17(x)).collect();
        let label = match r.label {
            Some(Label::Positive) => "1",
            Some(Label::Negative) => "0",
            None => "-",
        };
        let scores: Vec<String> = r.teacher_scores.iter().map(|s| fmt_g17(s.value())).collect();
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            r.question_id,
            r.paragraph_id,
            features.join(","),
            label,
            scores.join(",")
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
