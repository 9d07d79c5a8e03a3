//! Recognition benchmark over a labelled corpus directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Settings, SettingsError};
use crate::gateway::{BackendKind, Gateway, InterpretationFailed};
use crate::pipeline::{FrameOutcome, PipelineError};
use crate::router::normalize_text;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("corpus layout: {0}")]
    Layout(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Data {
        path: String,
        line: usize,
        #[source]
        source: PipelineError,
    },
    #[error("{path}: {source}")]
    Interpretation {
        path: String,
        #[source]
        source: InterpretationFailed,
    },
    #[error(transparent)]
    Settings(#[from] SettingsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub samples: usize,
    pub correct: usize,
    /// Percent, two decimals.
    pub accuracy: f64,
}

impl ClassReport {
    fn new(samples: usize, correct: usize) -> Self {
        let accuracy = if samples == 0 {
            0.0
        } else {
            (10_000.0 * correct as f64 / samples as f64).round() / 100.0
        };
        Self {
            samples,
            correct,
            accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub backend: BackendKind,
    pub classes: BTreeMap<String, ClassReport>,
    pub overall: ClassReport,
    pub config: Settings,
}

/// Whether a predicted gesture name names the directory label.
pub fn label_matches(label: &str, name: &str) -> bool {
    normalize_text(&label.replace('_', " ")) == normalize_text(name)
}

/// `(label, sample path)` pairs in sorted order.
pub fn list_corpus(dir: &Path) -> Result<Vec<(String, PathBuf)>, BenchError> {
    let read = |p: &Path| {
        fs::read_dir(p).map_err(|source| BenchError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    let mut classes: Vec<PathBuf> = read(dir)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    classes.sort();
    if classes.is_empty() {
        return Err(BenchError::Layout(format!("{}: no class directories", dir.display())));
    }
    let mut out = Vec::new();
    for class in classes {
        let label = class
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| BenchError::Layout(format!("{}: non-UTF-8 name", class.display())))?
            .to_string();
        let mut samples: Vec<PathBuf> = read(&class)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
            .collect();
        samples.sort();
        if samples.is_empty() {
            return Err(BenchError::Layout(format!("{}: empty class directory", class.display())));
        }
        out.extend(samples.into_iter().map(|p| (label.clone(), p)));
    }
    Ok(out)
}

/// Runs one session through the pipeline and returns the majority name
/// over all keyframe interpretations. Ties go to the name seen first.
pub fn predict_session(
    path: &str,
    text: &str,
    settings: &Settings,
    gateway: &Gateway,
) -> Result<Option<String>, BenchError> {
    let mut pipeline = settings.frame_pipeline();
    let mut votes: Vec<(String, usize)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let outcome = pipeline.ingest_line(line).map_err(|source| BenchError::Data {
            path: path.to_string(),
            line: i + 1,
            source,
        })?;
        if let FrameOutcome::Accepted { keyframe: Some(_), .. } = outcome {
            let ctx = pipeline.context().expect("window holds the new keyframe");
            let name = gateway
                .interpret(&ctx)
                .map_err(|source| BenchError::Interpretation {
                    path: path.to_string(),
                    source,
                })?
                .name;
            match votes.iter_mut().find(|(n, _)| *n == name) {
                Some((_, c)) => *c += 1,
                None => votes.push((name, 1)),
            }
        }
    }
    let best = votes.iter().map(|(_, c)| *c).max();
    Ok(votes.into_iter().find(|(_, c)| Some(*c) == best).map(|(n, _)| n))
}

/// Benchmarks every sample under `dir`. The cache is not consulted so each
/// sample is judged on its own.
pub fn run_bench(dir: &Path, settings: &Settings) -> Result<BenchReport, BenchError> {
    let samples = list_corpus(dir)?;
    let gateway = settings.gateway()?;
    let results: Vec<(String, bool)> = samples
        .par_iter()
        .map(|(label, path)| {
            let shown = path.display().to_string();
            let text = fs::read_to_string(path).map_err(|source| BenchError::Io {
                path: shown.clone(),
                source,
            })?;
            let predicted = predict_session(&shown, &text, settings, &gateway)?;
            Ok((label.clone(), predicted.is_some_and(|n| label_matches(label, &n))))
        })
        .collect::<Result<_, BenchError>>()?;

    let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (label, ok) in &results {
        let t = tally.entry(label.clone()).or_default();
        t.0 += 1;
        t.1 += usize::from(*ok);
    }
    let total = results.len();
    let correct = results.iter().filter(|(_, ok)| *ok).count();
    Ok(BenchReport {
        backend: gateway.backend_kind(),
        classes: tally
            .into_iter()
            .map(|(label, (n, c))| (label, ClassReport::new(n, c)))
            .collect(),
        overall: ClassReport::new(total, correct),
        config: settings.clone(),
    })
}
