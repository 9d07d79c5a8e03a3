//! Recognition cache: interpreted windows are embedded as indicator vectors
//! and later served back by cosine similarity, bypassing the backend.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::RwLock;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::ContextDocument;
use crate::gateway::{BackendKind, GestureInterpretation};
use crate::keyframe::{Keyframe, MagnitudeClass};
use crate::landmark::FingerId;

/// Per-keyframe block length.
pub const VECTOR_LEN: usize = 66;

const EXT: usize = 0;
const DIR: usize = 5;
const PAIRS: usize = 45;
const TRAJ: usize = 55;
const MAG: usize = 63;

pub const DEFAULT_THRESHOLD: f64 = 0.98;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("degenerate feature vector (all indicators zero)")]
    DegenerateVector,
    #[error("vector has length {0}, expected {VECTOR_LEN}")]
    WrongLength(usize),
    #[error("cache file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cache file {path} line {line}: {message}")]
    Corrupt {
        path: String,
        line: usize,
        message: String,
    },
}

/// Unit-norm indicator embedding of a keyframe window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    /// Normalizes `values`; rejects all-zero input. Input that is already
    /// unit length is kept bit for bit, so stored vectors reload unchanged.
    pub fn from_raw(values: Vec<f64>) -> Result<Self, CacheError> {
        if values.len() != VECTOR_LEN {
            return Err(CacheError::WrongLength(values.len()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 1e-12) {
            return Err(CacheError::DegenerateVector);
        }
        if (norm - 1.0).abs() < 1e-12 {
            return Ok(Self(values));
        }
        Ok(Self(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Canonical finger pairs `(i, j)` with `i < j`.
pub fn finger_pairs() -> impl Iterator<Item = (FingerId, FingerId)> {
    FingerId::ALL.into_iter().enumerate().flat_map(|(i, a)| {
        FingerId::ALL[i + 1..].iter().map(move |&b| (a, b))
    })
}

/// Indicator block for one keyframe. Extension uses +1/-1 so that a
/// window of fists still has a direction.
pub fn keyframe_block(kf: &Keyframe) -> [f64; VECTOR_LEN] {
    let mut block = [0.0; VECTOR_LEN];
    let sig = kf.signature();
    for finger in FingerId::ALL {
        let k = finger.ordinal();
        block[EXT + k] = if sig.extended[k] { 1.0 } else { -1.0 };
        if let Some(dir) = sig.directions[k] {
            block[DIR + 8 * k + dir.ordinal()] = 1.0;
        }
    }
    for (p, (a, b)) in finger_pairs().enumerate() {
        if sig.groups.iter().any(|g| g.contains(&a) && g.contains(&b)) {
            block[PAIRS + p] = 1.0;
        }
    }
    if let Some(seg) = &kf.incoming {
        if let Some(dir) = seg.direction {
            block[TRAJ + dir.ordinal()] = 1.0;
        }
        match seg.magnitude_class {
            MagnitudeClass::Still => {}
            MagnitudeClass::Small => block[MAG] = 1.0,
            MagnitudeClass::Medium => block[MAG + 1] = 1.0,
            MagnitudeClass::Large => block[MAG + 2] = 1.0,
        }
    }
    block
}

/// Embeds a context window: per-keyframe blocks averaged, then normalized.
pub fn embed(ctx: &ContextDocument) -> Result<FeatureVector, CacheError> {
    embed_window(&ctx.window)
}

pub fn embed_window(window: &[Keyframe]) -> Result<FeatureVector, CacheError> {
    let mut sum = vec![0.0; VECTOR_LEN];
    for kf in window {
        for (s, b) in sum.iter_mut().zip(keyframe_block(kf)) {
            *s += b;
        }
    }
    let n = window.len().max(1) as f64;
    FeatureVector::from_raw(sum.into_iter().map(|s| s / n).collect())
}

/// Dot product of unit vectors, clamped to `[-1, 1]`.
pub fn cosine(a: &FeatureVector, b: &FeatureVector) -> f64 {
    // Rounding can leave a unit vector's self-product just under 1.
    if a == b {
        return 1.0;
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    dot.clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub vector: FeatureVector,
    pub context_text: String,
    pub name: String,
    pub meaning: String,
    pub task_text: String,
    pub created_at_us: u64,
    pub hit_count: u64,
}

impl CacheEntry {
    pub fn new(ctx: &ContextDocument, interp: &GestureInterpretation) -> Result<Self, CacheError> {
        Ok(Self {
            vector: embed(ctx)?,
            context_text: ctx.text.clone(),
            name: interp.name.clone(),
            meaning: interp.meaning.clone(),
            task_text: interp.task_text.clone(),
            created_at_us: now_us(),
            hit_count: 0,
        })
    }

    /// The cached interpretation as served on a hit.
    pub fn interpretation(&self) -> GestureInterpretation {
        GestureInterpretation {
            name: self.name.clone(),
            meaning: self.meaning.clone(),
            task_text: self.task_text.clone(),
            backend: BackendKind::Cache,
            latency_us: Vec::new(),
        }
    }

    /// Few-shot exemplar text for context augmentation.
    pub fn exemplar(&self) -> String {
        format!(
            "A previously interpreted gesture, for reference:\n{}\nname: {}\nmeaning: {}\ntask: {}",
            self.context_text.trim_end(),
            self.name,
            self.meaning,
            self.task_text
        )
    }
}

fn now_us() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_micros() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    vector: Vec<f64>,
    context: String,
    name: String,
    meaning: String,
    task: String,
    created_at_us: u64,
    hit_count: u64,
}

impl From<&CacheEntry> for CacheRecord {
    fn from(e: &CacheEntry) -> Self {
        Self {
            vector: e.vector.0.clone(),
            context: e.context_text.clone(),
            name: e.name.clone(),
            meaning: e.meaning.clone(),
            task: e.task_text.clone(),
            created_at_us: e.created_at_us,
            hit_count: e.hit_count,
        }
    }
}

#[derive(Debug)]
struct Stored {
    entry: CacheEntry,
    hits: AtomicU64,
}

impl Stored {
    fn snapshot(&self) -> CacheEntry {
        CacheEntry {
            hit_count: self.hits.load(Ordering::SeqCst),
            ..self.entry.clone()
        }
    }
}

/// A successful lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheHit {
    pub cosine: f64,
    pub entry: CacheEntry,
}

/// Append-only vector store with linear-scan cosine lookup.
///
/// Readers share the lock; hit counters are atomics so lookups never take
/// the write lock.
#[derive(Debug)]
pub struct RecognitionCache {
    entries: RwLock<Vec<Stored>>,
    path: Option<PathBuf>,
    max_entries: Option<usize>,
    dirty: AtomicBool,
}

impl Default for RecognitionCache {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl RecognitionCache {
    pub fn in_memory() -> Self {
        Self {
            entries: RwLock::new(Vec::new()),
            path: None,
            max_entries: None,
            dirty: AtomicBool::new(false),
        }
    }

    pub fn with_max_entries(mut self, max: Option<usize>) -> Self {
        self.max_entries = max;
        self
    }

    /// Opens (or creates) a persistent cache file and loads every entry.
    pub fn open(path: impl AsRef<Path>, max_entries: Option<usize>) -> Result<Self, CacheError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| CacheError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut entries = Vec::new();
        match File::open(&path) {
            Ok(file) => {
                for (n, line) in BufReader::new(file).lines().enumerate() {
                    let line = line.map_err(io)?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let corrupt = |message: String| CacheError::Corrupt {
                        path: path.display().to_string(),
                        line: n + 1,
                        message,
                    };
                    let rec: CacheRecord =
                        serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
                    let vector =
                        FeatureVector::from_raw(rec.vector).map_err(|e| corrupt(e.to_string()))?;
                    entries.push(Stored {
                        hits: AtomicU64::new(rec.hit_count),
                        entry: CacheEntry {
                            vector,
                            context_text: rec.context,
                            name: rec.name,
                            meaning: rec.meaning,
                            task_text: rec.task,
                            created_at_us: rec.created_at_us,
                            hit_count: rec.hit_count,
                        },
                    });
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(io(e)),
        }
        let cache = Self {
            entries: RwLock::new(entries),
            path: Some(path),
            max_entries,
            dirty: AtomicBool::new(false),
        };
        cache.evict_over_capacity();
        Ok(cache)
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> Vec<CacheEntry> {
        self.entries.read().unwrap().iter().map(Stored::snapshot).collect()
    }

    /// Best entry by cosine without touching hit counters. Ties go to the
    /// earliest `created_at_us`, then to insertion order.
    pub fn best_match(&self, v: &FeatureVector) -> Option<(usize, f64)> {
        best_in(&self.entries.read().unwrap(), v)
    }

    /// Returns the best entry if its cosine reaches `threshold`, counting
    /// the hit.
    pub fn lookup(&self, v: &FeatureVector, threshold: f64) -> Option<CacheHit> {
        let entries = self.entries.read().unwrap();
        let (index, c) = best_in(&entries, v)?;
        if c < threshold {
            return None;
        }
        let stored = &entries[index];
        stored.hits.fetch_add(1, Ordering::SeqCst);
        self.dirty.store(true, Ordering::SeqCst);
        Some(CacheHit {
            cosine: c,
            entry: stored.snapshot(),
        })
    }

    /// Nearest entry regardless of threshold, for exemplar augmentation.
    pub fn nearest(&self, v: &FeatureVector) -> Option<CacheHit> {
        let entries = self.entries.read().unwrap();
        let (index, c) = best_in(&entries, v)?;
        Some(CacheHit {
            cosine: c,
            entry: entries[index].snapshot(),
        })
    }

    pub fn insert(&self, entry: CacheEntry) -> Result<(), CacheError> {
        if (entry.vector.norm() - 1.0).abs() > 1e-9 {
            return Err(CacheError::DegenerateVector);
        }
        let mut entries = self.entries.write().unwrap();
        if let Some(path) = &self.path {
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|source| CacheError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
            let line = serde_json::to_string(&CacheRecord::from(&entry)).expect("serializable");
            writeln!(file, "{line}").map_err(|source| CacheError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        entries.push(Stored {
            hits: AtomicU64::new(entry.hit_count),
            entry,
        });
        drop(entries);
        self.evict_over_capacity();
        Ok(())
    }

    fn evict_over_capacity(&self) {
        let Some(max) = self.max_entries else { return };
        let mut entries = self.entries.write().unwrap();
        while entries.len() > max.max(1) {
            let victim = entries
                .iter()
                .enumerate()
                .min_by_key(|(i, s)| (s.hits.load(Ordering::SeqCst), s.entry.created_at_us, *i))
                .map(|(i, _)| i)
                .expect("non-empty");
            entries.remove(victim);
            self.dirty.store(true, Ordering::SeqCst);
        }
    }

    /// Rewrites the backing file with current hit counts and evictions.
    pub fn flush(&self) -> Result<(), CacheError> {
        let Some(path) = &self.path else { return Ok(()) };
        if !self.dirty.swap(false, Ordering::SeqCst) {
            return Ok(());
        }
        let io = |source| CacheError::Io {
            path: path.display().to_string(),
            source,
        };
        let entries = self.entries.read().unwrap();
        let tmp = path.with_extension("tmp");
        {
            let mut file = File::create(&tmp).map_err(io)?;
            for s in entries.iter() {
                let line = serde_json::to_string(&CacheRecord::from(&s.snapshot())).expect("serializable");
                writeln!(file, "{line}").map_err(io)?;
            }
            file.sync_all().map_err(io)?;
        }
        fs::rename(&tmp, path).map_err(io)
    }
}

impl Drop for RecognitionCache {
    fn drop(&mut self) {
        if let Err(e) = self.flush() {
            tracing::warn!(error = %e, "failed to flush recognition cache");
        }
    }
}

fn best_in(entries: &[Stored], v: &FeatureVector) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in entries.iter().enumerate() {
        let c = cosine(v, &s.entry.vector);
        let better = match best {
            None => true,
            Some((j, bc)) => c > bc || (c == bc && s.entry.created_at_us < entries[j].entry.created_at_us),
        };
        if better {
            best = Some((i, c));
        }
    }
    best
}

/// How cached pairs are used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheMode {
    /// Serve hits directly and skip the backend.
    #[default]
    Bypass,
    /// Like bypass, and additionally prepend the nearest miss as an exemplar.
    Augment,
    /// Neither read nor write.
    Off,
}
