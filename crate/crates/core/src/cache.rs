//! On-disk classification cache.
//!
//! Each curve label owns two files in the cache directory:
//! `<label>.jsonl` holds one [`PrimeClassRecord`] per line in increasing `p`,
//! and `<label>.meta.json` records the curve and the prime bound covered.
//! Extending the bound keeps every existing line byte for byte and appends
//! the new primes, which all lie above the old bound.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::curve::{self, CurveError, CurveQ, PrimeClassRecord};
use crate::fans::ClassTable;

/// Environment variable naming the cache directory.
pub const CACHE_DIR_ENV: &str = "S3SELMER_CACHE_DIR";

/// Used when the environment variable is unset.
pub const DEFAULT_CACHE_DIR: &str = ".s3selmer-cache";

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("no cached classification for label {0:?}; run classify first")]
    Missing(String),
    #[error("cache for {label:?} was built for A={cached_a}, B={cached_b}, not A={a}, B={b}")]
    CurveMismatch {
        label: String,
        cached_a: i64,
        cached_b: i64,
        a: i64,
        b: i64,
    },
    #[error("cache for {label:?} covers primes up to {covered}, need {needed}")]
    Gap {
        label: String,
        covered: u64,
        needed: u64,
    },
    #[error("invalid label {0:?}: use letters, digits, '-', '_' or '.'")]
    BadLabel(String),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CacheError {
    CacheError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Replaces `path` with `bytes` via a temporary file in the same directory,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CacheError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheMeta {
    pub label: String,
    pub a: i64,
    pub b: i64,
    pub covered_up_to: u64,
    /// Set when the user vouched that the mod-3 image is all of GL₂(F₃).
    #[serde(default)]
    pub full_image_attested: bool,
}

/// Outcome of [`ClassCache::ensure`].
#[derive(Debug, Clone)]
pub struct EnsureOutcome {
    pub records: Vec<PrimeClassRecord>,
    pub reused: usize,
    pub computed: usize,
}

#[derive(Debug, Clone)]
pub struct ClassCache {
    dir: PathBuf,
}

impl ClassCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ClassCache { dir: dir.into() }
    }

    /// Directory from [`CACHE_DIR_ENV`], falling back to [`DEFAULT_CACHE_DIR`].
    pub fn from_env() -> Self {
        let dir = std::env::var_os(CACHE_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR));
        ClassCache::new(dir)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn check_label(label: &str) -> Result<(), CacheError> {
        let ok = !label.is_empty()
            && !label.starts_with('.')
            && label
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
        if ok {
            Ok(())
        } else {
            Err(CacheError::BadLabel(label.to_string()))
        }
    }

    pub fn records_path(&self, label: &str) -> PathBuf {
        self.dir.join(format!("{label}.jsonl"))
    }

    pub fn meta_path(&self, label: &str) -> PathBuf {
        self.dir.join(format!("{label}.meta.json"))
    }

    pub fn meta(&self, label: &str) -> Result<Option<CacheMeta>, CacheError> {
        Self::check_label(label)?;
        let path = self.meta_path(label);
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| CacheError::Parse {
                    path,
                    line: e.line(),
                    message: e.to_string(),
                }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path, e)),
        }
    }

    fn read_raw(&self, label: &str) -> Result<(String, Vec<PrimeClassRecord>), CacheError> {
        let path = self.records_path(label);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io_err(&path, e)),
        };
        let mut records: Vec<PrimeClassRecord> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| CacheError::Parse {
                path: path.clone(),
                line: i + 1,
                message,
            };
            let rec: PrimeClassRecord =
                serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
            if records.last().is_some_and(|last| last.p >= rec.p) {
                return Err(parse_err(format!("prime {} out of order", rec.p)));
            }
            rec.check_invariants().map_err(parse_err)?;
            records.push(rec);
        }
        Ok((text, records))
    }

    /// Cached records for `label` with `p ≤ max_prime`, failing on a gap.
    pub fn load(&self, label: &str, max_prime: u64) -> Result<Vec<PrimeClassRecord>, CacheError> {
        let meta = self
            .meta(label)?
            .ok_or_else(|| CacheError::Missing(label.to_string()))?;
        if meta.covered_up_to < max_prime {
            return Err(CacheError::Gap {
                label: label.to_string(),
                covered: meta.covered_up_to,
                needed: max_prime,
            });
        }
        let (_, mut records) = self.read_raw(label)?;
        records.retain(|r| r.p <= max_prime);
        Ok(records)
    }

    /// All cached records for `label` as a table for fan enumeration.
    pub fn table(&self, label: &str) -> Result<ClassTable, CacheError> {
        let meta = self
            .meta(label)?
            .ok_or_else(|| CacheError::Missing(label.to_string()))?;
        let (_, records) = self.read_raw(label)?;
        Ok(ClassTable::new(records, meta.covered_up_to))
    }

    /// Makes sure every good prime up to `max_prime` is classified, computing
    /// only the missing ones, and returns the records up to `max_prime`.
    pub fn ensure(
        &self,
        label: &str,
        curve: &CurveQ,
        max_prime: u64,
        attest_full_image: bool,
    ) -> Result<EnsureOutcome, CacheError> {
        let existing = self.meta(label)?;
        if let Some(meta) = &existing {
            if meta.a != curve.a || meta.b != curve.b {
                return Err(CacheError::CurveMismatch {
                    label: label.to_string(),
                    cached_a: meta.a,
                    cached_b: meta.b,
                    a: curve.a,
                    b: curve.b,
                });
            }
        }
        let covered = existing.as_ref().map_or(0, |m| m.covered_up_to);
        let attested =
            attest_full_image || existing.as_ref().is_some_and(|m| m.full_image_attested);
        let (mut text, mut records) = self.read_raw(label)?;

        let mut computed = 0;
        if max_prime > covered {
            if max_prime > curve::MAX_PRIME {
                return Err(CurveError::TooLarge(max_prime).into());
            }
            let missing: Vec<u64> = curve::good_primes(curve, max_prime, &[])
                .into_iter()
                .filter(|&p| p > covered)
                .collect();
            let fresh = curve::classify_primes(curve, &missing)?;
            computed = fresh.len();
            if !text.is_empty() && !text.ends_with('\n') {
                text.push('\n');
            }
            for rec in &fresh {
                text.push_str(&serde_json::to_string(rec).expect("records serialize"));
                text.push('\n');
            }
            records.extend(fresh);
            write_atomic(&self.records_path(label), text.as_bytes())?;
        }
        let meta = CacheMeta {
            label: label.to_string(),
            a: curve.a,
            b: curve.b,
            covered_up_to: covered.max(max_prime),
            full_image_attested: attested,
        };
        if existing.as_ref() != Some(&meta) {
            let mut bytes = serde_json::to_vec_pretty(&meta).expect("meta serializes");
            bytes.push(b'\n');
            write_atomic(&self.meta_path(label), &bytes)?;
        }
        records.retain(|r| r.p <= max_prime);
        Ok(EnsureOutcome {
            reused: records.len() - computed,
            computed,
            records,
        })
    }

    /// SHA-256 of the record file, if present.
    pub fn checksum(&self, label: &str) -> Result<Option<String>, CacheError> {
        Self::check_label(label)?;
        let path = self.records_path(label);
        match fs::read(&path) {
            Ok(bytes) => Ok(Some(sha256_hex(&bytes))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path, e)),
        }
    }
}
