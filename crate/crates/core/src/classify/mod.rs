//! POI classification through a prompted text-completion backend.

mod backend;
mod cache;
mod prompt;
mod response;

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};
use std::{io, thread};

use serde::{Deserialize, Serialize};

pub use backend::{
    default_mock_rules, Backend, BackendError, ChatCompletionBackend, HttpBackend, MockBackend, MockRule, API_KEY_ENV,
};
pub use cache::{prompt_hash, CacheEntry, ClassificationCache};
pub use prompt::{
    build_prompt, describe_poi, observation_section, CategoryDescription, PromptSpec, PromptSpecError,
    CATEGORY_HEADER, HINT_HEADER, OBSERVATION_HEADER, TASK_HEADER,
};
pub use response::{parse_response, ParseError, ParsedReply, RankedActivity, Top3, PROB_SUM_TOLERANCE};

use crate::poi::{PoiDataset, PoiRecord};

/// Top-3 classification of one POI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiClassification {
    pub poi_id: String,
    pub top3: Top3,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub raw_response: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reordered: bool,
}

impl PoiClassification {
    pub fn from_reply(poi_id: impl Into<String>, raw: impl Into<String>, reply: ParsedReply) -> Self {
        Self {
            poi_id: poi_id.into(),
            top3: reply.top3,
            raw_response: raw.into(),
            reordered: reply.reordered,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("POI {poi_id}: backend unavailable after {attempts} attempt(s): {source}")]
    BackendUnavailable {
        poi_id: String,
        attempts: u32,
        #[source]
        source: BackendError,
    },
    #[error("POI {poi_id}: {source}")]
    Parse {
        poi_id: String,
        #[source]
        source: ParseError,
    },
    #[error("POI {poi_id}: cache write failed: {source}")]
    Cache {
        poi_id: String,
        #[source]
        source: io::Error,
    },
}

impl ClassifyError {
    pub fn poi_id(&self) -> &str {
        match self {
            ClassifyError::BackendUnavailable { poi_id, .. }
            | ClassifyError::Parse { poi_id, .. }
            | ClassifyError::Cache { poi_id, .. } => poi_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyOptions {
    /// Retries after the first attempt for transient failures.
    pub max_retries: u32,
    /// First backoff; doubled on every further retry.
    pub initial_backoff_ms: u64,
    pub concurrency: usize,
    /// Batch aborts when more than this fraction of POIs fail.
    pub max_failure_fraction: f64,
    /// Upper bound on submissions per second across all workers.
    pub rate_limit_per_s: Option<f64>,
    /// Divide the returned probabilities by their sum.
    pub renormalize: bool,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff_ms: 500,
            concurrency: 4,
            max_failure_fraction: 0.1,
            rate_limit_per_s: None,
            renormalize: false,
        }
    }
}

#[derive(Debug)]
struct RateLimiter {
    interval: Option<Duration>,
    next: Mutex<Instant>,
}

impl RateLimiter {
    fn new(per_second: Option<f64>) -> Self {
        Self {
            interval: per_second.filter(|r| *r > 0.0).map(|r| Duration::from_secs_f64(1.0 / r)),
            next: Mutex::new(Instant::now()),
        }
    }

    fn wait(&self) {
        let Some(interval) = self.interval else { return };
        let slot = {
            let mut next = self.next.lock().unwrap();
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + interval;
            slot
        };
        let now = Instant::now();
        if slot > now {
            thread::sleep(slot - now);
        }
    }
}

/// Result of classifying one POI.
#[derive(Debug, Clone, PartialEq)]
pub struct Classified {
    pub classification: PoiClassification,
    pub cache_hit: bool,
    pub backend_calls: u32,
    pub retries: u32,
}

#[derive(Debug)]
pub struct BatchFailure {
    pub index: usize,
    pub error: ClassifyError,
}

#[derive(Debug, Default)]
pub struct BatchReport {
    /// Successful classifications in input order.
    pub classifications: Vec<PoiClassification>,
    pub failures: Vec<BatchFailure>,
    pub backend_calls: u64,
    pub cache_hits: u64,
    pub retries: u64,
    /// POIs never attempted because the batch was cancelled.
    pub skipped: usize,
}

impl BatchReport {
    pub fn interrupted(&self) -> bool {
        self.skipped > 0
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{failed} of {total} POIs failed classification (threshold {threshold})")]
pub struct BatchAborted {
    pub failed: usize,
    pub total: usize,
    pub threshold: f64,
    pub report: BatchReport,
}

/// Prompt spec, backend and cache bundled for repeated classification.
pub struct Classifier<B> {
    spec: PromptSpec,
    backend: B,
    cache: ClassificationCache,
    options: ClassifyOptions,
    limiter: RateLimiter,
}

impl<B: Backend> Classifier<B> {
    pub fn new(spec: PromptSpec, backend: B, cache: ClassificationCache, options: ClassifyOptions) -> Self {
        let limiter = RateLimiter::new(options.rate_limit_per_s);
        Self {
            spec,
            backend,
            cache,
            options,
            limiter,
        }
    }

    pub fn cache(&self) -> &ClassificationCache {
        &self.cache
    }

    pub fn into_cache(self) -> ClassificationCache {
        self.cache
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    fn finish(&self, poi: &PoiRecord, raw: String, reply: ParsedReply) -> PoiClassification {
        let mut c = PoiClassification::from_reply(poi.id.clone(), raw, reply);
        if self.options.renormalize {
            c.top3 = c.top3.renormalized();
        }
        c
    }

    pub fn classify_poi(&self, poi: &PoiRecord) -> Result<Classified, ClassifyError> {
        let prompt = build_prompt(&self.spec, poi);
        let hash = prompt_hash(&prompt);
        if let Some(raw) = self.cache.get(&hash) {
            match parse_response(&raw) {
                Ok(reply) => {
                    return Ok(Classified {
                        classification: self.finish(poi, raw, reply),
                        cache_hit: true,
                        backend_calls: 0,
                        retries: 0,
                    })
                }
                Err(e) => log::warn!("ignoring unparseable cached reply for {}: {e}", poi.id),
            }
        }

        let mut attempts = 0u32;
        let raw = loop {
            self.limiter.wait();
            attempts += 1;
            match self.backend.submit(&prompt) {
                Ok(text) => break text,
                Err(e) if e.is_transient() && attempts <= self.options.max_retries => {
                    let backoff = self.options.initial_backoff_ms.saturating_mul(1 << (attempts - 1).min(16));
                    log::debug!("POI {}: {e}; retrying in {backoff} ms", poi.id);
                    thread::sleep(Duration::from_millis(backoff));
                }
                Err(source) => {
                    return Err(ClassifyError::BackendUnavailable {
                        poi_id: poi.id.clone(),
                        attempts,
                        source,
                    })
                }
            }
        };
        let reply = parse_response(&raw).map_err(|source| ClassifyError::Parse {
            poi_id: poi.id.clone(),
            source,
        })?;
        if reply.reordered {
            log::warn!("POI {}: reply was out of probability order and has been re-sorted", poi.id);
        }
        self.cache.insert(&hash, &raw).map_err(|source| ClassifyError::Cache {
            poi_id: poi.id.clone(),
            source,
        })?;
        Ok(Classified {
            classification: self.finish(poi, raw, reply),
            cache_hit: false,
            backend_calls: attempts,
            retries: attempts - 1,
        })
    }

    /// Classifies every record with up to `concurrency` submissions in flight.
    /// Output order follows input order. Setting `cancel` stops workers from
    /// taking new POIs; anything already cached is reused on the next run.
    pub fn classify_batch(&self, ds: &PoiDataset, cancel: Option<&AtomicBool>) -> Result<BatchReport, BatchAborted> {
        let records = ds.records();
        let slots: Vec<Mutex<Option<Result<Classified, ClassifyError>>>> =
            records.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.options.concurrency.max(1).min(records.len());
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if cancel.is_some_and(|c| c.load(Ordering::SeqCst)) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(poi) = records.get(i) else { break };
                    let result = self.classify_poi(poi);
                    *slots[i].lock().unwrap() = Some(result);
                });
            }
        });

        let mut report = BatchReport::default();
        for (index, slot) in slots.into_iter().enumerate() {
            match slot.into_inner().unwrap() {
                Some(Ok(c)) => {
                    report.backend_calls += u64::from(c.backend_calls);
                    report.retries += u64::from(c.retries);
                    report.cache_hits += u64::from(c.cache_hit);
                    report.classifications.push(c.classification);
                }
                Some(Err(error)) => {
                    if let ClassifyError::BackendUnavailable { attempts, .. } = &error {
                        report.backend_calls += u64::from(*attempts);
                    }
                    report.failures.push(BatchFailure { index, error });
                }
                None => report.skipped += 1,
            }
        }
        let total = records.len();
        let failed = report.failures.len();
        if total > 0 && failed as f64 > self.options.max_failure_fraction * total as f64 {
            return Err(BatchAborted {
                failed,
                total,
                threshold: self.options.max_failure_fraction,
                report,
            });
        }
        Ok(report)
    }
}

/// `{poi_id, top3:[{code, prob}...]}` per line.
pub fn write_classifications<W: io::Write>(items: &[PoiClassification], mut w: W) -> io::Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        poi_id: &'a str,
        top3: &'a Top3,
    }
    for c in items {
        serde_json::to_writer(&mut w, &Line {
            poi_id: &c.poi_id,
            top3: &c.top3,
        })?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_classifications<R: io::BufRead>(r: R) -> Result<Vec<PoiClassification>, crate::JsonLinesError> {
    crate::read_json_lines(r)
}
