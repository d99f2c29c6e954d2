//! Batch retrieval of directional street-view images with placeholder
//! detection and a resumable availability manifest.
//!
//! Requests go to the static street-view endpoint (or any base-URL override,
//! which is how tests run offline). Completed files are content-hashed into
//! a CSV manifest; a rerun skips every (point, heading) whose file still
//! matches its recorded hash, so the step can be interrupted at any time.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geom::SamplePoint;

pub const MANIFEST_HEADER: [&str; 5] = ["point_id", "heading_deg", "file_path", "status", "sha256"];

#[derive(Debug, Error)]
pub enum ImageryError {
    #[error("street-view API key missing (set the key before fetching)")]
    MissingApiKey,
    #[error("invalid camera config: {0}")]
    InvalidCamera(String),
    #[error("image bytes do not decode: {0}")]
    Undecodable(String),
    #[error("quota exhausted (HTTP 429); manifest flushed, rerun to resume")]
    QuotaExhausted,
    #[error("manifest line {line}: {message}")]
    BadManifest { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Camera parameters of a street-view request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub headings_deg: Vec<f64>,
    pub pitch_deg: f64,
    pub fov_deg: f64,
    pub image_width: u32,
    pub image_height: u32,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            headings_deg: vec![0.0, 90.0, 180.0, 270.0],
            pitch_deg: 0.0,
            fov_deg: 90.0,
            image_width: 640,
            image_height: 640,
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<(), ImageryError> {
        if self.headings_deg.is_empty() {
            return Err(ImageryError::InvalidCamera("no headings configured".into()));
        }
        for h in &self.headings_deg {
            if !(0.0..360.0).contains(h) {
                return Err(ImageryError::InvalidCamera(format!(
                    "heading {h}° outside [0, 360)"
                )));
            }
        }
        if !(10.0..=120.0).contains(&self.fov_deg) {
            return Err(ImageryError::InvalidCamera(format!(
                "fov {}° outside [10, 120]",
                self.fov_deg
            )));
        }
        if self.image_width == 0 || self.image_height == 0 || self.image_width > 640 || self.image_height > 640 {
            return Err(ImageryError::InvalidCamera(format!(
                "image size {}x{} outside the standard-tier limit 640x640",
                self.image_width, self.image_height
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageStatus {
    Available,
    Placeholder,
    FetchFailed,
}

impl ImageStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            ImageStatus::Available => "available",
            ImageStatus::Placeholder => "placeholder",
            ImageStatus::FetchFailed => "fetch_failed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "available" => Some(ImageStatus::Available),
            "placeholder" => Some(ImageStatus::Placeholder),
            "fetch_failed" => Some(ImageStatus::FetchFailed),
            _ => None,
        }
    }
}

/// One directional capture attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub point_id: String,
    pub heading_deg: f64,
    /// Relative to the run's image directory; empty for failed fetches.
    pub file_path: String,
    pub status: ImageStatus,
    pub sha256: String,
}

/// Compact number formatting shared by URLs, file names and CSV columns:
/// integral values print without a decimal part ("90", "-10"), everything
/// else in shortest round-trip form ("22.5").
pub fn fmt_compact(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// Request URL with the query parameters in fixed order
/// (size, location, heading, pitch, fov, key) so manifests are reproducible.
/// The location is printed at 6-decimal fixed precision, lat first.
pub fn build_request(
    base_url: &str,
    point: &SamplePoint,
    heading_deg: f64,
    cam: &CameraConfig,
    api_key: &str,
) -> Result<String, ImageryError> {
    if api_key.is_empty() {
        return Err(ImageryError::MissingApiKey);
    }
    Ok(format!(
        "{}?size={}x{}&location={:.6},{:.6}&heading={}&pitch={}&fov={}&key={}",
        base_url,
        cam.image_width,
        cam.image_height,
        point.position.lat,
        point.position.lon,
        fmt_compact(heading_deg),
        fmt_compact(cam.pitch_deg),
        fmt_compact(cam.fov_deg),
        api_key
    ))
}

/// Replace the key parameter value, for anything that gets logged.
pub fn redact_key(url: &str) -> String {
    match url.find("key=") {
        Some(i) => {
            let end = url[i..].find('&').map(|j| i + j).unwrap_or(url.len());
            format!("{}key=REDACTED{}", &url[..i], &url[end..])
        }
        None => url.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaceholderVerdict {
    Placeholder,
    Genuine,
}

/// Classify an image as a provider "no imagery" placeholder when its modal
/// pixel value (per-channel tuple after decoding) covers at least
/// `dominance_threshold` of all pixels.
pub fn detect_placeholder(
    bytes: &[u8],
    dominance_threshold: f64,
) -> Result<PlaceholderVerdict, ImageryError> {
    let dominance = modal_dominance(bytes)?;
    if dominance >= dominance_threshold {
        Ok(PlaceholderVerdict::Placeholder)
    } else {
        Ok(PlaceholderVerdict::Genuine)
    }
}

/// Fraction of pixels covered by the modal RGB value.
pub fn modal_dominance(bytes: &[u8]) -> Result<f64, ImageryError> {
    let img = image::load_from_memory(bytes)
        .map_err(|e| ImageryError::Undecodable(e.to_string()))?
        .to_rgb8();
    let total = (img.width() as u64) * (img.height() as u64);
    if total == 0 {
        return Err(ImageryError::Undecodable("zero-size image".into()));
    }
    let mut counts: HashMap<[u8; 3], u64> = HashMap::new();
    for pixel in img.pixels() {
        *counts.entry(pixel.0).or_default() += 1;
    }
    let max = counts.values().copied().max().unwrap_or(0);
    Ok(max as f64 / total as f64)
}

#[derive(Debug, Clone)]
pub struct FetchConfig {
    pub base_url: String,
    pub api_key: String,
    pub dominance_threshold: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct FetchLimits {
    pub requests_per_second: f64,
    pub max_retries: u32,
    pub concurrency: usize,
}

impl Default for FetchLimits {
    fn default() -> Self {
        FetchLimits {
            requests_per_second: 10.0,
            max_retries: 3,
            concurrency: 8,
        }
    }
}

/// Outcome of a completed batch.
#[derive(Debug, Clone)]
pub struct FetchOutcome {
    pub records: Vec<ImageRecord>,
    /// Points for which every configured heading is available.
    pub points_all_headings: usize,
    /// Points without a single available image.
    pub points_no_coverage: usize,
    /// (point, heading) pairs reused from the existing manifest.
    pub skipped: usize,
}

struct Task {
    index: usize,
    point_id: String,
    heading_deg: f64,
    url: String,
    rel_path: String,
}

/// Download one image per (point, heading), resumably.
///
/// Fetch failures are retried per `limits`, then recorded as `fetch_failed`.
/// Manifest hits whose file still matches the recorded hash are skipped. The
/// manifest is appended row-by-row while the batch runs and rewritten in
/// canonical (point, heading) order at the end, so an interrupted run
/// resumes to the same final bytes.
pub fn fetch_batch(
    points: &[SamplePoint],
    cam: &CameraConfig,
    cfg: &FetchConfig,
    limits: &FetchLimits,
    image_root: &Path,
    manifest_path: &Path,
) -> Result<FetchOutcome, ImageryError> {
    cam.validate()?;
    if cfg.api_key.is_empty() {
        return Err(ImageryError::MissingApiKey);
    }

    let existing: HashMap<(String, String), ImageRecord> = if manifest_path.exists() {
        read_manifest(manifest_path)?
            .into_iter()
            .map(|r| ((r.point_id.clone(), fmt_compact(r.heading_deg)), r))
            .collect()
    } else {
        HashMap::new()
    };

    let mut records: Vec<Option<ImageRecord>> =
        vec![None; points.len() * cam.headings_deg.len()];
    let mut pending: Vec<Task> = Vec::new();
    let mut skipped = 0usize;

    for (pi, point) in points.iter().enumerate() {
        for (hi, heading) in cam.headings_deg.iter().enumerate() {
            let index = pi * cam.headings_deg.len() + hi;
            let key = (point.point_id.clone(), fmt_compact(*heading));
            if let Some(prev) = existing.get(&key) {
                if prev.status != ImageStatus::FetchFailed
                    && file_matches(image_root, &prev.file_path, &prev.sha256)
                {
                    records[index] = Some(prev.clone());
                    skipped += 1;
                    continue;
                }
            }
            let rel_path = format!("{}/{}.jpg", point.point_id, fmt_compact(*heading));
            pending.push(Task {
                index,
                point_id: point.point_id.clone(),
                heading_deg: *heading,
                url: build_request(&cfg.base_url, point, *heading, cam, &cfg.api_key)?,
                rel_path,
            });
        }
    }

    let quota_hit = AtomicBool::new(false);
    let next_task = AtomicUsize::new(0);
    let bucket = Mutex::new(TokenBucket::new(limits.requests_per_second));
    let (tx, rx) = mpsc::channel::<(usize, ImageRecord)>();

    let agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(60)))
        .build()
        .new_agent();

    std::thread::scope(|scope| {
        let workers = limits.concurrency.max(1).min(pending.len().max(1));
        for _ in 0..workers {
            let tx = tx.clone();
            let agent = agent.clone();
            let pending = &pending;
            let quota_hit = &quota_hit;
            let next_task = &next_task;
            let bucket = &bucket;
            scope.spawn(move || loop {
                if quota_hit.load(Ordering::SeqCst) {
                    break;
                }
                let i = next_task.fetch_add(1, Ordering::SeqCst);
                let Some(task) = pending.get(i) else { break };
                match fetch_one(&agent, task, cfg, limits, image_root, bucket, quota_hit) {
                    Some(r) => {
                        if tx.send((task.index, r)).is_err() {
                            break;
                        }
                    }
                    None => break, // quota
                }
            });
        }
        drop(tx);

        // single manifest writer: append as results arrive, for crash safety
        let mut appender = ManifestAppender::open(manifest_path)?;
        for (index, record) in rx {
            appender.append(&record)?;
            records[index] = Some(record);
        }
        appender.flush()?;
        Ok::<(), ImageryError>(())
    })?;

    // canonical rewrite in (point, heading) order
    let final_records: Vec<ImageRecord> = records.into_iter().flatten().collect();
    write_manifest(manifest_path, &final_records)?;

    if quota_hit.load(Ordering::SeqCst) {
        return Err(ImageryError::QuotaExhausted);
    }

    let per_heading = cam.headings_deg.len();
    let mut points_all_headings = 0usize;
    let mut points_no_coverage = 0usize;
    for chunk in final_records.chunks(per_heading) {
        let available = chunk
            .iter()
            .filter(|r| r.status == ImageStatus::Available)
            .count();
        if available == per_heading {
            points_all_headings += 1;
        }
        if available == 0 {
            points_no_coverage += 1;
        }
    }

    Ok(FetchOutcome {
        records: final_records,
        points_all_headings,
        points_no_coverage,
        skipped,
    })
}

fn fetch_one(
    agent: &ureq::Agent,
    task: &Task,
    cfg: &FetchConfig,
    limits: &FetchLimits,
    image_root: &Path,
    bucket: &Mutex<TokenBucket>,
    quota_hit: &AtomicBool,
) -> Option<ImageRecord> {
    let failed = || ImageRecord {
        point_id: task.point_id.clone(),
        heading_deg: task.heading_deg,
        file_path: String::new(),
        status: ImageStatus::FetchFailed,
        sha256: String::new(),
    };

    let mut attempt = 0u32;
    let bytes = loop {
        wait_for_token(bucket);
        match agent.get(&task.url).call() {
            Ok(mut resp) => match resp.body_mut().read_to_vec() {
                Ok(bytes) => break bytes,
                Err(e) => {
                    log::warn!("body read failed for {}: {e}", redact_key(&task.url));
                }
            },
            Err(ureq::Error::StatusCode(429)) => {
                quota_hit.store(true, Ordering::SeqCst);
                return None;
            }
            Err(ureq::Error::StatusCode(code)) if !(500..600).contains(&code) => {
                log::warn!("http {code} for {}", redact_key(&task.url));
                return Some(failed());
            }
            Err(e) => {
                log::warn!("attempt {attempt} failed for {}: {e}", redact_key(&task.url));
            }
        }
        if attempt >= limits.max_retries {
            return Some(failed());
        }
        std::thread::sleep(Duration::from_millis(100 * 2u64.pow(attempt)));
        attempt += 1;
    };

    let abs_path = image_root.join(&task.rel_path);
    if let Some(parent) = abs_path.parent() {
        if std::fs::create_dir_all(parent).is_err() {
            return Some(failed());
        }
    }
    // no partial files: write to a temp name, rename on completion
    let tmp = abs_path.with_extension("jpg.tmp");
    if std::fs::write(&tmp, &bytes).and_then(|()| std::fs::rename(&tmp, &abs_path)).is_err() {
        return Some(failed());
    }

    let status = match image::load_from_memory(&bytes) {
        Ok(img) => {
            let expected = cfg_size_of(&task.url);
            let size_ok = expected
                .map(|(w, h)| img.width() == w && img.height() == h)
                .unwrap_or(true);
            if !size_ok {
                let _ = std::fs::remove_file(&abs_path);
                return Some(failed());
            }
            match detect_placeholder(&bytes, cfg.dominance_threshold) {
                Ok(PlaceholderVerdict::Placeholder) => ImageStatus::Placeholder,
                Ok(PlaceholderVerdict::Genuine) => ImageStatus::Available,
                Err(_) => {
                    let _ = std::fs::remove_file(&abs_path);
                    return Some(failed());
                }
            }
        }
        Err(_) => {
            let _ = std::fs::remove_file(&abs_path);
            return Some(failed());
        }
    };

    Some(ImageRecord {
        point_id: task.point_id.clone(),
        heading_deg: task.heading_deg,
        file_path: task.rel_path.clone(),
        status,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Parse `size=WxH` back out of the request URL.
fn cfg_size_of(url: &str) -> Option<(u32, u32)> {
    let i = url.find("size=")?;
    let rest = &url[i + 5..];
    let end = rest.find('&').unwrap_or(rest.len());
    let (w, h) = rest[..end].split_once('x')?;
    Some((w.parse().ok()?, h.parse().ok()?))
}

fn file_matches(image_root: &Path, rel_path: &str, sha256: &str) -> bool {
    if rel_path.is_empty() || sha256.is_empty() {
        return false;
    }
    match std::fs::read(image_root.join(rel_path)) {
        Ok(bytes) => hex::encode(Sha256::digest(&bytes)) == sha256,
        Err(_) => false,
    }
}

struct TokenBucket {
    rate: f64,
    tokens: f64,
    last: Instant,
}

impl TokenBucket {
    fn new(rate: f64) -> Self {
        TokenBucket {
            rate: rate.max(0.001),
            tokens: 1.0,
            last: Instant::now(),
        }
    }

    /// Time to wait before the caller may proceed; refills on the fly.
    fn take(&mut self) -> Duration {
        let now = Instant::now();
        self.tokens = (self.tokens + now.duration_since(self.last).as_secs_f64() * self.rate)
            .min(self.rate.max(1.0));
        self.last = now;
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            Duration::ZERO
        } else {
            let missing = 1.0 - self.tokens;
            self.tokens = 0.0;
            Duration::from_secs_f64(missing / self.rate)
        }
    }
}

fn wait_for_token(bucket: &Mutex<TokenBucket>) {
    let wait = bucket.lock().expect("token bucket lock").take();
    if !wait.is_zero() {
        std::thread::sleep(wait);
    }
}

struct ManifestAppender {
    writer: csv::Writer<std::fs::File>,
}

impl ManifestAppender {
    fn open(path: &Path) -> Result<Self, ImageryError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let is_new = !path.exists() || std::fs::metadata(path)?.len() == 0;
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if is_new {
            writer.write_record(MANIFEST_HEADER)?;
        }
        Ok(ManifestAppender { writer })
    }

    fn append(&mut self, r: &ImageRecord) -> Result<(), ImageryError> {
        self.writer.write_record([
            r.point_id.as_str(),
            &fmt_compact(r.heading_deg),
            r.file_path.as_str(),
            r.status.as_str(),
            r.sha256.as_str(),
        ])?;
        self.writer.flush()?;
        Ok(())
    }

    fn flush(&mut self) -> Result<(), ImageryError> {
        self.writer.flush()?;
        Ok(())
    }
}

/// Atomic canonical rewrite.
pub fn write_manifest(path: &Path, records: &[ImageRecord]) -> Result<(), ImageryError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("csv.tmp");
    {
        let mut writer = csv::Writer::from_path(&tmp)?;
        writer.write_record(MANIFEST_HEADER)?;
        for r in records {
            writer.write_record([
                r.point_id.as_str(),
                &fmt_compact(r.heading_deg),
                r.file_path.as_str(),
                r.status.as_str(),
                r.sha256.as_str(),
            ])?;
        }
        writer.flush()?;
        writer.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ImageRecord>, ImageryError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    {
        let header = reader.headers()?;
        if header != MANIFEST_HEADER.as_slice() {
            return Err(ImageryError::BadManifest {
                line: 1,
                message: format!("unexpected header {header:?}"),
            });
        }
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row?;
        if row.len() != 5 {
            return Err(ImageryError::BadManifest {
                line,
                message: format!("expected 5 columns, got {}", row.len()),
            });
        }
        let heading_deg: f64 = row[1].parse().map_err(|_| ImageryError::BadManifest {
            line,
            message: format!("bad heading {:?}", &row[1]),
        })?;
        let status = ImageStatus::parse(&row[3]).ok_or_else(|| ImageryError::BadManifest {
            line,
            message: format!("bad status {:?}", &row[3]),
        })?;
        out.push(ImageRecord {
            point_id: row[0].to_string(),
            heading_deg,
            file_path: row[2].to_string(),
            status,
            sha256: row[4].to_string(),
        });
    }
    Ok(out)
}
