//! App metadata records: line-delimited JSON parsing, validation and a
//! seeded synthetic generator used in place of a scraped store corpus.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("duplicate app id `{0}`")]
    DuplicateId(String),
    #[error("input is not valid UTF-8: {0}")]
    Encoding(#[from] std::str::Utf8Error),
    #[error("failed to serialize record `{id}`: {source}")]
    Serialize {
        id: String,
        source: serde_json::Error,
    },
    #[error("invalid synthetic config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContentRating {
    #[serde(rename = "Everyone")]
    Everyone,
    #[serde(rename = "Teen")]
    Teen,
    #[serde(rename = "Everyone 10+")]
    Everyone10Plus,
    #[serde(rename = "Mature 17+")]
    Mature17Plus,
}

impl ContentRating {
    pub const ALL: [ContentRating; 4] = [
        ContentRating::Everyone,
        ContentRating::Teen,
        ContentRating::Everyone10Plus,
        ContentRating::Mature17Plus,
    ];

    /// Store-formatted label, e.g. `"Everyone 10+"`.
    pub fn as_str(self) -> &'static str {
        match self {
            ContentRating::Everyone => "Everyone",
            ContentRating::Teen => "Teen",
            ContentRating::Everyone10Plus => "Everyone 10+",
            ContentRating::Mature17Plus => "Mature 17+",
        }
    }
}

impl fmt::Display for ContentRating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One scraped app with the thirteen raw store attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AppRecord {
    pub app_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ad_supported: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_rating: Option<ContentRating>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub editors_choice: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genre_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub installs: Option<String>,
    #[serde(default, rename = "offersIAP", skip_serializing_if = "Option::is_none")]
    pub offers_iap: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratings: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub released: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reviews: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_text: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video: Option<bool>,
}

impl AppRecord {
    /// A record carrying only its id.
    pub fn bare(app_id: impl Into<String>) -> Self {
        AppRecord {
            app_id: app_id.into(),
            ad_supported: None,
            content_rating: None,
            editors_choice: None,
            genre_id: None,
            installs: None,
            offers_iap: None,
            ratings: None,
            released: None,
            reviews: None,
            score_text: None,
            size: None,
            video: None,
        }
    }

    pub fn is_present(&self, attribute: Attribute) -> bool {
        match attribute {
            Attribute::AdSupported => self.ad_supported.is_some(),
            Attribute::ContentRating => self.content_rating.is_some(),
            Attribute::EditorsChoice => self.editors_choice.is_some(),
            Attribute::GenreId => self.genre_id.is_some(),
            Attribute::Installs => self.installs.is_some(),
            Attribute::OffersIap => self.offers_iap.is_some(),
            Attribute::Ratings => self.ratings.is_some(),
            Attribute::Released => self.released.is_some(),
            Attribute::Reviews => self.reviews.is_some(),
            Attribute::ScoreText => self.score_text.is_some(),
            Attribute::Size => self.size.is_some(),
            Attribute::Video => self.video.is_some(),
        }
    }
}

/// The twelve optional attributes (everything but the id).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Attribute {
    AdSupported,
    ContentRating,
    EditorsChoice,
    GenreId,
    Installs,
    OffersIap,
    Ratings,
    Released,
    Reviews,
    ScoreText,
    Size,
    Video,
}

impl Attribute {
    pub const ALL: [Attribute; 12] = [
        Attribute::AdSupported,
        Attribute::ContentRating,
        Attribute::EditorsChoice,
        Attribute::GenreId,
        Attribute::Installs,
        Attribute::OffersIap,
        Attribute::Ratings,
        Attribute::Released,
        Attribute::Reviews,
        Attribute::ScoreText,
        Attribute::Size,
        Attribute::Video,
    ];

    /// Field name as it appears in the record format.
    pub fn field_name(self) -> &'static str {
        match self {
            Attribute::AdSupported => "adSupported",
            Attribute::ContentRating => "contentRating",
            Attribute::EditorsChoice => "editorsChoice",
            Attribute::GenreId => "genreId",
            Attribute::Installs => "installs",
            Attribute::OffersIap => "offersIAP",
            Attribute::Ratings => "ratings",
            Attribute::Released => "released",
            Attribute::Reviews => "reviews",
            Attribute::ScoreText => "scoreText",
            Attribute::Size => "size",
            Attribute::Video => "video",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.field_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    JsonLines,
}

/// A line that could not be decoded. Parsing continues past it.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedRecords {
    pub records: Vec<AppRecord>,
    pub errors: Vec<LineError>,
}

/// Parse line-delimited records. Blank lines are skipped; malformed lines are
/// collected in `errors`. A repeated `appId` aborts the parse.
pub fn parse_app_records(bytes: &[u8], format: RecordFormat) -> Result<ParsedRecords, IngestError> {
    let RecordFormat::JsonLines = format;
    let text = std::str::from_utf8(bytes)?;
    let mut out = ParsedRecords::default();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<AppRecord>(line) {
            Ok(record) => {
                if !seen.insert(record.app_id.clone()) {
                    return Err(IngestError::DuplicateId(record.app_id));
                }
                out.records.push(record);
            }
            Err(e) => out.errors.push(LineError {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Serialize records one JSON object per line, LF terminated.
pub fn write_app_records(records: &[AppRecord]) -> Result<Vec<u8>, IngestError> {
    let mut out = Vec::new();
    for record in records {
        serde_json::to_writer(&mut out, record).map_err(|source| IngestError::Serialize {
            id: record.app_id.clone(),
            source,
        })?;
        out.push(b'\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub app_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub record_count: usize,
    pub accepted: usize,
    pub missing: BTreeMap<Attribute, usize>,
    pub rejected: Vec<Rejection>,
}

impl ValidationReport {
    pub fn missing(&self, attribute: Attribute) -> usize {
        self.missing.get(&attribute).copied().unwrap_or(0)
    }

    pub fn is_rejected(&self, app_id: &str) -> bool {
        self.rejected.iter().any(|r| r.app_id == app_id)
    }
}

/// Count missing attributes and list records that break the type invariants.
pub fn validate_records(records: &[AppRecord]) -> ValidationReport {
    let mut missing: BTreeMap<Attribute, usize> = Attribute::ALL.iter().map(|&a| (a, 0)).collect();
    let mut rejected = Vec::new();
    let mut seen = HashSet::new();
    for record in records {
        for attribute in Attribute::ALL {
            if !record.is_present(attribute) {
                *missing.get_mut(&attribute).expect("all attributes seeded") += 1;
            }
        }
        if let Some(reason) = rejection_reason(record, &mut seen) {
            rejected.push(Rejection {
                app_id: record.app_id.clone(),
                reason,
            });
        }
    }
    ValidationReport {
        record_count: records.len(),
        accepted: records.len() - rejected.len(),
        missing,
        rejected,
    }
}

fn rejection_reason<'a>(record: &'a AppRecord, seen: &mut HashSet<&'a str>) -> Option<String> {
    if record.app_id.is_empty() {
        return Some("empty app id".to_string());
    }
    if !seen.insert(record.app_id.as_str()) {
        return Some("duplicate app id".to_string());
    }
    if let Some(score) = record.score_text {
        if !(0.0..=5.0).contains(&score) {
            return Some("score out of range".to_string());
        }
    }
    None
}

/// Store install buckets, smallest first.
pub const INSTALL_BUCKETS: [&str; 21] = [
    "0+",
    "1+",
    "5+",
    "10+",
    "50+",
    "100+",
    "500+",
    "1,000+",
    "5,000+",
    "10,000+",
    "50,000+",
    "100,000+",
    "500,000+",
    "1,000,000+",
    "5,000,000+",
    "10,000,000+",
    "50,000,000+",
    "100,000,000+",
    "500,000,000+",
    "1,000,000,000+",
    "5,000,000,000+",
];

const GAME_SUBGENRES: [&str; 8] = [
    "GAME_ACTION",
    "GAME_ARCADE",
    "GAME_PUZZLE",
    "GAME_CASUAL",
    "GAME_STRATEGY",
    "GAME_SIMULATION",
    "GAME_RACING",
    "GAME_ROLE_PLAYING",
];

/// Parameters of the synthetic corpus. Defaults follow the marginals of the
/// scraped Play Store sample (1793 apps after de-duplication).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub count: usize,
    /// Genre family (`Photography`, `Productivity`, `Games`) to proportion.
    pub category_mix: BTreeMap<String, f64>,
    /// Reference date release ages are measured back from.
    pub reference_date: NaiveDate,
    pub ad_supported_rate: f64,
    pub editors_choice_rate: f64,
    pub offers_iap_rate: f64,
    pub video_rate: f64,
    /// Weights in `ContentRating::ALL` order.
    pub content_rating_weights: [f64; 4],
    /// Fraction of apps released within the last year.
    pub recent_release_rate: f64,
    /// Probability that any optional attribute is dropped.
    pub missing_rate: f64,
    /// Fraction of sizes reported as "Varies with device".
    pub varies_size_rate: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 0,
            count: 1793,
            category_mix: BTreeMap::from([
                ("Photography".to_string(), 509.0 / 1793.0),
                ("Productivity".to_string(), 509.0 / 1793.0),
                ("Games".to_string(), 775.0 / 1793.0),
            ]),
            reference_date: NaiveDate::from_ymd_opt(2023, 3, 1).expect("valid date"),
            ad_supported_rate: 956.0 / 1793.0,
            editors_choice_rate: 44.0 / 1793.0,
            offers_iap_rate: 926.0 / 1793.0,
            video_rate: 726.0 / 1793.0,
            content_rating_weights: [1369.0, 267.0, 113.0, 44.0],
            recent_release_rate: 0.25,
            missing_rate: 0.0,
            varies_size_rate: 0.02,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.category_mix.is_empty() {
            return Err(IngestError::Config("category_mix is empty".into()));
        }
        let total: f64 = self.category_mix.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(IngestError::Config(format!(
                "category proportions sum to {total}, expected 1"
            )));
        }
        for (genre, &p) in &self.category_mix {
            if !(0.0..=1.0).contains(&p) {
                return Err(IngestError::Config(format!("proportion for {genre} is {p}")));
            }
            if genre_family_ids(genre).is_none() {
                return Err(IngestError::Config(format!("unknown genre family `{genre}`")));
            }
        }
        let rates = [
            self.ad_supported_rate,
            self.editors_choice_rate,
            self.offers_iap_rate,
            self.video_rate,
            self.recent_release_rate,
            self.missing_rate,
            self.varies_size_rate,
        ];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(IngestError::Config("rates must lie in [0, 1]".into()));
        }
        if self.content_rating_weights.iter().any(|&w| w < 0.0)
            || self.content_rating_weights.iter().sum::<f64>() <= 0.0
        {
            return Err(IngestError::Config("content rating weights must be nonnegative".into()));
        }
        Ok(())
    }
}

fn genre_family_ids(family: &str) -> Option<&'static [&'static str]> {
    match family {
        "Photography" => Some(&["PHOTOGRAPHY"]),
        "Productivity" => Some(&["PRODUCTIVITY"]),
        "Games" => Some(&GAME_SUBGENRES),
        _ => None,
    }
}

/// Largest-remainder allocation of `count` items over `weights`.
fn allocate(count: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let raw: Vec<f64> = weights.iter().map(|w| w / total * count as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut remaining = count - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        counts[i] += 1;
        remaining -= 1;
    }
    counts
}

fn format_size(kb: f64) -> String {
    if kb < 1024.0 {
        format!("{}k", kb.round().max(1.0) as u64)
    } else {
        format!("{:.1}M", kb / 1024.0)
    }
}

/// Generate `config.count` records. A pure function of `config`.
pub fn generate_synthetic_corpus(config: &SyntheticConfig) -> Result<Vec<AppRecord>, IngestError> {
    config.validate()?;
    if config.count == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Genre and content rating marginals are allocated exactly, then shuffled.
    let families: Vec<(&String, &f64)> = config.category_mix.iter().collect();
    let genre_counts = allocate(
        config.count,
        &families.iter().map(|(_, &p)| p).collect::<Vec<_>>(),
    );
    let mut genres: Vec<&str> = Vec::with_capacity(config.count);
    for ((family, _), n) in families.iter().zip(genre_counts) {
        let ids = genre_family_ids(family).expect("validated");
        genres.extend((0..n).map(|i| ids[i % ids.len()]));
    }
    genres.shuffle(&mut rng);

    let rating_counts = allocate(config.count, &config.content_rating_weights);
    let mut ratings_cr: Vec<ContentRating> = ContentRating::ALL
        .iter()
        .zip(rating_counts)
        .flat_map(|(&c, n)| std::iter::repeat_n(c, n))
        .collect();
    ratings_cr.shuffle(&mut rng);

    let ratings_dist = LogNormal::new(8.9, 3.0).expect("valid lognormal");
    let size_dist = LogNormal::new(10.3, 1.0).expect("valid lognormal");

    let mut records = Vec::with_capacity(config.count);
    for i in 0..config.count {
        let mut record = AppRecord::bare(format!("com.synthetic.app{i:05}"));
        record.genre_id = Some(genres[i].to_string());
        record.content_rating = Some(ratings_cr[i]);
        record.ad_supported = Some(rng.random_bool(config.ad_supported_rate));
        record.editors_choice = Some(rng.random_bool(config.editors_choice_rate));
        record.offers_iap = Some(rng.random_bool(config.offers_iap_rate));
        record.video = Some(rng.random_bool(config.video_rate));

        let ratings = Distribution::<f64>::sample(&ratings_dist, &mut rng).min(5.0e8).floor() as u64;
        let review_share: f64 = rng.random_range(0.05..0.6);
        record.ratings = Some(ratings);
        record.reviews = Some((ratings as f64 * review_share).floor() as u64);
        let bucket = (((ratings as f64 + 1.0).log10() * 2.0).round() as usize + rng.random_range(2..6))
            .min(INSTALL_BUCKETS.len() - 1);
        record.installs = Some(INSTALL_BUCKETS[bucket].to_string());

        let score: f64 = if rng.random_bool(0.03) {
            0.0
        } else {
            (5.0 - rng.random::<f64>().powi(2) * 3.0).clamp(1.0, 5.0)
        };
        record.score_text = Some((score * 10.0).round() / 10.0);

        let age_days: i64 = if rng.random_bool(config.recent_release_rate) {
            rng.random_range(0..365)
        } else {
            rng.random_range(365..4000)
        };
        record.released = Some(config.reference_date - chrono::Duration::days(age_days));

        record.size = Some(if rng.random_bool(config.varies_size_rate) {
            "Varies with device".to_string()
        } else {
            format_size(Distribution::<f64>::sample(&size_dist, &mut rng).min(1.9e6))
        });

        if config.missing_rate > 0.0 {
            drop_attributes(&mut record, config.missing_rate, &mut rng);
        }
        records.push(record);
    }
    Ok(records)
}

fn drop_attributes(record: &mut AppRecord, rate: f64, rng: &mut ChaCha8Rng) {
    for attribute in Attribute::ALL {
        if !rng.random_bool(rate) {
            continue;
        }
        match attribute {
            Attribute::AdSupported => record.ad_supported = None,
            Attribute::ContentRating => record.content_rating = None,
            Attribute::EditorsChoice => record.editors_choice = None,
            Attribute::GenreId => record.genre_id = None,
            Attribute::Installs => record.installs = None,
            Attribute::OffersIap => record.offers_iap = None,
            Attribute::Ratings => record.ratings = None,
            Attribute::Released => record.released = None,
            Attribute::Reviews => record.reviews = None,
            Attribute::ScoreText => record.score_text = None,
            Attribute::Size => record.size = None,
            Attribute::Video => record.video = None,
        }
    }
}
