use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{KgError, Relation};
use crate::ingest::{AppRecord, Attribute, ContentRating};

/// Maps a value to the number of edges at or below it, so `edges.len() + 1`
/// groups. Edges are the lower bounds of groups 1, 2, ...
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalMap {
    pub edges: Vec<f64>,
}

impl IntervalMap {
    pub fn new(edges: Vec<f64>) -> Self {
        debug_assert!(edges.windows(2).all(|w| w[0] < w[1]));
        IntervalMap { edges }
    }

    pub fn groups(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn label(&self, value: f64) -> u16 {
        self.edges.partition_point(|&e| e <= value) as u16
    }
}

/// Equal-frequency bins fitted on observed values. `edges` holds the fitted
/// quantiles including minimum and maximum; bins are `[e0, e1], (e1, e2], ...`.
/// Tied quantiles are merged, so `labels` may be below `requested`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileMap {
    pub requested: usize,
    pub edges: Vec<f64>,
    pub labels: usize,
}

impl QuantileMap {
    pub fn fit(values: &[f64], requested: usize) -> QuantileMap {
        assert!(!values.is_empty() && requested >= 1);
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut edges: Vec<f64> = (0..=requested)
            .map(|i| percentile_sorted(&sorted, i as f64 / requested as f64))
            .collect();
        edges.dedup();
        let labels = (edges.len() - 1).max(1);
        QuantileMap {
            requested,
            edges,
            labels,
        }
    }

    /// Interior cut points (between consecutive bins).
    pub fn cuts(&self) -> &[f64] {
        if self.edges.len() < 2 {
            &[]
        } else {
            &self.edges[1..self.edges.len() - 1]
        }
    }

    pub fn label(&self, value: f64) -> u16 {
        self.cuts().partition_point(|&c| c < value) as u16
    }
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ReleasedGroups {
    /// Within 1..=12 months, then after a year: 13 groups.
    #[default]
    Monthly13,
    /// Coarser 7-group variant: 1, 2, 3, 6, 9, 12 months, then older.
    Coarse7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SizeGroups {
    /// `(0-1)`, `(1-20000)`, ..., `(100000-)` KB: 7 groups.
    #[default]
    Bins7,
    /// Coarser 5-group variant.
    Bins5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BinningOptions {
    pub released: ReleasedGroups,
    pub size: SizeGroups,
}

impl BinningOptions {
    fn released_map(self) -> IntervalMap {
        match self.released {
            ReleasedGroups::Monthly13 => {
                let mut edges: Vec<f64> = (1..12).map(|m| 30.0 * m as f64).collect();
                edges.push(365.0);
                IntervalMap::new(edges)
            }
            ReleasedGroups::Coarse7 => IntervalMap::new(vec![30.0, 60.0, 90.0, 180.0, 270.0, 365.0]),
        }
    }

    fn size_map(self) -> IntervalMap {
        match self.size {
            SizeGroups::Bins7 => {
                IntervalMap::new(vec![1.0, 20000.0, 40000.0, 60000.0, 80000.0, 100000.0])
            }
            SizeGroups::Bins5 => IntervalMap::new(vec![1.0, 20000.0, 60000.0, 100000.0]),
        }
    }
}

/// Fitted discretization for all twelve relations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub snapshot_date: NaiveDate,
    pub options: BinningOptions,
    pub content_rating: BTreeMap<String, u16>,
    /// Genre ids after collapsing every `GAME_*` subgenre to `GAME`.
    pub genre: BTreeMap<String, u16>,
    pub installs: IntervalMap,
    pub size_kb: IntervalMap,
    pub released_days: IntervalMap,
    pub ratings: QuantileMap,
    pub reviews: QuantileMap,
    pub score_text: QuantileMap,
}

impl BinningSpec {
    pub fn group_count(&self, relation: Relation) -> usize {
        match relation {
            Relation::AdSimilar | Relation::EcSimilar | Relation::IapSimilar | Relation::VSimilar => 2,
            Relation::CrSimilar => self.content_rating.len(),
            Relation::GidSimilar => self.genre.len(),
            Relation::InsSimilar => self.installs.groups(),
            Relation::RtgSimilar => self.ratings.labels,
            Relation::RelSimilar => self.released_days.groups(),
            Relation::RevSimilar => self.reviews.labels,
            Relation::StSimilar => self.score_text.labels,
            Relation::SSimilar => self.size_kb.groups(),
        }
    }
}

fn genre_key(genre: &str) -> String {
    let upper = genre.trim().to_ascii_uppercase();
    if upper.starts_with("GAME") {
        "GAME".to_string()
    } else {
        upper
    }
}

/// Numeric lower bound of a store install bucket such as `"1,000+"`.
pub fn parse_installs(value: &str) -> Result<u64, KgError> {
    let digits: String = value
        .trim()
        .trim_end_matches('+')
        .chars()
        .filter(|c| *c != ',')
        .collect();
    digits.parse().map_err(|_| KgError::BadValue {
        attribute: Attribute::Installs,
        value: value.to_string(),
    })
}

/// Store size string in KB (1M = 1024 KB). Sizes without a specification
/// ("Varies with device") normalize to 0.
pub fn parse_size_kb(value: &str) -> Result<f64, KgError> {
    let bad = || KgError::BadValue {
        attribute: Attribute::Size,
        value: value.to_string(),
    };
    let v = value.trim();
    if v.eq_ignore_ascii_case("varies with device") {
        return Ok(0.0);
    }
    let (number, scale) = match v.chars().last().ok_or_else(bad)? {
        'k' | 'K' => (&v[..v.len() - 1], 1.0),
        'm' | 'M' => (&v[..v.len() - 1], 1024.0),
        'g' | 'G' => (&v[..v.len() - 1], 1024.0 * 1024.0),
        _ => (v, 1.0),
    };
    let n: f64 = number.trim().replace(',', "").parse().map_err(|_| bad())?;
    if !n.is_finite() || n < 0.0 {
        return Err(bad());
    }
    Ok(n * scale)
}

fn quantile_values(
    corpus: &[AppRecord],
    attribute: Attribute,
    get: impl Fn(&AppRecord) -> Option<f64>,
    labels: usize,
) -> Result<QuantileMap, KgError> {
    let values: Vec<f64> = corpus.iter().filter_map(get).collect();
    if values.is_empty() {
        return Err(KgError::EmptyAttribute(attribute));
    }
    Ok(QuantileMap::fit(&values, labels))
}

/// Fit the default binning (13 release groups, 7 size bins).
pub fn fit_binning(corpus: &[AppRecord], snapshot_date: NaiveDate) -> Result<BinningSpec, KgError> {
    fit_binning_with(corpus, snapshot_date, BinningOptions::default())
}

pub fn fit_binning_with(
    corpus: &[AppRecord],
    snapshot_date: NaiveDate,
    options: BinningOptions,
) -> Result<BinningSpec, KgError> {
    if corpus.is_empty() {
        return Err(KgError::EmptyCorpus);
    }
    let content_rating = ContentRating::ALL
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str().to_string(), i as u16))
        .collect();
    let genre = [("PHOTOGRAPHY", 0), ("PRODUCTIVITY", 1), ("GAME", 2)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    Ok(BinningSpec {
        snapshot_date,
        options,
        content_rating,
        genre,
        installs: IntervalMap::new(vec![1000.0, 100_000.0, 10_000_000.0]),
        size_kb: options.size_map(),
        released_days: options.released_map(),
        ratings: quantile_values(corpus, Attribute::Ratings, |r| r.ratings.map(|v| v as f64), 5)?,
        reviews: quantile_values(corpus, Attribute::Reviews, |r| r.reviews.map(|v| v as f64), 5)?,
        score_text: quantile_values(corpus, Attribute::ScoreText, |r| r.score_text, 8)?,
    })
}

/// Per-relation bin labels of one app; `None` where the source attribute is missing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityFeatures {
    pub app_id: String,
    pub bins: [Option<u16>; 12],
}

impl EntityFeatures {
    pub fn new(app_id: impl Into<String>) -> Self {
        EntityFeatures {
            app_id: app_id.into(),
            bins: [None; 12],
        }
    }

    pub fn bin(&self, relation: Relation) -> Option<u16> {
        self.bins[relation.index()]
    }
}

fn bool_label(v: bool) -> u16 {
    u16::from(v)
}

pub fn apply_binning(record: &AppRecord, spec: &BinningSpec) -> Result<EntityFeatures, KgError> {
    let mut features = EntityFeatures::new(record.app_id.clone());
    let bins = &mut features.bins;
    bins[Relation::AdSimilar.index()] = record.ad_supported.map(bool_label);
    bins[Relation::EcSimilar.index()] = record.editors_choice.map(bool_label);
    bins[Relation::IapSimilar.index()] = record.offers_iap.map(bool_label);
    bins[Relation::VSimilar.index()] = record.video.map(bool_label);

    if let Some(rating) = record.content_rating {
        let label = spec.content_rating.get(rating.as_str()).ok_or_else(|| {
            KgError::UnknownCategory {
                attribute: Attribute::ContentRating,
                value: rating.to_string(),
            }
        })?;
        bins[Relation::CrSimilar.index()] = Some(*label);
    }
    if let Some(genre) = &record.genre_id {
        let label = spec
            .genre
            .get(&genre_key(genre))
            .ok_or_else(|| KgError::UnknownCategory {
                attribute: Attribute::GenreId,
                value: genre.clone(),
            })?;
        bins[Relation::GidSimilar.index()] = Some(*label);
    }
    if let Some(installs) = &record.installs {
        bins[Relation::InsSimilar.index()] = Some(spec.installs.label(parse_installs(installs)? as f64));
    }
    if let Some(size) = &record.size {
        bins[Relation::SSimilar.index()] = Some(spec.size_kb.label(parse_size_kb(size)?));
    }
    if let Some(released) = record.released {
        let days = (spec.snapshot_date - released).num_days().max(0);
        bins[Relation::RelSimilar.index()] = Some(spec.released_days.label(days as f64));
    }
    bins[Relation::RtgSimilar.index()] = record.ratings.map(|v| spec.ratings.label(v as f64));
    bins[Relation::RevSimilar.index()] = record.reviews.map(|v| spec.reviews.label(v as f64));
    bins[Relation::StSimilar.index()] = record.score_text.map(|v| spec.score_text.label(v));
    Ok(features)
}

/// Synthetic features with planted structure: `count` apps in consecutive
/// clusters of `cluster_size`, every attribute's bin equal to the cluster id.
pub fn planted_cluster_features(count: usize, cluster_size: usize) -> Vec<EntityFeatures> {
    let cluster_size = cluster_size.max(1);
    (0..count)
        .map(|i| EntityFeatures {
            app_id: format!("planted.app{i:05}"),
            bins: [Some((i / cluster_size) as u16); 12],
        })
        .collect()
}
