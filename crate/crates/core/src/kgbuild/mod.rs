//! Attribute binning and construction of the app-app knowledge graph.
//!
//! Every app is an entity. Two apps are linked by relation `r` when they fall
//! in the same bin of the attribute behind `r`; per node and relation only
//! `k` same-bin peers are sampled, which keeps the graph at roughly one
//! outgoing edge per relation per app for `k = 1`.

mod binning;
mod graph;
mod io;
mod split;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use binning::{
    apply_binning, fit_binning, fit_binning_with, parse_installs, parse_size_kb, BinningOptions, BinningSpec,
    EntityFeatures, IntervalMap, planted_cluster_features, QuantileMap, ReleasedGroups, SizeGroups,
};
pub use graph::{build_triples, build_triples_for, EntityId, KnowledgeGraph, RelationId, Triple};
pub use io::{deserialize_kg, deserialize_kg_with_vocab, read_triples, serialize_kg, write_triples};
pub use split::{split_triples, SplitSet};

use crate::ingest::Attribute;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("cannot fit quantiles for `{0}`: attribute missing from every record")]
    EmptyAttribute(Attribute),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("unknown {attribute} value `{value}`")]
    UnknownCategory { attribute: Attribute, value: String },
    #[error("unparseable {attribute} value `{value}`")]
    BadValue { attribute: Attribute, value: String },
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("self-loop on `{entity}` at row {row}")]
    SelfLoop { entity: String, row: usize },
    #[error("malformed row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("invalid split: {0}")]
    Split(String),
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The twelve attribute-similarity relations, numbered as in the relation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    AdSimilar = 0,
    CrSimilar = 1,
    EcSimilar = 2,
    GidSimilar = 3,
    InsSimilar = 4,
    IapSimilar = 5,
    RtgSimilar = 6,
    RelSimilar = 7,
    RevSimilar = 8,
    StSimilar = 9,
    SSimilar = 10,
    VSimilar = 11,
}

impl Relation {
    pub const ALL: [Relation; 12] = [
        Relation::AdSimilar,
        Relation::CrSimilar,
        Relation::EcSimilar,
        Relation::GidSimilar,
        Relation::InsSimilar,
        Relation::IapSimilar,
        Relation::RtgSimilar,
        Relation::RelSimilar,
        Relation::RevSimilar,
        Relation::StSimilar,
        Relation::SSimilar,
        Relation::VSimilar,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Relation> {
        Relation::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::AdSimilar => "ADSIMILAR",
            Relation::CrSimilar => "CRSIMILAR",
            Relation::EcSimilar => "ECSIMILAR",
            Relation::GidSimilar => "GIDSIMILAR",
            Relation::InsSimilar => "INSSIMILAR",
            Relation::IapSimilar => "IAPSIMILAR",
            Relation::RtgSimilar => "RTGSIMILAR",
            Relation::RelSimilar => "RELSIMILAR",
            Relation::RevSimilar => "REVSIMILAR",
            Relation::StSimilar => "STSIMILAR",
            Relation::SSimilar => "SSIMILAR",
            Relation::VSimilar => "VSIMILAR",
        }
    }

    /// Source attribute whose bins define the relation.
    pub fn attribute(self) -> Attribute {
        match self {
            Relation::AdSimilar => Attribute::AdSupported,
            Relation::CrSimilar => Attribute::ContentRating,
            Relation::EcSimilar => Attribute::EditorsChoice,
            Relation::GidSimilar => Attribute::GenreId,
            Relation::InsSimilar => Attribute::Installs,
            Relation::IapSimilar => Attribute::OffersIap,
            Relation::RtgSimilar => Attribute::Ratings,
            Relation::RelSimilar => Attribute::Released,
            Relation::RevSimilar => Attribute::Reviews,
            Relation::StSimilar => Attribute::ScoreText,
            Relation::SSimilar => Attribute::Size,
            Relation::VSimilar => Attribute::Video,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Relation {
    type Err = KgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Relation::ALL
            .iter()
            .copied()
            .find(|r| r.name() == s)
            .ok_or_else(|| KgError::UnknownRelation(s.to_string()))
    }
}
