//! Privacy-preserving app recommendation over an app-app knowledge graph.
//!
//! Apps are the only entities; their store attributes are discretized into
//! bins and turned into twelve similarity relations. On top of that graph the
//! crate trains shallow knowledge-graph embeddings ([`kge`]) and a
//! relation-attentive graph-convolution recommender ([`deep`]).

pub mod deep;
pub mod gradcheck;
pub mod ingest;
pub mod kgbuild;
pub mod kge;
pub mod kgstats;
pub mod optim;
pub mod rng;
