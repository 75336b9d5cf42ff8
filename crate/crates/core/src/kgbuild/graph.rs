use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{EntityFeatures, KgError, Relation};
use crate::rng::stream_rng;

pub type EntityId = usize;
/// Dense index into [`KnowledgeGraph::relations`].
pub type RelationId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }

    /// The same fact read in the opposite direction.
    pub fn mirrored(self) -> Self {
        Triple::new(self.tail, self.relation, self.head)
    }
}

/// Directed multi-relational app graph.
///
/// Entities are kept sorted by app id and relations by their table number, so
/// two graphs with the same facts have identical dense ids.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Vec<String>,
    entity_index: HashMap<String, EntityId>,
    relations: Vec<Relation>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    adjacency: Vec<Vec<(RelationId, EntityId)>>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.entities == other.entities
            && self.relations == other.relations
            && self.triples == other.triples
    }
}

impl KnowledgeGraph {
    /// Build a graph from names and triples indexed into `entities` and
    /// `relations` as given. Both vocabularies are canonicalized and the
    /// triples remapped; duplicate triples collapse.
    pub fn new(
        entities: Vec<String>,
        relations: Vec<Relation>,
        triples: impl IntoIterator<Item = Triple>,
    ) -> Result<Self, KgError> {
        let mut entity_order: Vec<usize> = (0..entities.len()).collect();
        entity_order.sort_by(|&a, &b| entities[a].cmp(&entities[b]));
        let mut entity_remap = vec![0; entities.len()];
        for (new, &old) in entity_order.iter().enumerate() {
            entity_remap[old] = new;
        }
        let sorted_entities: Vec<String> = entity_order.iter().map(|&i| entities[i].clone()).collect();
        if sorted_entities.windows(2).any(|w| w[0] == w[1]) {
            let dup = sorted_entities.windows(2).find(|w| w[0] == w[1]).expect("checked");
            return Err(KgError::Invalid(format!("duplicate entity `{}`", dup[0])));
        }

        let mut relation_order: Vec<usize> = (0..relations.len()).collect();
        relation_order.sort_by_key(|&i| relations[i]);
        let mut relation_remap = vec![0; relations.len()];
        for (new, &old) in relation_order.iter().enumerate() {
            relation_remap[old] = new;
        }
        let sorted_relations: Vec<Relation> = relation_order.iter().map(|&i| relations[i]).collect();
        if sorted_relations.windows(2).any(|w| w[0] == w[1]) {
            return Err(KgError::Invalid("duplicate relation".into()));
        }

        let mut triple_set = HashSet::new();
        for t in triples {
            if t.head >= entities.len() || t.tail >= entities.len() || t.relation >= relations.len() {
                return Err(KgError::Invalid(format!("triple {t:?} out of range")));
            }
            if t.head == t.tail {
                return Err(KgError::Invalid(format!("self-loop on `{}`", entities[t.head])));
            }
            triple_set.insert(Triple::new(
                entity_remap[t.head],
                relation_remap[t.relation],
                entity_remap[t.tail],
            ));
        }
        let mut sorted: Vec<Triple> = triple_set.iter().copied().collect();
        sorted.sort_unstable();

        let mut adjacency = vec![Vec::new(); sorted_entities.len()];
        for t in &sorted {
            adjacency[t.head].push((t.relation, t.tail));
        }
        let entity_index = sorted_entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        Ok(KnowledgeGraph {
            entities: sorted_entities,
            entity_index,
            relations: sorted_relations,
            triples: sorted,
            triple_set,
            adjacency,
        })
    }

    /// Same vocabularies, different fact set.
    pub fn with_triples(&self, triples: impl IntoIterator<Item = Triple>) -> Result<Self, KgError> {
        KnowledgeGraph::new(self.entities.clone(), self.relations.clone(), triples)
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn entity_id(&self, app_id: &str) -> Option<EntityId> {
        self.entity_index.get(app_id).copied()
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entities[id]
    }

    pub fn relation_id(&self, relation: Relation) -> Option<RelationId> {
        self.relations.binary_search(&relation).ok()
    }

    /// Facts in canonical `(head, relation, tail)` order.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triple_set.contains(triple)
    }

    /// Outgoing `(relation, tail)` pairs of `head`.
    pub fn neighbors(&self, head: EntityId) -> &[(RelationId, EntityId)] {
        &self.adjacency[head]
    }

    /// Drop the given relations (and only their facts).
    pub fn without_relations(&self, dropped: &[Relation]) -> Result<Self, KgError> {
        let kept: Vec<Relation> = self
            .relations
            .iter()
            .copied()
            .filter(|r| !dropped.contains(r))
            .collect();
        let remap: HashMap<RelationId, RelationId> = self
            .relations
            .iter()
            .enumerate()
            .filter_map(|(old, r)| kept.iter().position(|k| k == r).map(|new| (old, new)))
            .collect();
        let triples: Vec<Triple> = self
            .triples
            .iter()
            .filter_map(|t| remap.get(&t.relation).map(|&r| Triple::new(t.head, r, t.tail)))
            .collect();
        KnowledgeGraph::new(self.entities.clone(), kept, triples)
    }
}

/// Build the full twelve-relation graph.
pub fn build_triples(features: &[EntityFeatures], k: usize, seed: u64) -> Result<KnowledgeGraph, KgError> {
    build_triples_for(features, &Relation::ALL, k, seed)
}

/// For every entity and relation with a known bin, link the entity to
/// `min(k, peers)` same-bin peers drawn without replacement. Each relation
/// draws from its own seeded stream, so removing relations leaves the facts of
/// the others untouched.
pub fn build_triples_for(
    features: &[EntityFeatures],
    relations: &[Relation],
    k: usize,
    seed: u64,
) -> Result<KnowledgeGraph, KgError> {
    if k == 0 {
        return Err(KgError::Invalid("edges per node per relation must be at least 1".into()));
    }
    if features.len() < 2 {
        return Err(KgError::Invalid("at least two entities are required".into()));
    }
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.sort_by(|&a, &b| features[a].app_id.cmp(&features[b].app_id));
    let entities: Vec<String> = order.iter().map(|&i| features[i].app_id.clone()).collect();

    let mut relations = relations.to_vec();
    relations.sort();
    relations.dedup();

    let mut triples = Vec::new();
    for (rel_id, &relation) in relations.iter().enumerate() {
        let mut groups: BTreeMap<u16, Vec<EntityId>> = BTreeMap::new();
        for (entity, &src) in order.iter().enumerate() {
            if let Some(bin) = features[src].bin(relation) {
                groups.entry(bin).or_default().push(entity);
            }
        }
        let mut rng = stream_rng(seed, &[relation.index() as u64]);
        for members in groups.values() {
            if members.len() < 2 {
                continue;
            }
            for (pos, &head) in members.iter().enumerate() {
                let peer_count = members.len() - 1;
                let take = k.min(peer_count);
                for i in index::sample(&mut rng, peer_count, take) {
                    // Peers are `members` without position `pos`.
                    let tail = members[if i < pos { i } else { i + 1 }];
                    triples.push(Triple::new(head, rel_id, tail));
                }
            }
        }
    }
    KnowledgeGraph::new(entities, relations, triples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn features_with(bins: &[(&str, Relation, u16)]) -> Vec<EntityFeatures> {
        let mut by_id: BTreeMap<&str, EntityFeatures> = BTreeMap::new();
        for &(id, r, b) in bins {
            by_id.entry(id).or_insert_with(|| EntityFeatures::new(id)).bins[r.index()] = Some(b);
        }
        by_id.into_values().collect()
    }

    #[test]
    fn three_entities_one_bin_k1_gives_one_edge_per_head() {
        let f = features_with(&[
            ("a", Relation::AdSimilar, 0),
            ("b", Relation::AdSimilar, 0),
            ("c", Relation::AdSimilar, 0),
        ]);
        let kg = build_triples(&f, 1, 11).unwrap();
        assert_eq!(kg.triple_count(), 3);
        let heads: Vec<_> = kg.triples().iter().map(|t| t.head).collect();
        assert_eq!(heads, vec![0, 1, 2]);
        assert!(kg.triples().iter().all(|t| t.head != t.tail));
    }

    #[test]
    fn singleton_bins_emit_nothing() {
        let f = features_with(&[
            ("a", Relation::CrSimilar, 0),
            ("b", Relation::CrSimilar, 1),
            ("c", Relation::CrSimilar, 2),
        ]);
        assert_eq!(build_triples(&f, 1, 0).unwrap().triple_count(), 0);
    }

    #[test]
    fn k_larger_than_bin_links_every_peer() {
        let f = features_with(&[
            ("a", Relation::VSimilar, 1),
            ("b", Relation::VSimilar, 1),
            ("c", Relation::VSimilar, 1),
        ]);
        assert_eq!(build_triples(&f, 5, 0).unwrap().triple_count(), 6);
    }

    #[test]
    fn vocabulary_is_canonical_regardless_of_input_order() {
        let mut f = features_with(&[
            ("b", Relation::VSimilar, 1),
            ("a", Relation::VSimilar, 1),
            ("c", Relation::VSimilar, 1),
        ]);
        let kg1 = build_triples(&f, 1, 3).unwrap();
        f.reverse();
        let kg2 = build_triples(&f, 1, 3).unwrap();
        assert_eq!(kg1, kg2);
        assert_eq!(kg1.entities(), ["a", "b", "c"]);
    }

    #[test]
    fn adjacency_matches_triples() {
        let f = features_with(&[
            ("a", Relation::VSimilar, 1),
            ("b", Relation::VSimilar, 1),
            ("c", Relation::VSimilar, 1),
            ("a", Relation::AdSimilar, 0),
            ("c", Relation::AdSimilar, 0),
        ]);
        let kg = build_triples(&f, 2, 3).unwrap();
        let mut from_adj = Vec::new();
        for h in 0..kg.entity_count() {
            for &(r, t) in kg.neighbors(h) {
                from_adj.push(Triple::new(h, r, t));
            }
        }
        assert_eq!(from_adj, kg.triples());
    }

    #[test]
    fn self_loops_are_rejected() {
        let err = KnowledgeGraph::new(
            vec!["a".into(), "b".into()],
            vec![Relation::AdSimilar],
            [Triple::new(0, 0, 0)],
        );
        assert!(err.is_err());
    }

    #[test]
    fn dropping_relations_keeps_other_facts() {
        let f = features_with(&[
            ("a", Relation::VSimilar, 1),
            ("b", Relation::VSimilar, 1),
            ("a", Relation::AdSimilar, 0),
            ("b", Relation::AdSimilar, 0),
        ]);
        let kg = build_triples(&f, 1, 3).unwrap();
        let dropped = kg.without_relations(&[Relation::AdSimilar]).unwrap();
        assert_eq!(dropped.relation_count(), 11);
        assert!(dropped.relation_id(Relation::AdSimilar).is_none());
        assert_eq!(dropped.triple_count(), 2);
    }
}
