use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{KgError, KnowledgeGraph, Relation, Triple};

fn format_rows(kg: &KnowledgeGraph, triples: &[Triple]) -> Vec<u8> {
    let mut sorted = triples.to_vec();
    sorted.sort_unstable();
    let mut out = Vec::new();
    for t in sorted {
        // Entity and relation ids are canonical, so id order is name order.
        writeln!(
            out,
            "{}\t{}\t{}",
            kg.entity_name(t.head),
            kg.relations()[t.relation].name(),
            kg.entity_name(t.tail)
        )
        .expect("writing to a Vec cannot fail");
    }
    out
}

/// Write the whole graph as `head_app_id\trelation_name\ttail_app_id` rows in
/// canonical order.
pub fn serialize_kg(kg: &KnowledgeGraph, path: impl AsRef<Path>) -> Result<(), KgError> {
    write_triples(kg, kg.triples(), path)
}

/// Write a subset of `kg`'s facts (e.g. one split) in the same format.
pub fn write_triples(kg: &KnowledgeGraph, triples: &[Triple], path: impl AsRef<Path>) -> Result<(), KgError> {
    fs::write(path, format_rows(kg, triples))?;
    Ok(())
}

struct Row<'a> {
    head: &'a str,
    relation: Relation,
    tail: &'a str,
}

fn parse_rows(text: &str) -> Result<Vec<Row<'_>>, KgError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(KgError::MalformedRow {
                row,
                message: format!("expected 3 nonempty tab-separated fields, got {}", fields.len()),
            });
        }
        let relation: Relation = fields[1].parse()?;
        if fields[0] == fields[2] {
            return Err(KgError::SelfLoop {
                entity: fields[0].to_string(),
                row,
            });
        }
        rows.push(Row {
            head: fields[0],
            relation,
            tail: fields[2],
        });
    }
    Ok(rows)
}

/// Read a triple file; the vocabularies are the entities and relations it mentions.
pub fn deserialize_kg(path: impl AsRef<Path>) -> Result<KnowledgeGraph, KgError> {
    let text = fs::read_to_string(path)?;
    let rows = parse_rows(&text)?;
    let entities: BTreeSet<&str> = rows.iter().flat_map(|r| [r.head, r.tail]).collect();
    let relations: BTreeSet<Relation> = rows.iter().map(|r| r.relation).collect();
    let entities: Vec<String> = entities.into_iter().map(str::to_string).collect();
    let relations: Vec<Relation> = relations.into_iter().collect();
    let vocab = KnowledgeGraph::new(entities, relations, [])?;
    let triples = resolve(&vocab, &rows)?;
    vocab.with_triples(triples)
}

/// Read a triple file against known vocabularies (isolated entities and
/// relations without facts survive).
pub fn deserialize_kg_with_vocab(
    path: impl AsRef<Path>,
    entities: Vec<String>,
    relations: Vec<Relation>,
) -> Result<KnowledgeGraph, KgError> {
    let vocab = KnowledgeGraph::new(entities, relations, [])?;
    let triples = read_triples(&vocab, path)?;
    vocab.with_triples(triples)
}

/// Read facts of a split file, resolved against `kg`'s vocabularies.
pub fn read_triples(kg: &KnowledgeGraph, path: impl AsRef<Path>) -> Result<Vec<Triple>, KgError> {
    let text = fs::read_to_string(path)?;
    resolve(kg, &parse_rows(&text)?)
}

fn resolve(kg: &KnowledgeGraph, rows: &[Row<'_>]) -> Result<Vec<Triple>, KgError> {
    rows.iter()
        .map(|r| {
            let entity = |name: &str| kg.entity_id(name).ok_or_else(|| KgError::UnknownEntity(name.to_string()));
            let relation = kg
                .relation_id(r.relation)
                .ok_or_else(|| KgError::UnknownRelation(r.relation.name().to_string()))?;
            Ok(Triple::new(entity(r.head)?, relation, entity(r.tail)?))
        })
        .collect()
}
