//! Readers for the three tab-separated ChemProt annotation files.
//!
//! | file      | columns                                                        |
//! |-----------|----------------------------------------------------------------|
//! | abstracts | `doc_id  title  body`                                          |
//! | entities  | `doc_id  entity_id  type  start  end  surface`                 |
//! | relations | `doc_id  group  [evaluated  relation_type]  Arg1:id  Arg2:id`  |
//!
//! Entity types are `CHEMICAL`, `GENE`, `GENE-Y` or `GENE-N`. Offsets are
//! character offsets into `title + " " + body`. The relations reader accepts
//! both the full relations file (with the `Y`/`N` evaluation column) and the
//! gold-standard file (without it). Blank lines are skipped.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use super::{AbstractRecord, EntityKind, EntityMention, GoldRelation, RelationGroup};
use crate::error::{Error, Result};

fn lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').to_string()))
        .collect())
}

pub fn read_abstracts(path: &Path) -> Result<Vec<AbstractRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line_no, line) in lines(path)? {
        let cols: Vec<&str> = line.splitn(3, '\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(path, line_no, "expected 3 tab-separated columns"));
        }
        let doc_id = cols[0].trim();
        if doc_id.is_empty() {
            return Err(Error::parse(path, line_no, "empty document id"));
        }
        if !seen.insert(doc_id.to_string()) {
            return Err(Error::parse(path, line_no, format!("duplicate document id {doc_id}")));
        }
        out.push(AbstractRecord {
            doc_id: doc_id.to_string(),
            title: cols[1].to_string(),
            body: cols[2].to_string(),
        });
    }
    Ok(out)
}

pub fn read_entities(path: &Path) -> Result<Vec<EntityMention>> {
    let mut out = Vec::new();
    for (line_no, line) in lines(path)? {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 6 {
            return Err(Error::parse(path, line_no, "expected 6 tab-separated columns"));
        }
        let kind = match cols[2].trim().to_ascii_uppercase().as_str() {
            "CHEMICAL" => EntityKind::Chemical,
            "GENE" | "GENE-Y" | "GENE-N" => EntityKind::Gene,
            other => {
                return Err(Error::parse(path, line_no, format!("unknown entity type {other}")))
            }
        };
        let offset = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::parse(path, line_no, format!("bad offset {s:?}: {e}")))
        };
        out.push(EntityMention {
            doc_id: cols[0].trim().to_string(),
            entity_id: cols[1].trim().to_string(),
            kind,
            span_start: offset(cols[3])?,
            span_end: offset(cols[4])?,
            surface: cols[5..].join("\t"),
        });
    }
    Ok(out)
}

pub fn read_relations(path: &Path) -> Result<Vec<GoldRelation>> {
    let mut out = Vec::new();
    for (line_no, line) in lines(path)? {
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() < 4 {
            return Err(Error::parse(path, line_no, "expected at least 4 tab-separated columns"));
        }
        let arg = |prefix: &str| {
            cols.iter()
                .find_map(|c| c.strip_prefix(prefix))
                .map(str::to_string)
                .ok_or_else(|| Error::parse(path, line_no, format!("missing {prefix} column")))
        };
        let evaluated = !(cols.len() >= 6 && cols[2].eq_ignore_ascii_case("N"));
        out.push(GoldRelation {
            doc_id: cols[0].to_string(),
            group: RelationGroup::parse(cols[1]),
            arg_chemical: arg("Arg1:")?,
            arg_gene: arg("Arg2:")?,
            evaluated,
        });
    }
    Ok(out)
}
