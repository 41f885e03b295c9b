//! ChemProt ingestion: sentence extraction, entity anonymization and the
//! labeled single-sentence dataset.

mod chemprot;
mod sentences;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Label, NUM_CLASSES};

pub use chemprot::{read_abstracts, read_entities, read_relations};
pub use sentences::{split_sentences, split_text, Span, ABBREVIATIONS};

pub const CHEMICAL_TOKEN: &str = "@CHEMICAL$";
pub const GENE_TOKEN: &str = "@GENE$";

/// One PubMed abstract. Annotation offsets index into [`AbstractRecord::text`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractRecord {
    pub doc_id: String,
    pub title: String,
    pub body: String,
}

impl AbstractRecord {
    /// Title and body joined by a single space.
    pub fn text(&self) -> String {
        format!("{} {}", self.title, self.body)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityKind {
    Chemical,
    Gene,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Chemical => "chemical",
            EntityKind::Gene => "gene",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityMention {
    pub doc_id: String,
    pub entity_id: String,
    pub kind: EntityKind,
    pub span_start: usize,
    pub span_end: usize,
    pub surface: String,
}

impl EntityMention {
    pub fn span(&self) -> Span {
        Span::new(self.span_start, self.span_end)
    }
}

/// Relation group as annotated. Groups outside the five evaluated ones are
/// kept verbatim in `Other`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RelationGroup {
    Cpr(Label),
    Other(String),
}

impl RelationGroup {
    pub fn parse(s: &str) -> Self {
        match s.parse::<Label>() {
            Ok(label) if label.is_relation() => RelationGroup::Cpr(label),
            _ => RelationGroup::Other(s.trim().to_string()),
        }
    }
}

impl fmt::Display for RelationGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelationGroup::Cpr(label) => write!(f, "{label}"),
            RelationGroup::Other(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldRelation {
    pub doc_id: String,
    pub group: RelationGroup,
    pub arg_chemical: String,
    pub arg_gene: String,
    /// `false` when the relations file marks the row as not evaluated.
    pub evaluated: bool,
}

/// An anonymized single-sentence example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub example_id: String,
    pub text: String,
    pub label: Label,
}

/// The five groups scored in the shared task.
pub fn default_eval_groups() -> BTreeSet<Label> {
    Label::ALL.iter().copied().filter(|l| l.is_relation()).collect()
}

/// True when `text` holds exactly one chemical and one gene placeholder.
pub fn has_placeholder_pair(text: &str) -> bool {
    text.matches(CHEMICAL_TOKEN).count() == 1 && text.matches(GENE_TOKEN).count() == 1
}

/// Emits one example per same-sentence (chemical, gene) mention pair of `doc`.
///
/// The two mentions of the pair are replaced by placeholders; other mentions in
/// the sentence stay verbatim. Pairs whose mentions lie in different sentences
/// or overlap each other are skipped.
pub fn extract_pairs(
    doc: &AbstractRecord,
    mentions: &[EntityMention],
    relations: &[GoldRelation],
    evaluated_groups: &BTreeSet<Label>,
) -> Result<Vec<LabeledExample>> {
    let chars: Vec<char> = doc.text().chars().collect();
    for m in mentions {
        check_mention(doc, &chars, m)?;
    }

    let by_id: HashMap<&str, &EntityMention> =
        mentions.iter().map(|m| (m.entity_id.as_str(), m)).collect();
    let gold = resolve_relations(doc, &by_id, relations, evaluated_groups)?;

    let sentences = split_sentences(doc);
    let mut chemicals: Vec<Vec<&EntityMention>> = vec![Vec::new(); sentences.len()];
    let mut genes: Vec<Vec<&EntityMention>> = vec![Vec::new(); sentences.len()];
    for m in mentions {
        match sentences.iter().position(|s| s.contains(&m.span())) {
            Some(idx) => match m.kind {
                EntityKind::Chemical => chemicals[idx].push(m),
                EntityKind::Gene => genes[idx].push(m),
            },
            None => warn!(
                "{}: mention {} straddles a sentence boundary; skipped",
                doc.doc_id, m.entity_id
            ),
        }
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, sentence) in sentences.iter().enumerate() {
        let order = |a: &&EntityMention, b: &&EntityMention| {
            (a.span_start, a.span_end, &a.entity_id).cmp(&(b.span_start, b.span_end, &b.entity_id))
        };
        chemicals[idx].sort_by(order);
        genes[idx].sort_by(order);
        for chem in &chemicals[idx] {
            for gene in &genes[idx] {
                if chem.span().overlaps(&gene.span()) {
                    warn!(
                        "{}: overlapping mentions {} and {}; pair dropped",
                        doc.doc_id, chem.entity_id, gene.entity_id
                    );
                    continue;
                }
                let example_id = format!(
                    "{}.s{}.{}.{}",
                    doc.doc_id, idx, chem.entity_id, gene.entity_id
                );
                if !seen.insert(example_id.clone()) {
                    warn!("duplicate example {example_id}; keeping the first");
                    continue;
                }
                let text = anonymize(&chars, *sentence, chem, gene);
                if !has_placeholder_pair(&text) {
                    warn!("{example_id}: placeholder token already present in source text; dropped");
                    continue;
                }
                let label = gold
                    .get(&(chem.entity_id.as_str(), gene.entity_id.as_str()))
                    .copied()
                    .unwrap_or(Label::False);
                out.push(LabeledExample {
                    example_id,
                    text,
                    label,
                });
            }
        }
    }
    Ok(out)
}

fn check_mention(doc: &AbstractRecord, chars: &[char], m: &EntityMention) -> Result<()> {
    let found: String = if m.span_start < m.span_end && m.span_end <= chars.len() {
        chars[m.span_start..m.span_end].iter().collect()
    } else {
        String::new()
    };
    if m.doc_id != doc.doc_id || found != m.surface {
        return Err(Error::OffsetMismatch {
            doc_id: doc.doc_id.clone(),
            entity_id: m.entity_id.clone(),
            start: m.span_start,
            end: m.span_end,
            expected: m.surface.clone(),
            found,
        });
    }
    Ok(())
}

/// Maps (chemical id, gene id) to the label of the first evaluated gold
/// relation linking them.
fn resolve_relations<'a>(
    doc: &AbstractRecord,
    by_id: &HashMap<&str, &'a EntityMention>,
    relations: &'a [GoldRelation],
    evaluated_groups: &BTreeSet<Label>,
) -> Result<HashMap<(&'a str, &'a str), Label>> {
    let mut gold = HashMap::new();
    for rel in relations.iter().filter(|r| r.doc_id == doc.doc_id) {
        let kind_of = |id: &str| by_id.get(id).map(|m| m.kind);
        let (chem, gene) = match (kind_of(&rel.arg_chemical), kind_of(&rel.arg_gene)) {
            (Some(EntityKind::Chemical), Some(EntityKind::Gene)) => {
                (rel.arg_chemical.as_str(), rel.arg_gene.as_str())
            }
            (Some(EntityKind::Gene), Some(EntityKind::Chemical)) => {
                (rel.arg_gene.as_str(), rel.arg_chemical.as_str())
            }
            (Some(EntityKind::Chemical), _) => {
                return Err(Error::UnresolvedArgument {
                    doc_id: doc.doc_id.clone(),
                    entity_id: rel.arg_gene.clone(),
                    kind: EntityKind::Gene.as_str(),
                })
            }
            _ => {
                return Err(Error::UnresolvedArgument {
                    doc_id: doc.doc_id.clone(),
                    entity_id: rel.arg_chemical.clone(),
                    kind: EntityKind::Chemical.as_str(),
                })
            }
        };
        let label = match &rel.group {
            RelationGroup::Cpr(label) if rel.evaluated && evaluated_groups.contains(label) => *label,
            _ => continue,
        };
        match gold.get(&(chem, gene)) {
            None => {
                gold.insert((chem, gene), label);
            }
            Some(existing) if *existing != label => warn!(
                "{}: pair ({chem}, {gene}) labeled both {existing} and {label}; keeping {existing}",
                doc.doc_id
            ),
            Some(_) => {}
        }
    }
    Ok(gold)
}

fn anonymize(chars: &[char], sentence: Span, chem: &EntityMention, gene: &EntityMention) -> String {
    let mut text: Vec<char> = chars[sentence.start..sentence.end].to_vec();
    let mut replacements = [
        (chem.span(), CHEMICAL_TOKEN),
        (gene.span(), GENE_TOKEN),
    ];
    // right to left so earlier offsets stay valid
    replacements.sort_by(|a, b| b.0.start.cmp(&a.0.start));
    for (span, token) in replacements {
        let start = span.start - sentence.start;
        let end = span.end - sentence.start;
        text.splice(start..end, token.chars());
    }
    text.into_iter().collect()
}

/// Runs [`extract_pairs`] over every abstract, in abstract order.
pub fn preprocess_corpus(
    abstracts: &[AbstractRecord],
    mentions: &[EntityMention],
    relations: &[GoldRelation],
    evaluated_groups: &BTreeSet<Label>,
) -> Result<Vec<LabeledExample>> {
    let known: HashSet<&str> = abstracts.iter().map(|a| a.doc_id.as_str()).collect();
    let mut mentions_by_doc: HashMap<&str, Vec<EntityMention>> = HashMap::new();
    for m in mentions {
        if known.contains(m.doc_id.as_str()) {
            mentions_by_doc.entry(m.doc_id.as_str()).or_default().push(m.clone());
        } else {
            warn!("mention {} refers to unknown document {}", m.entity_id, m.doc_id);
        }
    }
    let mut relations_by_doc: HashMap<&str, Vec<GoldRelation>> = HashMap::new();
    for r in relations {
        relations_by_doc.entry(r.doc_id.as_str()).or_default().push(r.clone());
    }

    let mut out = Vec::new();
    for doc in abstracts {
        let doc_mentions = mentions_by_doc.get(doc.doc_id.as_str()).map_or(&[][..], |v| v);
        let doc_relations = relations_by_doc.get(doc.doc_id.as_str()).map_or(&[][..], |v| v);
        out.extend(extract_pairs(doc, doc_mentions, doc_relations, evaluated_groups)?);
    }
    Ok(out)
}

/// Per-label example counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub counts: [usize; NUM_CLASSES],
    pub total: usize,
}

impl LabelCounts {
    pub fn get(&self, label: Label) -> usize {
        self.counts[label.index()]
    }
}

impl fmt::Display for LabelCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for label in Label::ALL {
            write!(f, "{}={} ", label, self.get(label))?;
        }
        write!(f, "total={}", self.total)
    }
}

pub fn dataset_stats(examples: &[LabeledExample]) -> LabelCounts {
    let mut stats = LabelCounts::default();
    for e in examples {
        stats.counts[e.label.index()] += 1;
        stats.total += 1;
    }
    stats
}
