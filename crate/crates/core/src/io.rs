//! File formats: model documents, structure checkpoints and DOT graphs.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BankLayout, CandidateSets, CptBank, NormalizedBank, Ordering, ParentChoice, TanClassifier, TanStructure};
use crate::structure::StructureLogits;

pub const MODEL_FORMAT: &str = "tanbn-model";
pub const CHECKPOINT_FORMAT: &str = "tanbn-structure";
pub const FORMAT_VERSION: u32 = 1;
pub const AXIS_ORDER: [&str; 3] = ["child", "parent", "class"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRecord {
    pub position: usize,
    pub feature: usize,
    pub parent_feature: Option<usize>,
    pub child_arity: usize,
    pub parent_arity: usize,
    /// Row-major over `axis_order`.
    pub log_probs: Vec<f64>,
}

/// Serialized classifier. Feature indices refer to dataset columns;
/// positions refer to the ordering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub ordering: Vec<usize>,
    /// Parent position per ordering position.
    pub parents: Vec<Option<usize>>,
    pub pseudo: bool,
    pub arities: Vec<usize>,
    pub num_classes: usize,
    pub axis_order: Vec<String>,
    pub class_log_prior: Vec<f64>,
    pub tables: Vec<TableRecord>,
}

impl ModelFile {
    pub fn from_classifier(model: &TanClassifier) -> Self {
        let s = model.structure();
        let bank = model.bank();
        let layout = bank.layout();
        let ordering = s.ordering();
        let tables = (0..s.num_features())
            .map(|pos| {
                let slot = layout.slot(pos, 0);
                TableRecord {
                    position: pos,
                    feature: ordering.feature(pos),
                    parent_feature: slot.parent.position().map(|j| ordering.feature(j)),
                    child_arity: slot.child_arity,
                    parent_arity: slot.parent_arity,
                    log_probs: bank.table(pos, 0).to_vec(),
                }
            })
            .collect();
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: FORMAT_VERSION,
            ordering: ordering.as_slice().to_vec(),
            parents: s.parents().iter().map(|p| p.position()).collect(),
            pseudo: s.is_pseudo(),
            arities: layout.feature_arities(),
            num_classes: layout.num_classes(),
            axis_order: AXIS_ORDER.iter().map(|s| s.to_string()).collect(),
            class_log_prior: bank.class_log_prior().to_vec(),
            tables,
        }
    }

    pub fn to_classifier(&self) -> Result<TanClassifier> {
        check_header(&self.format, self.version, MODEL_FORMAT)?;
        if self.axis_order != AXIS_ORDER {
            return Err(Error::Serialization(format!("unsupported axis order {:?}", self.axis_order)));
        }
        let parents = self.parents.iter().map(|&p| ParentChoice::from(p)).collect();
        let structure = TanStructure::new(Ordering::new(self.ordering.clone())?, parents, self.pseudo)?;
        let layout = Arc::new(BankLayout::for_structure(&structure, &self.arities, self.num_classes)?);
        if self.tables.len() != structure.num_features() {
            return Err(Error::Serialization(format!(
                "{} tables for {} features",
                self.tables.len(),
                structure.num_features()
            )));
        }
        let mut values = self.class_log_prior.clone();
        for (pos, t) in self.tables.iter().enumerate() {
            let slot = layout.slot(pos, 0);
            if t.position != pos || t.child_arity != slot.child_arity || t.parent_arity != slot.parent_arity {
                return Err(Error::Serialization(format!("table {pos} does not match the structure")));
            }
            values.extend_from_slice(&t.log_probs);
        }
        let bank = NormalizedBank::from_log_probs(CptBank::from_values(layout, values)?)?;
        TanClassifier::new(structure, bank)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(self, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path)
    }
}

/// Candidate lists and structure logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureCheckpoint {
    pub format: String,
    pub version: u32,
    pub candidates: CandidateSets,
    pub logits: Vec<f64>,
}

impl StructureCheckpoint {
    pub fn new(candidates: &CandidateSets, logits: &StructureLogits) -> Self {
        StructureCheckpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: FORMAT_VERSION,
            candidates: candidates.clone(),
            logits: logits.values().to_vec(),
        }
    }

    pub fn restore(&self) -> Result<(CandidateSets, StructureLogits)> {
        check_header(&self.format, self.version, CHECKPOINT_FORMAT)?;
        let c = &self.candidates;
        let candidates = CandidateSets::new(c.ordering().clone(), c.lists().to_vec(), c.allow_pseudo())?;
        let logits = StructureLogits::from_values(&candidates, self.logits.clone())?;
        Ok((candidates, logits))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(self, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path)
    }
}

fn check_header(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::Serialization(format!("expected a {expected} document, found {format:?}")));
    }
    if version != FORMAT_VERSION {
        return Err(Error::Serialization(format!("unsupported {expected} version {version}")));
    }
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialization(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
}

/// Graphviz rendering: a class node with an edge to every feature plus the
/// feature-parent edges. Nodes are named by dataset column.
pub fn to_dot(structure: &TanStructure, names: Option<&[String]>) -> String {
    let d = structure.num_features();
    let label = |f: usize| names.and_then(|n| n.get(f)).cloned().unwrap_or_else(|| format!("x{f}"));
    let mut out = String::from("digraph tan {\n");
    if structure.has_cycle() {
        out.push_str("  // WARNING: pseudo-TAN graph contains a directed cycle; not a Bayesian network\n");
    } else if structure.is_pseudo() {
        out.push_str("  // pseudo-TAN: some parents follow their child in the ordering\n");
    }
    out.push_str("  class [shape=doublecircle, label=\"class\"];\n");
    for f in 0..d {
        let _ = writeln!(out, "  x{f} [label=\"{}\"];", label(f).replace('"', "\\\""));
    }
    for f in 0..d {
        let _ = writeln!(out, "  class -> x{f};");
    }
    for (parent, child) in structure.feature_edges() {
        let _ = writeln!(out, "  x{parent} -> x{child};");
    }
    out.push_str("}\n");
    out
}
