use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numeric::DenseMatrix;

/// Rounds after birth at which a never-matched novel slot is reported stale.
pub const STALE_AFTER: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownSlot {
    pub slot: usize,
    pub class: usize,
    pub prototype: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NovelSlot {
    pub slot: usize,
    pub prototype: Vec<f64>,
    pub birth_round: usize,
    pub last_matched_round: Option<usize>,
    pub matches: usize,
}

impl NovelSlot {
    pub fn is_stale(&self, round: usize) -> bool {
        self.matches == 0 && round.saturating_sub(self.birth_round) > STALE_AFTER
    }
}

/// Server prototype buffer. Slot ids are dense: known slots first, then novel
/// slots in creation order, so a slot id is also its row in [`Self::prototype_matrix`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalMemory {
    pub dim: usize,
    pub round: usize,
    pub known: Vec<KnownSlot>,
    pub novel: Vec<NovelSlot>,
}

#[derive(Serialize)]
struct SlotView<'a> {
    slot: usize,
    kind: &'static str,
    class: Option<usize>,
    birth_round: Option<usize>,
    last_matched_round: Option<usize>,
    matches: Option<usize>,
    stale: bool,
    prototype: &'a [f64],
}

impl GlobalMemory {
    pub fn num_slots(&self) -> usize {
        self.known.len() + self.novel.len()
    }

    pub fn prototype_matrix(&self) -> DenseMatrix {
        let rows: Vec<&[f64]> = self
            .known
            .iter()
            .map(|k| k.prototype.as_slice())
            .chain(self.novel.iter().map(|n| n.prototype.as_slice()))
            .collect();
        if rows.is_empty() {
            return DenseMatrix::zeros(0, self.dim);
        }
        DenseMatrix::from_rows(&rows).expect("prototypes share the memory dimension")
    }

    pub fn novel_prototypes(&self) -> Vec<Vec<f64>> {
        self.novel.iter().map(|n| n.prototype.clone()).collect()
    }

    pub fn push_novel(&mut self, prototype: Vec<f64>, round: usize) -> usize {
        let slot = self.num_slots();
        self.novel.push(NovelSlot {
            slot,
            prototype,
            birth_round: round,
            last_matched_round: None,
            matches: 0,
        });
        slot
    }

    pub fn stale_count(&self) -> usize {
        self.novel.iter().filter(|n| n.is_stale(self.round)).count()
    }

    /// Checkpoint as JSON: one record per slot with its metadata.
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let slots: Vec<SlotView> = self
            .known
            .iter()
            .map(|k| SlotView {
                slot: k.slot,
                kind: "known",
                class: Some(k.class),
                birth_round: None,
                last_matched_round: None,
                matches: None,
                stale: false,
                prototype: &k.prototype,
            })
            .chain(self.novel.iter().map(|n| SlotView {
                slot: n.slot,
                kind: "novel",
                class: None,
                birth_round: Some(n.birth_round),
                last_matched_round: n.last_matched_round,
                matches: Some(n.matches),
                stale: n.is_stale(self.round),
                prototype: &n.prototype,
            }))
            .collect();
        let doc = serde_json::json!({
            "round": self.round,
            "dim": self.dim,
            "memory": self,
            "slots": slots,
        });
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), &doc)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let doc: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        Ok(serde_json::from_value(doc["memory"].clone())?)
    }
}
