//! Unified id space for the predictor input sequence `[task, class, tokens...]`.
//!
//! Layout: `[MASK]` = 0, no-class = 1, ten task prompts at 2..12, class
//! tokens at 12..12+n_classes, then the visual codebook.

use crate::error::{Error, Result};
use crate::tasks::TaskKind;

pub const MASK_ID: u32 = 0;
pub const NOCLASS_ID: u32 = 1;
pub const TASK_BASE: u32 = 2;
pub const CLASS_BASE: u32 = TASK_BASE + TaskKind::COUNT as u32;

/// One slot of the corrupted token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InputToken {
    Mask,
    Visual(u32),
}

impl InputToken {
    pub fn is_mask(self) -> bool {
        matches!(self, InputToken::Mask)
    }

    pub fn visual(self) -> Option<u32> {
        match self {
            InputToken::Visual(v) => Some(v),
            InputToken::Mask => None,
        }
    }
}

/// Decoded meaning of a unified id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocabEntry {
    Mask,
    NoClass,
    Task(TaskKind),
    Class(u32),
    Visual(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabularyLayout {
    pub n_classes: usize,
    pub v_vis: usize,
}

impl VocabularyLayout {
    pub fn new(n_classes: usize, v_vis: usize) -> Result<Self> {
        if v_vis == 0 {
            return Err(Error::Config("visual vocabulary is empty".into()));
        }
        Ok(Self { n_classes, v_vis })
    }

    pub fn visual_base(&self) -> u32 {
        CLASS_BASE + self.n_classes as u32
    }

    pub fn total(&self) -> usize {
        self.visual_base() as usize + self.v_vis
    }

    /// Length of a full input sequence for `n` visual slots.
    pub fn sequence_len(&self, n: usize) -> usize {
        2 + n
    }

    pub fn task_id(&self, task: TaskKind) -> u32 {
        TASK_BASE + task.index() as u32
    }

    pub fn class_id(&self, class: Option<u32>) -> Result<u32> {
        match class {
            None => Ok(NOCLASS_ID),
            Some(c) if (c as usize) < self.n_classes => Ok(CLASS_BASE + c),
            Some(c) => Err(Error::Vocabulary(format!(
                "class {c} outside {} classes",
                self.n_classes
            ))),
        }
    }

    pub fn token_id(&self, token: InputToken) -> Result<u32> {
        match token {
            InputToken::Mask => Ok(MASK_ID),
            InputToken::Visual(v) if (v as usize) < self.v_vis => Ok(self.visual_base() + v),
            InputToken::Visual(v) => Err(Error::Vocabulary(format!(
                "visual id {v} outside codebook of size {}",
                self.v_vis
            ))),
        }
    }

    pub fn entry(&self, id: u32) -> Result<VocabEntry> {
        Ok(match id {
            MASK_ID => VocabEntry::Mask,
            NOCLASS_ID => VocabEntry::NoClass,
            id if id < CLASS_BASE => VocabEntry::Task(TaskKind::ALL[(id - TASK_BASE) as usize]),
            id if id < self.visual_base() => VocabEntry::Class(id - CLASS_BASE),
            id if (id as usize) < self.total() => VocabEntry::Visual(id - self.visual_base()),
            id => {
                return Err(Error::Vocabulary(format!(
                    "id {id} outside vocabulary of {}",
                    self.total()
                )))
            }
        })
    }

    /// The predictor input `[task, class, corrupted...]` in unified ids.
    pub fn input_sequence(
        &self,
        task: TaskKind,
        class: Option<u32>,
        corrupted: &[InputToken],
    ) -> Result<Vec<u32>> {
        let mut seq = Vec::with_capacity(self.sequence_len(corrupted.len()));
        seq.push(self.task_id(task));
        seq.push(self.class_id(class)?);
        for &tok in corrupted {
            seq.push(self.token_id(tok)?);
        }
        Ok(seq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_are_contiguous_and_disjoint() {
        let v = VocabularyLayout::new(4, 32).unwrap();
        assert_eq!(CLASS_BASE, 12);
        assert_eq!(v.visual_base(), 16);
        assert_eq!(v.total(), 48);
        let entries: Vec<_> = (0..v.total() as u32)
            .map(|id| v.entry(id).unwrap())
            .collect();
        assert_eq!(entries[0], VocabEntry::Mask);
        assert_eq!(entries[1], VocabEntry::NoClass);
        assert_eq!(entries[2], VocabEntry::Task(TaskKind::FramePrediction));
        assert_eq!(
            entries[11],
            VocabEntry::Task(TaskKind::ClassFramePrediction)
        );
        assert_eq!(entries[12], VocabEntry::Class(0));
        assert_eq!(entries[15], VocabEntry::Class(3));
        assert_eq!(entries[16], VocabEntry::Visual(0));
        assert_eq!(entries[47], VocabEntry::Visual(31));
        assert!(v.entry(48).is_err());
    }

    #[test]
    fn default_sequence_length() {
        let v = VocabularyLayout::new(101, 1024).unwrap();
        assert_eq!(v.sequence_len(4 * 16 * 16), 1026);
    }

    #[test]
    fn input_sequence_round_trips_through_entries() {
        let v = VocabularyLayout::new(2, 8).unwrap();
        let toks = [
            InputToken::Visual(7),
            InputToken::Mask,
            InputToken::Visual(0),
        ];
        let seq = v
            .input_sequence(TaskKind::ClassGeneration, Some(1), &toks)
            .unwrap();
        assert_eq!(seq.len(), 5);
        assert_eq!(
            v.entry(seq[0]).unwrap(),
            VocabEntry::Task(TaskKind::ClassGeneration)
        );
        assert_eq!(v.entry(seq[1]).unwrap(), VocabEntry::Class(1));
        assert_eq!(v.entry(seq[2]).unwrap(), VocabEntry::Visual(7));
        assert_eq!(v.entry(seq[3]).unwrap(), VocabEntry::Mask);
        assert!(v
            .input_sequence(TaskKind::FramePrediction, Some(2), &toks)
            .is_err());
        assert!(v.token_id(InputToken::Visual(8)).is_err());
    }
}
