//! Core data model for complexes and mutations, plus parsers for PDB text,
//! mutation codes and SKEMPI-style tables.

mod mutation;
mod pdb;
mod skempi;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mutation::{apply_mutation_set, format_mutation, parse_mutation, Mutation, MutationSet};
pub use pdb::{parse_pdb, write_backbone_pdb};
pub use skempi::{parse_candidate_table, parse_skempi_table, CandidateRecord, SkempiRecord, SkempiTable};

/// One-letter codes in alphabet order; index `i` corresponds to `AminoAcid(i + 1)`.
pub const ONE_LETTER: &[u8; 20] = b"ACDEFGHIKLMNPQRSTVWY";

const THREE_LETTER: [&str; 20] = [
    "ALA", "CYS", "ASP", "GLU", "PHE", "GLY", "HIS", "ILE", "LYS", "LEU", "MET", "ASN", "PRO", "GLN",
    "ARG", "SER", "THR", "VAL", "TRP", "TYR",
];

/// Number of amino-acid types in the alphabet.
pub const N_AMINO_ACIDS: usize = 20;

/// Amino-acid identity, stored as its 1-based alphabet index (1..=20).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AminoAcid(u8);

impl AminoAcid {
    pub fn from_index(index: u8) -> Option<Self> {
        (1..=20).contains(&index).then_some(Self(index))
    }

    /// Zero-based position in [`ONE_LETTER`].
    pub fn from_zero_based(i: usize) -> Option<Self> {
        (i < N_AMINO_ACIDS).then(|| Self(i as u8 + 1))
    }

    pub fn from_letter(letter: char) -> Option<Self> {
        let upper = letter.to_ascii_uppercase() as u8;
        ONE_LETTER.iter().position(|&c| c == upper).map(|i| Self(i as u8 + 1))
    }

    pub fn from_three_letter(name: &str) -> Option<Self> {
        let name = name.trim();
        let canonical = match name {
            "HSD" | "HSE" | "HSP" | "HIE" | "HID" | "HIP" => "HIS",
            "CYX" | "CYM" => "CYS",
            other => other,
        };
        THREE_LETTER.iter().position(|&t| t == canonical).map(|i| Self(i as u8 + 1))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn zero_based(self) -> usize {
        self.0 as usize - 1
    }

    pub fn letter(self) -> char {
        ONE_LETTER[self.zero_based()] as char
    }

    pub fn three_letter(self) -> &'static str {
        THREE_LETTER[self.zero_based()]
    }

    pub fn all() -> impl Iterator<Item = AminoAcid> {
        (1..=20u8).map(AminoAcid)
    }
}

impl fmt::Display for AminoAcid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Backbone atoms tracked per residue, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BackboneAtom {
    N,
    CA,
    C,
    O,
}

impl BackboneAtom {
    pub const ALL: [BackboneAtom; 4] = [BackboneAtom::N, BackboneAtom::CA, BackboneAtom::C, BackboneAtom::O];

    pub fn slot(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            BackboneAtom::N => "N",
            BackboneAtom::CA => "CA",
            BackboneAtom::C => "C",
            BackboneAtom::O => "O",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name.trim() {
            "N" => Some(BackboneAtom::N),
            "CA" => Some(BackboneAtom::CA),
            "C" => Some(BackboneAtom::C),
            "O" => Some(BackboneAtom::O),
            _ => None,
        }
    }
}

/// Author-assigned residue identity: chain, sequence number and insertion code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResidueId {
    pub chain: char,
    pub seq: i32,
    pub icode: Option<char>,
}

impl ResidueId {
    pub fn new(chain: char, seq: i32) -> Self {
        Self { chain, seq, icode: None }
    }

    pub fn with_icode(chain: char, seq: i32, icode: Option<char>) -> Self {
        Self { chain, seq, icode }
    }
}

impl fmt::Display for ResidueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.chain, self.seq)?;
        if let Some(ic) = self.icode {
            write!(f, "{ic}")?;
        }
        Ok(())
    }
}

pub type Point = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Residue {
    pub aa: AminoAcid,
    pub id: ResidueId,
    /// N, CA, C, O; `None` marks a missing atom.
    pub backbone: [Option<Point>; 4],
}

impl Residue {
    pub fn atom(&self, atom: BackboneAtom) -> Option<Point> {
        self.backbone[atom.slot()]
    }

    pub fn ca(&self) -> Option<Point> {
        self.atom(BackboneAtom::CA)
    }

    /// All four backbone atoms present; only such residues take part in geometry.
    pub fn has_full_backbone(&self) -> bool {
        self.backbone.iter().all(Option::is_some)
    }

    pub fn full_backbone(&self) -> Option<[Point; 4]> {
        Some([self.backbone[0]?, self.backbone[1]?, self.backbone[2]?, self.backbone[3]?])
    }

    pub fn missing_atoms(&self) -> Vec<BackboneAtom> {
        BackboneAtom::ALL.into_iter().filter(|a| self.backbone[a.slot()].is_none()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProteinChain {
    pub chain_id: char,
    pub residues: Vec<Residue>,
}

/// Which side of the interface a chain belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    Binder,
    Target,
}

impl Group {
    pub fn other(self) -> Group {
        match self {
            Group::Binder => Group::Target,
            Group::Target => Group::Binder,
        }
    }
}

/// A protein complex split into binder and target chain groups.
#[derive(Debug, Clone, PartialEq)]
pub struct Complex {
    pub pdb_id: String,
    pub chains: Vec<ProteinChain>,
    pub binder_group: BTreeSet<char>,
    pub target_group: BTreeSet<char>,
}

impl Complex {
    /// Builds a complex and checks the group invariants.
    pub fn new(
        pdb_id: impl Into<String>,
        chains: Vec<ProteinChain>,
        binder_group: BTreeSet<char>,
        target_group: BTreeSet<char>,
    ) -> Result<Self, IngestError> {
        if binder_group.is_empty() || target_group.is_empty() {
            return Err(IngestError::InvalidGroups("binder and target groups must be non-empty".into()));
        }
        if let Some(c) = binder_group.intersection(&target_group).next() {
            return Err(IngestError::InvalidGroups(format!("chain {c} is in both groups")));
        }
        for c in binder_group.iter().chain(target_group.iter()) {
            if !chains.iter().any(|ch| ch.chain_id == *c) {
                return Err(IngestError::ChainAbsent(*c));
            }
        }
        Ok(Self { pdb_id: pdb_id.into(), chains, binder_group, target_group })
    }

    pub fn group_of(&self, chain: char) -> Option<Group> {
        if self.binder_group.contains(&chain) {
            Some(Group::Binder)
        } else if self.target_group.contains(&chain) {
            Some(Group::Target)
        } else {
            None
        }
    }

    pub fn chain(&self, chain: char) -> Option<&ProteinChain> {
        self.chains.iter().find(|c| c.chain_id == chain)
    }

    pub fn residue(&self, id: &ResidueId) -> Option<&Residue> {
        self.chain(id.chain)?.residues.iter().find(|r| r.id == *id)
    }

    pub fn residue_mut(&mut self, id: &ResidueId) -> Option<&mut Residue> {
        self.chains
            .iter_mut()
            .find(|c| c.chain_id == id.chain)?
            .residues
            .iter_mut()
            .find(|r| r.id == *id)
    }

    pub fn residues(&self) -> impl Iterator<Item = &Residue> {
        self.chains.iter().flat_map(|c| c.residues.iter())
    }

    pub fn n_residues(&self) -> usize {
        self.chains.iter().map(|c| c.residues.len()).sum()
    }

    /// Restricts the complex to the chains of one group (the unbound-state view).
    pub fn group_view(&self, group: Group) -> Complex {
        let keep = match group {
            Group::Binder => &self.binder_group,
            Group::Target => &self.target_group,
        };
        Complex {
            pdb_id: self.pdb_id.clone(),
            chains: self.chains.iter().filter(|c| keep.contains(&c.chain_id)).cloned().collect(),
            binder_group: if group == Group::Binder { keep.clone() } else { BTreeSet::new() },
            target_group: if group == Group::Target { keep.clone() } else { BTreeSet::new() },
        }
    }

    /// Key identifying the complex together with its group assignment.
    pub fn key(&self) -> ComplexKey {
        ComplexKey {
            pdb_id: self.pdb_id.clone(),
            binder: self.binder_group.iter().collect(),
            target: self.target_group.iter().collect(),
        }
    }
}

/// `pdb_id` plus group assignment, e.g. `1PPF_E_I`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComplexKey {
    pub pdb_id: String,
    pub binder: String,
    pub target: String,
}

impl fmt::Display for ComplexKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}_{}", self.pdb_id, self.binder, self.target)
    }
}

/// Parses a chain-group string such as `"HL"`, `"H,L"` or `"H L"`.
pub fn parse_chain_group(text: &str) -> BTreeSet<char> {
    text.chars().filter(|c| c.is_ascii_alphanumeric()).collect()
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{source_name}line {line}, columns {columns}: {reason}")]
    MalformedAtom { source_name: String, line: usize, columns: &'static str, reason: String },
    #[error("{source_name}line {line}, columns 18-20: unknown residue name {name:?}")]
    UnknownResidue { source_name: String, line: usize, name: String },
    #[error("requested chain {0} is absent from the structure")]
    ChainAbsent(char),
    #[error("structure contains no ATOM records for the requested chains")]
    EmptyStructure,
    #[error("invalid chain groups: {0}")]
    InvalidGroups(String),
    #[error("mutation {code:?}, column {column}: unknown amino-acid letter {letter:?}")]
    UnknownAminoAcid { code: String, column: usize, letter: char },
    #[error("mutation {code:?}: {reason}")]
    MalformedMutation { code: String, reason: String },
    #[error("mutation {code:?}: wild-type and mutant residue are identical")]
    DegenerateMutation { code: String },
    #[error("mutation {mutation}: site not found in complex {pdb_id}")]
    SiteNotFound { mutation: String, pdb_id: String },
    #[error("mutation {mutation}: structure has {found} at this site (corrupt data?)")]
    WildTypeMismatch { mutation: String, found: char },
    #[error("mutation set mutates site {0} more than once")]
    DuplicateSite(String),
    #[error("table is missing required column {0:?}")]
    MissingColumn(String),
    #[error("row {row}, column {column:?}: {message}")]
    Row { row: usize, column: String, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
