//! Externally computed conditionals loaded from CSV.
//!
//! Columns: `complex_id,state,chain,position,insertion_code,aa,logp`, with
//! `state` either `bound` or `unbound`. `complex_id` is matched against the
//! complex key (`PDB_BINDER_TARGET`) first and the bare PDB id second. Every
//! position must list all 20 amino acids and be normalized.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;

use super::{check_normalized, LogProbProvider, SeqModelError, SiteQuery, State};
use crate::ingest::{AminoAcid, ResidueId};

type EntryKey = (String, bool, ResidueId);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrecomputedLogProbs {
    entries: HashMap<EntryKey, [f64; 20]>,
}

#[derive(Debug, Deserialize)]
struct Row {
    complex_id: String,
    state: String,
    chain: String,
    position: i32,
    #[serde(default)]
    insertion_code: Option<String>,
    aa: String,
    logp: f64,
}

fn row_err(row: usize, column: &'static str, message: impl Into<String>) -> SeqModelError {
    SeqModelError::Row { row, column, message: message.into() }
}

fn state_of(unbound: bool) -> State {
    // only used for messages; the group is implied by the chain
    if unbound {
        State::Unbound(crate::ingest::Group::Binder)
    } else {
        State::Bound
    }
}

impl PrecomputedLogProbs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds one position after checking normalization.
    pub fn insert(&mut self, complex_id: &str, unbound: bool, site: ResidueId, logp: [f64; 20]) -> Result<(), SeqModelError> {
        check_normalized(&logp).map_err(|total| SeqModelError::Normalization {
            complex: complex_id.to_string(),
            state: state_of(unbound),
            site,
            total,
        })?;
        self.entries.insert((complex_id.to_string(), unbound, site), logp);
        Ok(())
    }

    pub fn get(&self, complex_id: &str, unbound: bool, site: &ResidueId) -> Option<&[f64; 20]> {
        self.entries.get(&(complex_id.to_string(), unbound, *site))
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, SeqModelError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut partial: BTreeMap<EntryKey, [Option<f64>; 20]> = BTreeMap::new();
        for (i, rec) in rdr.deserialize::<Row>().enumerate() {
            let row = i + 2;
            let r = rec?;
            let unbound = match r.state.to_ascii_lowercase().as_str() {
                "bound" => false,
                "unbound" => true,
                other => return Err(row_err(row, "state", format!("expected bound or unbound, got {other:?}"))),
            };
            let mut chain = r.chain.chars();
            let (Some(chain), None) = (chain.next(), chain.next()) else {
                return Err(row_err(row, "chain", format!("expected one character, got {:?}", r.chain)));
            };
            let icode = match r.insertion_code.as_deref().map(str::trim) {
                None | Some("") => None,
                Some(s) if s.chars().count() == 1 => s.chars().next(),
                Some(s) => return Err(row_err(row, "insertion_code", format!("expected at most one character, got {s:?}"))),
            };
            let aa = match r.aa.len() {
                1 => AminoAcid::from_letter(r.aa.chars().next().expect("length 1")),
                3 => AminoAcid::from_three_letter(&r.aa),
                _ => None,
            }
            .ok_or_else(|| row_err(row, "aa", format!("unknown amino acid {:?}", r.aa)))?;
            if !r.logp.is_finite() && r.logp != f64::NEG_INFINITY {
                return Err(row_err(row, "logp", format!("not a log-probability: {}", r.logp)));
            }
            let site = ResidueId::with_icode(chain, r.position, icode);
            let slot = &mut partial.entry((r.complex_id.clone(), unbound, site)).or_insert([None; 20])[aa.zero_based()];
            if slot.is_some() {
                return Err(SeqModelError::Duplicate { complex: r.complex_id, state: state_of(unbound), site, aa });
            }
            *slot = Some(r.logp);
        }
        let mut out = Self::new();
        for ((complex, unbound, site), values) in partial {
            let found = values.iter().filter(|v| v.is_some()).count();
            if found != 20 {
                return Err(SeqModelError::Coverage { complex, state: state_of(unbound), site, found });
            }
            out.insert(&complex, unbound, site, values.map(|v| v.expect("all present")))?;
        }
        Ok(out)
    }

    pub fn from_path(path: &Path) -> Result<Self, SeqModelError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    /// Writes all entries in a deterministic order.
    pub fn write<W: Write>(&self, writer: W) -> Result<(), SeqModelError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["complex_id", "state", "chain", "position", "insertion_code", "aa", "logp"])?;
        let mut keys: Vec<&EntryKey> = self.entries.keys().collect();
        keys.sort();
        for key in keys {
            let (complex, unbound, site) = key;
            for aa in AminoAcid::all() {
                w.write_record([
                    complex.clone(),
                    if *unbound { "unbound" } else { "bound" }.to_string(),
                    site.chain.to_string(),
                    site.seq.to_string(),
                    site.icode.map(String::from).unwrap_or_default(),
                    aa.letter().to_string(),
                    format!("{:e}", self.entries[key][aa.zero_based()]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

impl LogProbProvider for PrecomputedLogProbs {
    fn site_logprobs(&self, q: &SiteQuery<'_>) -> Result<[f64; 20], SeqModelError> {
        let unbound = matches!(q.state, State::Unbound(_));
        let full = q.key.to_string();
        self.get(&full, unbound, &q.site)
            .or_else(|| self.get(&q.key.pdb_id, unbound, &q.site))
            .copied()
            .ok_or(SeqModelError::Missing { complex: full, state: q.state, site: q.site })
    }
}
