//! Loading mutation tables together with their structures.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ebmddg::ddg::DdgRecord;
use ebmddg::geometry::select_neighborhood;
use ebmddg::ingest::{apply_mutation_set, parse_candidate_table, parse_pdb, parse_skempi_table, Complex, ComplexKey, MutationSet};
use serde::Serialize;

use crate::error::CliError;

/// A usable labeled record with its source row.
#[derive(Debug, Clone)]
pub struct Entry {
    pub row: usize,
    pub record: DdgRecord,
}

/// A table row that could not be used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skipped {
    pub row: usize,
    pub pdb_id: String,
    pub mutations: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub entries: Vec<Entry>,
    pub complexes: BTreeMap<ComplexKey, Arc<Complex>>,
    pub skipped: Vec<Skipped>,
    pub dropped_missing_ddg: usize,
    pub structure_files: Vec<PathBuf>,
}

impl Dataset {
    pub fn split_keys(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.record.split_key.clone()).collect()
    }

    /// Distinct complexes whose split key is in `keys`.
    pub fn complexes_for(&self, keys: &BTreeSet<String>) -> Vec<Complex> {
        let mut seen = BTreeSet::new();
        self.entries
            .iter()
            .filter(|e| keys.contains(&e.record.split_key))
            .filter(|e| seen.insert(e.record.complex.key()))
            .map(|e| (*e.record.complex).clone())
            .collect()
    }

    pub fn all_complexes(&self) -> Vec<Complex> {
        self.complexes.values().map(|c| (**c).clone()).collect()
    }

    pub fn entry_by_row(&self, row: usize) -> Option<&Entry> {
        self.entries.iter().find(|e| e.row == row)
    }
}

pub fn structure_path(dir: &Path, pdb_id: &str) -> PathBuf {
    dir.join(format!("{pdb_id}.pdb"))
}

/// Structure cache keyed by complex key.
#[derive(Debug, Default)]
pub struct Structures {
    dir: PathBuf,
    cache: BTreeMap<ComplexKey, Arc<Complex>>,
    files: BTreeSet<PathBuf>,
}

impl Structures {
    pub fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), ..Default::default() }
    }

    pub fn get(&mut self, pdb_id: &str, binder: &BTreeSet<char>, target: &BTreeSet<char>) -> Result<Arc<Complex>, CliError> {
        let key = ComplexKey { pdb_id: pdb_id.to_string(), binder: binder.iter().collect(), target: target.iter().collect() };
        if let Some(c) = self.cache.get(&key) {
            return Ok(c.clone());
        }
        let path = structure_path(&self.dir, pdb_id);
        let text = fs::read_to_string(&path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let complex = parse_pdb(&text, pdb_id, binder, target).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let complex = Arc::new(complex);
        self.files.insert(path);
        self.cache.insert(key, complex.clone());
        Ok(complex)
    }
}

/// Why a mutation set cannot be scored on `complex`, if it cannot.
pub fn check_mutations(complex: &Complex, muts: &MutationSet, k: usize) -> Option<String> {
    if let Err(e) = apply_mutation_set(complex, muts) {
        return Some(e.to_string());
    }
    select_neighborhood(complex, muts, k).err().map(|e| e.to_string())
}

/// Reads the labeled table and every referenced structure.
///
/// Rows whose mutations do not match the structure are skipped and reported;
/// unreadable structures abort.
pub fn load_dataset(structures_dir: &Path, table: &Path, k: usize) -> Result<Dataset, CliError> {
    let text = fs::read_to_string(table).map_err(|e| CliError::input(format!("{}: {e}", table.display())))?;
    let parsed = parse_skempi_table(&text).map_err(|e| CliError::input(format!("{}: {e}", table.display())))?;
    let mut structures = Structures::new(structures_dir);
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for rec in parsed.records {
        let complex = structures.get(&rec.pdb_id, &rec.binder_chains, &rec.target_chains)?;
        if let Some(reason) = check_mutations(&complex, &rec.mutations, k) {
            log::warn!("row {}: skipping {} on {}: {reason}", rec.row, rec.mutations, rec.pdb_id);
            skipped.push(Skipped { row: rec.row, pdb_id: rec.pdb_id, mutations: rec.mutations.to_string(), reason });
            continue;
        }
        entries.push(Entry {
            row: rec.row,
            record: DdgRecord { complex, muts: rec.mutations, ddg: rec.ddg, split_key: rec.split_key },
        });
    }
    Ok(Dataset {
        entries,
        complexes: structures.cache,
        skipped,
        dropped_missing_ddg: parsed.dropped_missing_ddg,
        structure_files: structures.files.into_iter().collect(),
    })
}

/// A candidate mutation set to rank.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub row: usize,
    pub complex: Arc<Complex>,
    pub muts: MutationSet,
    pub ddg: Option<f64>,
}

pub fn load_candidates(structures_dir: &Path, table: &Path, k: usize) -> Result<(Vec<Candidate>, Vec<Skipped>), CliError> {
    let text = fs::read_to_string(table).map_err(|e| CliError::input(format!("{}: {e}", table.display())))?;
    let parsed = parse_candidate_table(&text).map_err(|e| CliError::input(format!("{}: {e}", table.display())))?;
    let mut structures = Structures::new(structures_dir);
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for rec in parsed {
        let complex = structures.get(&rec.pdb_id, &rec.binder_chains, &rec.target_chains)?;
        if let Some(reason) = check_mutations(&complex, &rec.mutations, k) {
            skipped.push(Skipped { row: rec.row, pdb_id: rec.pdb_id, mutations: rec.mutations.to_string(), reason });
            continue;
        }
        out.push(Candidate { row: rec.row, complex, muts: rec.mutations, ddg: rec.ddg });
    }
    Ok((out, skipped))
}
