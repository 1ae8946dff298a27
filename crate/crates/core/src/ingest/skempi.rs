//! SKEMPI-style mutation tables.
//!
//! Required header columns: `pdb_id`, `binder_chains`, `target_chains`,
//! `mutations` (codes separated by `;`) and `ddg` (kcal/mol). Column names are
//! matched case-insensitively. Rows are numbered from 1 for the first data row.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{parse_chain_group, ComplexKey, IngestError, MutationSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkempiRecord {
    pub pdb_id: String,
    pub binder_chains: BTreeSet<char>,
    pub target_chains: BTreeSet<char>,
    pub mutations: MutationSet,
    /// Binding free energy change in kcal/mol.
    pub ddg: f64,
    /// Complex identity used for fold assignment.
    pub split_key: String,
    /// 1-based data row in the source table.
    pub row: usize,
}

impl SkempiRecord {
    pub fn complex_key(&self) -> ComplexKey {
        ComplexKey {
            pdb_id: self.pdb_id.clone(),
            binder: self.binder_chains.iter().collect(),
            target: self.target_chains.iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SkempiTable {
    pub records: Vec<SkempiRecord>,
    /// Rows skipped because the ΔΔG cell was empty.
    pub dropped_missing_ddg: usize,
}

/// A mutation set to score without a known label.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRecord {
    pub pdb_id: String,
    pub binder_chains: BTreeSet<char>,
    pub target_chains: BTreeSet<char>,
    pub mutations: MutationSet,
    pub ddg: Option<f64>,
    pub row: usize,
}

struct Columns {
    pdb: usize,
    binder: usize,
    target: usize,
    mutations: usize,
    ddg: Option<usize>,
}

fn locate(headers: &csv::StringRecord, need_ddg: bool) -> Result<Columns, IngestError> {
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let ddg = match find("ddg") {
        Ok(i) => Some(i),
        Err(e) if need_ddg => return Err(e),
        Err(_) => None,
    };
    Ok(Columns {
        pdb: find("pdb_id")?,
        binder: find("binder_chains")?,
        target: find("target_chains")?,
        mutations: find("mutations")?,
        ddg,
    })
}

fn row_error(row: usize, column: &str, message: impl Into<String>) -> IngestError {
    IngestError::Row { row, column: column.to_string(), message: message.into() }
}

fn reader(csv_text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(false).from_reader(csv_text.as_bytes())
}

fn common(
    rec: &csv::StringRecord,
    cols: &Columns,
    row: usize,
) -> Result<(String, BTreeSet<char>, BTreeSet<char>, MutationSet), IngestError> {
    let pdb_id = rec.get(cols.pdb).unwrap_or("").to_string();
    if pdb_id.is_empty() {
        return Err(row_error(row, "pdb_id", "empty pdb id"));
    }
    let binder = parse_chain_group(rec.get(cols.binder).unwrap_or(""));
    let target = parse_chain_group(rec.get(cols.target).unwrap_or(""));
    if binder.is_empty() || target.is_empty() {
        return Err(row_error(row, "binder_chains/target_chains", "chain groups must be non-empty"));
    }
    if !binder.is_disjoint(&target) {
        return Err(row_error(row, "binder_chains/target_chains", "chain groups overlap"));
    }
    let mutations =
        MutationSet::parse(rec.get(cols.mutations).unwrap_or("")).map_err(|e| row_error(row, "mutations", e.to_string()))?;
    if mutations.is_empty() {
        return Err(row_error(row, "mutations", "no mutation codes"));
    }
    for m in mutations.iter() {
        if !binder.contains(&m.site.chain) && !target.contains(&m.site.chain) {
            return Err(row_error(row, "mutations", format!("{m} is on a chain outside both groups")));
        }
    }
    Ok((pdb_id, binder, target, mutations))
}

/// Parses a labelled table; rows with an empty ΔΔG cell are dropped and counted.
pub fn parse_skempi_table(csv_text: &str) -> Result<SkempiTable, IngestError> {
    let mut rdr = reader(csv_text);
    let cols = locate(rdr.headers()?, true)?;
    let ddg_col = cols.ddg.expect("ddg column required");
    let mut table = SkempiTable::default();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let ddg_text = rec.get(ddg_col).unwrap_or("");
        if ddg_text.is_empty() {
            table.dropped_missing_ddg += 1;
            continue;
        }
        let ddg: f64 = ddg_text.parse().map_err(|_| row_error(row, "ddg", format!("cannot parse {ddg_text:?}")))?;
        if !ddg.is_finite() {
            return Err(row_error(row, "ddg", "non-finite value"));
        }
        let (pdb_id, binder_chains, target_chains, mutations) = common(&rec, &cols, row)?;
        table.records.push(SkempiRecord {
            split_key: pdb_id.clone(),
            pdb_id,
            binder_chains,
            target_chains,
            mutations,
            ddg,
            row,
        });
    }
    if table.dropped_missing_ddg > 0 {
        log::warn!("dropped {} rows with missing ddg", table.dropped_missing_ddg);
    }
    Ok(table)
}

/// Parses an unlabelled candidate table (same columns, `ddg` optional).
pub fn parse_candidate_table(csv_text: &str) -> Result<Vec<CandidateRecord>, IngestError> {
    let mut rdr = reader(csv_text);
    let cols = locate(rdr.headers()?, false)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let (pdb_id, binder_chains, target_chains, mutations) = common(&rec, &cols, row)?;
        let ddg = match cols.ddg.and_then(|c| rec.get(c)).filter(|s| !s.is_empty()) {
            Some(t) => Some(t.parse().map_err(|_| row_error(row, "ddg", format!("cannot parse {t:?}")))?),
            None => None,
        };
        out.push(CandidateRecord { pdb_id, binder_chains, target_chains, mutations, ddg, row });
    }
    Ok(out)
}
