//! Fixed-column PDB reader for backbone atoms.
//!
//! Only `ATOM` records of the first model are read. Side-chain atoms, hetero
//! atoms and waters are ignored; for alternate locations the first occurrence
//! of each atom wins.

use std::collections::{BTreeSet, HashMap};

use super::{AminoAcid, BackboneAtom, Complex, IngestError, ProteinChain, Residue, ResidueId};

/// Column slice using 1-based inclusive PDB column numbers; short lines yield `None`.
fn columns(line: &str, start: usize, end: usize) -> Option<&str> {
    let bytes = line.as_bytes();
    if bytes.len() < start {
        return None;
    }
    let end = end.min(bytes.len());
    line.get(start - 1..end)
}

fn malformed(line: usize, cols: &'static str, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedAtom { source_name: String::new(), line, columns: cols, reason: reason.into() }
}

fn parse_coord(line: &str, lineno: usize, start: usize, end: usize, cols: &'static str) -> Result<f64, IngestError> {
    let field = columns(line, start, end).ok_or_else(|| malformed(lineno, cols, "line too short"))?;
    let value: f64 = field
        .trim()
        .parse()
        .map_err(|_| malformed(lineno, cols, format!("cannot parse coordinate {:?}", field.trim())))?;
    if !value.is_finite() {
        return Err(malformed(lineno, cols, "non-finite coordinate"));
    }
    Ok(value)
}

/// Parses PDB text into a [`Complex`] restricted to the binder and target chains.
///
/// Residues lacking some backbone atoms are kept (with `None` slots) but do
/// not take part in geometry.
pub fn parse_pdb(
    text: &str,
    pdb_id: &str,
    binder_chains: &BTreeSet<char>,
    target_chains: &BTreeSet<char>,
) -> Result<Complex, IngestError> {
    let wanted: BTreeSet<char> = binder_chains.union(target_chains).copied().collect();
    let mut chain_order: Vec<char> = Vec::new();
    let mut chains: HashMap<char, Vec<Residue>> = HashMap::new();
    let mut lookup: HashMap<ResidueId, (char, usize)> = HashMap::new();
    let mut any_atom = false;

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.starts_with("ENDMDL") {
            break;
        }
        if !line.starts_with("ATOM  ") && !line.starts_with("ATOM ") {
            continue;
        }
        if line.len() < 54 {
            return Err(malformed(lineno, "1-54", format!("ATOM record has {} columns, need 54", line.len())));
        }
        let chain = columns(line, 22, 22).and_then(|s| s.chars().next()).unwrap_or(' ');
        any_atom = true;
        if !wanted.contains(&chain) {
            continue;
        }
        let atom_name = columns(line, 13, 16).unwrap_or("");
        let Some(atom) = BackboneAtom::from_name(atom_name) else {
            continue;
        };
        let res_name = columns(line, 18, 20).unwrap_or("").trim();
        let aa = AminoAcid::from_three_letter(res_name).ok_or_else(|| IngestError::UnknownResidue {
            source_name: String::new(),
            line: lineno,
            name: res_name.to_string(),
        })?;
        let seq_field = columns(line, 23, 26).unwrap_or("");
        let seq: i32 = seq_field
            .trim()
            .parse()
            .map_err(|_| malformed(lineno, "23-26", format!("cannot parse residue number {:?}", seq_field.trim())))?;
        let icode = columns(line, 27, 27).and_then(|s| s.chars().next()).filter(|c| !c.is_whitespace());
        let x = parse_coord(line, lineno, 31, 38, "31-38")?;
        let y = parse_coord(line, lineno, 39, 46, "39-46")?;
        let z = parse_coord(line, lineno, 47, 54, "47-54")?;

        let id = ResidueId { chain, seq, icode };
        let (_, idx) = *lookup.entry(id).or_insert_with(|| {
            let list = chains.entry(chain).or_insert_with(|| {
                chain_order.push(chain);
                Vec::new()
            });
            list.push(Residue { aa, id, backbone: [None; 4] });
            (chain, list.len() - 1)
        });
        let residue = &mut chains.get_mut(&chain).expect("chain inserted above")[idx];
        // first occurrence wins for alternate locations
        if residue.backbone[atom.slot()].is_none() {
            residue.backbone[atom.slot()] = Some([x, y, z]);
        }
    }

    if !any_atom {
        return Err(IngestError::EmptyStructure);
    }
    for c in &wanted {
        if !chains.contains_key(c) {
            return Err(IngestError::ChainAbsent(*c));
        }
    }
    let chains = chain_order
        .into_iter()
        .map(|c| ProteinChain { chain_id: c, residues: chains.remove(&c).unwrap_or_default() })
        .collect();
    Complex::new(pdb_id, chains, binder_chains.clone(), target_chains.clone())
}

/// Writes backbone atoms as fixed-column `ATOM` records (used for fixtures and sample dumps).
pub fn write_backbone_pdb(complex: &Complex) -> String {
    let mut out = String::new();
    let mut serial = 1;
    for chain in &complex.chains {
        for res in &chain.residues {
            for atom in BackboneAtom::ALL {
                let Some(p) = res.atom(atom) else { continue };
                let element = &atom.name()[..1];
                out.push_str(&format!(
                    "ATOM  {:>5} {:<4} {:>3} {}{:>4}{}   {:>8.3}{:>8.3}{:>8.3}  1.00  0.00          {:>2}\n",
                    serial,
                    format!(" {}", atom.name()),
                    res.aa.three_letter(),
                    chain.chain_id,
                    res.id.seq,
                    res.id.icode.unwrap_or(' '),
                    p[0],
                    p[1],
                    p[2],
                    element,
                ));
                serial += 1;
            }
        }
        out.push_str("TER\n");
    }
    out.push_str("END\n");
    out
}
