use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AminoAcid, Complex, IngestError, ResidueId};

/// A point substitution: `wt` at `site` becomes `mt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mutation {
    pub wt: AminoAcid,
    pub site: ResidueId,
    pub mt: AminoAcid,
}

impl Mutation {
    /// Unchecked constructor; allows `wt == mt` for calibration probes.
    pub fn new(wt: AminoAcid, site: ResidueId, mt: AminoAcid) -> Self {
        Self { wt, site, mt }
    }

    pub fn is_degenerate(&self) -> bool {
        self.wt == self.mt
    }

    /// The reverse substitution (mutant back to wild type).
    pub fn reversed(&self) -> Self {
        Self { wt: self.mt, site: self.site, mt: self.wt }
    }
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_mutation(self))
    }
}

impl FromStr for Mutation {
    type Err = IngestError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_mutation(s)
    }
}

/// Parses codes like `TH31W` (wild type, chain, residue number, mutant) and
/// `TH100aW` (with insertion code). Negative residue numbers are accepted.
pub fn parse_mutation(code: &str) -> Result<Mutation, IngestError> {
    let chars: Vec<char> = code.trim().chars().collect();
    let bad = |reason: &str| IngestError::MalformedMutation { code: code.to_string(), reason: reason.to_string() };
    if chars.len() < 4 {
        return Err(bad("expected <wt><chain><index><mut>"));
    }
    let wt = AminoAcid::from_letter(chars[0]).filter(|_| chars[0].is_ascii_uppercase()).ok_or(
        IngestError::UnknownAminoAcid { code: code.to_string(), column: 1, letter: chars[0] },
    )?;
    let chain = chars[1];
    if !chain.is_ascii_alphanumeric() {
        return Err(bad("chain identifier must be alphanumeric"));
    }
    let last = chars.len() - 1;
    let mt = AminoAcid::from_letter(chars[last]).filter(|_| chars[last].is_ascii_uppercase()).ok_or(
        IngestError::UnknownAminoAcid { code: code.to_string(), column: last + 1, letter: chars[last] },
    )?;
    let mut middle: &[char] = &chars[2..last];
    let mut icode = None;
    if let Some(&c) = middle.last() {
        if c.is_ascii_alphabetic() {
            icode = Some(c);
            middle = &middle[..middle.len() - 1];
        }
    }
    let digits: String = middle.iter().collect();
    let body = digits.strip_prefix('-').unwrap_or(&digits);
    if body.is_empty() || !body.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad("residue index is not numeric"));
    }
    let seq: i32 = digits.parse().map_err(|_| bad("residue index out of range"))?;
    if wt == mt {
        return Err(IngestError::DegenerateMutation { code: code.to_string() });
    }
    Ok(Mutation { wt, site: ResidueId { chain, seq, icode }, mt })
}

pub fn format_mutation(m: &Mutation) -> String {
    let mut s = String::new();
    s.push(m.wt.letter());
    s.push(m.site.chain);
    s.push_str(&m.site.seq.to_string());
    if let Some(ic) = m.site.icode {
        s.push(ic);
    }
    s.push(m.mt.letter());
    s
}

/// An ordered collection of point mutations applied together.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MutationSet(pub Vec<Mutation>);

impl MutationSet {
    pub fn new(muts: Vec<Mutation>) -> Self {
        Self(muts)
    }

    /// Parses semicolon- or comma-separated codes.
    pub fn parse(text: &str) -> Result<Self, IngestError> {
        text.split([';', ','])
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(parse_mutation)
            .collect::<Result<Vec<_>, _>>()
            .map(Self)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Mutation> {
        self.0.iter()
    }

    pub fn sites(&self) -> Vec<ResidueId> {
        self.0.iter().map(|m| m.site).collect()
    }

    /// All mutations keep their wild-type residue.
    pub fn is_degenerate(&self) -> bool {
        self.0.iter().all(Mutation::is_degenerate)
    }

    pub fn reversed(&self) -> Self {
        Self(self.0.iter().map(Mutation::reversed).collect())
    }
}

impl fmt::Display for MutationSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let codes: Vec<String> = self.0.iter().map(format_mutation).collect();
        f.write_str(&codes.join(";"))
    }
}

/// Returns a copy of `complex` with every site's residue type replaced.
///
/// Coordinates are left untouched; wild-type identities must match.
pub fn apply_mutation_set(complex: &Complex, muts: &MutationSet) -> Result<Complex, IngestError> {
    let mut seen = HashSet::new();
    let mut out = complex.clone();
    for m in muts.iter() {
        if !seen.insert(m.site) {
            return Err(IngestError::DuplicateSite(m.site.to_string()));
        }
        let residue = out.residue_mut(&m.site).ok_or_else(|| IngestError::SiteNotFound {
            mutation: format_mutation(m),
            pdb_id: complex.pdb_id.clone(),
        })?;
        if residue.aa != m.wt {
            return Err(IngestError::WildTypeMismatch { mutation: format_mutation(m), found: residue.aa.letter() });
        }
        residue.aa = m.mt;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;

    use super::*;
    use crate::ingest::{ProteinChain, Residue};

    fn aa(c: char) -> AminoAcid {
        AminoAcid::from_letter(c).unwrap()
    }

    #[test]
    fn parses_reference_codes() {
        let m = parse_mutation("TH31W").unwrap();
        assert_eq!((m.wt.three_letter(), m.site.chain, m.site.seq, m.mt.three_letter()), ("THR", 'H', 31, "TRP"));
        let m = parse_mutation("PI14G").unwrap();
        assert_eq!((m.wt.three_letter(), m.site.chain, m.site.seq, m.mt.three_letter()), ("PRO", 'I', 14, "GLY"));
        let m = parse_mutation("KA100bE").unwrap();
        assert_eq!(m.site.icode, Some('b'));
        assert_eq!(parse_mutation("GB-5A").unwrap().site.seq, -5);
    }

    #[test]
    fn rejects_bad_codes() {
        assert!(matches!(parse_mutation("XH31W"), Err(IngestError::UnknownAminoAcid { column: 1, .. })));
        assert!(matches!(parse_mutation("TH31Z"), Err(IngestError::UnknownAminoAcid { column: 5, .. })));
        assert!(matches!(parse_mutation("THxxW"), Err(IngestError::MalformedMutation { .. })));
        assert!(matches!(parse_mutation("TH31T"), Err(IngestError::DegenerateMutation { .. })));
        assert!(matches!(parse_mutation("TH"), Err(IngestError::MalformedMutation { .. })));
    }

    #[test]
    fn sets_split_on_semicolons() {
        let set = MutationSet::parse("TH31W;AH53F").unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.to_string(), "TH31W;AH53F");
    }

    fn fixture() -> Complex {
        let res = |chain, seq, c| Residue {
            aa: aa(c),
            id: ResidueId::new(chain, seq),
            backbone: [Some([seq as f64, 0.0, 0.0]), Some([seq as f64, 1.0, 0.0]), Some([0.0; 3]), None],
        };
        Complex::new(
            "FIX",
            vec![
                ProteinChain { chain_id: 'A', residues: vec![res('A', 1, 'A'), res('A', 2, 'G')] },
                ProteinChain { chain_id: 'B', residues: vec![res('B', 1, 'S')] },
            ],
            BTreeSet::from(['A']),
            BTreeSet::from(['B']),
        )
        .unwrap()
    }

    #[test]
    fn empty_set_is_identity() {
        let c = fixture();
        assert_eq!(apply_mutation_set(&c, &MutationSet::default()).unwrap(), c);
    }

    #[test]
    fn wild_type_mismatch_is_reported() {
        let c = fixture();
        let m = MutationSet::new(vec![Mutation::new(aa('G'), ResidueId::new('A', 1), aa('W'))]);
        assert!(matches!(apply_mutation_set(&c, &m), Err(IngestError::WildTypeMismatch { found: 'A', .. })));
        let missing = MutationSet::new(vec![Mutation::new(aa('A'), ResidueId::new('A', 9), aa('W'))]);
        assert!(matches!(apply_mutation_set(&c, &missing), Err(IngestError::SiteNotFound { .. })));
    }

    #[test]
    fn single_mutation_changes_exactly_one_residue_and_no_coordinates() {
        let c = fixture();
        let m = MutationSet::parse("AA1W").unwrap();
        let out = apply_mutation_set(&c, &m).unwrap();
        let diffs = c.residues().zip(out.residues()).filter(|(a, b)| a.aa != b.aa).count();
        assert_eq!(diffs, 1);
        for (a, b) in c.residues().zip(out.residues()) {
            for (pa, pb) in a.backbone.iter().zip(b.backbone.iter()) {
                assert_eq!(pa.map(|p| p.map(f64::to_bits)), pb.map(|p| p.map(f64::to_bits)));
            }
        }
    }

    #[test]
    fn duplicate_sites_are_rejected() {
        let c = fixture();
        let m = MutationSet::parse("AA1W;AA1F").unwrap();
        assert!(matches!(apply_mutation_set(&c, &m), Err(IngestError::DuplicateSite(_))));
    }

    proptest! {
        #[test]
        fn format_inverts_parse(wt in 0usize..20, mt in 0usize..20, chain in "[A-Za-z0-9]",
                                seq in -999i32..10000, icode in proptest::option::of("[a-z]")) {
            prop_assume!(wt != mt);
            let mut code = format!("{}{}{}", one_letter(wt), chain, seq);
            if let Some(ic) = &icode { code.push_str(ic); }
            code.push(one_letter(mt));
            let parsed = parse_mutation(&code).unwrap();
            prop_assert_eq!(format_mutation(&parsed), code);
        }
    }

    fn one_letter(i: usize) -> char {
        crate::ingest::ONE_LETTER[i] as char
    }
}
