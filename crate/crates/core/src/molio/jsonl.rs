use super::{Dataset, Molecule, MolioError};

/// Parses the native JSON-lines format: one molecule object per nonempty
/// line. Errors carry the 1-based line number.
pub fn parse_jsonl(text: &str) -> Result<Dataset, MolioError> {
    let mut molecules = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let molecule: Molecule = serde_json::from_str(line).map_err(|e| MolioError::Parse {
            line: line_no,
            record: None,
            msg: format!("malformed record: {e}"),
        })?;
        molecule.validate().map_err(|msg| MolioError::Parse {
            line: line_no,
            record: None,
            msg,
        })?;
        molecules.push(molecule);
    }
    if molecules.is_empty() {
        return Err(MolioError::NoRecords);
    }
    Dataset::from_molecules(molecules)
}

/// Serializes a dataset back to JSONL, one molecule per line, in order.
/// This is the normalization fixed point: parsing the output reproduces a
/// structurally identical dataset, and re-serializing is byte-identical.
pub fn write_jsonl(dataset: &Dataset) -> String {
    let mut out = String::new();
    for molecule in &dataset.molecules {
        out.push_str(&serde_json::to_string(molecule).expect("molecule serialization"));
        out.push('\n');
    }
    out
}
