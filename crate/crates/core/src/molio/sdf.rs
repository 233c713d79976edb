use std::collections::BTreeMap;

use super::{elements, Atom, Bond, Molecule, MolioError};

fn parse_err(record: usize, line: usize, msg: impl Into<String>) -> MolioError {
    MolioError::Parse { line, record: Some(record), msg: msg.into() }
}

/// Parses SDF V2000 molblocks: a 3-line header, a counts line, atom rows
/// `x y z symbol ...`, bond rows `i j order ...` (1-based), properties up to
/// `M  END`, then `> <name>` data items whose first value line, when numeric,
/// becomes a target. Records are separated by `$$$$`.
///
/// Column parsing is whitespace-tolerant rather than fixed-width; anything
/// that does not fit the shape above is a parse error carrying the record
/// index and the 1-based line number, never a silent coercion.
pub fn parse_sdf_v2000(text: &str) -> Result<Vec<Molecule>, MolioError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut molecules = Vec::new();
    let mut pos = 0;

    loop {
        while pos < lines.len() && lines[pos].trim().is_empty() && record_is_blank(&lines[pos..]) {
            pos += 1;
        }
        if pos >= lines.len() {
            break;
        }
        let record = molecules.len() + 1;
        let (molecule, next) = parse_record(&lines, pos, record)?;
        molecules.push(molecule);
        pos = next;
    }

    if molecules.is_empty() {
        return Err(MolioError::NoRecords);
    }
    Ok(molecules)
}

// True when everything that remains is whitespace (trailing padding after
// the last record, not a blank header line of a further record).
fn record_is_blank(rest: &[&str]) -> bool {
    rest.iter().all(|l| l.trim().is_empty())
}

fn parse_record(
    lines: &[&str],
    start: usize,
    record: usize,
) -> Result<(Molecule, usize), MolioError> {
    let counts_idx = start + 3;
    let counts_line = *lines.get(counts_idx).ok_or_else(|| {
        parse_err(record, lines.len(), "truncated record: missing counts line")
    })?;
    let counts_no = counts_idx + 1;

    if counts_line.contains("V3000") {
        return Err(parse_err(record, counts_no, "V3000 molblocks are not supported"));
    }
    let tokens: Vec<&str> = counts_line.split_whitespace().collect();
    if tokens.len() < 2 {
        return Err(parse_err(
            record,
            counts_no,
            format!("bad counts line '{}': expected atom and bond counts", counts_line.trim()),
        ));
    }
    let n_atoms: usize = tokens[0].parse().map_err(|_| {
        parse_err(record, counts_no, format!("bad counts line: cannot parse atom count '{}'", tokens[0]))
    })?;
    let n_bonds: usize = tokens[1].parse().map_err(|_| {
        parse_err(record, counts_no, format!("bad counts line: cannot parse bond count '{}'", tokens[1]))
    })?;
    if n_atoms == 0 {
        return Err(parse_err(record, counts_no, "molecule has no atoms"));
    }

    let mut atoms = Vec::with_capacity(n_atoms);
    for k in 0..n_atoms {
        let idx = counts_idx + 1 + k;
        let line_no = idx + 1;
        let line = *lines
            .get(idx)
            .ok_or_else(|| parse_err(record, lines.len(), "truncated atom block"))?;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() < 4 {
            return Err(parse_err(record, line_no, format!("atom row needs x y z symbol, got '{line}'")));
        }
        let mut pos = [0.0; 3];
        for (axis, col) in cols[..3].iter().enumerate() {
            pos[axis] = col
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(record, line_no, format!("bad coordinate '{col}'")))?;
        }
        let z = elements::atomic_number(cols[3])
            .ok_or_else(|| parse_err(record, line_no, format!("unknown element symbol '{}'", cols[3])))?;
        atoms.push(Atom { z, pos });
    }

    let mut bonds: Vec<Bond> = Vec::with_capacity(n_bonds);
    for k in 0..n_bonds {
        let idx = counts_idx + 1 + n_atoms + k;
        let line_no = idx + 1;
        let line = *lines
            .get(idx)
            .ok_or_else(|| parse_err(record, lines.len(), "truncated bond block"))?;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() < 3 {
            return Err(parse_err(record, line_no, format!("bond row needs i j order, got '{line}'")));
        }
        let parse_atom_ref = |col: &str| -> Result<usize, MolioError> {
            let v: usize = col
                .parse()
                .map_err(|_| parse_err(record, line_no, format!("bad bond index '{col}'")))?;
            if v < 1 || v > n_atoms {
                return Err(parse_err(
                    record,
                    line_no,
                    format!("bond index {v} out of range for {n_atoms} atoms"),
                ));
            }
            Ok(v - 1)
        };
        let i = parse_atom_ref(cols[0])?;
        let j = parse_atom_ref(cols[1])?;
        if i == j {
            return Err(parse_err(record, line_no, format!("bond connects atom {} to itself", i + 1)));
        }
        let order: u8 = cols[2]
            .parse()
            .ok()
            .filter(|o| (1..=4).contains(o))
            .ok_or_else(|| parse_err(record, line_no, format!("bad bond order '{}'", cols[2])))?;
        if bonds.iter().any(|b| (b.i.min(b.j), b.i.max(b.j)) == (i.min(j), i.max(j))) {
            return Err(parse_err(
                record,
                line_no,
                format!("duplicate bond between atoms {} and {}", i.min(j) + 1, j.max(i) + 1),
            ));
        }
        bonds.push(Bond { i, j, order });
    }

    // skip properties (M  CHG etc.) up to the required M  END
    let mut idx = counts_idx + 1 + n_atoms + n_bonds;
    loop {
        let line = *lines.get(idx).ok_or_else(|| {
            parse_err(record, lines.len(), "truncated block: missing M  END")
        })?;
        if line.trim() == "$$$$" {
            return Err(parse_err(record, idx + 1, "truncated block: missing M  END"));
        }
        idx += 1;
        if line.trim() == "M  END" {
            break;
        }
    }

    // data items: "> <name>" followed by value lines, terminated by a blank
    let mut targets = BTreeMap::new();
    let end;
    loop {
        let Some(line) = lines.get(idx) else {
            end = lines.len();
            break;
        };
        let trimmed = line.trim();
        if trimmed == "$$$$" {
            end = idx + 1;
            break;
        }
        if let Some(rest) = trimmed.strip_prefix('>') {
            let line_no = idx + 1;
            let open = rest.find('<');
            let close = rest.rfind('>');
            let name = match (open, close) {
                (Some(o), Some(c)) if c > o + 1 => rest[o + 1..c].to_string(),
                _ => {
                    return Err(parse_err(
                        record,
                        line_no,
                        format!("malformed data header '{trimmed}': expected '> <name>'"),
                    ))
                }
            };
            idx += 1;
            let mut first_value: Option<String> = None;
            while let Some(value_line) = lines.get(idx) {
                let v = value_line.trim();
                if v.is_empty() || v == "$$$$" {
                    break;
                }
                if first_value.is_none() {
                    first_value = Some(v.to_string());
                }
                idx += 1;
            }
            if let Some(value) = first_value.and_then(|v| v.parse::<f64>().ok()) {
                if targets.insert(name.clone(), value).is_some() {
                    return Err(parse_err(record, line_no, format!("duplicate data item '{name}'")));
                }
            }
            continue;
        }
        idx += 1;
    }

    let title = lines[start].trim();
    let id = if title.is_empty() { format!("mol{record}") } else { title.to_string() };
    let molecule = Molecule { id, atoms, bonds, targets };
    molecule
        .validate()
        .map_err(|msg| parse_err(record, start + 1, msg))?;
    Ok((molecule, end))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CO_BLOCK: &str = "\
carbon monoxide


  2  1  0  0  0  0  0  0  0  0999 V2000
    0.0000    0.0000    0.0000 C   0  0  0  0  0  0
    1.1280    0.0000    0.0000 O   0  0  0  0  0  0
  1  2  1  0
M  END
> <solubility>
-1.25

$$$$
";

    #[test]
    fn parses_co_fixture() {
        let mols = parse_sdf_v2000(CO_BLOCK).unwrap();
        assert_eq!(mols.len(), 1);
        let m = &mols[0];
        assert_eq!(m.id, "carbon monoxide");
        assert_eq!(m.atoms.iter().map(|a| a.z).collect::<Vec<_>>(), vec![6, 8]);
        assert_eq!(m.bonds, vec![Bond { i: 0, j: 1, order: 1 }]);
        assert_eq!(m.targets.get("solubility"), Some(&-1.25));
    }

    #[test]
    fn two_records() {
        let text = format!("{CO_BLOCK}{CO_BLOCK}");
        let mols = parse_sdf_v2000(&text).unwrap();
        assert_eq!(mols.len(), 2);
        assert_eq!(mols[0].atoms.len(), mols[1].atoms.len());
    }

    #[test]
    fn unknown_element_is_an_error() {
        let bad = CO_BLOCK.replace(" O ", " Xx");
        let err = parse_sdf_v2000(&bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unknown element symbol 'Xx'"), "{msg}");
        assert!(msg.contains("record 1"), "{msg}");
        assert!(msg.contains("line 6"), "{msg}");
    }

    #[test]
    fn bad_counts_line_cites_position() {
        let bad = CO_BLOCK.replace("  2  1  0", "  X  1  0");
        let err = parse_sdf_v2000(&bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("record 1") && msg.contains("line 4"), "{msg}");
        assert!(msg.contains("counts"), "{msg}");
    }

    #[test]
    fn missing_m_end_is_truncated_block() {
        let bad = CO_BLOCK.replace("M  END\n", "");
        let err = parse_sdf_v2000(&bad).unwrap_err();
        assert!(err.to_string().contains("M  END"), "{err}");
    }

    #[test]
    fn non_numeric_data_items_are_ignored() {
        let text = CO_BLOCK.replace("$$$$", "> <smiles>\nC#O\n\n$$$$");
        let mols = parse_sdf_v2000(&text).unwrap();
        assert_eq!(mols[0].targets.len(), 1);
        assert!(mols[0].targets.contains_key("solubility"));
    }

    #[test]
    fn blank_title_gets_generated_id() {
        let text = CO_BLOCK.replace("carbon monoxide", "");
        let mols = parse_sdf_v2000(&text).unwrap();
        assert_eq!(mols[0].id, "mol1");
    }

    #[test]
    fn missing_final_separator_is_tolerated() {
        let text = CO_BLOCK.replace("\n$$$$\n", "");
        let mols = parse_sdf_v2000(&text).unwrap();
        assert_eq!(mols.len(), 1);
    }
}
