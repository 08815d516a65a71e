use std::fmt::Write as _;

use super::{IoError, StructureDocument};
use crate::elements;
use crate::geometry::{Crystal, Lattice, Mat3, Vec3};

fn header(msg: impl Into<String>) -> IoError {
    IoError::MalformedHeader(msg.into())
}

fn parse_floats<const N: usize>(line: &str, what: &str) -> Result<[f64; N], IoError> {
    let mut out = [0.0; N];
    let mut tokens = line.split_whitespace();
    for slot in &mut out {
        let tok = tokens.next().ok_or_else(|| header(format!("{what}: expected {N} numbers")))?;
        let v: f64 = tok.parse().map_err(|_| header(format!("{what}: cannot parse {tok:?}")))?;
        if !v.is_finite() {
            return Err(header(format!("{what}: non-finite value")));
        }
        *slot = v;
    }
    Ok(out)
}

fn parse_counts(line: &str) -> Option<Vec<usize>> {
    let counts: Option<Vec<usize>> = line.split_whitespace().map(|t| t.parse().ok()).collect();
    counts.filter(|c| !c.is_empty())
}

fn parse_symbols(tokens: &[&str]) -> Result<Vec<u8>, IoError> {
    tokens
        .iter()
        .map(|t| {
            // POTCAR-style labels such as "Fe_pv" or "O/abc" carry the symbol first
            let sym = t.split(['_', '/']).next().unwrap_or(t);
            elements::atomic_number(sym).ok_or_else(|| IoError::UnknownSpecies((*t).to_string()))
        })
        .collect()
}

fn is_coordinate_line(line: &str) -> bool {
    let mut tokens = line.split_whitespace();
    (0..3).all(|_| tokens.next().is_some_and(|t| t.parse::<f64>().is_ok()))
}

pub fn parse_poscar_bytes(bytes: &[u8]) -> Result<StructureDocument, IoError> {
    let text = std::str::from_utf8(bytes).map_err(|_| header("input is not UTF-8"))?;
    parse_poscar(text)
}

/// Parses VASP 4/5 POSCAR text. Lines may end in LF or CRLF.
pub fn parse_poscar(text: &str) -> Result<StructureDocument, IoError> {
    let lines: Vec<&str> = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();
    let line = |i: usize| lines.get(i).copied().ok_or_else(|| header(format!("file ends before line {}", i + 1)));

    let comment = line(0)?.trim().to_string();
    let [scale] = parse_floats::<1>(line(1)?, "scale line")?;
    if scale == 0.0 {
        return Err(header("scale factor is zero"));
    }
    let mut rows = [[0.0; 3]; 3];
    for (r, row) in rows.iter_mut().enumerate() {
        *row = parse_floats::<3>(line(2 + r)?, "lattice row")?;
    }
    let raw = Mat3::from_fn(|i, j| rows[i][j]);
    let raw_det = raw.determinant();
    if !(raw_det.abs() > 0.0) {
        return Err(IoError::SingularLattice(raw_det));
    }
    let factor = if scale > 0.0 {
        scale
    } else {
        (-scale / raw_det.abs()).cbrt()
    };
    let lattice = Lattice::from_matrix(raw * factor)?;

    let mut cursor = 5;
    let (symbols, counts) = match parse_counts(line(cursor)?) {
        Some(counts) => {
            cursor += 1;
            // VASP 4: species may be listed on the comment line
            let tokens: Vec<&str> = comment.split_whitespace().take(counts.len()).collect();
            if tokens.len() != counts.len() {
                return Err(IoError::UnknownSpecies("no species line and comment does not name species".into()));
            }
            (parse_symbols(&tokens)?, counts)
        }
        None => {
            let tokens: Vec<&str> = line(cursor)?.split_whitespace().collect();
            if tokens.is_empty() {
                return Err(header("missing species or counts line"));
            }
            let symbols = parse_symbols(&tokens)?;
            let counts = parse_counts(line(cursor + 1)?).ok_or_else(|| header("counts line is not a list of integers"))?;
            if counts.len() != symbols.len() {
                return Err(header(format!("{} species but {} counts", symbols.len(), counts.len())));
            }
            cursor += 2;
            (symbols, counts)
        }
    };
    let expected = counts.iter().try_fold(0usize, |a, &c| a.checked_add(c)).ok_or_else(|| header("counts overflow"))?;
    if expected == 0 {
        return Err(header("counts sum to zero"));
    }

    let mut mode = line(cursor)?.trim_start();
    if mode.starts_with(['S', 's']) {
        cursor += 1;
        mode = line(cursor)?.trim_start();
    }
    let cartesian = match mode.chars().next() {
        Some('D' | 'd') => false,
        Some('C' | 'c' | 'K' | 'k') => true,
        _ => return Err(header(format!("expected Direct or Cartesian, found {mode:?}"))),
    };
    cursor += 1;

    let coords: Vec<&str> = lines[cursor.min(lines.len())..]
        .iter()
        .copied()
        .take_while(|l| is_coordinate_line(l))
        .collect();
    if coords.len() != expected {
        return Err(IoError::CountMismatch {
            expected,
            found: coords.len(),
        });
    }
    let mut positions = Vec::with_capacity(expected);
    for l in coords {
        let [a, b, c] = parse_floats::<3>(l, "coordinate line")?;
        let v = Vec3::new(a, b, c);
        positions.push(if cartesian { v * factor } else { lattice.frac_to_cart(&v) });
    }
    let species = symbols
        .iter()
        .zip(&counts)
        .flat_map(|(&z, &c)| std::iter::repeat_n(z, c))
        .collect();
    Ok(StructureDocument::new(Crystal::new(lattice, positions, species)?, comment))
}

/// Cartesian-mode VASP 5 text with shortest round-trip floats, so parsing
/// the output restores every coordinate bit for bit. Consecutive equal
/// species share one block.
pub fn write_poscar(doc: &StructureDocument) -> String {
    let c = &doc.crystal;
    let mut out = String::new();
    let comment: String = doc.comment.chars().map(|ch| if ch == '\n' || ch == '\r' { ' ' } else { ch }).collect();
    out.push_str(&comment);
    out.push('\n');
    out.push_str("1.0\n");
    for row in c.lattice.to_array() {
        writeln!(out, "  {:>24} {:>24} {:>24}", row[0], row[1], row[2]).unwrap();
    }
    let mut blocks: Vec<(u8, usize)> = Vec::new();
    for &z in &c.species {
        match blocks.last_mut() {
            Some((last, n)) if *last == z => *n += 1,
            _ => blocks.push((z, 1)),
        }
    }
    let syms: Vec<&str> = blocks.iter().map(|(z, _)| elements::symbol(*z).unwrap_or("X")).collect();
    let counts: Vec<String> = blocks.iter().map(|(_, n)| n.to_string()).collect();
    writeln!(out, "  {}", syms.join(" ")).unwrap();
    writeln!(out, "  {}", counts.join(" ")).unwrap();
    out.push_str("Cartesian\n");
    for p in &c.positions {
        writeln!(out, "  {:>24} {:>24} {:>24}", p[0], p[1], p[2]).unwrap();
    }
    out
}
