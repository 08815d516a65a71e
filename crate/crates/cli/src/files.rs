//! Input discovery, structure reading and output writing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use comformer_core::io::{
    parse_crystal_json, parse_graph_json, parse_poscar_bytes, write_crystal_json, write_poscar, StructureDocument,
};
use comformer_core::CrystalGraph;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FileFormat {
    Poscar,
    Json,
}

/// Name of the manifest the `fixtures` command writes next to its files.
pub const MANIFEST: &str = "manifest.json";

/// Expands directories one level deep into their structure or graph files
/// (`.vasp`, `.poscar`, `.json`, `POSCAR*`, `CONTCAR*`; never the fixture
/// manifest), sorted by name. Explicit files are kept in the order given.
pub fn collect_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        let meta = fs::metadata(p).map_err(|e| CliError::io(p, e))?;
        if meta.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| CliError::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|e| e.is_file() && is_structure_name(e))
                .collect();
            entries.sort();
            out.extend(entries);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(CliError::Input("no input files".into()));
    }
    Ok(out)
}

fn is_structure_name(p: &Path) -> bool {
    let Some(name) = p.file_name().and_then(|n| n.to_str()) else { return false };
    if name.starts_with('.') || name == MANIFEST {
        return false;
    }
    let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    matches!(ext.as_deref(), Some("vasp" | "poscar" | "json")) || name.starts_with("POSCAR") || name.starts_with("CONTCAR")
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn looks_like_json(bytes: &[u8]) -> bool {
    bytes.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'{')
}

/// Parses a structure file; without a forced format, JSON is recognized by
/// a leading `{` and everything else is read as POSCAR.
pub fn parse_structure_bytes(bytes: &[u8], format: Option<FileFormat>) -> Result<StructureDocument, CliError> {
    let json = match format {
        Some(FileFormat::Json) => true,
        Some(FileFormat::Poscar) => false,
        None => looks_like_json(bytes),
    };
    let doc = if json {
        let text = std::str::from_utf8(bytes).map_err(|_| CliError::Input("input is not UTF-8".into()))?;
        parse_crystal_json(text)?
    } else {
        parse_poscar_bytes(bytes)?
    };
    Ok(doc)
}

pub fn read_structure(path: &Path, format: Option<FileFormat>) -> Result<StructureDocument, CliError> {
    let mut doc = parse_structure_bytes(&read_bytes(path)?, format).map_err(|e| e.at(path))?;
    doc.source_path = Some(path.display().to_string());
    Ok(doc)
}

/// What a verification input turned out to be.
pub enum Loaded {
    Structure(StructureDocument),
    Graph(CrystalGraph),
}

/// Reads either a structure or a graph file; graph JSON is recognized by
/// its `edges` field.
pub fn read_structure_or_graph(path: &Path, format: Option<FileFormat>) -> Result<Loaded, CliError> {
    let bytes = read_bytes(path)?;
    if looks_like_json(&bytes) {
        let text = std::str::from_utf8(&bytes).map_err(|_| CliError::Input(format!("{}: input is not UTF-8", path.display())))?;
        let is_graph = serde_json::from_str::<serde_json::Value>(text)
            .ok()
            .is_some_and(|v| v.get("edges").is_some());
        if is_graph {
            return Ok(Loaded::Graph(parse_graph_json(text).map_err(|e| CliError::from(e).at(path))?));
        }
    }
    let mut doc = parse_structure_bytes(&bytes, format).map_err(|e| e.at(path))?;
    doc.source_path = Some(path.display().to_string());
    Ok(Loaded::Structure(doc))
}

pub fn read_graph(path: &Path) -> Result<CrystalGraph, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_graph_json(&text).map_err(|e| CliError::from(e).at(path))
}

pub fn format_structure(doc: &StructureDocument, format: FileFormat) -> String {
    match format {
        FileFormat::Poscar => write_poscar(doc),
        FileFormat::Json => write_crystal_json(doc),
    }
}

/// Writes to `out`, or to stdout when no path is given.
pub fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            fs::write(p, text).map_err(|e| CliError::io(p, e))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n").map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
            }
            Ok(())
        }
    }
}

/// File name without its last extension, used to name per-input outputs.
pub fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("structure").to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_is_sniffed_and_poscar_is_the_fallback() {
        assert!(looks_like_json(b"  \n{\"a\": 1}"));
        assert!(!looks_like_json(b"Po\n1.0\n"));
        assert!(!looks_like_json(b""));
        assert!(matches!(parse_structure_bytes(b"{", None), Err(CliError::Input(_))));
        assert!(matches!(parse_structure_bytes(b"garbage", None), Err(CliError::Input(_))));
    }

    #[test]
    fn directories_expand_sorted() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.vasp", "a.vasp", ".hidden", "POSCAR", "notes.txt", MANIFEST] {
            fs::write(dir.path().join(name), "x").unwrap();
        }
        let got = collect_inputs(&[dir.path().to_path_buf()]).unwrap();
        let names: Vec<_> = got.iter().map(|p| p.file_name().unwrap().to_str().unwrap()).collect();
        assert_eq!(names, ["POSCAR", "a.vasp", "b.vasp"]);
        assert!(collect_inputs(&[dir.path().join("missing")]).is_err());
    }
}
