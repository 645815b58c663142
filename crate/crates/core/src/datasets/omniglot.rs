use crate::error::{Error, Result};
use log::warn;
use std::fs;
use std::path::{Path, PathBuf};

/// One alphabet of an Omniglot-style image tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlphabetEntry {
    pub name: String,
    /// Character directories holding at least one PNG, sorted by name.
    pub characters: Vec<PathBuf>,
}

impl AlphabetEntry {
    pub fn size(&self) -> usize {
        self.characters.len()
    }
}

fn has_png(dir: &Path) -> bool {
    fs::read_dir(dir)
        .map(|entries| {
            entries.flatten().any(|e| {
                e.path().extension().and_then(|x| x.to_str()).is_some_and(|x| x.eq_ignore_ascii_case("png"))
            })
        })
        .unwrap_or(false)
}

/// Reads an `alphabet/character/sample.png` tree and returns alphabets sorted
/// by size, largest first (ties by name).
///
/// Entries that do not fit the layout are skipped with a warning.
pub fn load_omniglot(dir: impl AsRef<Path>) -> Result<Vec<AlphabetEntry>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::Ingestion(format!("{} is not a directory", dir.display())));
    }
    let mut table = Vec::new();
    let mut alphabet_dirs: Vec<PathBuf> = fs::read_dir(dir)?.flatten().map(|e| e.path()).collect();
    alphabet_dirs.sort();
    for path in alphabet_dirs {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if !path.is_dir() {
            warn!("skipping {}: not an alphabet directory", path.display());
            continue;
        }
        let mut characters: Vec<PathBuf> = fs::read_dir(&path)?
            .flatten()
            .map(|e| e.path())
            .filter(|p| {
                let ok = p.is_dir() && has_png(p);
                if !ok {
                    warn!("skipping {}: not a character directory with PNG samples", p.display());
                }
                ok
            })
            .collect();
        if characters.is_empty() {
            warn!("skipping alphabet {name}: no character directories");
            continue;
        }
        characters.sort();
        table.push(AlphabetEntry { name, characters });
    }
    if table.is_empty() {
        return Err(Error::Ingestion(format!("no alphabets found under {}", dir.display())));
    }
    table.sort_by(|a, b| b.size().cmp(&a.size()).then_with(|| a.name.cmp(&b.name)));
    Ok(table)
}
