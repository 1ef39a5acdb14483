//! Artifact writing: atomic file replacement and digest-stamped CSV.

use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// The comment line every emitted CSV starts with.
pub fn digest_comment(digest: &str) -> String {
    format!("# manifest sha256 {digest}\n")
}

/// CSV text: the digest comment, a header row, then `rows`.
pub fn csv_text<S: AsRef<str>>(digest: &str, header: &[&str], rows: &[Vec<S>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r.iter().map(AsRef::as_ref)).expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input");
    digest_comment(digest) + &body
}

/// A set of files written together into one directory.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), contents.into()));
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Writes every file through a temporary sibling and a rename, so a
    /// reader never sees a partial file.
    pub fn write_all(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        self.files
            .iter()
            .map(|(name, bytes)| {
                let target = dir.join(name);
                let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
                tmp.write_all(bytes)?;
                tmp.as_file().sync_all()?;
                tmp.persist(&target).map_err(|e| e.error)?;
                Ok(target)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_starts_with_digest_then_header() {
        let text = csv_text("abc", &["a", "b"], &[vec!["1", "x,y"]]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines, vec!["# manifest sha256 abc", "a,b", "1,\"x,y\""]);
    }

    #[test]
    fn artifacts_replace_files_whole() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::default();
        a.add("one.txt", "first");
        a.write_all(dir.path()).unwrap();
        let mut b = Artifacts::default();
        b.add("one.txt", "second");
        b.write_all(dir.path()).unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join("one.txt")).unwrap(), "second");
        let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 1);
    }
}
