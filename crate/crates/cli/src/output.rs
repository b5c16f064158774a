//! File emission. Every file lands by a rename from a temporary sibling, so
//! a reader never sees a partial file.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::args::Format;
use crate::run::Artifact;

pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Renders an artifact in the requested table format and returns its file name.
pub fn render(artifact: &Artifact, format: Format) -> (String, String) {
    match artifact {
        Artifact::Table { stem, csv } => match format {
            Format::Csv => (format!("{stem}.csv"), csv.clone()),
            Format::Tsv => (format!("{stem}.tsv"), csv.replace(',', "\t")),
        },
        Artifact::Text { name, body } => (name.clone(), body.clone()),
    }
}

pub fn emit(dir: &Path, artifacts: &[Artifact], format: Format) -> io::Result<Vec<PathBuf>> {
    let mut written = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let (name, body) = render(a, format);
        let path = dir.join(name);
        write_atomic(&path, body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
