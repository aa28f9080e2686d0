//! File formats: system definitions, reports, trajectory/family CSV, and
//! SVG plots. Everything is plain structured text so runs diff cleanly.

pub mod csv;
pub mod def;
pub mod report;
pub mod svg;

use std::fs;
use std::io;
use std::path::Path;

/// Writes a file atomically: contents land under a temporary name first and
/// are renamed into place.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp_path = Path::new(&tmp);
    fs::write(tmp_path, contents)?;
    fs::rename(tmp_path, path)
}
