use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use ecf_density::SampleSet;

use crate::error::{config, runtime, CliResult};

/// Reads one observation per row. A first row that does not parse as numbers
/// is taken as a header.
pub fn read_samples(path: &Path) -> CliResult<SampleSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| config(format!("{}: {e}", path.display())))?;
    let mut data = Vec::new();
    let mut d = None;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| config(format!("{}: {e}", path.display())))?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if i == 0 => continue,
            Err(e) => return Err(config(format!("{}: row {}: {e}", path.display(), i + 1))),
        };
        match d {
            None => d = Some(row.len()),
            Some(k) if k != row.len() => {
                return Err(config(format!(
                    "{}: row {} has {} columns, expected {k}",
                    path.display(),
                    i + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        data.extend(row);
    }
    let d = d.ok_or_else(|| config(format!("{}: no observations", path.display())))?;
    SampleSet::new(data, d).map_err(config)
}

/// Headerless CSV, one observation per row.
pub fn write_samples<W: Write>(samples: &SampleSet, mut out: W) -> io::Result<()> {
    for row in samples.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Writes through `body` into `path`, or stdout when `path` is `None`.
pub fn with_output<F>(path: Option<&Path>, body: F) -> CliResult<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let result = match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
            let mut w = BufWriter::new(file);
            body(&mut w).and_then(|_| w.flush())
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock).and_then(|_| lock.flush())
        }
    };
    result.map_err(runtime)
}
