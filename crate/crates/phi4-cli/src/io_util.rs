//! Output-file conventions: every CSV begins with one metadata line
//! (tool version, normalized command line, seed, input checksum), and panel
//! files round-trip through the shortest-round-trip float representation.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::NaiveDate;
use sha2::{Digest, Sha256};

use phi4_core::data::ReturnPanel;
use phi4_core::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Normalized command line: argv with any `--threads N` stripped, since the
/// thread count must not change output bytes.
pub fn normalized_cmd() -> String {
    let args: Vec<String> = std::env::args().collect();
    let mut out: Vec<&str> = Vec::with_capacity(args.len());
    let mut skip = false;
    for (i, a) in args.iter().enumerate() {
        if skip {
            skip = false;
            continue;
        }
        if a == "--threads" || a == "-t" {
            skip = true;
            continue;
        }
        if a.starts_with("--threads=") {
            continue;
        }
        if i == 0 {
            out.push("phi4");
        } else {
            out.push(a);
        }
    }
    out.join(" ")
}

/// Combined SHA-256 over the given input files (in argument order), shortened
/// for the header line.
pub fn input_checksum(paths: &[&Path]) -> Result<String> {
    let mut hasher = Sha256::new();
    for p in paths {
        hasher.update(std::fs::read(p)?);
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        let _ = write!(hex, "{byte:02x}");
    }
    Ok(hex)
}

/// The metadata line every output file starts with.
pub fn metadata_line(seed: u64, inputs: &str) -> String {
    format!(
        "# phi4 {TOOL_VERSION} | cmd: {} | seed: {seed} | inputs: sha256:{inputs}",
        normalized_cmd()
    )
}

pub fn write_panel_csv(
    path: &Path,
    panel: &ReturnPanel,
    header: &str,
) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{header}")?;
    writeln!(f, "date,{}", panel.tickers().join(","))?;
    for (d, date) in panel.dates().iter().enumerate() {
        let row: Vec<String> = panel.day_row(d).iter().map(|x| format!("{x}")).collect();
        writeln!(f, "{date},{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_panel_csv(path: &Path) -> Result<ReturnPanel> {
    let f = std::fs::File::open(path)?;
    let reader = BufReader::new(f);
    let mut tickers: Option<Vec<String>> = None;
    let mut dates = Vec::new();
    let mut rows = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        match &tickers {
            None => {
                if fields.first() != Some(&"date") || fields.len() < 2 {
                    return Err(Error::CsvParse {
                        line: lineno as u64 + 1,
                        msg: "panel header must be `date,<tickers...>`".into(),
                    });
                }
                tickers = Some(fields[1..].iter().map(|s| s.to_string()).collect());
            }
            Some(t) => {
                if fields.len() != t.len() + 1 {
                    return Err(Error::CsvParse {
                        line: lineno as u64 + 1,
                        msg: format!("expected {} fields, got {}", t.len() + 1, fields.len()),
                    });
                }
                let date = NaiveDate::parse_from_str(fields[0], "%Y-%m-%d").map_err(|_| {
                    Error::CsvParse {
                        line: lineno as u64 + 1,
                        msg: format!("bad date {:?}", fields[0]),
                    }
                })?;
                let row: std::result::Result<Vec<f64>, _> =
                    fields[1..].iter().map(|s| s.parse::<f64>()).collect();
                let row = row.map_err(|e| Error::CsvParse {
                    line: lineno as u64 + 1,
                    msg: format!("bad return value: {e}"),
                })?;
                dates.push(date);
                rows.push(row);
            }
        }
    }
    let tickers = tickers.ok_or(Error::EmptyInput("panel csv"))?;
    ReturnPanel::from_parts(tickers, dates, rows)
}
