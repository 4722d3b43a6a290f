//! On-disk formats.
//!
//! Tables are comma-separated text with `#`-prefixed metadata lines at the
//! top; structured results are JSON. Every float is written with 17
//! significant digits so values survive a write/read cycle bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use loopdet::{CountHistogram, DetectorParams, PhotonNumberDistribution, ResponseMatrix};
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::CliError;

/// `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string().to_lowercase()
    }
}

pub type Metadata = Vec<(String, String)>;

pub fn detector_metadata(params: &DetectorParams) -> Metadata {
    vec![
        ("params_digest".into(), loopdet::params_digest(params)),
        ("t_r".into(), fmt_f64(params.t_r)),
        ("t_c".into(), fmt_f64(params.t_c)),
        ("eta".into(), fmt_f64(params.eta)),
        ("p_d".into(), fmt_f64(params.p_d)),
        ("roundtrips".into(), params.roundtrips.to_string()),
    ]
}

fn write_comments(out: &mut String, title: &str, meta: &Metadata) {
    let _ = writeln!(out, "# {title}");
    for (k, v) in meta {
        let _ = writeln!(out, "# {k} = {v}");
    }
}

/// Histogram table: metadata comments, then `k,count` rows for every
/// `k = 0..=L`, empty bins included.
pub fn histogram_to_string(hist: &CountHistogram, meta: &Metadata) -> String {
    let mut out = String::new();
    let mut all = meta.clone();
    if !all.iter().any(|(k, _)| k == "params_digest") {
        all.insert(0, ("params_digest".into(), hist.params_digest.clone()));
    }
    all.push(("seed".into(), hist.seed.to_string()));
    all.push(("trials".into(), hist.trials.to_string()));
    write_comments(&mut out, "loopdet count histogram", &all);
    out.push_str("k,count\n");
    for (k, t) in hist.tallies.iter().enumerate() {
        let _ = writeln!(out, "{k},{t}");
    }
    out
}

/// Response matrix table: rows are click counts `k`, columns photon numbers
/// `n`; the corner cell of the header reads `k\n`.
pub fn matrix_to_string(w: &ResponseMatrix) -> String {
    let mut out = String::new();
    let mut meta = detector_metadata(w.params());
    meta.push(("n_max".into(), w.n_max().to_string()));
    write_comments(&mut out, "loopdet response matrix w(k|n)", &meta);
    out.push_str("k\\n");
    for n in 0..w.cols() {
        let _ = write!(out, ",{n}");
    }
    out.push('\n');
    for k in 0..w.rows() {
        let _ = write!(out, "{k}");
        for v in w.row(k) {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// Two-column `x,y` table with a metadata block.
pub fn pairs_to_string(
    title: &str,
    meta: &Metadata,
    header: &str,
    rows: &[(String, f64)],
) -> String {
    let mut out = String::new();
    write_comments(&mut out, title, meta);
    let _ = writeln!(out, "{header}");
    for (x, y) in rows {
        let _ = writeln!(out, "{x},{}", fmt_f64(*y));
    }
    out
}

/// Write to `path`, or stdout when `None`.
pub fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            std::fs::write(p, text).map_err(|e| CliError::io(p, e))
        }
        None => {
            use std::io::Write;
            io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Parsed delimited table: metadata from `# key = value` lines and data
/// rows with their 1-based line numbers.
pub struct Table {
    pub meta: BTreeMap<String, String>,
    pub rows: Vec<(usize, Vec<String>)>,
}

pub fn parse_table(text: &str, path: &Path, header: &[&str]) -> Result<Table, CliError> {
    let fail = |line: usize, msg: String| CliError::Format {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut meta = BTreeMap::new();
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some((k, v)) = c.split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        let cells: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
        if !seen_header {
            if cells.len() < header.len() || cells.iter().zip(header).any(|(c, h)| c != h) {
                return Err(fail(
                    line_no,
                    format!("expected header `{}`, found `{line}`", header.join(",")),
                ));
            }
            seen_header = true;
            continue;
        }
        if cells.len() != header.len() {
            return Err(fail(
                line_no,
                format!("expected {} columns, found {}", header.len(), cells.len()),
            ));
        }
        rows.push((line_no, cells));
    }
    if !seen_header {
        return Err(fail(0, format!("missing header `{}`", header.join(","))));
    }
    Ok(Table { meta, rows })
}

fn parse_cell<T: std::str::FromStr>(path: &Path, line: usize, cell: &str) -> Result<T, CliError> {
    cell.parse().map_err(|_| CliError::Format {
        path: path.to_path_buf(),
        line,
        msg: format!("cannot parse `{cell}`"),
    })
}

/// Check that the first column counts `0, 1, 2, …` and return the second.
fn indexed_column<T: std::str::FromStr>(table: &Table, path: &Path) -> Result<Vec<T>, CliError> {
    table
        .rows
        .iter()
        .enumerate()
        .map(|(expect, (line, cells))| {
            let idx: usize = parse_cell(path, *line, &cells[0])?;
            if idx != expect {
                return Err(CliError::Format {
                    path: path.to_path_buf(),
                    line: *line,
                    msg: format!("expected index {expect}, found {idx}"),
                });
            }
            parse_cell(path, *line, &cells[1])
        })
        .collect()
}

pub fn parse_histogram(text: &str, path: &Path) -> Result<CountHistogram, CliError> {
    let table = parse_table(text, path, &["k", "count"])?;
    let tallies: Vec<u64> = indexed_column(&table, path)?;
    let sum: u64 = tallies.iter().sum();
    let meta_num = |key: &str| -> Result<Option<u64>, CliError> {
        table
            .meta
            .get(key)
            .map(|v| parse_cell(path, 0, v))
            .transpose()
    };
    let trials = meta_num("trials")?.unwrap_or(sum);
    let seed = meta_num("seed")?.unwrap_or(0);
    let digest = table.meta.get("params_digest").cloned().unwrap_or_default();
    Ok(CountHistogram::new(tallies, trials, seed, digest)?)
}

pub fn read_histogram(path: &Path) -> Result<CountHistogram, CliError> {
    parse_histogram(&read_text(path)?, path)
}

/// Response matrix rows `w[k][n]` from a matrix table.
pub fn parse_matrix_rows(text: &str, path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rows = Vec::new();
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with("k\\n") {
            width = Some(line.split(',').count() - 1);
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if Some(cells.len() - 1) != width {
            return Err(CliError::Format {
                path: path.to_path_buf(),
                line: i + 1,
                msg: "row width does not match header".into(),
            });
        }
        rows.push(
            cells[1..]
                .iter()
                .map(|c| parse_cell(path, i + 1, c))
                .collect::<Result<Vec<f64>, _>>()?,
        );
    }
    Ok(rows)
}

/// `n,probability` table.
pub fn read_distribution(path: &Path) -> Result<PhotonNumberDistribution, CliError> {
    let table = parse_table(&read_text(path)?, path, &["n", "probability"])?;
    Ok(PhotonNumberDistribution::new(indexed_column(
        &table, path,
    )?)?)
}

/// `k,probability` table of exact count probabilities.
pub fn read_probabilities(path: &Path) -> Result<Vec<f64>, CliError> {
    let table = parse_table(&read_text(path)?, path, &["k", "probability"])?;
    indexed_column(&table, path)
}

/// `weight,intensity` table.
pub fn read_mixture(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let table = parse_table(&read_text(path)?, path, &["weight", "intensity"])?;
    table
        .rows
        .iter()
        .map(|(line, c)| {
            Ok((
                parse_cell(path, *line, &c[0])?,
                parse_cell(path, *line, &c[1])?,
            ))
        })
        .collect()
}

/// Pretty JSON whose floats carry 17 significant digits.
struct DigitsFormatter<'a>(PrettyFormatter<'a>);

impl Formatter for DigitsFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser =
        serde_json::Serializer::with_formatter(&mut buf, DigitsFormatter(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .expect("serialising in-memory values cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON output is UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use loopdet::{response_matrix, DetectorParams};
    use std::path::PathBuf;

    fn p() -> PathBuf {
        PathBuf::from("test.csv")
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(4.0 / 7.0).parse::<f64>().unwrap(), 4.0 / 7.0);
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }

    #[test]
    fn empty_histogram_rows() {
        let h = CountHistogram::new(vec![7, 0, 0], 7, 3, "d".into()).unwrap();
        let text = histogram_to_string(&h, &Metadata::new());
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data, vec!["k,count", "0,7", "1,0", "2,0"]);
    }

    #[test]
    fn histogram_roundtrip() {
        let h = CountHistogram::new(vec![5, 9, 0, 1], 15, 42, "abc".into()).unwrap();
        let back = parse_histogram(&histogram_to_string(&h, &Metadata::new()), &p()).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn histogram_rejects_gaps_and_bad_totals() {
        let gap = "k,count\n0,1\n2,3\n";
        assert!(parse_histogram(gap, &p()).is_err());
        let bad = "# trials = 10\nk,count\n0,1\n1,3\n";
        assert!(parse_histogram(bad, &p()).is_err());
        let header = "x,count\n0,1\n";
        assert!(parse_histogram(header, &p()).is_err());
    }

    #[test]
    fn identity_matrix_rows() {
        let params = DetectorParams::new(0.5, 0.5, 1.0, 0.0, 3).unwrap();
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|k| (0..4).map(|n| if k == n { 1.0 } else { 0.0 }).collect())
            .collect();
        let w = ResponseMatrix::from_rows(params, &rows).unwrap();
        let text = matrix_to_string(&w);
        assert!(text.contains("k\\n,0,1,2,3\n"));
        assert_eq!(parse_matrix_rows(&text, &p()).unwrap(), rows);
    }

    #[test]
    fn matrix_roundtrip_exact() {
        let w =
            response_matrix(&DetectorParams::new(0.72, 0.2, 0.8, 0.01, 10).unwrap(), 4).unwrap();
        let rows = parse_matrix_rows(&matrix_to_string(&w), &p()).unwrap();
        for (k, r) in rows.iter().enumerate() {
            assert_eq!(r.as_slice(), w.row(k));
        }
    }

    #[test]
    fn json_floats() {
        let json = to_json(&serde_json::json!({ "x": 0.1, "v": [1.0, 2.5] }));
        assert!(json.contains("1.0000000000000001e-1"));
        let back: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(back["x"].as_f64(), Some(0.1));
        assert_eq!(back["v"][1].as_f64(), Some(2.5));
    }
}
