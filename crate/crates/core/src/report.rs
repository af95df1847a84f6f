//! Versioned CSV tables, run manifests, SVG line charts and key-value config files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{QmetrixError, Result};
use crate::sampler::BinReport;

pub const SCHEMA_PREFIX: &str = "# schema: ";
pub const SCHEMA_VERSION: u32 = 1;

/// Table kinds; each has its own column schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Law,
    Optimize,
    Sweep,
    SampleGm,
}

impl TableKind {
    pub fn name(self) -> &'static str {
        match self {
            TableKind::Law => "law",
            TableKind::Optimize => "optimize",
            TableKind::Sweep => "sweep",
            TableKind::SampleGm => "sample-gm",
        }
    }

    pub fn schema(self) -> String {
        format!("qmetrix.{}.v{}", self.name(), SCHEMA_VERSION)
    }

    fn from_schema(s: &str) -> Option<Self> {
        [
            TableKind::Law,
            TableKind::Optimize,
            TableKind::Sweep,
            TableKind::SampleGm,
        ]
        .into_iter()
        .find(|k| k.schema() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawRow {
    pub measure: String,
    pub value: f64,
    pub q_opt: f64,
    pub stddev: f64,
}

/// Row shared by `optimize` and `sweep` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeRow {
    pub target: f64,
    pub q_best: f64,
    pub stddev: f64,
    pub residual: f64,
    pub generations: usize,
    pub feasible_fraction: f64,
    pub seed: u64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub k: usize,
    pub gm_lo: f64,
    pub gm_hi: f64,
    pub count: u64,
    pub q_max: Option<f64>,
    pub stddev: Option<f64>,
}

impl SampleRow {
    pub fn from_bin(b: &BinReport) -> Self {
        SampleRow {
            k: b.bin_index,
            gm_lo: b.gm_lo,
            gm_hi: b.gm_hi,
            count: b.count,
            q_max: b.q_max,
            stddev: b.q_max.filter(|&q| q > 0.0).map(|q| q.powf(-0.5)),
        }
    }

    pub fn to_bin(&self) -> BinReport {
        BinReport {
            bin_index: self.k,
            gm_lo: self.gm_lo,
            gm_hi: self.gm_hi,
            count: self.count,
            q_max: self.q_max,
            argmax_weights: None,
            argmax_gm: None,
        }
    }
}

/// Serializes rows to CSV text with the schema comment as first line.
pub fn csv_string<T: Serialize>(kind: TableKind, rows: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let body = w.into_inner().map_err(|e| QmetrixError::Io(e.to_string()))?;
    let mut out = format!("{SCHEMA_PREFIX}{}\n", kind.schema());
    out.push_str(&String::from_utf8(body).map_err(|e| QmetrixError::Io(e.to_string()))?);
    Ok(out)
}

pub fn write_csv<T: Serialize>(path: &Path, kind: TableKind, rows: &[T]) -> Result<()> {
    fs::write(path, csv_string(kind, rows)?)?;
    Ok(())
}

/// Splits off the schema line and returns the table kind and the CSV body.
fn split_schema(text: &str) -> Result<(TableKind, &str)> {
    let (first, body) = text.split_once('\n').unwrap_or((text, ""));
    let schema = first
        .strip_prefix(SCHEMA_PREFIX)
        .ok_or_else(|| QmetrixError::Parse("missing schema line".into()))?
        .trim();
    let kind =
        TableKind::from_schema(schema).ok_or_else(|| QmetrixError::Parse(format!("unknown schema `{schema}`")))?;
    Ok((kind, body))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path, expected: &[TableKind]) -> Result<Vec<T>> {
    let text = fs::read_to_string(path)?;
    let (kind, body) = split_schema(&text)?;
    if !expected.contains(&kind) {
        return Err(QmetrixError::Parse(format!(
            "{} holds a {} table",
            path.display(),
            kind.name()
        )));
    }
    let mut r = csv::Reader::from_reader(body.as_bytes());
    r.deserialize().map(|row| row.map_err(QmetrixError::from)).collect()
}

/// Reads two numeric columns of any versioned table, skipping rows where either is empty.
pub fn read_columns(path: &Path, x: &str, y: &str) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path)?;
    let (_, body) = split_schema(&text)?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| QmetrixError::Parse(format!("no column `{name}` in {}", path.display())))
    };
    let (ix, iy) = (col(x)?, col(y)?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let (sx, sy) = (&rec[ix], &rec[iy]);
        if sx.is_empty() || sy.is_empty() {
            continue;
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| QmetrixError::Parse(format!("`{s}`: {e}")));
        out.push((parse(sx)?, parse(sy)?));
    }
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Effective settings, in the key-value form accepted by `--config`.
    pub config: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub version: String,
    pub wall_time_s: f64,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(command: &str, config: BTreeMap<String, String>, seeds: Vec<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            seeds,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        self.outputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Sidecar path `<output>.manifest.json`.
    pub fn sidecar(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// Digests that no longer match the files on disk.
    pub fn stale_outputs(&self) -> Result<Vec<String>> {
        let mut stale = Vec::new();
        for o in &self.outputs {
            let bytes = fs::read(&o.path)?;
            if sha256_hex(&bytes) != o.sha256 {
                stale.push(o.path.clone());
            }
        }
        Ok(stale)
    }

    /// The config in key-value file form.
    pub fn config_text(&self) -> String {
        self.config.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Parsed `key = value` config file. Keys are case-insensitive and `_` equals `-`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValueConfig {
    entries: BTreeMap<String, String>,
}

pub fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

impl KeyValueConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| QmetrixError::Parse(format!("line {}: expected `key = value`", no + 1)))?;
            let key = normalize_key(k);
            if key.is_empty() {
                return Err(QmetrixError::Parse(format!("line {}: empty key", no + 1)));
            }
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(QmetrixError::Parse(format!("line {}: duplicate key `{key}`", no + 1)));
            }
        }
        Ok(KeyValueConfig { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path)?;
        let mut text = String::new();
        for line in BufReader::new(f).lines() {
            text.push_str(&line?);
            text.push('\n');
        }
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize_key(key)).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One labelled polyline.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: &'a [(f64, f64)],
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Minimal standalone SVG line chart.
pub fn svg_line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let finite = |v: &f64| v.is_finite();
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).filter(finite);
    let ys = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).filter(finite);
    let span = |it: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo <= 0.0 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = span(&mut xs.into_iter());
    let (y0, y1) = span(&mut ys.into_iter());
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (SVG_W - 2.0 * MARGIN);
    let py = |y: f64| SVG_H - MARGIN - (y - y0) / (y1 - y0) * (SVG_H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        SVG_W / 2.0,
        escape(title)
    );
    let (l, r, t, b) = (MARGIN, SVG_W - MARGIN, MARGIN, SVG_H - MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{l} {t} L{l} {b} L{r} {b}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(xv),
            b + 18.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            l - 6.0,
            py(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        SVG_W / 2.0,
        SVG_H - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        SVG_H / 2.0,
        SVG_H / 2.0,
        escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            r - 120.0,
            t + 16.0 * (i as f64 + 1.0),
            escape(ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_svg(path: &Path, svg: &str) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(svg.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64) -> OptimizeRow {
        OptimizeRow {
            target: t,
            q_best: 14.928203230275509,
            stddev: 0.2588190451025208,
            residual: 1e-16,
            generations: 40,
            feasible_fraction: 1.0,
            seed: 3,
            converged: true,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("o.csv");
        let rows = vec![row(0.25), row(0.1 + 0.2)];
        write_csv(&p, TableKind::Optimize, &rows).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# schema: qmetrix.optimize.v1\n"));
        let back: Vec<OptimizeRow> = read_csv(&p, &[TableKind::Optimize]).unwrap();
        assert_eq!(back, rows);
        assert!(read_csv::<OptimizeRow>(&p, &[TableKind::Law]).is_err());
        assert_eq!(read_columns(&p, "target", "stddev").unwrap()[1].0, 0.1 + 0.2);
    }

    #[test]
    fn empty_q_max_survives() {
        let rows = vec![SampleRow {
            k: 9,
            gm_lo: 0.45,
            gm_hi: 0.5,
            count: 0,
            q_max: None,
            stddev: None,
        }];
        let text = csv_string(TableKind::SampleGm, &rows).unwrap();
        let (_, body) = split_schema(&text).unwrap();
        let back: Vec<SampleRow> = csv::Reader::from_reader(body.as_bytes())
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn missing_schema_is_rejected() {
        assert!(split_schema("target,q_best\n1,2\n").is_err());
        assert!(split_schema("# schema: qmetrix.other.v1\n").is_err());
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_tracks_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("a.csv");
        fs::write(&out, "x").unwrap();
        let mut m = RunManifest::new("law", BTreeMap::from([("d".into(), "2".into())]), vec![]);
        m.add_output(&out).unwrap();
        let side = RunManifest::sidecar(&out);
        assert!(side.to_string_lossy().ends_with("a.csv.manifest.json"));
        m.write(&side).unwrap();
        let back = RunManifest::read(&side).unwrap();
        assert_eq!(back, m);
        assert!(back.stale_outputs().unwrap().is_empty());
        fs::write(&out, "y").unwrap();
        assert_eq!(back.stale_outputs().unwrap().len(), 1);
        assert_eq!(KeyValueConfig::parse(&back.config_text()).unwrap().get("d"), Some("2"));
    }

    #[test]
    fn key_value_parsing() {
        let c = KeyValueConfig::parse("# comment\n\nN = 3\nbin_width=0.05\n").unwrap();
        assert_eq!(c.get("n"), Some("3"));
        assert_eq!(c.get("bin-width"), Some("0.05"));
        assert!(KeyValueConfig::parse("a = 1\nA = 2\n").is_err());
        assert!(KeyValueConfig::parse("novalue\n").is_err());
    }

    #[test]
    fn svg_contains_each_series() {
        let a = [(0.0, 1.0), (0.5, 2.0)];
        let b = [(0.0, 2.0), (0.5, f64::NAN)];
        let svg = svg_line_chart(
            "t<1>",
            "G",
            "stddev",
            &[Series { label: "a", points: &a }, Series { label: "b", points: &b }],
        );
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("t&lt;1&gt;"));
        assert!(!svg.contains("NaN"));
    }
}
