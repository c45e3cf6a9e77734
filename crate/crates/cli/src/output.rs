//! Artifact writing: CSV tables, log-scale heatmaps and the run manifest.
//! Everything written goes through [`OutputSet`], which removes it again if
//! the run fails.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Lower clamp of the heatmap colour scale.
pub const ANGLE_FLOOR: f64 = 1e-7;

/// Files written by one run, relative to its output directory.
pub struct OutputSet {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<String>,
}

impl OutputSet {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn path_for(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path_for(name);
        fs::write(path, bytes)?;
        Ok(())
    }

    /// CSV with a header row; every row must have the header's width.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.path_for(name);
        let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
        w.write_record(header).map_err(csv_io)?;
        for r in rows {
            w.write_record(r).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Removes every file written so far, and the directory if this run
    /// created it and it is now empty.
    pub fn discard(self) {
        for f in &self.files {
            let _ = fs::remove_file(self.dir.join(f));
        }
        let _ = fs::remove_file(self.dir.join(MANIFEST));
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

fn csv_io(e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => CliError::Io(e),
        other => CliError::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Shortest round-trip representation, so reruns are byte-identical.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// A scalar field on a regular grid, row-major with row 0 at the lowest y.
pub struct Field<'a> {
    pub width: usize,
    pub height: usize,
    pub values: &'a [f64],
}

/// Grey level in 0..=255: log10 of the angle clamped to [1e−7, π/2], dark
/// for small angles so EP lines show as dark curves. NaN renders white.
pub fn grey(angle: f64) -> u8 {
    if angle.is_nan() {
        return 255;
    }
    let lo = ANGLE_FLOOR.log10();
    let hi = FRAC_PI_2.log10();
    let t = (angle.clamp(ANGLE_FLOOR, FRAC_PI_2).log10() - lo) / (hi - lo);
    (t * 255.0).round() as u8
}

fn pixel_rows<'a>(f: &'a Field<'a>) -> impl Iterator<Item = Vec<u8>> + 'a {
    (0..f.height)
        .rev()
        .map(move |r| f.values[r * f.width..(r + 1) * f.width].iter().map(|&a| grey(a)).collect())
}

/// Binary greyscale PGM (P5), top row = highest y.
pub fn render_pgm(f: &Field) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", f.width, f.height).into_bytes();
    for row in pixel_rows(f) {
        out.extend(row);
    }
    out
}

/// SVG with one rect per run of equal grey in each row.
pub fn render_svg(f: &Field, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w} {h}" width="{w}" height="{h}" shape-rendering="crispEdges">"#,
        w = f.width,
        h = f.height
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    for (y, row) in pixel_rows(f).enumerate() {
        let mut x = 0;
        while x < row.len() {
            let g = row[x];
            let mut end = x + 1;
            while end < row.len() && row[end] == g {
                end += 1;
            }
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{}" height="1" fill="rgb({g},{g},{g})"/>"#,
                end - x
            );
            x = end;
        }
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub files: Vec<FileEntry>,
    pub versions: serde_json::Map<String, serde_json::Value>,
    pub workers: usize,
    pub wall_time_secs: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl ResultManifest {
    /// Digests every file of `set` and writes the manifest next to them.
    pub fn write(
        set: &OutputSet,
        command: &str,
        config: serde_json::Value,
        workers: usize,
        wall_time_secs: f64,
    ) -> Result<Self, CliError> {
        let mut files = Vec::with_capacity(set.files().len());
        for name in set.files() {
            let data = fs::read(set.dir().join(name))?;
            files.push(FileEntry {
                path: name.clone(),
                bytes: data.len() as u64,
                sha256: sha256_hex(&data),
            });
        }
        let mut versions = serde_json::Map::new();
        versions.insert("nhep".into(), nhep_version().into());
        versions.insert("nhep-cli".into(), env!("CARGO_PKG_VERSION").into());
        let m = Self {
            command: command.to_string(),
            config,
            files,
            versions,
            workers,
            wall_time_secs,
        };
        let text = serde_json::to_string_pretty(&m).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
        let mut fh = fs::File::create(set.dir().join(MANIFEST))?;
        fh.write_all(text.as_bytes())?;
        fh.write_all(b"\n")?;
        Ok(m)
    }

    /// Every listed file exists and matches its digest.
    pub fn validate(dir: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(dir.join(MANIFEST)).map_err(|e| format!("manifest: {e}"))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| format!("manifest: {e}"))?;
        for f in &m.files {
            let data = fs::read(dir.join(&f.path)).map_err(|e| format!("{}: {e}", f.path))?;
            if data.len() as u64 != f.bytes || sha256_hex(&data) != f.sha256 {
                return Err(format!("{}: digest mismatch", f.path));
            }
        }
        Ok(m)
    }
}

fn nhep_version() -> &'static str {
    // the library and the front end are versioned together
    env!("CARGO_PKG_VERSION")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grey_scale_is_log_clamped() {
        assert_eq!(grey(1e-12), 0);
        assert_eq!(grey(1e-7), 0);
        assert_eq!(grey(FRAC_PI_2), 255);
        assert_eq!(grey(3.0), 255);
        assert!(grey(1e-4) < grey(1e-2));
        assert_eq!(grey(f64::NAN), 255);
    }

    #[test]
    fn pgm_header_and_orientation() {
        let v = [1e-7, FRAC_PI_2, FRAC_PI_2, FRAC_PI_2];
        let img = render_pgm(&Field {
            width: 2,
            height: 2,
            values: &v,
        });
        let head = b"P5\n2 2\n255\n";
        assert_eq!(&img[..head.len()], head);
        // lowest row (containing the dark cell) comes last
        assert_eq!(&img[head.len()..], &[255, 255, 0, 255]);
    }

    #[test]
    fn svg_merges_runs() {
        let v = [1.0; 6];
        let s = render_svg(
            &Field {
                width: 3,
                height: 2,
                values: &v,
            },
            "a<b",
        );
        assert_eq!(s.matches("<rect").count(), 2);
        assert!(s.contains("a&lt;b"));
    }

    #[test]
    fn manifest_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let mut set = OutputSet::create(dir.path()).unwrap();
        set.write_csv("t.csv", &["a", "b"], &[vec!["1".into(), "2".into()]]).unwrap();
        ResultManifest::write(&set, "sweep", serde_json::json!({}), 1, 0.0).unwrap();
        let m = ResultManifest::validate(dir.path()).unwrap();
        assert_eq!(m.files.len(), 1);
        fs::write(dir.path().join("t.csv"), "a,b\n1,3\n").unwrap();
        assert!(ResultManifest::validate(dir.path()).is_err());
    }

    #[test]
    fn discard_removes_created_directory() {
        let root = tempfile::tempdir().unwrap();
        let dir = root.path().join("run");
        let mut set = OutputSet::create(&dir).unwrap();
        set.write_bytes("x.bin", b"1").unwrap();
        set.discard();
        assert!(!dir.exists());
    }

    #[test]
    fn digest_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
