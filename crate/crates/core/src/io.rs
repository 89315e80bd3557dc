//! File formats: fields as a JSON header plus row-major CSV or little-endian
//! binary payloads, covers as CSV, comparisons and reports as JSON with CSV
//! attachments.

use crate::content::{ContentEstimate, Cover};
use crate::field::{BBox, Grid, ScalarField};
use crate::potential::PointwiseComparison;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

/// Payload encoding for field values and masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldEncoding {
    /// Row-major CSV, one grid row per line (x fastest).
    Csv,
    /// IEEE-754 little-endian f64 stream (mask as one byte per cell).
    Bin,
}

/// JSON header written next to each field payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub dim: usize,
    pub resolution: usize,
    pub bbox: BBox,
    pub field_kind: String,
    pub encoding: FieldEncoding,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_os_string();
    s.push(ext);
    PathBuf::from(s)
}

/// Write `<stem>.json`, `<stem>.values.{csv|bin}` and `<stem>.mask.{csv|bin}`.
pub fn save_field(
    stem: &Path,
    field: &ScalarField,
    field_kind: &str,
    encoding: FieldEncoding,
) -> Result<()> {
    if let Some(dir) = stem.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let grid = field.grid();
    let header = FieldHeader {
        dim: grid.dim(),
        resolution: grid.resolution(),
        bbox: grid.bbox(),
        field_kind: field_kind.to_string(),
        encoding,
    };
    std::fs::write(with_ext(stem, ".json"), serde_json::to_string_pretty(&header)?)?;
    let r = grid.resolution();
    match encoding {
        FieldEncoding::Csv => {
            let mut w = BufWriter::new(std::fs::File::create(with_ext(stem, ".values.csv"))?);
            for row in field.values().chunks(r) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
                writeln!(w, "{}", line.join(","))?;
            }
            let mut w = BufWriter::new(std::fs::File::create(with_ext(stem, ".mask.csv"))?);
            for row in field.mask().chunks(r) {
                let line: Vec<&str> = row.iter().map(|&m| if m { "1" } else { "0" }).collect();
                writeln!(w, "{}", line.join(","))?;
            }
        }
        FieldEncoding::Bin => {
            let mut w = BufWriter::new(std::fs::File::create(with_ext(stem, ".values.bin"))?);
            for v in field.values() {
                w.write_all(&v.to_le_bytes())?;
            }
            let mut w = BufWriter::new(std::fs::File::create(with_ext(stem, ".mask.bin"))?);
            for &m in field.mask() {
                w.write_all(&[m as u8])?;
            }
        }
    }
    Ok(())
}

/// Load a field written by [`save_field`].
pub fn load_field(stem: &Path) -> Result<(ScalarField, FieldHeader)> {
    let header: FieldHeader =
        serde_json::from_str(&std::fs::read_to_string(with_ext(stem, ".json"))?)?;
    let grid = Grid::new(header.dim, header.resolution, header.bbox)?;
    let n = grid.num_cells();
    let (values, mask) = match header.encoding {
        FieldEncoding::Csv => {
            let mut values = Vec::with_capacity(n);
            let f = std::fs::File::open(with_ext(stem, ".values.csv"))?;
            for line in std::io::BufReader::new(f).lines() {
                for tok in line?.split(',') {
                    let tok = tok.trim();
                    if tok.is_empty() {
                        continue;
                    }
                    values.push(tok.parse::<f64>().map_err(|e| {
                        Error::invalid("field csv", format!("bad float {tok:?}: {e}"))
                    })?);
                }
            }
            let mut mask = Vec::with_capacity(n);
            let f = std::fs::File::open(with_ext(stem, ".mask.csv"))?;
            for line in std::io::BufReader::new(f).lines() {
                for tok in line?.split(',') {
                    let tok = tok.trim();
                    if tok.is_empty() {
                        continue;
                    }
                    mask.push(tok == "1");
                }
            }
            (values, mask)
        }
        FieldEncoding::Bin => {
            let mut buf = Vec::new();
            std::fs::File::open(with_ext(stem, ".values.bin"))?.read_to_end(&mut buf)?;
            if buf.len() != 8 * n {
                return Err(Error::invalid("field bin", "value payload has the wrong size"));
            }
            let values = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            let mut mbuf = Vec::new();
            std::fs::File::open(with_ext(stem, ".mask.bin"))?.read_to_end(&mut mbuf)?;
            if mbuf.len() != n {
                return Err(Error::invalid("field bin", "mask payload has the wrong size"));
            }
            (values, mbuf.into_iter().map(|b| b != 0).collect())
        }
    };
    Ok((ScalarField::from_raw(grid, values, mask)?, header))
}

/// Covers as CSV: one ball per row `(x, y, z, r, beta, cost)`.
pub fn save_cover_csv(path: &Path, cover: &Cover) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "x,y,z,radius,beta,cost")?;
    for b in &cover.balls {
        writeln!(
            w,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            b.center[0], b.center[1], b.center[2], b.radius, b.beta, b.cost
        )?;
    }
    Ok(())
}

/// Content estimate as JSON (cover included) plus the cover CSV attachment.
pub fn save_content(stem: &Path, estimate: &ContentEstimate) -> Result<()> {
    if let Some(dir) = stem.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(with_ext(stem, ".json"), serde_json::to_string_pretty(estimate)?)?;
    save_cover_csv(&with_ext(stem, ".cover.csv"), &estimate.cover)
}

/// Pointwise comparison as JSON plus a per-point CSV attachment.
pub fn save_comparison(stem: &Path, cmp: &PointwiseComparison) -> Result<()> {
    if let Some(dir) = stem.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(with_ext(stem, ".json"), serde_json::to_string_pretty(cmp)?)?;
    let mut w = BufWriter::new(std::fs::File::create(with_ext(stem, ".points.csv"))?);
    writeln!(w, "index,x,y,z,left,right,ratio,degenerate")?;
    for (p, d) in cmp
        .points
        .iter()
        .map(|p| (p, 0))
        .chain(cmp.degenerate.iter().map(|p| (p, 1)))
    {
        writeln!(
            w,
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}",
            p.index, p.point[0], p.point[1], p.point[2], p.left, p.right, p.ratio, d
        )?;
    }
    Ok(())
}

/// A named table of plot data written as CSV with a header row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvTable {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        CsvTable {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "{}", self.header.join(","))?;
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{sample_field, TestFunction};

    #[test]
    fn field_roundtrip_csv_and_bin() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(2, 16, BBox::symmetric(1.0)).unwrap();
        let f = sample_field(
            &g,
            &TestFunction::GaussianBump { center: [0.2, -0.3, 0.0], sigma: 0.4, amplitude: 1.5 },
            None,
        )
        .unwrap();
        for enc in [FieldEncoding::Csv, FieldEncoding::Bin] {
            let stem = dir.path().join(format!("f-{enc:?}"));
            save_field(&stem, &f, "test", enc).unwrap();
            let (g2, header) = load_field(&stem).unwrap();
            assert_eq!(header.field_kind, "test");
            assert_eq!(g2.grid(), f.grid());
            assert_eq!(g2.mask(), f.mask());
            match enc {
                // binary is bit-exact; CSV is written with 17 significant digits
                FieldEncoding::Bin => assert_eq!(g2.values(), f.values()),
                FieldEncoding::Csv => {
                    for (a, b) in g2.values().iter().zip(f.values()) {
                        assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn csv_table_writes_header() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = CsvTable::new("decay", &["t", "content"]);
        t.push(vec![1.0, 0.5]);
        let path = dir.path().join("t.csv");
        t.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,content\n"));
        assert_eq!(text.lines().count(), 2);
    }
}
