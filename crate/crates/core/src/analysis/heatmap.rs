use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// What the cells of a [`HeatmapTable`] hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueSemantics {
    Reward,
    Log10Cost,
    Log10OneMinusConcurrence,
    OneMinusUnitarity,
    FftMagnitude,
}

impl ValueSemantics {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueSemantics::Reward => "reward",
            ValueSemantics::Log10Cost => "log10_JT",
            ValueSemantics::Log10OneMinusConcurrence => "log10_1mC",
            ValueSemantics::OneMinusUnitarity => "1mU",
            ValueSemantics::FftMagnitude => "fft_magnitude",
        }
    }
}

impl fmt::Display for ValueSemantics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ValueSemantics {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            ValueSemantics::Reward,
            ValueSemantics::Log10Cost,
            ValueSemantics::Log10OneMinusConcurrence,
            ValueSemantics::OneMinusUnitarity,
            ValueSemantics::FftMagnitude,
        ]
        .into_iter()
        .find(|v| v.as_str() == s)
        .ok_or_else(|| Error::Parse(format!("unknown heatmap semantics '{s}'")))
    }
}

/// Rectangular grid of optional values over two labelled coordinate axes.
/// `None` marks a cell whose computation failed or was not finite.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapTable {
    pub semantics: ValueSemantics,
    pub row_axis: String,
    pub col_axis: String,
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
    cells: Vec<Option<f64>>,
    pub metadata: BTreeMap<String, String>,
}

fn check_label(s: &str) -> Result<()> {
    if s.is_empty() || s.contains([',', '\n', '\r', '=', '\\']) {
        return Err(Error::InvalidArgument(format!("label '{s}' is empty or contains a reserved character")));
    }
    Ok(())
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("not a number: '{s}'")))
}

impl HeatmapTable {
    pub fn new(semantics: ValueSemantics, row_axis: &str, rows: Vec<f64>, col_axis: &str, cols: Vec<f64>) -> Result<Self> {
        check_label(row_axis)?;
        check_label(col_axis)?;
        if rows.is_empty() || cols.is_empty() {
            return Err(Error::InvalidArgument("heatmap axes must be non-empty".into()));
        }
        Ok(Self {
            semantics,
            row_axis: row_axis.into(),
            col_axis: col_axis.into(),
            cells: vec![None; rows.len() * cols.len()],
            rows,
            cols,
            metadata: BTreeMap::new(),
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row * self.cols.len() + col]
    }

    /// Stores a value; non-finite values are recorded as failed cells.
    pub fn set(&mut self, row: usize, col: usize, value: Option<f64>) {
        let n = self.cols.len();
        self.cells[row * n + col] = value.filter(|v| v.is_finite());
    }

    pub fn set_row(&mut self, row: usize, values: &[f64]) {
        for (col, v) in values.iter().enumerate().take(self.cols.len()) {
            self.set(row, col, Some(*v));
        }
    }

    pub fn row(&self, row: usize) -> &[Option<f64>] {
        let n = self.cols.len();
        &self.cells[row * n..(row + 1) * n]
    }

    pub fn with_metadata(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.into(), value.to_string());
        self
    }

    /// Finite cell range, or None if every cell failed.
    pub fn value_range(&self) -> Option<(f64, f64)> {
        let vals = self.cells.iter().flatten();
        let lo = vals.clone().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo <= hi).then_some((lo, hi))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        check_label(&self.row_axis)?;
        check_label(&self.col_axis)?;
        writeln!(w, "# semantics={}", self.semantics)?;
        writeln!(w, "# row_axis={}", self.row_axis)?;
        writeln!(w, "# col_axis={}", self.col_axis)?;
        for (k, v) in &self.metadata {
            check_label(k)?;
            if v.contains(['\n', '\r']) {
                return Err(Error::InvalidArgument(format!("metadata value for '{k}' spans lines")));
            }
            writeln!(w, "# meta.{k}={v}")?;
        }
        let header: Vec<String> = self.cols.iter().map(|c| c.to_string()).collect();
        writeln!(w, "{}\\{},{}", self.row_axis, self.col_axis, header.join(","))?;
        for (i, r) in self.rows.iter().enumerate() {
            let cells: Vec<String> = self.row(i).iter().map(|c| c.map_or(String::new(), |v| v.to_string())).collect();
            writeln!(w, "{r},{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut semantics = None;
        let mut metadata = BTreeMap::new();
        let mut header: Option<(String, String, Vec<f64>)> = None;
        let mut rows = Vec::new();
        let mut cells = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix("# ") {
                let (k, v) = comment.split_once('=').ok_or_else(|| Error::Parse(format!("bad comment line '{line}'")))?;
                match k {
                    "semantics" => semantics = Some(v.parse()?),
                    "row_axis" | "col_axis" => {}
                    _ => {
                        if let Some(key) = k.strip_prefix("meta.") {
                            metadata.insert(key.to_string(), v.to_string());
                        }
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            match &header {
                None => {
                    let (ra, ca) = fields[0].split_once('\\').ok_or_else(|| Error::Parse("missing axis header".into()))?;
                    let cols = fields[1..].iter().map(|s| parse_f64(s)).collect::<Result<Vec<_>>>()?;
                    header = Some((ra.to_string(), ca.to_string(), cols));
                }
                Some((_, _, cols)) => {
                    if fields.len() != cols.len() + 1 {
                        return Err(Error::Parse(format!("row has {} cells, expected {}", fields.len() - 1, cols.len())));
                    }
                    rows.push(parse_f64(fields[0])?);
                    for f in &fields[1..] {
                        cells.push(if f.trim().is_empty() { None } else { Some(parse_f64(f)?) });
                    }
                }
            }
        }
        let semantics = semantics.ok_or_else(|| Error::Parse("missing semantics line".into()))?;
        let (row_axis, col_axis, cols) = header.ok_or_else(|| Error::Parse("missing header row".into()))?;
        let mut table = HeatmapTable::new(semantics, &row_axis, rows, &col_axis, cols)?;
        table.cells = cells;
        table.metadata = metadata;
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f))
    }

    /// Renders the grid with `scale` pixels per cell, first row at the
    /// bottom. Failed cells are grey.
    pub fn write_png(&self, path: impl AsRef<Path>, scale: u32) -> Result<()> {
        let (nr, nc) = self.shape();
        let scale = scale.max(1);
        let (lo, hi) = self.value_range().unwrap_or((0.0, 1.0));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let img = image::RgbImage::from_fn(nc as u32 * scale, nr as u32 * scale, |x, y| {
            let col = (x / scale) as usize;
            let row = nr - 1 - (y / scale) as usize;
            match self.get(row, col) {
                Some(v) => image::Rgb(colormap((v - lo) / span)),
                None => image::Rgb([128, 128, 128]),
            }
        });
        img.save(path).map_err(|e| Error::Io(std::io::Error::other(e)))
    }
}

/// Piecewise-linear approximation of a perceptually ordered blue–yellow map.
fn colormap(t: f64) -> [u8; 3] {
    const STOPS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    std::array::from_fn(|c| (STOPS[i][c] * (1.0 - f) + STOPS[i + 1][c] * f).round() as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> HeatmapTable {
        let mut t = HeatmapTable::new(ValueSemantics::Log10Cost, "d1_mhz", vec![-1.5, 0.0, 1.5], "d2_mhz", vec![-0.1, 0.2])
            .unwrap()
            .with_metadata("reduction", "final window max");
        t.set(0, 0, Some(-3.25));
        t.set(0, 1, Some(1.0 / 3.0));
        t.set(1, 0, Some(f64::NAN));
        t.set(2, 1, Some(-1e-300));
        t
    }

    #[test]
    fn csv_round_trip() {
        let t = sample();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = HeatmapTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.get(1, 0), None);
    }

    #[test]
    fn reserved_labels_rejected() {
        assert!(HeatmapTable::new(ValueSemantics::Reward, "a,b", vec![0.0], "c", vec![0.0]).is_err());
        assert!(HeatmapTable::new(ValueSemantics::Reward, "a", vec![], "c", vec![0.0]).is_err());
    }

    #[test]
    fn ragged_rows_rejected() {
        let csv = "# semantics=reward\nr\\c,0,1\n0,1\n";
        assert!(HeatmapTable::read_csv(csv.as_bytes()).is_err());
    }

    #[test]
    fn png_written() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.png");
        sample().write_png(&path, 4).unwrap();
        assert!(std::fs::metadata(&path).unwrap().len() > 0);
    }

    #[test]
    fn colormap_ends() {
        assert_eq!(colormap(0.0), [68, 1, 84]);
        assert_eq!(colormap(1.0), [253, 231, 37]);
    }
}
