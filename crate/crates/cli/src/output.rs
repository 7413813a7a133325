//! Batch artifacts: CSV series, JSON summaries and legacy VTK files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use tidalfem::fem::{evaluate_field, FieldValue};
use tidalfem::{Field, Mesh, State};

use crate::error::{CliError, CliResult};

/// Formats with 17 significant digits, enough to round-trip an `f64`.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Column-major numeric table written as CSV with a header row.
#[derive(Debug, Clone, Default)]
pub struct Series {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&x| fmt_real(x)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn parse_csv(text: &str) -> CliResult<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| CliError::config("empty CSV"))?;
        let columns: Vec<String> = header.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|c| c.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::config(format!("CSV row {}: {e}", i + 1)))?;
            if row.len() != columns.len() {
                return Err(CliError::config(format!("CSV row {} has {} cells", i + 1, row.len())));
            }
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_file(path, &self.to_csv())
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse_csv(&text)
    }
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub experiment: String,
    /// The resolved configuration exactly as it was run.
    pub config: Value,
    pub series: PathBuf,
    pub metrics: Value,
    pub wall_time_s: f64,
}

impl RunSummary {
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("summaries are plain JSON")
    }

    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join("summary.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Resource(e.to_string()))?;
        write_file(&path, &(text + "\n"))?;
        Ok(path)
    }
}

/// Triangles over the cell vertices; curved cells are drawn flat.
pub fn vtk_mesh(mesh: &Mesh<f64>, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET POLYDATA");
    let _ = writeln!(s, "POINTS {} double", mesh.num_vertices());
    for v in 0..mesh.num_vertices() {
        let x = mesh.vertex(v);
        let _ = writeln!(s, "{} {} {}", fmt_real(x[0]), fmt_real(x[1]), fmt_real(x[2]));
    }
    let nc = mesh.num_cells();
    let _ = writeln!(s, "POLYGONS {nc} {}", 4 * nc);
    for c in mesh.cells() {
        let _ = writeln!(s, "3 {} {} {}", c[0], c[1], c[2]);
    }
    s
}

/// Mesh plus cell data: `eta` and `u` sampled at each cell centroid.
pub fn vtk_frame(state: &State<f64>) -> CliResult<String> {
    let mesh = state.u.space().mesh();
    let mut s = vtk_mesh(mesh, &format!("t = {}", fmt_real(state.t)));
    let nc = mesh.num_cells();
    let centroid = [1.0 / 3.0, 1.0 / 3.0];
    let _ = writeln!(s, "CELL_DATA {nc}\nSCALARS eta double 1\nLOOKUP_TABLE default");
    for c in 0..nc {
        let _ = writeln!(s, "{}", fmt_real(scalar_at(&state.eta, c, centroid)?));
    }
    let _ = writeln!(s, "VECTORS u double");
    for c in 0..nc {
        let FieldValue::Vector(u) = evaluate_field(&state.u, c, centroid)? else {
            return Err(CliError::config("velocity field is not a vector field"));
        };
        let _ = writeln!(s, "{} {} {}", fmt_real(u[0]), fmt_real(u[1]), fmt_real(u[2]));
    }
    Ok(s)
}

fn scalar_at(f: &Field<f64>, c: usize, xi: [f64; 2]) -> CliResult<f64> {
    match evaluate_field(f, c, xi)? {
        FieldValue::Scalar(v) => Ok(v),
        FieldValue::Vector(_) => Err(CliError::config("elevation field is not scalar")),
    }
}
