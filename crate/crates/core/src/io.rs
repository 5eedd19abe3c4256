//! File formats.
//!
//! A grid function is a JSON document `{n, L, h, T, J, d, norm_tag, values}`
//! with row-major values (`cell * d + k`), or `values_file` naming a sidecar
//! of little-endian `f64`. Embedded fields use the same layout with a leading
//! base-cell axis. Open sets are sorted cell lists, balls are
//! `[{center, radius}]`, and a decomposition is a manifest of terms whose
//! atoms are stored as grid-function files next to it.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::atomic::AtomicDecomposition;
use crate::embed::EmbeddedField;
use crate::error::{Error, Result};
use crate::geometry::{Ball, OpenSet};
use crate::halfspace::{BaseGrid, GridFunction, GridParams, HalfSpaceGrid, NormTag, NormedSpace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunctionDoc {
    #[serde(flatten)]
    pub grid: GridParams,
    pub d: usize,
    pub norm_tag: NormTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values_file: Option<String>,
}

impl GridFunctionDoc {
    pub fn of(f: &GridFunction) -> Self {
        let space = f.space();
        Self { grid: f.grid().params(), d: space.d, norm_tag: space.norm, values: Some(f.values().to_vec()), values_file: None }
    }

    /// Resolves a sidecar relative to `dir`.
    pub fn into_function(self, dir: &Path, grid: Option<Arc<HalfSpaceGrid>>) -> Result<GridFunction> {
        let grid = match grid {
            Some(g) if g.params() == self.grid => g,
            Some(_) => return Err(Error::GridMismatch("document grid differs from the expected grid".into())),
            None => Arc::new(self.grid.build()?),
        };
        let space = NormedSpace::new(self.d, self.norm_tag)?;
        let values = match (self.values, self.values_file) {
            (Some(v), _) => v,
            (None, Some(file)) => read_f64_le(&dir.join(file))?,
            (None, None) => return Err(Error::Format("grid function has neither values nor values_file".into())),
        };
        GridFunction::from_values(grid, space, values)
    }
}

pub fn write_f64_le(path: &Path, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_f64_le(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!("{} has {} bytes, not a multiple of 8", path.display(), bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("f64")
}

/// Writes `path` as JSON; with `binary` the values go to `<stem>.f64`.
pub fn write_grid_function(path: &Path, f: &GridFunction, binary: bool) -> Result<()> {
    let mut doc = GridFunctionDoc::of(f);
    if binary {
        let side = sidecar_path(path);
        write_f64_le(&side, f.values())?;
        doc.values = None;
        doc.values_file = side.file_name().map(|s| s.to_string_lossy().into_owned());
    }
    write_json(path, &doc)
}

pub fn read_grid_function(path: &Path) -> Result<GridFunction> {
    let doc: GridFunctionDoc = read_json(path)?;
    doc.into_function(path.parent().unwrap_or(Path::new(".")), None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpenSetDoc {
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub h: f64,
    pub cells: Vec<usize>,
}

impl OpenSetDoc {
    pub fn of(set: &OpenSet) -> Self {
        let g = set.grid();
        Self { n: g.dim(), l: g.half_width(), h: g.h(), cells: set.cells() }
    }

    pub fn into_set(mut self) -> Result<OpenSet> {
        self.cells.sort_unstable();
        OpenSet::from_cells(BaseGrid::new(self.n, self.l, self.h)?, self.cells)
    }
}

pub fn balls_to_json(balls: &[Ball]) -> Result<String> {
    Ok(serde_json::to_string(balls)?)
}

pub fn balls_from_json(text: &str) -> Result<Vec<Ball>> {
    Ok(serde_json::from_str(text)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermEntry {
    pub lambda: f64,
    pub k: i32,
    pub j: usize,
    pub ball: Ball,
    pub atom_ref: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionManifest {
    #[serde(flatten)]
    pub grid: GridParams,
    pub d: usize,
    pub norm_tag: NormTag,
    pub source_norm: f64,
    pub lambda_sum: f64,
    pub terms: Vec<TermEntry>,
}

/// Writes `dir/decomposition.json` and one atom file per term under
/// `dir/atoms/`.
pub fn write_decomposition(dir: &Path, dec: &AtomicDecomposition, f: &GridFunction, binary: bool) -> Result<DecompositionManifest> {
    let atoms = dir.join("atoms");
    fs::create_dir_all(&atoms)?;
    let mut terms = Vec::with_capacity(dec.terms.len());
    for (i, term) in dec.terms.iter().enumerate() {
        let name = format!("atoms/atom_{i:05}.json");
        write_grid_function(&dir.join(&name), &term.atom(f), binary)?;
        terms.push(TermEntry { lambda: term.lambda, k: term.k, j: term.j, ball: term.ball, atom_ref: name });
    }
    let space = f.space();
    let manifest = DecompositionManifest {
        grid: f.grid().params(),
        d: space.d,
        norm_tag: space.norm,
        source_norm: dec.source_norm,
        lambda_sum: dec.lambda_sum,
        terms,
    };
    write_json(&dir.join("decomposition.json"), &manifest)?;
    Ok(manifest)
}

/// Reads a manifest back as `(lambda, atom)` pairs.
pub fn read_decomposition(dir: &Path) -> Result<(DecompositionManifest, Vec<(f64, GridFunction)>)> {
    let manifest: DecompositionManifest = read_json(&dir.join("decomposition.json"))?;
    let grid = Arc::new(manifest.grid.build()?);
    let mut atoms = Vec::with_capacity(manifest.terms.len());
    for term in &manifest.terms {
        let path = dir.join(&term.atom_ref);
        let doc: GridFunctionDoc = read_json(&path)?;
        let atom = doc.into_function(path.parent().unwrap_or(dir), Some(grid.clone()))?;
        atoms.push((term.lambda, atom));
    }
    Ok((manifest, atoms))
}

/// Values ordered `[x][cell][k]`.
pub fn embedded_to_doc(field: &EmbeddedField) -> GridFunctionDoc {
    let grid = field.grid();
    let d = field.space().d;
    let mut values = Vec::with_capacity(field.values().len());
    for x in 0..grid.base().len() {
        for c in 0..grid.len() {
            values.extend_from_slice(field.value(x, c));
        }
    }
    GridFunctionDoc { grid: grid.params(), d, norm_tag: field.space().norm, values: Some(values), values_file: None }
}

pub fn embedded_from_doc(doc: GridFunctionDoc) -> Result<EmbeddedField> {
    let grid = Arc::new(doc.grid.build()?);
    let space = NormedSpace::new(doc.d, doc.norm_tag)?;
    let values = doc.values.ok_or_else(|| Error::Format("embedded field needs inline values".into()))?;
    let expected = grid.base().len() * grid.len() * doc.d;
    if values.len() != expected {
        return Err(Error::ValueLength { expected, got: values.len() });
    }
    let cells = grid.len();
    EmbeddedField::from_fn(grid, space, |x, c, v| {
        let at = (x * cells + c) * doc.d;
        v.copy_from_slice(&values[at..at + doc.d]);
    })
}
