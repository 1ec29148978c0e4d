//! Instance documents on disk: JSON with a row-major matrix, or headerless
//! CSV plus a shape sidecar.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::block::{BlockShape, BlockVector, SensingMatrix};
use crate::counterexample::{CounterexampleInstance, InstanceMeta};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDoc {
    #[serde(rename = "L")]
    pub blocks: usize,
    pub d: usize,
    pub m: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<InstanceMeta>,
    /// Row-major, present for constructed counterexamples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gram: Option<Vec<f64>>,
}

/// A validated instance: matrix plus whatever vectors came with it.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub matrix: SensingMatrix,
    pub x: Option<BlockVector>,
    pub y: Option<DVector<f64>>,
    pub eps: Option<f64>,
    pub meta: Option<InstanceMeta>,
}

impl Instance {
    pub fn new(matrix: SensingMatrix) -> Self {
        Self {
            matrix,
            x: None,
            y: None,
            eps: None,
            meta: None,
        }
    }

    /// `y` if given, otherwise `A x`.
    pub fn measurements(&self) -> Result<DVector<f64>> {
        match (&self.y, &self.x) {
            (Some(y), _) => Ok(y.clone()),
            (None, Some(x)) => self.matrix.apply(x),
            (None, None) => Err(Error::invalid("instance has neither y nor x")),
        }
    }

    pub fn to_doc(&self) -> InstanceDoc {
        let shape = self.matrix.shape();
        InstanceDoc {
            blocks: shape.blocks(),
            d: shape.block_size(),
            m: self.matrix.rows(),
            a: self.matrix.to_row_major(),
            x: self.x.as_ref().map(|x| x.values().as_slice().to_vec()),
            y: self.y.as_ref().map(|y| y.as_slice().to_vec()),
            eps: self.eps,
            meta: self.meta.clone(),
            gram: None,
        }
    }

    pub fn from_doc(doc: InstanceDoc) -> Result<Self> {
        let shape = BlockShape::new(doc.blocks, doc.d)?;
        let matrix = SensingMatrix::from_row_major(shape, doc.m, &doc.a)?;
        let x = doc
            .x
            .map(|v| BlockVector::from_slice(shape, &v))
            .transpose()?;
        let y = match doc.y {
            Some(v) if v.len() != doc.m => {
                return Err(Error::invalid(format!("y has length {}, expected m = {}", v.len(), doc.m)))
            }
            Some(v) => Some(DVector::from_vec(v)),
            None => None,
        };
        if let Some(e) = doc.eps {
            if !(e >= 0.0) {
                return Err(Error::invalid("eps must be non-negative"));
            }
        }
        Ok(Self {
            matrix,
            x,
            y,
            eps: doc.eps,
            meta: doc.meta,
        })
    }
}

impl From<&CounterexampleInstance> for InstanceDoc {
    fn from(inst: &CounterexampleInstance) -> Self {
        let shape = inst.matrix.shape();
        let gram = inst.gram.transpose();
        InstanceDoc {
            blocks: shape.blocks(),
            d: shape.block_size(),
            m: inst.matrix.rows(),
            a: inst.matrix.to_row_major(),
            x: Some(inst.signal.values().as_slice().to_vec()),
            y: Some(inst.measurements.as_slice().to_vec()),
            eps: None,
            meta: Some(inst.meta.clone()),
            // column-major storage of the transpose is row-major of the original
            gram: Some(gram.as_slice().to_vec()),
        }
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_instance_json(path: &Path) -> Result<Instance> {
    Instance::from_doc(read_json(path)?)
}

pub fn write_instance_json(path: &Path, inst: &Instance) -> Result<()> {
    write_json(path, &inst.to_doc())
}

/// Shape sidecar for CSV matrices, `<stem>.shape.json`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeDoc {
    #[serde(rename = "L")]
    pub blocks: usize,
    pub d: usize,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    csv.with_file_name(format!("{stem}.shape.json"))
}

/// Headerless CSV, one matrix row per line.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(Error::invalid(format!("row {} has {} fields, expected {c}", rows + 1, rec.len())))
            }
            _ => {}
        }
        for f in rec.iter() {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::invalid(format!("not a number in row {}: {f:?}", rows + 1)))?;
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::invalid("empty matrix file"))?;
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn write_matrix_csv(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for r in 0..a.nrows() {
        w.write_record(a.row(r).iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a matrix from CSV, taking the block shape from `shape` if given and
/// from the sidecar otherwise.
pub fn read_matrix_csv_with_shape(path: &Path, shape: Option<BlockShape>) -> Result<SensingMatrix> {
    let entries = read_matrix_csv(path)?;
    let shape = match shape {
        Some(s) => s,
        None => {
            let side = sidecar_path(path);
            if !side.exists() {
                return Err(Error::invalid(format!(
                    "CSV matrix needs a block shape: pass --blocks/--block-size or provide {}",
                    side.display()
                )));
            }
            let doc: ShapeDoc = read_json(&side)?;
            BlockShape::new(doc.blocks, doc.d)?
        }
    };
    SensingMatrix::new(shape, entries)
}

/// Dispatches on the extension: `.csv` is a bare matrix, anything else is an
/// instance document.
pub fn load_instance(path: &Path, shape: Option<BlockShape>) -> Result<Instance> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        Ok(Instance::new(read_matrix_csv_with_shape(path, shape)?))
    } else {
        read_instance_json(path)
    }
}
