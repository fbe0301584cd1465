//! Dense-network machinery: flat parameter storage, a reverse-mode tape,
//! MLP layers with Fourier time features, and Adam.
//!
//! Everything works on 64-bit floats. Parameters for a whole policy live in
//! one flat vector ([`ParameterStore`]) described by an immutable
//! [`ParamLayout`]; layers address their weights by offset into that vector,
//! which keeps the optimizer and gradient clipping trivial.

mod adam;
mod mlp;
mod tape;

pub use adam::{clip_vector, clip_vector_in_place, AdamState};
pub use mlp::{fourier_time_features, Activation, LinearRef, Mlp};
pub use tape::{Gradients, NodeId, Tape};

use std::sync::Arc;

use crate::{Error, Result};

/// Row-major tensor of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} wants {} values, got {}",
                shape,
                expect,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// One named slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered, gap-free description of every parameter slice. Immutable once
/// built.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParamLayout {
    entries: Vec<ParamEntry>,
    total: usize,
}

impl ParamLayout {
    pub fn builder() -> LayoutBuilder {
        LayoutBuilder {
            layout: ParamLayout {
                entries: Vec::new(),
                total: 0,
            },
        }
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

pub struct LayoutBuilder {
    layout: ParamLayout,
}

impl LayoutBuilder {
    /// Append a `rows × cols` slice; returns its offset.
    pub fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> usize {
        let offset = self.layout.total;
        self.layout.entries.push(ParamEntry {
            name: name.into(),
            rows,
            cols,
            offset,
        });
        self.layout.total += rows * cols;
        offset
    }

    pub fn finish(self) -> Arc<ParamLayout> {
        Arc::new(self.layout)
    }
}

/// Flat parameter vector plus its layout.
#[derive(Debug, Clone)]
pub struct ParameterStore {
    flat: Vec<f64>,
    layout: Arc<ParamLayout>,
}

impl ParameterStore {
    pub fn zeros(layout: Arc<ParamLayout>) -> Self {
        ParameterStore {
            flat: vec![0.0; layout.total()],
            layout,
        }
    }

    pub fn from_flat(layout: Arc<ParamLayout>, flat: Vec<f64>) -> Result<Self> {
        if flat.len() != layout.total() {
            return Err(Error::shape(format!(
                "layout wants {} parameters, got {}",
                layout.total(),
                flat.len()
            )));
        }
        Ok(ParameterStore { flat, layout })
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn slice(&self, entry: &ParamEntry) -> &[f64] {
        &self.flat[entry.offset..entry.offset + entry.len()]
    }

    pub fn all_finite(&self) -> bool {
        self.flat.iter().all(|v| v.is_finite())
    }
}
