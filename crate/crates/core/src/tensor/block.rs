use crate::error::{Error, Result};

/// A batch of `m` feature vectors of dimension `d`, stored row-major.
///
/// The optional spatial shape records the `(h, w)` grid the vectors were
/// flattened from; `m` is then a whole multiple of `h * w` (one or more
/// images).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    data: Vec<f64>,
    m: usize,
    d: usize,
    spatial: Option<(u32, u32)>,
}

impl FeatureBlock {
    pub fn new(data: Vec<f64>, m: usize, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::shape("channel count must be at least 1"));
        }
        let expected = m
            .checked_mul(d)
            .ok_or_else(|| Error::shape(format!("{m}x{d} overflows")))?;
        if data.len() != expected {
            return Err(Error::shape(format!(
                "data length {} does not match {m}x{d}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Value(format!(
                "non-finite scalar {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(Self {
            data,
            m,
            d,
            spatial: None,
        })
    }

    pub fn zeros(m: usize, d: usize) -> Result<Self> {
        Self::new(vec![0.0; m * d], m, d)
    }

    /// Builds a block from rows of equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], d: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != d {
                return Err(Error::shape(format!(
                    "row {i} has {} channels, expected {d}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(data, rows.len(), d)
    }

    /// Attaches an `(h, w)` spatial shape.
    pub fn with_spatial(mut self, h: u32, w: u32) -> Result<Self> {
        let plane = h as usize * w as usize;
        if plane == 0 || !self.m.is_multiple_of(plane) {
            return Err(Error::shape(format!(
                "{} vectors cannot be laid out as {h}x{w} images",
                self.m
            )));
        }
        self.spatial = Some((h, w));
        Ok(self)
    }

    /// Internal constructor for results computed from already validated
    /// blocks; finiteness is checked only in debug builds.
    pub(crate) fn from_raw(data: Vec<f64>, m: usize, d: usize) -> Self {
        debug_assert_eq!(data.len(), m * d);
        debug_assert!(d >= 1);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self {
            data,
            m,
            d,
            spatial: None,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.m, self.d)
    }

    pub fn spatial(&self) -> Option<(u32, u32)> {
        self.spatial
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.d)
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub(crate) fn same_shape(&self, other: &FeatureBlock, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!(
                "{what}: shape {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// Applies `f` elementwise, keeping shape and spatial metadata.
    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> FeatureBlock {
        FeatureBlock {
            data: self.data.iter().map(|&v| f(v)).collect(),
            m: self.m,
            d: self.d,
            spatial: self.spatial,
        }
    }

    /// Elementwise `self - other`; shapes must already agree.
    pub(crate) fn sub(&self, other: &FeatureBlock) -> FeatureBlock {
        debug_assert_eq!(self.shape(), other.shape());
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        FeatureBlock {
            data,
            m: self.m,
            d: self.d,
            spatial: self.spatial,
        }
    }

    pub(crate) fn add_assign(&mut self, other: &FeatureBlock) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}
