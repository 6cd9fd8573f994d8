//! Affine policy maps and the flat parameter vector the optimizer works on.
//!
//! A [`LinearMap`] stores its weights row-major. Flattening a list of maps
//! writes, for each map in order, its weights row by row followed by its bias.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Output and input dimension of one map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MapShape {
    pub rows: usize,
    pub cols: usize,
}

impl MapShape {
    pub fn new(rows: usize, cols: usize) -> Self {
        MapShape { rows, cols }
    }

    /// Number of scalars this map occupies in a flat vector.
    pub fn param_count(&self) -> usize {
        self.rows * self.cols + self.rows
    }
}

impl fmt::Display for MapShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// Describes how a [`ParamVector`] splits into maps.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Layout {
    shapes: Vec<MapShape>,
}

impl Layout {
    pub fn new(shapes: Vec<MapShape>) -> Result<Self> {
        if shapes.is_empty() {
            return Err(Error::LayoutMismatch("layout has no maps".into()));
        }
        Ok(Layout { shapes })
    }

    pub fn shapes(&self) -> &[MapShape] {
        &self.shapes
    }

    /// Total parameter count.
    pub fn len(&self) -> usize {
        self.shapes.iter().map(MapShape::param_count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index range occupied by map `index` inside the flat vector.
    pub fn slice_of(&self, index: usize) -> Range<usize> {
        let start: usize = self.shapes[..index].iter().map(MapShape::param_count).sum();
        start..start + self.shapes[index].param_count()
    }
}

/// Layout identifier, e.g. `5x4,16x16`.
impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.shapes.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::LayoutMismatch(format!("cannot parse layout '{s}'"));
        let mut shapes = Vec::new();
        for part in s.split(',') {
            let (r, c) = part.trim().split_once('x').ok_or_else(bad)?;
            let rows = r.parse().map_err(|_| bad())?;
            let cols = c.parse().map_err(|_| bad())?;
            shapes.push(MapShape::new(rows, cols));
        }
        Layout::new(shapes)
    }
}

/// Affine map `y = W x + b` with all entries finite.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMap {
    shape: MapShape,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearMap {
    /// All-zero map (the optimizer's starting point).
    pub fn zeros(rows: usize, cols: usize) -> Self {
        LinearMap {
            shape: MapShape::new(rows, cols),
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    /// Builds a map from row-major weights and a bias.
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != rows * cols {
            return Err(Error::dim("linear map weights", rows * cols, weights.len()));
        }
        if bias.len() != rows {
            return Err(Error::dim("linear map bias", rows, bias.len()));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear map coefficients".into()));
        }
        Ok(LinearMap {
            shape: MapShape::new(rows, cols),
            weights,
            bias,
        })
    }

    /// Builds a map from a list of weight rows.
    pub fn from_rows(rows: &[Vec<f64>], bias: Vec<f64>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::dim("linear map row", cols, bad.len()));
        }
        LinearMap::new(rows.len(), cols, rows.concat(), bias)
    }

    pub fn shape(&self) -> MapShape {
        self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape.rows
    }

    pub fn cols(&self) -> usize {
        self.shape.cols
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.shape.cols + col]
    }

    pub fn set_weight(&mut self, row: usize, col: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite("linear map weight".into()));
        }
        self.weights[row * self.shape.cols + col] = value;
        Ok(())
    }

    pub fn set_bias(&mut self, row: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite("linear map bias".into()));
        }
        self.bias[row] = value;
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.shape.rows];
        self.forward_split(input, &[], &mut out)?;
        Ok(out)
    }

    /// Evaluates the map on the concatenation `head ++ tail` without
    /// materializing it.
    pub fn forward_split(&self, head: &[f64], tail: &[f64], out: &mut [f64]) -> Result<()> {
        let cols = self.shape.cols;
        if head.len() + tail.len() != cols {
            return Err(Error::dim("linear map input", cols, head.len() + tail.len()));
        }
        if out.len() != self.shape.rows {
            return Err(Error::dim("linear map output", self.shape.rows, out.len()));
        }
        if head.iter().chain(tail).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear map input".into()));
        }
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.weights[i * cols..(i + 1) * cols];
            let (wh, wt) = row.split_at(head.len());
            let acc: f64 = wh.iter().zip(head).map(|(w, x)| w * x).sum::<f64>()
                + wt.iter().zip(tail).map(|(w, x)| w * x).sum::<f64>();
            *o = acc + self.bias[i];
        }
        Ok(())
    }
}

/// `W x + b`.
pub fn linear_forward(map: &LinearMap, input: &[f64]) -> Result<Vec<f64>> {
    map.forward(input)
}

/// Componentwise clamp to `[-1, 1]`; NaN is rejected.
pub fn clip_unit(v: &[f64]) -> Result<Vec<f64>> {
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::NonFinite("clip_unit input".into()));
    }
    Ok(v.iter().map(|x| x.clamp(-1.0, 1.0)).collect())
}

pub(crate) fn clip_unit_in_place(v: &mut [f64]) {
    for x in v {
        *x = x.clamp(-1.0, 1.0);
    }
}

/// Flat parameter vector tagged with the layout it was produced from.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Layout,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Layout) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::dim(
                format!("parameters for layout {layout}"),
                layout.len(),
                values.len(),
            ));
        }
        Ok(ParamVector { values, layout })
    }

    pub fn zeros(layout: Layout) -> Self {
        ParamVector {
            values: vec![0.0; layout.len()],
            layout,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Same layout, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        ParamVector::new(values, self.layout.clone())
    }

    pub fn to_maps(&self) -> Result<Vec<LinearMap>> {
        unflatten(self, &self.layout)
    }
}

/// Concatenates maps (row-major weights, then bias, per map) into one vector.
pub fn flatten(maps: &[LinearMap]) -> Result<ParamVector> {
    let layout = Layout::new(maps.iter().map(LinearMap::shape).collect())?;
    let mut values = Vec::with_capacity(layout.len());
    for m in maps {
        values.extend_from_slice(&m.weights);
        values.extend_from_slice(&m.bias);
    }
    Ok(ParamVector { values, layout })
}

/// Inverse of [`flatten`].
pub fn unflatten(p: &ParamVector, layout: &Layout) -> Result<Vec<LinearMap>> {
    unflatten_values(p.values(), layout)
}

pub fn unflatten_values(values: &[f64], layout: &Layout) -> Result<Vec<LinearMap>> {
    if values.len() != layout.len() {
        return Err(Error::dim(
            format!("parameters for layout {layout}"),
            layout.len(),
            values.len(),
        ));
    }
    let mut maps = Vec::with_capacity(layout.shapes().len());
    let mut offset = 0;
    for shape in layout.shapes() {
        let nw = shape.rows * shape.cols;
        let weights = values[offset..offset + nw].to_vec();
        let bias = values[offset + nw..offset + nw + shape.rows].to_vec();
        offset += shape.param_count();
        maps.push(LinearMap::new(shape.rows, shape.cols, weights, bias)?);
    }
    Ok(maps)
}
