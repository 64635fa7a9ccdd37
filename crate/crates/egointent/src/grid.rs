//! Dense 2-D grid primitives: rasterization, elementwise algebra,
//! normalization, and resampling.
//!
//! Every prior and label map in the pipeline is a [`HeatMap`], a row-major
//! grid of finite `f64` values. A pixel at `(col, row)` has its center at
//! `(col + 0.5, row + 0.5)` in continuous image coordinates; a pixel
//! belongs to a box iff its center lies inside the half-open rectangle
//! `[x, x+w) x [y, y+h)`, so adjacent boxes tile the grid without
//! double-covering. Boxes extending past the grid are clipped, never
//! rejected.

use crate::error::{Error, Result};

/// Width and height of a pixel grid. Both dimensions are at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridDims {
    width: usize,
    height: usize,
}

impl GridDims {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        width
            .checked_mul(height)
            .ok_or_else(|| Error::invalid("grid pixel count overflows"))?;
        Ok(GridDims { width, height })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Total pixel count `width * height`.
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Axis-aligned detection box: top-left corner, extent, and confidence.
///
/// Extents are strictly positive and the confidence lies in `[0, 1]`.
/// Coordinates are real-valued and may place the box partly or wholly
/// outside the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub c: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64, c: f64) -> Result<Self> {
        let b = BBox { x, y, w, h, c };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.x, self.y, self.w, self.h, self.c];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("bounding box fields must be finite"));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::invalid(format!(
                "bounding box extents must be positive, got w={} h={}",
                self.w, self.h
            )));
        }
        if !(0.0..=1.0).contains(&self.c) {
            return Err(Error::invalid(format!(
                "bounding box confidence must be in [0,1], got {}",
                self.c
            )));
        }
        Ok(())
    }

    /// Center of the box in continuous coordinates.
    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// True iff the pixel center `(col + 0.5, row + 0.5)` lies inside
    /// the half-open box rectangle.
    pub fn contains_pixel(&self, col: usize, row: usize) -> bool {
        let cx = col as f64 + 0.5;
        let cy = row as f64 + 0.5;
        cx >= self.x && cx < self.x + self.w && cy >= self.y && cy < self.y + self.h
    }

    /// Range of pixel columns and rows whose centers fall inside the box,
    /// clipped to the grid: `(col_lo..col_hi, row_lo..row_hi)`.
    pub fn pixel_span(&self, dims: GridDims) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let clamp = |lo: f64, hi: f64, max: usize| {
            // Centers at c + 0.5 land in [lo, hi) for c in [ceil(lo - 0.5), ceil(hi - 0.5)).
            let a = (lo - 0.5).ceil().max(0.0) as usize;
            let b = (hi - 0.5).ceil().max(0.0).min(max as f64) as usize;
            a.min(max)..b
        };
        (
            clamp(self.x, self.x + self.w, dims.width),
            clamp(self.y, self.y + self.h, dims.height),
        )
    }
}

/// Row-major grid of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap {
    dims: GridDims,
    values: Vec<f64>,
}

impl HeatMap {
    /// All-zero map.
    pub fn zeros(dims: GridDims) -> Self {
        HeatMap {
            dims,
            values: vec![0.0; dims.pixel_count()],
        }
    }

    /// Wrap an existing row-major buffer; rejects length mismatches and
    /// non-finite values.
    pub fn from_values(dims: GridDims, values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.pixel_count() {
            return Err(Error::invalid(format!(
                "heatmap buffer length {} does not match {}x{}",
                values.len(),
                dims.width(),
                dims.height()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("heatmap values must be finite"));
        }
        Ok(HeatMap { dims, values })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.dims.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, v: f64) {
        self.values[row * self.dims.width + col] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Largest value in the map.
    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    /// Number of pixels with a nonzero value.
    pub fn support_size(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }
}

fn check_same_dims(a: GridDims, b: GridDims, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!(
            "{what}: dimension mismatch {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Paint `v` onto every pixel whose center lies inside the clipped box;
/// all other pixels are 0. A box wholly outside the grid yields the
/// all-zero map.
pub fn rasterize_box(bbox: &BBox, v: f64, dims: GridDims) -> Result<HeatMap> {
    bbox.validate()?;
    if !v.is_finite() {
        return Err(Error::invalid("rasterization value must be finite"));
    }
    let mut map = HeatMap::zeros(dims);
    stamp_box(&mut map, bbox, v, |_, new| new);
    Ok(map)
}

/// Apply `combine(current, v)` over the box's clipped pixel span.
/// Used to fuse rasterize-and-accumulate without an intermediate map.
pub(crate) fn stamp_box(map: &mut HeatMap, bbox: &BBox, v: f64, combine: impl Fn(f64, f64) -> f64) {
    let dims = map.dims;
    let (cols, rows) = bbox.pixel_span(dims);
    if cols.is_empty() || rows.is_empty() {
        return;
    }
    let width = dims.width;
    for row in rows {
        let base = row * width;
        for cell in &mut map.values[base + cols.start..base + cols.end] {
            *cell = combine(*cell, v);
        }
    }
}

/// Pixelwise product of two maps of equal dimensions.
pub fn elementwise_mul(a: &HeatMap, b: &HeatMap) -> Result<HeatMap> {
    check_same_dims(a.dims, b.dims, "elementwise_mul")?;
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| x * y)
        .collect();
    Ok(HeatMap {
        dims: a.dims,
        values,
    })
}

/// Pixelwise sum of the given maps, all of dimension `dims`. An empty
/// list yields the all-zero map. Maps are folded in list order, so the
/// result matches a scalar per-pixel loop exactly.
pub fn accumulate(maps: &[HeatMap], dims: GridDims) -> Result<HeatMap> {
    let mut out = HeatMap::zeros(dims);
    for m in maps {
        check_same_dims(m.dims, dims, "accumulate")?;
        for (o, &v) in out.values.iter_mut().zip(&m.values) {
            *o += v;
        }
    }
    Ok(out)
}

/// Divide every value by the map maximum so the output peaks at 1.
/// The all-zero map is returned unchanged; negative inputs are rejected.
pub fn normalize_max(m: &HeatMap) -> Result<HeatMap> {
    if m.values.iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("normalize_max requires nonnegative values"));
    }
    let max = m.max_value();
    if max <= 0.0 {
        return Ok(m.clone());
    }
    let values = m.values.iter().map(|&v| v / max).collect();
    Ok(HeatMap {
        dims: m.dims,
        values,
    })
}

/// Downsample by area averaging: each output pixel is the coverage-weighted
/// mean of the source pixels its footprint overlaps. Exact block averaging
/// when the size ratio is integral.
pub fn downsample_area(src: &HeatMap, dims: GridDims) -> HeatMap {
    let (sw, sh) = (src.dims.width as f64, src.dims.height as f64);
    let (dw, dh) = (dims.width as f64, dims.height as f64);
    let sx = sw / dw;
    let sy = sh / dh;
    let mut out = HeatMap::zeros(dims);
    for ty in 0..dims.height {
        let y0 = ty as f64 * sy;
        let y1 = (ty + 1) as f64 * sy;
        for tx in 0..dims.width {
            let x0 = tx as f64 * sx;
            let x1 = (tx + 1) as f64 * sx;
            let mut total = 0.0;
            let mut area = 0.0;
            let row_lo = y0.floor() as usize;
            let row_hi = (y1.ceil() as usize).min(src.dims.height);
            let col_lo = x0.floor() as usize;
            let col_hi = (x1.ceil() as usize).min(src.dims.width);
            for row in row_lo..row_hi {
                let oy = (y1.min(row as f64 + 1.0) - y0.max(row as f64)).max(0.0);
                for col in col_lo..col_hi {
                    let ox = (x1.min(col as f64 + 1.0) - x0.max(col as f64)).max(0.0);
                    let a = ox * oy;
                    total += a * src.get(col, row);
                    area += a;
                }
            }
            out.set(tx, ty, if area > 0.0 { total / area } else { 0.0 });
        }
    }
    out
}

/// Upsample with nearest-neighbor lookup; values are preserved, so the
/// maximum over any region equals the maximum over the covered source
/// pixels.
pub fn upsample_nearest(src: &HeatMap, dims: GridDims) -> HeatMap {
    let mut out = HeatMap::zeros(dims);
    for ty in 0..dims.height {
        let sy = (ty * src.dims.height) / dims.height;
        for tx in 0..dims.width {
            let sx = (tx * src.dims.width) / dims.width;
            out.set(tx, ty, src.get(sx, sy));
        }
    }
    out
}
