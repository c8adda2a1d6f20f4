//! Geometric and observational domain types shared by every module.
//!
//! Coordinates are planar meters (easting, northing). Rasters are stored
//! row-major with row 0 at the southern edge, so cell `(row, col)` covers
//! `[x0 + col*cs, x0 + (col+1)*cs) x [y0 + row*cs, y0 + (row+1)*cs)`.

use std::fmt;

use crate::error::{invalid, Error, Result};

/// Default no-data sentinel written to and read from raster files.
pub const DEFAULT_NODATA: f64 = -9999.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Laser beam energy class of a footprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BeamClass {
    Power,
    Coverage,
}

/// Orbital pass direction of the ground track a footprint belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrackAzimuthClass {
    /// Northward pass.
    Nwd,
    /// Southward pass.
    Swd,
}

impl BeamClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            BeamClass::Power => "power",
            BeamClass::Coverage => "coverage",
        }
    }
}

impl TrackAzimuthClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrackAzimuthClass::Nwd => "nwd",
            TrackAzimuthClass::Swd => "swd",
        }
    }
}

impl std::str::FromStr for BeamClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "power" => Ok(BeamClass::Power),
            "coverage" => Ok(BeamClass::Coverage),
            other => invalid(format!("unknown beam class '{other}'")),
        }
    }
}

impl std::str::FromStr for TrackAzimuthClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nwd" => Ok(TrackAzimuthClass::Nwd),
            "swd" => Ok(TrackAzimuthClass::Swd),
            other => invalid(format!("unknown azimuth class '{other}'")),
        }
    }
}

impl fmt::Display for BeamClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for TrackAzimuthClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Opaque identifier of the ground track line a sample was acquired on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TrackId(pub u64);

/// A point observation: canopy height, or a residual once a trend is removed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub position: Point2D,
    pub value: f64,
    pub beam: BeamClass,
    pub azimuth_class: TrackAzimuthClass,
    pub track_id: TrackId,
}

impl Sample {
    /// A power-beam NWD sample on track 0, handy for callers that only care
    /// about position and value.
    pub fn at(x: f64, y: f64, value: f64) -> Self {
        Self {
            position: Point2D::new(x, y),
            value,
            beam: BeamClass::Power,
            azimuth_class: TrackAzimuthClass::Nwd,
            track_id: TrackId(0),
        }
    }

    pub fn with_value(&self, value: f64) -> Self {
        Self { value, ..*self }
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point2D,
    pub max: Point2D,
}

impl Aabb {
    pub fn new(min: Point2D, max: Point2D) -> Result<Self> {
        if !min.is_finite() || !max.is_finite() {
            return invalid("extent corners must be finite");
        }
        if min.x > max.x || min.y > max.y {
            return invalid(format!(
                "extent min ({}, {}) exceeds max ({}, {})",
                min.x, min.y, max.x, max.y
            ));
        }
        Ok(Self { min, max })
    }

    pub fn from_coords(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        Self::new(Point2D::new(xmin, ymin), Point2D::new(xmax, ymax))
    }

    pub fn contains(&self, p: &Point2D) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Point2D {
        Point2D::new(
            0.5 * (self.min.x + self.max.x),
            0.5 * (self.min.y + self.max.y),
        )
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }
}

/// Expands `extent` by `margin` meters on all four sides.
pub fn buffer_extent(extent: &Aabb, margin: f64) -> Result<Aabb> {
    if !(margin >= 0.0) || !margin.is_finite() {
        return invalid(format!(
            "buffer margin must be finite and >= 0, got {margin}"
        ));
    }
    Ok(Aabb {
        min: Point2D::new(extent.min.x - margin, extent.min.y - margin),
        max: Point2D::new(extent.max.x + margin, extent.max.y + margin),
    })
}

/// Shape and placement of a regular grid of square cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    /// Lower-left corner of the lower-left cell.
    pub origin: Point2D,
    pub cell_size: f64,
    pub n_rows: usize,
    pub n_cols: usize,
}

impl GridGeometry {
    pub fn new(origin: Point2D, cell_size: f64, n_rows: usize, n_cols: usize) -> Result<Self> {
        let g = Self {
            origin,
            cell_size,
            n_rows,
            n_cols,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.origin.is_finite() {
            return invalid("grid origin must be finite");
        }
        if !(self.cell_size > 0.0) || !self.cell_size.is_finite() {
            return invalid(format!("cell size must be > 0, got {}", self.cell_size));
        }
        if self.n_rows == 0 || self.n_cols == 0 {
            return invalid(format!(
                "grid must have at least one cell, got {}x{}",
                self.n_rows, self.n_cols
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extent(&self) -> Aabb {
        Aabb {
            min: self.origin,
            max: Point2D::new(
                self.origin.x + self.n_cols as f64 * self.cell_size,
                self.origin.y + self.n_rows as f64 * self.cell_size,
            ),
        }
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point2D {
        Point2D::new(
            self.origin.x + (col as f64 + 0.5) * self.cell_size,
            self.origin.y + (row as f64 + 0.5) * self.cell_size,
        )
    }

    /// Center of the cell at a flat row-major index.
    pub fn center_of(&self, index: usize) -> Point2D {
        self.cell_center(index / self.n_cols, index % self.n_cols)
    }

    /// Cell containing `p`, half-open on the max edges.
    pub fn cell_of(&self, p: &Point2D) -> Option<(usize, usize)> {
        let fx = ((p.x - self.origin.x) / self.cell_size).floor();
        let fy = ((p.y - self.origin.y) / self.cell_size).floor();
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (col, row) = (fx as usize, fy as usize);
        (col < self.n_cols && row < self.n_rows).then_some((row, col))
    }

    pub fn index_of(&self, p: &Point2D) -> Option<usize> {
        self.cell_of(p).map(|(r, c)| r * self.n_cols + c)
    }
}

/// Single-band raster with a finite no-data sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub geometry: GridGeometry,
    /// Row-major, row 0 at the southern edge.
    pub values: Vec<f64>,
    pub nodata: f64,
}

impl Raster {
    pub fn new(geometry: GridGeometry, values: Vec<f64>, nodata: f64) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.len() {
            return invalid(format!(
                "raster has {} values but geometry {}x{} needs {}",
                values.len(),
                geometry.n_rows,
                geometry.n_cols,
                geometry.len()
            ));
        }
        if !nodata.is_finite() {
            return invalid("no-data sentinel must be finite");
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("raster value at index {i} is not finite"));
        }
        Ok(Self {
            geometry,
            values,
            nodata,
        })
    }

    pub fn filled(geometry: GridGeometry, value: f64) -> Result<Self> {
        Self::new(geometry, vec![value; geometry.len()], DEFAULT_NODATA)
    }

    pub fn from_fn(geometry: GridGeometry, f: impl Fn(Point2D) -> f64) -> Result<Self> {
        let values = (0..geometry.len())
            .map(|i| f(geometry.center_of(i)))
            .collect();
        Self::new(geometry, values, DEFAULT_NODATA)
    }

    pub fn n_rows(&self) -> usize {
        self.geometry.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.geometry.n_cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.geometry.n_cols + col]
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata
    }

    /// Valid value at flat index, `None` for no-data.
    pub fn valid(&self, index: usize) -> Option<f64> {
        let v = self.values[index];
        (v != self.nodata).then_some(v)
    }

    /// Value of the cell containing `p`; `None` outside the grid or on no-data.
    pub fn value_at(&self, p: &Point2D) -> Option<f64> {
        self.geometry.index_of(p).and_then(|i| self.valid(i))
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != self.nodata).count()
    }
}

/// Sub-raster of every cell whose center lies inside `extent` (closed box).
pub fn crop(raster: &Raster, extent: &Aabb) -> Result<Raster> {
    let g = &raster.geometry;
    let cols: Vec<usize> = (0..g.n_cols)
        .filter(|&c| {
            let x = g.cell_center(0, c).x;
            x >= extent.min.x && x <= extent.max.x
        })
        .collect();
    let rows: Vec<usize> = (0..g.n_rows)
        .filter(|&r| {
            let y = g.cell_center(r, 0).y;
            y >= extent.min.y && y <= extent.max.y
        })
        .collect();
    let (Some(&c0), Some(&r0)) = (cols.first(), rows.first()) else {
        return Err(Error::Empty(format!(
            "crop extent [{}, {}]-[{}, {}] contains no cell centers",
            extent.min.x, extent.min.y, extent.max.x, extent.max.y
        )));
    };
    let geometry = GridGeometry {
        origin: Point2D::new(
            g.origin.x + c0 as f64 * g.cell_size,
            g.origin.y + r0 as f64 * g.cell_size,
        ),
        cell_size: g.cell_size,
        n_rows: rows.len(),
        n_cols: cols.len(),
    };
    let mut values = Vec::with_capacity(geometry.len());
    for &r in &rows {
        let start = r * g.n_cols;
        values.extend_from_slice(&raster.values[start + c0..start + c0 + cols.len()]);
    }
    Ok(Raster {
        geometry,
        values,
        nodata: raster.nodata,
    })
}

/// Residual samples together with a summary of what was skipped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResidualSet {
    pub samples: Vec<Sample>,
    pub dropped_outside: usize,
    pub dropped_nodata: usize,
}

impl ResidualSet {
    pub fn dropped(&self) -> usize {
        self.dropped_outside + self.dropped_nodata
    }
}

/// Observed minus predicted at each sample's containing cell.
pub fn residuals(observed: &[Sample], predicted: &Raster) -> ResidualSet {
    let mut out = ResidualSet::default();
    for s in observed {
        match predicted.geometry.index_of(&s.position) {
            None => out.dropped_outside += 1,
            Some(i) => match predicted.valid(i) {
                None => out.dropped_nodata += 1,
                Some(p) => out.samples.push(s.with_value(s.value - p)),
            },
        }
    }
    out
}
