//! Patch grid over an image and conversion of object bounding boxes into
//! deterministic, ordered visual-reference-token (VRT) sequences.
//!
//! A grid cell owns one VRT identity and one center point. An object is
//! grounded as the set of cells whose centers fall inside its box, and that
//! set is made autoregression-friendly by sorting into ascending (row-major
//! raster) order.

use alloc::string::String;
use alloc::vec::Vec;

use crate::num;

/// Errors raised by grid construction and box/VRT operations.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometryError {
    /// Non-positive dimension, or `patch_size` exceeding the smaller image side.
    InvalidGeometry {
        image_width: u32,
        image_height: u32,
        patch_size: u32,
    },
    /// Patch index outside `0..num_patches`.
    IndexOutOfRange { index: u32, num_patches: u32 },
    /// Box coordinates non-finite or not strictly ordered per axis.
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    /// Box has no interior left after clamping to the image.
    DegenerateBox,
    /// Two objects in one record share a label.
    DuplicateLabel { label: String },
    /// Sequence indices are not strictly ascending.
    UnorderedSequence { position: usize },
}

impl core::fmt::Display for GeometryError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            GeometryError::InvalidGeometry {
                image_width,
                image_height,
                patch_size,
            } => write!(
                f,
                "invalid geometry: image {image_width}x{image_height}, patch size {patch_size}"
            ),
            GeometryError::IndexOutOfRange { index, num_patches } => {
                write!(f, "patch index {index} out of range (grid has {num_patches})")
            }
            GeometryError::InvalidBox {
                x_min,
                y_min,
                x_max,
                y_max,
            } => write!(f, "invalid box ({x_min}, {y_min}, {x_max}, {y_max})"),
            GeometryError::DegenerateBox => write!(f, "box degenerate after clamping to image"),
            GeometryError::DuplicateLabel { label } => write!(f, "duplicate object label '{label}'"),
            GeometryError::UnorderedSequence { position } => {
                write!(f, "VRT sequence not strictly ascending at position {position}")
            }
        }
    }
}

impl core::error::Error for GeometryError {}

/// Image-to-patch tessellation. Cell `i` sits at row `i / cols`,
/// col `i % cols`; this row-major layout is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    image_width: u32,
    image_height: u32,
    patch_size: u32,
    rows: u32,
    cols: u32,
}

impl PatchGrid {
    /// Builds the grid by ceiling division. `patch_size` must be positive and
    /// no larger than the smaller image side.
    pub fn new(image_width: u32, image_height: u32, patch_size: u32) -> Result<Self, GeometryError> {
        let bad = image_width == 0
            || image_height == 0
            || patch_size == 0
            || patch_size > image_width.min(image_height);
        if bad {
            return Err(GeometryError::InvalidGeometry {
                image_width,
                image_height,
                patch_size,
            });
        }
        Ok(PatchGrid {
            image_width,
            image_height,
            patch_size,
            rows: image_height.div_ceil(patch_size),
            cols: image_width.div_ceil(patch_size),
        })
    }

    pub fn image_width(&self) -> u32 {
        self.image_width
    }

    pub fn image_height(&self) -> u32 {
        self.image_height
    }

    pub fn patch_size(&self) -> u32 {
        self.patch_size
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn num_patches(&self) -> u32 {
        self.rows * self.cols
    }

    /// (row, col) of a patch index.
    pub fn cell(&self, index: u32) -> Result<(u32, u32), GeometryError> {
        if index >= self.num_patches() {
            return Err(GeometryError::IndexOutOfRange {
                index,
                num_patches: self.num_patches(),
            });
        }
        Ok((index / self.cols, index % self.cols))
    }

    /// Center point of a patch cell in image coordinates. Centers of edge
    /// cells may lie beyond the image when the dimensions are not multiples
    /// of the patch size; such centers simply never fall inside a clamped box.
    pub fn patch_center(&self, index: u32) -> Result<(f64, f64), GeometryError> {
        let (row, col) = self.cell(index)?;
        Ok((self.center_coord(col), self.center_coord(row)))
    }

    #[inline]
    fn center_coord(&self, cell: u32) -> f64 {
        // Exact in f64 for any realistic image size.
        (cell as f64) * self.patch_size as f64 + self.patch_size as f64 / 2.0
    }

    /// All patch indices whose centers fall inside the box, under half-open
    /// membership (`min <= center < max` per axis).
    ///
    /// Boundary cells are located by range arithmetic and then adjusted with
    /// the exact center predicate, so the result matches a full scan of every
    /// cell center bit-for-bit.
    pub fn vrts_in_box(&self, bbox: &BBox) -> VrtSet {
        let cols = self.cell_range(bbox.x_min, bbox.x_max, self.cols);
        let rows = self.cell_range(bbox.y_min, bbox.y_max, self.rows);
        let mut indices = Vec::new();
        if let (Some((c0, c1)), Some((r0, r1))) = (cols, rows) {
            indices.reserve(((r1 - r0 + 1) * (c1 - c0 + 1)) as usize);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    indices.push(r * self.cols + c);
                }
            }
        }
        VrtSet { indices }
    }

    /// Inclusive cell range along one axis whose centers satisfy
    /// `min <= center < max`, or `None` when empty.
    fn cell_range(&self, min: f64, max: f64, cells: u32) -> Option<(u32, u32)> {
        let ps = self.patch_size as f64;
        let half = ps / 2.0;
        let last = cells as i64 - 1;
        let inside = |c: i64| {
            let center = (c as f64) * ps + half;
            min <= center && center < max
        };

        let mut lo = num::ceil((min - half) / ps) as i64;
        lo = lo.clamp(0, last);
        while lo > 0 && inside(lo - 1) {
            lo -= 1;
        }
        while lo <= last && !inside(lo) {
            lo += 1;
        }
        if lo > last {
            return None;
        }

        let mut hi = num::floor((max - half) / ps) as i64;
        hi = hi.clamp(lo, last);
        while hi < last && inside(hi + 1) {
            hi += 1;
        }
        while hi >= lo && !inside(hi) {
            hi -= 1;
        }
        if hi < lo {
            return None;
        }
        Some((lo as u32, hi as u32))
    }

    /// Grounds every labeled box independently and returns the ordered
    /// sequences in input order. Overlapping boxes may share indices.
    pub fn assign_objects(
        &self,
        objects: &[(String, BBox)],
    ) -> Result<Vec<(String, OrderedVrtSequence)>, GeometryError> {
        for (i, (label, _)) in objects.iter().enumerate() {
            if objects[..i].iter().any(|(other, _)| other == label) {
                return Err(GeometryError::DuplicateLabel {
                    label: label.clone(),
                });
            }
        }
        Ok(objects
            .iter()
            .map(|(label, bbox)| (label.clone(), self.vrts_in_box(bbox).ordered()))
            .collect())
    }
}

/// Axis-aligned box in the image coordinate frame, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    /// Requires finite coordinates with `x_min < x_max` and `y_min < y_max`.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        let finite =
            x_min.is_finite() && y_min.is_finite() && x_max.is_finite() && y_max.is_finite();
        if !finite || x_min >= x_max || y_min >= y_max {
            return Err(GeometryError::InvalidBox {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Clamps into `[0, width] x [0, height]`; truncated objects at image
    /// edges are kept, boxes left without interior are rejected.
    pub fn clamp_to_image(&self, width: u32, height: u32) -> Result<Self, GeometryError> {
        let x_min = self.x_min.max(0.0);
        let y_min = self.y_min.max(0.0);
        let x_max = self.x_max.min(width as f64);
        let y_max = self.y_max.min(height as f64);
        if x_min >= x_max || y_min >= y_max {
            return Err(GeometryError::DegenerateBox);
        }
        Ok(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// Componentwise containment: `self` encloses `other`.
    pub fn contains_box(&self, other: &BBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }
}

/// Unordered, duplicate-free collection of patch indices for one object.
/// Insertion order is preserved so that ordering stays an explicit step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VrtSet {
    indices: Vec<u32>,
}

impl VrtSet {
    pub fn new() -> Self {
        VrtSet::default()
    }

    /// Keeps the first occurrence of each index.
    pub fn from_indices<I: IntoIterator<Item = u32>>(indices: I) -> Self {
        let mut set = VrtSet::new();
        for idx in indices {
            set.insert(idx);
        }
        set
    }

    pub fn insert(&mut self, index: u32) -> bool {
        if self.indices.contains(&index) {
            false
        } else {
            self.indices.push(index);
            true
        }
    }

    pub fn contains(&self, index: u32) -> bool {
        self.indices.contains(&index)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.indices.iter().copied()
    }

    /// The deterministic ordering rule: ascending patch index, i.e. row-major
    /// raster order. Identical output for every permutation of the same set.
    pub fn ordered(&self) -> OrderedVrtSequence {
        let mut indices = self.indices.clone();
        indices.sort_unstable();
        indices.dedup();
        OrderedVrtSequence { indices }
    }
}

/// Strictly ascending patch-index list representing one referred object.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OrderedVrtSequence {
    indices: Vec<u32>,
}

impl OrderedVrtSequence {
    /// Accepts only strictly ascending input.
    pub fn from_ascending(indices: Vec<u32>) -> Result<Self, GeometryError> {
        for i in 1..indices.len() {
            if indices[i] <= indices[i - 1] {
                return Err(GeometryError::UnorderedSequence { position: i });
            }
        }
        Ok(OrderedVrtSequence { indices })
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn into_vec(self) -> Vec<u32> {
        self.indices
    }
}
