//! Pixel-level change masks and the structured facts derived from them:
//! connected regions, exterior contours, per-category object counts, grid
//! localization cells, and the changed/unchanged verdict.
//!
//! All operations are pure functions of their inputs; a [`ChangeMap`] is
//! immutable after construction and safe to share across threads.

mod cells;
mod contour;

pub use cells::{Cell, CellSet, ALL_CELLS};
pub use contour::{contours_of, NormalizedContour};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChangeMapError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {source}")]
    Decode {
        path: String,
        source: image::ImageError,
    },
    #[error("pixel value {value} at ({x}, {y}) is not in the category dictionary")]
    UnknownPixelValue { value: u8, x: u32, y: u32 },
    #[error("category {0} is not in the dictionary")]
    UnknownCategory(u8),
    #[error("category 0 is reserved for \"no change\"")]
    NoChangeCategory,
    #[error("category dictionary must include id 0 (\"no change\")")]
    MissingNoChange,
    #[error("labels length {actual} does not match {width}x{height}")]
    LabelLength {
        width: u32,
        height: u32,
        actual: usize,
    },
    #[error("map dimensions must be positive")]
    EmptyMap,
    #[error("grid must be between 1 and 3 to map into the nine-cell vocabulary, got {0}")]
    InvalidGrid(u32),
    #[error("threshold must lie in [0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("region pixel ({x}, {y}) falls outside a {width}x{height} map")]
    RegionOutOfBounds {
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
}

/// Pixel adjacency used when grouping changed pixels into objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }
}

/// Region extraction knobs: adjacency and the minimum object size kept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionFilter {
    pub connectivity: Connectivity,
    pub min_area: usize,
}

impl Default for RegionFilter {
    fn default() -> Self {
        Self {
            connectivity: Connectivity::Eight,
            min_area: 0,
        }
    }
}

/// Per-pixel category-labeled change mask plus its category dictionary.
/// Category id 0 always means "no change".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangeMap {
    width: u32,
    height: u32,
    labels: Vec<u8>,
    categories: BTreeMap<u8, String>,
}

impl ChangeMap {
    pub fn new(
        width: u32,
        height: u32,
        labels: Vec<u8>,
        categories: BTreeMap<u8, String>,
    ) -> Result<Self, ChangeMapError> {
        if width == 0 || height == 0 {
            return Err(ChangeMapError::EmptyMap);
        }
        if labels.len() != (width as usize) * (height as usize) {
            return Err(ChangeMapError::LabelLength {
                width,
                height,
                actual: labels.len(),
            });
        }
        if !categories.contains_key(&0) {
            return Err(ChangeMapError::MissingNoChange);
        }
        for (i, &v) in labels.iter().enumerate() {
            if !categories.contains_key(&v) {
                return Err(ChangeMapError::UnknownPixelValue {
                    value: v,
                    x: (i % width as usize) as u32,
                    y: (i / width as usize) as u32,
                });
            }
        }
        Ok(Self {
            width,
            height,
            labels,
            categories,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn label_at(&self, x: u32, y: u32) -> u8 {
        self.labels[(y as usize) * (self.width as usize) + (x as usize)]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn categories(&self) -> &BTreeMap<u8, String> {
        &self.categories
    }

    pub fn category_name(&self, id: u8) -> Option<&str> {
        self.categories.get(&id).map(String::as_str)
    }

    /// Non-zero categories in id order as (id, name) pairs.
    pub fn change_categories(&self) -> Vec<(u8, &str)> {
        self.categories
            .iter()
            .filter(|(&id, _)| id != 0)
            .map(|(&id, name)| (id, name.as_str()))
            .collect()
    }
}

/// One connected changed object: its category, pixel set, area, and tight
/// bounding box (inclusive pixel coordinates).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub category: u8,
    pub area: usize,
    pub bbox: (u32, u32, u32, u32),
    /// Member pixels sorted by (y, x); no duplicates.
    pub pixels: Vec<(u32, u32)>,
}

impl Region {
    /// Builds a region from its pixels, deriving area and a tight bbox.
    pub fn from_pixels(category: u8, mut pixels: Vec<(u32, u32)>) -> Self {
        assert!(!pixels.is_empty(), "a region has at least one pixel");
        pixels.sort_by_key(|&(x, y)| (y, x));
        pixels.dedup();
        let (mut x_min, mut y_min, mut x_max, mut y_max) =
            (u32::MAX, u32::MAX, 0u32, 0u32);
        for &(x, y) in &pixels {
            x_min = x_min.min(x);
            y_min = y_min.min(y);
            x_max = x_max.max(x);
            y_max = y_max.max(y);
        }
        Self {
            category,
            area: pixels.len(),
            bbox: (x_min, y_min, x_max, y_max),
            pixels,
        }
    }
}

/// Object counts per category name. Every non-zero category of the source
/// dictionary has an entry, possibly zero.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub counts: BTreeMap<String, usize>,
}

impl CategoryCounts {
    pub fn get(&self, name: &str) -> Option<usize> {
        self.counts.get(name).copied()
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

/// Reads an 8-bit single-channel image as a change map. Every pixel value
/// must appear in `category_dict`; the first offending coordinate is reported
/// otherwise.
pub fn load_change_map(
    path: &Path,
    category_dict: &BTreeMap<u8, String>,
) -> Result<ChangeMap, ChangeMapError> {
    let bytes = std::fs::read(path).map_err(|source| ChangeMapError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let img = image::load_from_memory(&bytes).map_err(|source| ChangeMapError::Decode {
        path: path.display().to_string(),
        source,
    })?;
    let gray = img.into_luma8();
    let (width, height) = gray.dimensions();
    ChangeMap::new(width, height, gray.into_raw(), category_dict.clone())
}

/// Maximal connected pixel sets of `category` with area >= `min_area`,
/// sorted by the (y_min, x_min) of their bounding boxes.
pub fn label_components(
    map: &ChangeMap,
    category: u8,
    filter: RegionFilter,
) -> Result<Vec<Region>, ChangeMapError> {
    if category == 0 {
        return Err(ChangeMapError::NoChangeCategory);
    }
    if !map.categories.contains_key(&category) {
        return Err(ChangeMapError::UnknownCategory(category));
    }
    let (w, h) = (map.width as usize, map.height as usize);
    let mut visited = vec![false; w * h];
    let mut regions = Vec::new();
    let offsets = filter.connectivity.offsets();

    for start in 0..w * h {
        if visited[start] || map.labels[start] != category {
            continue;
        }
        // iterative flood fill
        let mut stack = vec![start];
        visited[start] = true;
        let mut pixels = Vec::new();
        while let Some(idx) = stack.pop() {
            let (x, y) = ((idx % w) as i64, (idx / w) as i64);
            pixels.push((x as u32, y as u32));
            for &(dx, dy) in offsets {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let nidx = (ny as usize) * w + nx as usize;
                if !visited[nidx] && map.labels[nidx] == category {
                    visited[nidx] = true;
                    stack.push(nidx);
                }
            }
        }
        if pixels.len() >= filter.min_area {
            regions.push(Region::from_pixels(category, pixels));
        }
    }
    regions.sort_by_key(|r| (r.bbox.1, r.bbox.0));
    Ok(regions)
}

/// Number of regions per non-zero category name; zero entries included.
pub fn count_by_category(map: &ChangeMap, filter: RegionFilter) -> CategoryCounts {
    let mut counts = BTreeMap::new();
    for (id, name) in map.change_categories() {
        let regions = label_components(map, id, filter).expect("category comes from the map");
        counts.insert(name.to_string(), regions.len());
    }
    CategoryCounts { counts }
}

/// True iff any category still has at least one region under the filter.
pub fn has_change(map: &ChangeMap, filter: RegionFilter) -> bool {
    map.change_categories().iter().any(|&(id, _)| {
        !label_components(map, id, filter)
            .expect("category comes from the map")
            .is_empty()
    })
}

/// Cells of the `grid`x`grid` partition whose fraction of `category` pixels
/// strictly exceeds `threshold`. Block row r covers map rows
/// floor(r*H/grid) .. floor((r+1)*H/grid)-1, likewise for columns, so every
/// pixel belongs to exactly one block. The nine-cell vocabulary limits `grid`
/// to at most 3; cell (r, c) maps to the label at index r*3+c.
pub fn grid_cells(
    map: &ChangeMap,
    category: u8,
    grid: u32,
    threshold: f64,
) -> Result<CellSet, ChangeMapError> {
    if grid == 0 || grid > 3 {
        return Err(ChangeMapError::InvalidGrid(grid));
    }
    if !(0.0..1.0).contains(&threshold) {
        return Err(ChangeMapError::InvalidThreshold(threshold));
    }
    if !map.categories.contains_key(&category) {
        return Err(ChangeMapError::UnknownCategory(category));
    }
    let (w, h, g) = (map.width as u64, map.height as u64, grid as u64);
    let mut cells = CellSet::new();
    for br in 0..g {
        let y0 = (br * h / g) as u32;
        let y1 = ((br + 1) * h / g) as u32;
        for bc in 0..g {
            let x0 = (bc * w / g) as u32;
            let x1 = ((bc + 1) * w / g) as u32;
            let block_pixels = u64::from(y1 - y0) * u64::from(x1 - x0);
            if block_pixels == 0 {
                continue;
            }
            let mut hits = 0u64;
            for y in y0..y1 {
                for x in x0..x1 {
                    if map.label_at(x, y) == category {
                        hits += 1;
                    }
                }
            }
            if hits as f64 / block_pixels as f64 > threshold {
                cells.insert(
                    Cell::from_row_col(br as usize, bc as usize)
                        .expect("grid <= 3 keeps cells in range"),
                );
            }
        }
    }
    Ok(cells)
}

/// Grid cells for every non-zero category, keyed by category id.
pub fn grid_cells_by_category(
    map: &ChangeMap,
    grid: u32,
    threshold: f64,
) -> Result<BTreeMap<u8, CellSet>, ChangeMapError> {
    let mut out = BTreeMap::new();
    for (id, _) in map.change_categories() {
        out.insert(id, grid_cells(map, id, grid, threshold)?);
    }
    Ok(out)
}
