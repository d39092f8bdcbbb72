//! Shape ingestion (PBM/PGM/PNG), dataset directories, and index persistence.

mod codec;
mod container;
mod pnm;

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Result, TsrError};

pub use container::{load_index, load_index_expecting, save_index, FORMAT_VERSION};

/// Default binarization threshold on the 0..=255 gray scale.
pub const DEFAULT_THRESHOLD: u8 = 128;

/// A labeled binary occupancy grid, row-major, `true` = foreground.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryShape {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub grid: Vec<bool>,
    /// Ground-truth class, used by evaluation only.
    pub label: Option<String>,
}

impl BinaryShape {
    pub fn new(id: impl Into<String>, width: usize, height: usize, grid: Vec<bool>) -> Self {
        assert_eq!(
            grid.len(),
            width * height,
            "grid size does not match dimensions"
        );
        BinaryShape {
            id: id.into(),
            width,
            height,
            grid,
            label: None,
        }
    }

    pub fn from_fn(
        id: impl Into<String>,
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> bool,
    ) -> Self {
        let mut grid = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                grid.push(f(x, y));
            }
        }
        BinaryShape::new(id, width, height, grid)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> bool {
        self.grid[y * self.width + x]
    }

    /// Bounds-checked read; anything outside the frame is background.
    #[inline]
    pub fn get(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.grid[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.grid[y * self.width + x] = v;
    }

    pub fn area(&self) -> usize {
        self.grid.iter().filter(|&&v| v).count()
    }

    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.grid
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Mean foreground pixel position, or `None` for an empty grid.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (x, y) in self.foreground() {
            sx += x as f64;
            sy += y as f64;
            n += 1;
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)` of the foreground.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for (x, y) in self.foreground() {
            bb = Some(match bb {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
        bb
    }

    /// Intersection over union of two equally sized grids.
    pub fn iou(&self, other: &BinaryShape) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.grid.iter().zip(&other.grid) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// How class labels are derived from file locations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelRule {
    /// `apple-12.pgm` is labeled `apple`.
    PrefixBeforeLastDash,
    /// `birds/b03.pgm` is labeled `birds`.
    ParentDirectory,
    /// `bird12.pgm` and `bird_12.pgm` are labeled `bird`.
    StripTrailingDigits,
}

impl LabelRule {
    pub fn label_for(&self, path: &Path) -> Option<String> {
        match self {
            LabelRule::PrefixBeforeLastDash => {
                let stem = path.file_stem()?.to_str()?;
                Some(match stem.rfind('-') {
                    Some(i) if i > 0 => stem[..i].to_string(),
                    _ => stem.to_string(),
                })
            }
            LabelRule::ParentDirectory => path.parent()?.file_name()?.to_str().map(str::to_string),
            LabelRule::StripTrailingDigits => {
                let stem = path.file_stem()?.to_str()?;
                let head = stem.trim_end_matches(|c: char| c.is_ascii_digit());
                let head = head.trim_end_matches(['-', '_', ' ']);
                Some(if head.is_empty() { stem } else { head }.to_string())
            }
        }
    }
}

impl std::str::FromStr for LabelRule {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "prefix-before-last-dash" | "prefix" => Ok(LabelRule::PrefixBeforeLastDash),
            "parent-directory" | "parent" => Ok(LabelRule::ParentDirectory),
            "strip-trailing-digits" | "digits" => Ok(LabelRule::StripTrailingDigits),
            other => Err(format!("unknown label rule '{other}'")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Gallery {
    pub shapes: Vec<BinaryShape>,
    pub source: PathBuf,
    pub labeling: LabelRule,
    /// Files that failed to decode in lenient mode, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl Gallery {
    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    pub fn labels(&self) -> Vec<Option<String>> {
        self.shapes.iter().map(|s| s.label.clone()).collect()
    }
}

/// Decode one image file. Format is sniffed from the leading bytes.
pub fn load_shape(path: impl AsRef<Path>, threshold: u8) -> Result<BinaryShape> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| TsrError::io(path, e))?;
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("shape")
        .to_string();
    decode_shape(&bytes, id, threshold)
}

/// Decode an in-memory image.
pub fn decode_shape(bytes: &[u8], id: String, threshold: u8) -> Result<BinaryShape> {
    let raster = if bytes.starts_with(b"\x89PNG") {
        pnm::decode_png(bytes)?
    } else if bytes.len() >= 2 && bytes[0] == b'P' {
        pnm::decode_pnm(bytes)?
    } else {
        return Err(TsrError::UnsupportedFormat(format!(
            "{id}: not PBM, PGM or PNG (convert it first)"
        )));
    };
    let grid: Vec<bool> = match raster.pixels {
        pnm::Pixels::Bits(bits) => bits,
        pnm::Pixels::Gray(gray) => gray.into_iter().map(|g| g >= threshold).collect(),
    };
    if !grid.iter().any(|&v| v) {
        return Err(TsrError::EmptyShape(id));
    }
    Ok(BinaryShape::new(id, raster.width, raster.height, grid))
}

fn is_image_path(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("pbm" | "pgm" | "pnm" | "png")
    )
}

fn collect_files(dir: &Path, rule: LabelRule) -> Result<Vec<PathBuf>> {
    let read = |d: &Path| -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(d).map_err(|e| TsrError::io(d, e))? {
            let entry = entry.map_err(|e| TsrError::io(d, e))?;
            out.push(entry.path());
        }
        Ok(out)
    };
    let mut files = Vec::new();
    for p in read(dir)? {
        if p.is_dir() {
            if rule == LabelRule::ParentDirectory {
                files.extend(
                    read(&p)?
                        .into_iter()
                        .filter(|f| f.is_file() && is_image_path(f)),
                );
            }
        } else if is_image_path(&p) {
            files.push(p);
        }
    }
    files.sort_by(|a, b| {
        let ka = a.strip_prefix(dir).unwrap_or(a);
        let kb = b.strip_prefix(dir).unwrap_or(b);
        ka.cmp(kb)
    });
    Ok(files)
}

/// Load every image in `dir`, sorted lexicographically by relative path.
///
/// With `strict`, any undecodable file fails the whole load; otherwise such
/// files are reported in [`Gallery::skipped`].
pub fn load_dataset(
    dir: impl AsRef<Path>,
    rule: LabelRule,
    threshold: u8,
    strict: bool,
) -> Result<Gallery> {
    let dir = dir.as_ref();
    let files = collect_files(dir, rule)?;
    let mut shapes = Vec::with_capacity(files.len());
    let mut skipped = Vec::new();
    for f in &files {
        match load_shape(f, threshold) {
            Ok(mut s) => {
                if rule == LabelRule::ParentDirectory {
                    if let Some(parent) = rule.label_for(f) {
                        if f.parent() != Some(dir) {
                            s.id = format!("{parent}/{}", s.id);
                        }
                    }
                }
                s.label = rule.label_for(f);
                shapes.push(s);
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", f.display());
                skipped.push((f.display().to_string(), e.to_string()));
            }
        }
    }
    if strict && !skipped.is_empty() {
        return Err(TsrError::PartialLoad(skipped));
    }
    if shapes.is_empty() {
        return Err(TsrError::EmptyDirectory(dir.to_path_buf()));
    }
    let mut seen = std::collections::HashSet::new();
    for s in &shapes {
        if !seen.insert(s.id.as_str()) {
            return Err(TsrError::CorruptFile(format!(
                "duplicate shape id {}",
                s.id
            )));
        }
    }
    Ok(Gallery {
        shapes,
        source: dir.to_path_buf(),
        labeling: rule,
        skipped,
    })
}

/// Encode a shape as binary PGM (P5), foreground = 255.
pub fn encode_pgm(shape: &BinaryShape) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", shape.width, shape.height).into_bytes();
    out.extend(shape.grid.iter().map(|&v| if v { 255u8 } else { 0 }));
    out
}
