//! Patch-grid geometry for variable-resolution image encoders.
//!
//! [`compute_grid`] picks the largest aspect-preserving scale whose patch grid
//! fits the budget, then pads the scaled content up to whole patches.
//! [`fixed_grid`] is the square baseline that ignores aspect ratio.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::PixelBox;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PatchError {
    #[error("patch budget must be at least 1")]
    ZeroBudget,
    #[error("image dimensions must be positive, got {width}x{height}")]
    ZeroDimension { width: u32, height: u32 },
    #[error("patch size must be positive")]
    ZeroPatchSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub rows: u32,
    pub cols: u32,
    pub patch_size: u32,
    pub scaled_w: u32,
    pub scaled_h: u32,
    pub pad_right: u32,
    pub pad_bottom: u32,
}

impl PatchGrid {
    pub fn num_patches(&self) -> u64 {
        u64::from(self.rows) * u64::from(self.cols)
    }

    pub fn canvas_width(&self) -> u32 {
        self.cols * self.patch_size
    }

    pub fn canvas_height(&self) -> u32 {
        self.rows * self.patch_size
    }
}

/// Scale expressed as the exact ratio `num / den`.
#[derive(Debug, Clone, Copy)]
struct Scale {
    num: u128,
    den: u128,
}

impl Scale {
    /// Patches needed to cover `extent` pixels after scaling.
    fn patches(self, extent: u32, patch: u32) -> u128 {
        (self.num * u128::from(extent)).div_ceil(self.den * u128::from(patch))
    }

    fn apply(self, extent: u32) -> u128 {
        self.num * u128::from(extent) / self.den
    }

    fn gt(self, other: Scale) -> bool {
        self.num * other.den > other.num * self.den
    }
}

/// Variable grid: the maximal uniform scale `s` with
/// `ceil(s*h/p) * ceil(s*w/p) <= budget`.
///
/// The patch count only changes where `s*h/p` or `s*w/p` crosses an integer,
/// so the maximum sits on one of those breakpoints `s = k*p/extent`. Each
/// axis is bisected over `k` with exact rational arithmetic.
pub fn compute_grid(width: u32, height: u32, patch_size: u32, budget: u32) -> Result<PatchGrid, PatchError> {
    if width == 0 || height == 0 {
        return Err(PatchError::ZeroDimension { width, height });
    }
    if patch_size == 0 {
        return Err(PatchError::ZeroPatchSize);
    }
    if budget == 0 {
        return Err(PatchError::ZeroBudget);
    }
    let p = u128::from(patch_size);
    let fits = |s: Scale| s.patches(height, patch_size) * s.patches(width, patch_size) <= u128::from(budget);

    let mut best: Option<Scale> = None;
    for extent in [height, width] {
        let at = |k: u128| Scale { num: k * p, den: u128::from(extent) };
        // feasibility is monotone in k; find the largest feasible k
        let (mut lo, mut hi) = (0u128, u128::from(budget) + 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if fits(at(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo > 0 && best.is_none_or(|b| at(lo).gt(b)) {
            best = Some(at(lo));
        }
    }
    // k = 1 on the longer side always fits: one patch then covers both sides
    let s = best.expect("a single patch always fits");
    let rows = s.patches(height, patch_size).max(1) as u32;
    let cols = s.patches(width, patch_size).max(1) as u32;
    let scaled_h = (s.apply(height).max(1) as u32).min(rows * patch_size);
    let scaled_w = (s.apply(width).max(1) as u32).min(cols * patch_size);
    Ok(PatchGrid {
        rows,
        cols,
        patch_size,
        scaled_w,
        scaled_h,
        pad_right: cols * patch_size - scaled_w,
        pad_bottom: rows * patch_size - scaled_h,
    })
}

/// Square baseline grid of side `floor(sqrt(budget))`; images are stretched to it.
pub fn fixed_grid(patch_size: u32, budget: u32) -> Result<PatchGrid, PatchError> {
    if patch_size == 0 {
        return Err(PatchError::ZeroPatchSize);
    }
    if budget == 0 {
        return Err(PatchError::ZeroBudget);
    }
    let side = budget.isqrt();
    Ok(PatchGrid {
        rows: side,
        cols: side,
        patch_size,
        scaled_w: side * patch_size,
        scaled_h: side * patch_size,
        pad_right: 0,
        pad_bottom: 0,
    })
}

/// Row-major tiling of the padded canvas.
pub fn patch_rects(grid: &PatchGrid) -> Vec<PixelBox> {
    let p = f64::from(grid.patch_size);
    (0..grid.rows)
        .flat_map(|r| (0..grid.cols).map(move |c| (r, c)))
        .map(|(r, c)| {
            let (y, x) = (f64::from(r) * p, f64::from(c) * p);
            PixelBox::new(y, x, y + p, x + p).expect("patch rect is well-formed")
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AspectBucket {
    Portrait,
    Landscape,
    Square,
}

pub fn aspect_ratio_bucket(width: u32, height: u32) -> AspectBucket {
    match width.cmp(&height) {
        std::cmp::Ordering::Greater => AspectBucket::Landscape,
        std::cmp::Ordering::Less => AspectBucket::Portrait,
        std::cmp::Ordering::Equal => AspectBucket::Square,
    }
}
