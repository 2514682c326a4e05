use serde::{Deserialize, Serialize};

use super::SchemaError;

/// Largest bucket index.
pub const QUANT_MAX: u16 = 999;
/// Number of buckets per axis.
pub const QUANT_BUCKETS: f64 = 1000.0;

/// Box in bucketized coordinates, `0 <= min <= max <= 999` on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u16; 4]", into = "[u16; 4]")]
pub struct QuantBox {
    ymin: u16,
    xmin: u16,
    ymax: u16,
    xmax: u16,
}

impl QuantBox {
    pub fn new(ymin: u16, xmin: u16, ymax: u16, xmax: u16) -> Result<Self, SchemaError> {
        for c in [ymin, xmin, ymax, xmax] {
            if c > QUANT_MAX {
                return Err(SchemaError::CoordinateOutOfRange(c.into()));
            }
        }
        if ymax < ymin || xmax < xmin {
            return Err(SchemaError::InvalidBox {
                ymin: ymin.into(),
                xmin: xmin.into(),
                ymax: ymax.into(),
                xmax: xmax.into(),
            });
        }
        Ok(Self { ymin, xmin, ymax, xmax })
    }

    pub fn full() -> Self {
        Self { ymin: 0, xmin: 0, ymax: QUANT_MAX, xmax: QUANT_MAX }
    }

    pub fn ymin(&self) -> u16 {
        self.ymin
    }
    pub fn xmin(&self) -> u16 {
        self.xmin
    }
    pub fn ymax(&self) -> u16 {
        self.ymax
    }
    pub fn xmax(&self) -> u16 {
        self.xmax
    }

    /// `[ymin, xmin, ymax, xmax]`
    pub fn to_array(self) -> [u16; 4] {
        [self.ymin, self.xmin, self.ymax, self.xmax]
    }

    pub fn height(&self) -> u32 {
        u32::from(self.ymax - self.ymin)
    }

    pub fn width(&self) -> u32 {
        u32::from(self.xmax - self.xmin)
    }

    pub fn area(&self) -> u64 {
        u64::from(self.height()) * u64::from(self.width())
    }

    pub fn intersection_area(&self, other: &QuantBox) -> u64 {
        let h = self.ymax.min(other.ymax).saturating_sub(self.ymin.max(other.ymin));
        let w = self.xmax.min(other.xmax).saturating_sub(self.xmin.max(other.xmin));
        u64::from(h) * u64::from(w)
    }

    pub fn contains_box(&self, other: &QuantBox) -> bool {
        self.ymin <= other.ymin && self.xmin <= other.xmin && self.ymax >= other.ymax && self.xmax >= other.xmax
    }

    pub fn to_pixel(self) -> PixelBox {
        PixelBox {
            ymin: self.ymin.into(),
            xmin: self.xmin.into(),
            ymax: self.ymax.into(),
            xmax: self.xmax.into(),
        }
    }
}

impl TryFrom<[u16; 4]> for QuantBox {
    type Error = SchemaError;

    fn try_from(v: [u16; 4]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<QuantBox> for [u16; 4] {
    fn from(b: QuantBox) -> Self {
        b.to_array()
    }
}

/// Box in pixel space. Image dimensions are carried separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct PixelBox {
    ymin: f64,
    xmin: f64,
    ymax: f64,
    xmax: f64,
}

impl PixelBox {
    pub fn new(ymin: f64, xmin: f64, ymax: f64, xmax: f64) -> Result<Self, SchemaError> {
        let finite = [ymin, xmin, ymax, xmax].iter().all(|c| c.is_finite() && *c >= 0.0);
        if !finite || ymax < ymin || xmax < xmin {
            return Err(SchemaError::InvalidBox { ymin, xmin, ymax, xmax });
        }
        Ok(Self { ymin, xmin, ymax, xmax })
    }

    pub fn ymin(&self) -> f64 {
        self.ymin
    }
    pub fn xmin(&self) -> f64 {
        self.xmin
    }
    pub fn ymax(&self) -> f64 {
        self.ymax
    }
    pub fn xmax(&self) -> f64 {
        self.xmax
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.ymin, self.xmin, self.ymax, self.xmax]
    }

    pub fn area(&self) -> f64 {
        (self.ymax - self.ymin) * (self.xmax - self.xmin)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.ymin + self.ymax) / 2.0, (self.xmin + self.xmax) / 2.0)
    }

    pub fn contains_point(&self, y: f64, x: f64) -> bool {
        self.ymin <= y && y <= self.ymax && self.xmin <= x && x <= self.xmax
    }

    pub fn intersection_area(&self, other: &PixelBox) -> f64 {
        let h = (self.ymax.min(other.ymax) - self.ymin.max(other.ymin)).max(0.0);
        let w = (self.xmax.min(other.xmax) - self.xmin.max(other.xmin)).max(0.0);
        h * w
    }

    pub fn check_extent(&self, width: f64, height: f64) -> Result<(), SchemaError> {
        check_dims(width, height)?;
        if self.ymax > height || self.xmax > width {
            return Err(SchemaError::OutOfExtent {
                ymin: self.ymin,
                xmin: self.xmin,
                ymax: self.ymax,
                xmax: self.xmax,
                width,
                height,
            });
        }
        Ok(())
    }
}

impl TryFrom<[f64; 4]> for PixelBox {
    type Error = SchemaError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<PixelBox> for [f64; 4] {
    fn from(b: PixelBox) -> Self {
        b.to_array()
    }
}

fn check_dims(width: f64, height: f64) -> Result<(), SchemaError> {
    if !(width.is_finite() && height.is_finite() && width > 0.0 && height > 0.0) {
        return Err(SchemaError::InvalidDimensions { width, height });
    }
    Ok(())
}

fn quantize_coord(c: f64, extent: f64) -> u16 {
    let bucket = (c * QUANT_BUCKETS / extent).floor();
    // c <= extent so bucket <= 1000; only the far edge needs the clamp
    (bucket.max(0.0) as u32).min(u32::from(QUANT_MAX)) as u16
}

fn dequantize_coord(q: u16, extent: f64) -> f64 {
    (f64::from(q) + 0.5) / QUANT_BUCKETS * extent
}

/// Maps a pixel box to buckets: `floor(c / extent * 1000)` clamped to 999.
pub fn quantize_box(b: &PixelBox, width: f64, height: f64) -> Result<QuantBox, SchemaError> {
    b.check_extent(width, height)?;
    Ok(QuantBox {
        ymin: quantize_coord(b.ymin, height),
        xmin: quantize_coord(b.xmin, width),
        ymax: quantize_coord(b.ymax, height),
        xmax: quantize_coord(b.xmax, width),
    })
}

/// Maps each bucket to its center pixel coordinate.
pub fn dequantize_box(q: &QuantBox, width: f64, height: f64) -> Result<PixelBox, SchemaError> {
    check_dims(width, height)?;
    Ok(PixelBox {
        ymin: dequantize_coord(q.ymin, height),
        xmin: dequantize_coord(q.xmin, width),
        ymax: dequantize_coord(q.ymax, height),
        xmax: dequantize_coord(q.xmax, width),
    })
}
