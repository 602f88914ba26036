use serde::{Deserialize, Serialize};
use std::io::{self, Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("raster dimensions must be at least 1x1 with width*height pixels")]
    BadDimensions,
    #[error("not a binary 8-bit PGM: {0}")]
    BadPgm(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Raster {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Raster {
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width >= 1 && height >= 1, "empty raster");
        Self { width, height, pixels: vec![value; width * height] }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(RasterError::BadDimensions);
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Bilinear sample with pixel centers at integer coordinates and
    /// clamp-to-edge outside the image.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let xm = (self.width - 1) as f64;
        let ym = (self.height - 1) as f64;
        let x = x.clamp(0.0, xm);
        let y = y.clamp(0.0, ym);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) as f64 * (1.0 - fx) + self.get(x1, y0) as f64 * fx;
        let bot = self.get(x0, y1) as f64 * (1.0 - fx) + self.get(x1, y1) as f64 * fx;
        top * (1.0 - fy) + bot * fy
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }

    pub fn crop(&self, bbox: &BBox) -> Raster {
        let mut out = Vec::with_capacity(bbox.w * bbox.h);
        for y in bbox.y..bbox.y + bbox.h {
            out.extend_from_slice(&self.pixels[y * self.width + bbox.x..y * self.width + bbox.x + bbox.w]);
        }
        Raster { width: bbox.w, height: bbox.h, pixels: out }
    }

    /// Copies `src` with its top-left at (x, y); parts outside are dropped.
    pub fn paste(&mut self, src: &Raster, x: i64, y: i64) {
        for sy in 0..src.height {
            let ty = y + sy as i64;
            if ty < 0 || ty >= self.height as i64 {
                continue;
            }
            for sx in 0..src.width {
                let tx = x + sx as i64;
                if tx < 0 || tx >= self.width as i64 {
                    continue;
                }
                self.set(tx as usize, ty as usize, src.get(sx, sy));
            }
        }
    }

    pub(crate) fn from_f64(width: usize, height: usize, values: &[f64]) -> Raster {
        let pixels = values.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect();
        Raster { width, height, pixels }
    }

    pub(crate) fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64).collect()
    }

    pub fn full_bbox(&self) -> BBox {
        BBox { x: 0, y: 0, w: self.width, h: self.height }
    }

    /// Binary PGM (P5, maxval 255).
    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.pixels)
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(self.pixels.len() + 20);
        self.write_pgm(&mut v).expect("writing to a Vec cannot fail");
        v
    }

    pub fn read_pgm<R: Read>(mut r: R) -> Result<Raster, RasterError> {
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;
        Self::from_pgm_bytes(&data)
    }

    pub fn from_pgm_bytes(data: &[u8]) -> Result<Raster, RasterError> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < data.len() && data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < data.len() && data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < data.len() && !data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(RasterError::BadPgm("truncated header".into()));
            }
            fields.push(String::from_utf8_lossy(&data[start..pos]).into_owned());
        }
        if fields[0] != "P5" {
            return Err(RasterError::BadPgm(format!("magic {:?}", fields[0])));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| RasterError::BadPgm(format!("bad number {s:?}")));
        let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval != 255 {
            return Err(RasterError::BadPgm(format!("maxval {maxval}")));
        }
        pos += 1;
        let end = pos + w * h;
        if end > data.len() {
            return Err(RasterError::BadPgm("truncated pixel data".into()));
        }
        Raster::from_pixels(w, h, data[pos..end].to_vec())
    }
}

/// Axis-aligned pixel box. Serialized as `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 4]", into = "[usize; 4]")]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl From<[usize; 4]> for BBox {
    fn from(a: [usize; 4]) -> Self {
        BBox { x: a[0], y: a[1], w: a[2], h: a[3] }
    }
}

impl From<BBox> for [usize; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.w >= 1 && self.h >= 1 && self.x + self.w <= width && self.y + self.h <= height
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x as f64 && y >= self.y as f64 && x < (self.x + self.w) as f64 && y < (self.y + self.h) as f64
    }

    pub fn intersection(&self, other: &BBox) -> usize {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.w).min(other.x + other.w);
        let y1 = (self.y + self.h).min(other.y + other.h);
        x1.saturating_sub(x0) * y1.saturating_sub(y0)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Smallest integer box covering the float rectangle, clipped to the image.
    pub fn covering(x0: f64, y0: f64, x1: f64, y1: f64, width: usize, height: usize) -> Option<BBox> {
        let l = x0.floor().max(0.0) as usize;
        let t = y0.floor().max(0.0) as usize;
        let r = (x1.ceil().max(0.0) as usize).min(width);
        let b = (y1.ceil().max(0.0) as usize).min(height);
        (r > l && b > t).then(|| BBox::new(l, t, r - l, b - t))
    }
}
