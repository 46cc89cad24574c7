//! Page images and the fixed grid featurizer.
//!
//! A page is reduced to the mean intensity of each cell of a 32x32 grid,
//! scaled to `[0, 1]`. The featurizer has no trainable state; only the linear
//! head on top of it is learned.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scalar::Real;

pub const GRID: usize = 32;
pub const FEATURE_LEN: usize = GRID * GRID;

/// Identifies the featurizer; models trained on its output record its hash.
pub const FEATURIZER_ID: &str = "docket/grid-mean-32x32/v1";

pub fn featurizer_hash() -> String {
    hex::encode(Sha256::digest(FEATURIZER_ID.as_bytes()))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PgmError {
    #[error("unsupported image format (magic {0:?}); expected P2 or P5")]
    UnsupportedFormat(String),
    #[error("malformed PGM header: {0}")]
    MalformedHeader(&'static str),
    #[error("unsupported maxval {0}; must be in 1..=255")]
    UnsupportedMaxval(u32),
    #[error("truncated pixel data: expected {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("bad pixel sample {0:?}")]
    BadSample(String),
    #[error("image dimensions must be at least 1x1 and match the pixel count")]
    BadDimensions,
}

/// Row-major 8-bit grayscale page.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PageImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl PageImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, PgmError> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(PgmError::BadDimensions);
        }
        Ok(PageImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        PageImage::new(width, height, vec![value; width * height]).expect("non-empty page")
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

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Fills the clipped rectangle `[x0, x1) x [y0, y1)`.
    pub fn fill_rect(&mut self, x0: usize, y0: usize, x1: usize, y1: usize, v: u8) {
        for y in y0.min(self.height)..y1.min(self.height) {
            let row = y * self.width;
            for x in x0.min(self.width)..x1.min(self.width) {
                self.pixels[row + x] = v;
            }
        }
    }

    /// Nearest-neighbour enlargement by an integer factor.
    pub fn replicate(&self, factor: usize) -> PageImage {
        assert!(factor >= 1);
        let (w, h) = (self.width * factor, self.height * factor);
        let mut pixels = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                pixels.push(self.get(x / factor, y / factor));
            }
        }
        PageImage {
            width: w,
            height: h,
            pixels,
        }
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &'static str) -> Result<u32, PgmError> {
        self.token()
            .and_then(|t| std::str::from_utf8(t).ok())
            .and_then(|t| t.parse().ok())
            .ok_or(PgmError::MalformedHeader(what))
    }
}

/// Decodes a binary (P5) or ASCII (P2) PGM. Samples are rescaled to
/// `0..=255` when maxval is below 255.
pub fn decode_pgm(bytes: &[u8]) -> Result<PageImage, PgmError> {
    let mut h = Header { bytes, pos: 0 };
    let magic = h
        .token()
        .ok_or(PgmError::MalformedHeader("missing magic"))?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        other => {
            return Err(PgmError::UnsupportedFormat(
                String::from_utf8_lossy(other).into_owned(),
            ))
        }
    };
    let width = h.number("width")? as usize;
    let height = h.number("height")? as usize;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PgmError::MalformedHeader("zero dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(PgmError::UnsupportedMaxval(maxval));
    }
    let expected = width * height;
    let mut raw = Vec::with_capacity(expected);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        match bytes.get(h.pos) {
            Some(b) if b.is_ascii_whitespace() => h.pos += 1,
            _ => return Err(PgmError::Truncated { expected, found: 0 }),
        }
        let data = &bytes[h.pos..];
        if data.len() < expected {
            return Err(PgmError::Truncated {
                expected,
                found: data.len(),
            });
        }
        raw.extend_from_slice(&data[..expected]);
    } else {
        while raw.len() < expected {
            let Some(tok) = h.token() else {
                return Err(PgmError::Truncated {
                    expected,
                    found: raw.len(),
                });
            };
            let v: u32 = std::str::from_utf8(tok)
                .ok()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| PgmError::BadSample(String::from_utf8_lossy(tok).into_owned()))?;
            if v > maxval {
                return Err(PgmError::BadSample(v.to_string()));
            }
            raw.push(v as u8);
        }
    }
    if binary {
        if let Some(&v) = raw.iter().find(|&&v| u32::from(v) > maxval) {
            return Err(PgmError::BadSample(v.to_string()));
        }
    }
    if maxval < 255 {
        for v in &mut raw {
            *v = ((u32::from(*v) * 255 + maxval / 2) / maxval) as u8;
        }
    }
    PageImage::new(width, height, raw)
}

/// Encodes as binary PGM (P5, maxval 255).
pub fn encode_pgm(img: &PageImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

/// Fixed-length grid features, each in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseFeatures<T> {
    values: Vec<T>,
}

impl<T: Real> DenseFeatures<T> {
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

/// Mean intensity of each cell of a 32x32 grid, row-major, divided by 255.
///
/// Cell `k` along an axis of length `L` spans `[floor(k*L/32), floor((k+1)*L/32))`.
/// On pages narrower or shorter than 32 pixels some cells are empty; an
/// empty cell copies the nearest preceding non-empty cell in scan order, or
/// the first non-empty cell when none precedes it.
pub fn image_features<T: Real>(img: &PageImage) -> DenseFeatures<T> {
    let bounds = |len: usize| -> Vec<usize> { (0..=GRID).map(|k| k * len / GRID).collect() };
    let ys = bounds(img.height);
    let xs = bounds(img.width);

    let mut cells: Vec<Option<T>> = Vec::with_capacity(FEATURE_LEN);
    for gy in 0..GRID {
        for gx in 0..GRID {
            let (y0, y1, x0, x1) = (ys[gy], ys[gy + 1], xs[gx], xs[gx + 1]);
            let count = (y1 - y0) * (x1 - x0);
            if count == 0 {
                cells.push(None);
                continue;
            }
            let mut sum: u64 = 0;
            for y in y0..y1 {
                let row = &img.pixels[y * img.width + x0..y * img.width + x1];
                sum += row.iter().map(|&p| u64::from(p)).sum::<u64>();
            }
            let denom = T::from_u64(count as u64 * 255).expect("cell size");
            cells.push(Some(T::from_u64(sum).expect("cell sum") / denom));
        }
    }

    // a 1x1 page still has one non-empty cell
    let first = cells
        .iter()
        .flatten()
        .copied()
        .next()
        .expect("non-empty cell");
    let mut last = first;
    let values = cells
        .into_iter()
        .map(|c| {
            if let Some(v) = c {
                last = v;
            }
            last
        })
        .collect();
    DenseFeatures { values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decode_ascii() {
        let img = decode_pgm(b"P2\n2 2\n255\n0 0 255 255\n").unwrap();
        assert_eq!(img, PageImage::new(2, 2, vec![0, 0, 255, 255]).unwrap());
    }

    #[test]
    fn decode_with_comments_and_maxval_rescale() {
        let img = decode_pgm(b"P2 # comment\n# another\n3 1 15\n0 15 7\n").unwrap();
        assert_eq!(img.pixels(), &[0, 255, 119]);
    }

    #[test]
    fn decode_binary_roundtrip() {
        let mut img = PageImage::filled(5, 3, 200);
        img.set(4, 2, 7);
        assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img);
    }

    #[test]
    fn decode_errors() {
        assert_eq!(
            decode_pgm(b"P6\n1 1\n255\n\0\0\0"),
            Err(PgmError::UnsupportedFormat("P6".into()))
        );
        assert_eq!(
            decode_pgm(b"P2\n2 2\n255\n1 2 3\n"),
            Err(PgmError::Truncated {
                expected: 4,
                found: 3
            })
        );
        assert_eq!(
            decode_pgm(b"P5\n2 2\n255\n\x01\x02\x03"),
            Err(PgmError::Truncated {
                expected: 4,
                found: 3
            })
        );
        assert_eq!(
            decode_pgm(b"P2\n1 1\n65535\n0\n"),
            Err(PgmError::UnsupportedMaxval(65535))
        );
        assert!(matches!(
            decode_pgm(b"P2\n1 x\n255\n0\n"),
            Err(PgmError::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_pgm(b"P2\n1 1\n10\n11\n"),
            Err(PgmError::BadSample(_))
        ));
        assert!(matches!(decode_pgm(b""), Err(PgmError::MalformedHeader(_))));
    }

    #[test]
    fn uniform_pages() {
        let white: DenseFeatures<f64> = image_features(&PageImage::filled(100, 70, 255));
        assert_eq!(white.values().len(), FEATURE_LEN);
        assert!(white.values().iter().all(|&v| v == 1.0));
        let black: DenseFeatures<f32> = image_features(&PageImage::filled(33, 90, 0));
        assert!(black.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_and_half() {
        let mut img = PageImage::filled(64, 64, 0);
        img.fill_rect(0, 0, 64, 32, 255);
        let f: DenseFeatures<f64> = image_features(&img);
        assert!(f.values()[..512].iter().all(|&v| v == 1.0));
        assert!(f.values()[512..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tiny_pages_fill_empty_cells() {
        let f: DenseFeatures<f64> = image_features(&PageImage::filled(1, 1, 51));
        assert!(f.values().iter().all(|&v| (v - 0.2).abs() < 1e-15));

        // 2x1: only grid row 31 has pixels, in columns 15 (x=0) and 31 (x=1)
        let img = PageImage::new(2, 1, vec![0, 255]).unwrap();
        let f: DenseFeatures<f64> = image_features(&img);
        let v = f.values();
        assert!(v[..31 * 32 + 31].iter().all(|&x| x == 0.0));
        assert_eq!(v[31 * 32 + 31], 1.0);
    }

    fn page() -> impl Strategy<Value = PageImage> {
        (1usize..48, 1usize..48).prop_flat_map(|(w, h)| {
            prop::collection::vec(any::<u8>(), w * h)
                .prop_map(move |p| PageImage::new(w, h, p).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn features_in_unit_range(img in page()) {
            let f: DenseFeatures<f64> = image_features(&img);
            prop_assert_eq!(f.values().len(), FEATURE_LEN);
            prop_assert!(f.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn brightening_is_monotone(img in page(), k in 0u8..=255) {
            let brighter = PageImage::new(
                img.width(),
                img.height(),
                img.pixels().iter().map(|p| p.saturating_add(k)).collect(),
            ).unwrap();
            let a: DenseFeatures<f64> = image_features(&img);
            let b: DenseFeatures<f64> = image_features(&brighter);
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!(y >= x);
            }
        }

        // cell boundaries only line up under replication when both sides
        // are multiples of the grid size
        #[test]
        fn replication_invariance(
            wm in 1usize..3, hm in 1usize..3, factor in 2usize..4, seed in any::<u64>()
        ) {
            let (w, h) = (wm * GRID, hm * GRID);
            let mut s = seed;
            let pixels = (0..w * h).map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 56) as u8
            }).collect();
            let img = PageImage::new(w, h, pixels).unwrap();
            let a: DenseFeatures<f64> = image_features(&img);
            let b: DenseFeatures<f64> = image_features(&img.replicate(factor));
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
