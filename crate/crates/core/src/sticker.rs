//! Ground sticker artwork and payload convention.
//!
//! A sticker is a 10 cm square of 28×28 modules: a one-module black ring,
//! a one-module white margin, then a 2×2 grid of 12-module cells, each a
//! 10×10 symbol inside its one-module quiet zone. Quadrants are numbered
//! 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right as printed.
//!
//! Each symbol encodes `IIIIIQ`: the zero-padded five digit sticker id
//! followed by the quadrant digit, which packs into exactly three ASCII
//! codewords.

use nalgebra::{Point2, Point3};
use rand::Rng;

use crate::datamatrix::{encode_text, SymbolBitmap, SYMBOL_MODULES};
use crate::GreyImage;

pub const STICKER_SIZE_M: f64 = 0.10;
pub const STICKER_MODULES: usize = 28;
pub const MODULE_M: f64 = STICKER_SIZE_M / STICKER_MODULES as f64;
pub const MAX_STICKER_ID: u32 = 99_999;

/// Grey levels of the printed sticker and the surrounding floor.
pub const INK_LEVEL: u8 = 25;
pub const PAPER_LEVEL: u8 = 235;
pub const FLOOR_LEVEL: u8 = 110;

const CELL: usize = 12;
const CELL_ORIGIN: usize = 2;

pub fn payload(id: u32, quadrant: u8) -> String {
    assert!(id <= MAX_STICKER_ID && quadrant < 4, "payload out of range");
    format!("{id:05}{quadrant}")
}

/// `(id, quadrant)` for a well-formed payload.
pub fn parse_payload(bytes: &[u8]) -> Option<(u32, u8)> {
    if bytes.len() != 6 || !bytes.iter().all(u8::is_ascii_digit) {
        return None;
    }
    let id = std::str::from_utf8(&bytes[..5]).ok()?.parse().ok()?;
    let q = bytes[5] - b'0';
    (q < 4).then_some((id, q))
}

pub fn payloads(id: u32) -> [String; 4] {
    [0, 1, 2, 3].map(|q| payload(id, q))
}

/// Corners of the sticker square in its own frame (metres, y up as
/// printed): top-left, bottom-left, bottom-right, top-right. This is the
/// counter-clockwise-as-displayed order used by `QuadCorners`.
pub fn local_corners() -> [Point2<f64>; 4] {
    let h = STICKER_SIZE_M / 2.0;
    [Point2::new(-h, h), Point2::new(-h, -h), Point2::new(h, -h), Point2::new(h, h)]
}

/// Module grid of a sticker; `true` is ink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StickerArt {
    pub dark: [[bool; STICKER_MODULES]; STICKER_MODULES],
}

impl StickerArt {
    pub fn from_payloads(texts: &[String; 4]) -> Self {
        let mut dark = [[false; STICKER_MODULES]; STICKER_MODULES];
        let last = STICKER_MODULES - 1;
        for i in 0..STICKER_MODULES {
            dark[0][i] = true;
            dark[last][i] = true;
            dark[i][0] = true;
            dark[i][last] = true;
        }
        for (q, text) in texts.iter().enumerate() {
            let cw = encode_text(text.as_bytes()).expect("sticker payload fits a 10x10 symbol");
            let bm = SymbolBitmap::from_codewords(&cw);
            let (row0, col0) = (CELL_ORIGIN + (q / 2) * CELL + 1, CELL_ORIGIN + (q % 2) * CELL + 1);
            for r in 0..SYMBOL_MODULES {
                for c in 0..SYMBOL_MODULES {
                    dark[row0 + r][col0 + c] = bm.modules[r][c];
                }
            }
        }
        Self { dark }
    }

    pub fn for_id(id: u32) -> Self {
        Self::from_payloads(&payloads(id))
    }

    /// Sticker with random ids in every quadrant, used as the generic
    /// detection reference.
    pub fn random(rng: &mut impl Rng) -> Self {
        let texts = [0u8, 1, 2, 3].map(|q| payload(rng.random_range(0..=MAX_STICKER_ID), q));
        Self::from_payloads(&texts)
    }

    /// Grey level at module coordinates (column `mx`, row `my`, each in
    /// `[0, 28)`); `None` outside the sticker.
    pub fn level_at(&self, mx: f64, my: f64) -> Option<u8> {
        if !(0.0..STICKER_MODULES as f64).contains(&mx) || !(0.0..STICKER_MODULES as f64).contains(&my) {
            return None;
        }
        Some(if self.dark[my as usize][mx as usize] { INK_LEVEL } else { PAPER_LEVEL })
    }

    /// Printable raster, `px` pixels per module, optional floor border.
    pub fn raster(&self, px: usize, border_px: usize) -> GreyImage {
        let px = px.max(1);
        let side = STICKER_MODULES * px + 2 * border_px;
        GreyImage::from_fn(side, side, |x, y| {
            if x < border_px || y < border_px || x >= side - border_px || y >= side - border_px {
                FLOOR_LEVEL
            } else if self.dark[(y - border_px) / px][(x - border_px) / px] {
                INK_LEVEL
            } else {
                PAPER_LEVEL
            }
        })
    }
}

/// Sticker pose in the warehouse: position on the floor and a yaw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StickerPlacement {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl StickerPlacement {
    pub fn to_world(&self, local: &Point2<f64>) -> Point3<f64> {
        let (s, c) = self.yaw.sin_cos();
        Point3::new(self.x + c * local.x - s * local.y, self.y + s * local.x + c * local.y, 0.0)
    }

    pub fn to_local(&self, world: &Point2<f64>) -> Point2<f64> {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (world.x - self.x, world.y - self.y);
        Point2::new(c * dx + s * dy, -s * dx + c * dy)
    }

    pub fn world_corners(&self) -> [Point3<f64>; 4] {
        local_corners().map(|p| self.to_world(&p))
    }
}

/// Module coordinates `(column, row)` of a point in the sticker frame.
pub fn local_to_module(p: &Point2<f64>) -> (f64, f64) {
    let h = STICKER_SIZE_M / 2.0;
    ((p.x + h) / MODULE_M, (h - p.y) / MODULE_M)
}
