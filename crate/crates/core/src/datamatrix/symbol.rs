use super::placement::placement;
use super::{Codewords, TOTAL_CODEWORDS};
use crate::GreyImage;

pub const SYMBOL_MODULES: usize = 10;
const QUIET: usize = 1;

/// Module grid of a 10×10 symbol, row 0 at the top; `true` is dark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SymbolBitmap {
    pub modules: [[bool; SYMBOL_MODULES]; SYMBOL_MODULES],
}

impl SymbolBitmap {
    /// Finder or timing value expected at a border module, `None` inside.
    pub fn border_expected(row: usize, col: usize) -> Option<bool> {
        let last = SYMBOL_MODULES - 1;
        if col == 0 || row == last {
            Some(true)
        } else if row == 0 {
            Some(col % 2 == 0)
        } else if col == last {
            Some(row % 2 == 1)
        } else {
            None
        }
    }

    pub fn from_codewords(cw: &Codewords) -> Self {
        let bytes = cw.to_array();
        let map = placement();
        let mut modules = [[false; SYMBOL_MODULES]; SYMBOL_MODULES];
        for (row, line) in modules.iter_mut().enumerate() {
            for (col, m) in line.iter_mut().enumerate() {
                *m = match Self::border_expected(row, col) {
                    Some(v) => v,
                    None => {
                        let (chr, bit) = map[row - 1][col - 1];
                        bytes[chr as usize] >> (8 - bit) & 1 == 1
                    }
                };
            }
        }
        Self { modules }
    }

    /// Reads the data region back into codewords (border modules ignored).
    pub fn codewords(&self) -> [u8; TOTAL_CODEWORDS] {
        let map = placement();
        let mut out = [0u8; TOTAL_CODEWORDS];
        for (r, line) in map.iter().enumerate() {
            for (c, &(chr, bit)) in line.iter().enumerate() {
                if self.modules[r + 1][c + 1] {
                    out[chr as usize] |= 1 << (8 - bit);
                }
            }
        }
        out
    }

    /// Number of finder/timing modules that disagree with the pattern.
    pub fn border_mismatches(&self) -> usize {
        let mut n = 0;
        for row in 0..SYMBOL_MODULES {
            for col in 0..SYMBOL_MODULES {
                if let Some(v) = Self::border_expected(row, col) {
                    n += usize::from(self.modules[row][col] != v);
                }
            }
        }
        n
    }

    /// Quarter turn counter-clockwise as displayed.
    pub fn rotate90(&self) -> Self {
        let n = SYMBOL_MODULES;
        let mut modules = [[false; SYMBOL_MODULES]; SYMBOL_MODULES];
        for (r, line) in modules.iter_mut().enumerate() {
            for (c, m) in line.iter_mut().enumerate() {
                *m = self.modules[c][n - 1 - r];
            }
        }
        Self { modules }
    }
}

/// Rasterises the symbol with a 1-module quiet zone; dark 0, light 255.
pub fn render_symbol(cw: &Codewords, module_px: usize) -> GreyImage {
    let module_px = module_px.max(1);
    let bitmap = SymbolBitmap::from_codewords(cw);
    let side = (SYMBOL_MODULES + 2 * QUIET) * module_px;
    GreyImage::from_fn(side, side, |x, y| {
        let (mx, my) = (x / module_px, y / module_px);
        let inside = (QUIET..QUIET + SYMBOL_MODULES).contains(&mx) && (QUIET..QUIET + SYMBOL_MODULES).contains(&my);
        if inside && bitmap.modules[my - QUIET][mx - QUIET] {
            0
        } else {
            255
        }
    })
}

/// Inverse of `render_symbol`: samples module centres of an axis-aligned
/// rendering with quiet zone at the given module size.
pub fn sample_grid(img: &GreyImage, module_px: usize) -> SymbolBitmap {
    let module_px = module_px.max(1);
    let mut modules = [[false; SYMBOL_MODULES]; SYMBOL_MODULES];
    for (r, line) in modules.iter_mut().enumerate() {
        for (c, m) in line.iter_mut().enumerate() {
            let x = (c + QUIET) * module_px + module_px / 2;
            let y = (r + QUIET) * module_px + module_px / 2;
            *m = img.get(x.min(img.width() - 1), y.min(img.height() - 1)) < 128;
        }
    }
    SymbolBitmap { modules }
}
