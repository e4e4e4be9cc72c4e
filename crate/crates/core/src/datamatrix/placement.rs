//! ECC200 module placement for the 8×8 data region of a 10×10 symbol.

use std::sync::OnceLock;

use super::TOTAL_CODEWORDS;

const SIZE: i32 = 8;

/// `(codeword index, bit)` for every data-region module; bit 1 is the
/// most significant.
pub(crate) type PlacementMap = [[(u8, u8); SIZE as usize]; SIZE as usize];

struct Builder {
    map: [[Option<(u8, u8)>; SIZE as usize]; SIZE as usize],
}

impl Builder {
    fn module(&mut self, mut row: i32, mut col: i32, chr: u8, bit: u8) {
        if row < 0 {
            row += SIZE;
            col += 4 - ((SIZE + 4) % 8);
        }
        if col < 0 {
            col += SIZE;
            row += 4 - ((SIZE + 4) % 8);
        }
        self.map[row as usize][col as usize] = Some((chr, bit));
    }

    fn utah(&mut self, row: i32, col: i32, chr: u8) {
        self.module(row - 2, col - 2, chr, 1);
        self.module(row - 2, col - 1, chr, 2);
        self.module(row - 1, col - 2, chr, 3);
        self.module(row - 1, col - 1, chr, 4);
        self.module(row - 1, col, chr, 5);
        self.module(row, col - 2, chr, 6);
        self.module(row, col - 1, chr, 7);
        self.module(row, col, chr, 8);
    }

    /// Corner pattern used when the sweep reaches `(SIZE + 4, 2)` on a
    /// region whose width is a multiple of 8.
    fn corner4(&mut self, chr: u8) {
        let n = SIZE;
        self.module(n - 1, 0, chr, 1);
        self.module(n - 1, n - 1, chr, 2);
        self.module(0, n - 3, chr, 3);
        self.module(0, n - 2, chr, 4);
        self.module(0, n - 1, chr, 5);
        self.module(1, n - 3, chr, 6);
        self.module(1, n - 2, chr, 7);
        self.module(1, n - 1, chr, 8);
    }

    fn free(&self, row: i32, col: i32) -> bool {
        self.map[row as usize][col as usize].is_none()
    }
}

fn build() -> PlacementMap {
    let mut b = Builder { map: [[None; SIZE as usize]; SIZE as usize] };
    let mut chr: u8 = 0;
    let (mut row, mut col) = (4i32, 0i32);
    loop {
        // The other three corner cases need a region width that is not a
        // multiple of 8 and never fire here.
        if row == SIZE + 4 && col == 2 {
            b.corner4(chr);
            chr += 1;
        }
        loop {
            if row < SIZE && col >= 0 && b.free(row, col) {
                b.utah(row, col, chr);
                chr += 1;
            }
            row -= 2;
            col += 2;
            if !(row >= 0 && col < SIZE) {
                break;
            }
        }
        row += 1;
        col += 3;
        loop {
            if row >= 0 && col < SIZE && b.free(row, col) {
                b.utah(row, col, chr);
                chr += 1;
            }
            row += 2;
            col -= 2;
            if !(row < SIZE && col >= 0) {
                break;
            }
        }
        row += 3;
        col += 1;
        if !(row < SIZE || col < SIZE) {
            break;
        }
    }
    debug_assert_eq!(chr as usize, TOTAL_CODEWORDS);
    b.map.map(|r| r.map(|m| m.expect("8x8 region fully covered by 8 codewords")))
}

pub(crate) fn placement() -> &'static PlacementMap {
    static MAP: OnceLock<PlacementMap> = OnceLock::new();
    MAP.get_or_init(build)
}
