//! Built-in 5x7 dot-matrix digit shapes.

pub const GLYPH_COUNT: usize = 10;
pub const GLYPH_W: usize = 5;
pub const GLYPH_H: usize = 7;

/// Row bitmasks, most significant of the low five bits on the left.
const GLYPHS: [[u8; GLYPH_H]; GLYPH_COUNT] = [
    [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110], // 0
    [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110], // 1
    [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111], // 2
    [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110], // 3
    [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010], // 4
    [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110], // 5
    [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110], // 6
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000], // 7
    [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110], // 8
    [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100], // 9
];

pub fn glyph_bit(class: usize, gx: usize, gy: usize) -> bool {
    debug_assert!(class < GLYPH_COUNT && gx < GLYPH_W && gy < GLYPH_H);
    GLYPHS[class][gy] & (1 << (GLYPH_W - 1 - gx)) != 0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glyphs_are_pairwise_distinct() {
        for a in 0..GLYPH_COUNT {
            for b in (a + 1)..GLYPH_COUNT {
                assert_ne!(GLYPHS[a], GLYPHS[b], "glyphs {a} and {b} collide");
            }
        }
    }

    #[test]
    fn every_glyph_has_ink() {
        for class in 0..GLYPH_COUNT {
            let on = (0..GLYPH_H)
                .flat_map(|y| (0..GLYPH_W).map(move |x| (x, y)))
                .filter(|&(x, y)| glyph_bit(class, x, y))
                .count();
            assert!(on >= 7, "glyph {class} has only {on} pixels");
        }
    }
}
