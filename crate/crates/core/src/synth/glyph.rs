use serde::{Deserialize, Serialize};

/// Geometric part shapes. Each covers roughly one 7×7 footprint, about one
/// interpretable-layer cell of a 6×6 map over a 32×32 image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlyphKind {
    Disk,
    Triangle,
    Bar,
    Ring,
}

impl GlyphKind {
    pub const ALL: [GlyphKind; 4] = [GlyphKind::Disk, GlyphKind::Triangle, GlyphKind::Bar, GlyphKind::Ring];

    /// Half extents `(rows, cols)` of the footprint around the centre.
    pub fn half_extent(self) -> (i32, i32) {
        match self {
            GlyphKind::Disk | GlyphKind::Ring | GlyphKind::Triangle => (3, 3),
            GlyphKind::Bar => (1, 4),
        }
    }

    /// Whether offset `(dr, dc)` from the centre belongs to the part region.
    /// For a ring the region is the whole outer disk, hole included.
    pub fn covers(self, dr: i32, dc: i32) -> bool {
        let d2 = dr * dr + dc * dc;
        match self {
            GlyphKind::Disk | GlyphKind::Ring => d2 <= 10,
            // apex at the top, base on row +3: half width (dr + 3) / 2
            GlyphKind::Triangle => (-3..=3).contains(&dr) && 2 * dc.abs() <= dr + 3,
            GlyphKind::Bar => dr.abs() <= 1 && dc.abs() <= 4,
        }
    }

    /// Whether offset `(dr, dc)` is inked when drawn.
    pub fn inks(self, dr: i32, dc: i32) -> bool {
        match self {
            GlyphKind::Ring => self.covers(dr, dc) && dr * dr + dc * dc > 2,
            _ => self.covers(dr, dc),
        }
    }
}

/// A glyph placed at an integer pixel centre `[row, col]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Placement {
    pub kind: GlyphKind,
    pub row: i32,
    pub col: i32,
}

impl Placement {
    /// Pixels of the part region inside a `h×w` frame, row-major order.
    pub fn region(&self, h: usize, w: usize) -> Vec<(usize, usize)> {
        self.pixels(h, w, |k, dr, dc| k.covers(dr, dc))
    }

    pub fn ink(&self, h: usize, w: usize) -> Vec<(usize, usize)> {
        self.pixels(h, w, |k, dr, dc| k.inks(dr, dc))
    }

    fn pixels(&self, h: usize, w: usize, test: impl Fn(GlyphKind, i32, i32) -> bool) -> Vec<(usize, usize)> {
        let (hr, hc) = self.kind.half_extent();
        let mut out = Vec::new();
        for dr in -hr..=hr {
            for dc in -hc..=hc {
                let (r, c) = (self.row + dr, self.col + dc);
                if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && test(self.kind, dr, dc) {
                    out.push((r as usize, c as usize));
                }
            }
        }
        out
    }

    /// Inclusive bounding rows/cols of the footprint.
    pub fn bounds(&self) -> (i32, i32, i32, i32) {
        let (hr, hc) = self.kind.half_extent();
        (self.row - hr, self.col - hc, self.row + hr, self.col + hc)
    }
}
