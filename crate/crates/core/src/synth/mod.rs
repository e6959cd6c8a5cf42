//! Deterministic synthetic scenes: one object per image, built from part
//! glyphs whose arrangement is the only thing that tells categories apart.
//!
//! Every scene carries exact ground truth (part landmarks, part masks and the
//! object box) for the interpretability metrics.

mod archive;
mod glyph;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use archive::{read_archive, write_archive, ArchiveSummary, INDEX_FILE};
pub use glyph::{GlyphKind, Placement};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Maximum parts per archetype; part ids are `category * MAX_PARTS + slot`.
pub const MAX_PARTS: usize = 4;
pub const DEFAULT_SIZE: usize = 32;

/// Minimum distance between a negative glyph and an archetype part of the
/// same kind before the arrangement counts as different.
const ARRANGEMENT_TOLERANCE: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartSpec {
    pub kind: GlyphKind,
    /// `[row, col]` offset from the object centre.
    pub offset: [i32; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Archetype {
    pub parts: Vec<PartSpec>,
}

impl Archetype {
    fn new(parts: &[(GlyphKind, i32, i32)]) -> Self {
        Self {
            parts: parts
                .iter()
                .map(|&(kind, r, c)| PartSpec { kind, offset: [r, c] })
                .collect(),
        }
    }
}

/// Six arrangements of three glyphs each.
pub fn default_archetypes() -> Vec<Archetype> {
    use GlyphKind::*;
    vec![
        Archetype::new(&[(Disk, -6, -6), (Triangle, -6, 6), (Bar, 6, 0)]),
        Archetype::new(&[(Triangle, -6, -6), (Ring, -6, 6), (Disk, 6, 6)]),
        Archetype::new(&[(Bar, -6, 0), (Disk, 6, -6), (Triangle, 6, 6)]),
        Archetype::new(&[(Ring, -6, 0), (Triangle, 6, -6), (Disk, 6, 6)]),
        Archetype::new(&[(Disk, -6, -6), (Ring, -6, 6), (Triangle, 6, 0)]),
        Archetype::new(&[(Ring, -6, -6), (Disk, -6, 6), (Bar, 6, 0)]),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub size: usize,
    pub categories: Vec<Archetype>,
    /// Maximum absolute translation of the object centre, per axis.
    pub jitter: i32,
    /// Distractor texture patches per scene.
    pub clutter: usize,
    /// Interleave one negative scene after every round of categories.
    pub negatives: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            size: DEFAULT_SIZE,
            categories: default_archetypes(),
            jitter: 4,
            clutter: 2,
            negatives: false,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.categories.is_empty() {
            return Err(Error::invalid("generator needs at least one category"));
        }
        if self.size < 8 {
            return Err(Error::invalid(format!("image size {} is too small", self.size)));
        }
        if self.jitter < 0 {
            return Err(Error::invalid("jitter must be non-negative"));
        }
        let centre = (self.size / 2) as i32;
        for (c, arch) in self.categories.iter().enumerate() {
            if !(3..=MAX_PARTS).contains(&arch.parts.len()) {
                return Err(Error::invalid(format!(
                    "category {c} has {} parts; archetypes need 3 to {MAX_PARTS}",
                    arch.parts.len()
                )));
            }
            let placed = arch.place(centre, centre);
            for p in &placed {
                let (r0, c0, r1, c1) = p.bounds();
                let lim = self.size as i32 - 1;
                if r0 - self.jitter < 0 || c0 - self.jitter < 0 || r1 + self.jitter > lim || c1 + self.jitter > lim {
                    return Err(Error::invalid(format!(
                        "category {c}: jitter {} can push a part out of the {}px frame",
                        self.jitter, self.size
                    )));
                }
            }
            for i in 0..placed.len() {
                for j in i + 1..placed.len() {
                    if footprints_touch(&placed[i], &placed[j]) {
                        return Err(Error::invalid(format!("category {c}: parts {i} and {j} overlap")));
                    }
                }
            }
        }
        Ok(())
    }

    fn scene_rng(&self, index: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ splitmix64(index as u64 + 0x5CE4E)))
    }
}

impl Archetype {
    fn place(&self, row: i32, col: i32) -> Vec<Placement> {
        self.parts
            .iter()
            .map(|p| Placement {
                kind: p.kind,
                row: row + p.offset[0],
                col: col + p.offset[1],
            })
            .collect()
    }

    /// Whether `glyphs` reproduce this arrangement up to translation.
    pub fn matches(&self, glyphs: &[Placement]) -> bool {
        if glyphs.len() != self.parts.len() {
            return false;
        }
        let centroid = |pts: &mut dyn Iterator<Item = (f64, f64)>| {
            let v: Vec<_> = pts.collect();
            let n = v.len() as f64;
            (v.iter().map(|p| p.0).sum::<f64>() / n, v.iter().map(|p| p.1).sum::<f64>() / n)
        };
        let ca = centroid(&mut self.parts.iter().map(|p| (p.offset[0] as f64, p.offset[1] as f64)));
        let cg = centroid(&mut glyphs.iter().map(|g| (g.row as f64, g.col as f64)));
        let mut used = vec![false; glyphs.len()];
        for part in &self.parts {
            let pa = (part.offset[0] as f64 - ca.0, part.offset[1] as f64 - ca.1);
            let hit = glyphs.iter().enumerate().position(|(i, g)| {
                !used[i] && g.kind == part.kind && {
                    let pg = (g.row as f64 - cg.0, g.col as f64 - cg.1);
                    ((pa.0 - pg.0).powi(2) + (pa.1 - pg.1).powi(2)).sqrt() < ARRANGEMENT_TOLERANCE
                }
            });
            match hit {
                Some(i) => used[i] = true,
                None => return false,
            }
        }
        true
    }
}

fn footprints_touch(a: &Placement, b: &Placement) -> bool {
    let (ar0, ac0, ar1, ac1) = a.bounds();
    let (br0, bc0, br1, bc1) = b.bounds();
    ar0 <= br1 + 1 && br0 <= ar1 + 1 && ac0 <= bc1 + 1 && bc0 <= ac1 + 1
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Landmark {
    pub part: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartMask {
    pub part: usize,
    pub bits: Vec<bool>,
}

impl PartMask {
    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Inclusive pixel bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl BoundingBox {
    pub fn area(&self) -> usize {
        (self.bottom - self.top + 1) * (self.right - self.left + 1)
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.top..=self.bottom).contains(&row) && (self.left..=self.right).contains(&col)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub size: usize,
    /// 8-bit grayscale, row-major; intensity `v / 255`.
    pub pixels: Vec<u8>,
    /// `None` for negative scenes.
    pub category: Option<usize>,
    pub landmarks: Vec<Landmark>,
    pub part_masks: Vec<PartMask>,
    pub object_box: Option<BoundingBox>,
}

impl SyntheticScene {
    /// The image as a `[1, H, W]` tensor in `[0, 1]`.
    pub fn image(&self) -> Tensor {
        let data = self.pixels.iter().map(|&p| p as f64 / 255.0).collect();
        Tensor::from_parts(vec![1, self.size, self.size], data)
    }

    pub fn mask(&self, part: usize) -> Option<&PartMask> {
        self.part_masks.iter().find(|m| m.part == part)
    }

    pub fn landmark(&self, part: usize) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.part == part)
    }
}

/// Renders `count` scenes. Scene `i` belongs to category `i mod C`, or with
/// `negatives` set, every `(C+1)`-th scene is a negative.
pub fn generate(config: &GeneratorConfig, count: usize) -> Result<Vec<SyntheticScene>> {
    generate_range(config, 0, count)
}

/// Scenes `start..start + count` of the stream defined by `config`.
pub fn generate_range(config: &GeneratorConfig, start: usize, count: usize) -> Result<Vec<SyntheticScene>> {
    if count == 0 {
        return Err(Error::invalid("scene count must be at least 1"));
    }
    config.validate()?;
    let cats = config.categories.len();
    (start..start + count)
        .map(|i| {
            let mut rng = config.scene_rng(i);
            if config.negatives && i % (cats + 1) == cats {
                render_negative(config, &mut rng)
            } else {
                let c = if config.negatives { i % (cats + 1) } else { i % cats };
                render_positive(config, c, &mut rng)
            }
        })
        .collect()
}

/// Scenes containing only distractor glyphs and clutter.
pub fn generate_negatives(config: &GeneratorConfig, count: usize) -> Result<Vec<SyntheticScene>> {
    if count == 0 {
        return Err(Error::invalid("scene count must be at least 1"));
    }
    config.validate()?;
    (0..count)
        .map(|i| {
            let mut rng = config.scene_rng(i ^ 0x4E45_4741_5449_5645);
            render_negative(config, &mut rng)
        })
        .collect()
}

fn background(size: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    (0..size * size).map(|_| rng.gen_range(0..=25u8)).collect()
}

fn draw(pixels: &mut [u8], size: usize, glyph: &Placement, rng: &mut ChaCha8Rng) {
    let level: i32 = rng.gen_range(150..=240);
    for (r, c) in glyph.ink(size, size) {
        pixels[r * size + c] = (level + rng.gen_range(-12..=12)).clamp(0, 255) as u8;
    }
}

/// Drops 3×3 speckle patches that keep one pixel of clearance from `keep_out`.
fn add_clutter(pixels: &mut [u8], size: usize, keep_out: &[bool], count: usize, rng: &mut ChaCha8Rng) {
    for _ in 0..count {
        for _attempt in 0..64 {
            let r = rng.gen_range(1..size as i32 - 1);
            let c = rng.gen_range(1..size as i32 - 1);
            let clear = (-2..=2).all(|dr| {
                (-2..=2).all(|dc| {
                    let (rr, cc) = (r + dr, c + dc);
                    rr < 0 || cc < 0 || rr >= size as i32 || cc >= size as i32 || !keep_out[rr as usize * size + cc as usize]
                })
            });
            if !clear {
                continue;
            }
            let level: i32 = rng.gen_range(150..=240);
            let pattern: u16 = rng.gen_range(0..512u16) | 0b1_0001_0001;
            for k in 0..9 {
                if pattern & (1 << k) != 0 {
                    let (rr, cc) = ((r + k / 3 - 1) as usize, (c + k % 3 - 1) as usize);
                    pixels[rr * size + cc] = (level + rng.gen_range(-12..=12)).clamp(0, 255) as u8;
                }
            }
            break;
        }
    }
}

fn render_positive(config: &GeneratorConfig, category: usize, rng: &mut ChaCha8Rng) -> Result<SyntheticScene> {
    let size = config.size;
    let centre = (size / 2) as i32;
    let j = config.jitter;
    let (dr, dc) = (rng.gen_range(-j..=j), rng.gen_range(-j..=j));
    let placed = config.categories[category].place(centre + dr, centre + dc);
    let mut pixels = background(size, rng);
    let mut keep_out = vec![false; size * size];
    let mut landmarks = Vec::with_capacity(placed.len());
    let mut part_masks = Vec::with_capacity(placed.len());
    let (mut top, mut left, mut bottom, mut right) = (usize::MAX, usize::MAX, 0, 0);
    for (slot, glyph) in placed.iter().enumerate() {
        let part = category * MAX_PARTS + slot;
        draw(&mut pixels, size, glyph, rng);
        let mut bits = vec![false; size * size];
        for (r, c) in glyph.region(size, size) {
            bits[r * size + c] = true;
            keep_out[r * size + c] = true;
            top = top.min(r);
            left = left.min(c);
            bottom = bottom.max(r);
            right = right.max(c);
        }
        landmarks.push(Landmark {
            part,
            row: glyph.row as usize,
            col: glyph.col as usize,
        });
        part_masks.push(PartMask { part, bits });
    }
    add_clutter(&mut pixels, size, &keep_out, config.clutter, rng);
    Ok(SyntheticScene {
        size,
        pixels,
        category: Some(category),
        landmarks,
        part_masks,
        object_box: Some(BoundingBox {
            top,
            left,
            bottom,
            right,
        }),
    })
}

fn render_negative(config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Result<SyntheticScene> {
    let size = config.size as i32;
    let count = config.categories[0].parts.len();
    for _attempt in 0..1000 {
        let mut glyphs: Vec<Placement> = Vec::with_capacity(count);
        let mut ok = true;
        for _ in 0..count {
            let kind = GlyphKind::ALL[rng.gen_range(0..GlyphKind::ALL.len())];
            let (hr, hc) = kind.half_extent();
            let mut placed = None;
            for _ in 0..64 {
                let g = Placement {
                    kind,
                    row: rng.gen_range(hr..size - hr),
                    col: rng.gen_range(hc..size - hc),
                };
                if glyphs.iter().all(|o| !footprints_touch(o, &g)) {
                    placed = Some(g);
                    break;
                }
            }
            match placed {
                Some(g) => glyphs.push(g),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok || config.categories.iter().any(|a| a.matches(&glyphs)) {
            continue;
        }
        let mut pixels = background(config.size, rng);
        let mut keep_out = vec![false; config.size * config.size];
        for g in &glyphs {
            draw(&mut pixels, config.size, g, rng);
            for (r, c) in g.region(config.size, config.size) {
                keep_out[r * config.size + c] = true;
            }
        }
        add_clutter(&mut pixels, config.size, &keep_out, config.clutter, rng);
        return Ok(SyntheticScene {
            size: config.size,
            pixels,
            category: None,
            landmarks: Vec::new(),
            part_masks: Vec::new(),
            object_box: None,
        });
    }
    Err(Error::invalid("could not place a non-matching negative arrangement"))
}
