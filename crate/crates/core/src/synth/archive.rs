//! Scene archives on disk.
//!
//! A directory holds one `P5` PGM per scene, one `P4` PBM per part mask, and
//! an index file `index.tsv`:
//!
//! ```text
//! # gbx scene archive v1
//! # size 32
//! # image	category	box	landmarks	masks
//! scene_00000.pgm	0	3,5,22,27	0:6,9;1:6,21;2:18,15	0:scene_00000_p0.pbm;1:…
//! ```
//!
//! `box` is `top,left,bottom,right` (inclusive), landmarks are
//! `part:row,col`, and every field of a negative scene except the image is
//! `-`. Lines end with `\n`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{BoundingBox, Landmark, PartMask, SyntheticScene};
use crate::error::{Error, Result};
use crate::pnm::{decode_pbm, decode_pgm, encode_pbm, encode_pgm, GrayImage};

pub const INDEX_FILE: &str = "index.tsv";
const HEADER: &str = "# gbx scene archive v1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchiveSummary {
    pub count: usize,
    pub negatives: usize,
    pub per_category: BTreeMap<usize, usize>,
}

impl ArchiveSummary {
    pub fn of(scenes: &[SyntheticScene]) -> Self {
        let mut per_category = BTreeMap::new();
        let mut negatives = 0;
        for s in scenes {
            match s.category {
                Some(c) => *per_category.entry(c).or_insert(0) += 1,
                None => negatives += 1,
            }
        }
        Self {
            count: scenes.len(),
            negatives,
            per_category,
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_archive(dir: &Path, scenes: &[SyntheticScene]) -> Result<ArchiveSummary> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let size = scenes.first().map_or(0, |s| s.size);
    let mut index = format!("{HEADER}\n# size {size}\n# image\tcategory\tbox\tlandmarks\tmasks\n");
    for (i, s) in scenes.iter().enumerate() {
        if s.size != size {
            return Err(Error::invalid("all scenes of an archive must share one size"));
        }
        let stem = format!("scene_{i:05}");
        let image = format!("{stem}.pgm");
        let img = GrayImage {
            width: s.size,
            height: s.size,
            pixels: s.pixels.clone(),
        };
        write_file(&dir.join(&image), &encode_pgm(&img, None))?;
        let category = s.category.map_or("-".to_string(), |c| c.to_string());
        let bbox = s
            .object_box
            .map_or("-".to_string(), |b| format!("{},{},{},{}", b.top, b.left, b.bottom, b.right));
        let landmarks = if s.landmarks.is_empty() {
            "-".to_string()
        } else {
            s.landmarks
                .iter()
                .map(|l| format!("{}:{},{}", l.part, l.row, l.col))
                .collect::<Vec<_>>()
                .join(";")
        };
        let mut masks = Vec::new();
        for m in &s.part_masks {
            let name = format!("{stem}_p{}.pbm", m.part);
            write_file(&dir.join(&name), &encode_pbm(s.size, s.size, &m.bits, None))?;
            masks.push(format!("{}:{name}", m.part));
        }
        let masks = if masks.is_empty() { "-".to_string() } else { masks.join(";") };
        writeln!(index, "{image}\t{category}\t{bbox}\t{landmarks}\t{masks}").expect("string write");
    }
    write_file(&dir.join(INDEX_FILE), index.as_bytes())?;
    Ok(ArchiveSummary::of(scenes))
}

fn parse_usize(field: &str, line: usize) -> Result<usize> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::format("scene index", format!("line {line}: bad number {field:?}")))
}

pub fn read_archive(dir: &Path) -> Result<Vec<SyntheticScene>> {
    let index_path = dir.join(INDEX_FILE);
    let text = fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == HEADER => {}
        _ => return Err(Error::format("scene index", "missing archive header")),
    }
    let mut size = None;
    let mut scenes = Vec::new();
    for (no, line) in lines {
        let no = no + 1;
        if let Some(rest) = line.strip_prefix("# size ") {
            size = Some(parse_usize(rest, no)?);
            continue;
        }
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::format("scene index", format!("line {no}: expected 5 fields")));
        }
        let img_path = dir.join(fields[0]);
        let img = decode_pgm(&fs::read(&img_path).map_err(|e| Error::io(&img_path, e))?)?;
        if img.width != img.height || size.is_some_and(|s| s != img.width) {
            return Err(Error::format("scene index", format!("line {no}: image size mismatch")));
        }
        let category = match fields[1] {
            "-" => None,
            c => Some(parse_usize(c, no)?),
        };
        let object_box = match fields[2] {
            "-" => None,
            b => {
                let v = b.split(',').map(|x| parse_usize(x, no)).collect::<Result<Vec<_>>>()?;
                if v.len() != 4 {
                    return Err(Error::format("scene index", format!("line {no}: bad box")));
                }
                Some(BoundingBox {
                    top: v[0],
                    left: v[1],
                    bottom: v[2],
                    right: v[3],
                })
            }
        };
        let mut landmarks = Vec::new();
        if fields[3] != "-" {
            for item in fields[3].split(';') {
                let (part, pos) = item
                    .split_once(':')
                    .ok_or_else(|| Error::format("scene index", format!("line {no}: bad landmark")))?;
                let (r, c) = pos
                    .split_once(',')
                    .ok_or_else(|| Error::format("scene index", format!("line {no}: bad landmark")))?;
                landmarks.push(Landmark {
                    part: parse_usize(part, no)?,
                    row: parse_usize(r, no)?,
                    col: parse_usize(c, no)?,
                });
            }
        }
        let mut part_masks = Vec::new();
        if fields[4] != "-" {
            for item in fields[4].split(';') {
                let (part, name) = item
                    .split_once(':')
                    .ok_or_else(|| Error::format("scene index", format!("line {no}: bad mask entry")))?;
                let path = dir.join(name);
                let (w, h, bits) = decode_pbm(&fs::read(&path).map_err(|e| Error::io(&path, e))?)?;
                if w != img.width || h != img.height {
                    return Err(Error::format("scene index", format!("line {no}: mask size mismatch")));
                }
                part_masks.push(PartMask {
                    part: parse_usize(part, no)?,
                    bits,
                });
            }
        }
        scenes.push(SyntheticScene {
            size: img.width,
            pixels: img.pixels,
            category,
            landmarks,
            part_masks,
            object_box,
        });
    }
    if scenes.is_empty() {
        return Err(Error::Empty("scene archive"));
    }
    Ok(scenes)
}
