use gbx_core::synth::*;

fn covers(kind: GlyphKind, dr: i32, dc: i32) -> bool {
    match kind {
        GlyphKind::Disk | GlyphKind::Ring => dr * dr + dc * dc <= 10,
        GlyphKind::Triangle => dr.abs() <= 3 && 2 * dc.abs() <= dr + 3,
        GlyphKind::Bar => dr.abs() <= 1 && dc.abs() <= 4,
    }
}

#[test]
fn part_masks_match_rasterization_oracle() {
    let config = GeneratorConfig { seed: 3, ..GeneratorConfig::default() };
    let scenes = generate(&config, 60).unwrap();
    for s in &scenes {
        let cat = s.category.unwrap();
        for lm in &s.landmarks {
            let kind = config.categories[cat].parts[lm.part - cat * MAX_PARTS].kind;
            let mask = s.mask(lm.part).unwrap();
            for r in 0..s.size {
                for c in 0..s.size {
                    let want = covers(kind, r as i32 - lm.row as i32, c as i32 - lm.col as i32);
                    assert_eq!(mask.bits[r * s.size + c], want, "part {} at ({r}, {c})", lm.part);
                }
            }
        }
    }
}

#[test]
fn generation_is_deterministic_and_seed_sensitive() {
    let config = GeneratorConfig { seed: 11, negatives: true, ..GeneratorConfig::default() };
    assert_eq!(generate(&config, 30).unwrap(), generate(&config, 30).unwrap());
    let other = GeneratorConfig { seed: 12, ..config.clone() };
    assert_ne!(generate(&config, 30).unwrap(), generate(&other, 30).unwrap());
    // a range is a slice of the full sequence
    assert_eq!(generate_range(&config, 10, 5).unwrap(), generate(&config, 15).unwrap()[10..]);
}

#[test]
fn zero_jitter_pins_landmarks_per_category() {
    let config = GeneratorConfig { jitter: 0, ..GeneratorConfig::default() };
    let scenes = generate(&config, 60).unwrap();
    for c in 0..6 {
        let lms: Vec<_> = scenes.iter().filter(|s| s.category == Some(c)).map(|s| s.landmarks.clone()).collect();
        assert!(lms.len() >= 2);
        assert!(lms.windows(2).all(|w| w[0] == w[1]));
    }
}

#[test]
fn scenes_respect_box_and_landmark_invariants() {
    let config = GeneratorConfig { seed: 5, negatives: true, ..GeneratorConfig::default() };
    for s in generate(&config, 140).unwrap() {
        let mut parts: Vec<usize> = s.landmarks.iter().map(|l| l.part).collect();
        parts.sort_unstable();
        parts.dedup();
        assert_eq!(parts.len(), s.landmarks.len());
        match s.object_box {
            Some(b) => {
                let area: usize = s.part_masks.iter().map(PartMask::area).sum();
                assert!(area <= b.area());
                for m in &s.part_masks {
                    for (k, _) in m.bits.iter().enumerate().filter(|(_, &on)| on) {
                        assert!(b.contains(k / s.size, k % s.size));
                    }
                }
            }
            None => assert!(s.landmarks.is_empty() && s.category.is_none()),
        }
    }
}

#[test]
fn archetypes_differ_by_six_pixels_somewhere() {
    let arch = default_archetypes();
    for a in 0..arch.len() {
        for b in a + 1..arch.len() {
            let apart = arch[a].parts.iter().enumerate().any(|(k, p)| match arch[b].parts.get(k) {
                Some(q) => {
                    let (dr, dc) = (p.offset[0] - q.offset[0], p.offset[1] - q.offset[1]);
                    p.kind != q.kind || ((dr * dr + dc * dc) as f64).sqrt() >= 6.0
                }
                None => true,
            });
            assert!(apart, "{a} vs {b}");
        }
    }
}

#[test]
fn negatives_have_no_landmarks() {
    let config = GeneratorConfig { seed: 9, ..GeneratorConfig::default() };
    let neg = generate_negatives(&config, 50).unwrap();
    assert!(neg.iter().all(|s| s.landmarks.is_empty() && s.part_masks.is_empty() && s.category.is_none()));
}

fn cdf(scenes: &[SyntheticScene]) -> Vec<f64> {
    let mut counts = [0u64; 256];
    for s in scenes {
        for &p in &s.pixels {
            counts[p as usize] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    let mut acc = 0;
    counts
        .iter()
        .map(|&c| {
            acc += c;
            acc as f64 / total as f64
        })
        .collect()
}

#[test]
fn negative_pixel_histogram_overlaps_positives() {
    let config = GeneratorConfig { seed: 2, ..GeneratorConfig::default() };
    let pos = generate(&config, 300).unwrap();
    let neg = generate_negatives(&config, 300).unwrap();
    let ks = cdf(&pos).iter().zip(cdf(&neg)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(ks < 0.2, "KS distance {ks}");
}

#[test]
fn archive_round_trips_with_exact_count() {
    let dir = tempfile::tempdir().unwrap();
    let config = GeneratorConfig { seed: 4, negatives: true, ..GeneratorConfig::default() };
    let scenes = generate(&config, 23).unwrap();
    let summary = write_archive(dir.path(), &scenes).unwrap();
    assert_eq!(summary, ArchiveSummary::of(&scenes));
    let index = std::fs::read_to_string(dir.path().join(INDEX_FILE)).unwrap();
    assert_eq!(index.lines().filter(|l| !l.starts_with('#')).count(), 23);
    assert_eq!(read_archive(dir.path()).unwrap(), scenes);
}
