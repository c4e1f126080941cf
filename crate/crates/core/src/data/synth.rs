use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::{mix_seed, Rng};

use super::image::{write_png, RawImage};
use super::label::ClassLabel;

/// Base colour and stripe frequency (cycles per image) of each class.
const STYLE: [([f64; 3], f64); 4] = [
    ([0.92, 0.62, 0.76], 2.0),
    ([0.80, 0.46, 0.30], 4.0),
    ([0.46, 0.26, 0.66], 7.0),
    ([0.34, 0.56, 0.76], 11.0),
];

/// One procedurally textured `side x side` RGB image of `class`.
pub fn synth_image(class: ClassLabel, side: usize, rng: &mut Rng) -> RawImage {
    let (base, freq) = STYLE[class.code()];
    let tint: [f64; 3] = std::array::from_fn(|c| base[c] + rng.uniform_range(-0.04, 0.04));
    let angle = rng.uniform_range(0.0, std::f64::consts::PI);
    let phase = rng.uniform_range(0.0, std::f64::consts::TAU);
    let (ca, sa) = (angle.cos(), angle.sin());
    let mut pixels = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        for x in 0..side {
            let t = (x as f64 * ca + y as f64 * sa) / side as f64;
            let wave = 0.8 + 0.2 * (std::f64::consts::TAU * freq * t + phase).sin();
            for c in tint {
                let v = c * wave + rng.uniform_range(-0.06, 0.06);
                pixels.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    RawImage { width: side as u32, height: side as u32, channels: 3, pixels }
}

/// Writes `<out>/<CLASS>/synth_NNNN.png`, `per_class` images per class.
/// Each image depends only on (seed, class, index).
pub fn synth_generate(out_dir: &Path, per_class: usize, side: usize, seed: u64) -> Result<Vec<PathBuf>> {
    if per_class == 0 {
        return Err(Error::Usage("per-class count must be at least 1".into()));
    }
    if side < 8 {
        return Err(Error::Usage(format!("side {side} is below 8 pixels")));
    }
    let mut written = Vec::with_capacity(4 * per_class);
    for class in ClassLabel::ALL {
        let dir = out_dir.join(class.name());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for i in 0..per_class {
            let mut rng = Rng::new(mix_seed(seed, ((class.code() as u64) << 32) | i as u64));
            let path = dir.join(format!("synth_{i:04}.png"));
            write_png(&path, &synth_image(class, side, &mut rng))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::manifest::load_manifest;

    #[test]
    fn writes_tree_deterministically() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let files = synth_generate(a.path(), 2, 16, 7).unwrap();
        synth_generate(b.path(), 2, 16, 7).unwrap();
        assert_eq!(files.len(), 8);
        for f in &files {
            let rel = f.strip_prefix(a.path()).unwrap();
            assert_eq!(fs::read(f).unwrap(), fs::read(b.path().join(rel)).unwrap());
        }
        let m = load_manifest(a.path(), 0).unwrap();
        assert_eq!(m.class_counts.values().copied().collect::<Vec<_>>(), [2, 2, 2, 2]);
    }

    #[test]
    fn classes_differ_in_mean_colour() {
        let means: Vec<[f64; 3]> = ClassLabel::ALL
            .iter()
            .map(|&c| {
                let img = synth_image(c, 32, &mut Rng::new(1));
                std::array::from_fn(|ch| img.pixels.iter().skip(ch).step_by(3).map(|&v| v as f64).sum::<f64>() / 1024.0)
            })
            .collect();
        for i in 0..4 {
            for j in i + 1..4 {
                let d: f64 = (0..3).map(|c| (means[i][c] - means[j][c]).abs()).sum();
                assert!(d > 40.0, "{i} {j} {d}");
            }
        }
    }

    #[test]
    fn rejects_zero_per_class() {
        let dir = tempfile::tempdir().unwrap();
        assert!(synth_generate(dir.path(), 0, 16, 0).is_err());
    }
}
