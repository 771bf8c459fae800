//! Synthetic phantoms: an ellipsoidal "head" with a few ellipsoidal lesions.
//! Used by the examples, the tests and for smoke-testing a pipeline without
//! real scans.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nifti;
use crate::volume::{AnnotatedSample, GridShape, LabelMask, Spacing, Volume3D};

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomConfig {
    pub shape: GridShape,
    pub spacing: Spacing,
    /// Lesion radius range as a fraction of the smallest grid extent.
    pub lesion_radius: (f64, f64),
    pub max_lesions: usize,
    pub tissue_intensity: f32,
    pub lesion_intensity: f32,
    pub noise: f32,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            shape: GridShape::cube(32).expect("valid"),
            spacing: Spacing::isotropic(),
            lesion_radius: (0.06, 0.18),
            max_lesions: 3,
            tissue_intensity: 100.0,
            lesion_intensity: 40.0,
            noise: 5.0,
        }
    }
}

fn ellipsoid(center: [f64; 3], radii: [f64; 3], p: [usize; 3]) -> bool {
    (0..3)
        .map(|a| ((p[a] as f64 - center[a]) / radii[a]).powi(2))
        .sum::<f64>()
        <= 1.0
}

/// One phantom; `with_lesion = false` gives an all-background label.
pub fn phantom_sample<R: Rng + ?Sized>(
    id: &str,
    cfg: &PhantomConfig,
    with_lesion: bool,
    rng: &mut R,
) -> Result<AnnotatedSample> {
    let dims = cfg.shape.dims();
    let head_center = dims.map(|n| (n as f64 - 1.0) / 2.0);
    let head_radii = dims.map(|n| (n as f64 * 0.45).max(0.5));

    let mut lesions = Vec::new();
    if with_lesion {
        let min_extent = *dims.iter().min().expect("three axes") as f64;
        let count = rng.random_range(1..=cfg.max_lesions.max(1));
        for _ in 0..count {
            let (lo, hi) = cfg.lesion_radius;
            let r = (min_extent * rng.random_range(lo..hi)).max(0.75);
            let radii = [r * rng.random_range(0.7..1.3), r * rng.random_range(0.7..1.3), r];
            let center = std::array::from_fn(|a| {
                let n = dims[a] as f64;
                rng.random_range(0.3 * n..(0.7 * n).max(0.3 * n + 1e-9))
            });
            lesions.push((center, radii));
        }
    }

    let shape = cfg.shape;
    let mut image = Vec::with_capacity(shape.len());
    let mut label = Vec::with_capacity(shape.len());
    for z in 0..shape.nz {
        for y in 0..shape.ny {
            for x in 0..shape.nx {
                let p = [x, y, z];
                let in_head = ellipsoid(head_center, head_radii, p);
                let in_lesion = lesions.iter().any(|&(c, r)| ellipsoid(c, r, p));
                let base = if in_lesion {
                    cfg.lesion_intensity
                } else if in_head {
                    cfg.tissue_intensity
                } else {
                    0.0
                };
                image.push(base + cfg.noise * rng.random_range(-1.0f32..1.0));
                label.push(in_lesion as u8);
            }
        }
    }
    // a lesion must not fill the whole grid
    if with_lesion && label.iter().all(|&v| v == 1) {
        label[0] = 0;
    }
    AnnotatedSample::new(
        id,
        Volume3D::new(shape, cfg.spacing, image)?,
        LabelMask::new(shape, cfg.spacing, label)?,
    )
}

/// `n` phantoms named `case_000`, `case_001`, ...; the last `empty` of them
/// have no lesion. Lesions that rasterize to nothing are re-drawn.
pub fn phantom_roster(cfg: &PhantomConfig, n: usize, empty: usize, seed: u64) -> Vec<AnnotatedSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let id = format!("case_{k:03}");
            let with_lesion = k < n.saturating_sub(empty);
            loop {
                let s = phantom_sample(&id, cfg, with_lesion, &mut rng).expect("phantom config is valid");
                if !with_lesion || !s.label().is_empty() {
                    break s;
                }
            }
        })
        .collect()
}

/// Writes samples as `dir/images/<id>.nii.gz` and `dir/labels/<id>.nii.gz`.
pub fn write_roster(dir: &Path, samples: &[AnnotatedSample]) -> Result<()> {
    let images = dir.join("images");
    let labels = dir.join("labels");
    for d in [&images, &labels] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    for s in samples {
        nifti::write_volume(images.join(format!("{}.nii.gz", s.id())), s.image())?;
        nifti::write_mask(labels.join(format!("{}.nii.gz", s.id())), s.label())?;
    }
    Ok(())
}
