//! Mixup and CutMix, extended voxelwise to 3D segmentation.
//!
//! Mixup blends both image and label with a Beta-distributed weight. CutMix
//! pastes an axis-aligned box from one image into the other but blends the
//! labels globally with the box's volume fraction. That label rule is kept
//! as-is even though it disagrees with the image at every voxel.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{check_aligned, AnnotatedSample, LabelMask, SoftLabelMask, Volume3D};

pub const DEFAULT_MIXUP_ALPHA: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixupSpec {
    pub alpha: f64,
    pub lambda: f64,
    pub rng_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutMixSpec {
    /// Inclusive lower corner of the clipped box.
    pub cube_origin: [usize; 3],
    /// Edge lengths of the clipped box in voxels (0 on any axis means empty).
    pub cube_extent: [usize; 3],
    /// Drawn target volume fraction.
    pub target_fraction: f64,
    /// Box voxel count divided by grid voxel count.
    pub lambda_eff: f64,
    pub rng_seed: Option<u64>,
}

impl CutMixSpec {
    pub fn voxel_count(&self) -> usize {
        self.cube_extent.iter().product()
    }
}

fn check_pair(a: &AnnotatedSample, b: &AnnotatedSample) -> Result<()> {
    check_aligned((a.shape(), a.spacing()), (b.shape(), b.spacing()))
}

fn blend_labels(a: &LabelMask, b: &LabelMask, lambda: f64) -> Result<SoftLabelMask> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&ya, &yb)| {
            let v = lambda * ya as f64 + (1.0 - lambda) * yb as f64;
            v.clamp(0.0, 1.0) as f32
        })
        .collect();
    Ok(SoftLabelMask::new(b.shape(), b.spacing(), data)?.with_meta(b.meta().clone()))
}

/// Mixup with a fixed weight: `λ a + (1 - λ) b` for image and label.
pub fn mixup_with_lambda(
    a: &AnnotatedSample,
    b: &AnnotatedSample,
    lambda: f64,
) -> Result<(Volume3D, SoftLabelMask)> {
    check_pair(a, b)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("mixup weight {lambda} outside [0, 1]")));
    }
    let data = a
        .image()
        .data()
        .iter()
        .zip(b.image().data())
        .map(|(&xa, &xb)| (lambda * xa as f64 + (1.0 - lambda) * xb as f64) as f32)
        .collect();
    let image = Volume3D::new(b.shape(), b.spacing(), data)?.with_meta(b.image().meta().clone());
    let label = blend_labels(a.label(), b.label(), lambda)?;
    Ok((image, label))
}

/// Mixup with `λ ~ Beta(alpha, alpha)`.
pub fn mixup_pair<R: Rng + ?Sized>(
    a: &AnnotatedSample,
    b: &AnnotatedSample,
    alpha: f64,
    rng: &mut R,
) -> Result<(Volume3D, SoftLabelMask, MixupSpec)> {
    check_pair(a, b)?;
    let beta = Beta::new(alpha, alpha)
        .map_err(|e| Error::Config(format!("invalid mixup alpha {alpha}: {e}")))?;
    let lambda = beta.sample(rng).clamp(0.0, 1.0);
    let (image, label) = mixup_with_lambda(a, b, lambda)?;
    Ok((
        image,
        label,
        MixupSpec {
            alpha,
            lambda,
            rng_seed: None,
        },
    ))
}

/// Box with lower corner `origin` and size `extent`, both in voxels. The box
/// is clipped to the grid; `λ_eff` is recomputed from what remains.
pub fn cutmix_with_box(
    a: &AnnotatedSample,
    b: &AnnotatedSample,
    origin: [usize; 3],
    extent: [usize; 3],
) -> Result<(Volume3D, SoftLabelMask, CutMixSpec)> {
    check_pair(a, b)?;
    let shape = b.shape();
    let dims = shape.dims();
    let mut lo = [0usize; 3];
    let mut size = [0usize; 3];
    for axis in 0..3 {
        lo[axis] = origin[axis].min(dims[axis]);
        let hi = origin[axis].saturating_add(extent[axis]).min(dims[axis]);
        size[axis] = hi - lo[axis];
    }
    let inside = |x: usize, y: usize, z: usize| {
        [x, y, z]
            .iter()
            .zip(lo.iter().zip(&size))
            .all(|(&c, (&l, &s))| c >= l && c < l + s)
    };

    let xa = a.image().data();
    let xb = b.image().data();
    let mut data = Vec::with_capacity(shape.len());
    let mut count = 0usize;
    for z in 0..shape.nz {
        for y in 0..shape.ny {
            for x in 0..shape.nx {
                let i = shape.index(x, y, z);
                if inside(x, y, z) {
                    count += 1;
                    data.push(xa[i]);
                } else {
                    data.push(xb[i]);
                }
            }
        }
    }
    debug_assert_eq!(count, size.iter().product::<usize>());
    let lambda_eff = count as f64 / shape.len() as f64;
    let image = Volume3D::new(shape, b.spacing(), data)?.with_meta(b.image().meta().clone());
    let label = blend_labels(a.label(), b.label(), lambda_eff)?;
    let spec = CutMixSpec {
        cube_origin: lo,
        cube_extent: size,
        target_fraction: lambda_eff,
        lambda_eff,
        rng_seed: None,
    };
    Ok((image, label, spec))
}

/// CutMix with a random box. The target fraction `r ~ Beta(1, 1)` sets every
/// edge to `round(n_axis · r^(1/3))`; the centre is a uniformly drawn voxel.
pub fn cutmix_pair<R: Rng + ?Sized>(
    a: &AnnotatedSample,
    b: &AnnotatedSample,
    rng: &mut R,
) -> Result<(Volume3D, SoftLabelMask, CutMixSpec)> {
    check_pair(a, b)?;
    let dims = b.shape().dims();
    // Beta(1, 1) is the standard uniform
    let r: f64 = rng.random::<f64>();
    let scale = r.cbrt();
    let mut origin = [0usize; 3];
    let mut extent = [0usize; 3];
    for axis in 0..3 {
        let n = dims[axis];
        let edge = ((n as f64) * scale).round() as usize;
        let center = rng.random_range(0..n);
        // signed lower corner, then clipped
        let lo = center as i64 - (edge / 2) as i64;
        let hi = lo + edge as i64;
        let lo_c = lo.clamp(0, n as i64) as usize;
        let hi_c = hi.clamp(0, n as i64) as usize;
        origin[axis] = lo_c;
        extent[axis] = hi_c - lo_c;
    }
    let (image, label, mut spec) = cutmix_with_box(a, b, origin, extent)?;
    spec.target_fraction = r;
    Ok((image, label, spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{GridShape, Spacing};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(id: &str, shape: GridShape, img: f32, lbl: u8) -> AnnotatedSample {
        let s = Spacing::isotropic();
        AnnotatedSample::new(
            id,
            Volume3D::filled(shape, s, img).unwrap(),
            LabelMask::new(shape, s, vec![lbl; shape.len()]).unwrap(),
        )
        .unwrap()
    }

    fn random_sample(rng: &mut impl Rng, id: &str, shape: GridShape) -> AnnotatedSample {
        let s = Spacing::isotropic();
        AnnotatedSample::new(
            id,
            Volume3D::from_fn(shape, s, |_, _, _| rng.random_range(-50.0..50.0)).unwrap(),
            LabelMask::from_fn(shape, s, |_, _, _| rng.random_bool(0.3)),
        )
        .unwrap()
    }

    #[test]
    fn mixup_identity_and_mean() {
        let shape = GridShape::cube(2).unwrap();
        let a = sample("a", shape, 10.0, 1);
        let b = sample("b", shape, 20.0, 0);
        let (img, lbl) = mixup_with_lambda(&a, &b, 1.0).unwrap();
        assert_eq!(img.data(), a.image().data());
        assert!(lbl.data().iter().all(|&v| v == 1.0));
        let (img, _) = mixup_with_lambda(&a, &b, 0.0).unwrap();
        assert_eq!(img.data(), b.image().data());
        let (img, _) = mixup_with_lambda(&a, &b, 0.5).unwrap();
        assert!(img.data().iter().all(|&v| v == 15.0));
        let (_, lbl) = mixup_with_lambda(&a, &b, 0.3).unwrap();
        assert!(lbl.data().iter().all(|&v| v == 0.3f32));
    }

    #[test]
    fn mixup_rejects_bad_inputs() {
        let a = sample("a", GridShape::cube(2).unwrap(), 0.0, 0);
        let b = sample("b", GridShape::cube(3).unwrap(), 0.0, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(mixup_pair(&a, &b, 0.2, &mut rng), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(mixup_pair(&a, &a, 0.0, &mut rng), Err(Error::Config(_))));
        assert!(mixup_with_lambda(&a, &a, 1.5).is_err());
    }

    #[test]
    fn mixup_blend_within_tolerance() {
        let shape = GridShape::cube(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a = random_sample(&mut rng, "a", shape);
            let b = random_sample(&mut rng, "b", shape);
            let (img, lbl, spec) = mixup_pair(&a, &b, DEFAULT_MIXUP_ALPHA, &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&spec.lambda));
            for i in 0..shape.len() {
                let expected = spec.lambda * a.image().data()[i] as f64
                    + (1.0 - spec.lambda) * b.image().data()[i] as f64;
                let got = img.data()[i] as f64;
                assert!((got - expected).abs() <= 1e-6 * expected.abs().max(1.0));
                assert!((0.0..=1.0).contains(&lbl.data()[i]));
            }
        }
    }

    #[test]
    fn mixup_seeded_is_deterministic() {
        let shape = GridShape::cube(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_sample(&mut rng, "a", shape);
        let b = random_sample(&mut rng, "b", shape);
        let run = || mixup_pair(&a, &b, 0.4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(run(), run());
    }

    #[test]
    fn full_box_is_identity() {
        let shape = GridShape::new(3, 4, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_sample(&mut rng, "a", shape);
        let b = random_sample(&mut rng, "b", shape);
        let (img, lbl, spec) = cutmix_with_box(&a, &b, [0, 0, 0], [3, 4, 5]).unwrap();
        assert_eq!(spec.lambda_eff, 1.0);
        assert_eq!(img.data(), a.image().data());
        let expected: Vec<f32> = a.label().data().iter().map(|&v| v as f32).collect();
        assert_eq!(lbl.data(), &expected[..]);
        // oversize box gets clipped to the grid
        let (_, _, spec) = cutmix_with_box(&a, &b, [1, 1, 1], [10, 10, 10]).unwrap();
        assert_eq!(spec.cube_extent, [2, 3, 4]);
        assert_eq!(spec.lambda_eff, 24.0 / 60.0);
    }

    #[test]
    fn two_voxel_box_on_2_cubed() {
        let shape = GridShape::cube(2).unwrap();
        let a = sample("a", shape, 1.0, 1);
        let b = sample("b", shape, 2.0, 0);
        let (img, lbl, spec) = cutmix_with_box(&a, &b, [0, 0, 0], [2, 1, 1]).unwrap();
        assert_eq!(spec.voxel_count(), 2);
        assert_eq!(spec.lambda_eff, 0.25);
        assert!(lbl.data().iter().all(|&v| v == 0.25));
        assert_eq!(&img.data()[..2], &[1.0, 1.0]);
        assert!(img.data()[2..].iter().all(|&v| v == 2.0));
    }

    #[test]
    fn random_boxes_follow_contract() {
        let shape = GridShape::new(9, 7, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let a = random_sample(&mut rng, "a", shape);
            let b = random_sample(&mut rng, "b", shape);
            let (img, lbl, spec) = cutmix_pair(&a, &b, &mut rng).unwrap();
            for ((o, e), n) in spec.cube_origin.iter().zip(spec.cube_extent).zip(shape.dims()) {
                assert!(o + e <= n);
            }
            let mut count = 0;
            for z in 0..shape.nz {
                for y in 0..shape.ny {
                    for x in 0..shape.nx {
                        let i = shape.index(x, y, z);
                        let c = [x, y, z];
                        let inside = (0..3).all(|k| {
                            c[k] >= spec.cube_origin[k] && c[k] < spec.cube_origin[k] + spec.cube_extent[k]
                        });
                        let src = if inside { a.image() } else { b.image() };
                        assert_eq!(img.data()[i].to_bits(), src.data()[i].to_bits());
                        count += inside as usize;
                    }
                }
            }
            assert_eq!(spec.lambda_eff, count as f64 / shape.len() as f64);
            assert!(lbl.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn empty_box_returns_background() {
        let shape = GridShape::cube(3).unwrap();
        let a = sample("a", shape, 1.0, 1);
        let b = sample("b", shape, 2.0, 0);
        let (img, lbl, spec) = cutmix_with_box(&a, &b, [1, 1, 1], [0, 2, 2]).unwrap();
        assert_eq!(spec.lambda_eff, 0.0);
        assert_eq!(img.data(), b.image().data());
        assert!(lbl.data().iter().all(|&v| v == 0.0));
    }
}
