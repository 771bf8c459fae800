//! Grid data model shared by every other module.
//!
//! All grids are dense and stored with x varying fastest and z slowest, so a
//! voxel `(x, y, z)` lives at `x + nx * (y + ny * z)`. Images, binary masks
//! and soft masks are immutable once built; the mixing operations return new
//! grids.
//!
//! Paired images are only required to share a shape and spacing. Nothing
//! here checks that they are co-registered; that is the job of upstream
//! preprocessing.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when comparing voxel spacings.
pub const SPACING_REL_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridShape {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl GridShape {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::InvalidGrid(format!(
                "every axis needs at least one voxel, got {nx}x{ny}x{nz}"
            )));
        }
        let len = nx
            .checked_mul(ny)
            .and_then(|v| v.checked_mul(nz))
            .filter(|&v| v <= isize::MAX as usize);
        if len.is_none() {
            return Err(Error::InvalidGrid(format!(
                "{nx}x{ny}x{nz} voxels overflow the addressable range"
            )));
        }
        Ok(GridShape { nx, ny, nz })
    }

    pub fn cube(n: usize) -> Result<Self> {
        Self::new(n, n, n)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Always false; a valid shape has at least one voxel.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny && z < self.nz);
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.nx;
        let rest = index / self.nx;
        [x, rest % self.ny, rest / self.ny]
    }
}

impl fmt::Display for GridShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// Physical voxel edge lengths in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

impl Spacing {
    pub fn new(sx: f64, sy: f64, sz: f64) -> Result<Self> {
        for (axis, s) in [("x", sx), ("y", sy), ("z", sz)] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "spacing along {axis} must be finite and > 0, got {s}"
                )));
            }
        }
        Ok(Spacing { sx, sy, sz })
    }

    pub const fn isotropic() -> Self {
        Spacing {
            sx: 1.0,
            sy: 1.0,
            sz: 1.0,
        }
    }

    #[inline]
    pub fn as_array(&self) -> [f64; 3] {
        [self.sx, self.sy, self.sz]
    }

    pub fn approx_eq(&self, other: &Spacing) -> bool {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .all(|(&a, b)| (a - b).abs() <= SPACING_REL_TOL * a.abs().max(b.abs()))
    }
}

impl Default for Spacing {
    fn default() -> Self {
        Spacing::isotropic()
    }
}

/// Header payload carried from an input file through to the outputs derived
/// from it. Only the orientation fields are kept; dimensions, spacing and
/// datatype are always taken from the grid being written.
#[derive(Debug, Clone, PartialEq)]
pub struct HeaderMeta {
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub qfac: f32,
    pub srow_x: [f32; 4],
    pub srow_y: [f32; 4],
    pub srow_z: [f32; 4],
    pub xyzt_units: u8,
    pub descrip: [u8; 80],
}

impl Default for HeaderMeta {
    fn default() -> Self {
        HeaderMeta {
            qform_code: 0,
            sform_code: 0,
            quatern: [0.0; 3],
            qoffset: [0.0; 3],
            qfac: 1.0,
            srow_x: [1.0, 0.0, 0.0, 0.0],
            srow_y: [0.0, 1.0, 0.0, 0.0],
            srow_z: [0.0, 0.0, 1.0, 0.0],
            // NIFTI_UNITS_MM
            xyzt_units: 2,
            descrip: [0; 80],
        }
    }
}

fn check_len(shape: GridShape, len: usize) -> Result<()> {
    if len != shape.len() {
        return Err(Error::InvalidData(format!(
            "grid {shape} needs {} voxels, got {len}",
            shape.len()
        )));
    }
    Ok(())
}

/// Fails unless both grids have the same shape and (within tolerance) spacing.
pub fn check_aligned(
    left: (GridShape, Spacing),
    right: (GridShape, Spacing),
) -> Result<()> {
    if left.0 != right.0 {
        return Err(Error::ShapeMismatch {
            left: left.0,
            right: right.0,
        });
    }
    if !left.1.approx_eq(&right.1) {
        return Err(Error::SpacingMismatch {
            left: left.1.as_array(),
            right: right.1.as_array(),
        });
    }
    Ok(())
}

/// Scalar intensity image.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    shape: GridShape,
    spacing: Spacing,
    data: Vec<f32>,
    meta: HeaderMeta,
}

impl Volume3D {
    pub fn new(shape: GridShape, spacing: Spacing, data: Vec<f32>) -> Result<Self> {
        check_len(shape, data.len())?;
        if let Some(i) = data.iter().position(|v| v.is_nan()) {
            return Err(Error::InvalidData(format!(
                "NaN intensity at voxel {:?}",
                shape.coords(i)
            )));
        }
        Ok(Volume3D {
            shape,
            spacing,
            data,
            meta: HeaderMeta::default(),
        })
    }

    pub fn filled(shape: GridShape, spacing: Spacing, value: f32) -> Result<Self> {
        Self::new(shape, spacing, vec![value; shape.len()])
    }

    pub fn from_fn(
        shape: GridShape,
        spacing: Spacing,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(shape.len());
        for z in 0..shape.nz {
            for y in 0..shape.ny {
                for x in 0..shape.nx {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(shape, spacing, data)
    }

    pub fn with_meta(mut self, meta: HeaderMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn meta(&self) -> &HeaderMeta {
        &self.meta
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.shape.index(x, y, z)]
    }
}

/// Binary annotation, 1 = lesion and 0 = background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    shape: GridShape,
    spacing: Spacing,
    data: Vec<u8>,
    meta: HeaderMeta,
}

impl LabelMask {
    pub fn new(shape: GridShape, spacing: Spacing, data: Vec<u8>) -> Result<Self> {
        check_len(shape, data.len())?;
        if let Some(i) = data.iter().position(|&v| v > 1) {
            return Err(Error::InvalidData(format!(
                "label value {} at voxel {:?} is not 0 or 1",
                data[i],
                shape.coords(i)
            )));
        }
        Ok(LabelMask {
            shape,
            spacing,
            data,
            meta: HeaderMeta::default(),
        })
    }

    pub fn zeros(shape: GridShape, spacing: Spacing) -> Self {
        LabelMask {
            shape,
            spacing,
            data: vec![0; shape.len()],
            meta: HeaderMeta::default(),
        }
    }

    pub fn from_fn(
        shape: GridShape,
        spacing: Spacing,
        mut f: impl FnMut(usize, usize, usize) -> bool,
    ) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for z in 0..shape.nz {
            for y in 0..shape.ny {
                for x in 0..shape.nx {
                    data.push(f(x, y, z) as u8);
                }
            }
        }
        LabelMask {
            shape,
            spacing,
            data,
            meta: HeaderMeta::default(),
        }
    }

    pub(crate) fn from_bools(shape: GridShape, spacing: Spacing, bits: impl Iterator<Item = bool>) -> Self {
        let data: Vec<u8> = bits.map(u8::from).collect();
        debug_assert_eq!(data.len(), shape.len());
        LabelMask {
            shape,
            spacing,
            data,
            meta: HeaderMeta::default(),
        }
    }

    pub fn with_meta(mut self, meta: HeaderMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn meta(&self) -> &HeaderMeta {
        &self.meta
    }

    #[inline]
    pub fn is_set(&self, index: usize) -> bool {
        self.data[index] != 0
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.is_set(self.shape.index(x, y, z))
    }

    /// Number of lesion voxels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v != 0)
    }

    pub fn is_full(&self) -> bool {
        self.data.iter().all(|&v| v != 0)
    }

    /// Voxelwise complement.
    pub fn complement(&self) -> LabelMask {
        LabelMask {
            shape: self.shape,
            spacing: self.spacing,
            data: self.data.iter().map(|&v| 1 - v).collect(),
            meta: self.meta.clone(),
        }
    }

    /// True when every voxel set here is also set in `other`.
    pub fn is_subset_of(&self, other: &LabelMask) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(&a, &b)| a <= b)
    }

    pub fn to_volume(&self) -> Volume3D {
        Volume3D {
            shape: self.shape,
            spacing: self.spacing,
            data: self.data.iter().map(|&v| v as f32).collect(),
            meta: self.meta.clone(),
        }
    }
}

/// Fractional annotation produced by the Mixup and CutMix baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelMask {
    shape: GridShape,
    spacing: Spacing,
    data: Vec<f32>,
    meta: HeaderMeta,
}

impl SoftLabelMask {
    pub fn new(shape: GridShape, spacing: Spacing, data: Vec<f32>) -> Result<Self> {
        check_len(shape, data.len())?;
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidData(format!(
                "soft label {} at voxel {:?} is outside [0, 1]",
                data[i],
                shape.coords(i)
            )));
        }
        Ok(SoftLabelMask {
            shape,
            spacing,
            data,
            meta: HeaderMeta::default(),
        })
    }

    pub fn with_meta(mut self, meta: HeaderMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn meta(&self) -> &HeaderMeta {
        &self.meta
    }

    /// Sum of the soft label values, i.e. the expected lesion volume in voxels.
    pub fn mass(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }
}

impl From<&LabelMask> for SoftLabelMask {
    fn from(mask: &LabelMask) -> Self {
        SoftLabelMask {
            shape: mask.shape,
            spacing: mask.spacing,
            data: mask.data.iter().map(|&v| v as f32).collect(),
            meta: mask.meta.clone(),
        }
    }
}

/// An image together with its annotation and a stable identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedSample {
    id: String,
    image: Volume3D,
    label: LabelMask,
}

impl AnnotatedSample {
    pub fn new(id: impl Into<String>, image: Volume3D, label: LabelMask) -> Result<Self> {
        check_aligned(
            (image.shape, image.spacing),
            (label.shape, label.spacing),
        )?;
        Ok(AnnotatedSample {
            id: id.into(),
            image,
            label,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn image(&self) -> &Volume3D {
        &self.image
    }

    pub fn label(&self) -> &LabelMask {
        &self.label
    }

    pub fn shape(&self) -> GridShape {
        self.image.shape
    }

    pub fn spacing(&self) -> Spacing {
        self.image.spacing
    }

    pub fn into_parts(self) -> (String, Volume3D, LabelMask) {
        (self.id, self.image, self.label)
    }
}

fn check_mix_inputs(
    a: (GridShape, Spacing),
    b: (GridShape, Spacing),
    mask: (GridShape, Spacing),
) -> Result<()> {
    check_aligned(a, b)?;
    check_aligned(b, mask)
}

/// `a` where `mask` is set, `b` elsewhere. Spacing and header come from `b`.
pub fn elementwise_mix(a: &Volume3D, b: &Volume3D, mask: &LabelMask) -> Result<Volume3D> {
    check_mix_inputs(
        (a.shape, a.spacing),
        (b.shape, b.spacing),
        (mask.shape, mask.spacing),
    )?;
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .zip(&mask.data)
        .map(|((&va, &vb), &m)| if m != 0 { va } else { vb })
        .collect();
    Ok(Volume3D {
        shape: b.shape,
        spacing: b.spacing,
        data,
        meta: b.meta.clone(),
    })
}

/// Label counterpart of [`elementwise_mix`]; the result stays binary.
pub fn elementwise_mix_labels(a: &LabelMask, b: &LabelMask, mask: &LabelMask) -> Result<LabelMask> {
    check_mix_inputs(
        (a.shape, a.spacing),
        (b.shape, b.spacing),
        (mask.shape, mask.spacing),
    )?;
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .zip(&mask.data)
        .map(|((&va, &vb), &m)| if m != 0 { va } else { vb })
        .collect();
    Ok(LabelMask {
        shape: b.shape,
        spacing: b.spacing,
        data,
        meta: b.meta.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(n: usize) -> GridShape {
        GridShape::new(n, 1, 1).unwrap()
    }

    fn vol(data: Vec<f32>) -> Volume3D {
        Volume3D::new(line(data.len()), Spacing::isotropic(), data).unwrap()
    }

    fn mask(data: Vec<u8>) -> LabelMask {
        LabelMask::new(line(data.len()), Spacing::isotropic(), data).unwrap()
    }

    #[test]
    fn shape_rejects_zero_axis_and_overflow() {
        assert!(GridShape::new(0, 1, 1).is_err());
        assert!(GridShape::new(usize::MAX, 2, 1).is_err());
        let s = GridShape::new(3, 4, 5).unwrap();
        assert_eq!(s.len(), 60);
        assert_eq!(s.coords(s.index(2, 3, 4)), [2, 3, 4]);
    }

    #[test]
    fn spacing_must_be_positive() {
        assert!(Spacing::new(1.0, 0.0, 1.0).is_err());
        assert!(Spacing::new(1.0, 1.0, f64::NAN).is_err());
        assert!(Spacing::new(0.96, 0.96, 6.5).is_ok());
    }

    #[test]
    fn volume_rejects_nan_and_wrong_length() {
        assert!(Volume3D::new(line(2), Spacing::isotropic(), vec![1.0, f32::NAN]).is_err());
        assert!(Volume3D::new(line(3), Spacing::isotropic(), vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn label_rejects_non_binary() {
        assert!(LabelMask::new(line(2), Spacing::isotropic(), vec![0, 2]).is_err());
    }

    #[test]
    fn soft_label_range() {
        assert!(SoftLabelMask::new(line(2), Spacing::isotropic(), vec![0.0, 1.5]).is_err());
        assert!(SoftLabelMask::new(line(2), Spacing::isotropic(), vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn annotated_sample_requires_alignment() {
        let img = vol(vec![0.0; 4]);
        let lbl = LabelMask::zeros(line(3), Spacing::isotropic());
        assert!(matches!(
            AnnotatedSample::new("a", img.clone(), lbl),
            Err(Error::ShapeMismatch { .. })
        ));
        let lbl = LabelMask::zeros(line(4), Spacing::new(1.0, 1.0, 2.0).unwrap());
        assert!(matches!(
            AnnotatedSample::new("a", img, lbl),
            Err(Error::SpacingMismatch { .. })
        ));
    }

    #[test]
    fn mix_substitutes_by_mask() {
        let out = elementwise_mix(&vol(vec![10.0, 20.0]), &vol(vec![1.0, 2.0]), &mask(vec![1, 0])).unwrap();
        assert_eq!(out.data(), &[10.0, 2.0]);
    }

    #[test]
    fn mix_identity_cases() {
        let a = vol(vec![1.5, -2.0, 3.25]);
        let b = vol(vec![7.0, 8.0, 9.0]);
        let ones = mask(vec![1, 1, 1]);
        let zeros = mask(vec![0, 0, 0]);
        assert_eq!(elementwise_mix(&a, &b, &ones).unwrap().data(), a.data());
        assert_eq!(elementwise_mix(&a, &b, &zeros).unwrap().data(), b.data());
    }

    #[test]
    fn mix_checks_shape_and_spacing() {
        let a = vol(vec![0.0; 2]);
        let b = vol(vec![0.0; 3]);
        assert!(matches!(
            elementwise_mix(&a, &b, &mask(vec![0, 0])),
            Err(Error::ShapeMismatch { .. })
        ));
        let c = Volume3D::new(line(2), Spacing::new(1.0, 1.0, 1.001).unwrap(), vec![0.0; 2]).unwrap();
        assert!(matches!(
            elementwise_mix(&a, &c, &mask(vec![0, 0])),
            Err(Error::SpacingMismatch { .. })
        ));
        // within 1e-5 relative is accepted
        let d = Volume3D::new(line(2), Spacing::new(1.0, 1.0, 1.000001).unwrap(), vec![0.0; 2]).unwrap();
        assert!(elementwise_mix(&a, &d, &mask(vec![0, 0])).is_ok());
    }

    #[test]
    fn mix_inherits_meta_from_background() {
        let meta = HeaderMeta {
            sform_code: 1,
            ..HeaderMeta::default()
        };
        let a = vol(vec![1.0]);
        let b = vol(vec![2.0]).with_meta(meta.clone());
        let out = elementwise_mix(&a, &b, &mask(vec![1])).unwrap();
        assert_eq!(out.meta(), &meta);
    }

    #[test]
    fn label_mix_example() {
        let out = elementwise_mix_labels(&mask(vec![1, 0]), &mask(vec![0, 1]), &mask(vec![1, 0])).unwrap();
        assert_eq!(out.data(), &[1, 1]);
    }

    #[test]
    fn carving_exactly_the_lesion_is_union() {
        // brute-force enumeration on random 4^3 masks
        let shape = GridShape::cube(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = LabelMask::from_fn(shape, Spacing::isotropic(), |_, _, _| rng.random_bool(0.4));
            let b = LabelMask::from_fn(shape, Spacing::isotropic(), |_, _, _| rng.random_bool(0.4));
            let out = elementwise_mix_labels(&a, &b, &a).unwrap();
            for z in 0..4 {
                for y in 0..4 {
                    for x in 0..4 {
                        let expected = a.get(x, y, z) || (b.get(x, y, z) && !a.get(x, y, z));
                        assert_eq!(out.get(x, y, z), expected);
                    }
                }
            }
        }
    }

    fn arb_triplet() -> impl Strategy<Value = (Vec<f32>, Vec<f32>, Vec<u8>, Vec<u8>)> {
        (1usize..64).prop_flat_map(|n| {
            (
                prop::collection::vec(-1e6f32..1e6, n),
                prop::collection::vec(-1e6f32..1e6, n),
                prop::collection::vec(0u8..2, n),
                prop::collection::vec(0u8..2, n),
            )
        })
    }

    proptest! {
        #[test]
        fn mix_picks_one_source_and_is_symmetric((a, b, m, l) in arb_triplet()) {
            let (va, vb, mm) = (vol(a.clone()), vol(b.clone()), mask(m.clone()));
            let out = elementwise_mix(&va, &vb, &mm).unwrap();
            for (i, &v) in out.data().iter().enumerate() {
                prop_assert!(v.to_bits() == a[i].to_bits() || v.to_bits() == b[i].to_bits());
            }
            let swapped = elementwise_mix(&vb, &va, &mm.complement()).unwrap();
            let bits = |v: &Volume3D| v.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&out), bits(&swapped));

            let labels = elementwise_mix_labels(&mask(l.clone()), &mm.complement(), &mm).unwrap();
            prop_assert!(labels.data().iter().all(|&v| v <= 1));
            // a == b gives a for any mask
            let same = elementwise_mix_labels(&mask(l.clone()), &mask(l.clone()), &mm).unwrap();
            prop_assert_eq!(same.data(), &l[..]);
        }
    }
}
