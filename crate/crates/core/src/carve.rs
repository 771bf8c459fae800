//! CarveMix: carve a lesion-shaped region out of a donor sample and paste it
//! into a host sample.
//!
//! The region is the sublevel set `{D <= λ}` of the donor's signed distance
//! field. `λ` is drawn from an equal-weight mixture of `U[-|d_min|/2, 0)` and
//! `U[0, |d_min|)`, so the region ranges from a shrunken core of the lesion
//! to the lesion grown by its own depth. Both image and label inside the
//! region come from the donor and everything outside from the host.
//!
//! Lesions with several connected components are carved together from one
//! global distance field.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distance::{signed_distance, DistanceUnits, SignedDistanceField};
use crate::error::{Error, Result};
use crate::volume::{
    check_aligned, elementwise_mix, elementwise_mix_labels, AnnotatedSample, LabelMask, Volume3D,
};

/// Everything needed to reproduce one CarveMix draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarveSpec {
    pub lambda: f64,
    pub lambda_l: f64,
    pub lambda_u: f64,
    pub d_min: f64,
    pub units: DistanceUnits,
    pub rng_seed: Option<u64>,
    pub donor_id: String,
    pub host_id: String,
    /// Number of voxels in the carved region.
    pub roi_voxels: usize,
}

/// `(λ_l, λ_u) = (-|d_min|/2, |d_min|)`.
pub fn lambda_bounds(d_min: f64) -> Result<(f64, f64)> {
    if d_min.is_nan() || d_min >= 0.0 {
        return Err(Error::DegenerateLesion { d_min });
    }
    let depth = d_min.abs();
    Ok((-0.5 * depth, depth))
}

/// Draws a carve threshold. A fair coin picks the branch, then `λ` is
/// uniform on `[λ_l, 0)` or `[0, λ_u)`.
pub fn sample_lambda<R: Rng + ?Sized>(d_min: f64, rng: &mut R) -> Result<f64> {
    let (lo, hi) = lambda_bounds(d_min)?;
    let lambda = if rng.random_bool(0.5) {
        rng.random_range(0.0..hi)
    } else {
        rng.random_range(lo..0.0)
    };
    Ok(lambda)
}

/// Region of interest `{v : D[v] <= λ}`.
pub fn carve_roi(field: &SignedDistanceField, lambda: f64) -> Result<LabelMask> {
    if lambda.is_nan() {
        return Err(Error::EmptyRoi { lambda });
    }
    let roi = LabelMask::from_bools(
        field.shape(),
        field.spacing(),
        field.data().iter().map(|&d| d <= lambda),
    );
    if roi.is_empty() {
        return Err(Error::EmptyRoi { lambda });
    }
    Ok(roi)
}

/// Mixes donor into host with an explicit threshold on a precomputed donor
/// field. Returns the image, the label and the carved region.
pub fn carve_with_lambda(
    donor: &AnnotatedSample,
    host: &AnnotatedSample,
    field: &SignedDistanceField,
    lambda: f64,
) -> Result<(Volume3D, LabelMask, LabelMask)> {
    check_aligned(
        (donor.shape(), donor.spacing()),
        (host.shape(), host.spacing()),
    )?;
    if field.shape() != donor.shape() {
        return Err(Error::ShapeMismatch {
            left: field.shape(),
            right: donor.shape(),
        });
    }
    let roi = carve_roi(field, lambda)?;
    let image = elementwise_mix(donor.image(), host.image(), &roi)?;
    let label = elementwise_mix_labels(donor.label(), host.label(), &roi)?;
    Ok((image, label, roi))
}

/// One CarveMix sample from `donor` (carved) and `host` (background).
pub fn carvemix_pair<R: Rng + ?Sized>(
    donor: &AnnotatedSample,
    host: &AnnotatedSample,
    rng: &mut R,
    units: DistanceUnits,
) -> Result<(Volume3D, LabelMask, CarveSpec)> {
    carvemix_pair_with(donor, host, units, |d_min| sample_lambda(d_min, rng))
}

/// As [`carvemix_pair`], but `choose_lambda` receives `d_min` and returns the
/// threshold. Used for fixed thresholds in debugging.
pub fn carvemix_pair_with(
    donor: &AnnotatedSample,
    host: &AnnotatedSample,
    units: DistanceUnits,
    choose_lambda: impl FnOnce(f64) -> Result<f64>,
) -> Result<(Volume3D, LabelMask, CarveSpec)> {
    check_aligned(
        (donor.shape(), donor.spacing()),
        (host.shape(), host.spacing()),
    )?;
    let field = signed_distance(donor.label(), units)?;
    let d_min = field.d_min();
    let (lambda_l, lambda_u) = lambda_bounds(d_min)?;
    let lambda = choose_lambda(d_min)?;
    let (image, label, roi) = carve_with_lambda(donor, host, &field, lambda)?;
    let spec = CarveSpec {
        lambda,
        lambda_l,
        lambda_u,
        d_min,
        units,
        rng_seed: None,
        donor_id: donor.id().to_owned(),
        host_id: host.id().to_owned(),
        roi_voxels: roi.count(),
    };
    Ok((image, label, spec))
}
