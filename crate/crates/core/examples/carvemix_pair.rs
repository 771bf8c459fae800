//! One CarveMix sample from two phantoms, then a sweep of fixed thresholds.
//!
//! cargo run --example carvemix_pair

use carvemix::carve::{carve_roi, carvemix_pair, carvemix_pair_with, lambda_bounds};
use carvemix::distance::{signed_distance, DistanceUnits};
use carvemix::synthetic::{phantom_roster, PhantomConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> carvemix::Result<()> {
    let samples = phantom_roster(&PhantomConfig::default(), 2, 0, 3);
    let (donor, host) = (&samples[0], &samples[1]);
    println!("donor {} lesion {} voxels, host {} lesion {} voxels", donor.id(), donor.label().count(), host.id(), host.label().count());

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (_image, label, spec) = carvemix_pair(donor, host, &mut rng, DistanceUnits::Voxel)?;
    println!(
        "sampled λ = {:.3} in [{:.3}, {:.3}), ROI {} voxels, mixed lesion {} voxels",
        spec.lambda, spec.lambda_l, spec.lambda_u, spec.roi_voxels, label.count()
    );

    let field = signed_distance(donor.label(), DistanceUnits::Voxel)?;
    let (lo, hi) = lambda_bounds(field.d_min())?;
    for k in 0..=6 {
        let lambda = lo + (hi - lo) * k as f64 / 6.0;
        let roi = carve_roi(&field, lambda)?;
        println!("  λ = {lambda:6.3}: ROI {:5} voxels", roi.count());
    }

    // λ = 0 pastes exactly the donor lesion
    let (_, label, _) = carvemix_pair_with(donor, host, DistanceUnits::Voxel, |_| Ok(0.0))?;
    let union = (0..label.shape().len()).filter(|&i| donor.label().is_set(i) || host.label().is_set(i)).count();
    println!("λ = 0 gives {} lesion voxels (donor ∪ host = {union})", label.count());
    Ok(())
}
