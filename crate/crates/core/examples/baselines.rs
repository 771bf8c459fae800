//! Mixup and CutMix on the same pair, with their soft labels.
//!
//! cargo run --example baselines

use carvemix::baselines::{cutmix_pair, mixup_pair, mixup_with_lambda, DEFAULT_MIXUP_ALPHA};
use carvemix::synthetic::{phantom_roster, PhantomConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> carvemix::Result<()> {
    let samples = phantom_roster(&PhantomConfig::default(), 2, 0, 8);
    let (a, b) = (&samples[0], &samples[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    for _ in 0..3 {
        let (_, label, spec) = mixup_pair(a, b, DEFAULT_MIXUP_ALPHA, &mut rng)?;
        println!("mixup  λ = {:.3}, soft lesion mass {:.1}", spec.lambda, label.mass());
    }
    let (image, _) = mixup_with_lambda(a, b, 1.0)?;
    println!("mixup  λ = 1 returns a: {}", image.data() == a.image().data());

    for _ in 0..3 {
        let (_, label, spec) = cutmix_pair(a, b, &mut rng)?;
        println!(
            "cutmix box {:?} at {:?}, λ_eff = {:.4}, soft lesion mass {:.1}",
            spec.cube_extent,
            spec.cube_origin,
            spec.lambda_eff,
            label.mass()
        );
    }
    Ok(())
}
