//! Offline generation over a phantom roster: 1 vs 4 workers give the same
//! manifest, and the pool is topped up to a fixed size.
//!
//! cargo run --example generate_dataset

use carvemix::generator::{
    dataset_stats, generate_dataset, synthetic_count_for_pool, training_pool, GenerationConfig, Method, Roster,
};
use carvemix::synthetic::{phantom_roster, write_roster, PhantomConfig};
use carvemix::volume::GridShape;

fn main() -> carvemix::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let cfg = PhantomConfig {
        shape: GridShape::cube(24)?,
        ..PhantomConfig::default()
    };
    write_roster(dir.path(), &phantom_roster(&cfg, 10, 2, 1))?;
    let roster = Roster::from_dirs(&dir.path().join("images"), &dir.path().join("labels"))?;

    let synthetic = synthetic_count_for_pool(40, roster.len());
    let mut digests = Vec::new();
    for workers in [1, 4] {
        let mut config = GenerationConfig::new(Method::CarveMix, synthetic, 7, dir.path().join(format!("out{workers}")));
        config.workers = Some(workers);
        let manifest = generate_dataset(&config, &roster)?;
        digests.push(carvemix::generator::sha256_hex(manifest.to_jsonl().as_bytes()));
        if workers == 1 {
            let pool = training_pool(&roster, &manifest);
            let stats = dataset_stats(&manifest);
            let lambda = stats.methods["carvemix"].lambda.as_ref().expect("non-empty");
            println!("{} originals + {} synthetic = pool of {}", roster.len(), manifest.len(), pool.len());
            println!("λ mean {:.3}, fraction below zero {:.2}", lambda.mean, lambda.negative_fraction);
            for r in manifest.records.iter().take(3) {
                println!("  t={} {} -> {} λ={:.3} {}", r.t, r.donor_id, r.host_id, r.lambda, r.image);
            }
        }
    }
    println!("manifest digest 1 worker  {}", digests[0]);
    println!("manifest digest 4 workers {}", digests[1]);
    Ok(())
}
