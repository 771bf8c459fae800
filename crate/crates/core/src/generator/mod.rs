//! Offline batch generation of synthetic annotated samples.
//!
//! Sample `t` (1-based) is a pure function of the master seed, `t` and the
//! id-sorted roster: its RNG is seeded with the `t`-th output of a SplitMix64
//! stream started at the master seed, and that RNG picks the donor and host
//! and then drives the augmentation. Samples are computed on a worker pool
//! and collected in index order, so results do not depend on worker count
//! or scheduling.
//!
//! Donor and host are drawn independently and uniformly, so `donor == host`
//! happens with probability `1/N` unless [`GenerationConfig::allow_same_pair`]
//! is off. For CarveMix a donor without a usable lesion is re-drawn up to
//! `N` times, after which one is drawn uniformly from the eligible donors.

mod manifest;
mod roster;
mod stats;

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{cutmix_pair, mixup_pair, DEFAULT_MIXUP_ALPHA};
use crate::carve::carvemix_pair;
use crate::distance::DistanceUnits;
use crate::error::{Error, Result};
use crate::nifti;

pub use manifest::{sha256_hex, DigestMismatch, GenerationManifest, SampleRecord};
pub use roster::{validate_roster, Roster, RosterEntry, SampleValidation, ValidationReport};
pub use stats::{dataset_stats, Bin, DatasetStats, Histogram, MethodStats, HISTOGRAM_BINS};

/// Env var read for the default worker count.
pub const WORKERS_ENV: &str = "CARVEMIX_WORKERS";
pub const IMAGES_SUBDIR: &str = "images";
pub const LABELS_SUBDIR: &str = "labels";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    CarveMix,
    Mixup,
    CutMix,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::CarveMix => "carvemix",
            Method::Mixup => "mixup",
            Method::CutMix => "cutmix",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "carvemix" => Ok(Method::CarveMix),
            "mixup" => Ok(Method::Mixup),
            "cutmix" => Ok(Method::CutMix),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub method: Method,
    /// Number of synthetic samples to produce.
    pub count: usize,
    pub master_seed: u64,
    /// Distance units for CarveMix.
    pub units: DistanceUnits,
    /// Beta concentration, Mixup only. `None` means the default.
    pub alpha: Option<f64>,
    pub output_dir: PathBuf,
    /// Worker pool size; `None` uses [`default_workers`].
    pub workers: Option<usize>,
    pub allow_same_pair: bool,
    /// Write `.nii.gz` (default) rather than `.nii`.
    pub gzip: bool,
}

impl GenerationConfig {
    pub fn new(method: Method, count: usize, master_seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        GenerationConfig {
            method,
            count,
            master_seed,
            units: DistanceUnits::Voxel,
            alpha: None,
            output_dir: output_dir.into(),
            workers: None,
            allow_same_pair: true,
            gzip: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(alpha) = self.alpha {
            if self.method != Method::Mixup {
                return Err(Error::Config(format!("alpha only applies to mixup, not {}", self.method)));
            }
            if !(alpha.is_finite() && alpha > 0.0) {
                return Err(Error::Config(format!("alpha must be > 0, got {alpha}")));
            }
        }
        if self.units != DistanceUnits::Voxel && self.method != Method::CarveMix {
            return Err(Error::Config(format!("units only apply to carvemix, not {}", self.method)));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(DEFAULT_MIXUP_ALPHA)
    }

    fn extension(&self) -> &'static str {
        if self.gzip {
            "nii.gz"
        } else {
            "nii"
        }
    }
}

/// Worker count from [`WORKERS_ENV`], else the number of logical cores.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// The `t`-th SplitMix64 output for state `master_seed`.
pub fn sample_seed(master_seed: u64, t: u64) -> u64 {
    let mut z = master_seed.wrapping_add(t.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws `(donor, host)` roster indices for one sample.
pub fn select_pair<R: Rng + ?Sized>(
    roster: &Roster,
    method: Method,
    allow_same_pair: bool,
    rng: &mut R,
) -> Result<(usize, usize)> {
    let n = roster.len();
    if n == 0 {
        return Err(Error::Config("roster is empty".into()));
    }
    let entries = roster.entries();
    let donor = if method == Method::CarveMix {
        let mut pick = None;
        for _ in 0..n {
            let i = rng.random_range(0..n);
            if entries[i].is_eligible_donor() {
                pick = Some(i);
                break;
            }
        }
        match pick {
            Some(i) => i,
            None => {
                let eligible: Vec<usize> = (0..n).filter(|&i| entries[i].is_eligible_donor()).collect();
                if eligible.is_empty() {
                    return Err(Error::NoEligibleDonor);
                }
                eligible[rng.random_range(0..eligible.len())]
            }
        }
    } else {
        rng.random_range(0..n)
    };
    let mut host = rng.random_range(0..n);
    if !allow_same_pair {
        if n < 2 {
            return Err(Error::Config("distinct pairs need at least two samples".into()));
        }
        while host == donor {
            host = rng.random_range(0..n);
        }
    }
    Ok((donor, host))
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn generate_one(config: &GenerationConfig, roster: &Roster, t: usize) -> Result<SampleRecord> {
    let seed = sample_seed(config.master_seed, t as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (i, j) = select_pair(roster, config.method, config.allow_same_pair, &mut rng)?;
    let donor = roster.load(i)?;
    let host = roster.load(j)?;

    let name = format!("{}_{t:05}.{}", config.method, config.extension());
    let image_rel = format!("{IMAGES_SUBDIR}/{name}");
    let label_rel = format!("{LABELS_SUBDIR}/{name}");

    let mut record = SampleRecord {
        t,
        method: config.method,
        donor_id: donor.id().to_owned(),
        host_id: host.id().to_owned(),
        lambda: 0.0,
        lambda_l: None,
        lambda_u: None,
        d_min: None,
        cube_origin: None,
        cube_extent: None,
        seed,
        image: image_rel,
        label: label_rel,
        image_sha256: String::new(),
        label_sha256: String::new(),
        lesion_voxels: 0.0,
    };

    let (image_bytes, label_bytes) = match config.method {
        Method::CarveMix => {
            let (image, label, spec) = carvemix_pair(&donor, &host, &mut rng, config.units)?;
            record.lambda = spec.lambda;
            record.lambda_l = Some(spec.lambda_l);
            record.lambda_u = Some(spec.lambda_u);
            record.d_min = Some(spec.d_min);
            record.lesion_voxels = label.count() as f64;
            (
                nifti::volume_file_bytes(&image, nifti::NiftiDataType::Float32, config.gzip)?,
                nifti::mask_file_bytes(&label, config.gzip)?,
            )
        }
        Method::Mixup => {
            let (image, label, spec) = mixup_pair(&donor, &host, config.alpha(), &mut rng)?;
            record.lambda = spec.lambda;
            record.lesion_voxels = label.mass();
            (
                nifti::volume_file_bytes(&image, nifti::NiftiDataType::Float32, config.gzip)?,
                nifti::soft_mask_file_bytes(&label, config.gzip)?,
            )
        }
        Method::CutMix => {
            let (image, label, spec) = cutmix_pair(&donor, &host, &mut rng)?;
            record.lambda = spec.lambda_eff;
            record.cube_origin = Some(spec.cube_origin);
            record.cube_extent = Some(spec.cube_extent);
            record.lesion_voxels = label.mass();
            (
                nifti::volume_file_bytes(&image, nifti::NiftiDataType::Float32, config.gzip)?,
                nifti::soft_mask_file_bytes(&label, config.gzip)?,
            )
        }
    };
    record.image_sha256 = sha256_hex(&image_bytes);
    record.label_sha256 = sha256_hex(&label_bytes);
    write_output(&config.output_dir.join(&record.image), &image_bytes)?;
    write_output(&config.output_dir.join(&record.label), &label_bytes)?;
    Ok(record)
}

/// Generates `config.count` samples into `config.output_dir/{images,labels}`
/// and returns their manifest. Writing the manifest itself is left to the
/// caller. With a count of zero nothing is touched on disk.
pub fn generate_dataset(config: &GenerationConfig, roster: &Roster) -> Result<GenerationManifest> {
    config.validate()?;
    if config.count == 0 {
        return Ok(GenerationManifest::default());
    }
    if roster.is_empty() {
        return Err(Error::Config("roster is empty".into()));
    }
    if config.method == Method::CarveMix && !roster.entries().iter().any(RosterEntry::is_eligible_donor) {
        return Err(Error::NoEligibleDonor);
    }
    if !config.allow_same_pair && roster.len() < 2 {
        return Err(Error::Config("distinct pairs need at least two samples".into()));
    }
    for sub in [IMAGES_SUBDIR, LABELS_SUBDIR] {
        let dir = config.output_dir.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    let workers = config.workers.unwrap_or_else(default_workers);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    let records = pool.install(|| {
        (1..=config.count)
            .into_par_iter()
            .map(|t| generate_one(config, roster, t))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(GenerationManifest { records })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PoolEntry {
    Original { id: String },
    Synthetic { t: usize, image: String, label: String },
}

/// Originals followed by synthetic samples: the full training set.
pub fn training_pool(roster: &Roster, manifest: &GenerationManifest) -> Vec<PoolEntry> {
    roster
        .ids()
        .map(|id| PoolEntry::Original { id: id.to_owned() })
        .chain(manifest.records.iter().map(|r| PoolEntry::Synthetic {
            t: r.t,
            image: r.image.clone(),
            label: r.label.clone(),
        }))
        .collect()
}

/// Number of synthetic samples needed to bring `originals` up to `pool_size`.
pub fn synthetic_count_for_pool(pool_size: usize, originals: usize) -> usize {
    pool_size.saturating_sub(originals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{phantom_roster, PhantomConfig};
    use crate::volume::{AnnotatedSample, GridShape, LabelMask, Spacing, Volume3D};
    use tempfile::tempdir;

    fn small_roster(n: usize, empty: usize) -> Roster {
        let cfg = PhantomConfig {
            shape: GridShape::cube(10).unwrap(),
            ..PhantomConfig::default()
        };
        Roster::from_samples(phantom_roster(&cfg, n, empty, 99)).unwrap()
    }

    #[test]
    fn seeds_are_counter_based() {
        // reference SplitMix64 stream: seed 0 produces this first output
        assert_eq!(sample_seed(0, 1), 0xE220_A839_7B1D_CDAF);
        let mut seen = std::collections::HashSet::new();
        for t in 1..1000 {
            assert!(seen.insert(sample_seed(7, t)));
        }
    }

    #[test]
    fn method_names_roundtrip() {
        for m in [Method::CarveMix, Method::Mixup, Method::CutMix] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("fancy".parse::<Method>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = GenerationConfig::new(Method::CarveMix, 1, 0, "/tmp/x");
        assert!(c.validate().is_ok());
        c.alpha = Some(0.4);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.method = Method::Mixup;
        assert!(c.validate().is_ok());
        c.alpha = Some(-1.0);
        assert!(c.validate().is_err());
        c.alpha = None;
        c.units = DistanceUnits::Millimeters;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_count_writes_nothing() {
        let dir = tempdir().unwrap();
        let out = dir.path().join("out");
        let c = GenerationConfig::new(Method::CarveMix, 0, 1, &out);
        let m = generate_dataset(&c, &Roster::default()).unwrap();
        assert!(m.is_empty());
        assert!(!out.exists());
    }

    #[test]
    fn no_eligible_donor() {
        let dir = tempdir().unwrap();
        let roster = small_roster(3, 3);
        let c = GenerationConfig::new(Method::CarveMix, 2, 1, dir.path());
        assert!(matches!(generate_dataset(&c, &roster), Err(Error::NoEligibleDonor)));
        // the baselines do not need lesions
        let c = GenerationConfig::new(Method::Mixup, 2, 1, dir.path());
        assert_eq!(generate_dataset(&c, &roster).unwrap().len(), 2);
    }

    #[test]
    fn empty_donors_are_skipped() {
        let roster = small_roster(6, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let (i, _) = select_pair(&roster, Method::CarveMix, true, &mut rng).unwrap();
            assert!(roster.entries()[i].is_eligible_donor());
        }
    }

    #[test]
    fn distinct_pairs_when_requested() {
        let roster = small_roster(3, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let (i, j) = select_pair(&roster, Method::CarveMix, false, &mut rng).unwrap();
            assert_ne!(i, j);
        }
        let one = small_roster(1, 0);
        assert!(select_pair(&one, Method::Mixup, false, &mut rng).is_err());
    }

    #[test]
    fn roster_order_does_not_matter() {
        let cfg = PhantomConfig {
            shape: GridShape::cube(8).unwrap(),
            ..PhantomConfig::default()
        };
        let samples = phantom_roster(&cfg, 5, 1, 5);
        let mut reversed = samples.clone();
        reversed.reverse();
        let a = Roster::from_samples(samples).unwrap();
        let b = Roster::from_samples(reversed).unwrap();
        assert_eq!(a.ids().collect::<Vec<_>>(), b.ids().collect::<Vec<_>>());
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        let m1 = generate_dataset(&GenerationConfig::new(Method::CarveMix, 6, 9, d1.path()), &a).unwrap();
        let m2 = generate_dataset(&GenerationConfig::new(Method::CarveMix, 6, 9, d2.path()), &b).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let s = GridShape::cube(2).unwrap();
        let mk = || {
            AnnotatedSample::new(
                "dup",
                Volume3D::filled(s, Spacing::isotropic(), 0.0).unwrap(),
                LabelMask::zeros(s, Spacing::isotropic()),
            )
            .unwrap()
        };
        assert!(Roster::from_samples([mk(), mk()]).is_err());
    }

    #[test]
    fn every_method_writes_verifiable_outputs() {
        let roster = small_roster(4, 1);
        for method in [Method::CarveMix, Method::Mixup, Method::CutMix] {
            let dir = tempdir().unwrap();
            let mut c = GenerationConfig::new(method, 5, 11, dir.path());
            c.workers = Some(2);
            let m = generate_dataset(&c, &roster).unwrap();
            assert_eq!(m.len(), 5);
            assert_eq!(m.records.iter().map(|r| r.t).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
            assert!(m.verify(dir.path()).is_empty());
            let path = dir.path().join("manifest.jsonl");
            m.write_jsonl(&path).unwrap();
            assert_eq!(GenerationManifest::read_jsonl(&path).unwrap(), m);
            for r in &m.records {
                match method {
                    Method::CarveMix => {
                        let l = crate::nifti::read_mask(dir.path().join(&r.label)).unwrap();
                        assert_eq!(l.count() as f64, r.lesion_voxels);
                        assert!(r.lambda >= r.lambda_l.unwrap() && r.lambda < r.lambda_u.unwrap());
                    }
                    _ => assert!((0.0..=1.0).contains(&r.lambda)),
                }
            }
        }
    }

    #[test]
    fn tampered_output_is_detected() {
        let roster = small_roster(3, 0);
        let dir = tempdir().unwrap();
        let m = generate_dataset(&GenerationConfig::new(Method::CarveMix, 2, 1, dir.path()), &roster).unwrap();
        fs::write(dir.path().join(&m.records[0].image), b"junk").unwrap();
        let bad = m.verify(dir.path());
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].t, 1);
    }

    #[test]
    fn pool_bookkeeping() {
        let roster = small_roster(5, 0);
        let dir = tempdir().unwrap();
        let t = synthetic_count_for_pool(12, roster.len());
        let m = generate_dataset(&GenerationConfig::new(Method::CutMix, t, 1, dir.path()), &roster).unwrap();
        let pool = training_pool(&roster, &m);
        assert_eq!(pool.len(), 12);
        assert_eq!(pool.iter().filter(|p| matches!(p, PoolEntry::Original { .. })).count(), 5);
    }
}
