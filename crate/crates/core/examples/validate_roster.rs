//! Validate an images/labels directory pair; with no arguments a phantom
//! roster with one empty and one non-binary label is checked.
//!
//! cargo run --example validate_roster [-- <images_dir> <labels_dir>]

use std::path::PathBuf;

use carvemix::generator::validate_roster;
use carvemix::nifti;
use carvemix::synthetic::{phantom_roster, write_roster, PhantomConfig};
use carvemix::volume::{GridShape, Volume3D};

fn main() -> carvemix::Result<()> {
    let args: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    let _tmp;
    let (images, labels) = if let [images, labels] = args.as_slice() {
        (images.clone(), labels.clone())
    } else {
        let dir = tempfile::tempdir().expect("temp dir");
        let cfg = PhantomConfig {
            shape: GridShape::cube(16)?,
            ..PhantomConfig::default()
        };
        let samples = phantom_roster(&cfg, 4, 1, 0);
        write_roster(dir.path(), &samples)?;
        let graded = Volume3D::from_fn(cfg.shape, cfg.spacing, |x, _, _| (x % 3) as f32)?;
        nifti::write_volume(dir.path().join("labels/case_001.nii.gz"), &graded)?;
        let paths = (dir.path().join("images"), dir.path().join("labels"));
        _tmp = dir;
        paths
    };

    let report = validate_roster(&images, &labels)?;
    for s in &report.samples {
        let status = if s.issues.is_empty() { "ok".to_owned() } else { s.issues.join("; ") };
        println!("{:<12} lesion {:6} host {:5} donor {:5}  {status}", s.id, s.lesion_voxels, s.eligible_host, s.eligible_donor);
    }
    println!(
        "{} hosts, {} donors, excluded {:?}",
        report.eligible_hosts, report.eligible_donors, report.excluded
    );
    Ok(())
}
