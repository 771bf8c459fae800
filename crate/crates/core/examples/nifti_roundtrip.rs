//! Write a volume in every supported datatype, plain and gzipped, and read it back.
//!
//! cargo run --example nifti_roundtrip [-- <file.nii[.gz]>]

use carvemix::nifti::{self, NiftiDataType};
use carvemix::volume::{GridShape, Spacing, Volume3D};

fn main() -> carvemix::Result<()> {
    if let Some(path) = std::env::args().nth(1) {
        let header = nifti::read_header(&path)?;
        println!("{path}: {} {:?} spacing {:?}", header.shape, header.datatype, header.spacing.as_array());
        return Ok(());
    }

    let dir = tempfile::tempdir().expect("temp dir");
    let shape = GridShape::new(16, 12, 8)?;
    let spacing = Spacing::new(0.9, 0.9, 2.5)?;
    let volume = Volume3D::from_fn(shape, spacing, |x, y, z| (x + 2 * y + 3 * z) as f32)?;

    for dtype in NiftiDataType::ALL {
        for ext in ["nii", "nii.gz"] {
            let path = dir.path().join(format!("vol_{}.{ext}", dtype.code()));
            nifti::write_volume_as(&path, &volume, dtype)?;
            let back = nifti::read_volume(&path)?;
            let bytes = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
            println!(
                "{:>8} {:>7}: {:6} bytes, identical {}",
                format!("{dtype:?}"),
                ext,
                bytes,
                back.data() == volume.data()
            );
        }
    }
    Ok(())
}
