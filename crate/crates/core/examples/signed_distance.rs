//! Signed distance field of a small lesion on an anisotropic grid.
//!
//! cargo run --example signed_distance

use carvemix::distance::{brute_force_signed_distance, signed_distance, DistanceUnits};
use carvemix::volume::{GridShape, LabelMask, Spacing};

fn main() -> carvemix::Result<()> {
    let shape = GridShape::new(9, 9, 5)?;
    let spacing = Spacing::new(1.0, 1.0, 3.0)?;
    let lesion = LabelMask::from_fn(shape, spacing, |x, y, z| (3..6).contains(&x) && (3..6).contains(&y) && z == 2);

    for units in [DistanceUnits::Voxel, DistanceUnits::Millimeters] {
        let field = signed_distance(&lesion, units)?;
        let [x, y, z] = shape.coords(field.argmin());
        println!("{:>5}: d_min = {:.3} at ({x}, {y}, {z})", units.as_str(), field.d_min());

        // central row through the lesion
        let row: Vec<String> = (0..shape.nx).map(|x| format!("{:5.2}", field.get(x, 4, 2))).collect();
        println!("       row y=4 z=2: {}", row.join(" "));
        println!("       row x=4 y=4 along z: {:?}", (0..shape.nz).map(|z| field.get(4, 4, z)).collect::<Vec<_>>());

        let oracle = brute_force_signed_distance(&lesion, units)?;
        let worst = field.data().iter().zip(oracle.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("       max deviation from brute force: {worst:e}");
    }
    Ok(())
}
