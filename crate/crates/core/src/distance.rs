//! Exact signed Euclidean distance transform.
//!
//! The distance of a voxel is measured to the nearest voxel centre of the
//! opposite class: lesion voxels get the negated distance to the closest
//! background voxel, background voxels the positive distance to the closest
//! lesion voxel. Because both classes are made of voxel centres, |D| is at
//! least one voxel edge everywhere and never exactly zero, so `D < 0` is
//! exactly the lesion.
//!
//! [`signed_distance`] runs three separable passes (x, y, z), each computing
//! the lower envelope of parabolas over squared distances along one axis.
//! Every pass is linear in the number of voxels. Envelope intersections are
//! compared as cross-multiplied fractions, so in voxel units every squared
//! distance is an exact integer. [`brute_force_signed_distance`] is the
//! exhaustive reference used to check it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{GridShape, LabelMask, Spacing, Volume3D};

/// Largest per-axis extent accepted by the brute-force transform.
pub const BRUTE_FORCE_MAX_EXTENT: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceUnits {
    /// Every axis step counts as 1.
    #[default]
    Voxel,
    /// Axis steps are scaled by the voxel spacing.
    #[serde(rename = "mm")]
    Millimeters,
}

impl DistanceUnits {
    /// Squared step length per axis.
    pub fn axis_weights(self, spacing: Spacing) -> [f64; 3] {
        match self {
            DistanceUnits::Voxel => [1.0; 3],
            DistanceUnits::Millimeters => spacing.as_array().map(|s| s * s),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DistanceUnits::Voxel => "voxel",
            DistanceUnits::Millimeters => "mm",
        }
    }
}

impl std::str::FromStr for DistanceUnits {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "voxel" | "voxels" => Ok(DistanceUnits::Voxel),
            "mm" | "millimeters" => Ok(DistanceUnits::Millimeters),
            other => Err(Error::Config(format!("unknown distance units `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedDistanceField {
    shape: GridShape,
    spacing: Spacing,
    units: DistanceUnits,
    data: Vec<f64>,
    d_min: f64,
    argmin: usize,
}

impl SignedDistanceField {
    fn from_values(mask: &LabelMask, units: DistanceUnits, data: Vec<f64>) -> Self {
        let (argmin, d_min) = data
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bv), (i, v)| {
                if v < bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
        SignedDistanceField {
            shape: mask.shape(),
            spacing: mask.spacing(),
            units,
            data,
            d_min,
            argmin,
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn units(&self) -> DistanceUnits {
        self.units
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.shape.index(x, y, z)]
    }

    /// Minimum of the field; the negated depth of the deepest lesion voxel.
    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    /// Flat index of the first voxel attaining [`d_min`](Self::d_min).
    pub fn argmin(&self) -> usize {
        self.argmin
    }

    /// Field as a float32 image, e.g. for writing to disk.
    pub fn to_volume(&self) -> Volume3D {
        Volume3D::new(
            self.shape,
            self.spacing,
            self.data.iter().map(|&v| v as f32).collect(),
        )
        .expect("distance field has no NaN")
    }
}

pub fn min_distance(field: &SignedDistanceField) -> f64 {
    field.d_min()
}

fn check_two_classes(mask: &LabelMask) -> Result<()> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    if mask.is_full() {
        return Err(Error::FullMask);
    }
    Ok(())
}

/// Signed squared distances: `-d²` on lesion voxels, `+d²` on background.
pub fn signed_squared_distance(mask: &LabelMask, units: DistanceUnits) -> Result<Vec<f64>> {
    check_two_classes(mask)?;
    let weights = units.axis_weights(mask.spacing());
    let shape = mask.shape();
    let labels = mask.data();
    let mut to_background = squared_edt(shape, weights, |i| labels[i] == 0);
    let to_lesion = squared_edt(shape, weights, |i| labels[i] != 0);
    to_background
        .par_iter_mut()
        .zip(to_lesion.par_iter())
        .zip(labels.par_iter())
        .for_each(|((out, &outside), &label)| {
            *out = if label != 0 { -*out } else { outside };
        });
    Ok(to_background)
}

pub fn signed_distance(mask: &LabelMask, units: DistanceUnits) -> Result<SignedDistanceField> {
    let mut values = signed_squared_distance(mask, units)?;
    values
        .par_iter_mut()
        .for_each(|v| *v = v.abs().sqrt().copysign(*v));
    Ok(SignedDistanceField::from_values(mask, units, values))
}

/// Squared Euclidean distance from every voxel to the nearest feature voxel.
///
/// Voxels with no feature anywhere in the grid get `f64::INFINITY`.
pub fn squared_edt(
    shape: GridShape,
    weights: [f64; 3],
    is_feature: impl Fn(usize) -> bool + Sync,
) -> Vec<f64> {
    let [nx, ny, nz] = shape.dims();
    let mut grid: Vec<f64> = (0..shape.len())
        .into_par_iter()
        .map(|i| if is_feature(i) { 0.0 } else { f64::INFINITY })
        .collect();

    // x: rows are contiguous
    grid.par_chunks_mut(nx).for_each_init(
        || Envelope::with_capacity(nx),
        |env, row| env.transform_in_place(row, weights[0]),
    );

    // y: columns inside each z slab
    if ny > 1 {
        grid.par_chunks_mut(nx * ny).for_each_init(
            || (Envelope::with_capacity(ny), vec![0.0; ny]),
            |(env, column), slab| {
                for x in 0..nx {
                    for (y, c) in column.iter_mut().enumerate() {
                        *c = slab[x + nx * y];
                    }
                    env.transform_in_place(column, weights[1]);
                    for (y, &c) in column.iter().enumerate() {
                        slab[x + nx * y] = c;
                    }
                }
            },
        );
    }

    // z: lines cross slabs, so work on one transposed (x, z) tile per y
    if nz > 1 {
        let plane = nx * ny;
        let batch = rayon::current_num_threads().max(1) * 2;
        let mut y0 = 0;
        while y0 < ny {
            let y1 = (y0 + batch).min(ny);
            let tiles: Vec<Vec<f64>> = (y0..y1)
                .into_par_iter()
                .map_init(
                    || Envelope::with_capacity(nz),
                    |env, y| {
                        let mut tile = vec![0.0; nx * nz];
                        for z in 0..nz {
                            let row = &grid[y * nx + z * plane..][..nx];
                            for (x, &v) in row.iter().enumerate() {
                                tile[x * nz + z] = v;
                            }
                        }
                        for column in tile.chunks_mut(nz) {
                            env.transform_in_place(column, weights[2]);
                        }
                        tile
                    },
                )
                .collect();
            for (y, tile) in (y0..y1).zip(tiles) {
                for z in 0..nz {
                    let row = &mut grid[y * nx + z * plane..][..nx];
                    for (x, v) in row.iter_mut().enumerate() {
                        *v = tile[x * nz + z];
                    }
                }
            }
            y0 = y1;
        }
    }
    grid
}

/// Scratch space for the 1-D lower envelope of parabolas
/// `g(p) = f(q) + w (p - q)²` over the finite samples `q` of a line.
struct Envelope {
    sites: Vec<usize>,
    // left boundary of each site's region, as numerator / positive denominator
    bound_num: Vec<f64>,
    bound_den: Vec<f64>,
    input: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Envelope {
            sites: Vec::with_capacity(n),
            bound_num: Vec::with_capacity(n),
            bound_den: Vec::with_capacity(n),
            input: Vec::with_capacity(n),
        }
    }

    fn transform_in_place(&mut self, line: &mut [f64], w: f64) {
        self.input.clear();
        self.input.extend_from_slice(line);
        self.sites.clear();
        self.bound_num.clear();
        self.bound_den.clear();
        let f = &self.input;

        for (q, &fq) in f.iter().enumerate() {
            if !fq.is_finite() {
                continue;
            }
            let q_f = q as f64;
            let lifted_q = fq + w * q_f * q_f;
            loop {
                let Some(&v) = self.sites.last() else {
                    self.sites.push(q);
                    self.bound_num.push(f64::NEG_INFINITY);
                    self.bound_den.push(1.0);
                    break;
                };
                let v_f = v as f64;
                let num = lifted_q - (f[v] + w * v_f * v_f);
                let den = 2.0 * w * (q_f - v_f);
                let k = self.sites.len() - 1;
                // intersection with the top site lies at or left of that
                // site's own left boundary: the top site is hidden
                if k > 0 && num * self.bound_den[k] <= self.bound_num[k] * den {
                    self.sites.pop();
                    self.bound_num.pop();
                    self.bound_den.pop();
                    continue;
                }
                self.sites.push(q);
                self.bound_num.push(num);
                self.bound_den.push(den);
                break;
            }
        }

        if self.sites.is_empty() {
            return;
        }
        let mut k = 0;
        for (p, out) in line.iter_mut().enumerate() {
            let p_f = p as f64;
            while k + 1 < self.sites.len() && self.bound_num[k + 1] < p_f * self.bound_den[k + 1] {
                k += 1;
            }
            let d = p_f - self.sites[k] as f64;
            *out = f[self.sites[k]] + w * d * d;
        }
    }
}

/// Exhaustive nearest-opposite-voxel search. Quadratic; for verification.
pub fn brute_force_signed_squared_distance(
    mask: &LabelMask,
    units: DistanceUnits,
) -> Result<Vec<f64>> {
    let shape = mask.shape();
    if shape.dims().iter().any(|&n| n > BRUTE_FORCE_MAX_EXTENT) {
        return Err(Error::GridTooLarge {
            shape,
            cap: BRUTE_FORCE_MAX_EXTENT,
        });
    }
    check_two_classes(mask)?;

    let coords: Vec<[i64; 3]> = (0..shape.len())
        .map(|i| shape.coords(i).map(|c| c as i64))
        .collect();
    let (lesion, background): (Vec<usize>, Vec<usize>) =
        (0..shape.len()).partition(|&i| mask.is_set(i));

    let values = match units {
        DistanceUnits::Voxel => (0..shape.len())
            .map(|i| {
                let others = if mask.is_set(i) { &background } else { &lesion };
                let c = coords[i];
                let best = others
                    .iter()
                    .map(|&j| {
                        let o = coords[j];
                        (0..3).map(|a| (c[a] - o[a]).pow(2)).sum::<i64>()
                    })
                    .min()
                    .expect("both classes present");
                if mask.is_set(i) {
                    -(best as f64)
                } else {
                    best as f64
                }
            })
            .collect(),
        DistanceUnits::Millimeters => {
            let s = mask.spacing().as_array();
            (0..shape.len())
                .map(|i| {
                    let others = if mask.is_set(i) { &background } else { &lesion };
                    let c = coords[i];
                    let best = others
                        .iter()
                        .map(|&j| {
                            let o = coords[j];
                            (0..3)
                                .map(|a| {
                                    let d = (c[a] - o[a]) as f64 * s[a];
                                    d * d
                                })
                                .sum::<f64>()
                        })
                        .fold(f64::INFINITY, f64::min);
                    if mask.is_set(i) {
                        -best
                    } else {
                        best
                    }
                })
                .collect()
        }
    };
    Ok(values)
}

pub fn brute_force_signed_distance(
    mask: &LabelMask,
    units: DistanceUnits,
) -> Result<SignedDistanceField> {
    let values = brute_force_signed_squared_distance(mask, units)?
        .into_iter()
        .map(|v| v.abs().sqrt().copysign(v))
        .collect();
    Ok(SignedDistanceField::from_values(mask, units, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_center(spacing: Spacing) -> LabelMask {
        LabelMask::from_fn(GridShape::cube(3).unwrap(), spacing, |x, y, z| {
            (x, y, z) == (1, 1, 1)
        })
    }

    fn random_mask(rng: &mut impl Rng, dims: [usize; 3], spacing: Spacing) -> LabelMask {
        let shape = GridShape::new(dims[0], dims[1], dims[2]).unwrap();
        let p = rng.random_range(0.05..0.95);
        loop {
            let m = LabelMask::from_fn(shape, spacing, |_, _, _| rng.random_bool(p));
            if !m.is_empty() && !m.is_full() {
                return m;
            }
        }
    }

    #[test]
    fn single_voxel_neighbourhood() {
        let d = signed_distance(&single_center(Spacing::isotropic()), DistanceUnits::Voxel).unwrap();
        assert_eq!(d.get(1, 1, 1), -1.0);
        assert_eq!(d.get(0, 1, 1), 1.0);
        assert_eq!(d.get(1, 2, 1), 1.0);
        assert_eq!(d.get(0, 0, 1), 2f64.sqrt());
        assert_eq!(d.get(2, 1, 0), 2f64.sqrt());
        assert_eq!(d.get(0, 0, 0), 3f64.sqrt());
        assert_eq!(d.get(2, 2, 2), 3f64.sqrt());
        assert_eq!(d.d_min(), -1.0);
        assert_eq!(min_distance(&d), -1.0);
    }

    #[test]
    fn anisotropic_millimetres() {
        let m = single_center(Spacing::new(1.0, 1.0, 6.5).unwrap());
        let d = signed_distance(&m, DistanceUnits::Millimeters).unwrap();
        assert_eq!(d.get(1, 1, 0), 6.5);
        assert_eq!(d.get(1, 1, 2), 6.5);
        assert_eq!(d.get(0, 1, 1), 1.0);
        // in voxel units spacing is ignored
        let v = signed_distance(&m, DistanceUnits::Voxel).unwrap();
        assert_eq!(v.get(1, 1, 0), 1.0);
    }

    #[test]
    fn two_voxel_line() {
        let m = LabelMask::new(GridShape::new(2, 1, 1).unwrap(), Spacing::isotropic(), vec![1, 0]).unwrap();
        let bf = brute_force_signed_distance(&m, DistanceUnits::Voxel).unwrap();
        assert_eq!(bf.data(), &[-1.0, 1.0]);
        let fast = signed_distance(&m, DistanceUnits::Voxel).unwrap();
        assert_eq!(fast.data(), &[-1.0, 1.0]);
    }

    #[test]
    fn degenerate_masks() {
        let s = GridShape::cube(1).unwrap();
        let full = LabelMask::new(s, Spacing::isotropic(), vec![1]).unwrap();
        assert!(matches!(brute_force_signed_distance(&full, DistanceUnits::Voxel), Err(Error::FullMask)));
        assert!(matches!(signed_distance(&full, DistanceUnits::Voxel), Err(Error::FullMask)));
        let empty = LabelMask::zeros(GridShape::cube(4).unwrap(), Spacing::isotropic());
        assert!(matches!(signed_distance(&empty, DistanceUnits::Voxel), Err(Error::EmptyMask)));
        assert!(matches!(brute_force_signed_distance(&empty, DistanceUnits::Voxel), Err(Error::EmptyMask)));
    }

    #[test]
    fn brute_force_size_cap() {
        let m = LabelMask::from_fn(GridShape::new(33, 2, 2).unwrap(), Spacing::isotropic(), |x, _, _| x == 0);
        assert!(matches!(
            brute_force_signed_distance(&m, DistanceUnits::Voxel),
            Err(Error::GridTooLarge { .. })
        ));
    }

    #[test]
    fn cube_lesion_depth() {
        // 5^3 cube in a 9^3 grid: the centre is 3 steps from the nearest background voxel
        let shape = GridShape::cube(9).unwrap();
        let m = LabelMask::from_fn(shape, Spacing::isotropic(), |x, y, z| {
            [x, y, z].iter().all(|&c| (2..7).contains(&c))
        });
        let bf = brute_force_signed_distance(&m, DistanceUnits::Voxel).unwrap();
        assert_eq!(bf.d_min(), -3.0);
        let d = signed_distance(&m, DistanceUnits::Voxel).unwrap();
        assert_eq!(d.d_min(), -3.0);
        assert_eq!(d.argmin(), shape.index(4, 4, 4));
        assert!(d.data().iter().all(|&v| v >= d.d_min()));
    }

    #[test]
    fn matches_brute_force_on_random_8_cubed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let m = random_mask(&mut rng, [8, 8, 8], Spacing::isotropic());
            let fast = signed_squared_distance(&m, DistanceUnits::Voxel).unwrap();
            let slow = brute_force_signed_squared_distance(&m, DistanceUnits::Voxel).unwrap();
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn matches_brute_force_physical_units() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let dims = [rng.random_range(1..10), rng.random_range(1..10), rng.random_range(2..10)];
            let spacing = Spacing::new(
                rng.random_range(0.3..2.0),
                rng.random_range(0.3..2.0),
                rng.random_range(0.5..7.0),
            )
            .unwrap();
            let m = random_mask(&mut rng, dims, spacing);
            let fast = signed_distance(&m, DistanceUnits::Millimeters).unwrap();
            let slow = brute_force_signed_distance(&m, DistanceUnits::Millimeters).unwrap();
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn sparse_features_far_apart() {
        // two isolated lesion voxels on a long line exercise envelope popping
        let shape = GridShape::new(32, 3, 3).unwrap();
        let m = LabelMask::from_fn(shape, Spacing::isotropic(), |x, y, z| {
            (y, z) == (1, 1) && (x == 3 || x == 28)
        });
        let fast = signed_squared_distance(&m, DistanceUnits::Voxel).unwrap();
        let slow = brute_force_signed_squared_distance(&m, DistanceUnits::Voxel).unwrap();
        assert_eq!(fast, slow);
    }

    fn arb_mask() -> impl Strategy<Value = LabelMask> {
        (1usize..10, 1usize..10, 1usize..10)
            .prop_flat_map(|(nx, ny, nz)| {
                (Just((nx, ny, nz)), prop::collection::vec(any::<bool>(), nx * ny * nz))
            })
            .prop_filter_map("needs both classes", |((nx, ny, nz), bits)| {
                let m = LabelMask::new(
                    GridShape::new(nx, ny, nz).unwrap(),
                    Spacing::isotropic(),
                    bits.into_iter().map(u8::from).collect(),
                )
                .unwrap();
                (!m.is_empty() && !m.is_full()).then_some(m)
            })
    }

    proptest! {
        #[test]
        fn sign_partition_and_oracle(m in arb_mask()) {
            let d = signed_distance(&m, DistanceUnits::Voxel).unwrap();
            for (i, &v) in d.data().iter().enumerate() {
                prop_assert_eq!(v < 0.0, m.is_set(i));
                prop_assert!(v != 0.0);
            }
            prop_assert!(d.d_min() < 0.0);
            let fast = signed_squared_distance(&m, DistanceUnits::Voxel).unwrap();
            let slow = brute_force_signed_squared_distance(&m, DistanceUnits::Voxel).unwrap();
            prop_assert_eq!(fast, slow);
        }

        #[test]
        fn complement_negates(m in arb_mask()) {
            let d = signed_distance(&m, DistanceUnits::Voxel).unwrap();
            let c = signed_distance(&m.complement(), DistanceUnits::Voxel).unwrap();
            for (a, b) in d.data().iter().zip(c.data()) {
                prop_assert_eq!(*a, -*b);
            }
        }

        #[test]
        fn translation_equivariance(
            seed in any::<u64>(),
            shift in (0usize..4, 0usize..4, 0usize..4),
        ) {
            // a lesion confined to [2, 8)^3 inside a 14^3 grid stays off the border after shifting
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shape = GridShape::cube(14).unwrap();
            let inner = |c: usize| (2..8).contains(&c);
            let bits: Vec<bool> = (0..shape.len())
                .map(|i| {
                    let [x, y, z] = shape.coords(i);
                    inner(x) && inner(y) && inner(z) && rng.random_bool(0.5)
                })
                .collect();
            prop_assume!(bits.iter().any(|&b| b));
            let base = LabelMask::from_fn(shape, Spacing::isotropic(), |x, y, z| bits[shape.index(x, y, z)]);
            let (sx, sy, sz) = shift;
            let moved = LabelMask::from_fn(shape, Spacing::isotropic(), |x, y, z| {
                x >= sx && y >= sy && z >= sz && bits[shape.index(x - sx, y - sy, z - sz)]
            });
            let d0 = signed_distance(&base, DistanceUnits::Voxel).unwrap();
            let d1 = signed_distance(&moved, DistanceUnits::Voxel).unwrap();
            for z in 0..14 - sz {
                for y in 0..14 - sy {
                    for x in 0..14 - sx {
                        prop_assert_eq!(d0.get(x, y, z), d1.get(x + sx, y + sy, z + sz));
                    }
                }
            }
        }
    }

    #[test]
    fn result_independent_of_thread_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_mask(&mut rng, [20, 17, 23], Spacing::new(0.96, 0.96, 6.5).unwrap());
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| signed_distance(&m, DistanceUnits::Millimeters).unwrap())
        };
        let one = run(1);
        let four = run(4);
        let bits = |d: &SignedDistanceField| d.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&one), bits(&four));
    }
}
