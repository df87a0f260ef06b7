//! Collocation-point generation for the discrete loss: interior points,
//! tagged boundary/initial points, and Monte Carlo quadrature weights under
//! the uniform convention `weight = measure / count`, where measure is the
//! coordinate measure of the sampled set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryTag, Domain2D, Domain3D, Interval};
use crate::physics::threed::POLE_MARGIN;

/// Interior sampling mode: uniform random draws or a tensor-product lattice
/// of cell centers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    UniformRandom,
    Gridded,
}

/// Points of one sampled set with their shared quadrature weight.
#[derive(Clone, Debug)]
pub struct WeightedPoints {
    /// Coordinates padded to four entries; 2D mode uses `[x, z, t, 0]`.
    pub points: Vec<[f64; 4]>,
    /// Uniform weight `measure / count`.
    pub weight: f64,
}

impl WeightedPoints {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.weight * self.points.len() as f64
    }
}

/// A boundary piece's sample with its tag.
#[derive(Clone, Debug)]
pub struct BoundaryBatch {
    pub tag: BoundaryTag,
    pub points: WeightedPoints,
}

fn draw_open(rng: &mut ChaCha8Rng, iv: Interval) -> f64 {
    // strictly inside: reject the (measure-zero) lower endpoint
    loop {
        let v = rng.random_range(iv.lo..iv.hi);
        if v > iv.lo {
            return v;
        }
    }
}

/// Lattice cell centers `(2k+1)/(2m)` scaled into the interval.
fn grid_axis(iv: Interval, m: usize) -> Vec<f64> {
    (0..m)
        .map(|k| iv.lo + (2 * k + 1) as f64 / (2 * m) as f64 * iv.length())
        .collect()
}

/// Per-dimension lattice count whose `dim`-th power best matches `n`.
fn grid_side(n: usize, dim: usize) -> usize {
    let m = (n as f64).powf(1.0 / dim as f64).round() as usize;
    m.max(1)
}

fn sample_box(ivs: &[Interval], n: usize, seed: u64, mode: SampleMode) -> Result<WeightedPoints> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    let dim = ivs.len();
    let measure: f64 = ivs.iter().map(|iv| iv.length()).product();
    let points = match mode {
        SampleMode::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| {
                    let mut p = [0.0; 4];
                    for (k, iv) in ivs.iter().enumerate() {
                        p[k] = draw_open(&mut rng, *iv);
                    }
                    p
                })
                .collect::<Vec<_>>()
        }
        SampleMode::Gridded => {
            let m = grid_side(n, dim);
            let axes: Vec<Vec<f64>> = ivs.iter().map(|iv| grid_axis(*iv, m)).collect();
            let total = m.pow(dim as u32);
            (0..total)
                .map(|mut idx| {
                    let mut p = [0.0; 4];
                    for k in (0..dim).rev() {
                        p[k] = axes[k][idx % m];
                        idx /= m;
                    }
                    p
                })
                .collect()
        }
    };
    let count = points.len();
    Ok(WeightedPoints { points, weight: measure / count as f64 })
}

/// Interior collocation points of the 2D box.
pub fn sample_interior_2d(
    domain: &Domain2D,
    n: usize,
    seed: u64,
    mode: SampleMode,
) -> Result<WeightedPoints> {
    sample_box(&domain.intervals(), n, seed, mode)
}

/// Interior collocation points of the 3D shell sector. The polar-angle range
/// is shrunk by the pole margin so `1/sin(theta)` factors stay finite.
pub fn sample_interior_3d(
    domain: &Domain3D,
    n: usize,
    seed: u64,
    mode: SampleMode,
) -> Result<WeightedPoints> {
    let mut ivs = domain.intervals();
    let margin = 1e-3f64;
    let lo = ivs[1].lo.max(margin);
    let hi = ivs[1].hi.min(std::f64::consts::PI - margin);
    ivs[1] = Interval::new(lo, hi)?;
    debug_assert!(lo >= POLE_MARGIN);
    sample_box(&ivs, n, seed, mode)
}

fn piece_sample(
    free: &[(usize, Interval)],
    pinned: &[(usize, f64)],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> WeightedPoints {
    let measure: f64 = free.iter().map(|(_, iv)| iv.length()).product();
    let points = (0..n)
        .map(|_| {
            let mut p = [0.0; 4];
            for (k, v) in pinned {
                p[*k] = *v;
            }
            for (k, iv) in free {
                p[*k] = draw_open(rng, *iv);
            }
            p
        })
        .collect::<Vec<_>>();
    WeightedPoints { points, weight: measure / n as f64 }
}

/// Tagged boundary and initial points of the 2D box, `n_per_piece` each.
pub fn sample_boundary_2d(
    domain: &Domain2D,
    n_per_piece: usize,
    seed: u64,
) -> Result<Vec<BoundaryBatch>> {
    if n_per_piece == 0 {
        return Err(Error::InvalidArgument("n_per_piece must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x, z, t) = (domain.x, domain.z, domain.t);
    let pieces: [(BoundaryTag, Vec<(usize, Interval)>, Vec<(usize, f64)>); 5] = [
        (BoundaryTag::Initial, vec![(0, x), (1, z)], vec![(2, t.lo)]),
        (BoundaryTag::Surface, vec![(0, x), (2, t)], vec![(1, z.hi)]),
        (BoundaryTag::Bottom, vec![(0, x), (2, t)], vec![(1, z.lo)]),
        (BoundaryTag::LateralXLo, vec![(1, z), (2, t)], vec![(0, x.lo)]),
        (BoundaryTag::LateralXHi, vec![(1, z), (2, t)], vec![(0, x.hi)]),
    ];
    Ok(pieces
        .into_iter()
        .map(|(tag, free, pinned)| BoundaryBatch {
            tag,
            points: piece_sample(&free, &pinned, n_per_piece, &mut rng),
        })
        .collect())
}

/// Tagged boundary and initial points of the 3D shell sector.
pub fn sample_boundary_3d(
    domain: &Domain3D,
    n_per_piece: usize,
    seed: u64,
) -> Result<Vec<BoundaryBatch>> {
    if n_per_piece == 0 {
        return Err(Error::InvalidArgument("n_per_piece must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let margin = 1e-3f64;
    let th = Interval::new(
        domain.theta.lo.max(margin),
        domain.theta.hi.min(std::f64::consts::PI - margin),
    )?;
    let (r, ph, t) = (domain.r, domain.phi, domain.t);
    let pieces: [(BoundaryTag, Vec<(usize, Interval)>, Vec<(usize, f64)>); 7] = [
        (BoundaryTag::Initial, vec![(0, r), (1, th), (2, ph)], vec![(3, t.lo)]),
        (BoundaryTag::Surface, vec![(1, th), (2, ph), (3, t)], vec![(0, r.hi)]),
        (BoundaryTag::Bottom, vec![(1, th), (2, ph), (3, t)], vec![(0, r.lo)]),
        (BoundaryTag::LateralThetaLo, vec![(0, r), (2, ph), (3, t)], vec![(1, th.lo)]),
        (BoundaryTag::LateralThetaHi, vec![(0, r), (2, ph), (3, t)], vec![(1, th.hi)]),
        (BoundaryTag::LateralPhiLo, vec![(0, r), (1, th), (3, t)], vec![(2, ph.lo)]),
        (BoundaryTag::LateralPhiHi, vec![(0, r), (1, th), (3, t)], vec![(2, ph.hi)]),
    ];
    Ok(pieces
        .into_iter()
        .map(|(tag, free, pinned)| BoundaryBatch {
            tag,
            points: piece_sample(&free, &pinned, n_per_piece, &mut rng),
        })
        .collect())
}
