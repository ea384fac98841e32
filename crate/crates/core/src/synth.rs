//! Seeded generation of planted-truth alignment problems.
//!
//! Every draw comes from a ChaCha8 stream cipher RNG seeded with the
//! problem seed, so fixtures are bit-reproducible across platforms and
//! across languages with a ChaCha8 implementation. The draw order is part
//! of the contract: source rows, planted map, outlier subset, per-row
//! noise, outlier directions.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::linalg;

/// The crate's canonical deterministic RNG (ChaCha8, seeded directly).
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Haar-ish random orthogonal matrix: QR of a Gaussian matrix with the
/// factor signs fixed so the diagonal of R is positive (making the
/// factorization, and hence the draw, unique).
pub fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let gaussian: nalgebra::DMatrix<f64> =
        nalgebra::DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = gaussian.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    linalg::from_nalgebra(&q)
}

/// A planted alignment problem: `B ≈ A·Q` with controlled noise and a
/// contaminated row subset.
#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    a: Array2<f64>,
    b: Array2<f64>,
    planted: Array2<f64>,
    outlier_mask: Vec<bool>,
    seed: u64,
    sigma: f64,
    outlier_frac: f64,
    outlier_scale: f64,
}

#[derive(Debug, Serialize)]
pub struct SyntheticSidecar {
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub sigma: f64,
    pub outlier_frac: f64,
    pub outlier_scale: f64,
    pub outlier_indices: Vec<usize>,
}

impl SyntheticProblem {
    pub fn a(&self) -> ArrayView2<'_, f64> {
        self.a.view()
    }

    pub fn b(&self) -> ArrayView2<'_, f64> {
        self.b.view()
    }

    /// The planted orthogonal map `Q` (always with determinant +1, so it is
    /// reachable by a continuous flow started at the identity).
    pub fn planted(&self) -> ArrayView2<'_, f64> {
        self.planted.view()
    }

    pub fn outlier_mask(&self) -> &[bool] {
        &self.outlier_mask
    }

    pub fn outlier_indices(&self) -> Vec<usize> {
        self.outlier_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The problem as a pair of embedding matrices with synthetic tokens
    /// `w000000, w000001, ...` (row `i` of A corresponds to row `i` of B).
    pub fn embedding_pair(&self) -> (EmbeddingMatrix, EmbeddingMatrix) {
        let words: Vec<String> = (0..self.n()).map(|i| format!("w{i:06}")).collect();
        let a = EmbeddingMatrix::new(words.clone(), self.a.clone())
            .expect("generated matrix satisfies the embedding invariants");
        let b = EmbeddingMatrix::new(words, self.b.clone())
            .expect("generated matrix satisfies the embedding invariants");
        (a, b)
    }

    pub fn sidecar(&self) -> SyntheticSidecar {
        SyntheticSidecar {
            seed: self.seed,
            n: self.n(),
            d: self.dim(),
            sigma: self.sigma,
            outlier_frac: self.outlier_frac,
            outlier_scale: self.outlier_scale,
            outlier_indices: self.outlier_indices(),
        }
    }
}

/// Generates a planted problem.
///
/// Source rows are unit-normalized Gaussians. Inlier rows of B are
/// `AᵢQ + Gaussian(0, sigma)`; a `⌈outlier_frac·n⌉`-row subset is further
/// displaced by `outlier_scale` in a random direction. All B rows are then
/// re-unit-normalized, so both spaces live on the unit sphere.
pub fn gen_synthetic(
    n: usize,
    d: usize,
    sigma: f64,
    outlier_frac: f64,
    outlier_scale: f64,
    seed: u64,
) -> Result<SyntheticProblem> {
    if d < 2 || n < d {
        return Err(Error::InvalidParameter {
            name: "n/d",
            msg: format!("need n >= d >= 2, got n={n}, d={d}"),
        });
    }
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::InvalidParameter { name: "sigma", msg: "must be finite and >= 0".into() });
    }
    if !(0.0..1.0).contains(&outlier_frac) {
        return Err(Error::InvalidParameter {
            name: "outlier_frac",
            msg: format!("must be in [0, 1), got {outlier_frac}"),
        });
    }
    if !outlier_scale.is_finite() || outlier_scale < 0.0 {
        return Err(Error::InvalidParameter {
            name: "outlier_scale",
            msg: "must be finite and >= 0".into(),
        });
    }

    let mut rng = seeded_rng(seed);

    // 1. Source rows: unit-normalized Gaussians.
    let mut a = Array2::zeros((n, d));
    for mut row in a.outer_iter_mut() {
        loop {
            for v in row.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let norm = linalg::row_norm(row.view());
            if norm > 0.0 {
                row.mapv_inplace(|v| v / norm);
                break;
            }
        }
    }

    // 2. Planted map. A continuous flow from the identity stays in the
    //    special orthogonal component, so Q is fixed to determinant +1.
    let mut planted = random_orthogonal(d, &mut rng);
    if linalg::to_nalgebra(planted.view()).determinant() < 0.0 {
        for i in 0..d {
            planted[[i, d - 1]] = -planted[[i, d - 1]];
        }
    }

    // 3. Contaminated subset.
    let m = (outlier_frac * n as f64).ceil() as usize;
    let mut outlier_mask = vec![false; n];
    if m > 0 {
        let mut chosen = rand::seq::index::sample(&mut rng, n, m).into_vec();
        chosen.sort_unstable();
        for i in chosen {
            outlier_mask[i] = true;
        }
    }

    // 4. Per-row noise. Noise vectors are redrawn while their norm exceeds
    //    3·sigma·√d, which caps the inlier residual (including the later
    //    re-normalization shift) at 6·sigma·√d.
    let mapped = a.dot(&planted);
    let mut b = mapped.clone();
    if sigma > 0.0 {
        let bound = 3.0 * sigma * (d as f64).sqrt();
        let mut noise = vec![0.0f64; d];
        for mut row in b.outer_iter_mut() {
            loop {
                let mut sq = 0.0;
                for v in noise.iter_mut() {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    *v = sigma * g;
                    sq += *v * *v;
                }
                if sq.sqrt() <= bound {
                    break;
                }
            }
            for (x, dv) in row.iter_mut().zip(noise.iter()) {
                *x += dv;
            }
        }
    }

    // 5. Displace the contaminated rows, then re-normalize everything.
    let mut direction = vec![0.0f64; d];
    for (i, mut row) in b.outer_iter_mut().enumerate() {
        if outlier_mask[i] && outlier_scale > 0.0 {
            loop {
                let mut sq = 0.0;
                for v in direction.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                    sq += *v * *v;
                }
                let norm = sq.sqrt();
                if norm == 0.0 {
                    continue;
                }
                let mut displaced_sq = 0.0;
                for (x, dv) in row.iter_mut().zip(direction.iter()) {
                    *x += outlier_scale * (*dv / norm);
                    displaced_sq += *x * *x;
                }
                if displaced_sq > 0.0 {
                    break;
                }
                // displacement cancelled the row exactly; undo and redraw
                for (x, dv) in row.iter_mut().zip(direction.iter()) {
                    *x -= outlier_scale * (*dv / norm);
                }
            }
        }
        let norm = linalg::row_norm(row.view());
        row.mapv_inplace(|v| v / norm);
    }

    Ok(SyntheticProblem {
        a,
        b,
        planted,
        outlier_mask,
        seed,
        sigma,
        outlier_frac,
        outlier_scale,
    })
}

/// Frobenius distance between a solved map and the planted one.
pub fn recovery_error(map: ArrayView2<'_, f64>, planted: ArrayView2<'_, f64>) -> f64 {
    assert_eq!(map.dim(), planted.dim(), "maps must share a shape");
    map.iter()
        .zip(planted.iter())
        .map(|(m, q)| (m - q) * (m - q))
        .sum::<f64>()
        .sqrt()
}
