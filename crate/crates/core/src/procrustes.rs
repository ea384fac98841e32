//! Orthogonal Procrustes building blocks.
//!
//! `l2_opa` is the classic closed-form solution: with `UΣVᵀ = SVD(AᵀB)`,
//! the loss-minimising orthogonal map is `UVᵀ`. The remaining functions
//! implement the smoothed L1 objective, its gradient, and the projection
//! of that gradient onto the tangent space of the orthogonal manifold;
//! the time integration lives in [`crate::solver`].

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg;

/// Entries with `|z| > SATURATION_BOUND` are treated as fully saturated:
/// `tanh(z)` snaps to ±1 and `z·sech²(z)` to 0. At 20, both approximations
/// are below 1e-15, and the cutoff keeps `cosh` away from overflow for the
/// default smoothing coefficient of 1e8.
const SATURATION_BOUND: f64 = 20.0;

/// Row-correspondent source/target matrices composed from a dictionary.
#[derive(Debug, Clone)]
pub struct AlignedPairMatrices {
    a: Array2<f64>,
    b: Array2<f64>,
}

impl AlignedPairMatrices {
    pub fn new(a: Array2<f64>, b: Array2<f64>) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch { left: a.ncols(), right: b.ncols() });
        }
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::EmptyInput("pair matrices need at least one row and column".into()));
        }
        if !linalg::all_finite(a.view()) || !linalg::all_finite(b.view()) {
            return Err(Error::InvalidParameter {
                name: "pair matrices",
                msg: "non-finite entries".into(),
            });
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> ArrayView2<'_, f64> {
        self.a.view()
    }

    pub fn b(&self) -> ArrayView2<'_, f64> {
        self.b.view()
    }

    /// Number of aligned pairs.
    pub fn len(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.a.nrows() == 0
    }

    /// Vector dimensionality `d`.
    pub fn dim(&self) -> usize {
        self.a.ncols()
    }
}

/// A square map with its cached deviation from orthogonality.
#[derive(Debug, Clone)]
pub struct OrthogonalMap {
    matrix: Array2<f64>,
    ortho_error: f64,
}

impl OrthogonalMap {
    /// Wraps a square matrix, caching `max|MᵀM - I|`.
    pub fn from_matrix(matrix: Array2<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch { left: matrix.nrows(), right: matrix.ncols() });
        }
        if matrix.nrows() == 0 {
            return Err(Error::EmptyInput("map must have positive dimension".into()));
        }
        if !linalg::all_finite(matrix.view()) {
            return Err(Error::InvalidParameter { name: "map", msg: "non-finite entries".into() });
        }
        let ortho_error = orthogonality_error(matrix.view());
        Ok(Self { matrix, ortho_error })
    }

    pub fn identity(d: usize) -> Self {
        Self { matrix: linalg::identity(d), ortho_error: 0.0 }
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.matrix
    }

    /// Cached `max|MᵀM - I|`.
    pub fn ortho_error(&self) -> f64 {
        self.ortho_error
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Closed-form L2-optimal orthogonal map for `min ‖AM - B‖₂`.
///
/// Rank-deficient `AᵀB` is fine; the result is still orthogonal.
pub fn l2_opa(pairs: &AlignedPairMatrices) -> Result<OrthogonalMap> {
    let c = pairs.a().t().dot(&pairs.b());
    if !linalg::all_finite(c.view()) {
        return Err(Error::Numerical { step: 0, msg: "AᵀB has non-finite entries".into() });
    }
    let svd = linalg::to_nalgebra(c.view()).svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Numerical { step: 0, msg: "SVD of AᵀB did not converge".into() }),
    };
    let m = linalg::from_nalgebra(&(u * v_t));
    OrthogonalMap::from_matrix(m)
}

/// Entrywise sum of absolute values of `AM - B`.
pub fn l1_loss(pairs: &AlignedPairMatrices, map: ArrayView2<'_, f64>) -> f64 {
    let residual = pairs.a().dot(&map) - pairs.b();
    residual.iter().map(|v| v.abs()).sum()
}

/// Smooth surrogate of the L1 loss: `Σ dᵢⱼ·tanh(α·dᵢⱼ)` over `D = AM - B`.
///
/// Always in `[0, l1_loss]`, approaching the L1 loss as `alpha → ∞`.
pub fn smoothed_l1_objective(pairs: &AlignedPairMatrices, map: ArrayView2<'_, f64>, alpha: f64) -> f64 {
    assert!(alpha > 0.0, "alpha must be positive");
    let residual = pairs.a().dot(&map) - pairs.b();
    residual
        .iter()
        .map(|&d| {
            let z = alpha * d;
            if z.abs() > SATURATION_BOUND {
                d.abs()
            } else {
                d * stable_tanh(z)
            }
        })
        .sum()
}

/// Gradient of [`smoothed_l1_objective`] with respect to the map:
/// `Aᵀ(tanh(Z) + Z ⊙ sech²(Z))` with `Z = α(AM - B)`.
///
/// Saturated entries contribute ±1 in the first term and 0 in the second,
/// so the computation stays finite for arbitrarily large `alpha`.
pub fn l1_gradient(pairs: &AlignedPairMatrices, map: ArrayView2<'_, f64>, alpha: f64) -> Array2<f64> {
    assert!(alpha > 0.0, "alpha must be positive");
    let mut inner = pairs.a().dot(&map) - pairs.b();
    inner.mapv_inplace(|d| smoothed_sign(alpha * d));
    pairs.a().t().dot(&inner)
}

/// `tanh(z) + z·sech²(z)`, computed via exponentials of non-positive
/// arguments only.
fn smoothed_sign(z: f64) -> f64 {
    if z.abs() > SATURATION_BOUND {
        return if z > 0.0 { 1.0 } else { -1.0 };
    }
    let t = stable_tanh(z);
    t + z * (1.0 - t * t)
}

fn stable_tanh(z: f64) -> f64 {
    let e = (-2.0 * z.abs()).exp();
    let t = (1.0 - e) / (1.0 + e);
    if z < 0.0 {
        -t
    } else {
        t
    }
}

/// Projection of an ambient gradient onto the tangent space of the
/// orthogonal manifold at `M`: `½·M(MᵀG - GᵀM) + (I - MMᵀ)G`.
///
/// For orthogonal `M`, `Mᵀ·result` is skew-symmetric, so a flow following
/// the projected direction preserves orthogonality to first order.
pub fn tangent_project(map: ArrayView2<'_, f64>, gradient: ArrayView2<'_, f64>) -> Array2<f64> {
    let mt_g = map.t().dot(&gradient);
    let skew = &mt_g - &mt_g.t();
    let first = map.dot(&skew) * 0.5;
    let mmt = map.dot(&map.t());
    let second = gradient.to_owned() - mmt.dot(&gradient);
    first + second
}

/// `max|MᵀM - I|` — zero exactly on the orthogonal manifold.
pub fn orthogonality_error(map: ArrayView2<'_, f64>) -> f64 {
    let mut gram = map.t().dot(&map);
    for i in 0..gram.ncols() {
        gram[[i, i]] -= 1.0;
    }
    linalg::max_abs(gram.view())
}
