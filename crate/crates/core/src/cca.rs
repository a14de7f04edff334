//! Canonical correlation analysis and projection-weighted CCA (PWCCA).
//!
//! Both views are mean-centred and their covariances regularized as
//! `Σ + eps·I`. The canonical correlations are the singular values of
//! `Σxx^{-1/2} Σxy Σyy^{-1/2}`; the inverse square roots come from a
//! symmetric eigendecomposition with eigenvalues clamped at `eps`.
//!
//! PWCCA weights canonical direction `i` of a view by how much of that view
//! its canonical variate accounts for: `Σ_j |<c_i, x_j>|` over the view's
//! centred columns `x_j`, normalized to sum to one. The reported similarity
//! is the mean of the two directed PWCCA values.
//!
//! Rows are put in a canonical order before any accumulation, so results are
//! bitwise invariant under a permutation applied to both views.

use std::cmp::Ordering;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};
use crate::tensor_io::FeatureMatrix;

/// Covariance regularization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Ridge {
    /// The same `eps` for both views.
    Absolute(f64),
    /// `eps = c · trace(Σ) / d`, computed per view.
    Relative(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(1e-8)
    }
}

impl Ridge {
    fn eps(&self, trace: f64, dim: usize) -> f64 {
        match *self {
            Ridge::Absolute(eps) => eps,
            Ridge::Relative(c) => c * trace / dim as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            Ridge::Absolute(v) | Ridge::Relative(v) => v,
        };
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::Input(format!(
                "ridge must be positive and finite, got {v}"
            )))
        }
    }
}

#[derive(Debug, Clone)]
pub struct CcaResult {
    /// Descending, clipped to [0, 1]; `k = min(d1, d2)` values.
    pub correlations: Vec<f64>,
    /// `d1 x k`; column `i` maps centred X rows to canonical variate `i`.
    pub directions_x: Array2<f64>,
    /// `d2 x k`.
    pub directions_y: Array2<f64>,
    pub weights_x: Vec<f64>,
    pub weights_y: Vec<f64>,
    pub pwcca_xy: f64,
    pub pwcca_yx: f64,
    pub similarity: f64,
    pub warnings: Vec<Warning>,
}

impl CcaResult {
    pub fn k(&self) -> usize {
        self.correlations.len()
    }

    pub fn mean_correlation(&self) -> f64 {
        self.correlations.iter().sum::<f64>() / self.k() as f64
    }
}

/// Covariances of two centred, canonically ordered views.
struct Moments {
    n: usize,
    xc: Array2<f64>,
    yc: Array2<f64>,
    sxx: Array2<f64>,
    syy: Array2<f64>,
    sxy: Array2<f64>,
}

fn check_views(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::Shape(format!(
            "views have {} and {} rows",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() < 2 {
        return Err(Error::Input(format!("CCA needs n >= 2 rows, got {}", x.nrows())));
    }
    if x.ncols() == 0 || y.ncols() == 0 {
        return Err(Error::Shape("views must have at least one column".into()));
    }
    for (name, v) in [("X", &x), ("Y", &y)] {
        if let Some(((r, c), val)) = v.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::data(
                format!("{name} row {r}, col {c}"),
                format!("non-finite entry {val}"),
            ));
        }
    }
    Ok(())
}

fn cmp_rows(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(p, q)| p.total_cmp(q))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Row order that depends only on the multiset of `(x_row, y_row)` pairs.
fn canonical_order(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.nrows()).collect();
    idx.par_sort_by(|&a, &b| cmp_rows(x.row(a), x.row(b)).then_with(|| cmp_rows(y.row(a), y.row(b))));
    idx
}

fn centred(v: ArrayView2<f64>, order: &[usize]) -> Array2<f64> {
    let mut m = v.select(Axis(0), order);
    let mean = m.mean_axis(Axis(0)).expect("n >= 2");
    m -= &mean;
    m
}

fn moments(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Moments {
    let order = canonical_order(x, y);
    let n = x.nrows();
    let xc = centred(x, &order);
    let yc = centred(y, &order);
    let scale = 1.0 / (n - 1) as f64;
    let sxx = xc.t().dot(&xc) * scale;
    let syy = yc.t().dot(&yc) * scale;
    let sxy = xc.t().dot(&yc) * scale;
    Moments {
        n,
        xc,
        yc,
        sxx,
        syy,
        sxy,
    }
}

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// `(Σ + eps·I)^{-1/2}` with eigenvalues clamped at `eps`.
fn inv_sqrt(cov: &Array2<f64>, eps: f64) -> DMatrix<f64> {
    let mut m = to_na(cov);
    for i in 0..m.nrows() {
        m[(i, i)] += eps;
    }
    // Symmetrize against accumulated rounding.
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let scales = eig.eigenvalues.map(|l| 1.0 / l.max(eps).sqrt());
    let q = &eig.eigenvectors;
    q * DMatrix::from_diagonal(&scales) * q.transpose()
}

fn view_eps(ridge: &Ridge, cov: &Array2<f64>, name: &str) -> Result<f64> {
    let trace = cov.diag().sum();
    if trace.is_nan() || trace <= 0.0 {
        return Err(Error::data(
            name,
            "view has zero variance after centring (degenerate view)",
        ));
    }
    Ok(ridge.eps(trace, cov.nrows()))
}

/// Projection weights: `Σ_j |<c_i, x_j>|` normalized over `i`.
fn projection_weights(centred: &Array2<f64>, directions: &Array2<f64>, name: &str) -> Result<Vec<f64>> {
    let variates = centred.dot(directions);
    let inner = centred.t().dot(&variates);
    let raw: Array1<f64> = inner.mapv(f64::abs).sum_axis(Axis(0));
    let total = raw.sum();
    if total.is_nan() || total <= 0.0 || !total.is_finite() {
        return Err(Error::data(
            name,
            "canonical variates carry no variance of the view (degenerate view)",
        ));
    }
    Ok(raw.iter().map(|w| w / total).collect())
}

fn weighted(weights: &[f64], rho: &[f64]) -> f64 {
    weights.iter().zip(rho).map(|(a, r)| a * r).sum()
}

pub fn fit_cca(x: ArrayView2<f64>, y: ArrayView2<f64>, ridge: Ridge) -> Result<CcaResult> {
    ridge.validate()?;
    check_views(x, y)?;
    let (d1, d2) = (x.ncols(), y.ncols());
    let mut warnings = Vec::new();
    if x.nrows() <= d1.max(d2) {
        warnings.push(Warning::Underdetermined { n: x.nrows(), d1, d2 }.emit());
    }

    let mo = moments(x, y);
    let eps_x = view_eps(&ridge, &mo.sxx, "X")?;
    let eps_y = view_eps(&ridge, &mo.syy, "Y")?;
    let wx = inv_sqrt(&mo.sxx, eps_x);
    let wy = inv_sqrt(&mo.syy, eps_y);
    let core = &wx * to_na(&mo.sxy) * &wy;

    let svd = core.svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let k = d1.min(d2);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let correlations: Vec<f64> = order
        .iter()
        .map(|&i| svd.singular_values[i].clamp(0.0, 1.0))
        .collect();
    let u_k = DMatrix::from_fn(d1, k, |r, c| u[(r, order[c])]);
    let v_k = DMatrix::from_fn(d2, k, |r, c| vt[(order[c], r)]);
    let directions_x = from_na(&(&wx * u_k));
    let directions_y = from_na(&(&wy * v_k));

    let weights_x = projection_weights(&mo.xc, &directions_x, "X")?;
    let weights_y = projection_weights(&mo.yc, &directions_y, "Y")?;
    let pwcca_xy = weighted(&weights_x, &correlations);
    let pwcca_yx = weighted(&weights_y, &correlations);
    debug_assert_eq!(mo.n, x.nrows());

    Ok(CcaResult {
        correlations,
        directions_x,
        directions_y,
        weights_x,
        weights_y,
        pwcca_xy,
        pwcca_yx,
        similarity: (pwcca_xy + pwcca_yx) / 2.0,
        warnings,
    })
}

/// Recomputes both directed PWCCA values for a fitted result.
pub fn pwcca(result: &CcaResult, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<(f64, f64)> {
    check_views(x, y)?;
    if result.directions_x.nrows() != x.ncols() || result.directions_y.nrows() != y.ncols() {
        return Err(Error::Shape(
            "result was fitted on views of different dimension".into(),
        ));
    }
    let order = canonical_order(x, y);
    let wx = projection_weights(&centred(x, &order), &result.directions_x, "X")?;
    let wy = projection_weights(&centred(y, &order), &result.directions_y, "Y")?;
    Ok((
        weighted(&wx, &result.correlations),
        weighted(&wy, &result.correlations),
    ))
}

/// Symmetrized PWCCA similarity. The two views are fitted in a canonical
/// order, so swapping the arguments gives a bitwise identical value.
pub fn cca_similarity(x: ArrayView2<f64>, y: ArrayView2<f64>, ridge: Ridge) -> Result<f64> {
    let swap = match x.ncols().cmp(&y.ncols()) {
        Ordering::Equal => x
            .iter()
            .zip(y.iter())
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .is_some_and(|o| o.is_gt()),
        o => o.is_gt(),
    };
    let r = if swap {
        fit_cca(y, x, ridge)?
    } else {
        fit_cca(x, y, ridge)?
    };
    Ok(r.similarity)
}

/// Similarity of each layer to a row-aligned reference, in layer order.
pub fn layer_curve(layers: &[FeatureMatrix], reference: &FeatureMatrix, ridge: Ridge) -> Result<Vec<f64>> {
    for (i, layer) in layers.iter().enumerate() {
        if layer.rows() != reference.rows() {
            let name = layer
                .layer_id()
                .map_or_else(|| format!("#{i}"), |id| format!("{id}"));
            return Err(Error::Alignment(format!(
                "layer {name} has {} rows, reference has {}",
                layer.rows(),
                reference.rows()
            )));
        }
    }
    layers
        .par_iter()
        .enumerate()
        .map(|(i, layer)| {
            cca_similarity(layer.data().view(), reference.data().view(), ridge)
                .map_err(|e| e.context(format!("layer {}", layer.layer_id().unwrap_or(i))))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn self_similarity_is_one() {
        let x = gaussian(500, 8, 1);
        let r = fit_cca(x.view(), x.view(), Ridge::Absolute(1e-8)).unwrap();
        assert!(r.correlations.iter().all(|&p| (p - 1.0).abs() < 1e-6));
        assert!((r.similarity - 1.0).abs() < 1e-6);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn independent_views_are_uncorrelated() {
        let x = gaussian(10_000, 5, 2);
        let y = gaussian(10_000, 5, 3);
        let r = fit_cca(x.view(), y.view(), Ridge::default()).unwrap();
        assert!(r.correlations.iter().all(|&p| p < 0.1), "{:?}", r.correlations);
    }

    #[test]
    fn canonical_variates_are_whitened() {
        let x = gaussian(400, 4, 4);
        let y = &x.slice(ndarray::s![.., 0..3]) + &(gaussian(400, 3, 5) * 0.5);
        let r = fit_cca(x.view(), y.view(), Ridge::Absolute(1e-10)).unwrap();
        let xc = &x - &x.mean_axis(Axis(0)).unwrap();
        let cov = xc.dot(&r.directions_x).t().dot(&xc.dot(&r.directions_x)) / 399.0;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((cov[[i, j]] - want).abs() < 1e-6, "{cov}");
            }
        }
        assert_eq!(r.k(), 3);
        assert!(r.correlations.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn weights_normalized_and_pwcca_recomputes() {
        let x = gaussian(300, 6, 6);
        let y = gaussian(300, 4, 7);
        let r = fit_cca(x.view(), y.view(), Ridge::default()).unwrap();
        assert!((r.weights_x.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!((r.weights_y.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(r.weights_x.iter().chain(&r.weights_y).all(|&w| w >= 0.0));
        let (xy, yx) = pwcca(&r, x.view(), y.view()).unwrap();
        assert_eq!((xy, yx), (r.pwcca_xy, r.pwcca_yx));
    }

    #[test]
    fn dominant_matched_direction_outweighs_noise() {
        let n = 3000;
        let mut x = gaussian(n, 6, 8) * 0.1;
        let signal = gaussian(n, 1, 9) * 10.0;
        x.column_mut(0).assign(&signal.column(0));
        let mut y = gaussian(n, 6, 10);
        y.column_mut(0).assign(&signal.column(0));
        let r = fit_cca(x.view(), y.view(), Ridge::default()).unwrap();
        assert!(
            r.pwcca_xy > r.mean_correlation(),
            "{} vs {}",
            r.pwcca_xy,
            r.mean_correlation()
        );
    }

    #[test]
    fn errors() {
        let x = gaussian(1, 2, 0);
        assert!(matches!(
            fit_cca(x.view(), x.view(), Ridge::default()),
            Err(Error::Input(_))
        ));
        let mut bad = gaussian(10, 2, 0);
        bad[[3, 1]] = f64::NAN;
        let ok = gaussian(10, 2, 1);
        assert!(matches!(
            fit_cca(bad.view(), ok.view(), Ridge::default()),
            Err(Error::Data { .. })
        ));
        let zeros = Array2::zeros((10, 2));
        assert!(matches!(
            fit_cca(zeros.view(), ok.view(), Ridge::Absolute(1e-8)),
            Err(Error::Data { .. })
        ));
        assert!(fit_cca(ok.view(), ok.view(), Ridge::Absolute(0.0)).is_err());
    }

    #[test]
    fn underdetermined_warns() {
        let x = gaussian(5, 8, 0);
        let y = gaussian(5, 3, 1);
        let r = fit_cca(x.view(), y.view(), Ridge::default()).unwrap();
        assert_eq!(r.warnings, vec![Warning::Underdetermined { n: 5, d1: 8, d2: 3 }]);
    }

    #[test]
    fn curve_checks_rows() {
        let reference = FeatureMatrix::new(gaussian(50, 3, 0)).unwrap();
        let short = FeatureMatrix::new(gaussian(40, 3, 1)).unwrap().with_layer_id(7);
        let err = layer_curve(&[reference.clone(), short], &reference, Ridge::default()).unwrap_err();
        assert!(
            matches!(err, Error::Alignment(ref m) if m.contains("layer 7")),
            "{err}"
        );
    }
}
