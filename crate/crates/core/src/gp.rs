//! Gaussian-process beliefs over a fixed, finite set of query locations.
//!
//! A [`GaussianProcessBelief`] keeps the raw conditioning data (locations,
//! measurements and one noise variance per measurement) together with a
//! cached posterior over its query set. The cache is maintained by rank-one
//! updates as measurements arrive, which is what the planner relies on; the
//! batch route in [`GaussianProcessBelief::posterior`] factorizes the full
//! conditioning system and serves arbitrary targets.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A location in the plane, in grid-cell units.
pub type Coord = [f64; 2];

/// Jitter added to the diagonal, relative to the kernel's signal variance.
pub const BASE_JITTER: f64 = 1e-8;
/// Largest relative jitter tried before a factorization is declared failed.
pub const MAX_JITTER: f64 = 1e-4;
/// Noise variance recorded for measurements that reveal the true value.
pub const JITTER_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    SquaredExponential,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub signal_variance: f64,
    pub lengthscale: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            kind: KernelKind::SquaredExponential,
            signal_variance: 1.0,
            lengthscale: 1.5,
        }
    }
}

impl KernelSpec {
    pub fn squared_exponential(signal_variance: f64, lengthscale: f64) -> Result<Self> {
        let spec = KernelSpec {
            kind: KernelKind::SquaredExponential,
            signal_variance,
            lengthscale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(Error::InvalidKernel(format!(
                "signal variance must be positive, got {}",
                self.signal_variance
            )));
        }
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(Error::InvalidKernel(format!(
                "lengthscale must be positive, got {}",
                self.lengthscale
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, a: &Coord, b: &Coord) -> f64 {
        match self.kind {
            KernelKind::SquaredExponential => {
                let dx = a[0] - b[0];
                let dy = a[1] - b[1];
                let sq = dx * dx + dy * dy;
                self.signal_variance * (-sq / (2.0 * self.lengthscale * self.lengthscale)).exp()
            }
        }
    }

    /// Kernel matrix with `rows` indexing rows and `cols` indexing columns.
    pub fn matrix(&self, rows: &[Coord], cols: &[Coord]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.eval(&rows[i], &cols[j]))
    }

    fn absolute_jitter(&self) -> f64 {
        BASE_JITTER * self.signal_variance
    }
}

/// Evaluates `spec` at a pair of locations.
pub fn kernel_eval(x: &Coord, x_prime: &Coord, spec: &KernelSpec) -> f64 {
    spec.eval(x, x_prime)
}

/// Posterior mean and covariance over a list of target locations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl PosteriorSummary {
    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.covariance.diagonal().iter().copied().collect()
    }

    pub fn trace(&self) -> f64 {
        self.covariance.trace()
    }
}

/// Cached posterior over the query set.
#[derive(Clone, Debug)]
struct QueryPosterior {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    trace: f64,
}

#[derive(Clone, Debug)]
pub struct GaussianProcessBelief {
    prior_mean: f64,
    kernel: KernelSpec,
    query_set: Arc<[Coord]>,
    locations: Vec<Coord>,
    measurements: Vec<f64>,
    noise_variances: Vec<f64>,
    cache: Arc<QueryPosterior>,
}

impl GaussianProcessBelief {
    pub fn new(prior_mean: f64, kernel: KernelSpec, query_set: Vec<Coord>) -> Result<Self> {
        kernel.validate()?;
        if query_set.is_empty() {
            return Err(Error::EmptyQuerySet);
        }
        let covariance = kernel.matrix(&query_set, &query_set);
        let cache = QueryPosterior {
            mean: DVector::from_element(query_set.len(), prior_mean),
            trace: covariance.trace(),
            covariance,
        };
        Ok(GaussianProcessBelief {
            prior_mean,
            kernel,
            query_set: query_set.into(),
            locations: Vec::new(),
            measurements: Vec::new(),
            noise_variances: Vec::new(),
            cache: Arc::new(cache),
        })
    }

    /// Builds a belief conditioned on a batch of measurements in one shot.
    pub fn with_measurements(
        prior_mean: f64,
        kernel: KernelSpec,
        query_set: Vec<Coord>,
        data: &[(Coord, f64, f64)],
    ) -> Result<Self> {
        let mut gp = Self::new(prior_mean, kernel, query_set)?;
        for &(_, _, nu) in data {
            check_noise(nu)?;
        }
        gp.locations = data.iter().map(|d| d.0).collect();
        gp.measurements = data.iter().map(|d| d.1).collect();
        gp.noise_variances = data.iter().map(|d| d.2).collect();
        if !data.is_empty() {
            let targets = gp.query_set.to_vec();
            let summary = gp.posterior(&targets)?;
            gp.cache = Arc::new(QueryPosterior {
                trace: summary.covariance.trace(),
                mean: summary.mean,
                covariance: summary.covariance,
            });
        }
        Ok(gp)
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn query_set(&self) -> &[Coord] {
        &self.query_set
    }

    pub fn measured_locations(&self) -> &[Coord] {
        &self.locations
    }

    pub fn measurements(&self) -> &[f64] {
        &self.measurements
    }

    pub fn noise_variances(&self) -> &[f64] {
        &self.noise_variances
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    /// Posterior mean at query point `index`.
    #[inline]
    pub fn mean_at(&self, index: usize) -> f64 {
        self.cache.mean[index]
    }

    /// Posterior variance at query point `index`, clamped at zero.
    #[inline]
    pub fn variance_at(&self, index: usize) -> f64 {
        self.cache.covariance[(index, index)].max(0.0)
    }

    /// Sum of posterior variances over the query set.
    #[inline]
    pub fn trace_of_variance(&self) -> f64 {
        self.cache.trace
    }

    /// The cached posterior over the query set.
    pub fn query_summary(&self) -> PosteriorSummary {
        PosteriorSummary {
            mean: self.cache.mean.clone(),
            covariance: self.cache.covariance.clone(),
        }
    }

    pub fn query_index(&self, x: &Coord) -> Option<usize> {
        self.query_set.iter().position(|q| q == x)
    }

    /// Returns a new belief with one more measurement; `self` is untouched.
    pub fn add_measurement(&self, x: Coord, y: f64, noise_variance: f64) -> Result<Self> {
        let mut next = self.clone();
        next.observe(x, y, noise_variance)?;
        Ok(next)
    }

    /// Conditions this belief in place on one more measurement.
    pub fn observe(&mut self, x: Coord, y: f64, noise_variance: f64) -> Result<()> {
        check_noise(noise_variance)?;
        match self.query_index(&x) {
            Some(index) => {
                self.observe_query_point(index, y, noise_variance);
                Ok(())
            }
            None => self.observe_off_query(x, y, noise_variance),
        }
    }

    /// Conditions in place on a measurement located at query point `index`.
    ///
    /// `noise_variance` must be positive; this is not re-checked here.
    pub fn observe_query_point(&mut self, index: usize, y: f64, noise_variance: f64) {
        debug_assert!(noise_variance > 0.0);
        let jitter = self.kernel.absolute_jitter();
        let cache = Arc::make_mut(&mut self.cache);
        let cross = cache.covariance.column(index).clone_owned();
        let predictive = cross[index].max(0.0) + noise_variance + jitter;
        let innovation = y - cache.mean[index];
        rank_one_condition(cache, &cross, predictive, innovation);
        self.locations.push(self.query_set[index]);
        self.measurements.push(y);
        self.noise_variances.push(noise_variance);
    }

    fn observe_off_query(&mut self, x: Coord, y: f64, noise_variance: f64) -> Result<()> {
        let jitter = self.kernel.absolute_jitter();
        let prior_cross = DVector::from_iterator(
            self.query_set.len(),
            self.query_set.iter().map(|q| self.kernel.eval(q, &x)),
        );
        let prior_var = self.kernel.eval(&x, &x);
        let (cross, var_x, mean_x) = if self.is_empty() {
            (prior_cross, prior_var, self.prior_mean)
        } else {
            let system = self.factorize()?;
            let k_xm = DVector::from_iterator(
                self.locations.len(),
                self.locations.iter().map(|l| self.kernel.eval(l, &x)),
            );
            let k_qm = self.kernel.matrix(&self.query_set, &self.locations);
            let alpha = system.solve(&k_xm);
            let residual = DVector::from_iterator(
                self.measurements.len(),
                self.measurements.iter().map(|v| v - self.prior_mean),
            );
            let weights = system.solve(&residual);
            let cross = prior_cross - &k_qm * &alpha;
            let var_x = prior_var - k_xm.dot(&alpha);
            let mean_x = self.prior_mean + k_xm.dot(&weights);
            (cross, var_x, mean_x)
        };
        let predictive = var_x.max(0.0) + noise_variance + jitter;
        let cache = Arc::make_mut(&mut self.cache);
        rank_one_condition(cache, &cross, predictive, y - mean_x);
        self.locations.push(x);
        self.measurements.push(y);
        self.noise_variances.push(noise_variance);
        Ok(())
    }

    /// Exact posterior at `targets`, factorizing the full conditioning system.
    pub fn posterior(&self, targets: &[Coord]) -> Result<PosteriorSummary> {
        if targets.is_empty() {
            return Err(Error::EmptyTargets);
        }
        let k_tt = self.kernel.matrix(targets, targets);
        if self.is_empty() {
            return Ok(PosteriorSummary {
                mean: DVector::from_element(targets.len(), self.prior_mean),
                covariance: k_tt,
            });
        }
        let system = self.factorize()?;
        let k_xt = self.kernel.matrix(&self.locations, targets);
        let residual = DVector::from_iterator(
            self.measurements.len(),
            self.measurements.iter().map(|v| v - self.prior_mean),
        );
        let weights = system.solve(&residual);
        let mean = k_xt.tr_mul(&weights).add_scalar(self.prior_mean);
        let v = system
            .l_dirty()
            .solve_lower_triangular(&k_xt)
            .ok_or(Error::NotPositiveDefinite { jitter: MAX_JITTER })?;
        let mut covariance = k_tt - v.tr_mul(&v);
        symmetrize(&mut covariance);
        Ok(PosteriorSummary { mean, covariance })
    }

    /// Cholesky factor of `K(X,X) + diag(nu) + jitter I`, escalating jitter on failure.
    fn factorize(&self) -> Result<Cholesky<f64, Dyn>> {
        let mut system = self.kernel.matrix(&self.locations, &self.locations);
        for (i, nu) in self.noise_variances.iter().enumerate() {
            system[(i, i)] += nu;
        }
        let scale = self.kernel.signal_variance;
        let mut jitter = BASE_JITTER;
        loop {
            let mut attempt = system.clone();
            for i in 0..attempt.nrows() {
                attempt[(i, i)] += jitter * scale;
            }
            if let Some(chol) = Cholesky::new(attempt) {
                return Ok(chol);
            }
            jitter *= 10.0;
            if jitter > MAX_JITTER * (1.0 + 1e-9) {
                return Err(Error::NotPositiveDefinite {
                    jitter: MAX_JITTER * scale,
                });
            }
        }
    }
}

fn check_noise(nu: f64) -> Result<()> {
    if nu > 0.0 && nu.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidNoise(nu))
    }
}

fn rank_one_condition(cache: &mut QueryPosterior, cross: &DVector<f64>, predictive: f64, innovation: f64) {
    cache.mean.axpy(innovation / predictive, cross, 1.0);
    cache.covariance.ger(-1.0 / predictive, cross, cross, 1.0);
    cache.trace = cache.covariance.trace();
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// `log |m|` of a symmetric positive-definite matrix.
///
/// Factorizes without jitter first; on failure retries with jitter relative
/// to the mean diagonal, escalating ×10 from `BASE_JITTER` to `MAX_JITTER`.
pub fn log_det(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            left: m.nrows(),
            right: m.ncols(),
        });
    }
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(chol_log_det(&chol));
    }
    let n = m.nrows().max(1) as f64;
    let scale = (m.trace().abs() / n).max(f64::MIN_POSITIVE);
    let mut jitter = BASE_JITTER;
    while jitter <= MAX_JITTER * (1.0 + 1e-9) {
        let mut attempt = m.clone();
        for i in 0..attempt.nrows() {
            attempt[(i, i)] += jitter * scale;
        }
        if let Some(chol) = Cholesky::new(attempt) {
            return Ok(chol_log_det(&chol));
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite {
        jitter: MAX_JITTER * scale,
    })
}

fn chol_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Differential entropy of the Gaussian summarized by `summary`.
pub fn conditional_entropy(summary: &PosteriorSummary) -> Result<f64> {
    let d = summary.dimension() as f64;
    Ok(0.5 * log_det(&summary.covariance)? + 0.5 * d * (1.0 + (2.0 * PI).ln()))
}

/// Information gained between two covariances over the same locations,
/// via log-determinants.
pub fn mutual_information_exact(prev: &DMatrix<f64>, new: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(prev, new)?;
    Ok(0.5 * log_det(prev)? - 0.5 * log_det(new)?)
}

/// Variance-reduction surrogate for [`mutual_information_exact`].
pub fn mutual_information_trace(prev: &DMatrix<f64>, new: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(prev, new)?;
    Ok(prev.trace() - new.trace())
}

fn check_same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            left: a.nrows(),
            right: b.nrows(),
        });
    }
    Ok(())
}

/// Total posterior variance over the belief's query set.
pub fn trace_of_variance(gp: &GaussianProcessBelief) -> f64 {
    gp.trace_of_variance()
}
