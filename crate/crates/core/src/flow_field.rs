//! Spatio-temporal radial basis flow model.
//!
//! The ambient depth-averaged flow is modelled as `F(x, t) = θ φ(x, t)` where
//! `θ` is a `2 × N` parameter matrix (row 0 eastward `u`, row 1 northward `v`)
//! and each basis function is
//!
//! ```text
//! φ_i(x, t) = exp(-‖x - c_i‖ / (2 σ_i)) · cos(ω_i t + υ_i)
//! ```
//!
//! Note the distance enters un-squared, which gives a Laplacian-shaped kernel
//! rather than the more common squared-exponential `exp(-‖x - c‖² / (2σ²))`.
//! Swapping kernels only requires changing [`BasisFunction::spatial_factor`].

use nalgebra::{DVector, Matrix2xX, Vector2};

use crate::error::{Error, Result};

/// Horizontal position or velocity in the local tangent plane (east, north).
pub type Vec2 = Vector2<f64>;

/// Default coverage floor below which a trajectory point counts as uncovered.
pub const DEFAULT_COVERAGE_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct BasisFunction {
    /// Center in local metres.
    pub center: Vec2,
    /// Width in metres, strictly positive.
    pub width: f64,
    /// Tidal angular frequency, rad/s.
    pub frequency: f64,
    /// Tidal phase, rad.
    pub phase: f64,
}

impl BasisFunction {
    pub fn new(center: Vec2, width: f64, frequency: f64, phase: f64) -> Result<Self> {
        let b = Self {
            center,
            width,
            frequency,
            phase,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center.x.is_finite() && self.center.y.is_finite()) {
            return Err(Error::validation("basis.center", "must be finite"));
        }
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::validation("basis.sigma", "must be finite and > 0"));
        }
        if !(self.frequency.is_finite() && self.frequency >= 0.0) {
            return Err(Error::validation("basis.omega", "must be finite and >= 0"));
        }
        if !self.phase.is_finite() {
            return Err(Error::validation("basis.phase", "must be finite"));
        }
        Ok(())
    }

    /// Spatial envelope `exp(-‖x - c‖ / (2σ))`, in (0, 1].
    #[inline]
    pub fn spatial_factor(&self, x: &Vec2) -> f64 {
        (-(x - self.center).norm() / (2.0 * self.width)).exp()
    }

    /// Tidal modulation `cos(ω t + υ)`.
    #[inline]
    pub fn temporal_factor(&self, t: f64) -> f64 {
        (self.frequency * t + self.phase).cos()
    }

    #[inline]
    pub fn eval(&self, x: &Vec2, t: f64) -> f64 {
        self.spatial_factor(x) * self.temporal_factor(t)
    }
}

/// Ordered basis functions; the order indexes the columns of θ.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    bases: Vec<BasisFunction>,
}

impl BasisSet {
    pub fn new(bases: Vec<BasisFunction>) -> Result<Self> {
        if bases.is_empty() {
            return Err(Error::validation("basis", "at least one basis function is required"));
        }
        for b in &bases {
            b.validate()?;
        }
        Ok(Self { bases })
    }

    /// Four bases on the corners of a bounding box, all sharing one width,
    /// frequency and phase. Each side of the box is stretched to at least
    /// `width` so that degenerate (straight-line) boxes still give four
    /// distinct centers.
    pub fn grid_2x2(min: Vec2, max: Vec2, width: f64, frequency: f64, phase: f64) -> Result<Self> {
        let mut lo = min;
        let mut hi = max;
        for k in 0..2 {
            let span = hi[k] - lo[k];
            if span < width {
                let pad = 0.5 * (width - span);
                lo[k] -= pad;
                hi[k] += pad;
            }
        }
        let corners = [
            Vec2::new(lo.x, lo.y),
            Vec2::new(hi.x, lo.y),
            Vec2::new(lo.x, hi.y),
            Vec2::new(hi.x, hi.y),
        ];
        Self::new(
            corners
                .into_iter()
                .map(|c| BasisFunction {
                    center: c,
                    width,
                    frequency,
                    phase,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn bases(&self) -> &[BasisFunction] {
        &self.bases
    }

    pub fn iter(&self) -> std::slice::Iter<'_, BasisFunction> {
        self.bases.iter()
    }

    /// Evaluate the regressor vector φ(x, t).
    pub fn eval(&self, x: &Vec2, t: f64) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.len());
        self.eval_into(x, t, &mut out)?;
        Ok(out)
    }

    /// Same as [`BasisSet::eval`] but writes into a caller-provided buffer.
    pub fn eval_into(&self, x: &Vec2, t: f64, out: &mut DVector<f64>) -> Result<()> {
        if !(x.x.is_finite() && x.y.is_finite() && t.is_finite()) {
            return Err(Error::Domain(format!(
                "basis evaluated at non-finite point ({}, {}) t = {}",
                x.x, x.y, t
            )));
        }
        if out.len() != self.len() {
            return Err(Error::Config(format!(
                "regressor buffer has length {}, basis set has {}",
                out.len(),
                self.len()
            )));
        }
        for (o, b) in out.iter_mut().zip(&self.bases) {
            *o = b.eval(x, t);
        }
        Ok(())
    }

    /// Largest spatial envelope over all bases at `x`.
    pub fn coverage_factor(&self, x: &Vec2) -> f64 {
        self.bases.iter().map(|b| b.spatial_factor(x)).fold(0.0, f64::max)
    }

    /// Check how well the bases cover a trajectory.
    pub fn coverage_check(&self, trajectory: &[Vec2], floor: f64) -> CoverageReport {
        let factors: Vec<f64> = trajectory.iter().map(|p| self.coverage_factor(p)).collect();
        let flagged = factors
            .iter()
            .enumerate()
            .filter(|(_, &f)| f < floor)
            .map(|(i, _)| i)
            .collect();
        CoverageReport {
            floor,
            factors,
            flagged,
        }
    }

    /// Axis-aligned bounding box of the centers.
    pub fn center_bounds(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for b in &self.bases {
            lo = lo.inf(&b.center);
            hi = hi.sup(&b.center);
        }
        (lo, hi)
    }
}

/// Per-point result of [`BasisSet::coverage_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub floor: f64,
    /// `max_i exp(-‖x - c_i‖ / (2σ_i))` for each trajectory point.
    pub factors: Vec<f64>,
    /// Indices of points whose factor is below `floor`.
    pub flagged: Vec<usize>,
}

impl CoverageReport {
    pub fn is_covered(&self) -> bool {
        self.flagged.is_empty()
    }

    pub fn min_factor(&self) -> Option<f64> {
        self.factors.iter().copied().reduce(f64::min)
    }
}

/// The flow parameter matrix θ, in m/s.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowParameters {
    theta: Matrix2xX<f64>,
}

impl FlowParameters {
    pub fn zeros(n: usize) -> Self {
        Self {
            theta: Matrix2xX::zeros(n),
        }
    }

    pub fn from_matrix(theta: Matrix2xX<f64>) -> Result<Self> {
        if theta.ncols() == 0 {
            return Err(Error::validation("theta", "needs at least one column"));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("theta", "entries must be finite"));
        }
        Ok(Self { theta })
    }

    /// Build from the `u` row and the `v` row.
    pub fn from_rows(u: &[f64], v: &[f64]) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::validation(
                "theta",
                format!("u row has {} entries, v row has {}", u.len(), v.len()),
            ));
        }
        let mut theta = Matrix2xX::zeros(u.len());
        for (i, (a, b)) in u.iter().zip(v).enumerate() {
            theta[(0, i)] = *a;
            theta[(1, i)] = *b;
        }
        Self::from_matrix(theta)
    }

    pub fn matrix(&self) -> &Matrix2xX<f64> {
        &self.theta
    }

    pub fn matrix_mut(&mut self) -> &mut Matrix2xX<f64> {
        &mut self.theta
    }

    pub fn ncols(&self) -> usize {
        self.theta.ncols()
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.theta.row(r).iter().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }

    fn check_dims(&self, basis: &BasisSet) -> Result<()> {
        if self.ncols() != basis.len() {
            return Err(Error::Config(format!(
                "theta has {} columns but the basis set has {} functions",
                self.ncols(),
                basis.len()
            )));
        }
        Ok(())
    }

    /// Flow velocity `θ φ(x, t)` in m/s.
    pub fn eval(&self, basis: &BasisSet, x: &Vec2, t: f64) -> Result<Vec2> {
        self.check_dims(basis)?;
        let phi = basis.eval(x, t)?;
        Ok(&self.theta * phi)
    }

    /// `θ φ` for a precomputed regressor.
    #[inline]
    pub fn apply(&self, phi: &DVector<f64>) -> Vec2 {
        &self.theta * phi
    }
}

/// A flow model bundled with its basis; the simulator's ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub basis: BasisSet,
    pub params: FlowParameters,
}

impl FlowField {
    pub fn new(basis: BasisSet, params: FlowParameters) -> Result<Self> {
        params.check_dims(&basis)?;
        Ok(Self { basis, params })
    }

    pub fn velocity(&self, x: &Vec2, t: f64) -> Result<Vec2> {
        self.params.eval(&self.basis, x, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn one(center: Vec2, width: f64, freq: f64, phase: f64) -> BasisSet {
        BasisSet::new(vec![BasisFunction::new(center, width, freq, phase).unwrap()]).unwrap()
    }

    #[test]
    fn phi_is_one_at_center_with_zero_phase() {
        let bs = one(Vec2::new(10.0, -4.0), 500.0, 2.0 * PI * 1e-6, 0.0);
        let phi = bs.eval(&Vec2::new(10.0, -4.0), 0.0).unwrap();
        assert_eq!(phi[0], 1.0);
    }

    #[test]
    fn phi_at_two_widths_is_inverse_e() {
        let bs = one(Vec2::zeros(), 250.0, 0.0, 0.0);
        let phi = bs.eval(&Vec2::new(300.0, 400.0), 123.0).unwrap();
        assert!((phi[0] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((phi[0] - 0.36788).abs() < 1e-5);
    }

    #[test]
    fn phi_vanishes_at_quarter_period() {
        let omega = 1e-3;
        let bs = one(Vec2::zeros(), 100.0, omega, 0.0);
        let t = FRAC_PI_2 / omega;
        for x in [Vec2::zeros(), Vec2::new(1e4, -3e3)] {
            assert!(bs.eval(&x, t).unwrap()[0].abs() < 1e-12);
        }
        let bs = one(Vec2::zeros(), 100.0, 0.0, FRAC_PI_2);
        assert!(bs.eval(&Vec2::new(5.0, 5.0), 0.0).unwrap()[0].abs() < 1e-15);
    }

    #[test]
    fn non_finite_inputs_are_domain_errors() {
        let bs = one(Vec2::zeros(), 100.0, 0.0, 0.0);
        assert!(matches!(bs.eval(&Vec2::new(f64::NAN, 0.0), 0.0), Err(Error::Domain(_))));
        assert!(matches!(bs.eval(&Vec2::zeros(), f64::INFINITY), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_basis_rejected() {
        assert!(BasisFunction::new(Vec2::zeros(), 0.0, 0.0, 0.0).is_err());
        assert!(BasisFunction::new(Vec2::zeros(), 1.0, -1.0, 0.0).is_err());
        assert!(BasisSet::new(vec![]).is_err());
    }

    #[test]
    fn zero_theta_gives_zero_flow() {
        let bs = BasisSet::grid_2x2(Vec2::zeros(), Vec2::new(1e4, 1e4), 13e3, 2.0 * PI * 1e-6, 0.0).unwrap();
        let fp = FlowParameters::zeros(4);
        for (x, t) in [(Vec2::zeros(), 0.0), (Vec2::new(-3e4, 7e3), 5e5)] {
            assert_eq!(fp.eval(&bs, &x, t).unwrap(), Vec2::zeros());
        }
    }

    #[test]
    fn single_entry_theta() {
        let bs = one(Vec2::new(1.0, 2.0), 10.0, 0.0, 0.0);
        let fp = FlowParameters::from_rows(&[0.1], &[0.0]).unwrap();
        let f = fp.eval(&bs, &Vec2::new(1.0, 2.0), 0.0).unwrap();
        assert_eq!(f, Vec2::new(0.1, 0.0));
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let bs = one(Vec2::zeros(), 10.0, 0.0, 0.0);
        let fp = FlowParameters::zeros(2);
        assert!(matches!(fp.eval(&bs, &Vec2::zeros(), 0.0), Err(Error::Config(_))));
        assert!(FlowField::new(bs, fp).is_err());
    }

    #[test]
    fn coverage_at_center_and_far_away() {
        let sigma = 100.0;
        let bs = BasisSet::new(vec![
            BasisFunction::new(Vec2::new(0.0, 0.0), sigma, 0.0, 0.0).unwrap(),
            BasisFunction::new(Vec2::new(50.0, 0.0), sigma, 0.0, 0.0).unwrap(),
        ])
        .unwrap();
        let report = bs.coverage_check(&[Vec2::zeros()], DEFAULT_COVERAGE_FLOOR);
        assert_eq!(report.factors[0], 1.0);
        assert!(report.is_covered());

        // |(600, 800)| = 1000 = 10σ
        let single = one(Vec2::zeros(), sigma, 0.0, 0.0);
        let far = Vec2::new(600.0, 800.0);
        let report = single.coverage_check(&[far], DEFAULT_COVERAGE_FLOOR);
        assert!((report.factors[0] - (-5.0f64).exp()).abs() < 1e-15);
        assert!((report.factors[0] - 0.0067).abs() < 1e-4);
        assert_eq!(report.flagged, vec![0]);
    }

    #[test]
    fn grid_pads_degenerate_boxes() {
        let bs = BasisSet::grid_2x2(Vec2::zeros(), Vec2::new(2e4, 0.0), 13e3, 0.0, 0.0).unwrap();
        let (lo, hi) = bs.center_bounds();
        assert_eq!(hi.x - lo.x, 2e4);
        assert_eq!(hi.y - lo.y, 13e3);
        assert_eq!(bs.len(), 4);
    }
}
