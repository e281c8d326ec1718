//! Power and ratio algebra in the decibel and linear domains.
//!
//! Every inter-module power exchange uses the semantic types [`Dbm`] and
//! [`Db`] rather than raw reals; link-budget unit bugs are the dominant
//! defect class in this kind of simulator. Comparisons use the fixed
//! [`POWER_TOL_DB`] tolerance.

use num_traits::{Float, FromPrimitive};
use std::fmt;
use std::ops::{Add, Neg, Sub};
use thiserror::Error;

/// Scalar type the unit and link-budget math is generic over.
pub trait Scalar: Float + FromPrimitive + fmt::Debug + fmt::Display {
    /// Lossless-enough constant lift from f64.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Tolerance for power comparisons, in dB.
pub const POWER_TOL_DB: f64 = 1e-6;

/// Errors from the unit algebra.
#[derive(Debug, Error, PartialEq)]
pub enum UnitsError {
    /// Linear power must be strictly positive to have a dB representation.
    #[error("non-positive power in milliwatts: {0}")]
    NonPositivePower(f64),
    /// Power sums need at least one term.
    #[error("empty power sequence")]
    EmptySequence,
    /// Noise floor needs a positive bandwidth.
    #[error("non-positive bandwidth: {0} Hz")]
    NonPositiveBandwidth(f64),
}

/// Absolute power in dBm (decibels relative to 1 milliwatt).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Dbm<F>(F);

/// Dimensionless power ratio in dB (gain when positive, loss when negative).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Db<F>(F);

impl<F: Scalar> Dbm<F> {
    pub fn new(value: F) -> Self {
        debug_assert!(value.is_finite(), "dBm value must be finite: {value}");
        Dbm(value)
    }

    pub fn value(self) -> F {
        self.0
    }
}

impl<F: Scalar> Db<F> {
    pub fn new(value: F) -> Self {
        debug_assert!(value.is_finite(), "dB value must be finite: {value}");
        Db(value)
    }

    pub fn value(self) -> F {
        self.0
    }

    pub fn zero() -> Self {
        Db(F::zero())
    }
}

impl<F: Scalar> fmt::Display for Dbm<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} dBm", self.0)
    }
}

impl<F: Scalar> fmt::Display for Db<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} dB", self.0)
    }
}

impl<F: Scalar> Add<Db<F>> for Dbm<F> {
    type Output = Dbm<F>;
    fn add(self, rhs: Db<F>) -> Dbm<F> {
        Dbm::new(self.0 + rhs.0)
    }
}

impl<F: Scalar> Sub<Db<F>> for Dbm<F> {
    type Output = Dbm<F>;
    fn sub(self, rhs: Db<F>) -> Dbm<F> {
        Dbm::new(self.0 - rhs.0)
    }
}

/// Difference of two absolute powers is a ratio.
impl<F: Scalar> Sub for Dbm<F> {
    type Output = Db<F>;
    fn sub(self, rhs: Dbm<F>) -> Db<F> {
        Db::new(self.0 - rhs.0)
    }
}

impl<F: Scalar> Add for Db<F> {
    type Output = Db<F>;
    fn add(self, rhs: Db<F>) -> Db<F> {
        Db::new(self.0 + rhs.0)
    }
}

impl<F: Scalar> Sub for Db<F> {
    type Output = Db<F>;
    fn sub(self, rhs: Db<F>) -> Db<F> {
        Db::new(self.0 - rhs.0)
    }
}

impl<F: Scalar> Neg for Db<F> {
    type Output = Db<F>;
    fn neg(self) -> Db<F> {
        Db::new(-self.0)
    }
}

/// dBm to linear milliwatts: 10^(p/10).
pub fn dbm_to_mw<F: Scalar>(p: Dbm<F>) -> F {
    F::c(10.0).powf(p.0 / F::c(10.0))
}

/// Linear milliwatts to dBm. Errors on non-positive input.
pub fn mw_to_dbm<F: Scalar>(mw: F) -> Result<Dbm<F>, UnitsError> {
    if mw <= F::zero() || !mw.is_finite() {
        return Err(UnitsError::NonPositivePower(
            mw.to_f64().unwrap_or(f64::NAN),
        ));
    }
    Ok(Dbm::new(F::c(10.0) * mw.log10()))
}

/// Sum of powers in the linear domain, converted back to dBm.
pub fn sum_powers<F: Scalar>(powers: &[Dbm<F>]) -> Result<Dbm<F>, UnitsError> {
    if powers.is_empty() {
        return Err(UnitsError::EmptySequence);
    }
    let total = powers
        .iter()
        .fold(F::zero(), |acc, &p| acc + dbm_to_mw(p));
    mw_to_dbm(total)
}

/// Thermal noise floor: -174 dBm/Hz + 10·log10(bandwidth) + noise figure.
pub fn noise_floor<F: Scalar>(bandwidth_hz: F, noise_figure: Db<F>) -> Result<Dbm<F>, UnitsError> {
    if bandwidth_hz <= F::zero() || !bandwidth_hz.is_finite() {
        return Err(UnitsError::NonPositiveBandwidth(
            bandwidth_hz.to_f64().unwrap_or(f64::NAN),
        ));
    }
    Ok(Dbm::new(
        F::c(-174.0) + F::c(10.0) * bandwidth_hz.log10() + noise_figure.0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn dbm_mw_definition_points() {
        assert!(close(dbm_to_mw(Dbm::new(0.0)), 1.0, 1e-12));
        assert!(close(dbm_to_mw(Dbm::new(24.0)), 251.18864315095797, 1e-9));
        assert!(close(mw_to_dbm(1.0f64).unwrap().value(), 0.0, 1e-12));
    }

    #[test]
    fn mw_to_dbm_rejects_non_positive() {
        assert_eq!(mw_to_dbm(0.0f64), Err(UnitsError::NonPositivePower(0.0)));
        assert_eq!(mw_to_dbm(-3.0f64), Err(UnitsError::NonPositivePower(-3.0)));
    }

    #[test]
    fn round_trip_within_tolerance() {
        for i in 0..=250 {
            let dbm = -200.0 + i as f64;
            let back = mw_to_dbm(dbm_to_mw(Dbm::new(dbm))).unwrap();
            assert!(
                close(back.value(), dbm, 1e-9),
                "round trip at {dbm} dBm gave {}",
                back.value()
            );
        }
    }

    #[test]
    fn round_trip_f32() {
        let p = Dbm::<f32>::new(-60.0);
        let back = mw_to_dbm(dbm_to_mw(p)).unwrap();
        assert!((back.value() - -60.0).abs() < 1e-3);
    }

    #[test]
    fn sum_two_equal_powers() {
        let s = sum_powers(&[Dbm::new(-90.0), Dbm::new(-90.0)]).unwrap();
        assert!(close(s.value(), -86.98970004336019, 1e-9));
    }

    #[test]
    fn sum_singleton_identity() {
        let s = sum_powers(&[Dbm::new(-17.25)]).unwrap();
        assert!(close(s.value(), -17.25, 1e-9));
    }

    #[test]
    fn sum_dominant_term() {
        let s = sum_powers(&[Dbm::new(-40.0), Dbm::new(-90.0)]).unwrap();
        assert!(close(s.value(), -39.99995657076895, 1e-9));
    }

    #[test]
    fn sum_empty_is_error() {
        assert_eq!(sum_powers::<f64>(&[]), Err(UnitsError::EmptySequence));
    }

    #[test]
    fn noise_floor_table_values() {
        let ap = noise_floor(80e6, Db::new(7.0)).unwrap();
        assert!(close(ap.value(), -87.96910013008056, 1e-9));
        let sta = noise_floor(80e6, Db::new(9.0)).unwrap();
        assert!(close(sta.value(), -85.96910013008056, 1e-9));
        let density = noise_floor(1.0, Db::zero()).unwrap();
        assert!(close(density.value(), -174.0, 1e-12));
    }

    #[test]
    fn noise_floor_rejects_bad_bandwidth() {
        assert!(noise_floor(0.0f64, Db::zero()).is_err());
        assert!(noise_floor(-5.0f64, Db::zero()).is_err());
    }

    #[test]
    fn noise_floor_increasing_in_both_arguments() {
        let base = noise_floor(80e6, Db::new(7.0)).unwrap().value();
        assert!(noise_floor(81e6, Db::new(7.0)).unwrap().value() > base);
        assert!(noise_floor(80e6, Db::new(7.1)).unwrap().value() > base);
    }

    #[test]
    fn unit_arithmetic() {
        let p = Dbm::new(24.0) - Db::new(63.99);
        assert!(close(p.value(), -39.99, 1e-12));
        let g = Dbm::new(-40.0) - Dbm::new(-88.0);
        assert!(close(g.value(), 48.0, 1e-12));
        let q = Dbm::new(-88.0) + Db::new(4.77);
        assert!(close(q.value(), -83.23, 1e-12));
    }
}
