//! Scalar abstraction for the numeric kernels.
//!
//! Everything in this crate is generic over a floating-point scalar. The
//! [`Scalar`] trait bundles the field operations from `nalgebra::RealField`
//! with `num-traits` conversions and the handful of random-variate primitives
//! the samplers need. It is implemented for `f32` and `f64`; the rest of the
//! crate never names a concrete float type.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use serde::{de::DeserializeOwned, Serialize};

/// Floating-point scalar usable by every kernel in this crate.
pub trait Scalar:
    RealField
    + FromPrimitive
    + ToPrimitive
    + Copy
    + Default
    + std::fmt::Display
    + std::iter::Sum
    + Serialize
    + DeserializeOwned
{
    /// Converts an `f64` constant into this scalar type.
    fn of(x: f64) -> Self;

    /// Lossy view as `f64` (exact for `f64` itself).
    fn as_f64(self) -> f64;

    /// One standard-normal draw.
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One uniform draw on the open interval (0, 1).
    fn uniform_open01<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One draw from Gamma(shape, rate) with mean `shape / rate`.
    ///
    /// Parameters must be strictly positive; callers validate.
    fn gamma_draw<R: Rng + ?Sized>(shape: Self, rate: Self, rng: &mut R) -> Self;

    /// One draw from Beta(a, b). Parameters must be strictly positive.
    fn beta_draw<R: Rng + ?Sized>(a: Self, b: Self, rng: &mut R) -> Self;

    /// One draw from Binomial(n, p) with `p` in [0, 1].
    fn binomial_draw<R: Rng + ?Sized>(n: u64, p: Self, rng: &mut R) -> u64;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn of(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            #[inline]
            fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            #[inline]
            fn uniform_open01<R: Rng + ?Sized>(rng: &mut R) -> Self {
                Open01.sample(rng)
            }

            fn gamma_draw<R: Rng + ?Sized>(shape: Self, rate: Self, rng: &mut R) -> Self {
                let g = rand_distr::Gamma::<$t>::new(shape, 1.0 / rate)
                    .expect("gamma parameters validated by caller");
                g.sample(rng)
            }

            fn beta_draw<R: Rng + ?Sized>(a: Self, b: Self, rng: &mut R) -> Self {
                let d = rand_distr::Beta::<$t>::new(a, b)
                    .expect("beta parameters validated by caller");
                d.sample(rng)
            }

            fn binomial_draw<R: Rng + ?Sized>(n: u64, p: Self, rng: &mut R) -> u64 {
                if n == 0 {
                    return 0;
                }
                let d = rand_distr::Binomial::new(n, p as f64)
                    .expect("binomial parameters validated by caller");
                d.sample(rng)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_conversion_round_trips() {
        assert_eq!(f64::of(0.25), 0.25);
        assert_eq!(f32::of(0.25), 0.25f32);
        assert_eq!(0.25f64.as_f64(), 0.25);
    }

    #[test]
    fn binomial_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(f64::binomial_draw(0, 0.7, &mut rng), 0);
        assert_eq!(f64::binomial_draw(25, 1.0, &mut rng), 25);
        assert_eq!(f64::binomial_draw(25, 0.0, &mut rng), 0);
    }

    #[test]
    fn kernels_instantiate_at_f32() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: f32 = f32::std_normal(&mut rng);
        assert!(x.is_finite());
        let g: f32 = f32::gamma_draw(2.0, 4.0, &mut rng);
        assert!(g > 0.0);
    }
}
