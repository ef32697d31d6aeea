//! Scalar abstraction: everything numeric is generic over a real float type.

use num_complex::Complex;

/// Real scalar: f32 or f64.
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumAssign
    + std::fmt::Debug
    + std::fmt::Display
    + std::fmt::LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from f64, used for literals and seeded sampling so
    /// that f32 and f64 runs draw the same underlying stream.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal must convert")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("real scalar must convert to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex scalar over a [`Real`].
pub type C<R> = Complex<R>;

pub fn c_zero<R: Real>() -> C<R> {
    Complex::new(R::zero(), R::zero())
}

pub fn c_one<R: Real>() -> C<R> {
    Complex::new(R::one(), R::zero())
}

pub fn c_re<R: Real>(x: R) -> C<R> {
    Complex::new(x, R::zero())
}

/// Standard normal draw. Sampling always happens in f64 so that runs with
/// different scalar types consume the same stream from a seeded generator.
pub fn std_normal<R: Real>(rng: &mut impl rand::Rng) -> R {
    let x: f64 = rng.sample(rand_distr::StandardNormal);
    R::of(x)
}

/// Standard complex normal draw (independent real and imaginary parts).
pub fn c_std_normal<R: Real>(rng: &mut impl rand::Rng) -> C<R> {
    let re = std_normal::<R>(rng);
    let im = std_normal::<R>(rng);
    Complex::new(re, im)
}
