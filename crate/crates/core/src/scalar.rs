//! Scalar abstraction shared by every model computation.
//!
//! All forward passes are written once against [`Real`]. Plain floats
//! (`f32`, `f64`) evaluate the model; [`crate::autodiff::Var`] records the
//! same computation on a tape so gradients come out of the identical code
//! path.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::Float;

pub trait Real:
    Copy + Debug + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;

    /// Primal value, used for branching (ReLU kinks, top-k selection).
    fn value(self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;

    /// Cuts the gradient path; identity on plain floats.
    fn detach(self) -> Self {
        self
    }

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        a.iter().zip(b).fold(Self::zero(), |acc, (&x, &y)| acc + x * y)
    }

    fn sum(xs: &[Self]) -> Self {
        xs.iter().fold(Self::zero(), |acc, &x| acc + x)
    }

    fn sigmoid(self) -> Self {
        let half = Self::from_f64(0.5);
        half * (self * half).tanh() + half
    }

    fn leaky_relu(self, slope: f64) -> Self {
        if self.value() >= 0.0 {
            self
        } else {
            self * Self::from_f64(slope)
        }
    }

    /// ELU with unit scale.
    fn elu(self) -> Self {
        if self.value() > 0.0 {
            self
        } else {
            self.exp() - Self::one()
        }
    }
}

macro_rules! impl_real_for_float {
    ($($t:ty),*) => {$(
        impl Real for $t {
            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn value(self) -> f64 {
                self as f64
            }
            #[inline]
            fn exp(self) -> Self {
                Float::exp(self)
            }
            #[inline]
            fn ln(self) -> Self {
                Float::ln(self)
            }
            #[inline]
            fn tanh(self) -> Self {
                Float::tanh(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                Float::sqrt(self)
            }
            #[inline]
            fn abs(self) -> Self {
                Float::abs(self)
            }
        }
    )*};
}

impl_real_for_float!(f32, f64);

/// Numerically stable softmax.
pub fn softmax<S: Real>(scores: &[S]) -> Vec<S> {
    if scores.is_empty() {
        return Vec::new();
    }
    // Shift by the max primal value; the constant cancels in the ratio.
    let max = scores.iter().map(|s| s.value()).fold(f64::NEG_INFINITY, f64::max);
    let shift = S::from_f64(max);
    let exps: Vec<S> = scores.iter().map(|&s| (s - shift).exp()).collect();
    let total = S::sum(&exps);
    exps.into_iter().map(|e| e / total).collect()
}

pub fn uniform<S: Real>(n: usize) -> Vec<S> {
    vec![S::from_f64(1.0 / n as f64); n]
}

pub fn values<S: Real>(xs: &[S]) -> Vec<f64> {
    xs.iter().map(|x| x.value()).collect()
}

pub fn lift<S: Real>(xs: &[f64]) -> Vec<S> {
    xs.iter().map(|&x| S::from_f64(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_closed_form() {
        let w = softmax(&[2f64.ln(), 0.0]);
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_handles_large_scores() {
        let w = softmax(&[1000.0f64, 1000.0]);
        assert_eq!(w, vec![0.5, 0.5]);
    }

    #[test]
    fn activations_match_definitions() {
        assert_eq!(Real::elu(2.0f64), 2.0);
        assert!((Real::elu(-1.0f64) - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
        assert_eq!(Real::leaky_relu(-1.0f64, 0.2), -0.2);
        assert!((Real::sigmoid(0.3f64) - 1.0 / (1.0 + (-0.3f64).exp())).abs() < 1e-15);
        assert!((Real::sigmoid(0.3f32) - 1.0 / (1.0 + (-0.3f32).exp())).abs() < 1e-6);
    }
}
