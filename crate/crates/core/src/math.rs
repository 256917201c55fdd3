//! Float helpers that compile with or without `std`.

#[cfg(feature = "std")]
mod imp {
    #[inline]
    pub fn exp(x: f64) -> f64 {
        x.exp()
    }
    #[inline]
    pub fn ln(x: f64) -> f64 {
        x.ln()
    }
    #[inline]
    pub fn sqrt(x: f64) -> f64 {
        x.sqrt()
    }
    #[inline]
    pub fn sin(x: f64) -> f64 {
        x.sin()
    }
    #[inline]
    pub fn cos(x: f64) -> f64 {
        x.cos()
    }
    #[inline]
    pub fn atan2(y: f64, x: f64) -> f64 {
        y.atan2(x)
    }
    #[inline]
    pub fn asin(x: f64) -> f64 {
        x.asin()
    }
    #[inline]
    pub fn expf(x: f32) -> f32 {
        x.exp()
    }
    #[inline]
    pub fn sqrtf(x: f32) -> f32 {
        x.sqrt()
    }
}

#[cfg(not(feature = "std"))]
mod imp {
    pub use libm::{asin, atan2, cos, exp, expf, sin, sqrt, sqrtf};
    #[inline]
    pub fn ln(x: f64) -> f64 {
        libm::log(x)
    }
}

pub use imp::*;

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

/// `ceil` that ignores float noise just above an integer, so that
/// `0.7 * 10.0` counts as 7 rather than 8.
#[inline]
pub fn ceil_tolerant(x: f64) -> f64 {
    libm::ceil(x - 1e-9)
}

/// Natural log with the argument clamped below at `eps`.
#[inline]
pub fn ln_clamped(x: f64, eps: f64) -> f64 {
    ln(if x < eps { eps } else { x })
}

/// Numerically stable softmax of `logits` written into `out`.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = exp(z - max);
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Euclidean remainder: the result lies in [0, m) for positive `m`.
#[inline]
pub fn rem_euclid(x: f64, m: f64) -> f64 {
    let r = libm::fmod(x, m);
    if r < 0.0 {
        r + m
    } else {
        r
    }
}
