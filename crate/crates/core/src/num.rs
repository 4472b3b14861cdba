//! Scalar-generic numeric kernels shared by the classifiers and the radio model.
//!
//! Everything here is written against [`Real`] so the same code runs on `f32`
//! (embedded-style sensor pipelines) and `f64` (the default used by the rest
//! of the crate).

use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive};

/// floating point: f32 or f64
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Default + Send + Sync + 'static {
    /// Lossless-enough conversion from an `f64` constant.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Arithmetic mean, `None` for an empty slice.
pub fn mean<T: Real>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    let sum = xs.iter().fold(T::zero(), |acc, &x| acc + x);
    Some(sum / T::from_usize(xs.len())?)
}

/// Population standard deviation, `None` for an empty slice.
pub fn std_dev<T: Real>(xs: &[T]) -> Option<T> {
    let m = mean(xs)?;
    let var = xs.iter().fold(T::zero(), |acc, &x| acc + (x - m) * (x - m)) / T::from_usize(xs.len())?;
    Some(var.sqrt())
}

/// Median; even-length inputs average the two middle values.
pub fn median<T: Real>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        Some(sorted[mid])
    } else {
        Some((sorted[mid - 1] + sorted[mid]) / T::lit(2.0))
    }
}

/// `20·log10(rms)` clamped from below at `floor_db` (a zero amplitude maps to the floor).
pub fn amplitude_to_db<T: Real>(rms: T, floor_db: T) -> T {
    if rms <= T::zero() {
        return floor_db;
    }
    let db = T::lit(20.0) * rms.log10();
    if db < floor_db {
        floor_db
    } else {
        db
    }
}

/// Signed shortest angular difference `to - from` in degrees, in `[-180, 180)`.
pub fn wrap_delta_deg<T: Real>(from: T, to: T) -> T {
    let full = T::lit(360.0);
    let raw = to - from + T::lit(540.0);
    let m = raw - full * (raw / full).floor();
    m - T::lit(180.0)
}

/// Mean Earth radius used by [`haversine_m`].
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Great-circle distance in meters between two WGS84 points given in degrees.
pub fn haversine_m<T: Real>(lat1: T, lon1: T, lat2: T, lon2: T) -> T {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let half = T::lit(0.5);
    let a = (dp * half).sin().powi(2) + p1.cos() * p2.cos() * (dl * half).sin().powi(2);
    let c = T::lit(2.0) * a.sqrt().atan2((T::one() - a).max(T::zero()).sqrt());
    T::lit(EARTH_RADIUS_M) * c
}

/// Planar Euclidean distance.
pub fn euclidean<T: Real>(a: (T, T), b: (T, T)) -> T {
    (a.0 - b.0).hypot(a.1 - b.1)
}
