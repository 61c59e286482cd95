//! Small descriptive statistics used by route metrics and run aggregation.

use crate::scalar::Scalar;

pub fn mean<T: Scalar>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    let sum = xs.iter().fold(T::zero(), |acc, &x| acc + x);
    Some(sum / T::from_usize(xs.len())?)
}

/// Sample standard deviation (n − 1 denominator). A single value has sd 0.
pub fn sample_sd<T: Scalar>(xs: &[T]) -> Option<T> {
    let m = mean(xs)?;
    if xs.len() < 2 {
        return Some(T::zero());
    }
    let ss = xs.iter().fold(T::zero(), |acc, &x| acc + (x - m) * (x - m));
    Some((ss / T::from_usize(xs.len() - 1)?).sqrt())
}

/// Inclusive linear-interpolation quantile of already sorted data:
/// position `h = (n − 1)·q`, interpolating between the neighbouring order statistics.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], q: T) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let q = q.max(T::zero()).min(T::one());
    let h = T::from_usize(sorted.len() - 1)? * q;
    let lo = h.floor();
    let lo_i = lo.to_usize()?;
    let hi_i = (lo_i + 1).min(sorted.len() - 1);
    let frac = h - lo;
    Some(sorted[lo_i] + (sorted[hi_i] - sorted[lo_i]) * frac)
}

/// Five-number summary plus mean and sd.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Summary<T> {
    pub min: T,
    pub q1: T,
    pub median: T,
    pub q3: T,
    pub max: T,
    pub mean: T,
    pub sd: T,
}

pub fn summarize<T: Scalar>(xs: &[T]) -> Option<Summary<T>> {
    let mut sorted: Vec<T> = xs.to_vec();
    if sorted.iter().any(|x| x.is_nan()) {
        return None;
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("nan filtered"));
    Some(Summary {
        min: *sorted.first()?,
        q1: quantile_sorted(&sorted, T::lit(0.25))?,
        median: quantile_sorted(&sorted, T::lit(0.5))?,
        q3: quantile_sorted(&sorted, T::lit(0.75))?,
        max: *sorted.last()?,
        mean: mean(&sorted)?,
        sd: sample_sd(&sorted)?,
    })
}
