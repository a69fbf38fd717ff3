//! Scalar-generic vector and statistics kernels.
//!
//! Everything here is generic over [`num_traits::Float`] so the math can be
//! instantiated at `f32` or `f64`; the pipeline uses the crate-level
//! [`crate::Scalar`] alias. Functions operate on raw slices and assume the
//! caller has already checked dimensions.

use num_traits::Float;

/// Dot product of two equal-length slices.
pub fn dot<F: Float>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b.iter())
        .fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// L2 norm.
pub fn norm<F: Float>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

/// Cosine similarity. Returns `None` when either vector has zero norm.
pub fn cosine<F: Float>(a: &[F], b: &[F]) -> Option<F> {
    let na = norm(a);
    let nb = norm(b);
    if na == F::zero() || nb == F::zero() {
        return None;
    }
    // Clamp to [-1, 1]; rounding can push the quotient marginally outside.
    let c = dot(a, b) / (na * nb);
    Some(c.min(F::one()).max(-F::one()))
}

/// Euclidean (L2) distance.
pub fn euclidean<F: Float>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b.iter())
        .fold(F::zero(), |acc, (&x, &y)| {
            let d = x - y;
            acc + d * d
        })
        .sqrt()
}

/// Component-wise arithmetic mean of equal-length rows. Returns `None` for
/// an empty input. The result is not re-normalized.
pub fn mean<F: Float>(rows: &[&[F]]) -> Option<Vec<F>> {
    let first = rows.first()?;
    let mut acc = vec![F::zero(); first.len()];
    for row in rows {
        debug_assert_eq!(row.len(), acc.len());
        for (a, &x) in acc.iter_mut().zip(row.iter()) {
            *a = *a + x;
        }
    }
    let n = F::from(rows.len()).expect("row count representable");
    for a in acc.iter_mut() {
        *a = *a / n;
    }
    Some(acc)
}

/// Scale `v` in place by `c`.
pub fn scale<F: Float>(v: &mut [F], c: F) {
    for x in v.iter_mut() {
        *x = *x * c;
    }
}

/// Logistic function `1 / (1 + exp(-x))`.
pub fn sigmoid<F: Float>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// Min-max rescaling of `values` onto `[lo, hi]`. When all values coincide
/// every output is the midpoint of the target range.
pub fn min_max_rescale<F: Float>(values: &[F], lo: F, hi: F) -> Vec<F> {
    let Some(&first) = values.first() else {
        return Vec::new();
    };
    let (min, max) = values.iter().fold((first, first), |(mn, mx), &v| {
        (mn.min(v), mx.max(v))
    });
    let span = max - min;
    let two = F::one() + F::one();
    if span == F::zero() {
        return vec![(lo + hi) / two; values.len()];
    }
    values
        .iter()
        .map(|&v| lo + (v - min) / span * (hi - lo))
        .collect()
}

/// Nearest-rank percentile of an unsorted sample, `p` in `[0, 1]`.
/// Returns `None` for an empty sample.
pub fn percentile<F: Float>(values: &[F], p: F) -> Option<F> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let max_idx = F::from(sorted.len() - 1).expect("index representable");
    let idx = (max_idx * p).round().to_usize().unwrap_or(0);
    Some(sorted[idx.min(sorted.len() - 1)])
}

/// Median of an unsorted sample; even-sized samples return the midpoint of
/// the two central values. Returns `None` for an empty sample.
pub fn median<F: Float>(values: &[F]) -> Option<F> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mid = sorted.len() / 2;
    let two = F::one() + F::one();
    if sorted.len() % 2 == 1 {
        Some(sorted[mid])
    } else {
        Some((sorted[mid - 1] + sorted[mid]) / two)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_and_norm() {
        assert_eq!(dot(&[1.0, 2.0], &[3.0, 4.0]), 11.0);
        assert_eq!(norm(&[3.0, 4.0]), 5.0);
    }

    #[test]
    fn cosine_basic() {
        let c: f64 = cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), None::<f64>);
    }

    #[test]
    fn cosine_is_clamped() {
        let v = [0.1f64, 0.2, 0.3, 0.4];
        let c = cosine(&v, &v).unwrap();
        assert!(c <= 1.0 && (c - 1.0).abs() < 1e-15);
    }

    #[test]
    fn euclidean_345() {
        assert_eq!(euclidean(&[0.0, 0.0], &[3.0, 4.0]), 5.0);
    }

    #[test]
    fn mean_of_rows() {
        let a = [1.0, 0.0];
        let b = [0.0, 1.0];
        assert_eq!(mean(&[&a, &b]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(mean::<f64>(&[]), None);
    }

    #[test]
    fn sigmoid_symmetry() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        let s: f64 = sigmoid(2.0);
        assert!((s + sigmoid(-2.0f64) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn min_max_examples() {
        assert_eq!(
            min_max_rescale(&[2.0, 4.0, 6.0], 0.0, 10.0),
            vec![0.0, 5.0, 10.0]
        );
        assert_eq!(
            min_max_rescale(&[3.0, 3.0, 3.0], 0.0, 10.0),
            vec![5.0, 5.0, 5.0]
        );
    }

    #[test]
    fn median_and_percentile() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(percentile(&[1.0, 2.0, 3.0], 1.0), Some(3.0));
        assert_eq!(percentile::<f64>(&[], 0.5), None);
    }

    // f32 instantiation compiles and agrees with f64 on simple inputs.
    #[test]
    fn generic_over_f32() {
        let c: f32 = cosine(&[1.0f32, 0.0], &[0.0, 1.0]).unwrap();
        assert!(c.abs() < 1e-6);
    }
}
