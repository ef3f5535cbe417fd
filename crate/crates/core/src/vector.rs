//! Dense vector kernels. Accumulation is done in `f64`.

/// Dot product accumulated in `f64`.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Squared Euclidean norm.
pub fn norm_sq(a: &[f32]) -> f64 {
    a.iter().map(|&x| x as f64 * x as f64).sum()
}

pub fn norm(a: &[f32]) -> f64 {
    libm::sqrt(norm_sq(a))
}

/// Cosine similarity; zero when either side is the zero vector.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let na = norm_sq(a);
    let nb = norm_sq(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    // sqrt(na * nb) keeps cosine(x, x) == 1.0 exactly.
    dot(a, b) / libm::sqrt(na * nb)
}
