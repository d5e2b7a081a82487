/// Weighted isotonic (nondecreasing) regression by pool-adjacent-violators.
///
/// `weights` must be positive. Returns the fitted value for every input.
pub fn isotonic_regression(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // Blocks of (weighted mean, total weight, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        let mut cur = (v, w, 1usize);
        while let Some(&(m, bw, len)) = blocks.last() {
            if m <= cur.0 {
                break;
            }
            blocks.pop();
            let total = bw + cur.1;
            cur = ((m * bw + cur.0 * cur.1) / total, total, len + cur.2);
        }
        blocks.push(cur);
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, len)| std::iter::repeat(m).take(len))
        .collect()
}

/// Euclidean projection onto nondecreasing vectors in `[lo, hi]^n`.
pub fn project_monotone_box(values: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let ones = vec![1.0; values.len()];
    isotonic_regression(values, &ones)
        .into_iter()
        .map(|v| v.clamp(lo, hi))
        .collect()
}
