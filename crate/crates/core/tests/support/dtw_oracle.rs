//! DTW by walking every monotone warping path. Exponential in the sequence
//! length, so only usable for short inputs.

/// Minimum mismatch count over all paths from (0, 0) to the far corner with
/// steps (1, 0), (0, 1) and (1, 1), together with the number of paths seen.
pub fn dtw_by_paths<T: PartialEq>(a: &[T], b: &[T]) -> (u32, u64) {
    assert!(!a.is_empty() && !b.is_empty());
    let mut best = u32::MAX;
    let mut paths = 0u64;
    walk(a, b, 0, 0, 0, &mut best, &mut paths);
    (best, paths)
}

fn walk<T: PartialEq>(
    a: &[T],
    b: &[T],
    i: usize,
    j: usize,
    acc: u32,
    best: &mut u32,
    paths: &mut u64,
) {
    let acc = acc + u32::from(a[i] != b[j]);
    if i + 1 == a.len() && j + 1 == b.len() {
        *paths += 1;
        *best = (*best).min(acc);
        return;
    }
    if i + 1 < a.len() {
        walk(a, b, i + 1, j, acc, best, paths);
    }
    if j + 1 < b.len() {
        walk(a, b, i, j + 1, acc, best, paths);
    }
    if i + 1 < a.len() && j + 1 < b.len() {
        walk(a, b, i + 1, j + 1, acc, best, paths);
    }
}

/// Central Delannoy numbers D(m, n) for checking the path count.
pub fn delannoy(m: usize, n: usize) -> u64 {
    let mut d = vec![vec![1u64; n + 1]; m + 1];
    for i in 1..=m {
        for j in 1..=n {
            d[i][j] = d[i - 1][j] + d[i][j - 1] + d[i - 1][j - 1];
        }
    }
    d[m][n]
}
