//! Slow, direct reference computations. Each follows the textbook
//! definition with dense loops and no shared code with the library.

/// `-sum p log2 p` over positive entries.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.log2()).sum()
}

pub fn entropy_of_counts(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let p: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    entropy(&p)
}

/// `I(X;Y) = sum p(x,y) log2(p(x,y) / (p(x) p(y)))` for a row-major
/// `bins x bins` count table.
pub fn mutual_information(counts: &[u64], bins: usize) -> f64 {
    let total: f64 = counts.iter().sum::<u64>() as f64;
    let mut px = vec![0.0; bins];
    let mut py = vec![0.0; bins];
    for x in 0..bins {
        for y in 0..bins {
            let p = counts[x * bins + y] as f64 / total;
            px[x] += p;
            py[y] += p;
        }
    }
    let mut mi = 0.0;
    for x in 0..bins {
        for y in 0..bins {
            let p = counts[x * bins + y] as f64 / total;
            if p > 0.0 {
                mi += p * (p / (px[x] * py[y])).log2();
            }
        }
    }
    mi
}

fn kernel_sum(dists: &[f64], sigma: f64) -> f64 {
    dists.iter().map(|d| (-d / sigma).exp()).sum()
}

/// Root of `sum exp(-d / sigma) = log2 k` by scanning: a ratio-2 sweep over
/// `[1e-20, 1e20]` to bracket the sign change, then 2000 evenly spaced
/// points inside the bracket and linear interpolation between the two
/// straddling samples. `None` when no sign change exists.
pub fn sigma_grid_scan(dists: &[f64], k: usize) -> Option<f64> {
    let target = (k as f64).log2();
    let f = |s: f64| kernel_sum(dists, s) - target;
    let mut lo = 1e-20;
    if f(lo) > 0.0 {
        return None;
    }
    let mut hi = lo * 2.0;
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e20 {
            return None;
        }
    }
    const POINTS: usize = 2000;
    let step = (hi - lo) / POINTS as f64;
    let mut a = lo;
    let mut fa = f(a);
    for i in 1..=POINTS {
        let b = lo + step * i as f64;
        let fb = f(b);
        if fb >= 0.0 {
            if fb == fa {
                return Some(b);
            }
            return Some(a + (b - a) * (-fa) / (fb - fa));
        }
        a = b;
        fa = fb;
    }
    Some(hi)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Neighbors of every point: `k` nearest others, ascending by distance,
/// ties by lower index.
pub fn knn(points: &[Vec<f64>], k: usize) -> Vec<Vec<(usize, f64)>> {
    (0..points.len())
        .map(|i| {
            let mut d: Vec<(usize, f64)> = (0..points.len())
                .filter(|&j| j != i)
                .map(|j| (j, euclidean(&points[i], &points[j])))
                .collect();
            d.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            d.truncate(k);
            d
        })
        .collect()
}

/// Dense `N x N` symmetric affinity table built from the kNN kernel with
/// grid-scanned bandwidths, normalized to sum to one. A point whose
/// bandwidth equation has no root uses `sigma = 1e-20`.
pub fn affinity_table(points: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut cond = vec![vec![0.0; n]; n];
    for (i, nbrs) in knn(points, k).into_iter().enumerate() {
        let d: Vec<f64> = nbrs.iter().map(|x| x.1).collect();
        let sigma = sigma_grid_scan(&d, k).unwrap_or(1e-20);
        for (j, dij) in nbrs {
            cond[i][j] = (-dij / sigma).exp();
        }
    }
    let mut table = vec![vec![0.0; n]; n];
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            table[i][j] = (cond[i][j] + cond[j][i]) / (2.0 * n as f64);
            total += table[i][j];
        }
    }
    for row in &mut table {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    table
}

pub fn inter_sample_entropy(points: &[Vec<f64>], k: usize) -> f64 {
    let t = affinity_table(points, k);
    entropy(&t.into_iter().flatten().collect::<Vec<_>>())
}

/// Equal-width bin of `x` in `[lo, hi]` with the top edge inclusive.
pub fn bin_of(x: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    let b = ((x - lo) / (hi - lo) * bins as f64).floor();
    if b < 0.0 {
        0
    } else {
        (b as usize).min(bins - 1)
    }
}

/// Double loop over sample pairs `p < q`; returns the row-major count table.
pub fn joint_distance_counts(a: &[Vec<f64>], b: &[Vec<f64>], bins: usize) -> Vec<u64> {
    let n = a.len();
    let mut pairs = Vec::new();
    for p in 0..n {
        for q in p + 1..n {
            pairs.push((euclidean(&a[p], &a[q]), euclidean(&b[p], &b[q])));
        }
    }
    let (mut lx, mut hx, mut ly, mut hy) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &pairs {
        lx = lx.min(x);
        hx = hx.max(x);
        ly = ly.min(y);
        hy = hy.max(y);
    }
    let mut counts = vec![0u64; bins * bins];
    for (x, y) in pairs {
        counts[bin_of(x, lx, hx, bins) * bins + bin_of(y, ly, hy, bins)] += 1;
    }
    counts
}

/// Histogram entropy after mapping values onto (-1, 1) by min and max.
pub fn intra_sample_entropy(values: &[f64], bins: usize) -> f64 {
    let lo = values.iter().cloned().fold(f64::MAX, f64::min);
    let hi = values.iter().cloned().fold(f64::MIN, f64::max);
    let mut counts = vec![0u64; bins];
    for &v in values {
        let u = if hi > lo { 2.0 * (v - lo) / (hi - lo) - 1.0 } else { -1.0 };
        counts[bin_of(u, -1.0, 1.0, bins)] += 1;
    }
    entropy_of_counts(&counts)
}
