//! Small numerical utilities: isotonic regression, Kendall's tau-b, quantiles.

use crate::scalar::Real;

/// Weighted least-squares projection of `values` onto non-increasing sequences
/// (pool-adjacent-violators). Returns the projection.
pub fn isotonic_decreasing<F: Real>(values: &[F], weights: &[F]) -> Vec<F> {
    assert_eq!(values.len(), weights.len());
    let mut blocks: Vec<(F, F, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (v2, w2, c2) = blocks[blocks.len() - 1];
            let (v1, w1, c1) = blocks[blocks.len() - 2];
            if v1 >= v2 {
                break;
            }
            blocks.pop();
            let tw = w1 + w2;
            let merged = if tw > F::zero() { (v1 * w1 + v2 * w2) / tw } else { (v1 + v2) / F::lit(2.0) };
            *blocks.last_mut().expect("nonempty") = (merged, tw, c1 + c2);
        }
    }
    blocks.into_iter().flat_map(|(v, _, c)| std::iter::repeat(v).take(c)).collect()
}

/// Projection onto non-decreasing sequences.
pub fn isotonic_increasing<F: Real>(values: &[F], weights: &[F]) -> Vec<F> {
    let neg: Vec<F> = values.iter().map(|&v| -v).collect();
    isotonic_decreasing(&neg, weights).into_iter().map(|v| -v).collect()
}

/// True if `values` is non-increasing within `tol`.
pub fn is_non_increasing<F: Real>(values: &[F], tol: F) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + tol)
}

/// Kendall's tau-b in `O(n log n)` (Knight's algorithm). Infinite values are
/// valid and tie with each other.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n0 = (n as u128) * (n as u128 - 1) / 2;
    let tie_pairs = |len: u128| len * len.saturating_sub(1) / 2;
    let mut n1 = 0u128;
    let mut n3 = 0u128;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && pairs[j].0 == pairs[i].0 {
            j += 1;
        }
        n1 += tie_pairs((j - i) as u128);
        let mut k = i;
        while k < j {
            let mut l = k;
            while l < j && pairs[l].1 == pairs[k].1 {
                l += 1;
            }
            n3 += tie_pairs((l - k) as u128);
            k = l;
        }
        i = j;
    }

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf);

    let mut n2 = 0u128;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && ys[j] == ys[i] {
            j += 1;
        }
        n2 += tie_pairs((j - i) as u128);
        i = j;
    }
    let s = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        s / denom
    }
}

fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u128 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u128;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    while i < mid {
        buf[k] = v[i];
        i += 1;
        k += 1;
    }
    while j < n {
        buf[k] = v[j];
        j += 1;
        k += 1;
    }
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Empirical quantile with the lower-order-statistic convention (`q` in `[0, 1]`).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let idx = ((q.clamp(0.0, 1.0) * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[idx]
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (denominator `n - 1`).
pub fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}
