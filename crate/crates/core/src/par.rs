//! Reductions whose result does not depend on the rayon thread count.
//!
//! Work is split into fixed-size chunks; each chunk is reduced sequentially
//! and the partials are combined sequentially in chunk order.

use rayon::prelude::*;

/// Number of items per partial sum.
pub const CHUNK: usize = 4096;

/// Sum of `f(i)` for `i` in `0..n`, combined in a fixed order.
pub fn chunked_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let partials: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let end = ((c + 1) * CHUNK).min(n);
            (c * CHUNK..end).fold(0.0, |acc, i| acc + f(i))
        })
        .collect();
    partials.into_iter().fold(0.0, |acc, p| acc + p)
}

/// Element-wise sum of fixed-size arrays, same chunking discipline.
pub fn chunked_sum_array<const K: usize, F>(n: usize, f: F) -> [f64; K]
where
    F: Fn(usize) -> Option<[f64; K]> + Sync,
{
    let partials: Vec<[f64; K]> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let end = ((c + 1) * CHUNK).min(n);
            let mut acc = [0.0; K];
            for i in c * CHUNK..end {
                if let Some(v) = f(i) {
                    for (a, x) in acc.iter_mut().zip(v) {
                        *a += x;
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = [0.0; K];
    for p in partials {
        for (t, x) in total.iter_mut().zip(p) {
            *t += x;
        }
    }
    total
}
