//! Small dense-vector helpers shared across the crate.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scaled(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn neg(a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| -x).collect()
}

/// Deterministic sample of (approximately) evenly spread unit directions.
///
/// Dimensions 1-3 use fixed grids (the pair {-1, +1}, equispaced angles, a
/// Fibonacci sphere); higher dimensions fall back to seeded normalized
/// pseudo-random vectors so construction stays deterministic.
pub fn unit_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    assert!(dim >= 1);
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => {
            let n = count.max(8);
            (0..n)
                .map(|k| {
                    let theta = 2.0 * std::f64::consts::PI * (k as f64) / (n as f64);
                    vec![theta.cos(), theta.sin()]
                })
                .collect()
        }
        3 => fibonacci_sphere(count.max(64)),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0xA5A5_0001 ^ dim as u64);
            let mut dirs = Vec::with_capacity(count);
            while dirs.len() < count {
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let n = norm2(&v);
                if n > 1e-3 {
                    dirs.push(scaled(&v, 1.0 / n));
                }
            }
            dirs
        }
    }
}

fn fibonacci_sphere(n: usize) -> Vec<Vec<f64>> {
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    (0..n)
        .map(|k| {
            let i = k as f64 + 0.5;
            let z = 1.0 - 2.0 * i / (n as f64);
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = 2.0 * std::f64::consts::PI * i / golden;
            vec![r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

/// Seeded generator used wherever reproducible pseudo-random data is needed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Thread cap for multi-start runs, from `ANISO_THREADS` (default 4).
pub fn thread_cap() -> usize {
    std::env::var("ANISO_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|n| *n >= 1)
        .unwrap_or(4)
}

/// Deterministic order-preserving parallel map over indices `0..n`;
/// results are aggregated by index, never by completion order.
pub fn parallel_map<T: Send, F: Fn(usize) -> T + Sync>(n: usize, f: F) -> Vec<T> {
    let threads = thread_cap().min(n.max(1));
    if threads <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(threads);
    let mut results: Vec<Option<T>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (ci, slot) in results.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (off, out) in slot.iter_mut().enumerate() {
                    *out = Some(f(ci * chunk + off));
                }
            });
        }
    });
    results.into_iter().map(|r| r.expect("filled")).collect()
}

/// Random point in the cube [-scale, scale]^dim.
pub fn random_vector(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-scale..scale)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    #[allow(unused_imports)]
    use rand::Rng as _;

    #[test]
    fn directions_are_unit() {
        for dim in 1..=4 {
            for d in unit_directions(dim, 200) {
                assert!((norm2(&d) - 1.0).abs() < 1e-12, "dim {dim}");
            }
        }
    }

    #[test]
    fn fibonacci_covers_poles() {
        let dirs = unit_directions(3, 2000);
        let top = dirs.iter().map(|d| d[2]).fold(f64::MIN, f64::max);
        assert!(top > 0.999);
    }
}
