#![allow(dead_code)]

use std::collections::VecDeque;

use rand::Rng;

/// Components minus holes of a binary image, counted by flood fill.
///
/// Foreground pixels are closed squares, so two pixels sharing only a corner
/// belong to the same component (8-connectivity). Holes are 4-connected
/// background regions that do not reach the image border.
pub fn flood_fill_chi(bits: &[bool], rows: usize, cols: usize) -> i64 {
    let components = count_regions(bits, rows, cols, true, true);
    // pad with a background frame so every outer region merges into one
    let (pr, pc) = (rows + 2, cols + 2);
    let mut padded = vec![false; pr * pc];
    for r in 0..rows {
        for c in 0..cols {
            padded[(r + 1) * pc + c + 1] = bits[r * cols + c];
        }
    }
    let background = count_regions(&padded, pr, pc, false, false);
    components - (background - 1)
}

fn count_regions(bits: &[bool], rows: usize, cols: usize, value: bool, diagonal: bool) -> i64 {
    let mut seen = vec![false; bits.len()];
    let mut count = 0;
    let mut queue = VecDeque::new();
    let steps: &[(isize, isize)] = if diagonal {
        &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    } else {
        &[(-1, 0), (0, -1), (0, 1), (1, 0)]
    };
    for start in 0..bits.len() {
        if bits[start] != value || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (r, c) = ((i / cols) as isize, (i % cols) as isize);
            for (dr, dc) in steps {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                    continue;
                }
                let j = nr as usize * cols + nc as usize;
                if bits[j] == value && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    count
}

pub fn random_mask<R: Rng>(rng: &mut R, rows: usize, cols: usize, density: f64) -> Vec<bool> {
    (0..rows * cols).map(|_| rng.random::<f64>() < density).collect()
}

/// Square annulus: one component with one hole.
pub fn annulus(size: usize, outer: usize, inner: usize) -> Vec<bool> {
    let c = size as isize / 2;
    (0..size * size)
        .map(|i| {
            let (r, q) = ((i / size) as isize - c, (i % size) as isize - c);
            let m = r.abs().max(q.abs()) as usize;
            m <= outer && m > inner
        })
        .collect()
}

/// `k x k` separated 2x2 blocks.
pub fn blocks(k: usize) -> (Vec<bool>, usize) {
    let size = 3 * k + 1;
    let bits = (0..size * size)
        .map(|i| {
            let (r, c) = (i / size, i % size);
            r % 3 != 0 && c % 3 != 0
        })
        .collect();
    (bits, size)
}

/// Two-sided Kolmogorov-Smirnov distance of `xs` from the uniform law on (0, 1).
pub fn ks_uniform(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = x - i as f64 / n;
            let hi = (i + 1) as f64 / n - x;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at level 0.001.
pub fn ks_critical_001(n: usize) -> f64 {
    1.949 / (n as f64).sqrt()
}
