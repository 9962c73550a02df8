//! Candidate positions along epipolar lines in a feature map.
//!
//! Feature-map coordinates put sample `(x, y)` at column `x`, row `y`; the
//! valid rectangle is `[0, w-1] × [0, h-1]`. A line is clipped to that
//! rectangle and `D` equidistant points are taken from the entry point (the
//! leftmost end, or the topmost one for a vertical line) to the exit point.

use epi_core::geom::{line_through, Line, Mat3};

/// Clips `line` to `[0, max_x] × [0, max_y]`; returns `(entry, exit)`.
pub fn clip_line(line: &Line, max_x: f64, max_y: f64) -> Option<([f64; 2], [f64; 2])> {
    // parametric form p(s) = p0 + s·d with d along the line
    let p0 = [-line.a * line.c, -line.b * line.c];
    let d = [-line.b, line.a];
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (p, dir, max) in [(p0[0], d[0], max_x), (p0[1], d[1], max_y)] {
        if dir == 0.0 {
            if p < 0.0 || p > max {
                return None;
            }
            continue;
        }
        let (s0, s1) = ((0.0 - p) / dir, (max - p) / dir);
        lo = lo.max(s0.min(s1));
        hi = hi.min(s0.max(s1));
    }
    if !(lo <= hi) {
        return None;
    }
    let at = |s: f64| [(p0[0] + s * d[0]).clamp(0.0, max_x), (p0[1] + s * d[1]).clamp(0.0, max_y)];
    let (a, b) = (at(lo), at(hi));
    let a_first = a[0] < b[0] || (a[0] == b[0] && a[1] <= b[1]);
    Some(if a_first { (a, b) } else { (b, a) })
}

/// `d` equidistant points on the clipped line `m p̄`, or `None` when the line
/// is degenerate or misses the map.
pub fn sample_line(m: &Mat3, query: [f64; 2], w: usize, h: usize, d: usize) -> Option<Vec<[f64; 2]>> {
    let line = line_through(m, query)?;
    let (entry, exit) = clip_line(&line, (w - 1) as f64, (h - 1) as f64)?;
    let denom = (d - 1) as f64;
    Some(
        (0..d)
            .map(|k| {
                if k + 1 == d {
                    return exit;
                }
                let t = k as f64 / denom;
                [entry[0] + t * (exit[0] - entry[0]), entry[1] + t * (exit[1] - entry[1])]
            })
            .collect(),
    )
}

/// Bilinear taps `(flat index, weight)` at a point inside the map; the
/// coordinates are clamped to the valid rectangle first.
pub fn bilinear_taps(p: [f64; 2], w: usize, h: usize) -> [(usize, f64); 4] {
    let axis = |v: f64, n: usize| -> (usize, usize, f64) {
        let v = v.clamp(0.0, (n - 1) as f64);
        if n == 1 {
            return (0, 0, 0.0);
        }
        let i0 = (v.floor() as usize).min(n - 2);
        (i0, i0 + 1, v - i0 as f64)
    };
    let (x0, x1, fx) = axis(p[0], w);
    let (y0, y1, fy) = axis(p[1], h);
    [
        (y0 * w + x0, (1.0 - fx) * (1.0 - fy)),
        (y0 * w + x1, fx * (1.0 - fy)),
        (y1 * w + x0, (1.0 - fx) * fy),
        (y1 * w + x1, fx * fy),
    ]
}

/// Query grid positions `(x, y)` at the given stride, row-major.
pub fn query_grid(w: usize, h: usize, stride: usize) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    for y in (0..h).step_by(stride) {
        for x in (0..w).step_by(stride) {
            out.push([x as f64, y as f64]);
        }
    }
    out
}

/// Interpolation taps for every (query, candidate); `None` marks a
/// zero-padded candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct GatherTable {
    pub queries: usize,
    pub candidates: usize,
    pub taps: Vec<Option<[(usize, f64); 4]>>,
}

impl GatherTable {
    /// Samples the map of size `w × h` along the lines `m p̄` of the stride grid.
    pub fn build(m: &Mat3, w: usize, h: usize, stride: usize, d: usize) -> Self {
        let grid = query_grid(w, h, stride);
        let mut taps = Vec::with_capacity(grid.len() * d);
        for q in &grid {
            match sample_line(m, *q, w, h, d) {
                Some(points) => taps.extend(points.iter().map(|p| Some(bilinear_taps(*p, w, h)))),
                None => taps.extend(std::iter::repeat(None).take(d)),
            }
        }
        Self {
            queries: grid.len(),
            candidates: d,
            taps,
        }
    }

    /// Indices of the query tokens in a row-major `w`-wide map.
    pub fn query_tokens(w: usize, h: usize, stride: usize) -> Vec<usize> {
        query_grid(w, h, stride).iter().map(|p| p[1] as usize * w + p[0] as usize).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizontal_line_is_clipped_left_to_right() {
        // y = 3
        let l = Line { a: 0.0, b: -1.0, c: 3.0 };
        let (a, b) = clip_line(&l, 15.0, 15.0).unwrap();
        assert_eq!(a, [0.0, 3.0]);
        assert_eq!(b, [15.0, 3.0]);
    }

    #[test]
    fn line_outside_the_map_is_rejected() {
        let l = Line { a: 0.0, b: 1.0, c: 20.0 };
        assert!(clip_line(&l, 15.0, 15.0).is_none());
    }

    #[test]
    fn two_candidates_are_the_endpoints() {
        let m = Mat3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        let s = sample_line(&m, [4.0, 7.0], 16, 16, 2).unwrap();
        assert_eq!(s, vec![[0.0, 7.0], [15.0, 7.0]]);
    }

    #[test]
    fn taps_sum_to_one() {
        for p in [[0.0, 0.0], [15.0, 15.0], [3.3, 7.9], [14.999, 0.2]] {
            let t = bilinear_taps(p, 16, 16);
            assert!((t.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
