//! Static 2-d tree for nearest-sample queries on planar point sets.

/// Static nearest-neighbour index over planar points.
#[derive(Debug, Clone)]
pub struct SampleIndex {
    points: Vec<[f64; 2]>,
    // points permuted into implicit balanced-tree order, with original indices
    tree: Vec<([f64; 2], u32)>,
}

fn build(items: &mut [([f64; 2], u32)], depth: usize) {
    if items.len() <= 1 {
        return;
    }
    let axis = depth % 2;
    let mid = items.len() / 2;
    items.select_nth_unstable_by(mid, |a, b| a.0[axis].total_cmp(&b.0[axis]).then(a.1.cmp(&b.1)));
    let (left, right) = items.split_at_mut(mid);
    build(left, depth + 1);
    build(&mut right[1..], depth + 1);
}

impl SampleIndex {
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        assert!(!points.is_empty(), "sample index needs at least one point");
        let mut tree: Vec<([f64; 2], u32)> = points.iter().enumerate().map(|(i, p)| (*p, i as u32)).collect();
        build(&mut tree, 0);
        Self { points, tree }
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Index of the nearest sample and its distance (ties go to the lower index).
    pub fn nearest(&self, q: [f64; 2]) -> (usize, f64) {
        let mut best = (u32::MAX, f64::INFINITY);
        self.search(&self.tree, 0, q, &mut best);
        (best.0 as usize, best.1.sqrt())
    }

    fn search(&self, items: &[([f64; 2], u32)], depth: usize, q: [f64; 2], best: &mut (u32, f64)) {
        if items.is_empty() {
            return;
        }
        let mid = items.len() / 2;
        let (p, id) = items[mid];
        let d2 = (p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]);
        if d2 < best.1 || (d2 == best.1 && id < best.0) {
            *best = (id, d2);
        }
        let axis = depth % 2;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            (&items[..mid], &items[mid + 1..])
        } else {
            (&items[mid + 1..], &items[..mid])
        };
        self.search(near, depth + 1, q, best);
        if diff * diff <= best.1 {
            self.search(far, depth + 1, q, best);
        }
    }

    /// All sample indices within distance `radius` of `q`, sorted.
    pub fn within(&self, q: [f64; 2], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect(&self.tree, 0, q, radius * radius, &mut out);
        out.sort_unstable();
        out
    }

    fn collect(&self, items: &[([f64; 2], u32)], depth: usize, q: [f64; 2], r2: f64, out: &mut Vec<usize>) {
        if items.is_empty() {
            return;
        }
        let mid = items.len() / 2;
        let (p, id) = items[mid];
        if (p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) <= r2 {
            out.push(id as usize);
        }
        let axis = depth % 2;
        let diff = q[axis] - p[axis];
        if diff <= 0.0 || diff * diff <= r2 {
            self.collect(&items[..mid], depth + 1, q, r2, out);
        }
        if diff >= 0.0 || diff * diff <= r2 {
            self.collect(&items[mid + 1..], depth + 1, q, r2, out);
        }
    }
}

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let l2 = d[0] * d[0] + d[1] * d[1];
    let t = if l2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / l2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - t * d[0]).hypot(p[1] - a[1] - t * d[1])
}

/// Distance queries against a set of polylines.
///
/// The nearest vertex is found with a [`SampleIndex`]; the two edges at that vertex
/// then refine the value. The error is at most half the vertex spacing.
#[derive(Debug, Clone)]
pub struct PolylineIndex {
    lines: Vec<Vec<[f64; 2]>>,
    closed: Vec<bool>,
    owner: Vec<(u32, u32)>,
    index: SampleIndex,
}

impl PolylineIndex {
    pub fn new(lines: Vec<Vec<[f64; 2]>>, closed: Vec<bool>) -> Self {
        assert_eq!(lines.len(), closed.len());
        let mut owner = Vec::new();
        let mut pts = Vec::new();
        for (li, l) in lines.iter().enumerate() {
            for (k, p) in l.iter().enumerate() {
                owner.push((li as u32, k as u32));
                pts.push(*p);
            }
        }
        let index = SampleIndex::new(pts);
        Self {
            lines,
            closed,
            owner,
            index,
        }
    }

    pub fn distance(&self, q: [f64; 2]) -> f64 {
        let (ni, mut d) = self.index.nearest(q);
        let (li, si) = self.owner[ni];
        let (li, si) = (li as usize, si as usize);
        let line = &self.lines[li];
        let n = line.len();
        let closed = self.closed[li];
        if n > 1 {
            if si + 1 < n || closed {
                d = d.min(point_segment_distance(q, line[si], line[(si + 1) % n]));
            }
            if si > 0 || closed {
                d = d.min(point_segment_distance(q, line[(si + n - 1) % n], line[si]));
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[[f64; 2]], q: [f64; 2]) -> f64 {
        points
            .iter()
            .map(|p| (p[0] - q[0]).hypot(p[1] - q[1]))
            .fold(f64::INFINITY, f64::min)
    }

    proptest! {
        #[test]
        fn nearest_matches_brute_force(
            pts in prop::collection::vec((-2.0f64..2.0, -1.0f64..1.0), 1..300),
            qs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..20),
        ) {
            let points: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
            let idx = SampleIndex::new(points.clone());
            for (x, y) in qs {
                let (_, d) = idx.nearest([x, y]);
                prop_assert!((d - brute(&points, [x, y])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn within_radius() {
        let points: Vec<[f64; 2]> = (0..100).map(|i| [i as f64 * 0.01, 0.0]).collect();
        let idx = SampleIndex::new(points);
        let got = idx.within([0.5, 0.0], 0.0201);
        assert_eq!(got, vec![48, 49, 50, 51, 52]);
    }

    #[test]
    fn collinear_points() {
        let points: Vec<[f64; 2]> = (0..1000).map(|i| [0.0, i as f64 * 1e-3]).collect();
        let idx = SampleIndex::new(points);
        let (i, d) = idx.nearest([0.3, 0.5004]);
        assert_eq!(i, 500);
        assert!((d - (0.09f64 + 0.0004f64 * 0.0004).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn polyline_distance_to_square() {
        let side: Vec<[f64; 2]> = (0..400)
            .map(|i| {
                let t = i as f64 / 100.0;
                match i / 100 {
                    0 => [t, 0.0],
                    1 => [1.0, t - 1.0],
                    2 => [3.0 - t, 1.0],
                    _ => [0.0, 4.0 - t],
                }
            })
            .collect();
        let idx = PolylineIndex::new(vec![side], vec![true]);
        assert!((idx.distance([0.5, 0.3]) - 0.3).abs() < 1e-12);
        assert!((idx.distance([2.0, 2.0]) - 2f64.sqrt()).abs() < 1e-12);
        assert!((idx.distance([0.505, -0.2]) - 0.2).abs() < 1e-12);
    }
}
