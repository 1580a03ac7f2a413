//! Point clouds with nearest-neighbour search.
//!
//! [`PointCloud`] is immutable and indexed by a vantage-point tree in the true
//! geodesic metric. [`ChartGrid`] is a growable hash grid in normal
//! coordinates, used while a cloud is still being built.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use smallvec::SmallVec;

use crate::error::{input, Result};
use crate::hyperbolic::{HPoint, ModelSpace, NormalChart};

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { vp: u32, mu: f64, inside: u32, outside: u32 },
}

/// Nearest-neighbour candidate: `(point index, distance)`.
pub type Neighbor = (usize, f64);

/// A nonempty, immutable set of points with a metric index.
#[derive(Debug, Clone)]
pub struct PointCloud {
    space: ModelSpace,
    points: Vec<HPoint>,
    // Leaf buckets refer into `order`.
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl PointCloud {
    pub fn new(space: ModelSpace, points: Vec<HPoint>) -> Result<Self> {
        if points.is_empty() {
            return input("point cloud needs at least one point");
        }
        if points.iter().any(|p| p.coords().len() != space.dim() + 1) {
            return input("point dimension does not match the model space");
        }
        let mut cloud = PointCloud {
            space,
            order: (0..points.len() as u32).collect(),
            points,
            nodes: Vec::new(),
        };
        let n = cloud.points.len();
        let mut scratch = vec![0.0; n];
        cloud.build(0, n, &mut scratch);
        Ok(cloud)
    }

    fn build(&mut self, start: usize, end: usize, scratch: &mut [f64]) -> u32 {
        let id = self.nodes.len() as u32;
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf {
                start: start as u32,
                end: end as u32,
            });
            return id;
        }
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let vp = self.order[start];
        let rest = start + 1;
        let vpp = &self.points[vp as usize];
        for (s, &o) in scratch[rest..end].iter_mut().zip(&self.order[rest..end]) {
            *s = self.space.distance(vpp, &self.points[o as usize]);
        }
        let mid = rest + (end - rest) / 2;
        // Sort (distance, index) pairs on the slice so the partition is deterministic.
        let mut pairs: Vec<(f64, u32)> = (rest..end).map(|i| (scratch[i], self.order[i])).collect();
        pairs.select_nth_unstable_by(mid - rest, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mu = pairs[mid - rest].0;
        for (j, (_, idx)) in pairs.into_iter().enumerate() {
            self.order[rest + j] = idx;
        }
        // `inside` holds [rest, mid], all with distance ≤ mu.
        let inside = self.build(rest, mid + 1, scratch);
        let outside = self.build(mid + 1, end, scratch);
        self.nodes[id as usize] = Node::Split {
            vp,
            mu,
            inside,
            outside,
        };
        id
    }

    pub fn space(&self) -> &ModelSpace {
        &self.space
    }

    pub fn points(&self) -> &[HPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<HPoint> {
        self.points
    }

    /// Nearest point and its distance.
    pub fn nearest(&self, p: &HPoint) -> Neighbor {
        self.k_nearest_within(p, 1, f64::INFINITY)[0]
    }

    /// Up to `k` nearest points, ascending by distance.
    pub fn k_nearest(&self, p: &HPoint, k: usize) -> SmallVec<[Neighbor; 4]> {
        self.k_nearest_within(p, k, f64::INFINITY)
    }

    /// Up to `k` nearest points among those at distance at most `cap`.
    pub fn k_nearest_within(&self, p: &HPoint, k: usize, cap: f64) -> SmallVec<[Neighbor; 4]> {
        let mut best: SmallVec<[Neighbor; 4]> = SmallVec::new();
        if k > 0 {
            self.search(0, p, k, cap, &mut best);
        }
        best
    }

    fn offer(best: &mut SmallVec<[Neighbor; 4]>, k: usize, cand: Neighbor) {
        if best.len() == k && cand.1 >= best[k - 1].1 {
            return;
        }
        let pos = best.partition_point(|b| b.1 < cand.1 || (b.1 == cand.1 && b.0 < cand.0));
        best.insert(pos, cand);
        best.truncate(k);
    }

    fn tau(best: &SmallVec<[Neighbor; 4]>, k: usize, cap: f64) -> f64 {
        if best.len() == k {
            best[k - 1].1.min(cap)
        } else {
            cap
        }
    }

    fn search(&self, node: u32, p: &HPoint, k: usize, cap: f64, best: &mut SmallVec<[Neighbor; 4]>) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let d = self.space.distance(p, &self.points[i as usize]);
                    if d <= cap {
                        Self::offer(best, k, (i as usize, d));
                    }
                }
            }
            Node::Split {
                vp,
                mu,
                inside,
                outside,
            } => {
                let d = self.space.distance(p, &self.points[vp as usize]);
                if d <= cap {
                    Self::offer(best, k, (vp as usize, d));
                }
                if d <= mu {
                    self.search(inside, p, k, cap, best);
                    if d + Self::tau(best, k, cap) >= mu {
                        self.search(outside, p, k, cap, best);
                    }
                } else {
                    self.search(outside, p, k, cap, best);
                    if d - Self::tau(best, k, cap) <= mu {
                        self.search(inside, p, k, cap, best);
                    }
                }
            }
        }
    }

    /// Indices of all points within distance `r`, ascending.
    pub fn within(&self, p: &HPoint, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_within(0, p, r, &mut out);
        out.sort_unstable();
        out
    }

    fn collect_within(&self, node: u32, p: &HPoint, r: f64, out: &mut Vec<usize>) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    if self.space.distance(p, &self.points[i as usize]) <= r {
                        out.push(i as usize);
                    }
                }
            }
            Node::Split {
                vp,
                mu,
                inside,
                outside,
            } => {
                let d = self.space.distance(p, &self.points[vp as usize]);
                if d <= r {
                    out.push(vp as usize);
                }
                if d - r <= mu {
                    self.collect_within(inside, p, r, out);
                }
                if d + r >= mu {
                    self.collect_within(outside, p, r, out);
                }
            }
        }
    }

    /// Distance from `p` to the union of the cloud and the geodesic segments
    /// joining its three nearest points to one another, or `None` when that
    /// exceeds `cap`. The cap never changes which neighbours are used, so
    /// capped and uncapped calls agree.
    ///
    /// A segment `[a, b]` is skipped when `min(d(p,a), d(p,b)) − d(a,b)/2`
    /// already exceeds the best value, since every point of the segment is
    /// within `d(a,b)/2` of an endpoint.
    pub fn refined_distance_within(&self, p: &HPoint, cap: f64) -> Option<f64> {
        let nn = self.k_nearest(p, 3);
        let mut best = nn[0].1;
        for i in 0..nn.len() {
            for j in i + 1..nn.len() {
                let (a, b) = (&self.points[nn[i].0], &self.points[nn[j].0]);
                let dab = self.space.distance(a, b);
                if nn[i].1.min(nn[j].1) - 0.5 * dab >= best {
                    continue;
                }
                best = best.min(self.space.distance_to_segment(p, a, b));
            }
        }
        (best <= cap).then_some(best)
    }

    pub fn refined_distance(&self, p: &HPoint) -> f64 {
        self.refined_distance_within(p, f64::INFINITY)
            .expect("cloud is nonempty")
    }

    /// A pair of points realising (approximately) the diameter: two sweeps of
    /// "farthest from the current point", then the exact distance between them.
    pub fn diameter_pair(&self) -> (usize, usize, f64) {
        let far = |from: usize| -> (usize, f64) {
            let mut best = (from, 0.0);
            for (i, q) in self.points.iter().enumerate() {
                let d = self.space.distance(&self.points[from], q);
                if d > best.1 {
                    best = (i, d);
                }
            }
            best
        };
        let (a, _) = far(0);
        let (b, d) = far(a);
        let (c, d2) = far(b);
        if d2 > d {
            (b, c, d2)
        } else {
            (a, b, d)
        }
    }

    /// Exact diameter. Starts from [`diameter_pair`](Self::diameter_pair) and
    /// only compares pairs whose distances to a centre add up to more than the
    /// best value so far.
    pub fn diameter(&self) -> f64 {
        let (a, b, mut best) = self.diameter_pair();
        let c = self.space.midpoint(&self.points[a], &self.points[b]);
        let mut radial: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (self.space.distance(&c, p), i))
            .collect();
        radial.sort_by(|x, y| y.0.total_cmp(&x.0));
        for (i, &(ri, pi)) in radial.iter().enumerate() {
            if 2.0 * ri <= best {
                break;
            }
            for &(rj, pj) in &radial[i + 1..] {
                if ri + rj <= best {
                    break;
                }
                best = best.max(self.space.distance(&self.points[pi], &self.points[pj]));
            }
        }
        best
    }

    /// Exact diameter by all pairs; quadratic.
    pub fn diameter_exact(&self) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..self.points.len() {
            for j in i + 1..self.points.len() {
                best = best.max(self.space.distance(&self.points[i], &self.points[j]));
            }
        }
        best
    }

    /// Writes one point per row (all `n + 1` Minkowski coordinates) after a
    /// comment line naming the set kind, `k` and `n`.
    pub fn write_csv<W: Write>(&self, kind: &str, out: W) -> Result<()> {
        let mut w = out;
        writeln!(
            w,
            "# kind={kind} k={} n={}",
            self.space.curvature_scale(),
            self.space.dim()
        )?;
        let mut wtr = csv::Writer::from_writer(w);
        let header: Vec<String> = (0..=self.space.dim()).map(|i| format!("x{i}")).collect();
        wtr.write_record(&header)?;
        for p in &self.points {
            wtr.serialize(p.coords())?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, kind: &str, path: &Path) -> Result<()> {
        self.write_csv(kind, std::fs::File::create(path)?)
    }

    /// Reads a file written by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: std::io::Read>(space: ModelSpace, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut pts = Vec::new();
        for rec in rdr.deserialize::<Vec<f64>>() {
            pts.push(space.point(&rec?)?);
        }
        PointCloud::new(space, pts)
    }
}

/// Header of a serialised cloud.
#[derive(Debug, Clone, Serialize)]
pub struct CloudHeader {
    pub kind: String,
    pub k: f64,
    pub n: usize,
}

type CellKey = SmallVec<[i64; 4]>;

/// Growable spatial hash in the normal chart of a fixed centre.
///
/// The chart is 1-Lipschitz, so every point within geodesic distance `r ≤ cell`
/// of a query sits in one of the `3^n` cells around the query's cell.
#[derive(Debug, Clone)]
pub struct ChartGrid {
    space: ModelSpace,
    chart: NormalChart,
    cell: f64,
    points: Vec<HPoint>,
    cells: HashMap<CellKey, Vec<u32>>,
}

impl ChartGrid {
    pub fn new(space: ModelSpace, center: &HPoint, cell: f64) -> Self {
        ChartGrid {
            space,
            chart: space.chart(center),
            cell,
            points: Vec::new(),
            cells: HashMap::new(),
        }
    }

    pub fn cell(&self) -> f64 {
        self.cell
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[HPoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<HPoint> {
        self.points
    }

    fn key(&self, p: &HPoint) -> CellKey {
        self.chart
            .to_chart(p)
            .iter()
            .map(|v| (v / self.cell).floor() as i64)
            .collect()
    }

    pub fn insert(&mut self, p: HPoint) -> usize {
        let key = self.key(&p);
        let id = self.points.len();
        self.cells.entry(key).or_default().push(id as u32);
        self.points.push(p);
        id
    }

    /// Calls `f(index, distance)` for every stored point within `r` of `p`.
    /// `r` may exceed the cell size; the scan then widens accordingly.
    pub fn for_each_within(&self, p: &HPoint, r: f64, mut f: impl FnMut(usize, f64)) {
        let key = self.key(p);
        let reach = (r / self.cell).ceil().max(1.0) as i64;
        let dim = key.len();
        let mut offset: CellKey = SmallVec::from_elem(-reach, dim);
        loop {
            let probe: CellKey = key.iter().zip(&offset).map(|(a, b)| a + b).collect();
            if let Some(ids) = self.cells.get(&probe) {
                for &i in ids {
                    let d = self.space.distance(p, &self.points[i as usize]);
                    if d <= r {
                        f(i as usize, d);
                    }
                }
            }
            // Odometer over the (2·reach + 1)^n neighbourhood.
            let mut j = 0;
            loop {
                if j == dim {
                    return;
                }
                offset[j] += 1;
                if offset[j] > reach {
                    offset[j] = -reach;
                    j += 1;
                } else {
                    break;
                }
            }
        }
    }

    /// Whether some stored point lies within `r` of `p`.
    pub fn any_within(&self, p: &HPoint, r: f64) -> bool {
        let key = self.key(p);
        let reach = (r / self.cell).ceil().max(1.0) as i64;
        let dim = key.len();
        let mut offset: CellKey = SmallVec::from_elem(-reach, dim);
        loop {
            let probe: CellKey = key.iter().zip(&offset).map(|(a, b)| a + b).collect();
            if let Some(ids) = self.cells.get(&probe) {
                if ids
                    .iter()
                    .any(|&i| self.space.distance(p, &self.points[i as usize]) <= r)
                {
                    return true;
                }
            }
            let mut j = 0;
            loop {
                if j == dim {
                    return false;
                }
                offset[j] += 1;
                if offset[j] > reach {
                    offset[j] = -reach;
                    j += 1;
                } else {
                    break;
                }
            }
        }
    }

    /// Inserts `p` unless a stored point is within `sep`; returns whether it was added.
    pub fn insert_if_separated(&mut self, p: HPoint, sep: f64) -> bool {
        if self.any_within(&p, sep) {
            return false;
        }
        self.insert(p);
        true
    }
}
