//! Medial-axis extraction: Zhang-Suen thinning, branch analysis and pruning,
//! ordered tracing and end recovery along the local axis direction.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Point;
use crate::segmentation::BinaryMask;

/// Neighbour offsets in Zhang-Suen order P2..P9 (N, NE, E, SE, S, SW, W, NW).
const RING: [(i32, i32); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

/// Thin binary skeleton on the grid of its source mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skeleton {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Skeleton {
    pub fn from_mask(mask: &BinaryMask) -> Self {
        Self { width: mask.width(), height: mask.height(), data: mask.data().to_vec() }
    }

    pub fn from_points(width: usize, height: usize, points: impl IntoIterator<Item = Point>) -> Self {
        let mut s = Self { width, height, data: vec![false; width * height] };
        for p in points {
            if s.in_bounds(p) {
                s.data[p.y as usize * width + p.x as usize] = true;
            }
        }
        s
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn in_bounds(&self, p: Point) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.width && (p.y as usize) < self.height
    }

    #[inline]
    pub fn contains(&self, p: Point) -> bool {
        self.in_bounds(p) && self.data[p.y as usize * self.width + p.x as usize]
    }

    fn set(&mut self, p: Point, v: bool) {
        self.data[p.y as usize * self.width + p.x as usize] = v;
    }

    pub fn len(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pixels in raster order.
    pub fn points(&self) -> Vec<Point> {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| Point::new((i % self.width) as i32, (i / self.width) as i32))
            .collect()
    }

    pub fn to_mask(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| self.data[y * self.width + x])
    }

    fn neighbors(&self, p: Point) -> impl Iterator<Item = Point> + '_ {
        RING.iter().map(move |&(dx, dy)| Point::new(p.x + dx, p.y + dy)).filter(|&q| self.contains(q))
    }

    pub fn degree(&self, p: Point) -> usize {
        self.neighbors(p).count()
    }
}

/// Two-subpass Zhang-Suen thinning, iterated to a fixpoint.
pub fn zhang_suen_thin(mask: &BinaryMask) -> Result<Skeleton> {
    if mask.count() == 0 {
        return Err(Error::EmptyMask);
    }
    let mut skel = Skeleton::from_mask(mask);
    let mut doomed = Vec::new();
    loop {
        let mut changed = false;
        for first in [true, false] {
            doomed.clear();
            for p in skel.points() {
                let n: [bool; 8] = std::array::from_fn(|k| skel.contains(Point::new(p.x + RING[k].0, p.y + RING[k].1)));
                let b = n.iter().filter(|&&v| v).count();
                if !(2..=6).contains(&b) {
                    continue;
                }
                let a = (0..8).filter(|&k| !n[k] && n[(k + 1) % 8]).count();
                if a != 1 {
                    continue;
                }
                // n[0]=P2, n[2]=P4, n[4]=P6, n[6]=P8
                let ok = if first {
                    !(n[0] && n[2] && n[4]) && !(n[2] && n[4] && n[6])
                } else {
                    !(n[0] && n[2] && n[6]) && !(n[0] && n[4] && n[6])
                };
                if ok {
                    doomed.push(p);
                }
            }
            changed |= !doomed.is_empty();
            for &p in &doomed {
                skel.set(p, false);
            }
        }
        if !changed {
            return Ok(skel);
        }
    }
}

/// Removes staircase corners that Zhang-Suen leaves behind: a pixel is dropped
/// when it has both a horizontal and a vertical 4-neighbour and all its
/// neighbours form a single 8-connected group among themselves. Connectivity
/// is preserved and line ends are never shortened.
pub fn strip_redundant(skel: &Skeleton) -> Skeleton {
    let mut out = skel.clone();
    loop {
        let mut changed = false;
        for p in out.points() {
            if !out.contains(p) {
                continue;
            }
            let ring: Vec<(i32, i32)> = RING
                .iter()
                .copied()
                .filter(|&(dx, dy)| out.contains(Point::new(p.x + dx, p.y + dy)))
                .collect();
            let horizontal = ring.iter().any(|&(dx, dy)| dy == 0 && dx != 0);
            let vertical = ring.iter().any(|&(dx, dy)| dx == 0 && dy != 0);
            if !horizontal || !vertical || neighbour_groups(&ring) != 1 {
                continue;
            }
            out.set(p, false);
            changed = true;
        }
        if !changed {
            return out;
        }
    }
}

fn neighbour_groups(ring: &[(i32, i32)]) -> usize {
    let mut seen = vec![false; ring.len()];
    let mut groups = 0;
    for s in 0..ring.len() {
        if seen[s] {
            continue;
        }
        groups += 1;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(i) = stack.pop() {
            for j in 0..ring.len() {
                if !seen[j] && (ring[i].0 - ring[j].0).abs() <= 1 && (ring[i].1 - ring[j].1).abs() <= 1 {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    groups
}

/// Ordered end-to-end centre line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedialAxis {
    points: Vec<Point>,
}

impl MedialAxis {
    /// Validates that consecutive points are 8-neighbours and no point repeats.
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::AxisTooShort("empty axis".into()));
        }
        if let Some(w) = points.windows(2).find(|w| !w[0].is_8_neighbor(w[1])) {
            return Err(Error::InvalidParameter(format!("axis points {:?} and {:?} are not adjacent", w[0], w[1])));
        }
        let unique: HashSet<_> = points.iter().collect();
        if unique.len() != points.len() {
            return Err(Error::InvalidParameter("axis revisits a point".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Polyline length in pixels (unit or diagonal steps).
    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        Self { points }
    }

    pub fn translated(&self, dx: i32, dy: i32) -> Self {
        Self { points: self.points.iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Branch {
    pub points: Vec<Point>,
    /// Ends in a free endpoint (as opposed to joining two junctions).
    pub terminal: bool,
}

impl Branch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Junctions and branches of a skeleton that is not a simple path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchReport {
    /// One representative pixel per junction cluster.
    pub junctions: Vec<Point>,
    pub branches: Vec<Branch>,
}

impl fmt::Display for BranchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lens: Vec<usize> = self.branches.iter().map(Branch::len).collect();
        write!(f, "{} junction(s), branch lengths {:?}", self.junctions.len(), lens)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AxisTrace {
    Path(MedialAxis),
    Branched(BranchReport),
}

fn components(points: &[Point], member: impl Fn(Point) -> bool) -> Vec<Vec<Point>> {
    let mut seen: HashSet<Point> = HashSet::new();
    let mut out = Vec::new();
    for &s in points {
        if seen.contains(&s) {
            continue;
        }
        let mut comp = vec![s];
        seen.insert(s);
        let mut i = 0;
        while i < comp.len() {
            let p = comp[i];
            i += 1;
            for &(dx, dy) in &RING {
                let q = Point::new(p.x + dx, p.y + dy);
                if member(q) && seen.insert(q) {
                    comp.push(q);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Orders a simple-path skeleton from its topmost endpoint, or reports its
/// branch structure.
pub fn trace_axis(skel: &Skeleton) -> Result<AxisTrace> {
    let pts = skel.points();
    if pts.is_empty() {
        return Err(Error::EmptyMask);
    }
    let comps = components(&pts, |q| skel.contains(q));
    if comps.len() > 1 {
        return Err(Error::DisconnectedSkeleton(comps.len()));
    }
    if pts.len() == 1 {
        return Ok(AxisTrace::Path(MedialAxis { points: pts }));
    }
    let endpoints: Vec<Point> = pts.iter().copied().filter(|&p| skel.degree(p) == 1).collect();
    let junction_px: Vec<Point> = pts.iter().copied().filter(|&p| skel.degree(p) >= 3).collect();
    if endpoints.is_empty() {
        return Err(Error::CyclicSkeleton);
    }
    if junction_px.is_empty() && endpoints.len() == 2 {
        // points() is raster ordered, so endpoints[0] is the topmost end.
        let mut order = vec![endpoints[0]];
        let mut prev: Option<Point> = None;
        let mut cur = endpoints[0];
        loop {
            let next = skel.neighbors(cur).find(|&q| Some(q) != prev);
            match next {
                Some(n) if n != endpoints[0] => {
                    order.push(n);
                    prev = Some(cur);
                    cur = n;
                    if n == endpoints[1] {
                        break;
                    }
                }
                _ => break,
            }
        }
        return Ok(AxisTrace::Path(MedialAxis { points: order }));
    }
    Ok(AxisTrace::Branched(branch_report(skel, &pts, &junction_px)))
}

fn branch_report(skel: &Skeleton, pts: &[Point], junction_px: &[Point]) -> BranchReport {
    let jset: HashSet<Point> = junction_px.iter().copied().collect();
    let clusters = components(junction_px, |q| jset.contains(&q));
    let rest: Vec<Point> = pts.iter().copied().filter(|p| !jset.contains(p)).collect();
    let branches = components(&rest, |q| skel.contains(q) && !jset.contains(&q))
        .into_iter()
        .map(|points| {
            let terminal = points.iter().any(|&p| skel.degree(p) == 1);
            Branch { points, terminal }
        })
        .collect();
    BranchReport { junctions: clusters.iter().map(|c| c[0]).collect(), branches }
}

/// Hop distances from `start` over the skeleton graph.
fn geodesic(skel: &Skeleton, start: Point) -> std::collections::HashMap<Point, usize> {
    let mut dist = std::collections::HashMap::new();
    dist.insert(start, 0);
    let mut queue = VecDeque::from([start]);
    while let Some(p) = queue.pop_front() {
        let d = dist[&p];
        for q in skel.neighbors(p).collect::<Vec<_>>() {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(q) {
                e.insert(d + 1);
                queue.push_back(q);
            }
        }
    }
    dist
}

/// Endpoints of the longest endpoint-to-endpoint route.
fn main_path_ends(skel: &Skeleton) -> Option<(Point, Point)> {
    let ends: Vec<Point> = skel.points().into_iter().filter(|&p| skel.degree(p) == 1).collect();
    let mut best: Option<(usize, Point, Point)> = None;
    for (i, &a) in ends.iter().enumerate() {
        let dist = geodesic(skel, a);
        for &b in &ends[i + 1..] {
            if let Some(&d) = dist.get(&b) {
                if best.map_or(true, |(bd, _, _)| d > bd) {
                    best = Some((d, a, b));
                }
            }
        }
    }
    best.map(|(_, a, b)| (a, b))
}

fn stays_connected(skel: &Skeleton, removed: &[Point]) -> bool {
    let mut rest = skel.clone();
    for &p in removed {
        rest.set(p, false);
    }
    let pts = rest.points();
    !pts.is_empty() && components(&pts, |q| rest.contains(q)).len() == 1
}

/// Repeatedly removes the shortest free branch no longer than
/// `prune_ratio` times the current skeleton size, never touching the two
/// branches that carry the longest endpoint-to-endpoint route. Short loops
/// around a junction are opened the same way.
pub fn prune_branches(skel: &Skeleton, prune_ratio: f64) -> Result<Skeleton> {
    if !(0.0..1.0).contains(&prune_ratio) {
        return Err(Error::InvalidParameter(format!("prune ratio {prune_ratio} outside [0, 1)")));
    }
    let mut cur = skel.clone();
    loop {
        let report = match trace_axis(&cur)? {
            AxisTrace::Path(_) => return Ok(cur),
            AxisTrace::Branched(r) => r,
        };
        let limit = prune_ratio * cur.len() as f64;
        let protected = main_path_ends(&cur);
        // free branches, or short bypasses whose removal keeps the skeleton connected
        let victim = report
            .branches
            .iter()
            .filter(|b| b.len() as f64 <= limit)
            .filter(|b| protected.map_or(true, |(a, z)| !b.points.contains(&a) && !b.points.contains(&z)))
            .filter(|b| b.terminal || stays_connected(&cur, &b.points))
            .min_by_key(|b| b.len());
        let Some(victim) = victim else {
            return Err(Error::PruneFailed(report));
        };
        for &p in &victim.points {
            cur.set(p, false);
        }
        cur = strip_redundant(&cur);
    }
}

/// Least-squares direction through `pts`, oriented from the first towards
/// the last point.
pub(crate) fn fit_direction(pts: &[Point]) -> Option<(f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.x as f64).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.y as f64).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p.x as f64 - mx, p.y as f64 - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    // principal eigenvector of the 2x2 scatter matrix
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let (mut ux, mut uy) = (theta.cos(), theta.sin());
    let first = pts[0];
    let last = pts[pts.len() - 1];
    let (cx, cy) = ((last.x - first.x) as f64, (last.y - first.y) as f64);
    let dot = ux * cx + uy * cy;
    if dot.abs() < 1e-12 {
        let norm = cx.hypot(cy);
        if norm == 0.0 {
            return None;
        }
        return Some((cx / norm, cy / norm));
    }
    if dot < 0.0 {
        ux = -ux;
        uy = -uy;
    }
    Some((ux, uy))
}

/// Number of unit steps from `end` along `dir` that stay on the foreground.
fn ray_gap(end: Point, dir: (f64, f64), mask: &BinaryMask) -> usize {
    let limit = mask.width() + mask.height();
    (1..=limit).take_while(|&k| mask.at(step_point(end, dir, k as f64))).count()
}

fn step_point(end: Point, dir: (f64, f64), k: f64) -> Point {
    Point::new((end.x as f64 + k * dir.0).round() as i32, (end.y as f64 + k * dir.1).round() as i32)
}

fn extend_tail(points: &mut Vec<Point>, mask: &BinaryMask, gap_threshold: usize, window: usize) -> Result<()> {
    let tail = &points[points.len().saturating_sub(window.max(2))..];
    let dir = fit_direction(tail).ok_or_else(|| Error::AxisTooShort("direction undefined".into()))?;
    let end = *points.last().expect("non-empty");
    if ray_gap(end, dir, mask) <= gap_threshold {
        return Ok(());
    }
    let seen: HashSet<Point> = points.iter().copied().collect();
    let limit = mask.width() + mask.height();
    for k in 1..=limit {
        let p = step_point(end, dir, k as f64);
        if !mask.at(p) {
            break;
        }
        let last = *points.last().expect("non-empty");
        if p == last {
            continue;
        }
        if seen.contains(&p) || !p.is_8_neighbor(last) {
            break;
        }
        points.push(p);
    }
    Ok(())
}

/// Extends each end whose along-axis distance to the mask boundary exceeds
/// `gap_threshold`, marching in unit steps along the least-squares direction
/// of the last `direction_window` points and stopping before the first
/// background pixel.
pub fn extend_axis(axis: &MedialAxis, mask: &BinaryMask, gap_threshold: usize, direction_window: usize) -> Result<MedialAxis> {
    if axis.len() < 2 {
        return Err(Error::AxisTooShort(format!("{} point(s), direction undefined", axis.len())));
    }
    let mut pts = axis.points.clone();
    extend_tail(&mut pts, mask, gap_threshold, direction_window)?;
    pts.reverse();
    extend_tail(&mut pts, mask, gap_threshold, direction_window)?;
    pts.reverse();
    Ok(MedialAxis { points: pts })
}

/// Knobs for [`medial_axis`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisParams {
    pub prune_ratio: f64,
    pub gap_threshold: usize,
    pub direction_window: usize,
}

impl Default for AxisParams {
    fn default() -> Self {
        Self { prune_ratio: 0.1, gap_threshold: 6, direction_window: 5 }
    }
}

/// Thin, clean, prune and trace; the raw (unextended) medial axis.
pub fn thinned_axis(mask: &BinaryMask, prune_ratio: f64) -> Result<MedialAxis> {
    let skel = strip_redundant(&zhang_suen_thin(mask)?);
    let pruned = prune_branches(&skel, prune_ratio)?;
    match trace_axis(&pruned)? {
        AxisTrace::Path(axis) => Ok(axis),
        AxisTrace::Branched(report) => Err(Error::PruneFailed(report)),
    }
}

/// Complete axis recovery: far ends are extended first, then the axis is
/// pruned and both ends are pushed out to the chromosome edge.
pub fn medial_axis(mask: &BinaryMask, params: &AxisParams) -> Result<MedialAxis> {
    let axis = thinned_axis(mask, params.prune_ratio)?;
    if axis.len() < 2 {
        return Err(Error::AxisTooShort(format!("{} point(s)", axis.len())));
    }
    let axis = extend_axis(&axis, mask, params.gap_threshold, params.direction_window)?;
    extend_axis(&axis, mask, 0, params.direction_window)
}
