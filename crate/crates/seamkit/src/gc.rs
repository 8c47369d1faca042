//! Graph-cut seam finder: the quality baseline. The overlap becomes a grid
//! graph whose minimum s-t cut is found exactly with Dinic's algorithm
//! (breadth-first level graphs plus blocking flows).

use crate::error::{Result, SeamError};
use crate::loss::{prepare_loss_space, LossSpace};
use crate::mask::{Mask, MaskPair, Region, RegionPartition};
use crate::raster::ImageF;

/// Additive slack on every n-link so identical images still have a finite,
/// minimal-length optimal cut.
pub const N_LINK_EPS: f64 = 1e-6;

/// Stand-in for infinite terminal capacity; far above any reachable n-link
/// total yet comfortably inside f64 range.
pub const TERMINAL_CAPACITY: f64 = 1e30;

#[derive(Debug, Clone, Copy)]
struct Arc {
    to: u32,
    cap: f64,
}

/// Directed flow network with paired arcs: arc `i` and `i ^ 1` are each
/// other's residual reverses.
#[derive(Debug, Clone)]
pub struct FlowGraph {
    arcs: Vec<Arc>,
    heads: Vec<Vec<u32>>,
    source: usize,
    sink: usize,
    /// Pixel behind each non-terminal node, when built from an image pair.
    pixel_nodes: Vec<(usize, usize)>,
}

impl FlowGraph {
    pub fn new(nodes: usize, source: usize, sink: usize) -> Result<Self> {
        if source >= nodes || sink >= nodes || source == sink {
            return Err(SeamError::InvalidParam(format!(
                "bad terminals {source}/{sink} for {nodes} nodes"
            )));
        }
        Ok(Self {
            arcs: Vec::new(),
            heads: vec![Vec::new(); nodes],
            source,
            sink,
            pixel_nodes: Vec::new(),
        })
    }

    /// Adds the arc pair u→v / v→u with the given capacities. Use a zero
    /// reverse capacity for a one-way arc; equal capacities make the edge
    /// undirected.
    pub fn add_edge(&mut self, u: usize, v: usize, cap_fwd: f64, cap_rev: f64) {
        assert!(cap_fwd >= 0.0 && cap_rev >= 0.0, "negative capacity");
        let i = self.arcs.len() as u32;
        self.arcs.push(Arc { to: v as u32, cap: cap_fwd });
        self.arcs.push(Arc { to: u as u32, cap: cap_rev });
        self.heads[u].push(i);
        self.heads[v].push(i + 1);
    }

    pub fn node_count(&self) -> usize {
        self.heads.len()
    }

    /// Directed arcs with positive capacity leaving the source.
    pub fn source_arc_count(&self) -> usize {
        self.count_positive(self.source)
    }

    /// Directed arcs with positive capacity entering the sink (stored as
    /// positive-capacity arcs pointing at the sink's pair slots).
    pub fn sink_arc_count(&self) -> usize {
        self.heads
            .iter()
            .enumerate()
            .filter(|&(u, _)| u != self.source && u != self.sink)
            .flat_map(|(_, h)| h.iter())
            .filter(|&&i| {
                let a = self.arcs[i as usize];
                a.to as usize == self.sink && a.cap > 0.0
            })
            .count()
    }

    /// Positive-capacity arcs between non-terminal nodes, counted directed.
    pub fn n_link_arc_count(&self) -> usize {
        (0..self.heads.len())
            .filter(|&u| u != self.source && u != self.sink)
            .map(|u| {
                self.heads[u]
                    .iter()
                    .filter(|&&i| {
                        let a = self.arcs[i as usize];
                        let v = a.to as usize;
                        v != self.source && v != self.sink && a.cap > 0.0
                    })
                    .count()
            })
            .sum()
    }

    fn count_positive(&self, u: usize) -> usize {
        self.heads[u]
            .iter()
            .filter(|&&i| self.arcs[i as usize].cap > 0.0)
            .count()
    }

    /// Exact maximum flow; afterwards the arcs hold residual capacities.
    /// Returns the flow value and, per node, whether it remains reachable
    /// from the source in the residual graph (the min-cut source side).
    pub fn max_flow(&mut self) -> (f64, Vec<bool>) {
        let n = self.heads.len();
        let mut total = 0.0;
        let mut level = vec![u32::MAX; n];
        let mut iter = vec![0usize; n];
        let mut queue = Vec::with_capacity(n);
        loop {
            // Level graph by BFS over residual arcs.
            level.iter_mut().for_each(|l| *l = u32::MAX);
            level[self.source] = 0;
            queue.clear();
            queue.push(self.source);
            let mut qi = 0;
            while qi < queue.len() {
                let u = queue[qi];
                qi += 1;
                for &i in &self.heads[u] {
                    let a = self.arcs[i as usize];
                    if a.cap > 0.0 && level[a.to as usize] == u32::MAX {
                        level[a.to as usize] = level[u] + 1;
                        queue.push(a.to as usize);
                    }
                }
            }
            if level[self.sink] == u32::MAX {
                break;
            }
            iter.iter_mut().for_each(|p| *p = 0);
            loop {
                let pushed = self.augment(self.source, f64::INFINITY, &level, &mut iter);
                if pushed == 0.0 {
                    break;
                }
                total += pushed;
            }
        }
        let reachable = {
            let mut seen = vec![false; n];
            seen[self.source] = true;
            queue.clear();
            queue.push(self.source);
            let mut qi = 0;
            while qi < queue.len() {
                let u = queue[qi];
                qi += 1;
                for &i in &self.heads[u] {
                    let a = self.arcs[i as usize];
                    if a.cap > 0.0 && !seen[a.to as usize] {
                        seen[a.to as usize] = true;
                        queue.push(a.to as usize);
                    }
                }
            }
            seen
        };
        (total, reachable)
    }

    fn augment(&mut self, u: usize, limit: f64, level: &[u32], iter: &mut [usize]) -> f64 {
        if u == self.sink {
            return limit;
        }
        while iter[u] < self.heads[u].len() {
            let i = self.heads[u][iter[u]] as usize;
            let (to, cap) = (self.arcs[i].to as usize, self.arcs[i].cap);
            if cap > 0.0 && level[to] == level[u] + 1 {
                let pushed = self.augment(to, limit.min(cap), level, iter);
                if pushed > 0.0 {
                    self.arcs[i].cap -= pushed;
                    self.arcs[i ^ 1].cap += pushed;
                    return pushed;
                }
            }
            iter[u] += 1;
        }
        0.0
    }
}

/// Builds the seam graph for an overlap: one node per overlap pixel plus
/// source and sink (the last two node indices). Neighboring overlap pixels
/// p, q get an undirected n-link of capacity `D(p) + D(q) + eps` where D is
/// the channel-summed color difference; pixels 4-adjacent to the A-only
/// region are wired to the source and to the B-only region to the sink,
/// both at effectively infinite capacity.
pub fn build_seam_graph(
    img_a: &ImageF,
    img_b: &ImageF,
    part: &RegionPartition,
    space: LossSpace,
) -> Result<FlowGraph> {
    let (a, b) = prepare_loss_space(img_a, img_b, space)?;
    if a.height() != part.height() || a.width() != part.width() {
        return Err(SeamError::DimensionMismatch(
            "seam graph images vs partition".into(),
        ));
    }
    let (h, w) = (part.height(), part.width());
    let mut node_of = vec![u32::MAX; h * w];
    let mut pixels = Vec::with_capacity(part.n12);
    for (y, x) in part.overlap_pixels() {
        node_of[y * w + x] = pixels.len() as u32;
        pixels.push((y, x));
    }
    let n = pixels.len();
    let (source, sink) = (n, n + 1);
    let mut g = FlowGraph::new(n + 2, source, sink)?;
    g.pixel_nodes = pixels.clone();

    let d = |y: usize, x: usize| a.abs_diff_at(&b, y, x);
    let (mut has_src, mut has_snk) = (false, false);
    for (idx, &(y, x)) in pixels.iter().enumerate() {
        let dp = d(y, x);
        // Rightward and downward n-links cover each neighbor pair once.
        for (ny, nx) in [(y, x + 1), (y + 1, x)] {
            if ny < h && nx < w && node_of[ny * w + nx] != u32::MAX {
                let cap = dp + d(ny, nx) + N_LINK_EPS;
                g.add_edge(idx, node_of[ny * w + nx] as usize, cap, cap);
            }
        }
        let mut near_a = false;
        let mut near_b = false;
        let mut look = |yy: isize, xx: isize| {
            if yy >= 0 && (yy as usize) < h && xx >= 0 && (xx as usize) < w {
                match part.region(yy as usize, xx as usize) {
                    Region::OnlyA => near_a = true,
                    Region::OnlyB => near_b = true,
                    _ => {}
                }
            }
        };
        look(y as isize - 1, x as isize);
        look(y as isize + 1, x as isize);
        look(y as isize, x as isize - 1);
        look(y as isize, x as isize + 1);
        if near_a {
            g.add_edge(source, idx, TERMINAL_CAPACITY, 0.0);
            has_src = true;
        }
        if near_b {
            g.add_edge(idx, sink, TERMINAL_CAPACITY, 0.0);
            has_snk = true;
        }
    }
    if !has_src || !has_snk {
        return Err(SeamError::NoSeam(
            "overlap touches only one of the single-coverage regions".into(),
        ));
    }
    Ok(g)
}

/// A seam found by minimum cut.
#[derive(Debug, Clone)]
pub struct GcSeam {
    pub masks: MaskPair,
    /// Capacity of the minimum cut (equals the maximum flow).
    pub cut_value: f64,
}

/// Globally optimal seam for the n-link energy: overlap pixels on the
/// source side of the minimum cut keep image A, the rest keep image B.
pub fn gc_seam(
    img_a: &ImageF,
    img_b: &ImageF,
    part: &RegionPartition,
    space: LossSpace,
) -> Result<GcSeam> {
    let mut g = build_seam_graph(img_a, img_b, part, space)?;
    let (flow, side) = g.max_flow();
    let (h, w) = (part.height(), part.width());
    let mut mask_a = Mask::new(h, w);
    let mut mask_b = Mask::new(h, w);
    let mut node = 0usize;
    for y in 0..h {
        for x in 0..w {
            match part.region(y, x) {
                Region::OnlyA => mask_a.put(y, x, true),
                Region::OnlyB => mask_b.put(y, x, true),
                Region::Overlap => {
                    debug_assert_eq!(g.pixel_nodes[node], (y, x));
                    if side[node] {
                        mask_a.put(y, x, true);
                    } else {
                        mask_b.put(y, x, true);
                    }
                    node += 1;
                }
                Region::Outside => {}
            }
        }
    }
    Ok(GcSeam {
        masks: MaskPair { mask_a, mask_b },
        cut_value: flow,
    })
}
