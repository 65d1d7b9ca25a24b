//! Uniform cell-centred grids on boxes, split into the boundary strip and the interior.
//!
//! A node is a *strip* node when its distance to the box boundary is at most `r`
//! (closed strip), otherwise it is an *interior* node. Every node carries the
//! measure `h^dim`.

use crate::error::{Error, Result};

/// Node coordinates; the second component is unused (zero) in 1D.
pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    dim: usize,
    lo: Point,
    hi: Point,
}

impl DomainBox {
    pub fn new(lo: &[f64], hi: &[f64]) -> Result<Self> {
        let dim = lo.len();
        if !(dim == 1 || dim == 2) || hi.len() != dim {
            return Err(Error::invalid(format!(
                "box needs dim 1 or 2 with matching bounds, got lo={lo:?} hi={hi:?}"
            )));
        }
        let mut l = [0.0; 2];
        let mut u = [0.0; 2];
        for k in 0..dim {
            if !(lo[k] < hi[k]) || !lo[k].is_finite() || !hi[k].is_finite() {
                return Err(Error::invalid(format!("box side {k}: need lo < hi")));
            }
            l[k] = lo[k];
            u[k] = hi[k];
        }
        Ok(Self { dim, lo: l, hi: u })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(&[lo], &[hi])
    }

    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(&vec![0.0; dim], &vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo[..self.dim]
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi[..self.dim]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|k| self.hi[k] - self.lo[k]).product()
    }

    fn boundary_distance(&self, x: &Point) -> f64 {
        (0..self.dim)
            .map(|k| (x[k] - self.lo[k]).min(self.hi[k] - x[k]))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeClass {
    Interior,
    Strip,
}

impl NodeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeClass::Interior => "interior",
            NodeClass::Strip => "strip",
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GridOptions {
    /// Accept grids whose strip covers every node.
    pub allow_empty_interior: bool,
}

#[derive(Debug, Clone)]
pub struct Grid {
    domain: DomainBox,
    h: f64,
    r: f64,
    nodes: Vec<Point>,
    klass: Vec<NodeClass>,
    mu: Vec<f64>,
    bdist: Vec<f64>,
    strip: Vec<usize>,
    interior: Vec<usize>,
    /// Position of each node inside its class index list.
    local: Vec<usize>,
}

// Relative slack used when comparing bdist with r and when checking that h tiles a side.
const TILE_TOL: f64 = 1e-12;

impl Grid {
    pub fn build(domain: DomainBox, h: f64, r: f64) -> Result<Self> {
        Self::build_with(domain, h, r, GridOptions::default())
    }

    pub fn build_with(domain: DomainBox, h: f64, r: f64, opts: GridOptions) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!("spacing h must be > 0, got {h}")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::invalid(format!(
                "strip width r must be > 0, got {r}"
            )));
        }
        let dim = domain.dim;
        let mut counts = [1usize; 2];
        for (k, count) in counts.iter_mut().enumerate().take(dim) {
            let length = domain.hi[k] - domain.lo[k];
            let n = (length / h).round();
            if n < 1.0 || (n * h - length).abs() > TILE_TOL * length {
                return Err(Error::BadSpacing { h, axis: k, length });
            }
            *count = n as usize;
        }

        let mut nodes = Vec::with_capacity(counts[0] * counts[1]);
        for i in 0..counts[0] {
            for j in 0..counts[1] {
                let mut x = [0.0; 2];
                x[0] = domain.lo[0] + (i as f64 + 0.5) * h;
                if dim == 2 {
                    x[1] = domain.lo[1] + (j as f64 + 0.5) * h;
                }
                nodes.push(x);
            }
        }
        let bdist: Vec<f64> = nodes.iter().map(|x| domain.boundary_distance(x)).collect();
        let cutoff = r + TILE_TOL * r.max(1.0);
        let klass: Vec<NodeClass> = bdist
            .iter()
            .map(|&d| {
                if d <= cutoff {
                    NodeClass::Strip
                } else {
                    NodeClass::Interior
                }
            })
            .collect();
        let mu = vec![h.powi(dim as i32); nodes.len()];
        Self::assemble_parts(domain, h, r, nodes, klass, mu, bdist, opts)
    }

    /// Builds a grid from explicit parts. Used for hand-made fixtures whose
    /// weights are supplied directly rather than through a kernel.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        domain: DomainBox,
        h: f64,
        r: f64,
        nodes: Vec<Point>,
        klass: Vec<NodeClass>,
        mu: Vec<f64>,
        bdist: Vec<f64>,
        opts: GridOptions,
    ) -> Result<Self> {
        let n = nodes.len();
        if klass.len() != n || mu.len() != n || bdist.len() != n {
            return Err(Error::invalid("grid parts have mismatched lengths"));
        }
        if mu.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::invalid("node measures must be positive"));
        }
        Self::assemble_parts(domain, h, r, nodes, klass, mu, bdist, opts)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble_parts(
        domain: DomainBox,
        h: f64,
        r: f64,
        nodes: Vec<Point>,
        klass: Vec<NodeClass>,
        mu: Vec<f64>,
        bdist: Vec<f64>,
        opts: GridOptions,
    ) -> Result<Self> {
        let mut strip = Vec::new();
        let mut interior = Vec::new();
        let mut local = vec![0; nodes.len()];
        for (i, c) in klass.iter().enumerate() {
            match c {
                NodeClass::Strip => {
                    local[i] = strip.len();
                    strip.push(i);
                }
                NodeClass::Interior => {
                    local[i] = interior.len();
                    interior.push(i);
                }
            }
        }
        if strip.is_empty() {
            return Err(Error::NoStripNodes);
        }
        if interior.is_empty() && !opts.allow_empty_interior {
            return Err(Error::EmptyInterior);
        }
        Ok(Self {
            domain,
            h,
            r,
            nodes,
            klass,
            mu,
            bdist,
            strip,
            interior,
            local,
        })
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i][..self.dim()]
    }

    pub fn class(&self, i: usize) -> NodeClass {
        self.klass[i]
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.klass
    }

    pub fn is_strip(&self, i: usize) -> bool {
        self.klass[i] == NodeClass::Strip
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn bdist(&self) -> &[f64] {
        &self.bdist
    }

    /// Sorted indices of strip nodes.
    pub fn strip_indices(&self) -> &[usize] {
        &self.strip
    }

    /// Sorted indices of interior nodes.
    pub fn interior_indices(&self) -> &[usize] {
        &self.interior
    }

    /// Index of node `i` within its own class list.
    pub fn local_index(&self, i: usize) -> usize {
        self.local[i]
    }

    pub fn strip_mu(&self) -> Vec<f64> {
        self.strip.iter().map(|&i| self.mu[i]).collect()
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (x, y) = (&self.nodes[a], &self.nodes[b]);
        (0..self.dim())
            .map(|k| (x[k] - y[k]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}
