//! Cartesian computational grid over a truncated ball: field storage,
//! finite differences, volume and sphere quadrature, region measures.
//!
//! Nodes sit at `origin + (idx - (n-1)/2) * spacing` per axis, so the grid
//! box is centred on `origin`. All reductions run in a fixed pairwise order;
//! identical inputs give bit-identical sums regardless of thread count.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{CurvError, Result};

/// Uniform Cartesian grid over a box containing the ball of radius `r_outer`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n: usize,
    spacing: f64,
    origin: [f64; 3],
    r_outer: f64,
}

impl Grid {
    pub fn new(n: usize, spacing: f64, origin: [f64; 3], r_outer: f64) -> Result<Arc<Grid>> {
        if n < 5 {
            return Err(CurvError::GridTooSmall(format!(
                "need at least 5 nodes per axis, got {n}"
            )));
        }
        if !(spacing > 0.0) {
            return Err(CurvError::InvalidParameter(format!(
                "spacing must be positive, got {spacing}"
            )));
        }
        let half_extent = 0.5 * (n - 1) as f64 * spacing;
        if r_outer > half_extent + 1e-12 {
            return Err(CurvError::InvalidParameter(format!(
                "ball of radius {r_outer} does not fit in box of half-extent {half_extent}"
            )));
        }
        if !(r_outer > 0.0) {
            return Err(CurvError::InvalidParameter(
                "r_outer must be positive".into(),
            ));
        }
        Ok(Arc::new(Grid {
            n,
            spacing,
            origin,
            r_outer,
        }))
    }

    /// Grid sized so the ball keeps a two-layer stencil margin from the box.
    pub fn for_ball(n: usize, r_outer: f64, origin: [f64; 3]) -> Result<Arc<Grid>> {
        if n < 5 {
            return Err(CurvError::GridTooSmall(format!(
                "need at least 5 nodes per axis, got {n}"
            )));
        }
        // half-extent = r_outer + 2 h  with  half-extent = (n-1)/2 h
        let spacing = r_outer / (0.5 * (n - 1) as f64 - 2.0);
        if !(spacing > 0.0) {
            return Err(CurvError::InvalidParameter(format!(
                "cannot fit ball r_outer={r_outer} with margin on n={n}"
            )));
        }
        Grid::new(n, spacing, origin, r_outer)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn r_outer(&self) -> f64 {
        self.r_outer
    }

    pub fn node_count(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn half_extent(&self) -> f64 {
        0.5 * (self.n - 1) as f64 * self.spacing
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn unravel(&self, node: usize) -> (usize, usize, usize) {
        let k = node % self.n;
        let j = (node / self.n) % self.n;
        let i = node / (self.n * self.n);
        (i, j, k)
    }

    #[inline]
    pub fn axis_coord(&self, idx: usize, axis: usize) -> f64 {
        self.origin[axis] + (idx as f64 - 0.5 * (self.n - 1) as f64) * self.spacing
    }

    #[inline]
    pub fn coords(&self, node: usize) -> [f64; 3] {
        let (i, j, k) = self.unravel(node);
        [
            self.axis_coord(i, 0),
            self.axis_coord(j, 1),
            self.axis_coord(k, 2),
        ]
    }

    /// Coordinate distance from the grid origin.
    #[inline]
    pub fn radius(&self, node: usize) -> f64 {
        let x = self.coords(node);
        let o = self.origin;
        let dx = [x[0] - o[0], x[1] - o[1], x[2] - o[2]];
        (dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2]).sqrt()
    }

    /// Nodes with `r < r_outer`; the PDE unknowns. Everything else is held
    /// at its Dirichlet value.
    pub fn active_region(self: &Arc<Self>) -> Region {
        Region::from_fn(self, |g, node| g.radius(node) < g.r_outer)
    }

    pub fn ball_region(self: &Arc<Self>, radius: f64) -> Region {
        Region::from_fn(self, |g, node| g.radius(node) <= radius)
    }
}

/// Real-valued field: `ncomp` components per node, components innermost.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    ncomp: usize,
    data: Vec<f64>,
}

/// Complex-valued field (spinor components and similar).
#[derive(Debug, Clone)]
pub struct CField {
    grid: Arc<Grid>,
    ncomp: usize,
    data: Vec<Complex64>,
}

macro_rules! field_common {
    ($ty:ident, $scalar:ty, $zero:expr) => {
        impl $ty {
            pub fn zeros(grid: &Arc<Grid>, ncomp: usize) -> Self {
                $ty {
                    grid: grid.clone(),
                    ncomp,
                    data: vec![$zero; grid.node_count() * ncomp],
                }
            }

            pub fn from_fn(
                grid: &Arc<Grid>,
                ncomp: usize,
                f: impl Fn(usize, usize) -> $scalar + Sync,
            ) -> Self {
                let mut field = Self::zeros(grid, ncomp);
                let nc = ncomp;
                field
                    .data
                    .par_chunks_mut(nc)
                    .enumerate()
                    .for_each(|(node, vals)| {
                        for (c, v) in vals.iter_mut().enumerate() {
                            *v = f(node, c);
                        }
                    });
                field
            }

            pub fn grid(&self) -> &Arc<Grid> {
                &self.grid
            }

            pub fn ncomp(&self) -> usize {
                self.ncomp
            }

            #[inline]
            pub fn at(&self, node: usize, c: usize) -> $scalar {
                self.data[node * self.ncomp + c]
            }

            #[inline]
            pub fn set(&mut self, node: usize, c: usize, v: $scalar) {
                self.data[node * self.ncomp + c] = v;
            }

            pub fn data(&self) -> &[$scalar] {
                &self.data
            }

            pub fn data_mut(&mut self) -> &mut [$scalar] {
                &mut self.data
            }

            /// Per-node slice of all components.
            #[inline]
            pub fn node_slice(&self, node: usize) -> &[$scalar] {
                &self.data[node * self.ncomp..(node + 1) * self.ncomp]
            }

            pub fn assert_finite(&self, context: &str) -> Result<()> {
                for (i, v) in self.data.iter().enumerate() {
                    if !is_finite_scalar(v) {
                        return Err(CurvError::NonFinite {
                            context: context.to_string(),
                            node: i / self.ncomp,
                        });
                    }
                }
                Ok(())
            }

            /// Second-order finite-difference derivative along `axis`
            /// (0..=2), of order 1 or 2. Central stencils at interior
            /// nodes, one-sided second-order stencils on the outermost
            /// two layers.
            pub fn fd_derivative(&self, axis: usize, order: usize) -> Result<$ty> {
                if self.grid.n() < 5 {
                    return Err(CurvError::GridTooSmall(
                        "finite differences need at least 5 nodes per axis".into(),
                    ));
                }
                if axis > 2 {
                    return Err(CurvError::InvalidParameter(format!("axis {axis} > 2")));
                }
                if order != 1 && order != 2 {
                    return Err(CurvError::InvalidParameter(format!(
                        "derivative order must be 1 or 2, got {order}"
                    )));
                }
                let mut out = Self::zeros(&self.grid, self.ncomp);
                fd_axis(
                    &self.grid,
                    &self.data,
                    self.ncomp,
                    axis,
                    order,
                    &mut out.data,
                );
                Ok(out)
            }
        }
    };
}

field_common!(Field, f64, 0.0);
field_common!(CField, Complex64, Complex64::new(0.0, 0.0));

#[inline]
fn is_finite_scalar<T: FiniteCheck>(v: &T) -> bool {
    v.finite()
}

trait FiniteCheck {
    fn finite(&self) -> bool;
}

impl FiniteCheck for f64 {
    fn finite(&self) -> bool {
        self.is_finite()
    }
}

impl FiniteCheck for Complex64 {
    fn finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

impl Field {
    /// Scalar field from a function of position.
    pub fn scalar_from(grid: &Arc<Grid>, f: impl Fn([f64; 3]) -> f64 + Sync) -> Field {
        Field::from_fn(grid, 1, |node, _| f(grid.coords(node)))
    }

    pub fn constant(grid: &Arc<Grid>, ncomp: usize, v: f64) -> Field {
        Field {
            grid: grid.clone(),
            ncomp,
            data: vec![v; grid.node_count() * ncomp],
        }
    }

    /// Trilinear interpolation of every component at position `x`.
    /// Positions are clamped to the grid box.
    pub fn sample(&self, x: [f64; 3]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncomp];
        self.sample_into(x, &mut out);
        out
    }

    pub fn sample_into(&self, x: [f64; 3], out: &mut [f64]) {
        let g = &self.grid;
        let n = g.n();
        let c = 0.5 * (n - 1) as f64;
        let mut i0 = [0usize; 3];
        let mut fr = [0.0f64; 3];
        for d in 0..3 {
            let u = (x[d] - g.origin()[d]) / g.spacing() + c;
            let u = u.clamp(0.0, (n - 1) as f64);
            let base = (u.floor() as usize).min(n - 2);
            i0[d] = base;
            fr[d] = u - base as f64;
        }
        for v in out.iter_mut() {
            *v = 0.0;
        }
        for di in 0..2 {
            let wi = if di == 0 { 1.0 - fr[0] } else { fr[0] };
            for dj in 0..2 {
                let wj = if dj == 0 { 1.0 - fr[1] } else { fr[1] };
                for dk in 0..2 {
                    let wk = if dk == 0 { 1.0 - fr[2] } else { fr[2] };
                    let w = wi * wj * wk;
                    let node = g.idx(i0[0] + di, i0[1] + dj, i0[2] + dk);
                    let vals = self.node_slice(node);
                    for (o, v) in out.iter_mut().zip(vals) {
                        *o += w * v;
                    }
                }
            }
        }
    }
}

/// Generic one-axis finite-difference kernel shared by real and complex
/// fields. `order` is 1 or 2; coefficients are exact for per-axis
/// polynomials of degree <= 2.
fn fd_axis<T>(grid: &Grid, data: &[T], ncomp: usize, axis: usize, order: usize, out: &mut [T])
where
    T: Copy
        + Send
        + Sync
        + std::ops::Add<Output = T>
        + std::ops::Sub<Output = T>
        + std::ops::Mul<f64, Output = T>,
{
    let n = grid.n();
    let h = grid.spacing();
    // stride between adjacent nodes along `axis`, in scalar units
    let stride = match axis {
        0 => n * n * ncomp,
        1 => n * ncomp,
        _ => ncomp,
    };
    let inv_h = 1.0 / h;
    let inv_h2 = inv_h * inv_h;

    out.par_chunks_mut(n * n * ncomp)
        .enumerate()
        .for_each(|(i, slab)| {
            let slab_base = i * n * n * ncomp;
            for jk in 0..n * n {
                for c in 0..ncomp {
                    let p = jk * ncomp + c;
                    let node_scalar = slab_base + p;
                    // index of this node along the differencing axis
                    let ai = match axis {
                        0 => i,
                        1 => jk / n,
                        _ => jk % n,
                    };
                    let s = stride as isize;
                    let v = |off: isize| -> T {
                        data[(node_scalar as isize + off * s) as usize]
                    };
                    let r = if order == 1 {
                        if ai >= 2 && ai + 2 < n {
                            (v(1) - v(-1)) * (0.5 * inv_h)
                        } else if ai < 2 {
                            (v(1) * 4.0 - v(0) * 3.0 - v(2)) * (0.5 * inv_h)
                        } else {
                            (v(0) * 3.0 - v(-1) * 4.0 + v(-2)) * (0.5 * inv_h)
                        }
                    } else {
                        if ai >= 2 && ai + 2 < n {
                            (v(1) + v(-1) - v(0) * 2.0) * inv_h2
                        } else if ai < 2 {
                            (v(0) * 2.0 - v(1) * 5.0 + v(2) * 4.0 - v(3)) * inv_h2
                        } else {
                            (v(0) * 2.0 - v(-1) * 5.0 + v(-2) * 4.0 - v(-3)) * inv_h2
                        }
                    };
                    slab[p] = r;
                }
            }
        });
}

/// Boolean node mask.
#[derive(Debug, Clone)]
pub struct Region {
    grid: Arc<Grid>,
    mask: Vec<bool>,
}

impl Region {
    pub fn full(grid: &Arc<Grid>) -> Region {
        Region {
            grid: grid.clone(),
            mask: vec![true; grid.node_count()],
        }
    }

    pub fn empty(grid: &Arc<Grid>) -> Region {
        Region {
            grid: grid.clone(),
            mask: vec![false; grid.node_count()],
        }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&Grid, usize) -> bool) -> Region {
        Region {
            grid: grid.clone(),
            mask: (0..grid.node_count()).map(|i| f(grid, i)).collect(),
        }
    }

    pub fn from_mask(grid: &Arc<Grid>, mask: Vec<bool>) -> Result<Region> {
        if mask.len() != grid.node_count() {
            return Err(CurvError::InvalidParameter(format!(
                "mask length {} != node count {}",
                mask.len(),
                grid.node_count()
            )));
        }
        Ok(Region {
            grid: grid.clone(),
            mask,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    #[inline]
    pub fn contains(&self, node: usize) -> bool {
        self.mask[node]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|m| *m)
    }

    pub fn intersect(&self, other: &Region) -> Region {
        Region {
            grid: self.grid.clone(),
            mask: self
                .mask
                .iter()
                .zip(&other.mask)
                .map(|(a, b)| *a && *b)
                .collect(),
        }
    }

    pub fn complement_within(&self, ambient: &Region) -> Region {
        Region {
            grid: self.grid.clone(),
            mask: self
                .mask
                .iter()
                .zip(&ambient.mask)
                .map(|(a, amb)| *amb && !*a)
                .collect(),
        }
    }

    /// Region as a 0/1 scalar field (for export).
    pub fn indicator(&self) -> Field {
        Field::from_fn(&self.grid, 1, |node, _| {
            if self.mask[node] {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Deterministic pairwise tree summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 64 {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn pairwise_sum_complex(values: &[Complex64]) -> Complex64 {
    if values.len() <= 64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum_complex(&values[..mid]) + pairwise_sum_complex(&values[mid..])
}

/// `sum f * vol_element * h^3` over the region, in fixed node order.
pub fn integrate_volume(f: &Field, vol_element: &Field, region: &Region) -> Result<f64> {
    assert_eq!(f.ncomp(), 1, "integrate_volume expects a scalar field");
    let h3 = f.grid().spacing().powi(3);
    let mut products = Vec::with_capacity(region.count());
    for node in 0..f.grid().node_count() {
        if region.contains(node) {
            let fv = f.at(node, 0);
            let vv = vol_element.at(node, 0);
            if !fv.is_finite() || !vv.is_finite() {
                return Err(CurvError::NonFinite {
                    context: "integrate_volume".into(),
                    node,
                });
            }
            products.push(fv * vv);
        }
    }
    Ok(pairwise_sum(&products) * h3)
}

/// Measure of a region under the given volume element.
pub fn region_measure(region: &Region, vol_element: &Field) -> Result<f64> {
    let ones = Field::constant(region.grid(), 1, 1.0);
    integrate_volume(&ones, vol_element, region)
}

/// `(integral |f|^p dmu)^(1/p)` over the region. Returns the value and a
/// flag that is true when the region was empty (value 0 by convention).
pub fn lp_norm(f: &Field, p: f64, vol_element: &Field, region: &Region) -> Result<(f64, bool)> {
    if !(p > 0.0) {
        return Err(CurvError::InvalidParameter(format!(
            "lp_norm needs p > 0, got {p}"
        )));
    }
    if region.is_empty() {
        return Ok((0.0, true));
    }
    let powed = Field::from_fn(f.grid(), 1, |node, _| f.at(node, 0).abs().powf(p));
    let integral = integrate_volume(&powed, vol_element, region)?;
    Ok((integral.powf(1.0 / p), false))
}

/// Gauss-Legendre nodes and weights on (-1, 1).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Newton iteration from the Chebyshev-based initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_deriv(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// What the sphere quadrature integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SphereIntegrand {
    /// `f du` for a scalar field.
    Scalar,
    /// `f_i nu^i du` for a rank-1 field (3 components).
    Flux,
}

/// Quadrature of a field over the coordinate sphere of radius `R` centred at
/// `center`, using Gauss-Legendre nodes in cos(theta) and a uniform
/// longitude grid. Field values come from trilinear interpolation.
pub fn integrate_sphere(
    f: &Field,
    center: [f64; 3],
    radius: f64,
    n_quad: usize,
    integrand: SphereIntegrand,
) -> Result<f64> {
    let grid = f.grid();
    if radius > grid.r_outer() + 1e-12 {
        return Err(CurvError::InvalidParameter(format!(
            "sphere radius {radius} exceeds r_outer {}",
            grid.r_outer()
        )));
    }
    if n_quad < 16 {
        return Err(CurvError::InvalidParameter(format!(
            "n_quad must be at least 16, got {n_quad}"
        )));
    }
    match integrand {
        SphereIntegrand::Scalar => assert_eq!(f.ncomp(), 1),
        SphereIntegrand::Flux => assert_eq!(f.ncomp(), 3),
    }

    let (mu, w_mu) = gauss_legendre(n_quad);
    let n_phi = 2 * n_quad;
    let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;

    let mut contributions = Vec::with_capacity(n_quad * n_phi);
    let mut buf = vec![0.0; f.ncomp()];
    for (m, wm) in mu.iter().zip(&w_mu) {
        let sin_t = (1.0 - m * m).max(0.0).sqrt();
        for jp in 0..n_phi {
            let phi = (jp as f64 + 0.5) * dphi;
            let nu = [sin_t * phi.cos(), sin_t * phi.sin(), *m];
            let x = [
                center[0] + radius * nu[0],
                center[1] + radius * nu[1],
                center[2] + radius * nu[2],
            ];
            f.sample_into(x, &mut buf);
            let val = match integrand {
                SphereIntegrand::Scalar => buf[0],
                SphereIntegrand::Flux => buf[0] * nu[0] + buf[1] * nu[1] + buf[2] * nu[2],
            };
            contributions.push(val * wm * dphi * radius * radius);
        }
    }
    Ok(pairwise_sum(&contributions))
}
