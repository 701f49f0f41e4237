//! Finite-difference discretizations of the Laplacian on the unit square
//! and the input/output maps of the four benchmark systems.
//!
//! Unknowns sit on a uniform tensor grid. Along an axis with a Dirichlet
//! end the first node is one step `h` from the boundary; next to a Neumann
//! end the boundary lies halfway between the last node and its ghost, so
//! the ghost elimination `x_ghost = x_last + h·g` keeps the stencil
//! symmetric and the mass matrix a scalar multiple of the identity:
//!
//! | ends  | `h`           | first node |
//! |-------|---------------|------------|
//! | D / D | `1/(n+1)`     | `h`        |
//! | D / N | `1/(n+1/2)`   | `h`        |
//! | N / D | `1/(n+1/2)`   | `h/2`      |
//! | N / N | `1/n`         | `h/2`      |
//!
//! Node `(i, j)` (`i` along ξ₁, `j` along ξ₂) has linear index `j·nx + i`.
//! Output rows and input columns built here act on raw nodal samples;
//! [`assemble_example`] rescales them so that the Euclidean inner product
//! equals the discrete L²(Ω) one.

use nalgebra::DMatrix;
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    fn name(self) -> &'static str {
        match self {
            Edge::Left => "left",
            Edge::Right => "right",
            Edge::Bottom => "bottom",
            Edge::Top => "top",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeSpec {
    pub left: Boundary,
    pub right: Boundary,
    pub top: Boundary,
    pub bottom: Boundary,
}

impl EdgeSpec {
    pub fn all(kind: Boundary) -> Self {
        Self {
            left: kind,
            right: kind,
            top: kind,
            bottom: kind,
        }
    }

    /// Dirichlet on the left edge, Neumann on the other three.
    pub fn dirichlet_left() -> Self {
        Self {
            left: Boundary::Dirichlet,
            ..Self::all(Boundary::Neumann)
        }
    }

    pub fn get(&self, edge: Edge) -> Boundary {
        match edge {
            Edge::Left => self.left,
            Edge::Right => self.right,
            Edge::Top => self.top,
            Edge::Bottom => self.bottom,
        }
    }

    pub fn has_dirichlet(&self) -> bool {
        [self.left, self.right, self.top, self.bottom].contains(&Boundary::Dirichlet)
    }
}

/// Node layout along one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisGrid {
    pub n: usize,
    pub h: f64,
    pub first: f64,
    pub lo: Boundary,
    pub hi: Boundary,
}

impl AxisGrid {
    pub fn new(n: usize, lo: Boundary, hi: Boundary) -> Self {
        let neumann_ends = [lo, hi].iter().filter(|&&b| b == Boundary::Neumann).count();
        let h = 1.0 / (n as f64 + 1.0 - 0.5 * neumann_ends as f64);
        let first = match lo {
            Boundary::Dirichlet => h,
            Boundary::Neumann => 0.5 * h,
        };
        Self { n, h, first, lo, hi }
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.first + i as f64 * self.h
    }

    /// Second-difference matrix (dense tridiagonal entries).
    fn stencil(&self) -> Vec<(usize, usize, f64)> {
        let inv = 1.0 / (self.h * self.h);
        let mut out = Vec::with_capacity(3 * self.n);
        for i in 0..self.n {
            let mut diag = -2.0;
            if i == 0 && self.lo == Boundary::Neumann {
                diag += 1.0;
            }
            if i + 1 == self.n && self.hi == Boundary::Neumann {
                diag += 1.0;
            }
            out.push((i, i, diag * inv));
            if i > 0 {
                out.push((i, i - 1, inv));
            }
            if i + 1 < self.n {
                out.push((i, i + 1, inv));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub bc: EdgeSpec,
    pub x: AxisGrid,
    pub y: AxisGrid,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, bc: EdgeSpec) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::GridTooSmall { nx, ny });
        }
        Ok(Self {
            nx,
            ny,
            bc,
            x: AxisGrid::new(nx, bc.left, bc.right),
            y: AxisGrid::new(ny, bc.bottom, bc.top),
        })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_area(&self) -> f64 {
        self.x.h * self.y.h
    }

    /// Coordinates (ξ₁, ξ₂) of every node in index order.
    pub fn coords(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.ny {
            for i in 0..self.nx {
                out.push((self.x.coord(i), self.y.coord(j)));
            }
        }
        out
    }

    /// Samples `f` at the nodes.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_iterator(self.len(), self.coords().into_iter().map(|(a, b)| f(a, b)))
    }

    /// Indices of the nodes adjacent to `edge` (first layer) and the layer
    /// behind them, with the node spacing along the edge and across it.
    fn edge_layers(&self, edge: Edge) -> (Vec<usize>, Vec<usize>, f64, f64) {
        let (nx, ny) = (self.nx, self.ny);
        match edge {
            Edge::Left => (
                (0..ny).map(|j| self.index(0, j)).collect(),
                (0..ny).map(|j| self.index(1, j)).collect(),
                self.y.h,
                self.x.h,
            ),
            Edge::Right => (
                (0..ny).map(|j| self.index(nx - 1, j)).collect(),
                (0..ny).map(|j| self.index(nx - 2, j)).collect(),
                self.y.h,
                self.x.h,
            ),
            Edge::Bottom => (
                (0..nx).map(|i| self.index(i, 0)).collect(),
                (0..nx).map(|i| self.index(i, 1)).collect(),
                self.x.h,
                self.y.h,
            ),
            Edge::Top => (
                (0..nx).map(|i| self.index(i, ny - 1)).collect(),
                (0..nx).map(|i| self.index(i, ny - 2)).collect(),
                self.x.h,
                self.y.h,
            ),
        }
    }
}

/// Five-point Laplacian with ghost-node elimination at Neumann edges.
pub fn build_laplacian_2d(nx: usize, ny: usize, bc: EdgeSpec) -> Result<CsrMatrix<f64>> {
    let grid = Grid::new(nx, ny, bc)?;
    Ok(laplacian(&grid))
}

pub fn laplacian(grid: &Grid) -> CsrMatrix<f64> {
    let n = grid.len();
    let mut coo = CooMatrix::new(n, n);
    for (i, k, v) in grid.x.stencil() {
        for j in 0..grid.ny {
            coo.push(grid.index(i, j), grid.index(k, j), v);
        }
    }
    for (j, l, v) in grid.y.stencil() {
        for i in 0..grid.nx {
            coo.push(grid.index(i, j), grid.index(i, l), v);
        }
    }
    CsrMatrix::from(&coo)
}

/// Row `c` with `c·x ≈ ∫_Ω x`.
pub fn build_mean_output(grid: &Grid) -> DMatrix<f64> {
    DMatrix::from_element(1, grid.len(), grid.cell_area())
}

/// Row approximating the integral of the boundary trace over `edges`.
///
/// Under the half-cell Neumann closure the reconstructed boundary value is
/// the mean of the adjacent node and its ghost, which for homogeneous data
/// is the adjacent node value.
pub fn build_boundary_trace_output(grid: &Grid, edges: &[Edge]) -> Result<DMatrix<f64>> {
    let mut row = DMatrix::zeros(1, grid.len());
    for &edge in edges {
        if grid.bc.get(edge) == Boundary::Dirichlet {
            return Err(Error::DegenerateOutput(format!(
                "trace on Dirichlet {} edge vanishes identically",
                edge.name()
            )));
        }
        let (first, _, along, _) = grid.edge_layers(edge);
        for k in first {
            row[(0, k)] += along;
        }
    }
    Ok(row)
}

/// Row approximating the integral of the outward normal derivative over
/// `edges`, by one-sided differences of the two boundary-adjacent layers.
pub fn build_normal_derivative_output(grid: &Grid, edges: &[Edge]) -> DMatrix<f64> {
    let mut row = DMatrix::zeros(1, grid.len());
    for &edge in edges {
        let (first, second, along, across) = grid.edge_layers(edge);
        let w = along / across;
        for (&a, &b) in first.iter().zip(&second) {
            row[(0, a)] += w;
            row[(0, b)] -= w;
        }
    }
    row
}

/// Column of the forcing injected by `∂x/∂ν = u` on a Neumann `edge`.
pub fn build_neumann_input(grid: &Grid, edge: Edge) -> Result<DMatrix<f64>> {
    if grid.bc.get(edge) != Boundary::Neumann {
        return Err(Error::WrongEdgeKind {
            edge: edge.name(),
            expected: "Neumann",
        });
    }
    let (first, _, _, across) = grid.edge_layers(edge);
    let mut col = DMatrix::zeros(grid.len(), 1);
    for k in first {
        col[(k, 0)] = 1.0 / across;
    }
    Ok(col)
}

/// Linear system `(A, B, C, G)` in L²-orthonormal coordinates.
#[derive(Debug, Clone)]
pub struct DiscretizedSystem {
    pub a: CsrMatrix<f64>,
    /// n × m_u
    pub b: DMatrix<f64>,
    /// p × n
    pub c: DMatrix<f64>,
    /// q × n
    pub g: DMatrix<f64>,
    /// Output unboundedness exponent (a label, not computed).
    pub alpha: f64,
    /// Input unboundedness exponent (a label, not computed).
    pub beta: f64,
    pub grid: Option<Grid>,
}

impl DiscretizedSystem {
    /// A system given directly by its matrices (no grid metadata).
    pub fn from_matrices(
        a: CsrMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        g: DMatrix<f64>,
        alpha: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidInput("state matrix must be square".into()));
        }
        for (got, context) in [
            (b.nrows(), "input map rows"),
            (c.ncols(), "output map columns"),
            (g.ncols(), "terminal map columns"),
        ] {
            if got != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got,
                    context,
                });
            }
        }
        let finite = a.values().iter().chain(b.iter()).chain(c.iter()).chain(g.iter());
        if !finite.into_iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite system entry".into()));
        }
        Ok(Self {
            a,
            b,
            c,
            g,
            alpha,
            beta: 0.0,
            grid: None,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn cell_area(&self) -> f64 {
        self.grid.map_or(1.0, |g| g.cell_area())
    }

    pub fn a_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n(), self.n());
        for (i, j, v) in self.a.triplet_iter() {
            d[(i, j)] += *v;
        }
        d
    }

    pub fn has_input(&self) -> bool {
        self.b.ncols() > 0 && self.b.iter().any(|&v| v != 0.0)
    }

    pub fn has_terminal(&self) -> bool {
        self.g.nrows() > 0 && self.g.iter().any(|&v| v != 0.0)
    }

    /// `Gᵀ` as an identity-core factor, i.e. `P(0) = GᵀG`.
    pub fn terminal_factor(&self) -> crate::lowrank::LowRankFactor {
        crate::lowrank::LowRankFactor::from_parts(
            self.g.transpose(),
            DMatrix::identity(self.g.nrows(), self.g.nrows()),
        )
    }
}

/// The four benchmark systems on an `nx × ny` grid.
///
/// 1. all-Dirichlet heat equation, mean output, no input (`α = 0`);
/// 2. Dirichlet left / Neumann elsewhere, Neumann control on the right
///    edge, mean output (`α = 0`, `β = 1/4`);
/// 3. as 2 with the boundary trace on top and bottom as output (`α = 1/4`);
/// 4. as 2 with the normal derivative on top and bottom (`α = 3/4`).
///
/// All examples have `G = 0`.
pub fn assemble_example(id: u32, nx: usize, ny: usize) -> Result<DiscretizedSystem> {
    let bc = match id {
        1 => EdgeSpec::all(Boundary::Dirichlet),
        2..=4 => EdgeSpec::dirichlet_left(),
        _ => return Err(Error::UnknownExample(id)),
    };
    let grid = Grid::new(nx, ny, bc)?;
    let n = grid.len();
    let a = laplacian(&grid);
    let (c_raw, alpha) = match id {
        1 | 2 => (build_mean_output(&grid), 0.0),
        3 => (build_boundary_trace_output(&grid, &[Edge::Top, Edge::Bottom])?, 0.25),
        _ => (build_normal_derivative_output(&grid, &[Edge::Top, Edge::Bottom]), 0.75),
    };
    let (b_raw, beta) = if id == 1 {
        (DMatrix::zeros(n, 0), 0.0)
    } else {
        (build_neumann_input(&grid, Edge::Right)?, 0.25)
    };
    let w = grid.cell_area().sqrt();
    Ok(DiscretizedSystem {
        a,
        b: b_raw * w,
        c: c_raw / w,
        g: DMatrix::zeros(0, n),
        alpha,
        beta,
        grid: Some(grid),
    })
}
