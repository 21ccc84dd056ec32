//! Structured meshes: periodic 1D intervals and 2D vertical-slice
//! rectangles (periodic in x, rigid walls at top and bottom).
//!
//! Cell indexing is row-major in (ix, iz): `cell = iz * nx + ix`.
//! Vertices, x-facets (normal +x) and z-facets (normal +z) derive
//! deterministic global indices from (ix, iz), so DOF maps are
//! reproducible across runs.

use crate::error::{Error, Result};

/// Periodic 1D interval split into uniform cells.
///
/// Cell `i` spans [i*dx, (i+1)*dx] with left vertex `i` and right vertex
/// `(i+1) mod n_cells`.
#[derive(Clone, Debug)]
pub struct IntervalMesh {
    n_cells: usize,
    length: f64,
    dx: f64,
}

impl IntervalMesh {
    pub fn new(n_cells: usize, length: f64) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::InvalidDimension(format!(
                "interval mesh needs at least 2 cells, got {n_cells}"
            )));
        }
        if !(length > 0.0) {
            return Err(Error::InvalidDimension(format!(
                "interval length must be positive, got {length}"
            )));
        }
        Ok(IntervalMesh {
            n_cells,
            length,
            dx: length / n_cells as f64,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Left and right vertex of a cell.
    pub fn cell_vertices(&self, cell: usize) -> [usize; 2] {
        debug_assert!(cell < self.n_cells);
        [cell, (cell + 1) % self.n_cells]
    }

    /// The two cells sharing a vertex: [left cell, right cell].
    pub fn vertex_cells(&self, vertex: usize) -> [usize; 2] {
        debug_assert!(vertex < self.n_cells);
        [(vertex + self.n_cells - 1) % self.n_cells, vertex]
    }

    pub fn vertex_x(&self, vertex: usize) -> f64 {
        vertex as f64 * self.dx
    }

    pub fn cell_center(&self, cell: usize) -> f64 {
        (cell as f64 + 0.5) * self.dx
    }
}

/// Uniform rectangular mesh of a 2D vertical slice.
///
/// Top and bottom boundaries (z = 0 and z = lz) are rigid walls. The x
/// direction is periodic unless `periodic_x` is false, in which case the
/// sides are walls too.
#[derive(Clone, Debug)]
pub struct QuadMesh {
    nx: usize,
    nz: usize,
    lx: f64,
    lz: f64,
    dx: f64,
    dz: f64,
    periodic_x: bool,
}

impl QuadMesh {
    pub fn new(nx: usize, nz: usize, lx: f64, lz: f64, periodic_x: bool) -> Result<Self> {
        if nx < 2 || nz < 2 {
            return Err(Error::InvalidDimension(format!(
                "quad mesh needs at least 2 cells per direction, got {nx}x{nz}"
            )));
        }
        if !(lx > 0.0) || !(lz > 0.0) {
            return Err(Error::InvalidDimension(format!(
                "quad mesh extents must be positive, got {lx}x{lz}"
            )));
        }
        Ok(QuadMesh {
            nx,
            nz,
            lx,
            lz,
            dx: lx / nx as f64,
            dz: lz / nz as f64,
            periodic_x,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn lz(&self) -> f64 {
        self.lz
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dz(&self) -> f64 {
        self.dz
    }

    pub fn periodic_x(&self) -> bool {
        self.periodic_x
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.nz
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dz
    }

    pub fn cell_id(&self, ix: usize, iz: usize) -> usize {
        debug_assert!(ix < self.nx && iz < self.nz);
        iz * self.nx + ix
    }

    pub fn cell_ix_iz(&self, cell: usize) -> (usize, usize) {
        debug_assert!(cell < self.n_cells());
        (cell % self.nx, cell / self.nx)
    }

    pub fn cell_origin(&self, cell: usize) -> (f64, f64) {
        let (ix, iz) = self.cell_ix_iz(cell);
        (ix as f64 * self.dx, iz as f64 * self.dz)
    }

    pub fn cell_center(&self, cell: usize) -> (f64, f64) {
        let (x0, z0) = self.cell_origin(cell);
        (x0 + 0.5 * self.dx, z0 + 0.5 * self.dz)
    }

    /// Number of distinct vertex columns (nx when periodic, nx+1 otherwise).
    pub fn n_vertex_cols(&self) -> usize {
        if self.periodic_x {
            self.nx
        } else {
            self.nx + 1
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertex_cols() * (self.nz + 1)
    }

    pub fn vertex_id(&self, ixv: usize, izv: usize) -> usize {
        debug_assert!(ixv < self.n_vertex_cols() && izv <= self.nz);
        izv * self.n_vertex_cols() + ixv
    }

    pub fn vertex_ix_iz(&self, vertex: usize) -> (usize, usize) {
        let nvx = self.n_vertex_cols();
        (vertex % nvx, vertex / nvx)
    }

    pub fn vertex_coords(&self, vertex: usize) -> (f64, f64) {
        let (ixv, izv) = self.vertex_ix_iz(vertex);
        (ixv as f64 * self.dx, izv as f64 * self.dz)
    }

    /// Vertices of a cell in local order [BL, BR, TL, TR].
    pub fn cell_vertex_ids(&self, cell: usize) -> [usize; 4] {
        let (ix, iz) = self.cell_ix_iz(cell);
        let ixr = if self.periodic_x {
            (ix + 1) % self.nx
        } else {
            ix + 1
        };
        [
            self.vertex_id(ix, iz),
            self.vertex_id(ixr, iz),
            self.vertex_id(ix, iz + 1),
            self.vertex_id(ixr, iz + 1),
        ]
    }

    /// Cells sharing a vertex, at most four. Wall and corner vertices
    /// return fewer.
    pub fn vertex_cells(&self, vertex: usize) -> ([usize; 4], usize) {
        let (ixv, izv) = self.vertex_ix_iz(vertex);
        let mut cells = [0usize; 4];
        let mut n = 0;
        // candidate cell columns left/right of the vertex column
        let left = if ixv == 0 {
            if self.periodic_x {
                Some(self.nx - 1)
            } else {
                None
            }
        } else {
            Some(ixv - 1)
        };
        let right = if ixv < self.nx { Some(ixv) } else { None };
        let below = if izv > 0 { Some(izv - 1) } else { None };
        let above = if izv < self.nz { Some(izv) } else { None };
        for iz in [below, above].into_iter().flatten() {
            for ix in [left, right].into_iter().flatten() {
                cells[n] = self.cell_id(ix, iz);
                n += 1;
            }
        }
        (cells, n)
    }

    /// x-facets per row: nx when periodic (all interior), nx+1 otherwise
    /// (the first and last are side walls).
    pub fn n_xfacets_per_row(&self) -> usize {
        if self.periodic_x {
            self.nx
        } else {
            self.nx + 1
        }
    }

    pub fn n_xfacets(&self) -> usize {
        self.n_xfacets_per_row() * self.nz
    }

    /// z-facets per column is nz+1; facets 0 and nz are the walls.
    pub fn n_zfacets(&self) -> usize {
        self.nx * (self.nz + 1)
    }

    /// Global id of the x-facet at x = ixf*dx in cell row iz.
    pub fn xfacet_id(&self, ixf: usize, iz: usize) -> usize {
        debug_assert!(ixf < self.n_xfacets_per_row() && iz < self.nz);
        iz * self.n_xfacets_per_row() + ixf
    }

    /// Global id of the z-facet at z = izf*dz in cell column ix.
    /// Column-major so that vertical runs are contiguous.
    pub fn zfacet_id(&self, ix: usize, izf: usize) -> usize {
        debug_assert!(ix < self.nx && izf <= self.nz);
        ix * (self.nz + 1) + izf
    }

    /// Facets of a cell as raw per-kind indices: west/east are x-facet
    /// ids, south/north are z-facet ids.
    pub fn cell_facets(&self, cell: usize) -> CellFacets {
        let (ix, iz) = self.cell_ix_iz(cell);
        let (west, east) = if self.periodic_x {
            (self.xfacet_id(ix, iz), self.xfacet_id((ix + 1) % self.nx, iz))
        } else {
            (self.xfacet_id(ix, iz), self.xfacet_id(ix + 1, iz))
        };
        CellFacets {
            west,
            east,
            south: self.zfacet_id(ix, iz),
            north: self.zfacet_id(ix, iz + 1),
        }
    }

    /// Cells adjacent to an interior x-facet: (left, right), with the
    /// facet normal pointing from left to right (+x).
    pub fn xfacet_cells(&self, ixf: usize, iz: usize) -> Option<(usize, usize)> {
        if self.periodic_x {
            let left = (ixf + self.nx - 1) % self.nx;
            Some((self.cell_id(left, iz), self.cell_id(ixf, iz)))
        } else if ixf > 0 && ixf < self.nx {
            Some((self.cell_id(ixf - 1, iz), self.cell_id(ixf, iz)))
        } else {
            None // side wall
        }
    }

    /// Cells adjacent to an interior z-facet: (below, above), normal +z.
    pub fn zfacet_cells(&self, ix: usize, izf: usize) -> Option<(usize, usize)> {
        if izf > 0 && izf < self.nz {
            Some((self.cell_id(ix, izf - 1), self.cell_id(ix, izf)))
        } else {
            None // top or bottom wall
        }
    }

    /// Midpoint of an x-facet.
    pub fn xfacet_midpoint(&self, ixf: usize, iz: usize) -> (f64, f64) {
        (ixf as f64 * self.dx, (iz as f64 + 0.5) * self.dz)
    }

    /// Midpoint of a z-facet.
    pub fn zfacet_midpoint(&self, ix: usize, izf: usize) -> (f64, f64) {
        ((ix as f64 + 0.5) * self.dx, izf as f64 * self.dz)
    }

    /// True if the vertex lies on any wall: top/bottom always, sides
    /// only when not periodic.
    pub fn vertex_on_boundary(&self, vertex: usize) -> bool {
        let (ixv, izv) = self.vertex_ix_iz(vertex);
        if izv == 0 || izv == self.nz {
            return true;
        }
        !self.periodic_x && (ixv == 0 || ixv == self.nx)
    }

    /// Whether the cell touches the bottom/top walls or (non-periodic)
    /// side walls: [bottom, top, left, right].
    pub fn cell_wall_contact(&self, cell: usize) -> [bool; 4] {
        let (ix, iz) = self.cell_ix_iz(cell);
        [
            iz == 0,
            iz == self.nz - 1,
            !self.periodic_x && ix == 0,
            !self.periodic_x && ix == self.nx - 1,
        ]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CellFacets {
    pub west: usize,
    pub east: usize,
    pub south: usize,
    pub north: usize,
}

/// A mesh of either dimension. Spaces and fields carry this.
#[derive(Clone, Debug)]
pub enum Mesh {
    Interval(IntervalMesh),
    Quad(QuadMesh),
}

impl Mesh {
    pub fn interval(n_cells: usize, length: f64) -> Result<Mesh> {
        Ok(Mesh::Interval(IntervalMesh::new(n_cells, length)?))
    }

    pub fn quad(nx: usize, nz: usize, lx: f64, lz: f64, periodic_x: bool) -> Result<Mesh> {
        Ok(Mesh::Quad(QuadMesh::new(nx, nz, lx, lz, periodic_x)?))
    }

    pub fn n_cells(&self) -> usize {
        match self {
            Mesh::Interval(m) => m.n_cells(),
            Mesh::Quad(m) => m.n_cells(),
        }
    }

    pub fn is_1d(&self) -> bool {
        matches!(self, Mesh::Interval(_))
    }

    pub fn as_interval(&self) -> &IntervalMesh {
        match self {
            Mesh::Interval(m) => m,
            Mesh::Quad(_) => panic!("expected interval mesh"),
        }
    }

    pub fn as_quad(&self) -> &QuadMesh {
        match self {
            Mesh::Quad(m) => m,
            Mesh::Interval(_) => panic!("expected quad mesh"),
        }
    }

    /// Cell measure: length in 1D, area in 2D.
    pub fn cell_measure(&self) -> f64 {
        match self {
            Mesh::Interval(m) => m.dx(),
            Mesh::Quad(m) => m.cell_area(),
        }
    }
}
