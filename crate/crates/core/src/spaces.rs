//! Function spaces on structured meshes: DOF maps, basis evaluation,
//! mass matrices, analytic projection and L2 norms.
//!
//! All elements are defined on the reference square [0,1]^2 (or the
//! reference interval in 1D) with an affine map per cell; on the uniform
//! rectangles used here Jacobians are diagonal constants.
//!
//! Local DOF order conventions, fixed per tag:
//! - bilinear nodal tags: bottom-left, bottom-right, top-left, top-right
//! - 1D linear tags: left, right
//! - column tags (constant in x, linear in z): bottom, top
//! - normal-flux tags: west, east, south, north facet values
//! - vector tags: all x-component DOFs first, then all z-component DOFs

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{pcg, CsrMatrix};
use crate::mesh::Mesh;
use crate::quadrature::gauss_01;

/// The supported element families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpaceTag {
    // 1D
    Dg0,
    Cg1,
    Dg1,
    // 2D scalar
    Dg0Dg0,
    Dg0Cg1,
    Dg1Dg1,
    Cg1Cg1,
    Dg0Dg1,
    // 2D vector
    Rt0,
    BrokenRt0,
    VectorDg1Dg1,
    VectorCg1Cg1,
}

impl SpaceTag {
    pub fn label(self) -> &'static str {
        match self {
            SpaceTag::Dg0 => "DG0",
            SpaceTag::Cg1 => "CG1",
            SpaceTag::Dg1 => "DG1",
            SpaceTag::Dg0Dg0 => "DG0xDG0",
            SpaceTag::Dg0Cg1 => "DG0xCG1",
            SpaceTag::Dg1Dg1 => "DG1xDG1",
            SpaceTag::Cg1Cg1 => "CG1xCG1",
            SpaceTag::Dg0Dg1 => "DG0xDG1",
            SpaceTag::Rt0 => "RT0",
            SpaceTag::BrokenRt0 => "BrokenRT0",
            SpaceTag::VectorDg1Dg1 => "VectorDG1xDG1",
            SpaceTag::VectorCg1Cg1 => "VectorCG1xCG1",
        }
    }

    pub fn is_1d(self) -> bool {
        matches!(self, SpaceTag::Dg0 | SpaceTag::Cg1 | SpaceTag::Dg1)
    }

    /// Vector-valued tags (two components, or normal-flux DOFs).
    pub fn is_vector(self) -> bool {
        matches!(
            self,
            SpaceTag::Rt0 | SpaceTag::BrokenRt0 | SpaceTag::VectorDg1Dg1 | SpaceTag::VectorCg1Cg1
        )
    }

    /// Tags with no DOFs shared between cells.
    pub fn is_fully_discontinuous(self) -> bool {
        matches!(
            self,
            SpaceTag::Dg0
                | SpaceTag::Dg1
                | SpaceTag::Dg0Dg0
                | SpaceTag::Dg1Dg1
                | SpaceTag::Dg0Dg1
                | SpaceTag::BrokenRt0
                | SpaceTag::VectorDg1Dg1
        )
    }

    pub fn dofs_per_cell(self) -> usize {
        match self {
            SpaceTag::Dg0 | SpaceTag::Dg0Dg0 => 1,
            SpaceTag::Cg1 | SpaceTag::Dg1 | SpaceTag::Dg0Cg1 | SpaceTag::Dg0Dg1 => 2,
            SpaceTag::Dg1Dg1 | SpaceTag::Cg1Cg1 | SpaceTag::Rt0 | SpaceTag::BrokenRt0 => 4,
            SpaceTag::VectorDg1Dg1 | SpaceTag::VectorCg1Cg1 => 8,
        }
    }
}

/// Local-to-global DOF ids of one cell, in the tag's fixed local order.
#[derive(Clone, Copy, Debug)]
pub struct LocalDofs {
    ids: [usize; 8],
    len: usize,
}

impl LocalDofs {
    fn new(ids: &[usize]) -> Self {
        let mut a = [0usize; 8];
        a[..ids.len()].copy_from_slice(ids);
        LocalDofs {
            ids: a,
            len: ids.len(),
        }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.ids[..self.len]
    }
}

/// Value of a field at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    Scalar(f64),
    Vector([f64; 2]),
}

impl Value {
    pub fn scalar(self) -> f64 {
        match self {
            Value::Scalar(v) => v,
            Value::Vector(_) => panic!("expected scalar value"),
        }
    }

    pub fn vector(self) -> [f64; 2] {
        match self {
            Value::Vector(v) => v,
            Value::Scalar(_) => panic!("expected vector value"),
        }
    }
}

/// A space tag bound to a mesh. Cheap to clone; spaces are immutable.
#[derive(Clone, Debug)]
pub struct FunctionSpace {
    mesh: Arc<Mesh>,
    tag: SpaceTag,
    n_dofs: usize,
}

impl FunctionSpace {
    pub fn new(mesh: Arc<Mesh>, tag: SpaceTag) -> Result<Self> {
        if tag.is_1d() != mesh.is_1d() {
            return Err(Error::InvalidDimension(format!(
                "space {} does not match mesh dimension",
                tag.label()
            )));
        }
        let n_dofs = match (&*mesh, tag) {
            (Mesh::Interval(m), SpaceTag::Dg0) => m.n_cells(),
            (Mesh::Interval(m), SpaceTag::Cg1) => m.n_cells(),
            (Mesh::Interval(m), SpaceTag::Dg1) => 2 * m.n_cells(),
            (Mesh::Quad(m), SpaceTag::Dg0Dg0) => m.n_cells(),
            (Mesh::Quad(m), SpaceTag::Dg0Cg1) => m.nx() * (m.nz() + 1),
            (Mesh::Quad(m), SpaceTag::Dg1Dg1) => 4 * m.n_cells(),
            (Mesh::Quad(m), SpaceTag::Cg1Cg1) => m.n_vertices(),
            (Mesh::Quad(m), SpaceTag::Dg0Dg1) => 2 * m.n_cells(),
            (Mesh::Quad(m), SpaceTag::Rt0) => m.n_xfacets() + m.n_zfacets(),
            (Mesh::Quad(m), SpaceTag::BrokenRt0) => 4 * m.n_cells(),
            (Mesh::Quad(m), SpaceTag::VectorDg1Dg1) => 8 * m.n_cells(),
            (Mesh::Quad(m), SpaceTag::VectorCg1Cg1) => 2 * m.n_vertices(),
            _ => unreachable!(),
        };
        Ok(FunctionSpace { mesh, tag, n_dofs })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn tag(&self) -> SpaceTag {
        self.tag
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn n_cells(&self) -> usize {
        self.mesh.n_cells()
    }

    /// Same tag on the same mesh (by value, not identity).
    pub fn same_as(&self, other: &FunctionSpace) -> bool {
        if self.tag != other.tag {
            return false;
        }
        match (&*self.mesh, &*other.mesh) {
            (Mesh::Interval(a), Mesh::Interval(b)) => {
                a.n_cells() == b.n_cells() && a.length() == b.length()
            }
            (Mesh::Quad(a), Mesh::Quad(b)) => {
                a.nx() == b.nx()
                    && a.nz() == b.nz()
                    && a.lx() == b.lx()
                    && a.lz() == b.lz()
                    && a.periodic_x() == b.periodic_x()
            }
            _ => false,
        }
    }

    /// Global DOF ids of a cell in the tag's local order.
    pub fn cell_dofs(&self, cell: usize) -> LocalDofs {
        match (&*self.mesh, self.tag) {
            (Mesh::Interval(_), SpaceTag::Dg0) => LocalDofs::new(&[cell]),
            (Mesh::Interval(m), SpaceTag::Cg1) => {
                LocalDofs::new(&[cell, (cell + 1) % m.n_cells()])
            }
            (Mesh::Interval(_), SpaceTag::Dg1) => LocalDofs::new(&[2 * cell, 2 * cell + 1]),
            (Mesh::Quad(_), SpaceTag::Dg0Dg0) => LocalDofs::new(&[cell]),
            (Mesh::Quad(m), SpaceTag::Dg0Cg1) => {
                let (ix, iz) = m.cell_ix_iz(cell);
                let base = ix * (m.nz() + 1) + iz;
                LocalDofs::new(&[base, base + 1])
            }
            (Mesh::Quad(_), SpaceTag::Dg1Dg1) => {
                LocalDofs::new(&[4 * cell, 4 * cell + 1, 4 * cell + 2, 4 * cell + 3])
            }
            (Mesh::Quad(m), SpaceTag::Cg1Cg1) => LocalDofs::new(&m.cell_vertex_ids(cell)),
            (Mesh::Quad(_), SpaceTag::Dg0Dg1) => LocalDofs::new(&[2 * cell, 2 * cell + 1]),
            (Mesh::Quad(m), SpaceTag::Rt0) => {
                let f = m.cell_facets(cell);
                let off = m.n_xfacets();
                LocalDofs::new(&[f.west, f.east, off + f.south, off + f.north])
            }
            (Mesh::Quad(_), SpaceTag::BrokenRt0) => {
                LocalDofs::new(&[4 * cell, 4 * cell + 1, 4 * cell + 2, 4 * cell + 3])
            }
            (Mesh::Quad(m), SpaceTag::VectorDg1Dg1) => {
                let off = 4 * m.n_cells();
                LocalDofs::new(&[
                    4 * cell,
                    4 * cell + 1,
                    4 * cell + 2,
                    4 * cell + 3,
                    off + 4 * cell,
                    off + 4 * cell + 1,
                    off + 4 * cell + 2,
                    off + 4 * cell + 3,
                ])
            }
            (Mesh::Quad(m), SpaceTag::VectorCg1Cg1) => {
                let v = m.cell_vertex_ids(cell);
                let off = m.n_vertices();
                LocalDofs::new(&[
                    v[0],
                    v[1],
                    v[2],
                    v[3],
                    off + v[0],
                    off + v[1],
                    off + v[2],
                    off + v[3],
                ])
            }
            _ => unreachable!(),
        }
    }

    /// Physical coordinates of a DOF. For 1D spaces z is 0.
    pub fn dof_coords(&self, dof: usize) -> (f64, f64) {
        match (&*self.mesh, self.tag) {
            (Mesh::Interval(m), SpaceTag::Dg0) => (m.cell_center(dof), 0.0),
            (Mesh::Interval(m), SpaceTag::Cg1) => (m.vertex_x(dof), 0.0),
            (Mesh::Interval(m), SpaceTag::Dg1) => {
                let cell = dof / 2;
                ((cell + dof % 2) as f64 * m.dx(), 0.0)
            }
            (Mesh::Quad(m), SpaceTag::Dg0Dg0) => m.cell_center(dof),
            (Mesh::Quad(m), SpaceTag::Dg0Cg1) => {
                let ix = dof / (m.nz() + 1);
                let iz = dof % (m.nz() + 1);
                ((ix as f64 + 0.5) * m.dx(), iz as f64 * m.dz())
            }
            (Mesh::Quad(m), SpaceTag::Dg1Dg1) => {
                let cell = dof / 4;
                let k = dof % 4;
                let (x0, z0) = m.cell_origin(cell);
                (
                    x0 + (k % 2) as f64 * m.dx(),
                    z0 + (k / 2) as f64 * m.dz(),
                )
            }
            (Mesh::Quad(m), SpaceTag::Cg1Cg1) => m.vertex_coords(dof),
            (Mesh::Quad(m), SpaceTag::Dg0Dg1) => {
                let cell = dof / 2;
                let (x0, z0) = m.cell_origin(cell);
                (x0 + 0.5 * m.dx(), z0 + (dof % 2) as f64 * m.dz())
            }
            (Mesh::Quad(m), SpaceTag::Rt0) => {
                let nxf = m.n_xfacets();
                if dof < nxf {
                    let per_row = m.n_xfacets_per_row();
                    m.xfacet_midpoint(dof % per_row, dof / per_row)
                } else {
                    let d = dof - nxf;
                    m.zfacet_midpoint(d / (m.nz() + 1), d % (m.nz() + 1))
                }
            }
            (Mesh::Quad(m), SpaceTag::BrokenRt0) => {
                let cell = dof / 4;
                let (ix, iz) = m.cell_ix_iz(cell);
                match dof % 4 {
                    0 => (ix as f64 * m.dx(), (iz as f64 + 0.5) * m.dz()),
                    1 => ((ix + 1) as f64 * m.dx(), (iz as f64 + 0.5) * m.dz()),
                    2 => ((ix as f64 + 0.5) * m.dx(), iz as f64 * m.dz()),
                    _ => ((ix as f64 + 0.5) * m.dx(), (iz + 1) as f64 * m.dz()),
                }
            }
            (Mesh::Quad(m), SpaceTag::VectorDg1Dg1) => {
                let half = 4 * m.n_cells();
                let scalar = FunctionSpace {
                    mesh: self.mesh.clone(),
                    tag: SpaceTag::Dg1Dg1,
                    n_dofs: half,
                };
                scalar.dof_coords(dof % half)
            }
            (Mesh::Quad(m), SpaceTag::VectorCg1Cg1) => {
                m.vertex_coords(dof % m.n_vertices())
            }
            _ => unreachable!(),
        }
    }
}

/// Coefficient vector bound to a function space.
#[derive(Clone, Debug)]
pub struct Field {
    space: FunctionSpace,
    coeffs: Vec<f64>,
}

impl Field {
    pub fn zeros(space: FunctionSpace) -> Self {
        let n = space.n_dofs();
        Field {
            space,
            coeffs: vec![0.0; n],
        }
    }

    pub fn from_coeffs(space: FunctionSpace, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), space.n_dofs(), "coefficient length mismatch");
        debug_assert!(coeffs.iter().all(|c| c.is_finite()));
        Field { space, coeffs }
    }

    pub fn space(&self) -> &FunctionSpace {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Interpolant value at a reference point of a cell.
    pub fn evaluate(&self, cell: usize, xi: f64, eta: f64) -> Value {
        let dofs = self.space.cell_dofs(cell);
        let ids = dofs.as_slice();
        match self.space.tag {
            SpaceTag::Rt0 | SpaceTag::BrokenRt0 => {
                let w = self.coeffs[ids[0]];
                let e = self.coeffs[ids[1]];
                let s = self.coeffs[ids[2]];
                let n = self.coeffs[ids[3]];
                Value::Vector([w + (e - w) * xi, s + (n - s) * eta])
            }
            SpaceTag::VectorDg1Dg1 | SpaceTag::VectorCg1Cg1 => {
                let mut b = [0.0; 4];
                let n = bilinear_basis(xi, eta, &mut b);
                let mut vx = 0.0;
                let mut vz = 0.0;
                for i in 0..n {
                    vx += self.coeffs[ids[i]] * b[i];
                    vz += self.coeffs[ids[n + i]] * b[i];
                }
                Value::Vector([vx, vz])
            }
            tag => {
                let mut b = [0.0; 4];
                let n = scalar_basis(tag, xi, eta, &mut b);
                let mut v = 0.0;
                for i in 0..n {
                    v += self.coeffs[ids[i]] * b[i];
                }
                Value::Scalar(v)
            }
        }
    }

    /// One Cartesian component at a reference point. Scalars only accept
    /// component 0.
    pub fn evaluate_component(&self, cell: usize, xi: f64, eta: f64, comp: usize) -> f64 {
        match self.evaluate(cell, xi, eta) {
            Value::Scalar(v) => {
                debug_assert_eq!(comp, 0);
                v
            }
            Value::Vector(v) => v[comp],
        }
    }

    /// Snapshot export. Nodal tags get (dof_index, x, z, value) rows;
    /// normal-flux tags get (cell, local_dof, value).
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        match self.space.tag {
            SpaceTag::Rt0 | SpaceTag::BrokenRt0 => {
                writeln!(out, "cell,local_dof,value")?;
                for cell in 0..self.space.n_cells() {
                    for (k, &dof) in self.space.cell_dofs(cell).as_slice().iter().enumerate() {
                        writeln!(out, "{cell},{k},{:.17e}", self.coeffs[dof])?;
                    }
                }
            }
            _ => {
                writeln!(out, "dof_index,x,z,value")?;
                for dof in 0..self.space.n_dofs() {
                    let (x, z) = self.space.dof_coords(dof);
                    writeln!(out, "{dof},{x:.17e},{z:.17e},{:.17e}", self.coeffs[dof])?;
                }
            }
        }
        Ok(())
    }
}

/// Basis values of a scalar tag at a reference point, written into `out`
/// in the tag's local DOF order. Returns the count.
pub(crate) fn scalar_basis(tag: SpaceTag, xi: f64, eta: f64, out: &mut [f64; 4]) -> usize {
    match tag {
        SpaceTag::Dg0 | SpaceTag::Dg0Dg0 => {
            out[0] = 1.0;
            1
        }
        SpaceTag::Cg1 | SpaceTag::Dg1 => {
            out[0] = 1.0 - xi;
            out[1] = xi;
            2
        }
        SpaceTag::Dg0Cg1 | SpaceTag::Dg0Dg1 => {
            out[0] = 1.0 - eta;
            out[1] = eta;
            2
        }
        SpaceTag::Dg1Dg1 | SpaceTag::Cg1Cg1 => bilinear_basis(xi, eta, out),
        _ => panic!("scalar basis requested for vector tag {}", tag.label()),
    }
}

pub(crate) fn bilinear_basis(xi: f64, eta: f64, out: &mut [f64; 4]) -> usize {
    out[0] = (1.0 - xi) * (1.0 - eta);
    out[1] = xi * (1.0 - eta);
    out[2] = (1.0 - xi) * eta;
    out[3] = xi * eta;
    4
}

/// Assembled mass matrix, symmetric positive definite. Volume quadrature
/// is 2x2 Gauss, exact for products of the (bi)linear bases.
pub fn mass_matrix(space: &FunctionSpace) -> CsrMatrix {
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let measure = space.mesh().cell_measure();
    match space.tag() {
        SpaceTag::Rt0 | SpaceTag::BrokenRt0 => {
            // x and z pairs decouple; each has the 1D linear-element matrix
            let pair = [[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]];
            for cell in 0..space.n_cells() {
                let dofs = space.cell_dofs(cell);
                let ids = dofs.as_slice();
                for blk in 0..2 {
                    for i in 0..2 {
                        for j in 0..2 {
                            triplets.push((
                                ids[2 * blk + i],
                                ids[2 * blk + j],
                                pair[i][j] * measure,
                            ));
                        }
                    }
                }
            }
        }
        SpaceTag::VectorDg1Dg1 | SpaceTag::VectorCg1Cg1 => {
            let quad = gauss_01(2);
            for cell in 0..space.n_cells() {
                let dofs = space.cell_dofs(cell);
                let ids = dofs.as_slice();
                for &(xi, wx) in &quad {
                    for &(eta, wz) in &quad {
                        let mut b = [0.0; 4];
                        let n = bilinear_basis(xi, eta, &mut b);
                        let w = wx * wz * measure;
                        for blk in 0..2 {
                            for i in 0..n {
                                for j in 0..n {
                                    triplets.push((
                                        ids[blk * n + i],
                                        ids[blk * n + j],
                                        w * b[i] * b[j],
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
        tag if tag.is_1d() => {
            let quad = gauss_01(2);
            for cell in 0..space.n_cells() {
                let dofs = space.cell_dofs(cell);
                let ids = dofs.as_slice();
                for &(xi, wx) in &quad {
                    let mut b = [0.0; 4];
                    let n = scalar_basis(tag, xi, 0.0, &mut b);
                    let w = wx * measure;
                    for i in 0..n {
                        for j in 0..n {
                            triplets.push((ids[i], ids[j], w * b[i] * b[j]));
                        }
                    }
                }
            }
        }
        tag => {
            let quad = gauss_01(2);
            for cell in 0..space.n_cells() {
                let dofs = space.cell_dofs(cell);
                let ids = dofs.as_slice();
                for &(xi, wx) in &quad {
                    for &(eta, wz) in &quad {
                        let mut b = [0.0; 4];
                        let n = scalar_basis(tag, xi, eta, &mut b);
                        let w = wx * wz * measure;
                        for i in 0..n {
                            for j in 0..n {
                                triplets.push((ids[i], ids[j], w * b[i] * b[j]));
                            }
                        }
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(space.n_dofs(), triplets)
}

/// Map a reference point of a cell to physical coordinates.
pub(crate) fn cell_point(mesh: &Mesh, cell: usize, xi: f64, eta: f64) -> (f64, f64) {
    match mesh {
        Mesh::Interval(m) => (cell as f64 * m.dx() + xi * m.dx(), 0.0),
        Mesh::Quad(m) => {
            let (x0, z0) = m.cell_origin(cell);
            (x0 + xi * m.dx(), z0 + eta * m.dz())
        }
    }
}

fn quad_points(mesh: &Mesh, order: usize) -> Vec<(f64, f64, f64)> {
    let q = gauss_01(order);
    let mut pts = Vec::new();
    match mesh {
        Mesh::Interval(_) => {
            for &(xi, w) in &q {
                pts.push((xi, 0.0, w));
            }
        }
        Mesh::Quad(_) => {
            for &(xi, wx) in &q {
                for &(eta, wz) in &q {
                    pts.push((xi, eta, wx * wz));
                }
            }
        }
    }
    pts
}

const MASS_SOLVE_TOL: f64 = 1e-14;
const MASS_SOLVE_MAX_ITER: usize = 1000;

/// L2 projection of an analytic scalar function onto a space: the result
/// g satisfies (psi, g - f) = 0 for every basis function psi, with the
/// integrals evaluated by `quad_order`-point Gauss per direction.
pub fn project_analytic<F>(space: &FunctionSpace, quad_order: usize, f: F) -> Result<Field>
where
    F: Fn(f64, f64) -> f64,
{
    assert!(
        !space.tag().is_vector(),
        "scalar projection into vector space {}",
        space.tag().label()
    );
    if quad_order < 2 {
        return Err(Error::DegenerateInput(format!(
            "projection quadrature order {quad_order} below 2"
        )));
    }
    let pts = quad_points(space.mesh(), quad_order);
    let measure = space.mesh().cell_measure();
    let mut rhs = vec![0.0; space.n_dofs()];
    for cell in 0..space.n_cells() {
        let dofs = space.cell_dofs(cell);
        let ids = dofs.as_slice();
        for &(xi, eta, w) in &pts {
            let (x, z) = cell_point(space.mesh(), cell, xi, eta);
            let fv = f(x, z);
            let mut b = [0.0; 4];
            let n = scalar_basis(space.tag(), xi, eta, &mut b);
            for i in 0..n {
                rhs[ids[i]] += w * measure * fv * b[i];
            }
        }
    }
    let m = mass_matrix(space);
    let coeffs = pcg(&m, &rhs, MASS_SOLVE_TOL, MASS_SOLVE_MAX_ITER)?;
    Ok(Field::from_coeffs(space.clone(), coeffs))
}

/// L2 projection of an analytic vector function onto a vector space.
pub fn project_analytic_vector<F>(space: &FunctionSpace, quad_order: usize, f: F) -> Result<Field>
where
    F: Fn(f64, f64) -> [f64; 2],
{
    assert!(
        space.tag().is_vector(),
        "vector projection into scalar space {}",
        space.tag().label()
    );
    if quad_order < 2 {
        return Err(Error::DegenerateInput(format!(
            "projection quadrature order {quad_order} below 2"
        )));
    }
    let pts = quad_points(space.mesh(), quad_order);
    let measure = space.mesh().cell_measure();
    let mut rhs = vec![0.0; space.n_dofs()];
    for cell in 0..space.n_cells() {
        let dofs = space.cell_dofs(cell);
        let ids = dofs.as_slice();
        for &(xi, eta, w) in &pts {
            let (x, z) = cell_point(space.mesh(), cell, xi, eta);
            let [fx, fz] = f(x, z);
            match space.tag() {
                SpaceTag::Rt0 | SpaceTag::BrokenRt0 => {
                    let wm = w * measure;
                    rhs[ids[0]] += wm * fx * (1.0 - xi);
                    rhs[ids[1]] += wm * fx * xi;
                    rhs[ids[2]] += wm * fz * (1.0 - eta);
                    rhs[ids[3]] += wm * fz * eta;
                }
                _ => {
                    let mut b = [0.0; 4];
                    let n = bilinear_basis(xi, eta, &mut b);
                    for i in 0..n {
                        rhs[ids[i]] += w * measure * fx * b[i];
                        rhs[ids[n + i]] += w * measure * fz * b[i];
                    }
                }
            }
        }
    }
    let m = mass_matrix(space);
    let coeffs = pcg(&m, &rhs, MASS_SOLVE_TOL, MASS_SOLVE_MAX_ITER)?;
    Ok(Field::from_coeffs(space.clone(), coeffs))
}

const NORM_QUAD_ORDER: usize = 4;

/// L2 norm by Gauss quadrature, exact for the polynomial fields here.
pub fn l2_norm(field: &Field) -> f64 {
    let pts = quad_points(field.space().mesh(), NORM_QUAD_ORDER);
    let measure = field.space().mesh().cell_measure();
    let mut acc = 0.0;
    for cell in 0..field.space().n_cells() {
        for &(xi, eta, w) in &pts {
            let sq = match field.evaluate(cell, xi, eta) {
                Value::Scalar(v) => v * v,
                Value::Vector([vx, vz]) => vx * vx + vz * vz,
            };
            acc += w * measure * sq;
        }
    }
    acc.sqrt()
}

/// L2 distance between two fields in the same space.
pub fn l2_error(field: &Field, reference: &Field) -> Result<f64> {
    if !field.space().same_as(reference.space()) {
        return Err(Error::SpaceMismatch);
    }
    let diff: Vec<f64> = field
        .coeffs()
        .iter()
        .zip(reference.coeffs())
        .map(|(a, b)| a - b)
        .collect();
    Ok(l2_norm(&Field::from_coeffs(field.space().clone(), diff)))
}

/// L2 distance between a scalar field and an analytic function.
pub fn l2_error_analytic<F>(field: &Field, quad_order: usize, f: F) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    assert!(!field.space().tag().is_vector());
    let pts = quad_points(field.space().mesh(), quad_order);
    let measure = field.space().mesh().cell_measure();
    let mut acc = 0.0;
    for cell in 0..field.space().n_cells() {
        for &(xi, eta, w) in &pts {
            let (x, z) = cell_point(field.space().mesh(), cell, xi, eta);
            let d = field.evaluate(cell, xi, eta).scalar() - f(x, z);
            acc += w * measure * d * d;
        }
    }
    acc.sqrt()
}

/// Integral of a scalar field over the domain.
pub fn integral(field: &Field) -> f64 {
    assert!(!field.space().tag().is_vector());
    let pts = quad_points(field.space().mesh(), 2);
    let measure = field.space().mesh().cell_measure();
    let mut acc = 0.0;
    for cell in 0..field.space().n_cells() {
        for &(xi, eta, w) in &pts {
            acc += w * measure * field.evaluate(cell, xi, eta).scalar();
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;

    fn interval(n: usize, len: f64) -> Arc<Mesh> {
        Arc::new(Mesh::interval(n, len).unwrap())
    }

    fn quad(nx: usize, nz: usize) -> Arc<Mesh> {
        Arc::new(Mesh::quad(nx, nz, 1.0, 1.0, true).unwrap())
    }

    #[test]
    fn dof_map_examples() {
        let s = FunctionSpace::new(quad(3, 3), SpaceTag::Dg1Dg1).unwrap();
        assert_eq!(s.cell_dofs(0).as_slice(), &[0, 1, 2, 3]);

        let n = 7;
        let s = FunctionSpace::new(interval(n, 1.0), SpaceTag::Cg1).unwrap();
        assert_eq!(s.cell_dofs(n - 1).as_slice(), &[n - 1, 0]);

        // DG0xCG1 shares DOFs only with vertical neighbours
        let m = quad(3, 3);
        let s = FunctionSpace::new(m.clone(), SpaceTag::Dg0Cg1).unwrap();
        let q = m.as_quad();
        let c = q.cell_id(1, 1);
        let up = q.cell_id(1, 2);
        let down = q.cell_id(1, 0);
        let side = q.cell_id(2, 1);
        let dofs = s.cell_dofs(c);
        assert_eq!(s.cell_dofs(down).as_slice()[1], dofs.as_slice()[0]);
        assert_eq!(s.cell_dofs(up).as_slice()[0], dofs.as_slice()[1]);
        for d in s.cell_dofs(side).as_slice() {
            assert!(!dofs.as_slice().contains(d));
        }
    }

    #[test]
    fn space_counts_match_tags() {
        let m = quad(4, 3);
        let q = m.as_quad();
        assert_eq!(
            FunctionSpace::new(m.clone(), SpaceTag::Dg1Dg1).unwrap().n_dofs(),
            4 * q.n_cells()
        );
        assert_eq!(
            FunctionSpace::new(m.clone(), SpaceTag::Cg1Cg1).unwrap().n_dofs(),
            q.nx() * (q.nz() + 1)
        );
        assert_eq!(
            FunctionSpace::new(m.clone(), SpaceTag::Dg0Cg1).unwrap().n_dofs(),
            q.nx() * (q.nz() + 1)
        );
    }

    #[test]
    fn evaluate_examples() {
        let s = FunctionSpace::new(interval(4, 1.0), SpaceTag::Dg0).unwrap();
        let f = Field::from_coeffs(s, vec![3.0; 4]);
        assert_eq!(f.evaluate(2, 0.7, 0.0), Value::Scalar(3.0));

        let s = FunctionSpace::new(interval(2, 2.0), SpaceTag::Dg1).unwrap();
        let f = Field::from_coeffs(s, vec![0.0, 1.0, 0.0, 0.0]);
        assert!((f.evaluate(0, 0.5, 0.0).scalar() - 0.5).abs() < 1e-15);

        let m = quad(2, 2);
        let s = FunctionSpace::new(m, SpaceTag::BrokenRt0).unwrap();
        let mut coeffs = vec![0.0; s.n_dofs()];
        coeffs[0] = 1.0; // west
        coeffs[1] = 1.0; // east
        let f = Field::from_coeffs(s, coeffs);
        for &(xi, eta) in &[(0.0, 0.0), (0.3, 0.9), (1.0, 1.0)] {
            assert_eq!(f.evaluate(0, xi, eta), Value::Vector([1.0, 0.0]));
        }
    }

    #[test]
    fn project_constant_gives_unit_coefficients() {
        for tag in [
            SpaceTag::Dg0Dg0,
            SpaceTag::Dg0Cg1,
            SpaceTag::Dg1Dg1,
            SpaceTag::Cg1Cg1,
            SpaceTag::Dg0Dg1,
        ] {
            let s = FunctionSpace::new(quad(3, 4), tag).unwrap();
            let f = project_analytic(&s, 4, |_, _| 1.0).unwrap();
            for &c in f.coeffs() {
                assert!((c - 1.0).abs() < 1e-12, "{tag:?} coeff {c}");
            }
        }
    }

    #[test]
    fn project_linear_onto_dg0_gives_cell_means() {
        let s = FunctionSpace::new(interval(2, 1.0), SpaceTag::Dg0).unwrap();
        let f = project_analytic(&s, 4, |x, _| x).unwrap();
        assert!((f.coeffs()[0] - 0.25).abs() < 1e-13);
        assert!((f.coeffs()[1] - 0.75).abs() < 1e-13);
    }

    #[test]
    fn project_gaussian_matches_high_order_cell_mean_oracle() {
        let n = 100;
        let m = quad(n, n);
        let s = FunctionSpace::new(m.clone(), SpaceTag::Dg0Dg0).unwrap();
        let r0 = 0.125;
        let g = |x: f64, z: f64| (-((x - 0.375).powi(2) + (z - 0.5).powi(2)) / (r0 * r0)).exp();
        let f = project_analytic(&s, 4, g).unwrap();

        // independent oracle: 10x10 Gauss cell means
        let q10 = gauss_01(10);
        let mq = m.as_quad();
        let mut max_diff = 0.0f64;
        for cell in 0..s.n_cells() {
            let (x0, z0) = mq.cell_origin(cell);
            let mut mean = 0.0;
            for &(xi, wx) in &q10 {
                for &(eta, wz) in &q10 {
                    mean += wx * wz * g(x0 + xi * mq.dx(), z0 + eta * mq.dz());
                }
            }
            max_diff = max_diff.max((f.coeffs()[cell] - mean).abs());
        }
        assert!(max_diff < 1e-12, "max cell-mean difference {max_diff:.3e}");
    }

    #[test]
    fn l2_norm_examples() {
        let s = FunctionSpace::new(quad(5, 5), SpaceTag::Dg0Dg0).unwrap();
        let f = Field::from_coeffs(s, vec![2.0; 25]);
        assert!((l2_norm(&f) - 2.0).abs() < 1e-13);

        let s = FunctionSpace::new(interval(2, 1.0), SpaceTag::Dg1).unwrap();
        let f = Field::from_coeffs(s.clone(), vec![0.3, -0.7, 1.1, 0.2]);
        assert_eq!(l2_error(&f, &f).unwrap(), 0.0);
    }

    #[test]
    fn dg1_ramp_norm_is_one_over_sqrt3() {
        // single unit cell: represent on a 2-cell mesh and zero one cell
        let s = FunctionSpace::new(interval(2, 2.0), SpaceTag::Dg1).unwrap();
        let f = Field::from_coeffs(s, vec![0.0, 1.0, 0.0, 0.0]);
        assert!((l2_norm(&f) - 1.0 / 3.0f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn l2_error_rejects_space_mismatch() {
        let a = Field::zeros(FunctionSpace::new(quad(2, 2), SpaceTag::Dg0Dg0).unwrap());
        let b = Field::zeros(FunctionSpace::new(quad(2, 2), SpaceTag::Dg1Dg1).unwrap());
        assert!(matches!(l2_error(&a, &b), Err(Error::SpaceMismatch)));
    }

    #[test]
    fn mass_matrix_closed_forms() {
        let s = FunctionSpace::new(quad(2, 3), SpaceTag::Dg0Dg0).unwrap();
        let m = mass_matrix(&s);
        let area = s.mesh().cell_measure();
        for c in 0..s.n_cells() {
            assert!((m.entry(c, c) - area).abs() < 1e-15);
        }

        let h = 0.5;
        let s = FunctionSpace::new(interval(2, 1.0), SpaceTag::Dg1).unwrap();
        let m = mass_matrix(&s);
        assert!((m.entry(0, 0) - 2.0 * h / 6.0).abs() < 1e-14);
        assert!((m.entry(0, 1) - h / 6.0).abs() < 1e-14);
        assert!((m.entry(1, 1) - 2.0 * h / 6.0).abs() < 1e-14);
    }

    #[test]
    fn cg1cg1_mass_rows_match_brute_force_oracle() {
        let m = quad(3, 3);
        let s = FunctionSpace::new(m.clone(), SpaceTag::Cg1Cg1).unwrap();
        let mass = mass_matrix(&s);
        let area = s.mesh().cell_measure();
        let q = m.as_quad();
        // row sums equal the vertex's share of adjacent cell areas
        for v in 0..s.n_dofs() {
            let (_, n_adj) = q.vertex_cells(v);
            let expect = n_adj as f64 * area / 4.0;
            assert!((mass.row_sum(v) - expect).abs() < 1e-13);
        }
        // dense 5x5-point quadrature oracle, assembled via evaluate()
        let q5 = gauss_01(5);
        for i in 0..s.n_dofs() {
            let mut ei = Field::zeros(s.clone());
            ei.coeffs_mut()[i] = 1.0;
            for j in 0..s.n_dofs() {
                let mut ej = Field::zeros(s.clone());
                ej.coeffs_mut()[j] = 1.0;
                let mut acc = 0.0;
                for cell in 0..s.n_cells() {
                    for &(xi, wx) in &q5 {
                        for &(eta, wz) in &q5 {
                            acc += wx
                                * wz
                                * area
                                * ei.evaluate(cell, xi, eta).scalar()
                                * ej.evaluate(cell, xi, eta).scalar();
                        }
                    }
                }
                assert!((mass.entry(i, j) - acc).abs() < 1e-13, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn mass_matrices_are_spd() {
        use nalgebra::DMatrix;
        let m = quad(4, 4);
        let mi = interval(4, 1.0);
        for (mesh, tags) in [
            (
                m,
                vec![
                    SpaceTag::Dg0Dg0,
                    SpaceTag::Dg0Cg1,
                    SpaceTag::Dg1Dg1,
                    SpaceTag::Cg1Cg1,
                    SpaceTag::Dg0Dg1,
                    SpaceTag::Rt0,
                    SpaceTag::BrokenRt0,
                    SpaceTag::VectorDg1Dg1,
                    SpaceTag::VectorCg1Cg1,
                ],
            ),
            (mi, vec![SpaceTag::Dg0, SpaceTag::Cg1, SpaceTag::Dg1]),
        ] {
            for tag in tags {
                let s = FunctionSpace::new(mesh.clone(), tag).unwrap();
                let mass = mass_matrix(&s);
                let n = s.n_dofs();
                let dense = DMatrix::from_fn(n, n, |i, j| mass.entry(i, j));
                assert!(
                    dense.clone().cholesky().is_some(),
                    "{} mass not SPD",
                    tag.label()
                );
                // symmetry
                for i in 0..n {
                    for j in 0..n {
                        assert!((dense[(i, j)] - dense[(j, i)]).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let s = FunctionSpace::new(quad(4, 4), SpaceTag::Cg1Cg1).unwrap();
        let f = project_analytic(&s, 4, |x, z| (2.0 * x - z).sin()).unwrap();
        // project the interpolant of f's own values
        let f_clone = f.clone();
        let g = project_analytic(&s, 4, move |x, z| {
            // locate the value by evaluating the field: nodal, so pick the cell containing (x,z)
            let q = f_clone.space().mesh().as_quad();
            let ix = ((x / q.dx()) as usize).min(q.nx() - 1);
            let iz = ((z / q.dz()) as usize).min(q.nz() - 1);
            let cell = q.cell_id(ix, iz);
            let (x0, z0) = q.cell_origin(cell);
            f_clone
                .evaluate(cell, (x - x0) / q.dx(), (z - z0) / q.dz())
                .scalar()
        })
        .unwrap();
        let num: f64 = f
            .coeffs()
            .iter()
            .zip(g.coeffs())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = f.coeffs().iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(num / den < 1e-13);
    }

    #[test]
    fn nodal_partition_of_unity() {
        for tag in [
            SpaceTag::Dg0Dg0,
            SpaceTag::Dg0Cg1,
            SpaceTag::Dg1Dg1,
            SpaceTag::Cg1Cg1,
            SpaceTag::Dg0Dg1,
        ] {
            let s = FunctionSpace::new(quad(3, 3), tag).unwrap();
            let n = s.n_dofs();
            let f = Field::from_coeffs(s, vec![1.0; n]);
            for cell in 0..f.space().n_cells() {
                for i in 0..5 {
                    for j in 0..5 {
                        let v = f
                            .evaluate(cell, i as f64 / 4.0, j as f64 / 4.0)
                            .scalar();
                        assert!((v - 1.0).abs() < 1e-14, "{tag:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn rt0_normal_component_continuous_across_facets() {
        let m = quad(3, 3);
        let s = FunctionSpace::new(m.clone(), SpaceTag::Rt0).unwrap();
        let f = project_analytic_vector(&s, 4, |x, z| {
            [(2.0 * x).sin() + z, (3.0 * z).cos() * x]
        })
        .unwrap();
        let q = m.as_quad();
        let g2 = gauss_01(2);
        for iz in 0..q.nz() {
            for ixf in 0..q.n_xfacets_per_row() {
                if let Some((left, right)) = q.xfacet_cells(ixf, iz) {
                    for &(g, _) in &g2 {
                        let vl = f.evaluate(left, 1.0, g).vector()[0];
                        let vr = f.evaluate(right, 0.0, g).vector()[0];
                        assert!((vl - vr).abs() < 1e-13);
                    }
                }
            }
        }
        for ix in 0..q.nx() {
            for izf in 0..=q.nz() {
                if let Some((below, above)) = q.zfacet_cells(ix, izf) {
                    for &(g, _) in &g2 {
                        let vb = f.evaluate(below, g, 1.0).vector()[1];
                        let va = f.evaluate(above, g, 0.0).vector()[1];
                        assert!((vb - va).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn csv_export_shapes() {
        let s = FunctionSpace::new(quad(2, 2), SpaceTag::Cg1Cg1).unwrap();
        let f = Field::zeros(s);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("dof_index,x,z,value"));
        assert_eq!(text.lines().count(), 1 + f.space().n_dofs());

        let s = FunctionSpace::new(quad(2, 2), SpaceTag::Rt0).unwrap();
        let f = Field::zeros(s);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("cell,local_dof,value"));
        assert_eq!(text.lines().count(), 1 + 4 * f.space().n_cells());
    }
}
