//! Recovery and projection operators between the space quadruples:
//! averaging recovery into the continuous space (with an optional
//! curvature-minimising extension at rigid walls), per-cell projection
//! into broken spaces, exact injection into the advected space, and the
//! two projections back to the original space.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{pcg, CsrMatrix};
use crate::mesh::Mesh;
use crate::quadrature::gauss_01;
use crate::spaces::{
    bilinear_basis, mass_matrix, scalar_basis, Field, FunctionSpace, SpaceTag,
};

/// The four spaces a scheme runs on: original, advected, continuous
/// companion, and broken original.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpaceQuadruple {
    pub v0: SpaceTag,
    pub v1: SpaceTag,
    pub v1_tilde: SpaceTag,
    pub v0_hat: SpaceTag,
}

impl SpaceQuadruple {
    /// Density family: piecewise constants.
    pub fn density() -> Self {
        SpaceQuadruple {
            v0: SpaceTag::Dg0Dg0,
            v1: SpaceTag::Dg1Dg1,
            v1_tilde: SpaceTag::Cg1Cg1,
            v0_hat: SpaceTag::Dg0Dg0,
        }
    }

    /// Velocity family: lowest-order normal-flux elements.
    pub fn velocity() -> Self {
        SpaceQuadruple {
            v0: SpaceTag::Rt0,
            v1: SpaceTag::VectorDg1Dg1,
            v1_tilde: SpaceTag::VectorCg1Cg1,
            v0_hat: SpaceTag::BrokenRt0,
        }
    }

    /// Temperature family: constant in x, continuous linear in z.
    pub fn potential_temperature() -> Self {
        SpaceQuadruple {
            v0: SpaceTag::Dg0Cg1,
            v1: SpaceTag::Dg1Dg1,
            v1_tilde: SpaceTag::Cg1Cg1,
            v0_hat: SpaceTag::Dg0Dg1,
        }
    }

    /// 1D analogue of the density family.
    pub fn interval_constants() -> Self {
        SpaceQuadruple {
            v0: SpaceTag::Dg0,
            v1: SpaceTag::Dg1,
            v1_tilde: SpaceTag::Cg1,
            v0_hat: SpaceTag::Dg0,
        }
    }

    /// 1D continuous linears; the broken original coincides with the
    /// advected space.
    pub fn interval_linears() -> Self {
        SpaceQuadruple {
            v0: SpaceTag::Cg1,
            v1: SpaceTag::Dg1,
            v1_tilde: SpaceTag::Cg1,
            v0_hat: SpaceTag::Dg1,
        }
    }
}

/// Which projection maps the advected field back to the original space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjectionVariant {
    /// Global L2 projection; preserves the integral.
    A,
    /// Pointwise interpolation into the broken space followed by
    /// averaging recovery; bounded by the sampled values.
    B,
}

/// One contribution to an averaged target DOF: evaluate the source in
/// `cell` at reference point (xi, eta), component `comp`.
#[derive(Clone, Copy, Debug)]
struct Contributor {
    cell: usize,
    xi: f64,
    eta: f64,
}

/// Averaging map from a (possibly broken) source onto a target space
/// whose DOFs are point values. Depends only on mesh and tags.
#[derive(Clone, Debug)]
pub struct RecoveryPair {
    src_tag: SpaceTag,
    target: FunctionSpace,
    /// per target DOF: Cartesian component it samples (0 for scalars)
    comps: Vec<usize>,
    contributors: Vec<Vec<Contributor>>,
}

fn averaging_pair_supported(src: SpaceTag, target: SpaceTag) -> bool {
    use SpaceTag::*;
    matches!(
        (src, target),
        (Dg0Dg0, Cg1Cg1)
            | (Dg0Cg1, Cg1Cg1)
            | (Dg1Dg1, Cg1Cg1)
            | (Rt0, VectorCg1Cg1)
            | (BrokenRt0, VectorCg1Cg1)
            | (VectorDg1Dg1, VectorCg1Cg1)
            | (Dg0Dg0, Dg0Dg0)
            | (Dg0Dg1, Dg0Cg1)
            | (BrokenRt0, Rt0)
            | (Dg0, Cg1)
            | (Cg1, Cg1)
            | (Dg1, Cg1)
            | (Dg0, Dg0)
    )
}

impl RecoveryPair {
    pub fn build(src_space: &FunctionSpace, target: &FunctionSpace) -> Result<Self> {
        let src = src_space.tag();
        if !averaging_pair_supported(src, target.tag()) {
            return Err(Error::UnsupportedPair {
                src: src.label(),
                target: target.tag().label(),
            });
        }
        let mesh = target.mesh().clone();
        let n = target.n_dofs();
        let mut comps = vec![0usize; n];
        let mut contributors: Vec<Vec<Contributor>> = vec![Vec::new(); n];
        match (&*mesh, target.tag()) {
            (Mesh::Interval(m), SpaceTag::Cg1) => {
                for v in 0..m.n_cells() {
                    let [left, right] = m.vertex_cells(v);
                    contributors[v].push(Contributor {
                        cell: left,
                        xi: 1.0,
                        eta: 0.0,
                    });
                    contributors[v].push(Contributor {
                        cell: right,
                        xi: 0.0,
                        eta: 0.0,
                    });
                }
            }
            (Mesh::Interval(m), SpaceTag::Dg0) => {
                for c in 0..m.n_cells() {
                    contributors[c].push(Contributor {
                        cell: c,
                        xi: 0.5,
                        eta: 0.0,
                    });
                }
            }
            (Mesh::Quad(m), SpaceTag::Cg1Cg1) | (Mesh::Quad(m), SpaceTag::VectorCg1Cg1) => {
                let nvert = m.n_vertices();
                for dof in 0..n {
                    let v = dof % nvert;
                    comps[dof] = dof / nvert;
                    let (vx, vz) = m.vertex_ix_iz(v);
                    let (cells, nc) = m.vertex_cells(v);
                    for &cell in &cells[..nc] {
                        let (cx, cz) = m.cell_ix_iz(cell);
                        // the vertex is a corner of the cell; recover its
                        // local coordinates (periodic wrap in x)
                        let xi = if cx == vx { 0.0 } else { 1.0 };
                        let eta = if cz == vz { 0.0 } else { 1.0 };
                        contributors[dof].push(Contributor { cell, xi, eta });
                    }
                }
            }
            (Mesh::Quad(m), SpaceTag::Dg0Cg1) => {
                for dof in 0..n {
                    let ix = dof / (m.nz() + 1);
                    let iz = dof % (m.nz() + 1);
                    if iz > 0 {
                        contributors[dof].push(Contributor {
                            cell: m.cell_id(ix, iz - 1),
                            xi: 0.5,
                            eta: 1.0,
                        });
                    }
                    if iz < m.nz() {
                        contributors[dof].push(Contributor {
                            cell: m.cell_id(ix, iz),
                            xi: 0.5,
                            eta: 0.0,
                        });
                    }
                }
            }
            (Mesh::Quad(m), SpaceTag::Dg0Dg0) => {
                for c in 0..m.n_cells() {
                    contributors[c].push(Contributor {
                        cell: c,
                        xi: 0.5,
                        eta: 0.5,
                    });
                }
            }
            (Mesh::Quad(m), SpaceTag::Rt0) => {
                let nxf = m.n_xfacets();
                let per_row = m.n_xfacets_per_row();
                for dof in 0..n {
                    if dof < nxf {
                        comps[dof] = 0;
                        let (ixf, iz) = (dof % per_row, dof / per_row);
                        match m.xfacet_cells(ixf, iz) {
                            Some((left, right)) => {
                                contributors[dof].push(Contributor {
                                    cell: left,
                                    xi: 1.0,
                                    eta: 0.5,
                                });
                                contributors[dof].push(Contributor {
                                    cell: right,
                                    xi: 0.0,
                                    eta: 0.5,
                                });
                            }
                            None => {
                                // side wall: single adjacent cell
                                let (ix, xi) = if ixf == 0 { (0, 0.0) } else { (m.nx() - 1, 1.0) };
                                contributors[dof].push(Contributor {
                                    cell: m.cell_id(ix, iz),
                                    xi,
                                    eta: 0.5,
                                });
                            }
                        }
                    } else {
                        comps[dof] = 1;
                        let d = dof - nxf;
                        let (ix, izf) = (d / (m.nz() + 1), d % (m.nz() + 1));
                        match m.zfacet_cells(ix, izf) {
                            Some((below, above)) => {
                                contributors[dof].push(Contributor {
                                    cell: below,
                                    xi: 0.5,
                                    eta: 1.0,
                                });
                                contributors[dof].push(Contributor {
                                    cell: above,
                                    xi: 0.5,
                                    eta: 0.0,
                                });
                            }
                            None => {
                                let (iz, eta) = if izf == 0 { (0, 0.0) } else { (m.nz() - 1, 1.0) };
                                contributors[dof].push(Contributor {
                                    cell: m.cell_id(ix, iz),
                                    xi: 0.5,
                                    eta,
                                });
                            }
                        }
                    }
                }
            }
            _ => unreachable!("whitelist covers the target tags"),
        }
        debug_assert!(contributors.iter().all(|c| !c.is_empty()));
        Ok(RecoveryPair {
            src_tag: src,
            target: target.clone(),
            comps,
            contributors,
        })
    }

    pub fn target(&self) -> &FunctionSpace {
        &self.target
    }

    /// Number of contributors of a target DOF.
    pub fn contributor_count(&self, dof: usize) -> usize {
        self.contributors[dof].len()
    }

    /// Average the source point values into the target space.
    pub fn apply(&self, src: &Field) -> Result<Field> {
        if src.space().tag() != self.src_tag {
            return Err(Error::SpaceMismatch);
        }
        let mut out = vec![0.0; self.target.n_dofs()];
        for dof in 0..out.len() {
            let contribs = &self.contributors[dof];
            let mut acc = 0.0;
            for c in contribs {
                acc += src.evaluate_component(c.cell, c.xi, c.eta, self.comps[dof]);
            }
            out[dof] = acc / contribs.len() as f64;
        }
        Ok(Field::from_coeffs(self.target.clone(), out))
    }

    /// Average per-cell corner data (one [BL, BR, TL, TR] record per
    /// cell and component) into the target space. Used by the boundary
    /// extension, whose intermediate field is broken bilinear.
    fn apply_corner_data(&self, corners: &[Vec<[f64; 4]>]) -> Field {
        let mut out = vec![0.0; self.target.n_dofs()];
        for dof in 0..out.len() {
            let contribs = &self.contributors[dof];
            let mut acc = 0.0;
            for c in contribs {
                let k = corner_index(c.xi, c.eta);
                acc += corners[self.comps[dof]][c.cell][k];
            }
            out[dof] = acc / contribs.len() as f64;
        }
        Field::from_coeffs(self.target.clone(), out)
    }
}

fn corner_index(xi: f64, eta: f64) -> usize {
    debug_assert!((xi == 0.0 || xi == 1.0) && (eta == 0.0 || eta == 1.0));
    (if xi > 0.5 { 1 } else { 0 }) + (if eta > 0.5 { 2 } else { 0 })
}

/// Averaging recovery: each target DOF takes the arithmetic mean of the
/// source evaluated at the DOF location from every adjacent cell.
pub fn recover_average(src: &Field, target: &FunctionSpace) -> Result<Field> {
    RecoveryPair::build(src.space(), target)?.apply(src)
}

/// Whether a source tag resolves values on a wall of the given normal
/// direction (0 = x walls, 1 = z walls) from within a wall cell. Tags
/// that do not need the curvature-minimising extension there.
fn informed_at_wall(src: SpaceTag, comp: usize, normal: usize) -> bool {
    use SpaceTag::*;
    match (src, comp, normal) {
        (Dg0Dg0, _, _) => false,
        (Dg0Cg1, _, 0) => false,
        (Dg0Cg1, _, 1) => true,
        // normal-flux elements: the x component has DOFs on x facets only
        (Rt0 | BrokenRt0, 0, 0) => true,
        (Rt0 | BrokenRt0, 0, 1) => false,
        (Rt0 | BrokenRt0, 1, 0) => false,
        (Rt0 | BrokenRt0, 1, 1) => true,
        (Dg1Dg1 | Cg1Cg1 | VectorDg1Dg1 | VectorCg1Cg1 | Dg0Dg1, _, _) => true,
        _ => true,
    }
}

/// Gradient (Dirichlet) energy matrix of the bilinear cell, scaled for a
/// dx-by-dz rectangle, in [BL, BR, TL, TR] order.
fn curvature_matrix(dx: f64, dz: f64) -> [[f64; 4]; 4] {
    let kxx = [
        [2.0, -2.0, 1.0, -1.0],
        [-2.0, 2.0, -1.0, 1.0],
        [1.0, -1.0, 2.0, -2.0],
        [-1.0, 1.0, -2.0, 2.0],
    ];
    let kzz = [
        [2.0, 1.0, -2.0, -1.0],
        [1.0, 2.0, -1.0, -2.0],
        [-2.0, -1.0, 2.0, 1.0],
        [-1.0, -2.0, 1.0, 2.0],
    ];
    let ax = dz / dx / 6.0;
    let az = dx / dz / 6.0;
    let mut k = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            k[i][j] = ax * kxx[i][j] + az * kzz[i][j];
        }
    }
    k
}

/// Recovery with the wall extension: after plain averaging, each wall
/// cell whose source cannot resolve the wall value is replaced by the
/// bilinear function of least gradient energy that matches the averaged
/// values at the cell's interior DOFs and the source's cell integral;
/// the averaging recovery is then applied again to the resulting broken
/// field.
pub fn recover_with_boundary(src: &Field, target: &FunctionSpace) -> Result<Field> {
    let mesh = target.mesh().clone();
    let quad_mesh = match &*mesh {
        Mesh::Quad(m) => m,
        Mesh::Interval(_) => {
            return Err(Error::InvalidDimension(
                "boundary recovery needs a mesh with rigid walls".into(),
            ))
        }
    };
    let pair = RecoveryPair::build(src.space(), target)?;
    let rho_r = pair.apply(src)?;

    let n_comp = if target.tag().is_vector() { 2 } else { 1 };
    let nvert_block = match target.tag() {
        SpaceTag::Cg1Cg1 => target.n_dofs(),
        SpaceTag::VectorCg1Cg1 => quad_mesh.n_vertices(),
        _ => {
            return Err(Error::UnsupportedPair {
                src: src.space().tag().label(),
                target: target.tag().label(),
            })
        }
    };

    let g2 = gauss_01(2);
    let k_energy = curvature_matrix(quad_mesh.dx(), quad_mesh.dz());

    // broken bilinear field, one corner record per cell and component
    let mut corners: Vec<Vec<[f64; 4]>> = vec![vec![[0.0; 4]; quad_mesh.n_cells()]; n_comp];
    for comp in 0..n_comp {
        for cell in 0..quad_mesh.n_cells() {
            let verts = quad_mesh.cell_vertex_ids(cell);
            for k in 0..4 {
                corners[comp][cell][k] = rho_r.coeffs()[comp * nvert_block + verts[k]];
            }
        }
    }

    for cell in 0..quad_mesh.n_cells() {
        let contact = quad_mesh.cell_wall_contact(cell);
        if !contact.iter().any(|&c| c) {
            continue;
        }
        let verts = quad_mesh.cell_vertex_ids(cell);
        for comp in 0..n_comp {
            let needs_fix = (contact[0] || contact[1])
                && !informed_at_wall(src.space().tag(), comp, 1)
                || (contact[2] || contact[3]) && !informed_at_wall(src.space().tag(), comp, 0);
            if !needs_fix {
                continue;
            }
            // cell integral of the source component
            let mut src_mean = 0.0;
            for &(xi, wx) in &g2 {
                for &(eta, wz) in &g2 {
                    src_mean += wx * wz * src.evaluate_component(cell, xi, eta, comp);
                }
            }
            // equality constraints: interior (non-wall) corners keep the
            // averaged values, and the cell mean matches the source
            let fixed: Vec<usize> = (0..4)
                .filter(|&k| !quad_mesh.vertex_on_boundary(verts[k]))
                .collect();
            let m = fixed.len() + 1;
            let dim = 4 + m;
            let mut kkt = DMatrix::<f64>::zeros(dim, dim);
            let mut rhs = DVector::<f64>::zeros(dim);
            for i in 0..4 {
                for j in 0..4 {
                    kkt[(i, j)] = 2.0 * k_energy[i][j];
                }
            }
            for (row, &k) in fixed.iter().enumerate() {
                kkt[(4 + row, k)] = 1.0;
                kkt[(k, 4 + row)] = 1.0;
                rhs[4 + row] = corners[comp][cell][k];
            }
            let mean_row = 4 + fixed.len();
            for j in 0..4 {
                kkt[(mean_row, j)] = 0.25;
                kkt[(j, mean_row)] = 0.25;
            }
            rhs[mean_row] = src_mean;
            let solved = kkt
                .lu()
                .solve(&rhs)
                .ok_or(Error::SingularSystem("wall cell reconstruction"))?;
            for k in 0..4 {
                corners[comp][cell][k] = solved[k];
            }
        }
    }

    Ok(pair.apply_corner_data(&corners))
}

fn broken_projection_supported(src: SpaceTag, target: SpaceTag) -> bool {
    use SpaceTag::*;
    matches!(
        (src, target),
        (Cg1Cg1, Dg0Dg0)
            | (Cg1Cg1, Dg0Dg1)
            | (Cg1Cg1, Dg1Dg1)
            | (VectorCg1Cg1, BrokenRt0)
            | (VectorCg1Cg1, VectorDg1Dg1)
            | (Cg1, Dg0)
            | (Cg1, Dg1)
    )
}

/// Cell-by-cell L2 projection into a fully discontinuous space. The
/// broken target makes the mass solve block diagonal.
pub fn project_broken(src: &Field, target: &FunctionSpace) -> Result<Field> {
    if !broken_projection_supported(src.space().tag(), target.tag()) {
        return Err(Error::UnsupportedPair {
            src: src.space().tag().label(),
            target: target.tag().label(),
        });
    }
    debug_assert!(target.tag().is_fully_discontinuous());
    let mesh = target.mesh();
    let measure = mesh.cell_measure();
    let g2 = gauss_01(2);
    let npc = target.tag().dofs_per_cell();

    // local mass matrix is identical on every cell of the uniform mesh
    let mut local = DMatrix::<f64>::zeros(npc, npc);
    let probe = |xi: f64, eta: f64, out: &mut [f64; 8]| -> usize {
        local_basis(target.tag(), xi, eta, out)
    };
    let mut scratch = [0.0; 8];
    match mesh.as_ref() {
        Mesh::Interval(_) => {
            for &(xi, w) in &g2 {
                let n = probe(xi, 0.0, &mut scratch);
                for i in 0..n {
                    for j in 0..n {
                        local[(i, j)] += w * measure * scratch[i] * scratch[j];
                    }
                }
            }
        }
        Mesh::Quad(_) => match target.tag() {
            SpaceTag::BrokenRt0 => {
                let pair = [[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]];
                for blk in 0..2 {
                    for i in 0..2 {
                        for j in 0..2 {
                            local[(2 * blk + i, 2 * blk + j)] = pair[i][j] * measure;
                        }
                    }
                }
            }
            SpaceTag::VectorDg1Dg1 => {
                for &(xi, wx) in &g2 {
                    for &(eta, wz) in &g2 {
                        let mut b = [0.0; 4];
                        bilinear_basis(xi, eta, &mut b);
                        for blk in 0..2 {
                            for i in 0..4 {
                                for j in 0..4 {
                                    local[(4 * blk + i, 4 * blk + j)] +=
                                        wx * wz * measure * b[i] * b[j];
                                }
                            }
                        }
                    }
                }
            }
            _ => {
                for &(xi, wx) in &g2 {
                    for &(eta, wz) in &g2 {
                        let n = probe(xi, eta, &mut scratch);
                        for i in 0..n {
                            for j in 0..n {
                                local[(i, j)] += wx * wz * measure * scratch[i] * scratch[j];
                            }
                        }
                    }
                }
            }
        },
    }
    let local_inv = local
        .try_inverse()
        .ok_or(Error::SingularSystem("broken cell mass"))?;

    let mut out = vec![0.0; target.n_dofs()];
    let mut rhs = DVector::<f64>::zeros(npc);
    for cell in 0..target.n_cells() {
        rhs.fill(0.0);
        match mesh.as_ref() {
            Mesh::Interval(_) => {
                for &(xi, w) in &g2 {
                    let v = src.evaluate_component(cell, xi, 0.0, 0);
                    let n = probe(xi, 0.0, &mut scratch);
                    for i in 0..n {
                        rhs[i] += w * measure * v * scratch[i];
                    }
                }
            }
            Mesh::Quad(_) => match target.tag() {
                SpaceTag::BrokenRt0 => {
                    for &(xi, wx) in &g2 {
                        for &(eta, wz) in &g2 {
                            let v = src.evaluate(cell, xi, eta).vector();
                            let w = wx * wz * measure;
                            rhs[0] += w * v[0] * (1.0 - xi);
                            rhs[1] += w * v[0] * xi;
                            rhs[2] += w * v[1] * (1.0 - eta);
                            rhs[3] += w * v[1] * eta;
                        }
                    }
                }
                SpaceTag::VectorDg1Dg1 => {
                    for &(xi, wx) in &g2 {
                        for &(eta, wz) in &g2 {
                            let v = src.evaluate(cell, xi, eta).vector();
                            let mut b = [0.0; 4];
                            bilinear_basis(xi, eta, &mut b);
                            let w = wx * wz * measure;
                            for i in 0..4 {
                                rhs[i] += w * v[0] * b[i];
                                rhs[4 + i] += w * v[1] * b[i];
                            }
                        }
                    }
                }
                _ => {
                    for &(xi, wx) in &g2 {
                        for &(eta, wz) in &g2 {
                            let v = src.evaluate_component(cell, xi, eta, 0);
                            let n = probe(xi, eta, &mut scratch);
                            for i in 0..n {
                                rhs[i] += wx * wz * measure * v * scratch[i];
                            }
                        }
                    }
                }
            },
        }
        let sol = &local_inv * &rhs;
        let dofs = target.cell_dofs(cell);
        for (i, &d) in dofs.as_slice().iter().enumerate() {
            out[d] = sol[i];
        }
    }
    Ok(Field::from_coeffs(target.clone(), out))
}

/// Basis of any scalar or vector tag in local DOF order, for local
/// assembly. Vector tags fill component-major entries.
fn local_basis(tag: SpaceTag, xi: f64, eta: f64, out: &mut [f64; 8]) -> usize {
    match tag {
        SpaceTag::BrokenRt0 | SpaceTag::Rt0 | SpaceTag::VectorDg1Dg1 | SpaceTag::VectorCg1Cg1 => {
            panic!("vector tags are handled by their own assembly paths")
        }
        _ => {
            let mut b = [0.0; 4];
            let n = scalar_basis(tag, xi, eta, &mut b);
            out[..n].copy_from_slice(&b[..n]);
            n
        }
    }
}

fn injection_supported(src: SpaceTag, target: SpaceTag) -> bool {
    use SpaceTag::*;
    matches!(
        (src, target),
        (Dg0Dg0 | Dg0Cg1 | Dg0Dg1 | Cg1Cg1 | Dg1Dg1, Dg1Dg1)
            | (Rt0 | BrokenRt0 | VectorCg1Cg1 | VectorDg1Dg1, VectorDg1Dg1)
            | (Dg0 | Cg1 | Dg1, Dg1)
    )
}

/// Exact re-expansion into the richer discontinuous space by nodal
/// evaluation; every supported source is polynomial within each cell and
/// of no higher degree, so this changes nothing mathematically.
pub fn inject(src: &Field, target: &FunctionSpace) -> Result<Field> {
    if !injection_supported(src.space().tag(), target.tag()) {
        return Err(Error::NonEmbeddableTag {
            src: src.space().tag().label(),
            target: target.tag().label(),
        });
    }
    let mut out = vec![0.0; target.n_dofs()];
    let corners = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)];
    for cell in 0..target.n_cells() {
        let dofs = target.cell_dofs(cell);
        let ids = dofs.as_slice();
        match target.tag() {
            SpaceTag::Dg1 => {
                out[ids[0]] = src.evaluate_component(cell, 0.0, 0.0, 0);
                out[ids[1]] = src.evaluate_component(cell, 1.0, 0.0, 0);
            }
            SpaceTag::Dg1Dg1 => {
                for (k, &(xi, eta)) in corners.iter().enumerate() {
                    out[ids[k]] = src.evaluate_component(cell, xi, eta, 0);
                }
            }
            SpaceTag::VectorDg1Dg1 => {
                for (k, &(xi, eta)) in corners.iter().enumerate() {
                    let v = src.evaluate(cell, xi, eta).vector();
                    out[ids[k]] = v[0];
                    out[ids[4 + k]] = v[1];
                }
            }
            _ => unreachable!(),
        }
    }
    Ok(Field::from_coeffs(target.clone(), out))
}

fn back_projection_supported(src: SpaceTag, target: SpaceTag) -> bool {
    use SpaceTag::*;
    matches!(
        (src, target),
        (Dg1Dg1, Dg0Dg0)
            | (Dg1Dg1, Dg0Cg1)
            | (VectorDg1Dg1, Rt0)
            | (Dg1, Dg0)
            | (Dg1, Cg1)
    )
}

/// Global L2 projection from the advected space back to the original
/// space, solved with the original space's mass matrix.
pub fn project_pa(src: &Field, target: &FunctionSpace) -> Result<Field> {
    let mass = mass_matrix(target);
    project_pa_with(src, target, &mass)
}

/// As [`project_pa`] with a pre-assembled mass matrix.
pub fn project_pa_with(src: &Field, target: &FunctionSpace, mass: &CsrMatrix) -> Result<Field> {
    if !back_projection_supported(src.space().tag(), target.tag()) {
        return Err(Error::UnsupportedPair {
            src: src.space().tag().label(),
            target: target.tag().label(),
        });
    }
    let mesh = target.mesh();
    let measure = mesh.cell_measure();
    let g2 = gauss_01(2);
    let mut rhs = vec![0.0; target.n_dofs()];
    let mut scratch = [0.0; 8];
    for cell in 0..target.n_cells() {
        let dofs = target.cell_dofs(cell);
        let ids = dofs.as_slice();
        match target.tag() {
            SpaceTag::Rt0 => {
                for &(xi, wx) in &g2 {
                    for &(eta, wz) in &g2 {
                        let v = src.evaluate(cell, xi, eta).vector();
                        let w = wx * wz * measure;
                        rhs[ids[0]] += w * v[0] * (1.0 - xi);
                        rhs[ids[1]] += w * v[0] * xi;
                        rhs[ids[2]] += w * v[1] * (1.0 - eta);
                        rhs[ids[3]] += w * v[1] * eta;
                    }
                }
            }
            _ => match mesh.as_ref() {
                Mesh::Interval(_) => {
                    for &(xi, w) in &g2 {
                        let v = src.evaluate_component(cell, xi, 0.0, 0);
                        let n = local_basis(target.tag(), xi, 0.0, &mut scratch);
                        for i in 0..n {
                            rhs[ids[i]] += w * measure * v * scratch[i];
                        }
                    }
                }
                Mesh::Quad(_) => {
                    for &(xi, wx) in &g2 {
                        for &(eta, wz) in &g2 {
                            let v = src.evaluate_component(cell, xi, eta, 0);
                            let n = local_basis(target.tag(), xi, eta, &mut scratch);
                            for i in 0..n {
                                rhs[ids[i]] += wx * wz * measure * v * scratch[i];
                            }
                        }
                    }
                }
            },
        }
    }
    let coeffs = pcg(mass, &rhs, 1e-14, 1000)?;
    Ok(Field::from_coeffs(target.clone(), coeffs))
}

/// The broken counterpart a space's pointwise interpolation lands in.
pub fn broken_counterpart(tag: SpaceTag) -> SpaceTag {
    match tag {
        SpaceTag::Dg0Dg0 => SpaceTag::Dg0Dg0,
        SpaceTag::Dg0Cg1 => SpaceTag::Dg0Dg1,
        SpaceTag::Rt0 => SpaceTag::BrokenRt0,
        SpaceTag::Dg0 => SpaceTag::Dg0,
        SpaceTag::Cg1 => SpaceTag::Dg1,
        t => t,
    }
}

/// Pointwise interpolation at the broken space's DOF locations. Output
/// values are point samples of the source, so no new extrema appear.
pub fn interpolate_broken(src: &Field, target: &FunctionSpace) -> Result<Field> {
    let mut out = vec![0.0; target.n_dofs()];
    for cell in 0..target.n_cells() {
        let dofs = target.cell_dofs(cell);
        let ids = dofs.as_slice();
        match target.tag() {
            SpaceTag::Dg0 => out[ids[0]] = src.evaluate_component(cell, 0.5, 0.0, 0),
            SpaceTag::Dg0Dg0 => out[ids[0]] = src.evaluate_component(cell, 0.5, 0.5, 0),
            SpaceTag::Dg1 => {
                out[ids[0]] = src.evaluate_component(cell, 0.0, 0.0, 0);
                out[ids[1]] = src.evaluate_component(cell, 1.0, 0.0, 0);
            }
            SpaceTag::Dg0Dg1 => {
                out[ids[0]] = src.evaluate_component(cell, 0.5, 0.0, 0);
                out[ids[1]] = src.evaluate_component(cell, 0.5, 1.0, 0);
            }
            SpaceTag::BrokenRt0 => {
                out[ids[0]] = src.evaluate_component(cell, 0.0, 0.5, 0);
                out[ids[1]] = src.evaluate_component(cell, 1.0, 0.5, 0);
                out[ids[2]] = src.evaluate_component(cell, 0.5, 0.0, 1);
                out[ids[3]] = src.evaluate_component(cell, 0.5, 1.0, 1);
            }
            t => {
                return Err(Error::UnsupportedPair {
                    src: src.space().tag().label(),
                    target: t.label(),
                })
            }
        }
    }
    Ok(Field::from_coeffs(target.clone(), out))
}

/// Bounded projection back to the original space: pointwise
/// interpolation into the broken space, then averaging recovery. Every
/// output DOF is a convex combination of source point values.
pub fn project_pb(src: &Field, target: &FunctionSpace) -> Result<Field> {
    if !back_projection_supported(src.space().tag(), target.tag()) {
        return Err(Error::UnsupportedPair {
            src: src.space().tag().label(),
            target: target.tag().label(),
        });
    }
    let broken = FunctionSpace::new(target.mesh().clone(), broken_counterpart(target.tag()))?;
    let sampled = interpolate_broken(src, &broken)?;
    recover_average(&sampled, target)
}

/// Everything a scheme needs, precomputed once per (mesh, configuration):
/// the four spaces, the recovery map, and the original space's mass
/// matrix for the L2 projection.
#[derive(Clone, Debug)]
pub struct SchemeOperators {
    quadruple: SpaceQuadruple,
    projection: ProjectionVariant,
    boundary_recovery: bool,
    v0: FunctionSpace,
    v1: FunctionSpace,
    v1_tilde: FunctionSpace,
    v0_hat: FunctionSpace,
    v0_mass: CsrMatrix,
    recovery: RecoveryPair,
    back_recovery: RecoveryPair,
}

impl SchemeOperators {
    pub fn new(
        mesh: Arc<Mesh>,
        quadruple: SpaceQuadruple,
        projection: ProjectionVariant,
        boundary_recovery: bool,
    ) -> Result<Self> {
        let v0 = FunctionSpace::new(mesh.clone(), quadruple.v0)?;
        let v1 = FunctionSpace::new(mesh.clone(), quadruple.v1)?;
        let v1_tilde = FunctionSpace::new(mesh.clone(), quadruple.v1_tilde)?;
        let v0_hat = FunctionSpace::new(mesh.clone(), quadruple.v0_hat)?;
        let v0_mass = mass_matrix(&v0);
        let recovery = RecoveryPair::build(&v0, &v1_tilde)?;
        let back_recovery = RecoveryPair::build(&v0_hat, &v0)?;
        Ok(SchemeOperators {
            quadruple,
            projection,
            boundary_recovery,
            v0,
            v1,
            v1_tilde,
            v0_hat,
            v0_mass,
            recovery,
            back_recovery,
        })
    }

    pub fn quadruple(&self) -> SpaceQuadruple {
        self.quadruple
    }

    pub fn projection(&self) -> ProjectionVariant {
        self.projection
    }

    pub fn boundary_recovery(&self) -> bool {
        self.boundary_recovery
    }

    pub fn v0(&self) -> &FunctionSpace {
        &self.v0
    }

    pub fn v1(&self) -> &FunctionSpace {
        &self.v1
    }

    pub fn v1_tilde(&self) -> &FunctionSpace {
        &self.v1_tilde
    }

    pub fn v0_hat(&self) -> &FunctionSpace {
        &self.v0_hat
    }

    /// The recovery operator with the configured wall treatment.
    pub fn recover(&self, rho: &Field) -> Result<Field> {
        if self.boundary_recovery && !rho.space().mesh().is_1d() {
            recover_with_boundary(rho, &self.v1_tilde)
        } else {
            self.recovery.apply(rho)
        }
    }

    /// The lift into the advected space: inject the recovered field,
    /// subtract its broken projection, and add the original back.
    pub fn apply_j(&self, rho: &Field) -> Result<Field> {
        if !rho.space().same_as(&self.v0) {
            return Err(Error::SpaceMismatch);
        }
        let recovered = self.recover(rho)?;
        let pr = project_broken(&recovered, &self.v0_hat)?;
        let mut out = inject(&recovered, &self.v1)?;
        let i_pr = inject(&pr, &self.v1)?;
        let i_rho = inject(rho, &self.v1)?;
        for ((o, a), b) in out
            .coeffs_mut()
            .iter_mut()
            .zip(i_pr.coeffs())
            .zip(i_rho.coeffs())
        {
            *o = *o - a + b;
        }
        Ok(out)
    }

    /// The configured projection from the advected space back.
    pub fn project_back(&self, q: &Field) -> Result<Field> {
        match self.projection {
            ProjectionVariant::A => project_pa_with(q, &self.v0, &self.v0_mass),
            ProjectionVariant::B => {
                let sampled = interpolate_broken(q, &self.v0_hat)?;
                self.back_recovery.apply(&sampled)
            }
        }
    }
}

/// The composed lift `J` built from one-off operators; `ops` carries the
/// precomputed spaces and maps.
pub fn apply_j(rho: &Field, ops: &SchemeOperators) -> Result<Field> {
    ops.apply_j(rho)
}
