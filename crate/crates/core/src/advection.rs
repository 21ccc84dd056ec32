//! The upwind DG advection operator on the discontinuous bilinear space,
//! the three-stage Runge-Kutta step, and the full transport step
//! (lift, advect, project back).
//!
//! The advecting velocity is carried in the lowest-order normal-flux
//! space. Fields built from a stream function use exact vertex
//! differences, which makes the discrete divergence vanish identically
//! and wall fluxes exactly zero; other velocities are interpolated at
//! facet midpoints. Either way the facet normal velocity is single
//! valued, so upwinding is well defined and constants are transported
//! exactly.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::limiter::vertex_limit;
use crate::mesh::{IntervalMesh, Mesh, QuadMesh};
use crate::recovery::{ProjectionVariant, SchemeOperators, SpaceQuadruple};
use crate::spaces::{Field, FunctionSpace, SpaceTag};
use crate::vonneumann::ModeCase;

/// Velocity tolerance on rigid walls. The in-scope flows all vanish
/// there analytically; the assembly refuses anything larger instead of
/// implementing inflow boundaries.
pub const WALL_FLUX_TOL: f64 = 1e-12;

/// Analytic advecting velocities used by the experiments.
#[derive(Clone, Debug)]
pub enum Velocity {
    Zero,
    /// Uniform velocity (the 1D runs use the x component).
    Constant([f64; 2]),
    /// Rigid rotation about `center` at one revolution per unit time,
    /// smoothly blended to rest between radii r1 and r2 so the flow
    /// vanishes on the domain boundary.
    CutoffRotation {
        center: (f64, f64),
        r1: f64,
        r2: f64,
    },
    /// Time-reversing deformational flow superposed on unit translation.
    Deformational,
    /// Unit translation plus a vertical squash toward the walls,
    /// mirrored in the second half of the run.
    WallSquash,
}

impl Velocity {
    /// Standard rotation for the unit square: centred, rigid out to
    /// r = 0.48, at rest from r = 0.5 so the walls see no flow.
    pub fn standard_rotation() -> Self {
        Velocity::CutoffRotation {
            center: (0.5, 0.5),
            r1: 0.48,
            r2: 0.5,
        }
    }

    pub fn eval(&self, x: f64, z: f64, t: f64) -> [f64; 2] {
        match self {
            Velocity::Zero => [0.0, 0.0],
            Velocity::Constant(v) => *v,
            Velocity::CutoffRotation { center, r1, r2 } => {
                let dx = x - center.0;
                let dz = z - center.1;
                let r = (dx * dx + dz * dz).sqrt();
                let two_pi = 2.0 * std::f64::consts::PI;
                // angular profile psi'(r)/r of the blended stream function
                let g = if r < *r1 {
                    two_pi
                } else if r < *r2 {
                    let a = std::f64::consts::PI * r1 / (r1 - r2);
                    let b = -2.0 * a * r2;
                    (2.0 * a * r + b) / r
                } else {
                    0.0
                };
                [-g * dz, g * dx]
            }
            Velocity::Deformational => {
                let s = 5.0 * (0.5 - t);
                [
                    1.0 - s * (2.0 * std::f64::consts::PI * (x - t)).sin()
                        * (std::f64::consts::PI * z).cos(),
                    s * (2.0 * std::f64::consts::PI * (x - t)).cos()
                        * (std::f64::consts::PI * z).sin(),
                ]
            }
            Velocity::WallSquash => {
                let w = (2.0 * std::f64::consts::PI * z).sin();
                if t < 0.5 {
                    [1.0, -w]
                } else {
                    [1.0, w]
                }
            }
        }
    }

    /// Stream function, where one exists (the divergence-free flows).
    pub fn stream(&self, x: f64, z: f64, _t: f64) -> Option<f64> {
        match self {
            Velocity::Zero => Some(0.0),
            Velocity::Constant([u, w]) => Some(-u * z + w * x),
            Velocity::CutoffRotation { center, r1, r2 } => {
                let dx = x - center.0;
                let dz = z - center.1;
                let r = (dx * dx + dz * dz).sqrt();
                let pi = std::f64::consts::PI;
                let a = pi * r1 / (r1 - r2);
                let b = -2.0 * a * r2;
                let c = pi * (r1 * r1 - 0.5) - a * r1 * r1 - b * r1;
                Some(if r < *r1 {
                    pi * (r * r - 0.5)
                } else if r < *r2 {
                    a * r * r + b * r + c
                } else {
                    a * r2 * r2 + b * r2 + c
                })
            }
            Velocity::Deformational | Velocity::WallSquash => None,
        }
    }

    pub fn is_steady(&self) -> bool {
        matches!(
            self,
            Velocity::Zero | Velocity::Constant(_) | Velocity::CutoffRotation { .. }
        )
    }

    /// Sample into the normal-flux space at time t. Stream-function
    /// velocities use exact vertex differences (discretely divergence
    /// free); the rest are interpolated at facet midpoints.
    pub fn sample_rt0(&self, mesh: &Arc<Mesh>, t: f64) -> Result<Field> {
        let space = FunctionSpace::new(mesh.clone(), SpaceTag::Rt0)?;
        let q = mesh.as_quad();
        let mut coeffs = vec![0.0; space.n_dofs()];
        let nxf = q.n_xfacets();
        let has_stream = self.stream(0.0, 0.0, t).is_some();
        if has_stream {
            let psi = |x: f64, z: f64| self.stream(x, z, t).unwrap();
            for iz in 0..q.nz() {
                for ixf in 0..q.n_xfacets_per_row() {
                    let x = ixf as f64 * q.dx();
                    let zb = iz as f64 * q.dz();
                    coeffs[q.xfacet_id(ixf, iz)] = -(psi(x, zb + q.dz()) - psi(x, zb)) / q.dz();
                }
            }
            for ix in 0..q.nx() {
                for izf in 0..=q.nz() {
                    let xl = ix as f64 * q.dx();
                    let z = izf as f64 * q.dz();
                    coeffs[nxf + q.zfacet_id(ix, izf)] =
                        (psi(xl + q.dx(), z) - psi(xl, z)) / q.dx();
                }
            }
        } else {
            for iz in 0..q.nz() {
                for ixf in 0..q.n_xfacets_per_row() {
                    let (x, z) = q.xfacet_midpoint(ixf, iz);
                    coeffs[q.xfacet_id(ixf, iz)] = self.eval(x, z, t)[0];
                }
            }
            for ix in 0..q.nx() {
                for izf in 0..=q.nz() {
                    let (x, z) = q.zfacet_midpoint(ix, izf);
                    coeffs[nxf + q.zfacet_id(ix, izf)] = self.eval(x, z, t)[1];
                }
            }
        }
        Ok(Field::from_coeffs(space, coeffs))
    }

    /// The constant 1D speed, for interval meshes.
    fn speed_1d(&self) -> Result<f64> {
        match self {
            Velocity::Zero => Ok(0.0),
            Velocity::Constant([u, w]) if *w == 0.0 => Ok(*u),
            _ => Err(Error::InvalidDimension(
                "interval meshes only support constant horizontal velocities".into(),
            )),
        }
    }
}

fn check_wall_flux(mesh: &QuadMesh, xf: &[f64], zf: &[f64]) -> Result<()> {
    let mut max_flux = 0.0f64;
    for ix in 0..mesh.nx() {
        max_flux = max_flux.max(zf[mesh.zfacet_id(ix, 0)].abs());
        max_flux = max_flux.max(zf[mesh.zfacet_id(ix, mesh.nz())].abs());
    }
    if !mesh.periodic_x() {
        for iz in 0..mesh.nz() {
            max_flux = max_flux.max(xf[mesh.xfacet_id(0, iz)].abs());
            max_flux = max_flux.max(xf[mesh.xfacet_id(mesh.nx(), iz)].abs());
        }
    }
    if max_flux > WALL_FLUX_TOL {
        Err(Error::WallFluxViolation { max_flux })
    } else {
        Ok(())
    }
}

/// Increment of one forward Euler step, scaled by dt, for a single
/// discontinuous bilinear block. `q` and `out` hold 4 coefficients per
/// cell in [BL, BR, TL, TR] order.
fn dg1_block_increment_2d(
    mesh: &QuadMesh,
    q: &[f64],
    xf: &[f64],
    zf: &[f64],
    dt: f64,
    out: &mut [f64],
) {
    let dx = mesh.dx();
    let dz = mesh.dz();
    let area = dx * dz;
    let inv_dx = 1.0 / dx;
    let inv_dz = 1.0 / dz;
    out.fill(0.0);

    // 2x2 Gauss tables on the reference square
    let h = 0.5 / 3.0f64.sqrt();
    let gp = [0.5 - h, 0.5 + h];
    let mut nv = [[0.0f64; 4]; 4]; // basis values per qp
    let mut av = [[0.0f64; 4]; 4]; // 0.25*area*N
    let mut bx = [[0.0f64; 4]; 4]; // 0.25*area*dN/dx
    let mut bz = [[0.0f64; 4]; 4];
    let mut xi_of = [0.0f64; 4];
    let mut eta_of = [0.0f64; 4];
    let mut p = 0;
    for &xi in &gp {
        for &eta in &gp {
            let n = [
                (1.0 - xi) * (1.0 - eta),
                xi * (1.0 - eta),
                (1.0 - xi) * eta,
                xi * eta,
            ];
            let dxi = [-(1.0 - eta), 1.0 - eta, -eta, eta];
            let deta = [-(1.0 - xi), -xi, 1.0 - xi, xi];
            for k in 0..4 {
                nv[p][k] = n[k];
                av[p][k] = 0.25 * area * n[k];
                bx[p][k] = 0.25 * dz * dxi[k];
                bz[p][k] = 0.25 * dx * deta[k];
            }
            xi_of[p] = xi;
            eta_of[p] = eta;
            p += 1;
        }
    }

    // volume: q * (psi div v + v . grad psi)
    for cell in 0..mesh.n_cells() {
        let f = mesh.cell_facets(cell);
        let (w, e) = (xf[f.west], xf[f.east]);
        let (s, n) = (zf[f.south], zf[f.north]);
        let div = (e - w) * inv_dx + (n - s) * inv_dz;
        let ql = &q[4 * cell..4 * cell + 4];
        let r = &mut out[4 * cell..4 * cell + 4];
        for p in 0..4 {
            let qv = ql[0] * nv[p][0] + ql[1] * nv[p][1] + ql[2] * nv[p][2] + ql[3] * nv[p][3];
            let vx = w + (e - w) * xi_of[p];
            let vz = s + (n - s) * eta_of[p];
            for k in 0..4 {
                r[k] += qv * (av[p][k] * div + vx * bx[p][k] + vz * bz[p][k]);
            }
        }
    }

    // interior facets: upwind trace, normal velocity constant per facet
    for iz in 0..mesh.nz() {
        for ixf in 0..mesh.n_xfacets_per_row() {
            let Some((left, right)) = mesh.xfacet_cells(ixf, iz) else {
                continue;
            };
            let vn = xf[mesh.xfacet_id(ixf, iz)];
            if vn == 0.0 {
                continue;
            }
            for &g in &gp {
                let tr = if vn >= 0.0 {
                    q[4 * left + 1] * (1.0 - g) + q[4 * left + 3] * g
                } else {
                    q[4 * right] * (1.0 - g) + q[4 * right + 2] * g
                };
                let wgt = 0.5 * dz * vn * tr;
                out[4 * left + 1] -= wgt * (1.0 - g);
                out[4 * left + 3] -= wgt * g;
                out[4 * right] += wgt * (1.0 - g);
                out[4 * right + 2] += wgt * g;
            }
        }
    }
    for ix in 0..mesh.nx() {
        for izf in 1..mesh.nz() {
            let (below, above) = mesh.zfacet_cells(ix, izf).expect("interior facet");
            let vn = zf[mesh.zfacet_id(ix, izf)];
            if vn == 0.0 {
                continue;
            }
            for &g in &gp {
                let tr = if vn >= 0.0 {
                    q[4 * below + 2] * (1.0 - g) + q[4 * below + 3] * g
                } else {
                    q[4 * above] * (1.0 - g) + q[4 * above + 1] * g
                };
                let wgt = 0.5 * dx * vn * tr;
                out[4 * below + 2] -= wgt * (1.0 - g);
                out[4 * below + 3] -= wgt * g;
                out[4 * above] += wgt * (1.0 - g);
                out[4 * above + 1] += wgt * g;
            }
        }
    }

    // block-diagonal mass solve: inverse of the bilinear tensor mass
    const MINV: [[f64; 4]; 4] = [
        [16.0, -8.0, -8.0, 4.0],
        [-8.0, 16.0, 4.0, -8.0],
        [-8.0, 4.0, 16.0, -8.0],
        [4.0, -8.0, -8.0, 16.0],
    ];
    let scale = dt / area;
    for cell in 0..mesh.n_cells() {
        let r = [
            out[4 * cell],
            out[4 * cell + 1],
            out[4 * cell + 2],
            out[4 * cell + 3],
        ];
        for k in 0..4 {
            out[4 * cell + k] = scale
                * (MINV[k][0] * r[0] + MINV[k][1] * r[1] + MINV[k][2] * r[2] + MINV[k][3] * r[3]);
        }
    }
}

/// 1D counterpart with constant speed u: two trace DOFs per cell.
fn dg1_increment_1d(mesh: &IntervalMesh, q: &[f64], u: f64, dt: f64, out: &mut [f64]) {
    let n = mesh.n_cells();
    let dx = mesh.dx();
    for cell in 0..n {
        let mean = 0.5 * (q[2 * cell] + q[2 * cell + 1]);
        out[2 * cell] = -u * mean;
        out[2 * cell + 1] = u * mean;
    }
    for v in 0..n {
        let left = (v + n - 1) % n;
        let right = v;
        let tr = if u >= 0.0 { q[2 * left + 1] } else { q[2 * right] };
        let f = u * tr;
        out[2 * left + 1] -= f;
        out[2 * right] += f;
    }
    let scale = dt * 2.0 / dx;
    for cell in 0..n {
        let r0 = out[2 * cell];
        let r1 = out[2 * cell + 1];
        out[2 * cell] = scale * (2.0 * r0 - r1);
        out[2 * cell + 1] = scale * (-r0 + 2.0 * r1);
    }
}

/// dt-scaled increment of one forward Euler step of the upwind weak
/// form: the Euler step is `q + increment`, and the increment vanishes
/// identically at zero Courant number.
///
/// `vel` is a normal-flux field on the same mesh; its wall values must
/// vanish to tolerance.
pub fn euler_increment(q: &Field, vel: &Field, dt: f64) -> Result<Field> {
    if vel.space().tag() != SpaceTag::Rt0 {
        return Err(Error::SpaceMismatch);
    }
    let mesh = match q.space().mesh().as_ref() {
        Mesh::Quad(m) => m,
        Mesh::Interval(_) => {
            return Err(Error::InvalidDimension(
                "1D increments take a plain speed; use euler_increment_1d".into(),
            ))
        }
    };
    let nxf = mesh.n_xfacets();
    let (xf, zf) = vel.coeffs().split_at(nxf);
    check_wall_flux(mesh, xf, zf)?;
    let mut out = Field::zeros(q.space().clone());
    match q.space().tag() {
        SpaceTag::Dg1Dg1 => {
            dg1_block_increment_2d(mesh, q.coeffs(), xf, zf, dt, out.coeffs_mut());
        }
        SpaceTag::VectorDg1Dg1 => {
            let half = 4 * mesh.n_cells();
            dg1_block_increment_2d(
                mesh,
                &q.coeffs()[..half],
                xf,
                zf,
                dt,
                &mut out.coeffs_mut()[..half],
            );
            dg1_block_increment_2d(
                mesh,
                &q.coeffs()[half..],
                xf,
                zf,
                dt,
                &mut out.coeffs_mut()[half..],
            );
        }
        _ => {
            return Err(Error::UnsupportedPair {
                src: q.space().tag().label(),
                target: "advection",
            })
        }
    }
    Ok(out)
}

/// 1D increment at constant speed.
pub fn euler_increment_1d(q: &Field, u: f64, dt: f64) -> Result<Field> {
    let mesh = match q.space().mesh().as_ref() {
        Mesh::Interval(m) => m,
        Mesh::Quad(_) => {
            return Err(Error::InvalidDimension(
                "expected an interval mesh".into(),
            ))
        }
    };
    if q.space().tag() != SpaceTag::Dg1 {
        return Err(Error::UnsupportedPair {
            src: q.space().tag().label(),
            target: "advection",
        });
    }
    let mut out = Field::zeros(q.space().clone());
    dg1_increment_1d(mesh, q.coeffs(), u, dt, out.coeffs_mut());
    Ok(out)
}

fn maybe_limit(q: Field, limiter: bool) -> Field {
    if limiter {
        vertex_limit(&q)
    } else {
        q
    }
}

/// One step of the three-stage strong-stability-preserving Runge-Kutta
/// scheme, with the velocity sampled at the stage times t, t+dt and
/// t+dt/2. When the limiter is on it is applied to the incoming field
/// and again after every stage.
pub fn ssprk3_step(q: &Field, vel: &Velocity, t: f64, dt: f64, limiter: bool) -> Result<Field> {
    if limiter {
        assert!(
            !q.space().tag().is_vector(),
            "the vertex limiter applies to scalar fields"
        );
    }
    match q.space().mesh().as_ref() {
        Mesh::Interval(_) => {
            let u = vel.speed_1d()?;
            let q0 = maybe_limit(q.clone(), limiter);
            let mut q1 = q0.clone();
            add_scaled(&mut q1, &euler_increment_1d(&q0, u, dt)?, 1.0);
            let q1 = maybe_limit(q1, limiter);
            let mut q2 = combine(&q0, 0.75, &q1, 0.25);
            add_scaled(&mut q2, &euler_increment_1d(&q1, u, dt)?, 0.25);
            let q2 = maybe_limit(q2, limiter);
            let mut q3 = combine(&q0, 1.0 / 3.0, &q2, 2.0 / 3.0);
            add_scaled(&mut q3, &euler_increment_1d(&q2, u, dt)?, 2.0 / 3.0);
            Ok(maybe_limit(q3, limiter))
        }
        Mesh::Quad(_) => {
            let mesh = q.space().mesh();
            let v1 = vel.sample_rt0(mesh, t)?;
            let (v2, v3) = if vel.is_steady() {
                (v1.clone(), v1.clone())
            } else {
                (
                    vel.sample_rt0(mesh, t + dt)?,
                    vel.sample_rt0(mesh, t + 0.5 * dt)?,
                )
            };
            let q0 = maybe_limit(q.clone(), limiter);
            let mut q1 = q0.clone();
            add_scaled(&mut q1, &euler_increment(&q0, &v1, dt)?, 1.0);
            let q1 = maybe_limit(q1, limiter);
            let mut q2 = combine(&q0, 0.75, &q1, 0.25);
            add_scaled(&mut q2, &euler_increment(&q1, &v2, dt)?, 0.25);
            let q2 = maybe_limit(q2, limiter);
            let mut q3 = combine(&q0, 1.0 / 3.0, &q2, 2.0 / 3.0);
            add_scaled(&mut q3, &euler_increment(&q2, &v3, dt)?, 2.0 / 3.0);
            Ok(maybe_limit(q3, limiter))
        }
    }
}

fn combine(a: &Field, wa: f64, b: &Field, wb: f64) -> Field {
    let coeffs = a
        .coeffs()
        .iter()
        .zip(b.coeffs())
        .map(|(x, y)| wa * x + wb * y)
        .collect();
    Field::from_coeffs(a.space().clone(), coeffs)
}

fn add_scaled(a: &mut Field, b: &Field, w: f64) {
    for (x, y) in a.coeffs_mut().iter_mut().zip(b.coeffs()) {
        *x += w * y;
    }
}

/// Scheme configuration: the space quadruple, the projection back, and
/// the wall/limiter switches.
#[derive(Clone, Debug)]
pub struct SchemeConfig {
    pub quadruple: SpaceQuadruple,
    pub projection: ProjectionVariant,
    pub limiter_enabled: bool,
    pub boundary_recovery: bool,
}

impl SchemeConfig {
    pub fn density() -> Self {
        SchemeConfig {
            quadruple: SpaceQuadruple::density(),
            projection: ProjectionVariant::A,
            limiter_enabled: false,
            boundary_recovery: true,
        }
    }

    pub fn velocity() -> Self {
        SchemeConfig {
            quadruple: SpaceQuadruple::velocity(),
            projection: ProjectionVariant::A,
            limiter_enabled: false,
            boundary_recovery: true,
        }
    }

    pub fn potential_temperature() -> Self {
        SchemeConfig {
            quadruple: SpaceQuadruple::potential_temperature(),
            projection: ProjectionVariant::A,
            limiter_enabled: false,
            boundary_recovery: true,
        }
    }

    /// Moisture: temperature spaces, bounded projection, vertex limiter.
    pub fn moisture() -> Self {
        SchemeConfig {
            quadruple: SpaceQuadruple::potential_temperature(),
            projection: ProjectionVariant::B,
            limiter_enabled: true,
            boundary_recovery: true,
        }
    }

    /// The 1D configuration measured by a mode case.
    pub fn for_mode_case(case: ModeCase) -> Self {
        let (quadruple, projection) = match case {
            ModeCase::A => (SpaceQuadruple::interval_constants(), ProjectionVariant::A),
            ModeCase::B => (SpaceQuadruple::interval_linears(), ProjectionVariant::A),
            ModeCase::C => (SpaceQuadruple::interval_linears(), ProjectionVariant::B),
        };
        SchemeConfig {
            quadruple,
            projection,
            limiter_enabled: false,
            boundary_recovery: false,
        }
    }

    pub fn build_operators(&self, mesh: Arc<Mesh>) -> Result<SchemeOperators> {
        SchemeOperators::new(
            mesh,
            self.quadruple,
            self.projection,
            self.boundary_recovery,
        )
    }

    /// Stability limit of the matching 1D mode case (see the mode-space
    /// engine, which measures these numerically).
    pub fn critical_courant_limit(&self) -> f64 {
        use crate::vonneumann::CRITICAL_COURANT_REFERENCE;
        if self.quadruple == SpaceQuadruple::potential_temperature()
            || self.quadruple == SpaceQuadruple::interval_linears()
        {
            match self.projection {
                ProjectionVariant::A => CRITICAL_COURANT_REFERENCE[1],
                ProjectionVariant::B => CRITICAL_COURANT_REFERENCE[2],
            }
        } else {
            CRITICAL_COURANT_REFERENCE[0]
        }
    }
}

/// A transport run: velocity, step sizes, and scheme configuration.
#[derive(Clone, Debug)]
pub struct TransportProblem {
    pub velocity: Velocity,
    pub dt: f64,
    pub t_final: f64,
    pub substeps: usize,
    pub config: SchemeConfig,
}

impl TransportProblem {
    /// Advance the original-space field by one dt.
    pub fn step(&self, ops: &SchemeOperators, rho: &Field, t: f64) -> Result<Field> {
        recovered_step(
            rho,
            ops,
            &self.velocity,
            t,
            self.dt,
            self.substeps,
            self.config.limiter_enabled,
        )
    }
}

/// One full step of the recovered scheme: lift with J, run the
/// Runge-Kutta substeps in the advected space, project back.
pub fn recovered_step(
    rho: &Field,
    ops: &SchemeOperators,
    vel: &Velocity,
    t: f64,
    dt: f64,
    substeps: usize,
    limiter: bool,
) -> Result<Field> {
    assert!(substeps >= 1);
    let mut q = ops.apply_j(rho)?;
    let sub_dt = dt / substeps as f64;
    for k in 0..substeps {
        q = ssprk3_step(&q, vel, t + k as f64 * sub_dt, sub_dt, limiter)?;
    }
    ops.project_back(&q)
}

/// Largest one-step Courant number over the mesh, |vx| dt/dx + |vz| dt/dz
/// sampled at cell centres.
pub fn courant_number(vel: &Velocity, mesh: &QuadMesh, dt: f64, t: f64) -> f64 {
    let mut c = 0.0f64;
    for cell in 0..mesh.n_cells() {
        let (x, z) = mesh.cell_center(cell);
        let [vx, vz] = vel.eval(x, z, t);
        c = c.max(vx.abs() * dt / mesh.dx() + vz.abs() * dt / mesh.dz());
    }
    c
}

/// Empirically measured amplification of mode k on an n-cell periodic
/// interval with unit spacing and unit time step: advect sine and cosine
/// profiles one step and project the result back onto the mode pair.
pub fn measure_amplification(case: ModeCase, c: f64, k: usize, n_cells: usize) -> Result<f64> {
    if k < 1 || 2 * k >= n_cells {
        return Err(Error::DegenerateInput(format!(
            "wavenumber {k} outside (0, {}/2)",
            n_cells
        )));
    }
    let mesh = Arc::new(Mesh::interval(n_cells, n_cells as f64)?);
    let config = SchemeConfig::for_mode_case(case);
    let ops = config.build_operators(mesh)?;
    let v0 = ops.v0().clone();
    let length = n_cells as f64;
    let phase = |x: f64| 2.0 * std::f64::consts::PI * k as f64 * x / length;

    let sample = |f: &dyn Fn(f64) -> f64| {
        let coeffs = (0..v0.n_dofs())
            .map(|d| f(v0.dof_coords(d).0))
            .collect::<Vec<_>>();
        Field::from_coeffs(v0.clone(), coeffs)
    };
    let vel = Velocity::Constant([c, 0.0]);
    let sin_out = recovered_step(&sample(&|x| phase(x).sin()), &ops, &vel, 0.0, 1.0, 1, false)?;
    let cos_out = recovered_step(&sample(&|x| phase(x).cos()), &ops, &vel, 0.0, 1.0, 1, false)?;

    // project (cos + i sin) onto the mode: (1/n) sum z'_j exp(-i theta_j)
    let mut re = 0.0;
    let mut im = 0.0;
    for d in 0..v0.n_dofs() {
        let th = phase(v0.dof_coords(d).0);
        let (ct, st) = (th.cos(), th.sin());
        re += cos_out.coeffs()[d] * ct + sin_out.coeffs()[d] * st;
        im += sin_out.coeffs()[d] * ct - cos_out.coeffs()[d] * st;
    }
    let n = v0.n_dofs() as f64;
    Ok((re * re + im * im).sqrt() / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{integral, l2_error, l2_norm, project_analytic};
    use crate::vonneumann::{advection_matrix, scheme_amplification};
    use num_complex::Complex64;

    fn unit_quad(n: usize) -> Arc<Mesh> {
        Arc::new(Mesh::quad(n, n, 1.0, 1.0, true).unwrap())
    }

    fn lcg(state: &mut u64) -> f64 {
        *state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (*state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }

    #[test]
    fn increment_vanishes_for_constant_field_any_rt0_velocity() {
        let m = unit_quad(8);
        let space = FunctionSpace::new(m.clone(), SpaceTag::Dg1Dg1).unwrap();
        let q = Field::from_coeffs(space.clone(), vec![2.0; space.n_dofs()]);
        for vel in [
            Velocity::standard_rotation(),
            Velocity::Deformational,
            Velocity::WallSquash,
            Velocity::Constant([0.7, 0.0]),
        ] {
            let v = vel.sample_rt0(&m, 0.2).unwrap();
            let inc = euler_increment(&q, &v, 1e-2).unwrap();
            let max = inc.coeffs().iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            assert!(max < 1e-13, "{vel:?}: residual {max:.2e}");
        }
    }

    #[test]
    fn increment_vanishes_for_zero_velocity() {
        let m = unit_quad(6);
        let space = FunctionSpace::new(m.clone(), SpaceTag::Dg1Dg1).unwrap();
        let mut state = 3u64;
        let coeffs = (0..space.n_dofs()).map(|_| lcg(&mut state)).collect();
        let q = Field::from_coeffs(space, coeffs);
        let v = Velocity::Zero.sample_rt0(&m, 0.0).unwrap();
        let inc = euler_increment(&q, &v, 0.3).unwrap();
        assert!(inc.coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn one_d_increment_matches_mode_matrix() {
        // uniform mode with phase 0 sees the increment matrix columns
        let n = 6;
        let mesh = Arc::new(Mesh::interval(n, n as f64).unwrap());
        let space = FunctionSpace::new(mesh, SpaceTag::Dg1).unwrap();
        let c = 0.5;
        for (a, b, expect) in [
            (1.0, 0.0, [-1.5, 1.5]),
            (0.0, 1.0, [1.5, -1.5]),
        ] {
            let coeffs: Vec<f64> = (0..n).flat_map(|_| [a, b]).collect();
            let q = Field::from_coeffs(space.clone(), coeffs);
            let inc = euler_increment_1d(&q, c, 1.0).unwrap();
            for cell in 0..n {
                assert!((inc.coeffs()[2 * cell] - expect[0]).abs() < 1e-14);
                assert!((inc.coeffs()[2 * cell + 1] - expect[1]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn ssprk3_identity_without_flow() {
        let m = unit_quad(5);
        let space = FunctionSpace::new(m, SpaceTag::Dg1Dg1).unwrap();
        let mut state = 17u64;
        let coeffs: Vec<f64> = (0..space.n_dofs()).map(|_| lcg(&mut state)).collect();
        let q = Field::from_coeffs(space, coeffs);
        let out = ssprk3_step(&q, &Velocity::Zero, 0.0, 0.1, false).unwrap();
        assert_eq!(out.coeffs(), q.coeffs());
    }

    #[test]
    fn ssprk3_mode_action_matches_matrix_oracle() {
        let n = 24usize;
        let k = 5usize;
        let c = 0.6;
        let phi = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let mesh = Arc::new(Mesh::interval(n, n as f64).unwrap());
        let space = FunctionSpace::new(mesh, SpaceTag::Dg1).unwrap();
        let alpha = [Complex64::new(0.37, -0.81), Complex64::new(-0.22, 0.55)];
        let mode = |j: usize, slot: usize| {
            alpha[slot] * Complex64::new(0.0, phi * j as f64).exp()
        };
        let build = |im: bool| {
            let coeffs: Vec<f64> = (0..n)
                .flat_map(|j| {
                    let (a, b) = (mode(j, 0), mode(j, 1));
                    if im {
                        [a.im, b.im]
                    } else {
                        [a.re, b.re]
                    }
                })
                .collect();
            Field::from_coeffs(space.clone(), coeffs)
        };
        let re = ssprk3_step(&build(false), &Velocity::Constant([c, 0.0]), 0.0, 1.0, false)
            .unwrap();
        let im = ssprk3_step(&build(true), &Velocity::Constant([c, 0.0]), 0.0, 1.0, false)
            .unwrap();
        let expect = advection_matrix(c, phi)
            * nalgebra::Vector2::new(alpha[0], alpha[1]);
        for j in 0..n {
            let phase = Complex64::new(0.0, phi * j as f64).exp();
            for slot in 0..2 {
                let got = Complex64::new(re.coeffs()[2 * j + slot], im.coeffs()[2 * j + slot]);
                let want = expect[slot] * phase;
                assert!(
                    (got - want).norm() < 1e-12,
                    "cell {j} slot {slot}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn ssprk3_preserves_constants_under_all_velocities() {
        let m = unit_quad(6);
        let space = FunctionSpace::new(m, SpaceTag::Dg1Dg1).unwrap();
        let q = Field::from_coeffs(space.clone(), vec![1.0; space.n_dofs()]);
        for vel in [
            Velocity::standard_rotation(),
            Velocity::Deformational,
            Velocity::WallSquash,
        ] {
            for limiter in [false, true] {
                let out = ssprk3_step(&q, &vel, 0.12, 2e-3, limiter).unwrap();
                for &c in out.coeffs() {
                    assert!((c - 1.0).abs() < 1e-12, "{vel:?} limiter={limiter}");
                }
            }
        }
    }

    #[test]
    fn recovered_step_is_identity_without_flow() {
        for config in [
            SchemeConfig::density(),
            SchemeConfig::velocity(),
            SchemeConfig::potential_temperature(),
            SchemeConfig::moisture(),
        ] {
            let m = unit_quad(6);
            let ops = config.build_operators(m).unwrap();
            let mut state = 23u64;
            let coeffs: Vec<f64> = (0..ops.v0().n_dofs()).map(|_| lcg(&mut state)).collect();
            let rho = Field::from_coeffs(ops.v0().clone(), coeffs);
            let out = recovered_step(
                &rho,
                &ops,
                &Velocity::Zero,
                0.0,
                1e-3,
                1,
                config.limiter_enabled,
            )
            .unwrap();
            let rel = l2_error(&out, &rho).unwrap() / l2_norm(&rho);
            assert!(rel < 1e-11, "{:?}: {rel:.2e}", config.quadruple);
        }
    }

    #[test]
    fn mass_conserved_with_divergence_free_velocity() {
        let m = unit_quad(10);
        let config = SchemeConfig::density();
        let ops = config.build_operators(m.clone()).unwrap();
        let rho = project_analytic(ops.v0(), 4, |x, z| {
            (-((x - 0.375).powi(2) + (z - 0.5).powi(2)) / 0.015625).exp()
        })
        .unwrap();
        let vel = Velocity::standard_rotation();
        let m0 = integral(&rho);
        let stepped = recovered_step(&rho, &ops, &vel, 0.0, 2e-3, 1, false).unwrap();
        let m1 = integral(&stepped);
        assert!(
            ((m1 - m0) / m0).abs() < 1e-11,
            "relative drift {:.2e}",
            (m1 - m0) / m0
        );
    }

    #[test]
    fn linearity_of_recovered_step() {
        let m = unit_quad(6);
        let config = SchemeConfig::potential_temperature();
        let ops = config.build_operators(m).unwrap();
        let vel = Velocity::standard_rotation();
        let n = ops.v0().n_dofs();
        let mut state = 5u64;
        let f1: Vec<f64> = (0..n).map(|_| lcg(&mut state)).collect();
        let f2: Vec<f64> = (0..n).map(|_| lcg(&mut state)).collect();
        let (a, b) = (1.3, -0.6);
        let combo: Vec<f64> = f1.iter().zip(&f2).map(|(x, y)| a * x + b * y).collect();
        let step =
            |c: Vec<f64>| -> Field {
                recovered_step(
                    &Field::from_coeffs(ops.v0().clone(), c),
                    &ops,
                    &vel,
                    0.0,
                    1e-3,
                    1,
                    false,
                )
                .unwrap()
            };
        let s1 = step(f1);
        let s2 = step(f2);
        let sc = step(combo);
        let mut max = 0.0f64;
        for i in 0..n {
            max = max.max((sc.coeffs()[i] - a * s1.coeffs()[i] - b * s2.coeffs()[i]).abs());
        }
        let scale = l2_norm(&sc).max(1.0);
        assert!(max / scale < 1e-11, "nonlinearity {max:.2e}");
    }

    #[test]
    fn translation_equivariance_on_interval() {
        let n = 16;
        let mesh = Arc::new(Mesh::interval(n, n as f64).unwrap());
        let config = SchemeConfig::for_mode_case(ModeCase::A);
        let ops = config.build_operators(mesh).unwrap();
        let mut state = 77u64;
        let coeffs: Vec<f64> = (0..n).map(|_| lcg(&mut state)).collect();
        let shifted: Vec<f64> = (0..n).map(|i| coeffs[(i + n - 1) % n]).collect();
        let vel = Velocity::Constant([0.4, 0.0]);
        let step = |c: Vec<f64>| {
            recovered_step(
                &Field::from_coeffs(ops.v0().clone(), c),
                &ops,
                &vel,
                0.0,
                1.0,
                1,
                false,
            )
            .unwrap()
        };
        let out = step(coeffs);
        let out_shifted = step(shifted);
        for i in 0..n {
            assert_eq!(
                out.coeffs()[(i + n - 1) % n],
                out_shifted.coeffs()[i],
                "shift must commute exactly"
            );
        }
    }

    #[test]
    fn stability_brackets_the_critical_courant_number() {
        let n = 120;
        let mesh = Arc::new(Mesh::interval(n, n as f64).unwrap());
        let config = SchemeConfig::for_mode_case(ModeCase::A);
        let ops = config.build_operators(mesh).unwrap();
        let run = |c: f64| -> f64 {
            let mut state = 12u64;
            let coeffs: Vec<f64> = (0..n).map(|_| lcg(&mut state)).collect();
            let mut rho = Field::from_coeffs(ops.v0().clone(), coeffs);
            let initial = l2_norm(&rho);
            let vel = Velocity::Constant([c, 0.0]);
            let mut max_norm = initial;
            for k in 0..200 {
                rho = recovered_step(&rho, &ops, &vel, k as f64, 1.0, 1, false).unwrap();
                max_norm = max_norm.max(l2_norm(&rho));
            }
            max_norm / initial
        };
        assert!(run(0.8) <= 1.0 + 1e-9, "stable below the critical number");
        assert!(run(0.9) > 1.0 + 1e-6, "unstable above the critical number");
    }

    #[test]
    fn courant_number_examples() {
        let q = Mesh::quad(100, 100, 1.0, 1.0, true).unwrap();
        let q = match q {
            Mesh::Quad(m) => m,
            _ => unreachable!(),
        };
        assert_eq!(courant_number(&Velocity::Zero, &q, 0.1, 0.0), 0.0);
        let c = courant_number(&Velocity::Constant([1.0, 0.0]), &q, 0.004, 0.0);
        assert!((c - 0.4).abs() < 1e-12);
        let c = courant_number(&Velocity::standard_rotation(), &q, 1e-4, 0.0);
        assert!(c <= 0.1, "rotation at fine step: {c}");
    }

    #[test]
    fn measured_amplification_matches_oracle() {
        for case in [ModeCase::A, ModeCase::B, ModeCase::C] {
            for &(c, k) in &[(0.0, 3usize), (0.4, 10), (0.8, 30)] {
                let measured = measure_amplification(case, c, k, 120).unwrap();
                let phi = 2.0 * std::f64::consts::PI * k as f64 / 120.0;
                let oracle = scheme_amplification(case, c, phi);
                assert!(
                    (measured - oracle).abs() <= 1e-9,
                    "{case:?} c={c} k={k}: {measured} vs {oracle}"
                );
            }
        }
    }

    #[test]
    fn case_c_amplifies_where_case_b_does_not() {
        let c = 0.4;
        let mut worst_b = 0.0f64;
        let mut worst_c = 0.0f64;
        for k in 1..60 {
            worst_b = worst_b.max(measure_amplification(ModeCase::B, c, k, 120).unwrap());
            worst_c = worst_c.max(measure_amplification(ModeCase::C, c, k, 120).unwrap());
        }
        assert!(worst_b <= 1.0 + 1e-9);
        assert!(worst_c > 1.0 + 1e-6);
    }

    #[test]
    fn wall_flux_violation_detected() {
        let m = unit_quad(4);
        let space = FunctionSpace::new(m.clone(), SpaceTag::Dg1Dg1).unwrap();
        let q = Field::zeros(space);
        // rigid rotation without the cutoff pierces the walls
        let bad = Velocity::CutoffRotation {
            center: (0.5, 0.5),
            r1: 5.0,
            r2: 6.0,
        };
        let v = bad.sample_rt0(&m, 0.0).unwrap();
        assert!(matches!(
            euler_increment(&q, &v, 0.1),
            Err(Error::WallFluxViolation { .. })
        ));
    }

    #[test]
    fn wall_squash_characteristics_reverse() {
        // integrate dz/dt = vz along the squash flow; after mirrored
        // halves every characteristic returns to its start
        let vel = Velocity::WallSquash;
        for z0 in [0.15, 0.4, 0.77] {
            let mut z = z0;
            let n = 4000;
            let dt = 1.0 / n as f64;
            for k in 0..n {
                let t = k as f64 * dt;
                // classic RK4 on the scalar ODE
                let f = |t: f64, z: f64| vel.eval(0.0, z, t)[1];
                let k1 = f(t, z);
                let k2 = f(t + 0.5 * dt, z + 0.5 * dt * k1);
                let k3 = f(t + 0.5 * dt, z + 0.5 * dt * k2);
                let k4 = f(t + dt, z + dt * k3);
                z += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            assert!((z - z0).abs() < 1e-5, "z0={z0}: returned to {z}");
        }
    }
}
