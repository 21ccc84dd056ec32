//! Vertex-based slope limiter for fully discontinuous (bi)linear fields.
//!
//! Each element is split into its mean and a linear perturbation; the
//! perturbation is scaled by the largest factor in [0, 1] that keeps
//! every nodal value inside the bounds collected from the cell means of
//! the elements sharing each vertex. Element means are untouched.

use crate::mesh::Mesh;
use crate::spaces::{Field, SpaceTag};

/// Per-vertex bounds: extrema of the cell means over the cells sharing
/// the vertex. Recomputed from the current field on every application.
#[derive(Clone, Debug)]
pub struct VertexBounds {
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
}

/// Correction factors at or above this are treated as 1 so that limiting
/// an already-limited field is an exact no-op.
const ALPHA_SNAP: f64 = 1.0 - 1e-14;

fn cell_means(q: &Field) -> Vec<f64> {
    let npc = q.space().tag().dofs_per_cell();
    (0..q.space().n_cells())
        .map(|cell| {
            let dofs = q.space().cell_dofs(cell);
            let ids = dofs.as_slice();
            ids.iter().map(|&d| q.coeffs()[d]).sum::<f64>() / npc as f64
        })
        .collect()
}

/// Gather the vertex bounds of a discontinuous (bi)linear field.
pub fn vertex_bounds(q: &Field) -> VertexBounds {
    let means = cell_means(q);
    let mesh = q.space().mesh();
    match mesh.as_ref() {
        Mesh::Interval(m) => {
            let n = m.n_cells();
            let mut q_min = vec![f64::INFINITY; n];
            let mut q_max = vec![f64::NEG_INFINITY; n];
            for v in 0..n {
                for c in m.vertex_cells(v) {
                    q_min[v] = q_min[v].min(means[c]);
                    q_max[v] = q_max[v].max(means[c]);
                }
            }
            VertexBounds { q_min, q_max }
        }
        Mesh::Quad(m) => {
            let n = m.n_vertices();
            let mut q_min = vec![f64::INFINITY; n];
            let mut q_max = vec![f64::NEG_INFINITY; n];
            for v in 0..n {
                let (cells, nc) = m.vertex_cells(v);
                for &c in &cells[..nc] {
                    q_min[v] = q_min[v].min(means[c]);
                    q_max[v] = q_max[v].max(means[c]);
                }
            }
            VertexBounds { q_min, q_max }
        }
    }
}

/// Apply the limiter, returning the corrected field. Accepts the fully
/// discontinuous linear tags only.
pub fn vertex_limit(q: &Field) -> Field {
    assert!(
        matches!(q.space().tag(), SpaceTag::Dg1 | SpaceTag::Dg1Dg1),
        "vertex limiter needs a fully discontinuous linear field, got {}",
        q.space().tag().label()
    );
    let bounds = vertex_bounds(q);
    let means = cell_means(q);
    let mesh = q.space().mesh();
    let mut out = q.clone();
    for cell in 0..q.space().n_cells() {
        let dofs = q.space().cell_dofs(cell);
        let ids = dofs.as_slice();
        let vertices: &[usize] = match mesh.as_ref() {
            Mesh::Interval(m) => &m.cell_vertices(cell),
            Mesh::Quad(m) => &m.cell_vertex_ids(cell),
        };
        let mean = means[cell];
        let mut alpha = 1.0f64;
        for (k, &v) in vertices.iter().enumerate() {
            let val = q.coeffs()[ids[k]];
            let d = val - mean;
            if d == 0.0 {
                continue;
            }
            let ratio = if d > 0.0 {
                (bounds.q_max[v] - mean) / d
            } else {
                (bounds.q_min[v] - mean) / d
            };
            alpha = alpha.min(ratio.clamp(0.0, 1.0));
        }
        if alpha >= ALPHA_SNAP {
            continue;
        }
        for (k, &id) in ids.iter().enumerate() {
            let _ = k;
            out.coeffs_mut()[id] = mean + alpha * (q.coeffs()[id] - mean);
        }
    }
    out
}

/// The slotted-cylinder / cone / hump arrangement used by the bounded
/// transport benchmark: three bodies of radius 0.15 on the unit square,
/// background zero.
pub fn slotted_cylinder_cone_hump(x: f64, z: f64) -> f64 {
    let r0 = 0.15;
    let dist = |cx: f64, cz: f64| ((x - cx).powi(2) + (z - cz).powi(2)).sqrt();
    // slotted cylinder at (0.5, 0.75): unit value, slot of width 0.05
    // cut from the bottom edge up to z = 0.85
    let d = dist(0.5, 0.75);
    if d <= r0 && !((x - 0.5).abs() < 0.025 && z < 0.85) {
        return 1.0;
    }
    // cone at (0.5, 0.25)
    let d = dist(0.5, 0.25);
    if d <= r0 {
        return 1.0 - d / r0;
    }
    // cosine hump at (0.25, 0.5)
    let d = dist(0.25, 0.5);
    if d <= r0 {
        return 0.25 * (1.0 + (std::f64::consts::PI * d / r0).cos());
    }
    0.0
}
