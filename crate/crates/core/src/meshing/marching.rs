//! Marching cubes over the TSDF zero level set.
//!
//! The 256-entry case table is generated once at startup by tracing the
//! intersection polygons of each sign configuration across the cube faces.
//! Ambiguous faces (alternating corner signs) are always resolved by cutting
//! each inside corner off individually; the rule depends only on the face's
//! own corner signs, so adjacent cubes agree and the extracted surface is
//! closed wherever the level set stays inside the known region.

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::Vector3;

use crate::num::Real;

use super::{Mesh, TsdfVolume};

/// Corner k at (x + CORNER[k].0, y + CORNER[k].1, z + CORNER[k].2).
const CORNERS: [(u32, u32, u32); 8] = [
    (0, 0, 0),
    (1, 0, 0),
    (1, 1, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 0, 1),
    (1, 1, 1),
    (0, 1, 1),
];

/// Edge k connects CORNERS[EDGES[k].0] and CORNERS[EDGES[k].1].
const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// The six faces as corner quads in cyclic order.
const FACES: [[usize; 4]; 6] = [
    [0, 1, 2, 3], // z = 0
    [4, 5, 6, 7], // z = 1
    [0, 1, 5, 4], // y = 0
    [3, 2, 6, 7], // y = 1
    [0, 3, 7, 4], // x = 0
    [1, 2, 6, 5], // x = 1
];

fn edge_between(a: usize, b: usize) -> usize {
    EDGES
        .iter()
        .position(|&(p, q)| (p == a && q == b) || (p == b && q == a))
        .expect("face corners are edge-adjacent")
}

/// Triangles (as edge-index triples) for every corner-sign configuration.
/// Bit k of the case index set = corner k inside (value < 0).
fn case_table() -> &'static Vec<Vec<[usize; 3]>> {
    static TABLE: OnceLock<Vec<Vec<[usize; 3]>>> = OnceLock::new();
    TABLE.get_or_init(|| (0..256).map(build_case).collect())
}

fn build_case(config: usize) -> Vec<[usize; 3]> {
    let inside = |corner: usize| config & (1 << corner) != 0;
    let crossing = |edge: usize| inside(EDGES[edge].0) != inside(EDGES[edge].1);

    // Pair crossing edges on each face.
    let mut links: Vec<Vec<usize>> = vec![Vec::new(); 12];
    for face in &FACES {
        let cross: Vec<(usize, usize)> = (0..4)
            .filter_map(|i| {
                let (a, b) = (face[i], face[(i + 1) % 4]);
                let e = edge_between(a, b);
                crossing(e).then_some((i, e))
            })
            .collect();
        match cross.len() {
            0 => {}
            2 => {
                links[cross[0].1].push(cross[1].1);
                links[cross[1].1].push(cross[0].1);
            }
            4 => {
                // Ambiguous face: cut off each inside corner individually.
                // The crossings sit on consecutive face edges; each inside
                // corner is flanked by two of them.
                for i in 0..4 {
                    if inside(face[i]) {
                        let before = edge_between(face[(i + 3) % 4], face[i]);
                        let after = edge_between(face[i], face[(i + 1) % 4]);
                        links[before].push(after);
                        links[after].push(before);
                    }
                }
            }
            _ => unreachable!("a face has 0, 2, or 4 crossings"),
        }
    }

    // Trace disjoint cycles.
    let mut visited = [false; 12];
    let mut triangles = Vec::new();
    for start in 0..12 {
        if visited[start] || links[start].is_empty() {
            continue;
        }
        let mut cycle = vec![start];
        visited[start] = true;
        let mut current = start;
        loop {
            let next = links[current]
                .iter()
                .copied()
                .find(|&e| !visited[e])
                .unwrap_or(start);
            if next == start {
                break;
            }
            visited[next] = true;
            cycle.push(next);
            current = next;
        }
        orient_cycle(config, &mut cycle);
        for i in 1..cycle.len() - 1 {
            triangles.push([cycle[0], cycle[i], cycle[i + 1]]);
        }
    }
    triangles
}

/// Orient a polygon so its normal points from the inside (negative) region
/// toward the outside, judged on edge midpoints of the canonical unit cube.
fn orient_cycle(config: usize, cycle: &mut Vec<usize>) {
    let midpoint = |edge: usize| -> Vector3<f64> {
        let (a, b) = EDGES[edge];
        let pa = Vector3::new(
            CORNERS[a].0 as f64,
            CORNERS[a].1 as f64,
            CORNERS[a].2 as f64,
        );
        let pb = Vector3::new(
            CORNERS[b].0 as f64,
            CORNERS[b].1 as f64,
            CORNERS[b].2 as f64,
        );
        (pa + pb) * 0.5
    };
    let pts: Vec<Vector3<f64>> = cycle.iter().map(|&e| midpoint(e)).collect();
    // Newell normal.
    let mut normal = Vector3::zeros();
    for i in 0..pts.len() {
        let a = pts[i];
        let b = pts[(i + 1) % pts.len()];
        normal.x += (a.y - b.y) * (a.z + b.z);
        normal.y += (a.z - b.z) * (a.x + b.x);
        normal.z += (a.x - b.x) * (a.y + b.y);
    }
    let centroid = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    // Outward reference: from the nearest inside corner through the surface.
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for corner in 0..8 {
        if config & (1 << corner) == 0 {
            continue;
        }
        let p = Vector3::new(
            CORNERS[corner].0 as f64,
            CORNERS[corner].1 as f64,
            CORNERS[corner].2 as f64,
        );
        let d = (centroid - p).norm();
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, centroid - p));
        }
    }
    if let Some((_, outward)) = best {
        if normal.dot(&outward) < 0.0 {
            cycle.reverse();
        }
    }
}

/// Extract the zero level set as a triangle mesh. Cubes touching voxels of
/// zero weight are treated as unknown and produce no faces.
pub fn extract_mesh<T: Real>(vol: &TsdfVolume<T>) -> Mesh<T> {
    let table = case_table();
    let [nx, ny, nz] = vol.dims;
    let mut vertices: Vec<Vector3<T>> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    // Welding key: (axis, x, y, z) of the lattice edge owning the vertex.
    let mut edge_vertex: HashMap<(u8, u32, u32, u32), u32> = HashMap::new();

    let clamp_lo = T::lit(1e-6);
    let clamp_hi = T::one() - T::lit(1e-6);

    for z in 0..nz.saturating_sub(1) {
        for y in 0..ny.saturating_sub(1) {
            for x in 0..nx.saturating_sub(1) {
                let mut config = 0usize;
                let mut values = [T::zero(); 8];
                let mut known = true;
                for (k, &(dx, dy, dz)) in CORNERS.iter().enumerate() {
                    let idx = vol.index(x + dx, y + dy, z + dz);
                    if vol.weight[idx] <= T::zero() {
                        known = false;
                        break;
                    }
                    values[k] = vol.tsdf[idx];
                    if values[k] < T::zero() {
                        config |= 1 << k;
                    }
                }
                if !known || config == 0 || config == 255 {
                    continue;
                }
                for tri in &table[config] {
                    let mut ids = [0u32; 3];
                    for (slot, &edge) in tri.iter().enumerate() {
                        let (ca, cb) = EDGES[edge];
                        let (ax, ay, az) = CORNERS[ca];
                        let (bx, by, bz) = CORNERS[cb];
                        // Lattice-edge key: axis + min corner.
                        let axis = if ax != bx {
                            0u8
                        } else if ay != by {
                            1
                        } else {
                            2
                        };
                        let key = (
                            axis,
                            x + ax.min(bx),
                            y + ay.min(by),
                            z + az.min(bz),
                        );
                        let id = *edge_vertex.entry(key).or_insert_with(|| {
                            let va = values[ca];
                            let vb = values[cb];
                            let t = (va / (va - vb)).max(clamp_lo).min(clamp_hi);
                            let pa = vol.voxel_center(x + ax, y + ay, z + az);
                            let pb = vol.voxel_center(x + bx, y + by, z + bz);
                            vertices.push(pa + (pb - pa) * t);
                            (vertices.len() - 1) as u32
                        });
                        ids[slot] = id;
                    }
                    if ids[0] != ids[1] && ids[1] != ids[2] && ids[0] != ids[2] {
                        faces.push(ids);
                    }
                }
            }
        }
    }
    Mesh::new(vertices, faces)
}
