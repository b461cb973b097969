use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::Vector3;
use rayon::prelude::*;

use super::tsdf::{local_index, split_voxel, TsdfVolume, BLOCK};
use super::TriangleMesh;

/// Corner `i` sits at offset `(i & 1, (i >> 1) & 1, (i >> 2) & 1)`.
const CORNERS: [[i32; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

/// Face corner cycles, counter-clockwise seen from outside the cube.
const FACES: [[usize; 4]; 6] = [[0, 4, 6, 2], [1, 3, 7, 5], [0, 1, 5, 4], [2, 6, 7, 3], [0, 2, 3, 1], [4, 5, 7, 6]];

const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

fn edge_id(a: usize, b: usize) -> usize {
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    EDGES.iter().position(|&e| e == (a, b)).expect("cube edge")
}

/// Triangles (as edge triples) for each of the 256 sign configurations.
///
/// On every face the crossing from a non-negative to a negative corner starts
/// a segment that ends at the next crossing back, so negative corners are
/// never joined across a face diagonal. Segments are chained into loops and
/// fanned into triangles facing the non-negative side.
fn case_table() -> &'static [Vec<[usize; 3]>; 256] {
    static TABLE: OnceLock<[Vec<[usize; 3]>; 256]> = OnceLock::new();
    TABLE.get_or_init(|| std::array::from_fn(build_case))
}

fn build_case(case: usize) -> Vec<[usize; 3]> {
    let neg = |c: usize| case >> c & 1 == 1;
    let mut next: HashMap<usize, usize> = HashMap::new();
    for face in FACES {
        for k in 0..4 {
            let (a, b) = (face[k], face[(k + 1) % 4]);
            if neg(a) || !neg(b) {
                continue;
            }
            // walk the negative run to where it leaves
            let mut m = (k + 1) % 4;
            while neg(face[(m + 1) % 4]) {
                m = (m + 1) % 4;
            }
            let out = edge_id(face[m], face[(m + 1) % 4]);
            next.insert(edge_id(a, b), out);
        }
    }
    let mut tris = Vec::new();
    let mut starts: Vec<usize> = next.keys().copied().collect();
    starts.sort();
    let mut used = [false; 12];
    for s in starts {
        if used[s] {
            continue;
        }
        let mut ring = vec![s];
        used[s] = true;
        let mut e = next[&s];
        while e != s {
            used[e] = true;
            ring.push(e);
            e = next[&e];
        }
        for i in 1..ring.len() - 1 {
            tris.push([ring[0], ring[i], ring[i + 1]]);
        }
    }
    tris
}

/// Voxel values gathered for one cube, looked up across block borders.
fn cube_values(vol: &TsdfVolume, base: [i32; 3], own: &super::tsdf::Block, key: [i32; 3]) -> Option<[f64; 8]> {
    let mut out = [0.0; 8];
    for (i, c) in CORNERS.iter().enumerate() {
        let v = [base[0] + c[0], base[1] + c[1], base[2] + c[2]];
        let (b, l) = split_voxel(v);
        let blk = if b == key { own } else { vol.blocks.get(&b)? };
        let idx = local_index(l);
        if blk.weight[idx] <= 0.0 {
            return None;
        }
        out[i] = blk.tsdf[idx] as f64;
    }
    Some(out)
}

/// Zero level set of the observed part of the volume.
///
/// Only cubes whose eight corners all carry weight are polygonised. Vertices
/// on a shared grid edge are shared, so the result is watertight wherever the
/// observed region is closed. Triangles face the positive (free space) side.
pub fn marching_cubes(vol: &TsdfVolume) -> TriangleMesh {
    let table = case_table();
    let mut keys: Vec<[i32; 3]> = vol.blocks.keys().copied().collect();
    keys.sort();
    type EdgeKey = ([i32; 3], u8);
    let per_block: Vec<Vec<([EdgeKey; 3], [Vector3<f64>; 3])>> = keys
        .par_iter()
        .map(|&key| {
            let own = &vol.blocks[&key];
            let mut out = Vec::new();
            for z in 0..BLOCK {
                for y in 0..BLOCK {
                    for x in 0..BLOCK {
                        let base = [key[0] * BLOCK + x, key[1] * BLOCK + y, key[2] * BLOCK + z];
                        let Some(vals) = cube_values(vol, base, own, key) else { continue };
                        let case = (0..8).fold(0usize, |acc, c| acc | ((vals[c] < 0.0) as usize) << c);
                        if case == 0 || case == 255 {
                            continue;
                        }
                        for tri in &table[case] {
                            let mut ek = [([0; 3], 0u8); 3];
                            let mut pos = [Vector3::zeros(); 3];
                            for (k, &e) in tri.iter().enumerate() {
                                let (a, b) = EDGES[e];
                                let (ca, cb) = (CORNERS[a], CORNERS[b]);
                                let axis = (0..3).find(|&d| ca[d] != cb[d]).unwrap();
                                ek[k] = ([base[0] + ca[0], base[1] + ca[1], base[2] + ca[2]], axis as u8);
                                let t = vals[a] / (vals[a] - vals[b]);
                                let pa = vol.voxel_center(ek[k].0);
                                let mut pb = pa;
                                pb[axis] += vol.voxel_size;
                                pos[k] = pa + (pb - pa) * t;
                            }
                            out.push((ek, pos));
                        }
                    }
                }
            }
            out
        })
        .collect();

    let mut index: HashMap<EdgeKey, u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (ek, pos) in per_block.into_iter().flatten() {
        let mut ids = [0u32; 3];
        for k in 0..3 {
            ids[k] = *index.entry(ek[k]).or_insert_with(|| {
                vertices.push(pos[k]);
                (vertices.len() - 1) as u32
            });
        }
        let area2 = (pos[1] - pos[0]).cross(&(pos[2] - pos[0])).norm_squared();
        if ids[0] != ids[1] && ids[1] != ids[2] && ids[0] != ids[2] && area2 > 0.0 {
            triangles.push(ids);
        }
    }
    TriangleMesh { vertices, triangles }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn sphere_volume(radius: f64, voxel: f64) -> TsdfVolume {
        let mut vol = TsdfVolume::new(Vector3::zeros(), voxel, 5.0);
        let n = (radius / voxel).ceil() as i32 + 3;
        for z in -n..=n {
            for y in -n..=n {
                for x in -n..=n {
                    let p = vol.voxel_center([x, y, z]);
                    let sdf = ((p.norm() - radius) / vol.truncation).clamp(-1.0, 1.0);
                    vol.set([x, y, z], sdf as f32, 1.0);
                }
            }
        }
        vol
    }

    fn is_closed(mesh: &TriangleMesh) -> bool {
        let mut edges: HashMap<(u32, u32), i32> = HashMap::new();
        for t in &mesh.triangles {
            for k in 0..3 {
                *edges.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        edges.iter().all(|(&(a, b), &n)| n == 1 && edges.get(&(b, a)) == Some(&1))
    }

    #[test]
    fn case_table_shape() {
        for case in 0..256 {
            assert_eq!(build_case(case).is_empty(), case == 0 || case == 255, "case {case}");
        }
        // complements cross the same edges, though ambiguous faces join differently
        let edges = |c: usize| {
            let mut e: Vec<usize> = build_case(c).into_iter().flatten().collect();
            e.sort();
            e.dedup();
            e
        };
        for case in 0..256 {
            assert_eq!(edges(case), edges(255 - case), "case {case}");
        }
    }

    #[test]
    fn sphere_is_closed_and_accurate() {
        let r = 0.5;
        let voxel = 0.04;
        let mesh = marching_cubes(&sphere_volume(r, voxel));
        assert!(!mesh.triangles.is_empty());
        assert!(is_closed(&mesh));
        for v in &mesh.vertices {
            assert!((v.norm() - r).abs() <= voxel / 2.0);
        }
        let area = mesh.area();
        let exact = 4.0 * std::f64::consts::PI * r * r;
        assert!((area - exact).abs() / exact < 0.05, "area {area} vs {exact}");
        let vol = mesh.signed_volume();
        let exact_v = 4.0 / 3.0 * std::f64::consts::PI * r.powi(3);
        assert!(vol > 0.0 && (vol - exact_v).abs() / exact_v < 0.05);
    }

    #[test]
    fn constant_volume_is_empty() {
        let mut vol = TsdfVolume::new(Vector3::zeros(), 0.1, 5.0);
        for i in 0..10 {
            for j in 0..10 {
                for k in 0..10 {
                    vol.set([i, j, k], 0.7, 1.0);
                }
            }
        }
        assert!(marching_cubes(&vol).triangles.is_empty());
    }

    #[test]
    fn single_negative_voxel_gives_closed_blob() {
        let mut vol = TsdfVolume::new(Vector3::zeros(), 0.1, 5.0);
        for i in -2..=2 {
            for j in -2..=2 {
                for k in -2..=2 {
                    vol.set([i, j, k], 1.0, 1.0);
                }
            }
        }
        vol.set([0, 0, 0], -1.0, 1.0);
        let mesh = marching_cubes(&vol);
        assert_eq!(mesh.triangles.len(), 8);
        assert!(is_closed(&mesh));
        assert!(mesh.signed_volume() > 0.0);
    }

    #[test]
    fn unobserved_cubes_are_skipped() {
        let mut vol = sphere_volume(0.5, 0.05);
        let full = marching_cubes(&vol).triangles.len();
        for z in -20..=20 {
            for y in -20..=20 {
                for x in 0..=20 {
                    if vol.get([x, y, z]).is_some() {
                        vol.set([x, y, z], 1.0, 0.0);
                    }
                }
            }
        }
        let half = marching_cubes(&vol).triangles.len();
        assert!(half > 0 && half < full);
    }
}
