//! Procedural test shapes.
//!
//! These generators back the unit tests, the acceptance corpus, and the
//! `stats --demo` corpus of the CLI. Everything is deterministic; soups take
//! an explicit seed. Shapes are emitted in their natural units and are meant
//! to go through `normalize_to_unit_cube` before remeshing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mesh::{Provenance, TriangleMesh};
use crate::Vec3;

fn build(positions: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> TriangleMesh {
    TriangleMesh {
        positions,
        triangles,
        provenance: Provenance::default(),
    }
}

/// Axis-aligned cube spanning `[-half, half]^3`, 12 triangles, CCW outward.
pub fn cube(half: f64) -> TriangleMesh {
    let s = half;
    let positions = vec![
        Vec3::new(-s, -s, -s), // 0
        Vec3::new(s, -s, -s),  // 1
        Vec3::new(s, s, -s),   // 2
        Vec3::new(-s, s, -s),  // 3
        Vec3::new(-s, -s, s),  // 4
        Vec3::new(s, -s, s),   // 5
        Vec3::new(s, s, s),    // 6
        Vec3::new(-s, s, s),   // 7
    ];
    let triangles = vec![
        [0, 2, 1],
        [0, 3, 2], // z = -s
        [4, 5, 6],
        [4, 6, 7], // z = +s
        [0, 1, 5],
        [0, 5, 4], // y = -s
        [2, 3, 7],
        [2, 7, 6], // y = +s
        [1, 2, 6],
        [1, 6, 5], // x = +s
        [0, 4, 7],
        [0, 7, 3], // x = -s
    ];
    build(positions, triangles)
}

/// Box spanning `[lo, hi]` per axis.
pub fn cuboid(lo: Vec3, hi: Vec3) -> TriangleMesh {
    let mut m = cube(0.5);
    for p in &mut m.positions {
        for a in 0..3 {
            p[a] = if p[a] < 0.0 { lo[a] } else { hi[a] };
        }
    }
    m
}

/// Regular tetrahedron with vertices on alternating cube corners.
pub fn tetrahedron(scale: f64) -> TriangleMesh {
    let s = scale;
    let positions = vec![
        Vec3::new(s, s, s),
        Vec3::new(s, -s, -s),
        Vec3::new(-s, s, -s),
        Vec3::new(-s, -s, s),
    ];
    let triangles = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    build(positions, triangles)
}

/// Regular octahedron.
pub fn octahedron(scale: f64) -> TriangleMesh {
    let s = scale;
    let positions = vec![
        Vec3::new(s, 0.0, 0.0),
        Vec3::new(-s, 0.0, 0.0),
        Vec3::new(0.0, s, 0.0),
        Vec3::new(0.0, -s, 0.0),
        Vec3::new(0.0, 0.0, s),
        Vec3::new(0.0, 0.0, -s),
    ];
    let triangles = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    build(positions, triangles)
}

/// Icosphere: subdivided icosahedron projected to radius `r`.
/// `level` 0 is the raw icosahedron (20 triangles); each level quadruples.
pub fn icosphere(r: f64, level: u32) -> TriangleMesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut positions = vec![
        Vec3::new(-1.0, phi, 0.0),
        Vec3::new(1.0, phi, 0.0),
        Vec3::new(-1.0, -phi, 0.0),
        Vec3::new(1.0, -phi, 0.0),
        Vec3::new(0.0, -1.0, phi),
        Vec3::new(0.0, 1.0, phi),
        Vec3::new(0.0, -1.0, -phi),
        Vec3::new(0.0, 1.0, -phi),
        Vec3::new(phi, 0.0, -1.0),
        Vec3::new(phi, 0.0, 1.0),
        Vec3::new(-phi, 0.0, -1.0),
        Vec3::new(-phi, 0.0, 1.0),
    ];
    let mut triangles: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoint: std::collections::HashMap<(u32, u32), u32> =
            std::collections::HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for tri in &triangles {
            let mut mids = [0u32; 3];
            for e in 0..3 {
                let a = tri[e];
                let b = tri[(e + 1) % 3];
                let key = (a.min(b), a.max(b));
                mids[e] = *midpoint.entry(key).or_insert_with(|| {
                    let m = (positions[a as usize] + positions[b as usize]) * 0.5;
                    positions.push(m);
                    (positions.len() - 1) as u32
                });
            }
            next.push([tri[0], mids[0], mids[2]]);
            next.push([tri[1], mids[1], mids[0]]);
            next.push([tri[2], mids[2], mids[1]]);
            next.push([mids[0], mids[1], mids[2]]);
        }
        triangles = next;
    }
    for p in &mut positions {
        *p = p.normalize() * r;
    }
    build(positions, triangles)
}

/// UV torus around the z axis.
pub fn torus(major: f64, minor: f64, seg_major: u32, seg_minor: u32) -> TriangleMesh {
    let mut positions = Vec::new();
    for i in 0..seg_major {
        let u = i as f64 / seg_major as f64 * std::f64::consts::TAU;
        for j in 0..seg_minor {
            let v = j as f64 / seg_minor as f64 * std::f64::consts::TAU;
            let ring = major + minor * v.cos();
            positions.push(Vec3::new(ring * u.cos(), ring * u.sin(), minor * v.sin()));
        }
    }
    let mut triangles = Vec::new();
    for i in 0..seg_major {
        for j in 0..seg_minor {
            let a = i * seg_minor + j;
            let b = ((i + 1) % seg_major) * seg_minor + j;
            let c = ((i + 1) % seg_major) * seg_minor + (j + 1) % seg_minor;
            let d = i * seg_minor + (j + 1) % seg_minor;
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    build(positions, triangles)
}

/// Closed cylinder along z with triangle-fan caps.
pub fn cylinder(radius: f64, half_height: f64, segments: u32) -> TriangleMesh {
    let mut positions = Vec::new();
    for &z in &[-half_height, half_height] {
        for i in 0..segments {
            let a = i as f64 / segments as f64 * std::f64::consts::TAU;
            positions.push(Vec3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let bot_center = positions.len() as u32;
    positions.push(Vec3::new(0.0, 0.0, -half_height));
    let top_center = positions.len() as u32;
    positions.push(Vec3::new(0.0, 0.0, half_height));
    let mut triangles = Vec::new();
    for i in 0..segments {
        let j = (i + 1) % segments;
        let (b0, b1) = (i, j);
        let (t0, t1) = (segments + i, segments + j);
        triangles.push([b0, b1, t1]);
        triangles.push([b0, t1, t0]);
        triangles.push([bot_center, b1, b0]);
        triangles.push([top_center, t0, t1]);
    }
    build(positions, triangles)
}

/// Closed cone (apex up) with a fan cap; the apex is a deliberate stress
/// case for nearest-point queries.
pub fn cone(radius: f64, height: f64, segments: u32) -> TriangleMesh {
    let mut positions = Vec::new();
    for i in 0..segments {
        let a = i as f64 / segments as f64 * std::f64::consts::TAU;
        positions.push(Vec3::new(radius * a.cos(), radius * a.sin(), 0.0));
    }
    let apex = positions.len() as u32;
    positions.push(Vec3::new(0.0, 0.0, height));
    let base = positions.len() as u32;
    positions.push(Vec3::new(0.0, 0.0, 0.0));
    let mut triangles = Vec::new();
    for i in 0..segments {
        let j = (i + 1) % segments;
        triangles.push([i, j, apex]);
        triangles.push([base, j, i]);
    }
    build(positions, triangles)
}

/// Closed L-shaped prism (six-sided cross section extruded along z).
pub fn l_prism(size: f64, thickness: f64, half_depth: f64) -> TriangleMesh {
    // L cross-section, CCW in the xy plane.
    let s = size;
    let t = thickness;
    let profile = [
        (0.0, 0.0),
        (s, 0.0),
        (s, t),
        (t, t),
        (t, s),
        (0.0, s),
    ];
    let n = profile.len() as u32;
    let mut positions = Vec::new();
    for &z in &[-half_depth, half_depth] {
        for &(x, y) in &profile {
            positions.push(Vec3::new(x, y, z));
        }
    }
    let mut triangles = Vec::new();
    // Sides.
    for i in 0..n {
        let j = (i + 1) % n;
        triangles.push([i, j, n + j]);
        triangles.push([i, n + j, n + i]);
    }
    // Caps: the L splits into two convex quads [0,1,2,3] and [0,3,4,5].
    let quads = [[0u32, 1, 2, 3], [0, 3, 4, 5]];
    for q in quads {
        // Bottom cap faces -z: clockwise in xy.
        triangles.push([q[0], q[2], q[1]]);
        triangles.push([q[0], q[3], q[2]]);
        // Top cap faces +z.
        triangles.push([n + q[0], n + q[1], n + q[2]]);
        triangles.push([n + q[0], n + q[2], n + q[3]]);
    }
    build(positions, triangles)
}

/// Square prism along z with selected vertical creases chamfered by `w`.
/// Chamfer seams lie on the original faces, so only the crease itself is
/// displaced. Used for sharp-metric degradation families.
pub fn chamfered_prism(s: f64, half_len: f64, w: f64, chamfer: [bool; 4]) -> TriangleMesh {
    // CCW cross-section corners.
    let corners = [(s, s), (-s, s), (-s, -s), (s, -s)];
    let mut profile: Vec<(f64, f64)> = Vec::new();
    for (c, &(x, y)) in corners.iter().enumerate() {
        if chamfer[c] {
            // Two points trimming the corner, in CCW walking order: even
            // corners are entered along the x = +-s edge, odd corners along
            // the y = +-s edge.
            let (sx, sy) = (x.signum(), y.signum());
            let in_x = (x - sx * w, y);
            let in_y = (x, y - sy * w);
            if c % 2 == 0 {
                profile.push(in_y);
                profile.push(in_x);
            } else {
                profile.push(in_x);
                profile.push(in_y);
            }
        } else {
            profile.push((x, y));
        }
    }
    let n = profile.len() as u32;
    let mut positions = Vec::new();
    for &z in &[-half_len, half_len] {
        for &(x, y) in &profile {
            positions.push(Vec3::new(x, y, z));
        }
    }
    let mut triangles = Vec::new();
    for i in 0..n {
        let j = (i + 1) % n;
        triangles.push([i, j, n + j]);
        triangles.push([i, n + j, n + i]);
    }
    for k in 1..n - 1 {
        // Bottom cap faces -z, top faces +z; the profile is convex.
        triangles.push([0, k + 1, k]);
        triangles.push([n, n + k, n + k + 1]);
    }
    build(positions, triangles)
}

/// Open rectangular patch in the z=0 plane, `nx` by `ny` quads.
pub fn open_patch(half_x: f64, half_y: f64, nx: u32, ny: u32) -> TriangleMesh {
    let mut positions = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let x = -half_x + 2.0 * half_x * i as f64 / nx as f64;
            let y = -half_y + 2.0 * half_y * j as f64 / ny as f64;
            positions.push(Vec3::new(x, y, 0.0));
        }
    }
    let mut triangles = Vec::new();
    let stride = nx + 1;
    for j in 0..ny {
        for i in 0..nx {
            let a = j * stride + i;
            let b = a + 1;
            let c = a + stride + 1;
            let d = a + stride;
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    build(positions, triangles)
}

/// Two concentric icospheres; the inner shell bounds a cavity that solid
/// classification is expected to delete.
pub fn two_shells(outer: f64, inner: f64, level: u32) -> TriangleMesh {
    merge(&[icosphere(outer, level), icosphere(inner, level)])
}

/// Three rectangles sharing one common edge; classic non-manifold fixture.
pub fn non_manifold_fan() -> TriangleMesh {
    let positions = vec![
        Vec3::new(0.0, 0.0, -0.5),
        Vec3::new(0.0, 0.0, 0.5),
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(-0.5, 0.866, 0.0),
        Vec3::new(-0.5, -0.866, 0.0),
    ];
    let triangles = vec![[0, 1, 2], [0, 1, 3], [0, 1, 4]];
    build(positions, triangles)
}

/// Open "tent": two rectangles meeting at a ridge with the given opening
/// angle (degrees). The ridge is the only interior edge.
pub fn tent(angle_deg: f64, half_len: f64, slope: f64) -> TriangleMesh {
    let half_angle = angle_deg.to_radians() / 2.0;
    let dx = slope * half_angle.sin();
    let dz = -slope * half_angle.cos();
    let positions = vec![
        Vec3::new(0.0, -half_len, 0.0),
        Vec3::new(0.0, half_len, 0.0),
        Vec3::new(dx, -half_len, dz),
        Vec3::new(dx, half_len, dz),
        Vec3::new(-dx, -half_len, dz),
        Vec3::new(-dx, half_len, dz),
    ];
    let triangles = vec![[0, 1, 3], [0, 3, 2], [0, 5, 1], [0, 4, 5]];
    build(positions, triangles)
}

/// Random triangle soup inside `[-1, 1]^3` with edge lengths around
/// `max_edge`; deterministic per seed.
pub fn random_soup(count: usize, max_edge: f64, seed: u64) -> TriangleMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(count * 3);
    let mut triangles = Vec::with_capacity(count);
    for t in 0..count {
        let center = Vec3::new(
            rng.gen_range(-0.8..0.8),
            rng.gen_range(-0.8..0.8),
            rng.gen_range(-0.8..0.8),
        );
        for _ in 0..3 {
            let off = Vec3::new(
                rng.gen_range(-max_edge..max_edge),
                rng.gen_range(-max_edge..max_edge),
                rng.gen_range(-max_edge..max_edge),
            );
            positions.push(center + off);
        }
        let base = (t * 3) as u32;
        triangles.push([base, base + 1, base + 2]);
    }
    build(positions, triangles)
}

/// Concatenate meshes into a single soup (no welding).
pub fn merge(meshes: &[TriangleMesh]) -> TriangleMesh {
    let mut positions = Vec::new();
    let mut triangles = Vec::new();
    for m in meshes {
        let base = positions.len() as u32;
        positions.extend_from_slice(&m.positions);
        triangles.extend(m.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
    }
    build(positions, triangles)
}

/// Apply a rotation (degrees around x, y, z in sequence) to a mesh.
pub fn rotated(mesh: &TriangleMesh, deg: [f64; 3]) -> TriangleMesh {
    let rot = nalgebra::Rotation3::from_euler_angles(
        deg[0].to_radians(),
        deg[1].to_radians(),
        deg[2].to_radians(),
    );
    let mut out = mesh.clone();
    for p in &mut out.positions {
        *p = rot * *p;
    }
    out
}

/// Icosphere with radial vertex noise of amplitude `amp` (still closed).
pub fn noisy_sphere(r: f64, level: u32, amp: f64, seed: u64) -> TriangleMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = icosphere(r, level);
    for p in &mut m.positions {
        let d = p.normalize();
        *p += d * rng.gen_range(-amp..amp);
    }
    m
}

/// The named corpus used by the manifold-guarantee acceptance run: at least
/// 30 shapes covering closed solids, open sheets, soups, nested shells, and
/// non-manifold inputs.
pub fn corpus() -> Vec<(String, TriangleMesh)> {
    let mut shapes: Vec<(String, TriangleMesh)> = Vec::new();
    let mut add = |name: &str, m: TriangleMesh| shapes.push((name.to_string(), m));

    add("cube", cube(1.0));
    add("cube-rot-30-20-10", rotated(&cube(1.0), [30.0, 20.0, 10.0]));
    add("cube-rot-45-45-0", rotated(&cube(1.0), [45.0, 45.0, 0.0]));
    add("tetrahedron", tetrahedron(1.0));
    add("octahedron", octahedron(1.0));
    add("icosahedron", icosphere(1.0, 0));
    add("sphere-2", icosphere(1.0, 2));
    add("sphere-3", icosphere(1.0, 3));
    add("noisy-sphere", noisy_sphere(1.0, 3, 0.03, 7));
    add("torus", torus(0.5, 0.2, 48, 24));
    add("torus-thick", torus(0.45, 0.28, 40, 20));
    add("cylinder", cylinder(0.6, 0.8, 24));
    add("cone", cone(0.7, 1.4, 24));
    add(
        "bicone",
        merge(&[cone(0.7, 1.0, 20), {
            let mut c = cone(0.7, 1.0, 20);
            for p in &mut c.positions {
                p.z = -p.z;
            }
            // Mirroring flips orientation; the pipeline must not care.
            c
        }]),
    );
    add("l-prism", l_prism(1.0, 0.4, 0.6));
    add(
        "l-soup",
        merge(&[
            cuboid(Vec3::new(-1.0, -1.0, -0.4), Vec3::new(1.0, -0.2, 0.4)),
            cuboid(Vec3::new(-1.0, -1.0, -0.4), Vec3::new(-0.2, 1.0, 0.4)),
        ]),
    );
    add(
        "ring-of-boxes",
        merge(&[
            cuboid(Vec3::new(-1.0, -1.0, -0.2), Vec3::new(1.0, -0.6, 0.2)),
            cuboid(Vec3::new(-1.0, 0.6, -0.2), Vec3::new(1.0, 1.0, 0.2)),
            cuboid(Vec3::new(-1.0, -1.0, -0.2), Vec3::new(-0.6, 1.0, 0.2)),
            cuboid(Vec3::new(0.6, -1.0, -0.2), Vec3::new(1.0, 1.0, 0.2)),
        ]),
    );
    add(
        "staircase",
        merge(&[
            cuboid(Vec3::new(-0.9, -0.9, -0.9), Vec3::new(0.9, -0.3, -0.3)),
            cuboid(Vec3::new(-0.9, -0.9, -0.9), Vec3::new(0.3, 0.3, 0.3)),
            cuboid(Vec3::new(-0.9, -0.9, -0.9), Vec3::new(-0.3, 0.9, 0.9)),
        ]),
    );
    add("thin-plate", cuboid(Vec3::new(-0.9, -0.9, -0.02), Vec3::new(0.9, 0.9, 0.02)));
    add("open-patch", open_patch(0.8, 0.8, 8, 8));
    add("open-patch-coarse", open_patch(0.9, 0.5, 2, 2));
    add(
        "open-box",
        {
            // Cube shell with the +z face removed.
            let c = cube(1.0);
            let triangles = c
                .triangles
                .iter()
                .copied()
                .filter(|t| !t.iter().all(|&i| c.positions[i as usize].z > 0.0))
                .collect();
            TriangleMesh {
                positions: c.positions.clone(),
                triangles,
                provenance: Provenance::default(),
            }
        },
    );
    add("two-shells", two_shells(1.0, 0.55, 3));
    add("two-shells-coarse", two_shells(1.0, 0.5, 2));
    add(
        "disjoint-spheres",
        merge(&[icosphere(0.5, 2), {
            let mut s = icosphere(0.4, 2);
            for p in &mut s.positions {
                *p += Vec3::new(1.4, 0.0, 0.0);
            }
            s
        }]),
    );
    add(
        "sphere-cube-soup",
        merge(&[icosphere(0.8, 2), cube(0.6)]),
    );
    add("non-manifold-fan", non_manifold_fan());
    add(
        "cube-with-fin",
        merge(&[cube(0.8), {
            // Dangling zero-volume fin sticking out of the +x face.
            build(
                vec![
                    Vec3::new(0.8, -0.3, 0.0),
                    Vec3::new(0.8, 0.3, 0.0),
                    Vec3::new(1.3, 0.0, 0.0),
                ],
                vec![[0, 1, 2]],
            )
        }]),
    );
    add("soup-500-a", random_soup(500, 0.25, 1));
    add("soup-500-b", random_soup(500, 0.25, 2));
    add("soup-200", random_soup(200, 0.4, 3));
    add("tent-60", tent(60.0, 0.8, 0.8));
    add("tetra-soup", {
        let mut parts = Vec::new();
        for s in 0..5u64 {
            let mut t = rotated(&tetrahedron(0.5), [s as f64 * 31.0, s as f64 * 17.0, 0.0]);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + s);
            let off = Vec3::new(
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            );
            for p in &mut t.positions {
                *p += off;
            }
            parts.push(t);
        }
        merge(&parts)
    });

    assert!(shapes.len() >= 30, "corpus must stay at 30+ shapes");
    shapes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::check_watertight_manifold;

    #[test]
    fn closed_fixtures_are_watertight() {
        for (name, m) in [
            ("cube", cube(1.0)),
            ("tet", tetrahedron(1.0)),
            ("octa", octahedron(1.0)),
            ("ico2", icosphere(1.0, 2)),
            ("torus", torus(0.5, 0.2, 24, 12)),
            ("cylinder", cylinder(0.6, 0.8, 16)),
            ("cone", cone(0.7, 1.4, 16)),
            ("l-prism", l_prism(1.0, 0.4, 0.6)),
        ] {
            let r = check_watertight_manifold(&m);
            assert!(
                r.edge_manifold && r.closed && r.oriented,
                "{name}: {r:?}"
            );
        }
    }

    #[test]
    fn euler_characteristics() {
        assert_eq!(check_watertight_manifold(&cube(1.0)).euler_characteristic, 2);
        assert_eq!(
            check_watertight_manifold(&torus(0.5, 0.2, 24, 12)).euler_characteristic,
            0
        );
        assert_eq!(
            check_watertight_manifold(&icosphere(1.0, 3)).euler_characteristic,
            2
        );
    }

    #[test]
    fn corpus_has_30_shapes() {
        let c = corpus();
        assert!(c.len() >= 30);
        for (name, m) in &c {
            assert!(!m.is_empty(), "{name} empty");
        }
    }

    #[test]
    fn tent_has_one_interior_edge() {
        let t = tent(60.0, 0.8, 0.8);
        let r = check_watertight_manifold(&t);
        assert!(r.edge_manifold && !r.closed && r.oriented);
    }
}
