use mrf_core::manifolds::{
    densify_mesh, fibonacci_sphere, read_obj, sample_surface, torus_mesh, transfer_field, vertex_normals, write_obj,
    FacePolicy, Mesh, SurfaceSpec, Vec3,
};
use proptest::prelude::*;

fn dist(a: &Vec3, b: &Vec3) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn fibonacci_sphere_is_near_uniform() {
    for n in [100, 500, 2000] {
        let pts = fibonacci_sphere(n);
        for p in &pts {
            assert!((dist(p, &[0.0; 3]) - 1.0).abs() < 1e-12);
        }
        let nn: Vec<f64> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| dist(&pts[i], &pts[j]))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let ratio = nn.iter().cloned().fold(0.0, f64::max) / nn.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(ratio < 2.0, "n={n} ratio {ratio}");
    }
}

#[test]
fn samplers_stay_on_their_surfaces() {
    let specs = [
        SurfaceSpec::sphere(),
        SurfaceSpec::ellipsoid(1.0, 1.3, 0.7),
        SurfaceSpec::torus(1.0, 0.35),
        SurfaceSpec::mobius(1.0),
    ];
    for spec in &specs {
        let cloud = sample_surface(spec, 1500).unwrap();
        for p in cloud.iter() {
            assert!(spec.residual(p) < 1e-10, "{spec:?}");
        }
    }
    let e = sample_surface(&SurfaceSpec::ellipsoid(1.0, 1.3, 0.7), 4000).unwrap();
    assert_eq!(e.len(), 4000);
    for p in e.iter() {
        let r = (p[0] / 1.0).powi(2) + (p[1] / 1.3).powi(2) + (p[2] / 0.7).powi(2);
        assert!((r - 1.0).abs() < 1e-12);
    }
}

fn two_triangles() -> Mesh {
    // areas 3 : 1
    let v = vec![[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [10.0, 0.0, 0.0], [11.0, 0.0, 0.0], [10.0, 2.0, 0.0]];
    Mesh::new(v, vec![[0, 1, 2], [3, 4, 5]]).unwrap().0
}

#[test]
fn face_selection_follows_area() {
    let mesh = two_triangles();
    let cloud = densify_mesh(&mesh, 6 + 40_000, 17).unwrap();
    let first = cloud.provenance.iter().filter(|p| p.face == 0).count() as f64 / 40_000.0;
    assert!((first - 0.75).abs() < 0.01, "{first}");
}

#[test]
fn face_counts_pass_chi_square() {
    // ten faces of a coarse torus, unequal areas
    let mesh = torus_mesh(5, 3, 2.0, 1.0).unwrap();
    let faces: Vec<[usize; 3]> = mesh.faces[..10].to_vec();
    let sub = Mesh::new(mesh.vertices.clone(), faces).unwrap().0;
    let areas = sub.face_areas();
    let total: f64 = areas.iter().sum();
    let samples = 100_000;
    let cloud = densify_mesh(&sub, sub.num_vertices() + samples, 23).unwrap();
    let mut counts = [0usize; 10];
    for p in &cloud.provenance {
        counts[p.face] += 1;
    }
    let chi2: f64 = counts
        .iter()
        .zip(&areas)
        .map(|(&c, a)| {
            let e = samples as f64 * a / total;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    // 99th percentile of chi-square with 9 degrees of freedom
    assert!(chi2 < 21.666, "chi2 {chi2}");
}

#[test]
fn barycentric_samples_lie_inside_faces() {
    let mesh = torus_mesh(8, 6, 2.0, 0.7).unwrap();
    let cloud = densify_mesh(&mesh, 2000, 3).unwrap();
    assert_eq!(&cloud.points[..mesh.num_vertices()], mesh.vertices.as_slice());
    for (k, p) in cloud.provenance.iter().enumerate() {
        assert!(p.barycentric.iter().all(|b| *b >= 0.0));
        assert!((p.barycentric.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut q = [0.0; 3];
        for (b, &v) in p.barycentric.iter().zip(&p.vertices) {
            for c in 0..3 {
                q[c] += b * mesh.vertices[v][c];
            }
        }
        assert!(dist(&q, &cloud.points[mesh.num_vertices() + k]) < 1e-12);
    }
}

#[test]
fn obj_roundtrip_keeps_geometry() {
    let mesh = torus_mesh(6, 4, 2.0, 0.5).unwrap();
    let mut buf = Vec::new();
    write_obj(&mut buf, &mesh).unwrap();
    let (back, stats) = read_obj(buf.as_slice(), FacePolicy::Reject).unwrap();
    assert_eq!(stats.dropped_degenerate, 0);
    assert_eq!(back.faces, mesh.faces);
    for (a, b) in back.vertices.iter().zip(&mesh.vertices) {
        assert!(dist(a, b) < 1e-12);
    }
}

#[test]
fn torus_normals_point_away_from_the_core() {
    let (major, minor) = (2.0, 0.6);
    let mesh = torus_mesh(40, 20, major, minor).unwrap();
    let n = vertex_normals(&mesh);
    assert!(n.isolated.is_empty());
    for (p, nv) in mesh.vertices.iter().zip(&n.normals) {
        let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
        let core = [p[0] * major / rho, p[1] * major / rho, 0.0];
        let radial = [(p[0] - core[0]) / minor, (p[1] - core[1]) / minor, p[2] / minor];
        let cos: f64 = (0..3).map(|k| radial[k] * nv[k]).sum();
        assert!(cos.abs() > 0.98, "cos {cos}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn transfer_is_exact_on_linear_fields(a in prop::array::uniform9(-2.0f64..2.0), seed in 0u64..100) {
        let mesh = torus_mesh(7, 5, 1.5, 0.5).unwrap();
        let lin = |p: &Vec3| -> Vec3 {
            [
                a[0] * p[0] + a[1] * p[1] + a[2] * p[2],
                a[3] * p[0] + a[4] * p[1] + a[5] * p[2],
                a[6] * p[0] + a[7] * p[1] + a[8] * p[2],
            ]
        };
        let field: Vec<Vec3> = mesh.vertices.iter().map(lin).collect();
        let cloud = densify_mesh(&mesh, 300, seed).unwrap();
        let moved = transfer_field(&cloud, &field).unwrap();
        for (p, v) in cloud.points.iter().zip(&moved) {
            let want = lin(p);
            for k in 0..3 {
                prop_assert!((v[k] - want[k]).abs() < 1e-12);
            }
        }
    }
}
