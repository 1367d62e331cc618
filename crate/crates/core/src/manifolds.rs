//! Surface samplers, triangle meshes, vertex normals and area-weighted
//! densification.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::graph::PointCloud;

pub type Vec3 = [f64; 3];

/// Faces below this area are dropped at load time.
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurfaceKind {
    Sphere,
    Ellipsoid { a: f64, b: f64, c: f64 },
    /// Strip of half-width `width` around the unit centre circle.
    Mobius { width: f64 },
    Torus { major: f64, minor: f64 },
    /// Regular grid on the unit torus `[0, 1)^d`; `n` points per side.
    HypercubeGrid { n: usize, d: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSpec {
    pub kind: SurfaceKind,
}

impl SurfaceSpec {
    pub fn sphere() -> Self {
        Self {
            kind: SurfaceKind::Sphere,
        }
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Self {
        Self {
            kind: SurfaceKind::Ellipsoid { a, b, c },
        }
    }

    pub fn mobius(width: f64) -> Self {
        Self {
            kind: SurfaceKind::Mobius { width },
        }
    }

    pub fn torus(major: f64, minor: f64) -> Self {
        Self {
            kind: SurfaceKind::Torus { major, minor },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be positive, got {v}")))
            }
        };
        match self.kind {
            SurfaceKind::Sphere => Ok(()),
            SurfaceKind::Ellipsoid { a, b, c } => {
                positive("a", a)?;
                positive("b", b)?;
                positive("c", c)
            }
            SurfaceKind::Mobius { width } => {
                positive("width", width)?;
                if width >= 2.0 {
                    return Err(invalid("width", "strip would self-intersect at width >= 2"));
                }
                Ok(())
            }
            SurfaceKind::Torus { major, minor } => {
                positive("major", major)?;
                positive("minor", minor)?;
                if minor >= major {
                    return Err(invalid("minor", "must be smaller than the major radius"));
                }
                Ok(())
            }
            SurfaceKind::HypercubeGrid { n, d } => {
                if n < 3 || d == 0 {
                    return Err(invalid("grid", format!("need n >= 3 and d >= 1, got n={n}, d={d}")));
                }
                Ok(())
            }
        }
    }

    /// Implicit-equation residual of a point; zero on the surface.
    pub fn residual(&self, p: &[f64]) -> f64 {
        match self.kind {
            SurfaceKind::Sphere => (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - 1.0,
            SurfaceKind::Ellipsoid { a, b, c } => {
                (p[0] / a).powi(2) + (p[1] / b).powi(2) + (p[2] / c).powi(2) - 1.0
            }
            SurfaceKind::Torus { major, minor } => {
                let rho = (p[0] * p[0] + p[1] * p[1]).sqrt() - major;
                (rho * rho + p[2] * p[2]).sqrt() - minor
            }
            SurfaceKind::Mobius { width } => {
                // invert the parametrization: u from the azimuth, then v/2 as
                // the coordinate along the ruling direction (cos(u/2), sin(u/2))
                let u = p[1].atan2(p[0]);
                let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
                let v = 2.0 * ((rho - 1.0) * (0.5 * u).cos() + p[2] * (0.5 * u).sin());
                let q = mobius_point(u, v);
                let off = q.iter().zip(p).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                off + (v.abs() - width).max(0.0)
            }
            SurfaceKind::HypercubeGrid { .. } => {
                p.iter().map(|x| if (0.0..1.0).contains(x) { 0.0 } else { 1.0 }).sum()
            }
        }
    }
}

pub const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

/// Fibonacci lattice on the unit sphere with golden-angle longitudes.
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let nf = n as f64;
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / nf;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = GOLDEN_ANGLE * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

pub fn mobius_point(u: f64, v: f64) -> Vec3 {
    let radial = 1.0 + 0.5 * v * (0.5 * u).cos();
    [radial * u.cos(), radial * u.sin(), 0.5 * v * (0.5 * u).sin()]
}

pub fn torus_point(major: f64, minor: f64, u: f64, v: f64) -> Vec3 {
    let radial = major + minor * v.cos();
    [radial * u.cos(), radial * u.sin(), minor * v.sin()]
}

/// Samples about `n` points on the surface. Sphere and ellipsoid return
/// exactly `n`; the parameter-grid surfaces return the nearest grid size,
/// with seam duplicates removed.
pub fn sample_surface(spec: &SurfaceSpec, n: usize) -> Result<PointCloud> {
    spec.validate()?;
    if n < 4 && !matches!(spec.kind, SurfaceKind::HypercubeGrid { .. }) {
        return Err(invalid("n", format!("need at least 4 points, got {n}")));
    }
    let (points, params): (Vec<Vec3>, Vec<[f64; 2]>) = match spec.kind {
        SurfaceKind::Sphere | SurfaceKind::Ellipsoid { .. } => {
            let (a, b, c) = match spec.kind {
                SurfaceKind::Ellipsoid { a, b, c } => (a, b, c),
                _ => (1.0, 1.0, 1.0),
            };
            fibonacci_sphere(n)
                .into_iter()
                .map(|p| {
                    let theta = p[2].clamp(-1.0, 1.0).acos();
                    let phi = p[1].atan2(p[0]);
                    ([a * p[0], b * p[1], c * p[2]], [theta, phi])
                })
                .unzip()
        }
        SurfaceKind::Torus { major, minor } => {
            let nu = ((n as f64 * major / minor).sqrt().round() as usize).max(3);
            let nv = ((n as f64 / nu as f64).round() as usize).max(3);
            let mut pts = Vec::with_capacity(nu * nv);
            for i in 0..nu {
                let u = 2.0 * PI * i as f64 / nu as f64;
                for j in 0..nv {
                    let v = 2.0 * PI * j as f64 / nv as f64;
                    pts.push((torus_point(major, minor, u, v), [u, v]));
                }
            }
            pts.into_iter().unzip()
        }
        SurfaceKind::Mobius { width } => {
            let nv = ((n as f64 * 2.0 * width / (2.0 * PI)).sqrt().round() as usize).max(2);
            let nu = ((n as f64 / nv as f64).round() as usize).max(2);
            let mut seen = HashSet::new();
            let mut pts = Vec::with_capacity(nu * nv);
            for i in 0..nu {
                let u = 2.0 * PI * i as f64 / nu as f64;
                for j in 0..nv {
                    let v = -width + 2.0 * width * j as f64 / (nv - 1) as f64;
                    let p = mobius_point(u, v);
                    let key = p.map(|x| (x * 1e9).round() as i64);
                    if seen.insert(key) {
                        pts.push((p, [u, v]));
                    }
                }
            }
            pts.into_iter().unzip()
        }
        SurfaceKind::HypercubeGrid { n: side, d } => {
            let size = crate::graph::grid_size(side, d)?;
            let mut coords = Vec::with_capacity(size * d as usize);
            for node in 0..size {
                let mut rest = node;
                let mut idx = vec![0usize; d as usize];
                for slot in idx.iter_mut().rev() {
                    *slot = rest % side;
                    rest /= side;
                }
                coords.extend(idx.into_iter().map(|k| k as f64 / side as f64));
            }
            return PointCloud::new(d as usize, coords);
        }
    };
    if points.len() < 4 {
        return Err(Error::Resolution(points.len()));
    }
    let coords = points.into_iter().flatten().collect();
    PointCloud::new(3, coords)?.with_params(params)
}

/// Triangle mesh with optional per-vertex fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub normals: Option<Vec<Vec3>>,
    pub velocities: Option<Vec<Vec3>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FacePolicy {
    /// Split polygons into a fan around their first vertex.
    Fan,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshStats {
    pub vertices: usize,
    pub faces: usize,
    pub dropped_degenerate: usize,
}

impl Mesh {
    /// Checks indices and drops faces with area below [`DEGENERATE_AREA`].
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<(Self, MeshStats)> {
        let nv = vertices.len();
        if let Some(bad) = vertices.iter().position(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(invalid("vertices", format!("vertex {bad} is not finite")));
        }
        let mut kept = Vec::with_capacity(faces.len());
        let mut dropped = 0;
        for f in faces {
            if let Some(&bad) = f.iter().find(|&&i| i >= nv) {
                return Err(Error::NodeOutOfRange { index: bad, len: nv });
            }
            if triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]) < DEGENERATE_AREA {
                dropped += 1;
            } else {
                kept.push(f);
            }
        }
        let stats = MeshStats {
            vertices: nv,
            faces: kept.len(),
            dropped_degenerate: dropped,
        };
        Ok((
            Self {
                vertices,
                faces: kept,
                normals: None,
                velocities: None,
            },
            stats,
        ))
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_areas(&self) -> Vec<f64> {
        self.faces
            .iter()
            .map(|f| triangle_area(&self.vertices[f[0]], &self.vertices[f[1]], &self.vertices[f[2]]))
            .collect()
    }

    pub fn point_cloud(&self) -> PointCloud {
        PointCloud::new(3, self.vertices.iter().flatten().copied().collect())
            .expect("mesh vertices are finite")
    }
}

pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm3(a: &Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * norm3(&cross(&sub(b, a), &sub(c, a)))
}

fn parse_index(tok: &str, nv: usize, line: usize) -> Result<usize> {
    let head = tok.split('/').next().unwrap_or("");
    let raw: i64 = head.parse().map_err(|_| Error::MeshParse {
        line,
        message: format!("bad face index {tok:?}"),
    })?;
    let idx = if raw > 0 {
        raw - 1
    } else if raw < 0 {
        nv as i64 + raw
    } else {
        -1
    };
    if idx < 0 {
        return Err(Error::MeshParse {
            line,
            message: format!("face index {raw} out of range"),
        });
    }
    Ok(idx as usize)
}

/// Parses the `v` and `f` lines of an OBJ file; everything else is ignored.
pub fn read_obj<R: Read>(reader: R, policy: FacePolicy) -> Result<(Mesh, MeshStats)> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = ln + 1;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for slot in &mut p {
                    let tok = toks.next().ok_or(Error::MeshParse {
                        line: lineno,
                        message: "vertex needs three coordinates".into(),
                    })?;
                    *slot = tok.parse().map_err(|_| Error::MeshParse {
                        line: lineno,
                        message: format!("bad coordinate {tok:?}"),
                    })?;
                }
                vertices.push(p);
            }
            Some("f") => {
                let idx = toks
                    .map(|t| parse_index(t, vertices.len(), lineno))
                    .collect::<Result<Vec<_>>>()?;
                if idx.len() < 3 {
                    return Err(Error::MeshParse {
                        line: lineno,
                        message: "face needs at least three vertices".into(),
                    });
                }
                if idx.len() > 3 && policy == FacePolicy::Reject {
                    return Err(Error::NonTriangularFace {
                        face: faces.len(),
                        arity: idx.len(),
                    });
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if vertices.is_empty() {
        return Err(Error::EmptyInput("mesh"));
    }
    Mesh::new(vertices, faces)
}

pub fn load_mesh(path: impl AsRef<Path>, policy: FacePolicy) -> Result<(Mesh, MeshStats)> {
    read_obj(std::fs::File::open(path)?, policy)
}

pub fn write_obj<W: Write>(mut w: W, mesh: &Mesh) -> Result<()> {
    for v in &mesh.vertices {
        writeln!(w, "v {:e} {:e} {:e}", v[0], v[1], v[2])?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexNormals {
    pub normals: Vec<Vec3>,
    /// Vertices with no incident face; their normal is left at zero.
    pub isolated: Vec<usize>,
}

/// Sums raw face cross products at each vertex and normalises.
pub fn vertex_normals(mesh: &Mesh) -> VertexNormals {
    let mut acc = vec![[0.0; 3]; mesh.num_vertices()];
    for f in &mesh.faces {
        let [a, b, c] = f.map(|i| mesh.vertices[i]);
        let n = cross(&sub(&b, &a), &sub(&c, &a));
        for &i in f {
            for k in 0..3 {
                acc[i][k] += n[k];
            }
        }
    }
    let mut isolated = Vec::new();
    for (i, v) in acc.iter_mut().enumerate() {
        let len = norm3(v);
        if len > 0.0 {
            v.iter_mut().for_each(|x| *x /= len);
        } else {
            isolated.push(i);
        }
    }
    VertexNormals {
        normals: acc,
        isolated,
    }
}

/// Where a densified point came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub face: usize,
    pub vertices: [usize; 3],
    pub barycentric: Vec3,
}

/// Mesh vertices followed by area-weighted samples from the faces.
#[derive(Debug, Clone, PartialEq)]
pub struct DensifiedCloud {
    pub num_base: usize,
    pub points: Vec<Vec3>,
    /// One entry per added point, in order after the base vertices.
    pub provenance: Vec<Provenance>,
}

impl DensifiedCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point_cloud(&self) -> PointCloud {
        PointCloud::new(3, self.points.iter().flatten().copied().collect())
            .expect("densified points are finite")
    }
}

/// Uniform sample on the 2-simplex from two uniforms.
pub fn uniform_barycentric<R: Rng>(rng: &mut R) -> Vec3 {
    let s = rng.gen::<f64>().sqrt();
    let r2 = rng.gen::<f64>();
    [1.0 - s, s * (1.0 - r2), s * r2]
}

pub fn densify_mesh(mesh: &Mesh, n_dense: usize, seed: u64) -> Result<DensifiedCloud> {
    let nv = mesh.num_vertices();
    if n_dense < nv {
        return Err(invalid("n_dense", format!("must be at least |V| = {nv}, got {n_dense}")));
    }
    let mut points = mesh.vertices.clone();
    let mut provenance = Vec::with_capacity(n_dense - nv);
    if n_dense > nv {
        let areas = mesh.face_areas();
        let dist = WeightedIndex::new(&areas).map_err(|e| invalid("mesh", format!("cannot sample faces: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in nv..n_dense {
            let face = dist.sample(&mut rng);
            let beta = uniform_barycentric(&mut rng);
            let idx = mesh.faces[face];
            let mut p = [0.0; 3];
            for (b, &vi) in beta.iter().zip(&idx) {
                for k in 0..3 {
                    p[k] += b * mesh.vertices[vi][k];
                }
            }
            points.push(p);
            provenance.push(Provenance {
                face,
                vertices: idx,
                barycentric: beta,
            });
        }
    }
    Ok(DensifiedCloud {
        num_base: nv,
        points,
        provenance,
    })
}

/// Carries a per-vertex field to every densified point with the stored
/// barycentric weights.
pub fn transfer_field(cloud: &DensifiedCloud, field: &[Vec3]) -> Result<Vec<Vec3>> {
    if field.len() != cloud.num_base {
        return Err(Error::DimensionMismatch {
            expected: cloud.num_base,
            actual: field.len(),
        });
    }
    let mut out = field.to_vec();
    for p in &cloud.provenance {
        let mut v = [0.0; 3];
        for (b, &vi) in p.barycentric.iter().zip(&p.vertices) {
            for k in 0..3 {
                v[k] += b * field[vi][k];
            }
        }
        out.push(v);
    }
    Ok(out)
}

/// Closed triangulated torus with `nu x nv` vertices.
pub fn torus_mesh(nu: usize, nv: usize, major: f64, minor: f64) -> Result<Mesh> {
    if nu < 3 || nv < 3 {
        return Err(invalid("resolution", format!("need at least 3x3, got {nu}x{nv}")));
    }
    let mut vertices = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = 2.0 * PI * i as f64 / nu as f64;
        for j in 0..nv {
            let v = 2.0 * PI * j as f64 / nv as f64;
            vertices.push(torus_point(major, minor, u, v));
        }
    }
    let id = |i: usize, j: usize| (i % nu) * nv + (j % nv);
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    Ok(Mesh::new(vertices, faces)?.0)
}

/// Rectangular cloth `[0, 2] x [0, 1]` with a travelling-wave displacement
/// and a smooth velocity field, a stand-in for a simulated flag frame.
pub fn flag_mesh(nx: usize, ny: usize) -> Result<Mesh> {
    if nx < 2 || ny < 2 {
        return Err(invalid("resolution", format!("need at least 2x2, got {nx}x{ny}")));
    }
    let mut vertices = Vec::with_capacity(nx * ny);
    let mut velocities = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        let x = 2.0 * i as f64 / (nx - 1) as f64;
        for j in 0..ny {
            let y = j as f64 / (ny - 1) as f64;
            let phase = 2.0 * PI * (x - 0.3 * y);
            let amp = 0.15 * x / 2.0;
            vertices.push([x, y, amp * phase.sin()]);
            velocities.push([
                0.05 * (PI * y).sin(),
                0.02 * phase.cos(),
                amp * 2.0 * PI * phase.cos(),
            ]);
        }
    }
    let id = |i: usize, j: usize| i * ny + j;
    let mut faces = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let mut mesh = Mesh::new(vertices, faces)?.0;
    mesh.velocities = Some(velocities);
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_and_ellipsoid_residuals() {
        let pc = sample_surface(&SurfaceSpec::sphere(), 4000).unwrap();
        assert_eq!(pc.len(), 4000);
        assert!(pc.iter().all(|p| SurfaceSpec::sphere().residual(p).abs() < 1e-12));
        let spec = SurfaceSpec::ellipsoid(1.0, 1.3, 0.7);
        let pc = sample_surface(&spec, 1000).unwrap();
        assert!(pc.iter().all(|p| spec.residual(p).abs() < 1e-12));
    }

    #[test]
    fn torus_and_mobius_residuals() {
        let spec = SurfaceSpec::torus(2.0, 1.0);
        let pc = sample_surface(&spec, 800).unwrap();
        assert!(pc.iter().all(|p| spec.residual(p).abs() < 1e-12));
        let spec = SurfaceSpec::mobius(0.4);
        let pc = sample_surface(&spec, 800).unwrap();
        assert!(pc.len() > 700);
        assert!(pc.iter().all(|p| spec.residual(p).abs() < 1e-10));
    }

    #[test]
    fn sampler_errors() {
        assert!(sample_surface(&SurfaceSpec::sphere(), 3).is_err());
        assert!(sample_surface(&SurfaceSpec::torus(1.0, 2.0), 100).is_err());
        assert!(sample_surface(&SurfaceSpec::ellipsoid(1.0, -1.0, 1.0), 100).is_err());
    }

    #[test]
    fn obj_parsing() {
        let text = "# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
        let (m, s) = read_obj(text.as_bytes(), FacePolicy::Reject).unwrap();
        assert_eq!((s.vertices, s.faces), (3, 1));
        assert_eq!(m.faces, vec![[0, 1, 2]]);

        let quad = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n";
        let (m, _) = read_obj(quad.as_bytes(), FacePolicy::Fan).unwrap();
        assert_eq!(m.faces.len(), 2);
        assert!(matches!(
            read_obj(quad.as_bytes(), FacePolicy::Reject),
            Err(Error::NonTriangularFace { arity: 4, .. })
        ));

        let degenerate = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\nf 1 2 3\nf 1 2 4\n";
        let (m, s) = read_obj(degenerate.as_bytes(), FacePolicy::Reject).unwrap();
        assert_eq!((m.faces.len(), s.dropped_degenerate), (1, 1));

        assert!(matches!(
            read_obj("v 0 0\n".as_bytes(), FacePolicy::Fan),
            Err(Error::MeshParse { line: 1, .. })
        ));
        assert!(read_obj("v 0 0 0\nf 1 2 3\n".as_bytes(), FacePolicy::Fan).is_err());
        let neg = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n";
        assert_eq!(read_obj(neg.as_bytes(), FacePolicy::Fan).unwrap().0.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn planar_triangle_normals() {
        let (m, _) = Mesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [5.0; 3]], vec![[0, 1, 2]]).unwrap();
        let n = vertex_normals(&m);
        for i in 0..3 {
            assert_eq!(n.normals[i], [0.0, 0.0, 1.0]);
        }
        assert_eq!(n.isolated, vec![3]);
    }

    #[test]
    fn densify_noop_and_convexity() {
        let (m, _) = Mesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap();
        let d = densify_mesh(&m, 3, 0).unwrap();
        assert_eq!(d.points, m.vertices);
        let d = densify_mesh(&m, 1003, 0).unwrap();
        assert_eq!(d.len(), 1003);
        for (p, pv) in d.points[3..].iter().zip(&d.provenance) {
            assert!(pv.barycentric.iter().all(|&b| b >= 0.0));
            assert!((pv.barycentric.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(p[0] >= 0.0 && p[1] >= 0.0 && p[0] + p[1] <= 1.0 + 1e-15);
        }
        assert!(densify_mesh(&m, 2, 0).is_err());
    }

    #[test]
    fn transfer_corner_and_constant() {
        let (m, _) = Mesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap();
        let mut d = densify_mesh(&m, 10, 1).unwrap();
        let field = vec![[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [1.0, 2.0, 3.0]];
        assert!(transfer_field(&d, &field).unwrap().iter().all(|v| *v == [1.0, 2.0, 3.0]));
        d.provenance[0].barycentric = [1.0, 0.0, 0.0];
        let field = vec![[7.0, 8.0, 9.0], [0.0; 3], [1.0; 3]];
        assert_eq!(transfer_field(&d, &field).unwrap()[3], [7.0, 8.0, 9.0]);
        assert!(transfer_field(&d, &field[..2]).is_err());
    }

    #[test]
    fn synthetic_meshes() {
        let t = torus_mesh(20, 10, 2.0, 0.7).unwrap();
        assert_eq!((t.vertices.len(), t.faces.len()), (200, 400));
        let n = vertex_normals(&t);
        assert!(n.isolated.is_empty());
        // outward: normal points away from the tube centre
        for (v, nv) in t.vertices.iter().zip(&n.normals) {
            let rho = (v[0] * v[0] + v[1] * v[1]).sqrt();
            let c = [2.0 * v[0] / rho, 2.0 * v[1] / rho, 0.0];
            let out = sub(v, &c);
            assert!(out.iter().zip(nv).map(|(a, b)| a * b).sum::<f64>() > 0.0);
        }
        let f = flag_mesh(10, 5).unwrap();
        assert_eq!(f.velocities.as_ref().unwrap().len(), 50);
        let mut buf = Vec::new();
        write_obj(&mut buf, &t).unwrap();
        let (back, _) = read_obj(&buf[..], FacePolicy::Reject).unwrap();
        assert_eq!(back.faces, t.faces);
    }
}
