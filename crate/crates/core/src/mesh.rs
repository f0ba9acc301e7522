//! Conforming triangulation of the annular region between the interface
//! polygon and obstacle holes, shape-quality measurement, a deterministic
//! text serialization, and the interface boundary pairing (piecewise-affine
//! interpolant of the Fourier basis integrated against hat functions).

use crate::error::Result;
use crate::geometry::{InterfacePolygon, Polygon};
use crate::{C64, Error, P2};
use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation,
};
use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

/// Default cap on the shape constant.
pub const QUALITY_CAP: f64 = 4.0;

/// Obstacle boundaries must clear the interface by this many target mesh
/// widths so a couple of element layers fit in between.
const CLEARANCE_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexTag {
    Interior,
    Dirichlet,
    Interface,
}

/// One mesh edge on the interface, oriented counterclockwise, with the chord
/// of the interface polygon that contains it and the chord's corner angles
/// (`theta_b = theta_a + 2 pi / m_b`, so it exceeds `2 pi` on the wrapping
/// chord).
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceEdge {
    pub va: usize,
    pub vb: usize,
    pub corner_a: usize,
    pub corner_b: usize,
    pub theta_a: f64,
    pub theta_b: f64,
}

/// Triangulation of the polygonal domain with boundary tags and the ordered
/// interface edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<P2>,
    pub triangles: Vec<[usize; 3]>,
    pub tags: Vec<VertexTag>,
    pub interface_edges: Vec<InterfaceEdge>,
    pub x_radius: f64,
    pub h: f64,
    pub quality: f64,
}

/// Values and pairing weights of the interpolated Fourier mode `e_alpha` on
/// the interface: `values[i]` is the piecewise-affine interpolant at
/// interface vertex `vertex_ids[i]` (exact at interface polygon corners), and
/// `weights[i]` integrates that interpolant against the hat function of the
/// same vertex along the interface.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryBasisPairing {
    pub alpha: i64,
    pub vertex_ids: Vec<usize>,
    pub values: Vec<C64>,
    pub weights: Vec<C64>,
}

fn dist2(a: P2, b: P2) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn dist_point_segment(p: P2, a: P2, b: P2) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    };
    dist2(p, [a[0] + t * ab[0], a[1] + t * ab[1]]).sqrt()
}

fn tri_area(a: P2, b: P2, c: P2) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Split a closed loop of points so no segment exceeds `max_len`; returns the
/// refined loop (original vertices kept, split points affine on each edge).
fn presplit_loop(vertices: &[P2], max_len: f64) -> Vec<P2> {
    let m = vertices.len();
    let mut out = Vec::with_capacity(2 * m);
    for i in 0..m {
        let a = vertices[i];
        let b = vertices[(i + 1) % m];
        let len = dist2(a, b).sqrt();
        let parts = (len / max_len).ceil().max(1.0) as usize;
        for p in 0..parts {
            let t = p as f64 / parts as f64;
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

/// Triangulate the region between `interface` and the union of `obstacles`
/// with mesh width at most `h_target` and shape constant at most
/// [`QUALITY_CAP`]. Obstacle polygon vertices become Dirichlet-tagged mesh
/// vertices; interface polygon corners become Interface-tagged vertices.
pub fn build_mesh(
    obstacles: &[Polygon],
    interface: &InterfacePolygon,
    h_target: f64,
) -> Result<TriMesh> {
    if h_target <= 0.0 {
        return Err(Error::Invalid {
            what: "mesh",
            detail: format!("h_target {h_target} must be positive"),
        });
    }
    let interface_poly = interface.polygon();
    let m_b = interface.corners.len();
    // Containment and clearance: obstacles strictly inside the interface,
    // with a couple of element layers of room.
    for (oi, ob) in obstacles.iter().enumerate() {
        ob.validate()?;
        for v in &ob.vertices {
            if !interface_poly.contains(*v) {
                return Err(Error::Geometry(format!(
                    "obstacle {oi} vertex [{}, {}] lies outside the interface",
                    v[0], v[1]
                )));
            }
            let mut min_d = f64::INFINITY;
            for j in 0..m_b {
                let a = interface.corners[j];
                let b = interface.corners[(j + 1) % m_b];
                min_d = min_d.min(dist_point_segment(*v, a, b));
            }
            if min_d < CLEARANCE_FACTOR * h_target {
                return Err(Error::Geometry(format!(
                    "obstacle {oi} clears the interface by only {min_d:.3e} \
                     (need {:.3e})",
                    CLEARANCE_FACTOR * h_target
                )));
            }
        }
    }

    // Boundary faces whose circumcenter falls in the excluded outer region
    // are never split by the refiner, so their edge lengths are governed by
    // the input segment length; 0.45 h keeps them safely under h.
    let max_seg = 0.45 * h_target;
    let mut cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::new();
    let mut add_loop = |cdt: &mut ConstrainedDelaunayTriangulation<Point2<f64>>,
                        pts: &[P2]|
     -> Result<()> {
        let mut handles = Vec::with_capacity(pts.len());
        for p in pts {
            let h = cdt
                .insert(Point2::new(p[0], p[1]))
                .map_err(|e| Error::Geometry(format!("vertex insertion failed: {e:?}")))?;
            handles.push(h);
        }
        for i in 0..handles.len() {
            let j = (i + 1) % handles.len();
            if handles[i] != handles[j] {
                cdt.add_constraint(handles[i], handles[j]);
            }
        }
        Ok(())
    };
    add_loop(&mut cdt, &presplit_loop(&interface_poly.vertices, max_seg))?;
    for ob in obstacles {
        add_loop(&mut cdt, &presplit_loop(&ob.vertices, max_seg))?;
    }

    // Area cap 0.13 h^2 bounds the longest edge of a 30-degree-min-angle
    // triangle by 0.95 h (the extremal 30-30-120 triangle has area
    // 0.144 e^2); the margin absorbs slightly-below-limit angles.
    let params = RefinementParameters::<f64>::new()
        .exclude_outer_faces(true)
        .with_max_allowed_area(0.13 * h_target * h_target)
        .with_angle_limit(AngleLimit::from_deg(30.0))
        .with_max_additional_vertices(400_000);
    let refinement = cdt.refine(params);
    if !refinement.refinement_complete {
        return Err(Error::MeshQuality {
            detail: "refinement hit the added-vertex cap before meeting quality".into(),
        });
    }

    // Keep faces inside the interface and outside the obstacle union
    // (even-odd over all obstacle loops, so cavities enclosed by hole loops
    // stay part of the domain).
    let mut kept: Vec<[usize; 3]> = Vec::new();
    let mut used: BTreeSet<usize> = BTreeSet::new();
    for face in cdt.inner_faces() {
        if refinement.excluded_faces.contains(&face.fix()) {
            continue;
        }
        let vs = face.vertices();
        let pos: Vec<P2> = vs.iter().map(|v| [v.position().x, v.position().y]).collect();
        let centroid = [
            (pos[0][0] + pos[1][0] + pos[2][0]) / 3.0,
            (pos[0][1] + pos[1][1] + pos[2][1]) / 3.0,
        ];
        if !interface_poly.contains(centroid) {
            continue;
        }
        let crossings = obstacles
            .iter()
            .filter(|ob| ob.contains(centroid))
            .count();
        if crossings % 2 == 1 {
            continue;
        }
        let idx = [vs[0].fix().index(), vs[1].fix().index(), vs[2].fix().index()];
        used.extend(idx);
        kept.push(idx);
    }
    if kept.is_empty() {
        return Err(Error::Geometry("no faces inside the domain".into()));
    }

    // Compact vertex numbering in insertion order.
    let remap: BTreeMap<usize, usize> = used.iter().enumerate().map(|(n, &o)| (o, n)).collect();
    let mut vertices = vec![[0.0, 0.0]; remap.len()];
    for v in cdt.vertices() {
        if let Some(&n) = remap.get(&v.fix().index()) {
            vertices[n] = [v.position().x, v.position().y];
        }
    }
    let mut triangles: Vec<[usize; 3]> = kept
        .into_iter()
        .map(|t| [remap[&t[0]], remap[&t[1]], remap[&t[2]]])
        .collect();
    for t in triangles.iter_mut() {
        let a = tri_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
        if a < 0.0 {
            t.swap(1, 2);
        }
    }
    triangles.sort_unstable();

    // Tag by distance to the constraint loops.
    let tol = 1e-9 * interface.x_radius.max(1.0);
    let tags: Vec<VertexTag> = vertices
        .iter()
        .map(|&p| {
            let mut d_int = f64::INFINITY;
            for j in 0..m_b {
                let a = interface.corners[j];
                let b = interface.corners[(j + 1) % m_b];
                d_int = d_int.min(dist_point_segment(p, a, b));
            }
            if d_int <= tol {
                return VertexTag::Interface;
            }
            for ob in obstacles {
                let m = ob.vertices.len();
                for i in 0..m {
                    if dist_point_segment(p, ob.vertices[i], ob.vertices[(i + 1) % m]) <= tol {
                        return VertexTag::Dirichlet;
                    }
                }
            }
            VertexTag::Interior
        })
        .collect();

    let interface_edges = collect_interface_edges(&vertices, &triangles, &tags, interface)?;
    let (quality, h, _) = quality_of(&vertices, &triangles, &tags);
    if h > h_target {
        return Err(Error::MeshQuality {
            detail: format!("measured h {h:.4e} exceeds target {h_target:.4e}"),
        });
    }
    if quality > QUALITY_CAP {
        return Err(Error::MeshQuality {
            detail: format!("shape constant {quality:.3} exceeds cap {QUALITY_CAP}"),
        });
    }
    let mesh = TriMesh {
        vertices,
        triangles,
        tags,
        interface_edges,
        x_radius: interface.x_radius,
        h,
        quality,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Boundary edges of the kept face set lying on the interface, ordered
/// counterclockwise and annotated with their chord.
fn collect_interface_edges(
    vertices: &[P2],
    triangles: &[[usize; 3]],
    tags: &[VertexTag],
    interface: &InterfacePolygon,
) -> Result<Vec<InterfaceEdge>> {
    let m_b = interface.corners.len();
    let mut edge_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for t in triangles {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let delta = 2.0 * PI / m_b as f64;
    let mut edges: Vec<(usize, f64, InterfaceEdge)> = Vec::new();
    for (&(a, b), &count) in edge_count.iter() {
        if count != 1
            || tags[a] != VertexTag::Interface
            || tags[b] != VertexTag::Interface
        {
            continue;
        }
        let mid = [
            0.5 * (vertices[a][0] + vertices[b][0]),
            0.5 * (vertices[a][1] + vertices[b][1]),
        ];
        let (mut best_chord, mut best_d) = (usize::MAX, f64::INFINITY);
        for j in 0..m_b {
            let ca = interface.corners[j];
            let cb = interface.corners[(j + 1) % m_b];
            let d = dist_point_segment(mid, ca, cb);
            if d < best_d {
                best_d = d;
                best_chord = j;
            }
        }
        if best_d > 1e-8 * interface.x_radius.max(1.0) {
            // Boundary edge between interface-tagged vertices that is not on
            // a chord: tagging and face classification disagree.
            return Err(Error::Geometry(format!(
                "boundary edge ({a}, {b}) is off the interface by {best_d:.3e}"
            )));
        }
        let j = best_chord;
        let ca = interface.corners[j];
        let cb = interface.corners[(j + 1) % m_b];
        let chord = [cb[0] - ca[0], cb[1] - ca[1]];
        let len2 = chord[0] * chord[0] + chord[1] * chord[1];
        let t_of = |p: P2| ((p[0] - ca[0]) * chord[0] + (p[1] - ca[1]) * chord[1]) / len2;
        let (ta, tb) = (t_of(vertices[a]), t_of(vertices[b]));
        let (va, vb, tmin) = if ta <= tb { (a, b, ta) } else { (b, a, tb) };
        edges.push((
            j,
            tmin,
            InterfaceEdge {
                va,
                vb,
                corner_a: j,
                corner_b: (j + 1) % m_b,
                theta_a: interface.angles[j],
                theta_b: interface.angles[j] + delta,
            },
        ));
    }
    edges.sort_by(|x, y| {
        x.0.cmp(&y.0)
            .then(x.1.partial_cmp(&y.1).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(edges.into_iter().map(|(_, _, e)| e).collect())
}

fn quality_of(vertices: &[P2], triangles: &[[usize; 3]], tags: &[VertexTag]) -> (f64, f64, usize) {
    let mut c_theta = 0.0f64;
    let mut h = 0.0f64;
    for t in triangles {
        let (a, b, c) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
        let area = tri_area(a, b, c).abs();
        let sq = area.sqrt();
        for (p, q) in [(a, b), (b, c), (c, a)] {
            let e = dist2(p, q).sqrt();
            h = h.max(e);
            c_theta = c_theta.max(e / sq).max(sq / e);
        }
    }
    let d_n = tags.iter().filter(|t| **t != VertexTag::Dirichlet).count();
    (c_theta, h, d_n)
}

/// Shape constant, mesh width, and the non-Dirichlet dof count.
pub fn mesh_quality(mesh: &TriMesh) -> (f64, f64, usize) {
    quality_of(&mesh.vertices, &mesh.triangles, &mesh.tags)
}

impl TriMesh {
    /// Structural validation: positive areas, conformity, edge-connectivity,
    /// tag bounds, and interface edges on their chords.
    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        if self.tags.len() != nv {
            return Err(Error::Invalid {
                what: "mesh",
                detail: format!("{} tags for {nv} vertices", self.tags.len()),
            });
        }
        let mut edge_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (ti, t) in self.triangles.iter().enumerate() {
            for &v in t {
                if v >= nv {
                    return Err(Error::Invalid {
                        what: "mesh",
                        detail: format!("triangle {ti} references vertex {v} of {nv}"),
                    });
                }
            }
            let area = tri_area(self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]);
            if area <= 0.0 {
                return Err(Error::Invalid {
                    what: "mesh",
                    detail: format!("triangle {ti} has non-positive area {area:.3e}"),
                });
            }
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        for (&(a, b), &c) in edge_count.iter() {
            if c > 2 {
                return Err(Error::Invalid {
                    what: "mesh",
                    detail: format!("edge ({a}, {b}) belongs to {c} triangles"),
                });
            }
        }
        // Edge connectivity by union-find over shared triangle edges.
        let mut parent: Vec<usize> = (0..self.triangles.len()).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            if parent[i] != i {
                let r = find(parent, parent[i]);
                parent[i] = r;
            }
            parent[i]
        }
        let mut edge_to_tri: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (ti, t) in self.triangles.iter().enumerate() {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let key = (a.min(b), a.max(b));
                if let Some(&other) = edge_to_tri.get(&key) {
                    let (ra, rb) = (find(&mut parent, ti), find(&mut parent, other));
                    parent[ra] = rb;
                } else {
                    edge_to_tri.insert(key, ti);
                }
            }
        }
        if !self.triangles.is_empty() {
            let root = find(&mut parent, 0);
            for ti in 1..self.triangles.len() {
                if find(&mut parent, ti) != root {
                    return Err(Error::Invalid {
                        what: "mesh",
                        detail: format!("triangle {ti} is edge-disconnected from triangle 0"),
                    });
                }
            }
        }
        for (ei, e) in self.interface_edges.iter().enumerate() {
            if e.va >= nv || e.vb >= nv {
                return Err(Error::Invalid {
                    what: "mesh",
                    detail: format!("interface edge {ei} references a missing vertex"),
                });
            }
            if self.tags[e.va] != VertexTag::Interface || self.tags[e.vb] != VertexTag::Interface
            {
                return Err(Error::Invalid {
                    what: "mesh",
                    detail: format!("interface edge {ei} endpoint is not interface-tagged"),
                });
            }
            let ca = [
                self.x_radius * e.theta_a.cos(),
                self.x_radius * e.theta_a.sin(),
            ];
            let cb = [
                self.x_radius * e.theta_b.cos(),
                self.x_radius * e.theta_b.sin(),
            ];
            for v in [e.va, e.vb] {
                let d = dist_point_segment(self.vertices[v], ca, cb);
                if d > 1e-8 * self.x_radius.max(1.0) {
                    return Err(Error::Invalid {
                        what: "mesh",
                        detail: format!(
                            "interface vertex {v} is {d:.3e} off its chord (edge {ei})"
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    /// Sum of triangle areas.
    pub fn total_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| tri_area(self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]).abs())
            .sum()
    }

    /// Length of the polygonal interface as meshed.
    pub fn interface_perimeter(&self) -> f64 {
        self.interface_edges
            .iter()
            .map(|e| dist2(self.vertices[e.va], self.vertices[e.vb]).sqrt())
            .sum()
    }

    /// Deterministic text serialization (see `import_mesh`).
    pub fn export_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "mesh2d {} {}\n",
            self.vertices.len(),
            self.triangles.len()
        ));
        for (v, t) in self.vertices.iter().zip(self.tags.iter()) {
            let tag = match t {
                VertexTag::Interior => 'i',
                VertexTag::Dirichlet => 'd',
                VertexTag::Interface => 'g',
            };
            s.push_str(&format!("{:.17e} {:.17e} {}\n", v[0], v[1], tag));
        }
        for t in &self.triangles {
            s.push_str(&format!("{} {} {}\n", t[0], t[1], t[2]));
        }
        s.push_str(&format!("edges {}\n", self.interface_edges.len()));
        for e in &self.interface_edges {
            s.push_str(&format!("{} {} {} {}\n", e.va, e.vb, e.corner_a, e.corner_b));
        }
        s
    }
}

/// Parse the mesh text format: `mesh2d <nv> <nt>`, then nv lines `x y tag`
/// (tag in {i, d, g}), nt lines `v0 v1 v2`, then `edges <ne>` and ne lines
/// `va vb corner_a corner_b`. Re-validates all mesh invariants.
pub fn import_mesh(text: &str) -> Result<TriMesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let perr = |line: usize, detail: String| Error::Parse { line, detail };
    let (hline, header) = lines
        .next()
        .ok_or_else(|| perr(0, "empty mesh text".into()))?;
    let mut it = header.split_ascii_whitespace();
    if it.next() != Some("mesh2d") {
        return Err(perr(hline, "expected `mesh2d <nv> <nt>`".into()));
    }
    let nv: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| perr(hline, "bad vertex count".into()))?;
    let nt: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| perr(hline, "bad triangle count".into()))?;
    let mut vertices = Vec::with_capacity(nv);
    let mut tags = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| perr(0, "truncated vertex list".into()))?;
        let mut it = l.split_ascii_whitespace();
        let x: f64 = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| perr(ln, "bad x coordinate".into()))?;
        let y: f64 = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| perr(ln, "bad y coordinate".into()))?;
        let tag = match it.next() {
            Some("i") => VertexTag::Interior,
            Some("d") => VertexTag::Dirichlet,
            Some("g") => VertexTag::Interface,
            other => {
                return Err(perr(ln, format!("bad tag {other:?}")));
            }
        };
        vertices.push([x, y]);
        tags.push(tag);
    }
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| perr(0, "truncated triangle list".into()))?;
        let mut it = l.split_ascii_whitespace();
        let mut t = [0usize; 3];
        for v in t.iter_mut() {
            *v = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| perr(ln, "bad vertex index".into()))?;
        }
        triangles.push(t);
    }
    let (eline, el) = lines
        .next()
        .ok_or_else(|| perr(0, "missing `edges` section".into()))?;
    let mut it = el.split_ascii_whitespace();
    if it.next() != Some("edges") {
        return Err(perr(eline, "expected `edges <ne>`".into()));
    }
    let ne: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| perr(eline, "bad edge count".into()))?;
    let mut raw_edges = Vec::with_capacity(ne);
    for _ in 0..ne {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| perr(0, "truncated edge list".into()))?;
        let mut it = l.split_ascii_whitespace();
        let mut e = [0usize; 4];
        for v in e.iter_mut() {
            *v = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| perr(ln, "bad edge field".into()))?;
        }
        raw_edges.push(e);
    }
    // Corner angles from the chord indices: m_b is one past the largest
    // corner index seen (every chord carries edges in meshes we emit).
    let m_b = raw_edges
        .iter()
        .flat_map(|e| [e[2], e[3]])
        .max()
        .map(|m| m + 1)
        .unwrap_or(0)
        .max(3);
    let x_radius = vertices
        .iter()
        .zip(tags.iter())
        .filter(|(_, t)| **t == VertexTag::Interface)
        .map(|(v, _)| (v[0] * v[0] + v[1] * v[1]).sqrt())
        .fold(1.0f64, f64::max);
    let delta = 2.0 * PI / m_b as f64;
    let interface_edges: Vec<InterfaceEdge> = raw_edges
        .into_iter()
        .map(|[va, vb, ca, cb]| InterfaceEdge {
            va,
            vb,
            corner_a: ca,
            corner_b: cb,
            theta_a: delta * ca as f64,
            theta_b: delta * ca as f64 + delta,
        })
        .collect();
    let (quality, h, _) = quality_of(&vertices, &triangles, &tags);
    let mesh = TriMesh {
        vertices,
        triangles,
        tags,
        interface_edges,
        x_radius,
        h,
        quality,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Fourier basis value `e_alpha(theta) = (2 pi X)^{-1/2} exp(i alpha theta)`.
fn e_alpha(alpha: i64, theta: f64, x_radius: f64) -> C64 {
    let c = 1.0 / (2.0 * PI * x_radius).sqrt();
    C64::from_polar(c, alpha as f64 * theta)
}

/// Values of the interpolated mode `e_alpha` at interface vertices and the
/// pairing weights against hat functions (2-point Gauss per edge, exact for
/// the affine-times-affine integrand).
pub fn boundary_pairing(mesh: &TriMesh, alpha: i64) -> BoundaryBasisPairing {
    let x = mesh.x_radius;
    // Vertex order: counterclockwise first appearance along the interface.
    let mut vertex_ids = Vec::new();
    let mut index_of: BTreeMap<usize, usize> = BTreeMap::new();
    for e in &mesh.interface_edges {
        for v in [e.va, e.vb] {
            if let std::collections::btree_map::Entry::Vacant(entry) = index_of.entry(v) {
                entry.insert(vertex_ids.len());
                vertex_ids.push(v);
            }
        }
    }
    let mut values = vec![C64::new(0.0, 0.0); vertex_ids.len()];
    let mut weights = vec![C64::new(0.0, 0.0); vertex_ids.len()];
    let mut value_known = vec![false; vertex_ids.len()];
    let m_b = mesh
        .interface_edges
        .iter()
        .map(|e| e.corner_a)
        .max()
        .map(|m| m + 1)
        .unwrap_or(0);
    for e in &mesh.interface_edges {
        let ca = [x * e.theta_a.cos(), x * e.theta_a.sin()];
        let cb = [x * e.theta_b.cos(), x * e.theta_b.sin()];
        let chord = [cb[0] - ca[0], cb[1] - ca[1]];
        let len2 = chord[0] * chord[0] + chord[1] * chord[1];
        let t_of = |p: P2| ((p[0] - ca[0]) * chord[0] + (p[1] - ca[1]) * chord[1]) / len2;
        let val_at = |t: f64| -> C64 {
            // Corners get the exact basis value at the canonical angle;
            // chord-interior vertices are affine between the corner values.
            if t <= 1e-12 {
                e_alpha(alpha, mesh_corner_angle(e.corner_a, m_b), x)
            } else if t >= 1.0 - 1e-12 {
                e_alpha(alpha, mesh_corner_angle(e.corner_b, m_b), x)
            } else {
                let ga = e_alpha(alpha, e.theta_a, x);
                let gb = e_alpha(alpha, e.theta_b, x);
                ga * (1.0 - t) + gb * t
            }
        };
        let (ia, ib) = (index_of[&e.va], index_of[&e.vb]);
        let (ta, tb) = (t_of(mesh.vertices[e.va]), t_of(mesh.vertices[e.vb]));
        let (ga, gb) = (val_at(ta), val_at(tb));
        for (i, g) in [(ia, ga), (ib, gb)] {
            if !value_known[i] {
                values[i] = g;
                value_known[i] = true;
            }
        }
        let len = dist2(mesh.vertices[e.va], mesh.vertices[e.vb]).sqrt();
        // 2-point Gauss on [0, 1], weights 1/2 each.
        let g1 = 0.5 - 1.0 / (2.0 * 3.0f64.sqrt());
        let g2 = 0.5 + 1.0 / (2.0 * 3.0f64.sqrt());
        for s in [g1, g2] {
            let g = ga * (1.0 - s) + gb * s;
            weights[ia] += g * ((1.0 - s) * 0.5 * len);
            weights[ib] += g * (s * 0.5 * len);
        }
    }
    BoundaryBasisPairing {
        alpha,
        vertex_ids,
        values,
        weights,
    }
}

/// Canonical corner angle `2 pi j / m_b` with the index wrapped into range.
fn mesh_corner_angle(corner: usize, m_b: usize) -> f64 {
    if m_b == 0 {
        return 0.0;
    }
    2.0 * PI * (corner % m_b) as f64 / m_b as f64
}
