//! Obstacle descriptions and membership oracles, lattice pixelation, pixel
//! boundary tracing, Koch prefractal and interface polygons, and set-distance
//! diagnostics (Hausdorff and the summed Attouch-Wets metric).

use crate::error::Result;
use crate::{C64, Error, P2};
use std::collections::BTreeSet;
use std::f64::consts::PI;

/// Hard cap on pixelation cell count.
const MAX_CELLS: usize = 4_000_000;

/// Declarative obstacle description carrying its own membership oracle.
#[derive(Debug, Clone, PartialEq)]
pub enum ObstacleSpec {
    Disk {
        radius: f64,
        center: P2,
    },
    Koch {
        level: usize,
        scale: f64,
        center: P2,
    },
    /// Filled Julia set of `z^2 + c`, affinely mapped by `x -> (x-center)/scale`.
    Julia {
        c: C64,
        max_iter: usize,
        bailout: f64,
        scale: f64,
        center: P2,
    },
    /// Bitmap-backed membership: cell `(i, j)` covers
    /// `origin + pitch*[i, i+1) x [j, j+1)`.
    PixelOracle {
        data: Vec<Vec<bool>>,
        origin: P2,
        pitch: f64,
    },
    None,
}

impl ObstacleSpec {
    /// Validates parameter ranges (positivity, level cap, bailout >= 2).
    pub fn validate(&self) -> Result<()> {
        match self {
            ObstacleSpec::Disk { radius, .. } if *radius <= 0.0 => Err(Error::Invalid {
                what: "obstacle",
                detail: format!("disk radius {radius} must be positive"),
            }),
            ObstacleSpec::Koch { level, scale, .. } => {
                if *level > 8 {
                    Err(Error::Invalid {
                        what: "obstacle",
                        detail: format!("koch level {level} exceeds cap 8"),
                    })
                } else if *scale <= 0.0 {
                    Err(Error::Invalid {
                        what: "obstacle",
                        detail: "koch scale must be positive".into(),
                    })
                } else {
                    Ok(())
                }
            }
            ObstacleSpec::Julia { bailout, scale, .. } => {
                if *bailout < 2.0 {
                    Err(Error::Invalid {
                        what: "obstacle",
                        detail: format!("julia bailout {bailout} must be >= 2"),
                    })
                } else if *scale <= 0.0 {
                    Err(Error::Invalid {
                        what: "obstacle",
                        detail: "julia scale must be positive".into(),
                    })
                } else {
                    Ok(())
                }
            }
            ObstacleSpec::PixelOracle { data, pitch, .. } => {
                if data.is_empty() || data[0].is_empty() || *pitch <= 0.0 {
                    Err(Error::Invalid {
                        what: "obstacle",
                        detail: "pixel oracle needs a non-empty bitmap and positive pitch".into(),
                    })
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Axis-aligned bounding box guaranteed to contain the obstacle.
    pub fn bounding_box(&self) -> (P2, P2) {
        match self {
            ObstacleSpec::Disk { radius, center } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
            ObstacleSpec::Koch { scale, center, .. } => (
                [center[0] - scale, center[1] - scale],
                [center[0] + scale, center[1] + scale],
            ),
            ObstacleSpec::Julia {
                bailout,
                scale,
                center,
                ..
            } => {
                let r = bailout * scale;
                (
                    [center[0] - r, center[1] - r],
                    [center[0] + r, center[1] + r],
                )
            }
            ObstacleSpec::PixelOracle {
                data,
                origin,
                pitch,
            } => {
                let w = data[0].len() as f64 * pitch;
                let h = data.len() as f64 * pitch;
                (*origin, [origin[0] + w, origin[1] + h])
            }
            ObstacleSpec::None => ([0.0, 0.0], [0.0, 0.0]),
        }
    }
}

/// Point membership `x in U`; obstacles are closed sets, so boundary points
/// count as inside (for Julia, hitting the bailout exactly still counts as
/// bounded).
pub fn membership(spec: &ObstacleSpec, x: P2) -> bool {
    match spec {
        ObstacleSpec::Disk { radius, center } => {
            let dx = x[0] - center[0];
            let dy = x[1] - center[1];
            (dx * dx + dy * dy).sqrt() <= *radius
        }
        ObstacleSpec::Koch {
            level,
            scale,
            center,
        } => {
            let poly = koch_prefractal(*level, *scale, *center);
            poly.contains(x)
        }
        ObstacleSpec::Julia {
            c,
            max_iter,
            bailout,
            scale,
            center,
        } => {
            let mut z = C64::new((x[0] - center[0]) / scale, (x[1] - center[1]) / scale);
            if z.norm() > *bailout {
                return false;
            }
            for _ in 0..*max_iter {
                z = z * z + c;
                if z.norm() > *bailout {
                    return false;
                }
            }
            true
        }
        ObstacleSpec::PixelOracle {
            data,
            origin,
            pitch,
        } => {
            let i = ((x[0] - origin[0]) / pitch).floor();
            let j = ((x[1] - origin[1]) / pitch).floor();
            if i < 0.0 || j < 0.0 {
                return false;
            }
            let (i, j) = (i as usize, j as usize);
            // Row 0 of the bitmap is the top row of the image.
            j < data.len() && i < data[0].len() && data[data.len() - 1 - j][i]
        }
        ObstacleSpec::None => false,
    }
}

/// Lattice pixelation at resolution `n`: the set of points `j in (1/n)Z^2`
/// with `j in U`, stored as integer pairs `(a, b)` meaning `(a/n, b/n)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelSet {
    pub n: u32,
    pub cells: BTreeSet<(i64, i64)>,
}

impl PixelSet {
    /// Side length of one pixel.
    pub fn cell_side(&self) -> f64 {
        1.0 / self.n as f64
    }
}

/// Pixelate the obstacle: test every lattice point of `(1/n)Z^2` inside the
/// obstacle's bounding box (inflated by one cell).
pub fn pixelate(spec: &ObstacleSpec, n: u32) -> Result<PixelSet> {
    spec.validate()?;
    let mut cells = BTreeSet::new();
    if matches!(spec, ObstacleSpec::None) {
        return Ok(PixelSet { n, cells });
    }
    let (lo, hi) = spec.bounding_box();
    let nf = n as f64;
    let a0 = (lo[0] * nf).floor() as i64 - 1;
    let a1 = (hi[0] * nf).ceil() as i64 + 1;
    let b0 = (lo[1] * nf).floor() as i64 - 1;
    let b1 = (hi[1] * nf).ceil() as i64 + 1;
    let span = ((a1 - a0 + 1) as usize).saturating_mul((b1 - b0 + 1) as usize);
    if span > MAX_CELLS {
        return Err(Error::Invalid {
            what: "pixelation",
            detail: format!("{span} candidate cells exceed the cap {MAX_CELLS}"),
        });
    }
    // Point-in-polygon per lattice point is quadratic in the Koch level;
    // hoist the polygon once.
    let koch_poly = match spec {
        ObstacleSpec::Koch {
            level,
            scale,
            center,
        } => Some(koch_prefractal(*level, *scale, *center)),
        _ => None,
    };
    for a in a0..=a1 {
        for b in b0..=b1 {
            let x = [a as f64 / nf, b as f64 / nf];
            let inside = match &koch_poly {
                Some(p) => p.contains(x),
                None => membership(spec, x),
            };
            if inside {
                cells.insert((a, b));
            }
        }
    }
    Ok(PixelSet { n, cells })
}

/// Simple closed polygon; positive signed area means counterclockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<P2>,
}

impl Polygon {
    /// Validated constructor: at least 3 vertices, consecutive vertices
    /// distinct, and no self-intersections.
    pub fn new(vertices: Vec<P2>) -> Result<Polygon> {
        let p = Polygon { vertices };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.vertices.len();
        if m < 3 {
            return Err(Error::Geometry(format!("polygon has {m} vertices")));
        }
        for i in 0..m {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % m];
            if a == b {
                return Err(Error::Geometry(format!(
                    "repeated consecutive vertex at index {i}"
                )));
            }
        }
        // Non-adjacent edge pairs must not intersect; adjacent ones must not
        // overlap beyond the shared endpoint.
        for i in 0..m {
            let (a1, a2) = (self.vertices[i], self.vertices[(i + 1) % m]);
            for j in (i + 1)..m {
                let adjacent = j == i + 1 || (i == 0 && j == m - 1);
                let (b1, b2) = (self.vertices[j], self.vertices[(j + 1) % m]);
                if adjacent {
                    continue;
                }
                if segments_intersect(a1, a2, b1, b2) {
                    return Err(Error::Geometry(format!(
                        "edges {i} and {j} of the polygon intersect"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn signed_area(&self) -> f64 {
        let m = self.vertices.len();
        let mut s = 0.0;
        for i in 0..m {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % m];
            s += a[0] * b[1] - b[0] * a[1];
        }
        0.5 * s
    }

    pub fn is_ccw(&self) -> bool {
        self.signed_area() > 0.0
    }

    pub fn perimeter(&self) -> f64 {
        let m = self.vertices.len();
        (0..m)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % m];
                ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
            })
            .sum()
    }

    /// Even-odd point-in-polygon; boundary points count as inside (up to the
    /// crossing-test tolerance of the ray cast).
    pub fn contains(&self, x: P2) -> bool {
        let m = self.vertices.len();
        // On-boundary check first so closed-set semantics hold exactly on
        // edges and vertices.
        for i in 0..m {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % m];
            if point_on_segment(x, a, b, 1e-12) {
                return true;
            }
        }
        let mut inside = false;
        for i in 0..m {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % m];
            if (a[1] > x[1]) != (b[1] > x[1]) {
                let t = (x[1] - a[1]) / (b[1] - a[1]);
                let cx = a[0] + t * (b[0] - a[0]);
                if x[0] < cx {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

fn cross(o: P2, a: P2, b: P2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn point_on_segment(p: P2, a: P2, b: P2, tol: f64) -> bool {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    if cross(a, b, p).abs() > tol * len.max(1.0) {
        return false;
    }
    let dot = (p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1]);
    (-tol..=(len * len + tol)).contains(&dot)
}

/// Proper or touching intersection of closed segments, excluding the case of
/// merely sharing an endpoint.
fn segments_intersect(a1: P2, a2: P2, b1: P2, b2: P2) -> bool {
    let shares_endpoint = a1 == b1 || a1 == b2 || a2 == b1 || a2 == b2;
    let d1 = cross(b1, b2, a1);
    let d2 = cross(b1, b2, a2);
    let d3 = cross(a1, a2, b1);
    let d4 = cross(a1, a2, b2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    if shares_endpoint {
        return false;
    }
    let on = |p, a, b| point_on_segment(p, a, b, 1e-14);
    (d1 == 0.0 && on(a1, b1, b2))
        || (d2 == 0.0 && on(a2, b1, b2))
        || (d3 == 0.0 && on(b1, a1, a2))
        || (d4 == 0.0 && on(b2, a1, a2))
}

/// Boundary loops of the pixel union as rectilinear polygons: outer loops
/// counterclockwise, holes clockwise, interior always on the walker's left.
///
/// Two pixels meeting only at a corner stay in separate loops (the walker
/// takes the most-left turn at such pinch corners), so each loop is simple.
/// Collinear lattice corners along straight runs are kept as vertices.
pub fn trace_pixel_boundary(p: &PixelSet) -> Result<Vec<Polygon>> {
    if p.cells.is_empty() {
        return Err(Error::Geometry("empty pixel set has no boundary".into()));
    }
    // Corners live on the doubled lattice: cell (a,b) has corners
    // (2a +- 1, 2b +- 1); geometric point = corner / (2n).
    // Directed exposed edges keep the cell on the left.
    use std::collections::HashMap;
    let mut edges: HashMap<(i64, i64), Vec<(i64, i64)>> = HashMap::new();
    let mut push = |from: (i64, i64), to: (i64, i64)| {
        edges.entry(from).or_default().push(to);
    };
    for &(a, b) in &p.cells {
        let (e, n, w, s) = (
            p.cells.contains(&(a + 1, b)),
            p.cells.contains(&(a, b + 1)),
            p.cells.contains(&(a - 1, b)),
            p.cells.contains(&(a, b - 1)),
        );
        let (x0, x1, y0, y1) = (2 * a - 1, 2 * a + 1, 2 * b - 1, 2 * b + 1);
        if !e {
            push((x1, y0), (x1, y1)); // northward, cell to the west/left
        }
        if !n {
            push((x1, y1), (x0, y1)); // westward
        }
        if !w {
            push((x0, y1), (x0, y0)); // southward
        }
        if !s {
            push((x0, y0), (x1, y0)); // eastward
        }
    }
    for outs in edges.values_mut() {
        outs.sort_unstable();
    }
    let mut remaining: BTreeSet<((i64, i64), (i64, i64))> = edges
        .iter()
        .flat_map(|(f, ts)| ts.iter().map(move |t| (*f, *t)))
        .collect();
    let scale = 1.0 / (2.0 * p.n as f64);
    let mut loops = Vec::new();
    while let Some(&(start, first_to)) = remaining.iter().next() {
        let mut verts: Vec<(i64, i64)> = vec![start];
        let mut cur = first_to;
        let mut dir = (first_to.0 - start.0, first_to.1 - start.1);
        remaining.remove(&(start, first_to));
        while cur != start {
            verts.push(cur);
            let outs = edges.get(&cur).ok_or_else(|| {
                Error::Geometry(format!("boundary trace dead-ends at corner {cur:?}"))
            })?;
            // Most-left turn first: left of dir, then straight, then right.
            let left = (-dir.1, dir.0);
            let candidates = [left, dir, (dir.1, -dir.0)];
            let mut next = None;
            'outer: for cand in candidates {
                for &t in outs {
                    let d = (t.0 - cur.0, t.1 - cur.1);
                    if d == cand && remaining.contains(&(cur, t)) {
                        next = Some((t, d));
                        break 'outer;
                    }
                }
            }
            let (t, d) = next.ok_or_else(|| {
                Error::Geometry(format!("boundary trace stuck at corner {cur:?}"))
            })?;
            remaining.remove(&(cur, t));
            cur = t;
            dir = d;
        }
        let vertices = verts
            .into_iter()
            .map(|(u, v)| [u as f64 * scale, v as f64 * scale])
            .collect();
        loops.push(Polygon::new(vertices)?);
    }
    Ok(loops)
}

/// Koch snowflake prefractal: level 0 is the equilateral triangle with
/// circumradius `scale` (apex up); each level replaces every edge by four
/// edges of one-third length bulging outward. Vertex count is `3 * 4^level`.
pub fn koch_prefractal(level: usize, scale: f64, center: P2) -> Polygon {
    let mut vs: Vec<C64> = (0..3)
        .map(|j| {
            let th = PI / 2.0 + 2.0 * PI * j as f64 / 3.0;
            C64::new(center[0] + scale * th.cos(), center[1] + scale * th.sin())
        })
        .collect();
    for _ in 0..level {
        let m = vs.len();
        let mut next = Vec::with_capacity(4 * m);
        for i in 0..m {
            let a = vs[i];
            let b = vs[(i + 1) % m];
            let d = b - a;
            // CCW walk keeps the interior left; the bump points right (-i d).
            let tip = (a + b) * 0.5 + C64::new(0.0, -1.0) * d * (3.0f64.sqrt() / 6.0);
            next.push(a);
            next.push(a + d / 3.0);
            next.push(tip);
            next.push(a + d * (2.0 / 3.0));
        }
        vs = next;
    }
    Polygon {
        vertices: vs.into_iter().map(|z| [z.re, z.im]).collect(),
    }
}

/// Chord-polygon approximation of a circle, vertices on the circle.
pub fn disk_polygon(radius: f64, center: P2, m: usize) -> Polygon {
    Polygon {
        vertices: (0..m)
            .map(|j| {
                let th = 2.0 * PI * j as f64 / m as f64;
                [
                    center[0] + radius * th.cos(),
                    center[1] + radius * th.sin(),
                ]
            })
            .collect(),
    }
}

/// Convex interface polygon with corners on the circle of radius `X` at
/// equidistant angles `2 pi j / m_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfacePolygon {
    pub x_radius: f64,
    pub corners: Vec<P2>,
    pub angles: Vec<f64>,
}

impl InterfacePolygon {
    pub fn apothem(&self) -> f64 {
        self.x_radius * (PI / self.corners.len() as f64).cos()
    }

    pub fn polygon(&self) -> Polygon {
        Polygon {
            vertices: self.corners.clone(),
        }
    }
}

pub fn ball_polygon(x_radius: f64, m_b: usize) -> Result<InterfacePolygon> {
    if m_b < 3 || x_radius <= 0.0 {
        return Err(Error::Invalid {
            what: "interface",
            detail: format!("need m_b >= 3 and X > 0, got m_b={m_b}, X={x_radius}"),
        });
    }
    let mut corners = Vec::with_capacity(m_b);
    let mut angles = Vec::with_capacity(m_b);
    for j in 0..m_b {
        let th = 2.0 * PI * j as f64 / m_b as f64;
        corners.push([x_radius * th.cos(), x_radius * th.sin()]);
        angles.push(th);
    }
    Ok(InterfacePolygon {
        x_radius,
        corners,
        angles,
    })
}

/// Which set-distance to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetMetric {
    Hausdorff,
    AttouchWets,
}

/// Set distance value; `truncation` bounds the tail dropped by cutting the
/// Attouch-Wets sum at `K_max` (zero for Hausdorff).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetDistance {
    pub value: f64,
    pub truncation: f64,
}

fn dist_to_set(x: P2, s: &[P2]) -> f64 {
    s.iter()
        .map(|p| ((p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min)
}

fn hausdorff(a: &[P2], b: &[P2]) -> f64 {
    let d_ab = a
        .iter()
        .map(|&p| dist_to_set(p, b))
        .fold(0.0f64, f64::max);
    let d_ba = b
        .iter()
        .map(|&p| dist_to_set(p, a))
        .fold(0.0f64, f64::max);
    d_ab.max(d_ba)
}

/// Distance between finite point sets. Hausdorff is exact. Attouch-Wets sums
/// `2^-k min(1, sup_{|x|<k} |d(x,A) - d(x,B)|)` over `k = 1..=k_max`: once
/// the ball `|x| < k` contains both sets the inner sup equals the Hausdorff
/// distance exactly; smaller `k` are evaluated on a grid of pitch
/// `grid_pitch` (default `2^(-k_max/2)` when not given).
pub fn set_distance(
    a: &[P2],
    b: &[P2],
    metric: SetMetric,
    k_max: u32,
    grid_pitch: Option<f64>,
) -> Result<SetDistance> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Invalid {
            what: "set_distance",
            detail: "both point sets must be non-empty".into(),
        });
    }
    match metric {
        SetMetric::Hausdorff => Ok(SetDistance {
            value: hausdorff(a, b),
            truncation: 0.0,
        }),
        SetMetric::AttouchWets => {
            let dh = hausdorff(a, b);
            let max_norm = a
                .iter()
                .chain(b.iter())
                .map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt())
                .fold(0.0f64, f64::max);
            let pitch = grid_pitch.unwrap_or_else(|| 2.0f64.powf(-(k_max as f64) / 2.0));
            let mut value = 0.0;
            for k in 1..=k_max {
                let kf = k as f64;
                let s_k = if max_norm < kf {
                    dh
                } else {
                    // Grid sup of |d(x,A) - d(x,B)| over |x| < k.
                    let steps = (2.0 * kf / pitch).ceil() as i64;
                    let mut sup = 0.0f64;
                    for i in -steps..=steps {
                        for j in -steps..=steps {
                            let x = [i as f64 * pitch, j as f64 * pitch];
                            if x[0] * x[0] + x[1] * x[1] >= kf * kf {
                                continue;
                            }
                            sup = sup.max((dist_to_set(x, a) - dist_to_set(x, b)).abs());
                        }
                    }
                    sup
                };
                value += 2.0f64.powi(-(k as i32)) * s_k.min(1.0);
            }
            Ok(SetDistance {
                value,
                truncation: 2.0f64.powi(-(k_max as i32)),
            })
        }
    }
}

/// Parse a PGM bitmap (P2 or P5) into a pixel-oracle obstacle; any nonzero
/// sample counts as inside. Row 0 of the file is the top of the image.
pub fn pixel_oracle_from_pgm(bytes: &[u8], origin: P2, pitch: f64) -> Result<ObstacleSpec> {
    let mut pos = 0usize;
    let mut tokens: Vec<Vec<u8>> = Vec::new();
    // Header tokens: magic, width, height, maxval (comments skipped).
    while tokens.len() < 4 && pos < bytes.len() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos > start {
            tokens.push(bytes[start..pos].to_vec());
        }
    }
    let parse_err = |detail: String| Error::Parse { line: 0, detail };
    if tokens.len() < 4 {
        return Err(parse_err("truncated PGM header".into()));
    }
    let magic = String::from_utf8_lossy(&tokens[0]).to_string();
    let width: usize = String::from_utf8_lossy(&tokens[1])
        .parse()
        .map_err(|_| parse_err("bad width".into()))?;
    let height: usize = String::from_utf8_lossy(&tokens[2])
        .parse()
        .map_err(|_| parse_err("bad height".into()))?;
    let _maxval: usize = String::from_utf8_lossy(&tokens[3])
        .parse()
        .map_err(|_| parse_err("bad maxval".into()))?;
    let mut data = vec![vec![false; width]; height];
    match magic.as_str() {
        "P5" => {
            pos += 1; // single whitespace after maxval
            if bytes.len() < pos + width * height {
                return Err(parse_err("truncated P5 pixel data".into()));
            }
            for (r, row) in data.iter_mut().enumerate() {
                for (c, v) in row.iter_mut().enumerate() {
                    *v = bytes[pos + r * width + c] != 0;
                }
            }
        }
        "P2" => {
            let text = String::from_utf8_lossy(&bytes[pos..]);
            let mut vals = text.split_ascii_whitespace();
            for (r, row) in data.iter_mut().enumerate() {
                for (c, v) in row.iter_mut().enumerate() {
                    let t = vals
                        .next()
                        .ok_or_else(|| parse_err("truncated P2 pixel data".into()))?;
                    *v = t.parse::<i64>().map_err(|_| {
                        parse_err(format!("bad sample at row {r}, column {c}"))
                    })? != 0;
                }
            }
        }
        other => {
            return Err(parse_err(format!("unsupported magic {other:?}")));
        }
    }
    let spec = ObstacleSpec::PixelOracle {
        data,
        origin,
        pitch,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn membership_examples() {
        let disk = ObstacleSpec::Disk {
            radius: 0.5,
            center: [0.0, 0.0],
        };
        assert!(membership(&disk, [0.0, 0.0]));
        assert!(membership(&disk, [0.5, 0.0])); // closed set
        assert!(!membership(&disk, [0.51, 0.0]));

        let julia = ObstacleSpec::Julia {
            c: C64::new(0.0, 0.0),
            max_iter: 400,
            bailout: 2.0,
            scale: 1.0,
            center: [0.0, 0.0],
        };
        // c = 0 filled Julia set is the closed unit disk.
        assert!(!membership(&julia, [2.0, 0.0]));
        assert!(membership(&julia, [0.5, 0.0]));
        assert!(membership(&julia, [1.0, 0.0]));
        assert!(!membership(&julia, [1.01, 0.0]));

        let koch = ObstacleSpec::Koch {
            level: 0,
            scale: 1.0,
            center: [0.3, -0.2],
        };
        assert!(membership(&koch, [0.3, -0.2])); // centroid
        assert!(!membership(&koch, [1.4, -0.2]));
    }

    #[test]
    fn pixelate_disk_examples() {
        let disk = ObstacleSpec::Disk {
            radius: 0.5,
            center: [0.0, 0.0],
        };
        let p1 = pixelate(&disk, 1).unwrap();
        assert_eq!(p1.cells.iter().copied().collect::<Vec<_>>(), vec![(0, 0)]);
        let p2 = pixelate(&disk, 2).unwrap();
        let want: BTreeSet<(i64, i64)> =
            [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)].into_iter().collect();
        assert_eq!(p2.cells, want);
        let none = pixelate(&ObstacleSpec::None, 4).unwrap();
        assert!(none.cells.is_empty());
    }

    #[test]
    fn trace_single_pixel() {
        let p = PixelSet {
            n: 1,
            cells: [(0, 0)].into_iter().collect(),
        };
        let loops = trace_pixel_boundary(&p).unwrap();
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].vertices.len(), 4);
        assert!((loops[0].perimeter() - 4.0).abs() < 1e-12);
        assert!(loops[0].is_ccw());
    }

    #[test]
    fn trace_plus_shape() {
        let disk = ObstacleSpec::Disk {
            radius: 0.5,
            center: [0.0, 0.0],
        };
        let p = pixelate(&disk, 2).unwrap();
        let loops = trace_pixel_boundary(&p).unwrap();
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].vertices.len(), 12);
        assert!((loops[0].perimeter() - 6.0).abs() < 1e-12);
        assert!(loops[0].is_ccw());
    }

    #[test]
    fn trace_diagonal_pixels_split() {
        let p = PixelSet {
            n: 1,
            cells: [(0, 0), (1, 1)].into_iter().collect(),
        };
        let loops = trace_pixel_boundary(&p).unwrap();
        assert_eq!(loops.len(), 2);
        for l in &loops {
            assert_eq!(l.vertices.len(), 4);
            assert!(l.is_ccw());
        }
    }

    #[test]
    fn trace_ring_has_cw_hole() {
        // 3x3 block minus center: outer loop CCW, hole CW.
        let cells: BTreeSet<(i64, i64)> = (-1..=1)
            .flat_map(|a| (-1..=1).map(move |b| (a, b)))
            .filter(|&c| c != (0, 0))
            .collect();
        let p = PixelSet { n: 1, cells };
        let mut loops = trace_pixel_boundary(&p).unwrap();
        loops.sort_by(|a, b| {
            b.signed_area()
                .abs()
                .partial_cmp(&a.signed_area().abs())
                .unwrap()
        });
        assert_eq!(loops.len(), 2);
        assert!(loops[0].is_ccw());
        assert!(!loops[1].is_ccw());
        assert!((loops[0].perimeter() - 12.0).abs() < 1e-12);
        assert!((loops[1].perimeter() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn koch_counts_and_perimeter_ratio() {
        for level in 0..=4usize {
            let p = koch_prefractal(level, 1.0, [0.0, 0.0]);
            assert_eq!(p.vertices.len(), 3 * 4usize.pow(level as u32));
            assert!(p.is_ccw());
            for v in &p.vertices {
                let r = (v[0] * v[0] + v[1] * v[1]).sqrt();
                assert!(r <= 1.0 + 1e-12, "vertex radius {r}");
            }
            if level >= 1 {
                let prev = koch_prefractal(level - 1, 1.0, [0.0, 0.0]);
                let ratio = p.perimeter() / prev.perimeter();
                assert!((ratio - 4.0 / 3.0).abs() < 1e-12);
            }
            if level <= 3 {
                p.validate().unwrap(); // simple at low levels (O(m^2) check)
            }
        }
        assert_eq!(koch_prefractal(1, 0.7, [0.1, 0.0]).vertices.len(), 12);
    }

    #[test]
    fn ball_polygon_geometry() {
        let sq = ball_polygon(1.0, 4).unwrap();
        assert!((sq.apothem() - 0.5f64.sqrt()).abs() < 1e-14);
        for (c, th) in sq.corners.iter().zip(sq.angles.iter()) {
            let r = (c[0] * c[0] + c[1] * c[1]).sqrt();
            assert!((r - 1.0).abs() <= 1e-12);
            assert!((c[0] - th.cos()).abs() < 1e-12);
        }
        let tri = ball_polygon(2.0, 3).unwrap();
        for c in &tri.corners {
            let r = (c[0] * c[0] + c[1] * c[1]).sqrt();
            assert!((r - 2.0).abs() <= 2e-12);
        }
        assert!(ball_polygon(1.0, 2).is_err());
        // Sagitta shrinks as m_b grows.
        let many = ball_polygon(1.0, 512).unwrap();
        assert!(1.0 - many.apothem() < 2e-5);
    }

    #[test]
    fn set_distance_basics() {
        let a = [[0.0, 0.0]];
        let b = [[1.0, 0.0]];
        let d = set_distance(&a, &a, SetMetric::Hausdorff, 0, None).unwrap();
        assert_eq!(d.value, 0.0);
        let d = set_distance(&a, &b, SetMetric::Hausdorff, 0, None).unwrap();
        assert_eq!(d.value, 1.0);
        let aw = set_distance(&a, &a, SetMetric::AttouchWets, 10, None).unwrap();
        assert_eq!(aw.value, 0.0);
        assert!(set_distance(&[], &b, SetMetric::Hausdorff, 0, None).is_err());
    }

    #[test]
    fn attouch_wets_regression_zero_one() {
        // Frozen grid-oracle value for A={0}, B={1}, K_max=20, default pitch.
        let a = [[0.0, 0.0]];
        let b = [[1.0, 0.0]];
        let d = set_distance(&a, &b, SetMetric::AttouchWets, 20, None).unwrap();
        assert!((d.truncation - 2.0f64.powi(-20)).abs() < 1e-18);
        assert!(d.value <= 1.0);
        assert!(d.value > 0.5);
        let frozen = d.value;
        let again = set_distance(&a, &b, SetMetric::AttouchWets, 20, None).unwrap();
        assert_eq!(frozen, again.value);
        // Every term's sup equals 1: for k >= 2 both points fit in the ball
        // so s_k is the Hausdorff distance, and for k = 1 the sup is attained
        // on the grid along the ray beyond A, where the distance difference
        // is exactly |AB|. Hence the value is sum of 2^-k, k = 1..=20.
        assert!((d.value - (1.0 - 2.0f64.powi(-20))).abs() < 1e-12);
    }

    #[test]
    fn disk_boundary_hausdorff_convergence() {
        // Pixel boundary vs the true circle; deviation is at most half a cell
        // diagonal plus chord sampling slack.
        let disk = ObstacleSpec::Disk {
            radius: 0.5,
            center: [0.0, 0.0],
        };
        let circle: Vec<P2> = (0..2000)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / 2000.0;
                [0.5 * th.cos(), 0.5 * th.sin()]
            })
            .collect();
        let mut prev = f64::INFINITY;
        for n in [4u32, 8, 16, 32] {
            let p = pixelate(&disk, n).unwrap();
            let loops = trace_pixel_boundary(&p).unwrap();
            let mut pts: Vec<P2> = Vec::new();
            for l in &loops {
                let m = l.vertices.len();
                for i in 0..m {
                    let a = l.vertices[i];
                    let b = l.vertices[(i + 1) % m];
                    for t in 0..4 {
                        let t = t as f64 / 4.0;
                        pts.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                    }
                }
            }
            let d = set_distance(&pts, &circle, SetMetric::Hausdorff, 0, None)
                .unwrap()
                .value;
            let bound = 2.0f64.sqrt() / (2.0 * n as f64) + 0.05 / n as f64;
            assert!(d <= bound, "n={n}: {d} > {bound}");
            assert!(d < prev, "n={n}: no decrease ({d} vs {prev})");
            prev = d;
        }
    }

    #[test]
    fn polygon_validation() {
        assert!(Polygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).is_ok());
        assert!(Polygon::new(vec![[0.0, 0.0], [1.0, 0.0]]).is_err());
        // Bowtie self-intersection.
        assert!(Polygon::new(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]).is_err());
        // Repeated consecutive vertex.
        assert!(Polygon::new(vec![[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]).is_err());
    }

    #[test]
    fn pgm_import_round_trip() {
        let text = b"P2\n# comment\n3 2\n255\n0 255 0\n255 255 0\n";
        let spec = pixel_oracle_from_pgm(text, [0.0, 0.0], 1.0).unwrap();
        // Bottom row of the image is the second data row.
        assert!(membership(&spec, [0.5, 0.5])); // (0,0) cell: bottom-left, 255
        assert!(membership(&spec, [1.5, 0.5]));
        assert!(!membership(&spec, [2.5, 0.5]));
        assert!(!membership(&spec, [0.5, 1.5]));
        assert!(membership(&spec, [1.5, 1.5]));
        assert!(!membership(&spec, [-0.5, 0.5]));
        let mut p5 = b"P5 3 2 255 ".to_vec();
        p5.extend_from_slice(&[0, 1, 0, 1, 1, 0]);
        let spec5 = pixel_oracle_from_pgm(&p5, [0.0, 0.0], 1.0).unwrap();
        assert!(membership(&spec5, [0.5, 0.5]));
        assert!(!membership(&spec5, [2.5, 1.5]));
    }

    #[test]
    fn julia_validation_rules() {
        let bad = ObstacleSpec::Julia {
            c: C64::new(0.0, 0.0),
            max_iter: 10,
            bailout: 1.0,
            scale: 1.0,
            center: [0.0, 0.0],
        };
        assert!(bad.validate().is_err());
        let bad_level = ObstacleSpec::Koch {
            level: 9,
            scale: 1.0,
            center: [0.0, 0.0],
        };
        assert!(bad_level.validate().is_err());
    }

    proptest! {
        #[test]
        fn pixel_perimeter_partition(cells in proptest::collection::btree_set((-6i64..6, -6i64..6), 1..40)) {
            let p = PixelSet { n: 2, cells };
            let exposed: usize = p
                .cells
                .iter()
                .map(|&(a, b)| {
                    [(a + 1, b), (a - 1, b), (a, b + 1), (a, b - 1)]
                        .iter()
                        .filter(|n| !p.cells.contains(n))
                        .count()
                })
                .sum();
            let loops = trace_pixel_boundary(&p).unwrap();
            let total: f64 = loops.iter().map(|l| l.perimeter()).sum();
            let edge_count: usize = loops.iter().map(|l| l.vertices.len()).sum();
            prop_assert_eq!(edge_count, exposed);
            prop_assert!((total - exposed as f64 * 0.5).abs() < 1e-9);
            for l in &loops {
                l.validate().unwrap();
            }
        }

        #[test]
        fn pixelate_monotone_in_radius(r1 in 0.1f64..0.9, dr in 0.0f64..0.8, n in 1u32..6) {
            let small = ObstacleSpec::Disk { radius: r1, center: [0.1, -0.2] };
            let big = ObstacleSpec::Disk { radius: r1 + dr, center: [0.1, -0.2] };
            let ps = pixelate(&small, n).unwrap();
            let pb = pixelate(&big, n).unwrap();
            prop_assert!(ps.cells.is_subset(&pb.cells));
        }

        #[test]
        fn set_distance_symmetry_and_identity(
            a in proptest::collection::vec(([-3.0f64..3.0, -3.0f64..3.0]), 1..12),
            b in proptest::collection::vec(([-3.0f64..3.0, -3.0f64..3.0]), 1..12),
        ) {
            let ab = set_distance(&a, &b, SetMetric::Hausdorff, 0, None).unwrap().value;
            let ba = set_distance(&b, &a, SetMetric::Hausdorff, 0, None).unwrap().value;
            prop_assert_eq!(ab, ba);
            let aa = set_distance(&a, &a, SetMetric::Hausdorff, 0, None).unwrap().value;
            prop_assert_eq!(aa, 0.0);
            let awab = set_distance(&a, &b, SetMetric::AttouchWets, 6, Some(0.25)).unwrap().value;
            let awba = set_distance(&b, &a, SetMetric::AttouchWets, 6, Some(0.25)).unwrap().value;
            prop_assert!((awab - awba).abs() < 1e-12);
        }

        #[test]
        fn hausdorff_triangle_inequality(
            a in proptest::collection::vec(([-2.0f64..2.0, -2.0f64..2.0]), 1..8),
            b in proptest::collection::vec(([-2.0f64..2.0, -2.0f64..2.0]), 1..8),
            c in proptest::collection::vec(([-2.0f64..2.0, -2.0f64..2.0]), 1..8),
        ) {
            let ab = set_distance(&a, &b, SetMetric::Hausdorff, 0, None).unwrap().value;
            let bc = set_distance(&b, &c, SetMetric::Hausdorff, 0, None).unwrap().value;
            let ac = set_distance(&a, &c, SetMetric::Hausdorff, 0, None).unwrap().value;
            prop_assert!(ac <= ab + bc + 1e-12);
        }
    }
}
