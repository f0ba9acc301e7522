//! Run configuration: strict TOML parsing, defaults, semantic validation
//! with field paths, and a canonical re-emission that round-trips.

use rough_resonance_core::geometry::ObstacleSpec;
use rough_resonance_core::zerofind::BoxRect;
use rough_resonance_core::C64;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Obstacle description; `kind` selects which of the remaining fields apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObstacleSection {
    /// One of `disk`, `koch`, `julia`, `pixels`, `none`.
    pub kind: String,
    pub radius: f64,
    pub center: [f64; 2],
    /// Koch prefractal level.
    pub level: usize,
    /// Koch circumradius, or the Julia affine scale.
    pub scale: f64,
    /// Julia parameter as `[re, im]`.
    pub c: [f64; 2],
    pub max_iter: usize,
    pub bailout: f64,
    /// Bitmap file for `pixels`: one row per line, `0`/`1` characters.
    pub bitmap: String,
    pub origin: [f64; 2],
    pub pitch: f64,
}

impl Default for ObstacleSection {
    fn default() -> Self {
        ObstacleSection {
            kind: "disk".into(),
            radius: 0.5,
            center: [0.0, 0.0],
            level: 3,
            scale: 0.5,
            c: [0.0, 0.0],
            max_iter: 128,
            bailout: 2.0,
            bitmap: String::new(),
            origin: [0.0, 0.0],
            pitch: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    /// Radius of the circular interface.
    pub x_radius: f64,
    /// Pixelation resolution (cells per unit length).
    pub pixel_n: u32,
    /// Interface polygon corner count; 0 chooses it from the mesh width.
    pub m_b: usize,
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection {
            x_radius: 1.0,
            pixel_n: 128,
            m_b: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationSection {
    pub h_target: f64,
    /// Fourier truncation; 0 selects it by the diagonal-scan heuristic.
    pub n_trunc: i64,
    /// Spectral corrector depth, capped at the FEM dimension.
    pub j_corr: usize,
    /// Reference wavenumber as `[re, im]`.
    pub k0: [f64; 2],
}

impl Default for DiscretizationSection {
    fn default() -> Self {
        DiscretizationSection {
            h_target: 0.05,
            n_trunc: 0,
            j_corr: 100,
            k0: [-1.0, -1.0],
        }
    }
}

/// The paper's 19 Julia sweep parameters.
fn default_q_values() -> Vec<f64> {
    let mut q: Vec<f64> = (0..=14).map(|i| 0.05 * i as f64).collect();
    q.extend([0.71, 0.72, 0.73, 0.733]);
    q
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSection {
    /// Search window `[re_min, re_max, im_min, im_max]`.
    pub rect: [f64; 4],
    /// Contour resolutions `[n_re, n_im]`.
    pub grid: [usize; 2],
    /// Certification resolution exponent.
    pub cert_n: u32,
    /// Explicit search seeds; empty means grid-minima seeding.
    pub seeds: Vec<[f64; 2]>,
    /// Percentile threshold for grid-minima seeding.
    pub seed_percentile: f64,
    pub max_seeds: usize,
    /// Search stops once `|det T| < stop`.
    pub stop: f64,
    pub q_values: Vec<f64>,
    pub koch_levels: Vec<usize>,
    /// Mesh widths of the convergence table.
    pub h_values: Vec<f64>,
}

impl Default for TaskSection {
    fn default() -> Self {
        TaskSection {
            rect: [-2.0, 0.0, -2.0, -0.1],
            grid: [41, 41],
            cert_n: 4,
            seeds: Vec::new(),
            seed_percentile: 25.0,
            max_seeds: 8,
            stop: 1e-10,
            q_values: default_q_values(),
            koch_levels: vec![2, 3, 4, 5],
            h_values: vec![0.08, 0.05, 0.02, 0.01],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub cache: bool,
    /// Worker threads; 0 keeps the library default.
    pub threads: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "out".into(),
            cache: true,
            threads: 0,
        }
    }
}

/// Fully validated run configuration with every default materialised.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub obstacle: ObstacleSection,
    pub geometry: GeometrySection,
    pub discretization: DiscretizationSection,
    pub task: TaskSection,
    pub output: OutputSection,
}

/// Configuration failure: a syntax error with position or a semantic
/// violation with its field path.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(path: &str, detail: impl fmt::Display) -> ConfigError {
    ConfigError(format!("{path}: {detail}"))
}

impl RunConfig {
    /// The declarative obstacle for the configured kind.
    pub fn obstacle_spec(&self) -> Result<ObstacleSpec, ConfigError> {
        let o = &self.obstacle;
        let spec = match o.kind.as_str() {
            "disk" => ObstacleSpec::Disk {
                radius: o.radius,
                center: o.center,
            },
            "koch" => ObstacleSpec::Koch {
                level: o.level,
                scale: o.scale,
                center: o.center,
            },
            "julia" => ObstacleSpec::Julia {
                c: C64::new(o.c[0], o.c[1]),
                max_iter: o.max_iter,
                bailout: o.bailout,
                scale: o.scale,
                center: o.center,
            },
            "pixels" => {
                let text = std::fs::read_to_string(&o.bitmap)
                    .map_err(|e| err("obstacle.bitmap", format!("{}: {e}", o.bitmap)))?;
                let data: Vec<Vec<bool>> = text
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(|l| l.trim().chars().map(|c| c == '1').collect())
                    .collect();
                ObstacleSpec::PixelOracle {
                    data,
                    origin: o.origin,
                    pitch: o.pitch,
                }
            }
            "none" => ObstacleSpec::None,
            other => {
                return Err(err(
                    "obstacle.kind",
                    format!("unknown kind {other:?}; expected disk, koch, julia, pixels or none"),
                ))
            }
        };
        spec.validate().map_err(|e| err("obstacle", e))?;
        Ok(spec)
    }

    /// Smallest disk radius about the origin certain to contain the
    /// obstacle.
    pub fn obstacle_extent(&self) -> f64 {
        let o = &self.obstacle;
        let center = (o.center[0].powi(2) + o.center[1].powi(2)).sqrt();
        match o.kind.as_str() {
            "disk" => center + o.radius,
            // The prefractal stays inside the circumcircle of its base
            // triangle.
            "koch" => center + o.scale,
            // Filled Julia sets of z^2 + c live in the escape disk of
            // radius (1 + sqrt(1 + 4|c|)) / 2.
            "julia" => {
                let cq = (o.c[0].powi(2) + o.c[1].powi(2)).sqrt();
                center + o.scale * 0.5 * (1.0 + (1.0 + 4.0 * cq).sqrt())
            }
            // Without reading the bitmap only the origin corner is known;
            // the mesh stage enforces actual containment.
            "pixels" => (o.origin[0].powi(2) + o.origin[1].powi(2)).sqrt(),
            _ => 0.0,
        }
    }

    pub fn k0(&self) -> C64 {
        C64::new(self.discretization.k0[0], self.discretization.k0[1])
    }

    pub fn rect(&self) -> Result<BoxRect, ConfigError> {
        let r = self.task.rect;
        if !(r[3] < 0.0) {
            return Err(err(
                "task.rect",
                "search rectangle must lie in the lower half plane",
            ));
        }
        BoxRect::new(r[0], r[1], r[2], r[3]).map_err(|e| err("task.rect", e))
    }

    /// Semantic validation; returns non-fatal warnings (the analysis-margin
    /// check is a warning for fidelity with reported configurations).
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        let mut warnings = Vec::new();
        self.obstacle_spec().map(|_| ())?;
        let g = &self.geometry;
        if !(g.x_radius > 0.0) {
            return Err(err("geometry.x_radius", "must be positive"));
        }
        if g.pixel_n == 0 {
            return Err(err("geometry.pixel_n", "must be at least 1"));
        }
        if g.m_b != 0 && g.m_b < 3 {
            return Err(err("geometry.m_b", "needs at least 3 corners (or 0 for auto)"));
        }
        let d = &self.discretization;
        if !(d.h_target > 0.0) {
            return Err(err("discretization.h_target", "must be positive"));
        }
        if d.n_trunc < 0 {
            return Err(err("discretization.n_trunc", "must be nonnegative (0 = auto)"));
        }
        if !(d.k0[1] < 0.0) {
            return Err(err(
                "discretization.k0",
                "reference wavenumber must lie in the lower half plane",
            ));
        }
        self.rect().map(|_| ())?;
        let t = &self.task;
        if t.grid[0] < 2 || t.grid[1] < 2 {
            return Err(err("task.grid", "both resolutions must be at least 2"));
        }
        if t.cert_n == 0 {
            return Err(err("task.cert_n", "must be at least 1"));
        }
        if !(t.stop > 0.0) {
            return Err(err("task.stop", "must be positive"));
        }
        if !(0.0..=100.0).contains(&t.seed_percentile) {
            return Err(err("task.seed_percentile", "must lie in [0, 100]"));
        }
        if t.max_seeds == 0 {
            return Err(err("task.max_seeds", "must be at least 1"));
        }
        for (i, s) in t.seeds.iter().enumerate() {
            if !(s[1] < 0.0) {
                return Err(err(
                    &format!("task.seeds[{i}]"),
                    "seeds must lie in the lower half plane",
                ));
            }
        }
        for (i, q) in t.q_values.iter().enumerate() {
            if !q.is_finite() {
                return Err(err(&format!("task.q_values[{i}]"), "must be finite"));
            }
        }
        for (i, l) in t.koch_levels.iter().enumerate() {
            if *l > 8 {
                return Err(err(&format!("task.koch_levels[{i}]"), "level cap is 8"));
            }
        }
        if t.h_values.is_empty() {
            return Err(err("task.h_values", "needs at least one mesh width"));
        }
        if t.h_values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(err("task.h_values", "mesh widths must decrease strictly"));
        }
        if self.output.dir.is_empty() {
            return Err(err("output.dir", "must not be empty"));
        }
        // Analysis margin: the convergence theory keeps the obstacle inside
        // the unit-deflated interface ball. Reported configurations violate
        // it (interface radius 1 around a radius-1/2 disk), so this warns.
        let extent = self.obstacle_extent();
        if self.obstacle.kind != "none" && extent >= g.x_radius - 1.0 {
            warnings.push(format!(
                "geometry.x_radius: obstacle extent {extent:.3} exceeds the analysis margin \
                 (x_radius - 1 = {:.3}); proceeding anyway",
                g.x_radius - 1.0
            ));
        }
        Ok(warnings)
    }

    /// Canonical TOML with every field explicit; reparsing yields an equal
    /// configuration.
    pub fn canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization cannot fail")
    }
}

/// Parse strict TOML into a validated configuration; unknown keys are
/// errors. Returns the configuration and any non-fatal warnings.
pub fn parse_config(text: &str) -> Result<(RunConfig, Vec<String>), ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
    let warnings = cfg.validate()?;
    Ok((cfg, warnings))
}
