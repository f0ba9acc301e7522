//! Command pipeline: obstacle rasterisation, meshing, model assembly,
//! resonance search, certification, convergence tables and parameter
//! sweeps, with content-addressed caching and deterministic artifacts.

use crate::cache::{digest, Cache};
use crate::config::RunConfig;
use crate::jsonfmt::{cplx, field, field_last, num, string, Doc};
use rough_resonance_core::geometry::{
    ball_polygon, disk_polygon, koch_prefractal, pixelate, trace_pixel_boundary, InterfacePolygon,
    ObstacleSpec, Polygon,
};
use rough_resonance_core::mesh::{build_mesh, import_mesh, mesh_quality, TriMesh};
use rough_resonance_core::ntd::{
    build_model, optimal_n, SpectralModel, PRACTICAL_ROWS,
};
use rough_resonance_core::specfun::{hankel_row, hankel_zero};
use rough_resonance_core::zerofind::{
    anchored_refinement, contour_grid, minimize, zero_boxes, BoxRect, CertifiedRegion,
    CertifyRecord, ContourGrid, DetTarget, RefinementLevel, ResonanceResult, Verdict,
};
use rough_resonance_core::{C64, Error};
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

/// Pipeline subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Mesh,
    Model,
    Contour,
    Find,
    Certify,
    Converge,
    Sweep,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Mesh => "mesh",
            Command::Model => "model",
            Command::Contour => "contour",
            Command::Find => "find",
            Command::Certify => "certify",
            Command::Converge => "converge",
            Command::Sweep => "sweep",
        }
    }
}

/// Exit-code classes: configuration 2, geometry/mesh 3, model assembly 4,
/// search/certification 5, input-output 6.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_GEOMETRY: i32 = 3;
pub const EXIT_MODEL: i32 = 4;
pub const EXIT_TASK: i32 = 5;
pub const EXIT_IO: i32 = 6;

/// Failure tagged with its pipeline stage and exit-code class.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
    pub code: i32,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.message)
    }
}

impl std::error::Error for StageError {}

fn stage_err(stage: &'static str, code: i32, e: impl fmt::Display) -> StageError {
    StageError {
        stage,
        message: e.to_string(),
        code,
    }
}

fn lift<T>(stage: &'static str, code: i32, r: Result<T, Error>) -> Result<T, StageError> {
    r.map_err(|e| {
        let code = if matches!(e, Error::Io(_)) { EXIT_IO } else { code };
        stage_err(stage, code, e)
    })
}

/// What a run produced: artifact paths, cache keys served from disk, and
/// human summary lines.
#[derive(Debug, Default)]
pub struct RunOutcome {
    pub artifacts: Vec<PathBuf>,
    pub cache_hits: Vec<String>,
    pub summary: Vec<String>,
}

/// Execute one subcommand. Artifacts land in the configured output
/// directory; when `output.threads` is nonzero the whole run executes on a
/// dedicated pool of that size.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<RunOutcome, StageError> {
    let threads = cfg.output.threads;
    if threads == 0 {
        return run_inner(cmd, cfg);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| stage_err("config", EXIT_CONFIG, e))?;
    pool.install(|| run_inner(cmd, cfg))
}

fn run_inner(cmd: Command, cfg: &RunConfig) -> Result<RunOutcome, StageError> {
    let out_dir = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&out_dir).map_err(|e| stage_err("io", EXIT_IO, e))?;
    let cache = open_cache(cfg);
    let mut outcome = RunOutcome::default();
    match cmd {
        Command::Mesh => {
            run_mesh(cfg, &cache, &out_dir, &mut outcome)?;
        }
        Command::Model => {
            run_model(cfg, &cache, &out_dir, &mut outcome)?;
        }
        Command::Contour => run_contour(cfg, &cache, &out_dir, &mut outcome)?,
        Command::Find => run_find(cfg, &cache, &out_dir, &mut outcome)?,
        Command::Certify => run_certify(cfg, &cache, &out_dir, &mut outcome)?,
        Command::Converge => run_converge(cfg, &cache, &out_dir, &mut outcome)?,
        Command::Sweep => run_sweep(cfg, &cache, &out_dir, &mut outcome)?,
    }
    outcome.cache_hits = cache.hits();
    Ok(outcome)
}

/// Cache directory: `ROUGH_RESONANCE_CACHE` overrides, else `<out>/cache`;
/// disabled entirely by the config toggle.
fn open_cache(cfg: &RunConfig) -> Cache {
    if !cfg.output.cache {
        return Cache::disabled();
    }
    let dir = std::env::var_os("ROUGH_RESONANCE_CACHE")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(&cfg.output.dir).join("cache"));
    Cache::new(Some(dir))
}

fn write_artifact(
    out_dir: &Path,
    name: &str,
    contents: &str,
    outcome: &mut RunOutcome,
) -> Result<PathBuf, StageError> {
    let path = out_dir.join(name);
    fs::write(&path, contents).map_err(|e| stage_err("io", EXIT_IO, e))?;
    outcome.artifacts.push(path.clone());
    Ok(path)
}

// ---------------------------------------------------------------------------
// Geometry and mesh stages.

/// Boundary polygons for the configured obstacle. Disks and Koch
/// prefractals are polygonal at source resolution; Julia sets and bitmaps
/// go through lattice pixelation and boundary tracing.
fn obstacle_polygons(cfg: &RunConfig) -> Result<Vec<Polygon>, StageError> {
    let spec = cfg
        .obstacle_spec()
        .map_err(|e| stage_err("config", EXIT_CONFIG, e))?;
    let h = cfg.discretization.h_target;
    match &spec {
        ObstacleSpec::Disk { radius, center } => {
            let m = ((2.0 * PI * radius / (0.4 * h)).ceil() as usize).max(16);
            Ok(vec![disk_polygon(*radius, *center, m)])
        }
        ObstacleSpec::Koch {
            level,
            scale,
            center,
        } => Ok(vec![koch_prefractal(*level, *scale, *center)]),
        ObstacleSpec::Julia { .. } | ObstacleSpec::PixelOracle { .. } => {
            let px = lift(
                "geometry",
                EXIT_GEOMETRY,
                pixelate(&spec, cfg.geometry.pixel_n),
            )?;
            lift("geometry", EXIT_GEOMETRY, trace_pixel_boundary(&px))
        }
        ObstacleSpec::None => Ok(Vec::new()),
    }
}

/// Interface polygon; corner count 0 resolves from the mesh width.
fn interface(cfg: &RunConfig) -> Result<InterfacePolygon, StageError> {
    let x = cfg.geometry.x_radius;
    let m_b = if cfg.geometry.m_b != 0 {
        cfg.geometry.m_b
    } else {
        ((2.0 * PI * x / (0.4 * cfg.discretization.h_target)).ceil() as usize).max(16)
    };
    lift("geometry", EXIT_GEOMETRY, ball_polygon(x, m_b))
}

fn mesh_key(cfg: &RunConfig) -> String {
    let ident = serde_json::json!({
        "format": "mesh-v1",
        "obstacle": serde_json::to_value(&cfg.obstacle).unwrap(),
        "geometry": serde_json::to_value(&cfg.geometry).unwrap(),
        "h_target": format!("{:.17e}", cfg.discretization.h_target),
    });
    digest(&ident.to_string())
}

/// Mesh for the configured obstacle, served from the cache when possible.
fn obtain_mesh(cfg: &RunConfig, cache: &Cache) -> Result<TriMesh, StageError> {
    let key = mesh_key(cfg);
    if let Some(text) = cache.get(&key, "mesh.txt") {
        if let Ok(mesh) = import_mesh(&text) {
            return Ok(mesh);
        }
    }
    let obstacles = obstacle_polygons(cfg)?;
    let iface = interface(cfg)?;
    let mesh = lift(
        "mesh",
        EXIT_GEOMETRY,
        build_mesh(&obstacles, &iface, cfg.discretization.h_target),
    )?;
    cache
        .put(&key, "mesh.txt", &mesh.export_text())
        .map_err(|e| stage_err("io", EXIT_IO, e))?;
    Ok(mesh)
}

fn run_mesh(
    cfg: &RunConfig,
    cache: &Cache,
    out_dir: &Path,
    outcome: &mut RunOutcome,
) -> Result<TriMesh, StageError> {
    let mesh = obtain_mesh(cfg, cache)?;
    let (c_theta, h, d_n) = mesh_quality(&mesh);
    write_artifact(out_dir, "mesh.txt", &mesh.export_text(), outcome)?;
    let mut doc = Doc::new();
    doc.open("{");
    doc.line(&field("command", string("mesh")));
    doc.line(&field("obstacle", string(&cfg.obstacle.kind)));
    doc.line(&field("h_target", num(cfg.discretization.h_target)));
    doc.line(&field("x_radius", num(cfg.geometry.x_radius)));
    doc.line(&field("n_vertices", mesh.vertices.len().to_string()));
    doc.line(&field("n_triangles", mesh.triangles.len().to_string()));
    doc.line(&field("shape_constant", num(c_theta)));
    doc.line(&field("mesh_width", num(h)));
    doc.line(&field("dof_count", d_n.to_string()));
    doc.line(&field("total_area", num(mesh.total_area())));
    doc.line(&field_last(
        "interface_perimeter",
        num(mesh.interface_perimeter()),
    ));
    doc.close("}");
    write_artifact(out_dir, "mesh_report.json", &doc.finish(), outcome)?;
    outcome.summary.push(format!(
        "mesh: {} vertices, {} triangles, width {h:.4}, {d_n} interior dofs",
        mesh.vertices.len(),
        mesh.triangles.len()
    ));
    Ok(mesh)
}

// ---------------------------------------------------------------------------
// Model stage.

/// Resolved discretization: explicit values with auto choices filled in.
struct Resolved {
    n_trunc: i64,
    j_corr: usize,
}

/// Resolve the truncation (diagonal-scan heuristic when auto) and cap the
/// corrector depth at the FEM dimension.
fn resolve_disc(cfg: &RunConfig, mesh: &TriMesh) -> Result<Resolved, StageError> {
    let (_, h, d_n) = mesh_quality(mesh);
    let n_trunc = if cfg.discretization.n_trunc > 0 {
        cfg.discretization.n_trunc
    } else {
        // The calibrated truncations grow like h^(-1/2) with factor ~1.25;
        // probe with comfortable headroom above that.
        let n_big = (1.25 / h.sqrt()).ceil() as i64 + 8;
        let choice = lift("model", EXIT_MODEL, optimal_n(mesh, cfg.k0(), n_big))?;
        if choice.at_edge {
            eprintln!(
                "note: truncation scan hit its upper edge {n_big}; using it as-is"
            );
        }
        choice.n_trunc
    };
    Ok(Resolved {
        n_trunc,
        j_corr: cfg.discretization.j_corr.min(d_n),
    })
}

fn model_key(cfg: &RunConfig, r: &Resolved) -> String {
    let ident = serde_json::json!({
        "format": "model-v1",
        "obstacle": serde_json::to_value(&cfg.obstacle).unwrap(),
        "geometry": serde_json::to_value(&cfg.geometry).unwrap(),
        "h_target": format!("{:.17e}", cfg.discretization.h_target),
        "n_trunc": r.n_trunc,
        "j_corr": r.j_corr,
        "k0": [
            format!("{:.17e}", cfg.discretization.k0[0]),
            format!("{:.17e}", cfg.discretization.k0[1]),
        ],
    });
    digest(&ident.to_string())
}

/// Spectral model at the configured reference point, cache-served when
/// possible; returns the model and its serialized form.
fn obtain_model(
    cfg: &RunConfig,
    cache: &Cache,
) -> Result<(SpectralModel, String), StageError> {
    let mesh = obtain_mesh(cfg, cache)?;
    let r = resolve_disc(cfg, &mesh)?;
    let key = model_key(cfg, &r);
    if let Some(text) = cache.get(&key, "model.json") {
        if let Ok(model) = serde_json::from_str::<SpectralModel>(&text) {
            if model.validate().is_ok() {
                return Ok((model, text));
            }
        }
    }
    let model = lift(
        "model",
        EXIT_MODEL,
        build_model(&mesh, cfg.k0(), r.n_trunc, r.j_corr),
    )?;
    let text = serde_json::to_string_pretty(&model)
        .map_err(|e| stage_err("model", EXIT_MODEL, e))?;
    cache
        .put(&key, "model.json", &text)
        .map_err(|e| stage_err("io", EXIT_IO, e))?;
    Ok((model, text))
}

fn run_model(
    cfg: &RunConfig,
    cache: &Cache,
    out_dir: &Path,
    outcome: &mut RunOutcome,
) -> Result<SpectralModel, StageError> {
    let (model, text) = obtain_model(cfg, cache)?;
    write_artifact(out_dir, "model.json", &text, outcome)?;
    outcome.summary.push(format!(
        "model: truncation {}, corrector depth {}, {} dofs, reference {}",
        model.n_trunc, model.j_corr, model.d_n, model.k0
    ));
    Ok(model)
}

// ---------------------------------------------------------------------------
// Contour stage.

fn run_contour(
    cfg: &RunConfig,
    cache: &Cache,
    out_dir: &Path,
    outcome: &mut RunOutcome,
) -> Result<(), StageError> {
    let (model, _) = obtain_model(cfg, cache)?;
    let rect = cfg.rect().map_err(|e| stage_err("config", EXIT_CONFIG, e))?;
    let mut grid = lift(
        "contour",
        EXIT_TASK,
        contour_grid(&model, &rect, cfg.task.grid[0], cfg.task.grid[1]),
    )?;
    grid.meta.h_target = Some(cfg.discretization.h_target);
    write_artifact(out_dir, "contour.csv", &grid.csv(), outcome)?;
    write_artifact(out_dir, "contour_meta.json", &contour_meta_json(&grid), outcome)?;
    outcome.summary.push(format!(
        "contour: {}x{} nodes on [{}, {}] x [{}, {}], {} failed",
        grid.n_re,
        grid.n_im,
        rect.re_min,
        rect.re_max,
        rect.im_min,
        rect.im_max,
        grid.failed.len()
    ));
    Ok(())
}

fn rect_json(b: &BoxRect) -> String {
    format!(
        "[{}, {}, {}, {}]",
        num(b.re_min),
        num(b.re_max),
        num(b.im_min),
        num(b.im_max)
    )
}

fn contour_meta_json(grid: &ContourGrid) -> String {
    let mut doc = Doc::new();
    doc.open("{");
    doc.line(&field("command", string("contour")));
    doc.line(&field("rect", rect_json(&grid.rect)));
    doc.line(&field("n_re", grid.n_re.to_string()));
    doc.line(&field("n_im", grid.n_im.to_string()));
    doc.line(&field("n_trunc", grid.meta.n_trunc.to_string()));
    doc.line(&field("j_corr", grid.meta.j_corr.to_string()));
    doc.line(&field("k0", cplx(grid.meta.k0)));
    doc.line(&field("d_n", grid.meta.d_n.to_string()));
    doc.line(&field(
        "h_target",
        grid.meta.h_target.map(num).unwrap_or("null".into()),
    ));
    doc.line(&field_last(
        "failed_nodes",
        format!(
            "[{}]",
            grid.failed
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    ));
    doc.close("}");
    doc.finish()
}

// ---------------------------------------------------------------------------
// Find stage.

/// Grid-minima seeding: strict local minima of the contour field under the
/// configured percentile, best first, capped.
fn grid_seeds(grid: &ContourGrid, percentile: f64, max_seeds: usize) -> Vec<C64> {
    let mut finite: Vec<f64> = grid.values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Vec::new();
    }
    finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((percentile / 100.0) * (finite.len() - 1) as f64).round() as usize;
    let threshold = finite[idx.min(finite.len() - 1)];
    let mut minima: Vec<(f64, usize, usize)> = Vec::new();
    for j in 0..grid.n_im {
        for i in 0..grid.n_re {
            let v = grid.value(i, j);
            if !v.is_finite() || v > threshold {
                continue;
            }
            let mut strict = true;
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 || ni >= grid.n_re as i64 || nj >= grid.n_im as i64 {
                        continue;
                    }
                    let w = grid.value(ni as usize, nj as usize);
                    if w.is_finite() && w <= v {
                        strict = false;
                    }
                }
            }
            if strict {
                minima.push((v, i, j));
            }
        }
    }
    if minima.is_empty() {
        let (i, j) = grid.argmin();
        if grid.value(i, j).is_finite() {
            minima.push((grid.value(i, j), i, j));
        }
    }
    minima.sort_by(|a, b| a.partial_cmp(b).unwrap());
    minima
        .into_iter()
        .take(max_seeds)
        .map(|(_, i, j)| grid.node(i, j))
        .collect()
}

struct FindReport {
    resonances: Vec<ResonanceResult>,
    stalled: Vec<ResonanceResult>,
    failed: Vec<(C64, String)>,
    seeds: Vec<C64>,
    grid_seeded: bool,
}

fn run_find_on(
    cfg: &RunConfig,
    model: &SpectralModel,
) -> Result<FindReport, StageError> {
    let grid_seeded = cfg.task.seeds.is_empty();
    let seeds: Vec<C64> = if grid_seeded {
        let rect = cfg.rect().map_err(|e| stage_err("config", EXIT_CONFIG, e))?;
        let grid = lift(
            "find",
            EXIT_TASK,
            contour_grid(model, &rect, cfg.task.grid[0], cfg.task.grid[1]),
        )?;
        grid_seeds(&grid, cfg.task.seed_percentile, cfg.task.max_seeds)
    } else {
        cfg.task.seeds.iter().map(|s| C64::new(s[0], s[1])).collect()
    };
    if seeds.is_empty() {
        return Err(stage_err(
            "find",
            EXIT_TASK,
            "no usable seeds: every grid node failed to evaluate",
        ));
    }
    let mut converged = Vec::new();
    let mut stalled = Vec::new();
    let mut failed = Vec::new();
    for s in &seeds {
        match minimize(model, *s, cfg.task.stop) {
            Ok(r) if r.converged => converged.push(r),
            Ok(r) => stalled.push(r),
            Err(e) => failed.push((*s, e.to_string())),
        }
    }
    // Deduplicate converged hits: best residual first, keep points separated
    // by a relative tolerance, then order by position for stable output.
    converged.sort_by(|a, b| {
        (a.log_abs, a.k.re, a.k.im)
            .partial_cmp(&(b.log_abs, b.k.re, b.k.im))
            .unwrap()
    });
    let mut kept: Vec<ResonanceResult> = Vec::new();
    for r in converged {
        let tol = 1e-6 * (1.0 + r.k.norm());
        if kept.iter().all(|q| (q.k - r.k).norm() > tol) {
            kept.push(r);
        }
    }
    kept.sort_by(|a, b| (a.k.re, a.k.im).partial_cmp(&(b.k.re, b.k.im)).unwrap());
    Ok(FindReport {
        resonances: kept,
        stalled,
        failed,
        seeds,
        grid_seeded,
    })
}

fn resonance_entry(doc: &mut Doc, r: &ResonanceResult, last: bool) {
    doc.open("{");
    doc.line(&field("k", cplx(r.k)));
    doc.line(&field("log_abs_det", num(r.log_abs)));
    doc.line(&field("iterations", r.iterations.to_string()));
    doc.line(&field("converged", r.converged.to_string()));
    doc.line(&field("seed", cplx(r.trail[0])));
    doc.line(&field_last("anchor", cplx(r.anchor)));
    doc.close(if last { "}" } else { "}," });
}

fn find_json(cfg: &RunConfig, model: &SpectralModel, rep: &FindReport) -> String {
    let mut doc = Doc::new();
    doc.open("{");
    doc.line(&field("command", string("find")));
    doc.line(&field("obstacle", string(&cfg.obstacle.kind)));
    doc.line(&field("h_target", num(cfg.discretization.h_target)));
    doc.line(&field("n_trunc", model.n_trunc.to_string()));
    doc.line(&field("j_corr", model.j_corr.to_string()));
    doc.line(&field("d_n", model.d_n.to_string()));
    doc.line(&field("k0", cplx(model.k0)));
    doc.line(&field("stop", num(cfg.task.stop)));
    doc.line(&field("grid_seeded", rep.grid_seeded.to_string()));
    doc.line(&field(
        "seeds",
        format!(
            "[{}]",
            rep.seeds.iter().map(|s| cplx(*s)).collect::<Vec<_>>().join(", ")
        ),
    ));
    doc.open("\"resonances\": [");
    for (i, r) in rep.resonances.iter().enumerate() {
        resonance_entry(&mut doc, r, i + 1 == rep.resonances.len());
    }
    doc.close("],");
    doc.open("\"stalled\": [");
    for (i, r) in rep.stalled.iter().enumerate() {
        resonance_entry(&mut doc, r, i + 1 == rep.stalled.len());
    }
    doc.close("],");
    doc.open("\"failed_seeds\": [");
    for (i, (s, msg)) in rep.failed.iter().enumerate() {
        let sep = if i + 1 == rep.failed.len() { "" } else { "," };
        doc.line(&format!(
            "{{ \"seed\": {}, \"error\": {} }}{sep}",
            cplx(*s),
            string(msg)
        ));
    }
    doc.close("]");
    doc.close("}");
    doc.finish()
}

fn run_find(
    cfg: &RunConfig,
    cache: &Cache,
    out_dir: &Path,
    outcome: &mut RunOutcome,
) -> Result<(), StageError> {
    let (model, _) = obtain_model(cfg, cache)?;
    let rep = run_find_on(cfg, &model)?;
    write_artifact(out_dir, "resonances.json", &find_json(cfg, &model, &rep), outcome)?;
    outcome.summary.push(format!(
        "find: {} resonance(s) from {} seed(s) ({} stalled, {} failed)",
        rep.resonances.len(),
        rep.seeds.len(),
        rep.stalled.len(),
        rep.failed.len()
    ));
    for r in &rep.resonances {
        outcome
            .summary
            .push(format!("  {} (|det| = e^{:.2}, {} steps)", r.k, r.log_abs, r.iterations));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Certify stage.

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::ZeroFree => "zero-free",
        Verdict::ZeroWithinTol => "zero-within-tol",
        Verdict::Inconclusive => "inconclusive",
    }
}

fn record_json(doc: &mut Doc, rect: &BoxRect, rec: &CertifyRecord, last: bool) {
    doc.open("{");
    doc.line(&field("rect", rect_json(rect)));
    doc.line(&field("verdict", string(verdict_name(rec.verdict))));
    doc.line(&field("j_used", rec.j_used.to_string()));
    doc.line(&field("samples", rec.samples.to_string()));
    doc.line(&field("margin", num(rec.margin)));
    doc.line(&field("l_min", num(rec.l_min)));
    doc.line(&field("c_bound", num(rec.c_bound)));
    doc.line(&field("d_bound", num(rec.d_bound)));
    doc.line(&field("winding", cplx(rec.winding)));
    doc.line(&field("phase_decided", rec.phase_decided.to_string()));
    doc.line(&field_last("heuristic", rec.heuristic.to_string()));
    doc.close(if last { "}" } else { "}," });
}

fn certified_json(cfg: &RunConfig, model: &SpectralModel, reg: &CertifiedRegion) -> String {
    let mut doc = Doc::new();
    doc.open("{");
    doc.line(&field("command", string("certify")));
    doc.line(&field("obstacle", string(&cfg.obstacle.kind)));
    doc.line(&field("h_target", num(cfg.discretization.h_target)));
    doc.line(&field("n_trunc", model.n_trunc.to_string()));
    doc.line(&field("j_corr", model.j_corr.to_string()));
    doc.line(&field("k0", cplx(model.k0)));
    doc.line(&field("n", reg.n.to_string()));
    doc.line(&field("box_side", num(reg.box_side)));
    doc.line(&field("covered", rect_json(&reg.covered)));
    doc.line(&field("cleared", reg.cleared.to_string()));
    doc.line(&field("certified", reg.certified.to_string()));
    doc.line(&field("d_aw_bound", num(reg.d_aw_bound)));
    doc.open("\"kept\": [");
    for (i, kb) in reg.kept.iter().enumerate() {
        record_json(&mut doc, &kb.rect, &kb.record, i + 1 == reg.kept.len());
    }
    doc.close("],");
    doc.line(&field_last(
        "inconclusive",
        format!(
            "[{}]",
            reg.inconclusive
                .iter()
                .map(rect_json)
                .collect::<Vec<_>>()
                .join(", ")
        ),
    ));
    doc.close("}");
    doc.finish()
}

fn run_certify(
    cfg: &RunConfig,
    cache: &Cache,
    out_dir: &Path,
    outcome: &mut RunOutcome,
) -> Result<(), StageError> {
    let (model, _) = obtain_model(cfg, cache)?;
    let rect = cfg.rect().map_err(|e| stage_err("config", EXIT_CONFIG, e))?;
    let target = DetTarget { model: &model };
    let reg = lift(
        "certify",
        EXIT_TASK,
        zero_boxes(&target, cfg.task.cert_n, Some(&rect)),
    )?;
    write_artifact(out_dir, "certified.json", &certified_json(cfg, &model, &reg), outcome)?;
    outcome.summary.push(format!(
        "certify: {} kept, {} cleared, {} inconclusive at resolution 2^-{} (certified: {})",
        reg.kept.len(),
        reg.cleared,
        reg.inconclusive.len(),
        reg.n,
        reg.certified
    ));
    Ok(())
}

// ---------------------------------------------------------------------------
// Converge stage.

struct ConvergeRow {
    h_target: f64,
    mesh_width: f64,
    n_trunc: i64,
    j_corr: usize,
    d_n: usize,
    result: ResonanceResult,
    error: f64,
}

/// Nearest exact zero of the one-mode disk reduction: identify the Fourier
/// order whose outgoing radial factor is smallest at the computed
/// resonance, then polish that order's zero.
fn disk_reference(radius: f64, gamma: C64) -> Result<(usize, C64), Error> {
    let z = gamma * radius;
    let row = hankel_row(12, z)?;
    let order = (0..=12)
        .min_by(|a, b| {
            row.values[*a]
                .norm()
                .partial_cmp(&row.values[*b].norm())
                .unwrap()
        })
        .unwrap();
    let zero = hankel_zero(order, z, 1e-13)?;
    Ok((order, zero / radius))
}

fn run_converge(
    cfg: &RunConfig,
    cache: &Cache,
    out_dir: &Path,
    outcome: &mut RunOutcome,
) -> Result<(), StageError> {
    if cfg.obstacle.kind != "disk" || cfg.obstacle.center != [0.0, 0.0] {
        return Err(stage_err(
            "converge",
            EXIT_TASK,
            "convergence tables require an origin-centered disk obstacle",
        ));
    }
    let mut meshes = Vec::new();
    let mut levels = Vec::new();
    for &h in &cfg.task.h_values {
        let mut cfg_h = cfg.clone();
        cfg_h.discretization.h_target = h;
        let mesh = obtain_mesh(&cfg_h, cache)?;
        let (_, _, d_n) = mesh_quality(&mesh);
        let n_trunc = if cfg.discretization.n_trunc > 0 {
            cfg.discretization.n_trunc
        } else if let Some((_, n)) = PRACTICAL_ROWS.iter().find(|(hh, _)| (hh - h).abs() < 1e-12) {
            *n
        } else {
            let cfg_row = cfg_h.clone();
            resolve_disc(&cfg_row, &mesh)?.n_trunc
        };
        levels.push(RefinementLevel {
            n_trunc,
            j_corr: cfg.discretization.j_corr.min(d_n),
        });
        meshes.push(mesh);
    }
    let results = lift(
        "converge",
        EXIT_TASK,
        anchored_refinement(&meshes, &levels, cfg.k0(), cfg.task.stop),
    )?;
    let completed = results.len() == meshes.len() && results.iter().all(|r| r.converged);
    let gamma_last = results.last().expect("at least one level ran").k;
    let (order, k_exact) = lift(
        "converge",
        EXIT_TASK,
        disk_reference(cfg.obstacle.radius, gamma_last),
    )?;
    let mut rows = Vec::new();
    for (i, r) in results.iter().enumerate() {
        let (_, mesh_width, d_n) = mesh_quality(&meshes[i]);
        rows.push(ConvergeRow {
            h_target: cfg.task.h_values[i],
            mesh_width,
            n_trunc: levels[i].n_trunc,
            j_corr: levels[i].j_corr,
            d_n,
            result: r.clone(),
            error: (r.k - k_exact).norm(),
        });
    }
    // Least-squares slope of log error against log width.
    let slope = if rows.len() >= 2 {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.error > 0.0)
            .map(|r| (r.mesh_width.ln(), r.error.ln()))
            .collect();
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    } else {
        f64::NAN
    };

    let mut doc = Doc::new();
    doc.open("{");
    doc.line(&field("command", string("converge")));
    doc.line(&field("radius", num(cfg.obstacle.radius)));
    doc.line(&field("k0", cplx(cfg.k0())));
    doc.line(&field("hankel_order", order.to_string()));
    doc.line(&field("k_exact", cplx(k_exact)));
    doc.line(&field("completed", completed.to_string()));
    doc.line(&field("loglog_slope", num(slope)));
    doc.open("\"rows\": [");
    for (i, row) in rows.iter().enumerate() {
        doc.open("{");
        doc.line(&field("h_target", num(row.h_target)));
        doc.line(&field("mesh_width", num(row.mesh_width)));
        doc.line(&field("n_trunc", row.n_trunc.to_string()));
        doc.line(&field("j_corr", row.j_corr.to_string()));
        doc.line(&field("d_n", row.d_n.to_string()));
        doc.line(&field("gamma", cplx(row.result.k)));
        doc.line(&field("log_abs_det", num(row.result.log_abs)));
        doc.line(&field("converged", row.result.converged.to_string()));
        doc.line(&field_last("error", num(row.error)));
        doc.close(if i + 1 == rows.len() { "}" } else { "}," });
    }
    doc.close("]");
    doc.close("}");
    write_artifact(out_dir, "convergence.json", &doc.finish(), outcome)?;

    let mut csv = String::from("h_target,mesh_width,n_trunc,d_n,gamma_re,gamma_im,error\n");
    for row in &rows {
        csv.push_str(&format!(
            "{:.11e},{:.11e},{},{},{:.11e},{:.11e},{:.11e}\n",
            row.h_target,
            row.mesh_width,
            row.n_trunc,
            row.d_n,
            row.result.k.re,
            row.result.k.im,
            row.error
        ));
    }
    write_artifact(out_dir, "convergence.csv", &csv, outcome)?;
    outcome.summary.push(format!(
        "converge: {} levels, reference order {}, slope {:.2}",
        rows.len(),
        order,
        slope
    ));
    for row in &rows {
        outcome.summary.push(format!(
            "  h {:.3}: N {}, error {:.3e}",
            row.h_target, row.n_trunc, row.error
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Sweep stage.

struct SweepRow {
    /// Julia parameter for Julia sweeps, prefractal level for Koch sweeps.
    label: (f64, usize),
    seed_index: usize,
    seed: C64,
    gamma: C64,
    log_abs: f64,
    iterations: usize,
    converged: bool,
    n_trunc: i64,
    d_n: usize,
    error: String,
}

fn run_sweep(
    cfg: &RunConfig,
    cache: &Cache,
    out_dir: &Path,
    outcome: &mut RunOutcome,
) -> Result<(), StageError> {
    let flavor = cfg.obstacle.kind.as_str();
    let rows = match flavor {
        "julia" => sweep_julia(cfg, cache)?,
        "koch" => sweep_koch(cfg, cache)?,
        other => {
            return Err(stage_err(
                "sweep",
                EXIT_TASK,
                format!("sweeps are defined for julia and koch obstacles, not {other:?}"),
            ))
        }
    };

    let label_key = if flavor == "julia" { "q" } else { "level" };
    let mut doc = Doc::new();
    doc.open("{");
    doc.line(&field("command", string("sweep")));
    doc.line(&field("flavor", string(flavor)));
    doc.line(&field("h_target", num(cfg.discretization.h_target)));
    doc.line(&field("j_corr", cfg.discretization.j_corr.to_string()));
    doc.line(&field("k0", cplx(cfg.k0())));
    doc.open("\"rows\": [");
    for (i, row) in rows.iter().enumerate() {
        doc.open("{");
        if flavor == "julia" {
            doc.line(&field(label_key, num(row.label.0)));
            doc.line(&field(
                "c",
                cplx(C64::new(-row.label.0, 0.2 * row.label.0)),
            ));
        } else {
            doc.line(&field(label_key, row.label.1.to_string()));
        }
        doc.line(&field("seed_index", row.seed_index.to_string()));
        doc.line(&field("seed", cplx(row.seed)));
        doc.line(&field("gamma", cplx(row.gamma)));
        doc.line(&field("log_abs_det", num(row.log_abs)));
        doc.line(&field("iterations", row.iterations.to_string()));
        doc.line(&field("converged", row.converged.to_string()));
        doc.line(&field("n_trunc", row.n_trunc.to_string()));
        doc.line(&field("d_n", row.d_n.to_string()));
        doc.line(&field_last("error", string(&row.error)));
        doc.close(if i + 1 == rows.len() { "}" } else { "}," });
    }
    doc.close("]");
    doc.close("}");
    write_artifact(out_dir, "sweep.json", &doc.finish(), outcome)?;

    let mut csv = format!("{label_key},seed_index,gamma_re,gamma_im,converged\n");
    for row in &rows {
        let label = if flavor == "julia" {
            format!("{:.11e}", row.label.0)
        } else {
            row.label.1.to_string()
        };
        csv.push_str(&format!(
            "{label},{},{:.11e},{:.11e},{}\n",
            row.seed_index, row.gamma.re, row.gamma.im, row.converged
        ));
    }
    write_artifact(out_dir, "sweep.csv", &csv, outcome)?;
    outcome.summary.push(format!(
        "sweep ({flavor}): {} rows, {} converged",
        rows.len(),
        rows.iter().filter(|r| r.converged).count()
    ));
    Ok(())
}

/// Julia family sweep along `c = q (-1 + 0.2i)`: each run continues from
/// the previous resonance.
fn sweep_julia(cfg: &RunConfig, cache: &Cache) -> Result<Vec<SweepRow>, StageError> {
    let mut rows = Vec::new();
    let mut seed = cfg
        .task
        .seeds
        .first()
        .map(|s| C64::new(s[0], s[1]))
        .unwrap_or(cfg.k0());
    for &q in &cfg.task.q_values {
        let mut cfg_q = cfg.clone();
        cfg_q.obstacle.c = [-q, 0.2 * q];
        let (model, _) = obtain_model(&cfg_q, cache)?;
        let row = sweep_entry((q, 0), 0, seed, &model, cfg.task.stop);
        if row.converged {
            seed = row.gamma;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Koch level sweep: every configured seed is tracked across levels, each
/// level continuing from the previous level's output for that seed.
fn sweep_koch(cfg: &RunConfig, cache: &Cache) -> Result<Vec<SweepRow>, StageError> {
    let mut seeds: Vec<C64> = if cfg.task.seeds.is_empty() {
        vec![cfg.k0()]
    } else {
        cfg.task.seeds.iter().map(|s| C64::new(s[0], s[1])).collect()
    };
    let mut rows = Vec::new();
    for &level in &cfg.task.koch_levels {
        let mut cfg_l = cfg.clone();
        cfg_l.obstacle.level = level;
        let (model, _) = obtain_model(&cfg_l, cache)?;
        for (si, seed) in seeds.clone().iter().enumerate() {
            let row = sweep_entry((0.0, level), si, *seed, &model, cfg.task.stop);
            if row.converged {
                seeds[si] = row.gamma;
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

fn sweep_entry(
    label: (f64, usize),
    seed_index: usize,
    seed: C64,
    model: &SpectralModel,
    stop: f64,
) -> SweepRow {
    match minimize(model, seed, stop) {
        Ok(r) => SweepRow {
            label,
            seed_index,
            seed,
            gamma: r.k,
            log_abs: r.log_abs,
            iterations: r.iterations,
            converged: r.converged,
            n_trunc: model.n_trunc,
            d_n: model.d_n,
            error: String::new(),
        },
        Err(e) => SweepRow {
            label,
            seed_index,
            seed,
            gamma: seed,
            log_abs: f64::NAN,
            iterations: 0,
            converged: false,
            n_trunc: model.n_trunc,
            d_n: model.d_n,
            error: e.to_string(),
        },
    }
}
