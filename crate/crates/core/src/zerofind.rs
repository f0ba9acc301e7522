//! Zero location for `k -> det T_n(k)`: contour grids, damped-Newton
//! minimisation with reference re-anchoring, and certified winding-number
//! boxes with explicit error control.
//!
//! Certification follows the argument principle. Around a candidate box `B`
//! sit enlarged boxes `B_j` with margin `C_B / j`; the function and its
//! logarithmic derivative are sampled at spacing `2^-j` along each boundary,
//! and the distance between the sampled winding integral and the true one is
//! bounded by the computable quantity `D(n, j)`. Once `D(n, j) < 1/2` while
//! the margin is below `2^-n`, the rounded winding count is exact for `B_j`,
//! which certifies either "no zero in `B`" or "a zero within `2^-n` of `B`".

use crate::error::{Error, Result};
use crate::mesh::{mesh_quality, TriMesh};
use crate::ntd::{self, LogDet, SpectralModel};
use crate::specfun::{hankel_row, HankelRow};
use crate::C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const TAU: f64 = 2.0 * PI;

/// Closed axis-aligned rectangle in the open lower half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxRect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl BoxRect {
    /// Validated construction; requires finite bounds, positive extent and
    /// `im_max < 0`.
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Result<BoxRect> {
        let b = BoxRect {
            re_min,
            re_max,
            im_min,
            im_max,
        };
        let ok = [re_min, re_max, im_min, im_max].iter().all(|v| v.is_finite())
            && re_min < re_max
            && im_min < im_max
            && im_max < 0.0;
        if !ok {
            return Err(Error::Invalid {
                what: "box",
                detail: format!("{b:?} is not a rectangle in the lower half-plane"),
            });
        }
        Ok(b)
    }

    pub fn width(&self) -> f64 {
        self.re_max - self.re_min
    }

    pub fn height(&self) -> f64 {
        self.im_max - self.im_min
    }

    pub fn min_side(&self) -> f64 {
        self.width().min(self.height())
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * (self.width() + self.height())
    }

    pub fn center(&self) -> C64 {
        C64::new(
            0.5 * (self.re_min + self.re_max),
            0.5 * (self.im_min + self.im_max),
        )
    }

    pub fn contains(&self, k: C64) -> bool {
        self.re_min <= k.re && k.re <= self.re_max && self.im_min <= k.im && k.im <= self.im_max
    }

    /// Euclidean distance from `k` to the box (zero inside).
    pub fn dist_to(&self, k: C64) -> f64 {
        let dx = (self.re_min - k.re).max(0.0).max(k.re - self.re_max);
        let dy = (self.im_min - k.im).max(0.0).max(k.im - self.im_max);
        dx.hypot(dy)
    }

    /// Grow every side outward by `d` (caller keeps the result below the real
    /// axis).
    fn inflate(&self, d: f64) -> BoxRect {
        BoxRect {
            re_min: self.re_min - d,
            re_max: self.re_max + d,
            im_min: self.im_min - d,
            im_max: self.im_max + d,
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut x = a.rem_euclid(TAU);
    if x > PI {
        x -= TAU;
    }
    x
}

// ---------------------------------------------------------------------------
// Evaluation targets.

/// Analytic function on the lower half-plane exposed through overflow-safe
/// logarithmic evaluations.
///
/// `log_eval` returns `log g(k)` as a magnitude-argument pair,
/// `log_derivative` is `g'(k) / g(k)`, and `scaled_bound` upper-bounds
/// `sup_rect (|g| + |g'| + |g''|) * exp(-scale)` for the winding error
/// estimate. The default derivative is a central finite difference of
/// `log_eval` with step `1e-6 (1 + |k|)`; the default bound samples the
/// magnitude on a margin-`delta` enlargement and converts it to derivative
/// bounds by Cauchy estimates on radius-`delta` disks, so it is heuristic
/// (sampled supremum with a 2x safety factor) unless overridden.
pub trait AnalyticTarget: Sync {
    /// `log g(k)` split into `log|g|` and `arg g`.
    fn log_eval(&self, k: C64) -> Result<LogDet>;

    /// `g'(k) / g(k)`.
    fn log_derivative(&self, k: C64) -> Result<C64> {
        let h = 1e-6 * (1.0 + k.norm());
        let a = self.log_eval(k + h)?;
        let b = self.log_eval(k - h)?;
        Ok(C64::new(
            (a.log_abs - b.log_abs) / (2.0 * h),
            wrap_angle(a.arg - b.arg) / (2.0 * h),
        ))
    }

    /// Upper bound for `sup over rect of (|g| + |g'| + |g''|) * exp(-scale)`.
    fn scaled_bound(&self, rect: &BoxRect, scale: f64) -> Result<f64> {
        let delta = (1.0f64).min(-rect.im_max / 2.0);
        let outer = rect.inflate(delta);
        let pitch = delta / 8.0;
        let nx = ((outer.width() / pitch).ceil() as usize).max(1);
        let ny = ((outer.height() / pitch).ceil() as usize).max(1);
        let mut sup = 0.0f64;
        for i in 0..=nx {
            for j in 0..=ny {
                let k = C64::new(
                    outer.re_min + outer.width() * i as f64 / nx as f64,
                    outer.im_min + outer.height() * j as f64 / ny as f64,
                );
                sup = sup.max((self.log_eval(k)?.log_abs - scale).exp());
            }
        }
        let m = 2.0 * sup;
        Ok(m * (1.0 + 1.0 / delta + 2.0 / (delta * delta)))
    }

    /// Whether `scaled_bound` rests on sampled suprema rather than
    /// closed-form envelopes.
    fn heuristic_bound(&self) -> bool {
        true
    }
}

/// `g(k) = det T_n(k)` of a spectral model.
pub struct DetTarget<'a> {
    pub model: &'a SpectralModel,
}

impl AnalyticTarget for DetTarget<'_> {
    fn log_eval(&self, k: C64) -> Result<LogDet> {
        Ok(ntd::logdet(&ntd::eval_t(self.model, k)?))
    }

    fn scaled_bound(&self, rect: &BoxRect, scale: f64) -> Result<f64> {
        // Sampled supremum with centered-difference derivative estimates
        // along grid rows (valid for analytic g with a real step), 2x
        // safety factor. The generic Cauchy route is hopeless here: when a
        // box is centered near a zero the common scale makes the enlarged
        // supremum astronomically large relative to it.
        let pitch = rect.min_side() / 8.0;
        let nx = ((rect.width() / pitch).ceil() as usize).max(1);
        let ny = ((rect.height() / pitch).ceil() as usize).max(1);
        let dr = rect.width() / nx as f64;
        let mut sup = 0.0f64;
        let mut row = Vec::with_capacity(nx + 3);
        for j in 0..=ny {
            let im = rect.im_min + rect.height() * j as f64 / ny as f64;
            row.clear();
            // One ghost node beyond each edge keeps the estimates centered.
            for i in -1i64..=(nx as i64 + 1) {
                let ld = self.log_eval(C64::new(rect.re_min + dr * i as f64, im))?;
                row.push(C64::from_polar((ld.log_abs - scale).exp(), ld.arg));
            }
            for i in 1..=(nx + 1) {
                let (a, b, c) = (row[i - 1], row[i], row[i + 1]);
                let d1 = (c - a) / (2.0 * dr);
                let d2 = (c - b * 2.0 + a) / (dr * dr);
                sup = sup.max(b.norm() + d1.norm() + d2.norm());
            }
        }
        Ok(2.0 * sup)
    }
}

/// `g(k) = k - zero`: the exactly-bounded family for soundness suites.
pub struct AffineProbe {
    pub zero: C64,
}

impl AnalyticTarget for AffineProbe {
    fn log_eval(&self, k: C64) -> Result<LogDet> {
        let v = k - self.zero;
        Ok(LogDet {
            log_abs: v.norm().ln(),
            arg: v.arg(),
        })
    }

    fn log_derivative(&self, k: C64) -> Result<C64> {
        let v = k - self.zero;
        if v.norm() == 0.0 {
            return Err(Error::Singular("log-derivative at the zero itself".into()));
        }
        Ok(C64::new(1.0, 0.0) / v)
    }

    fn scaled_bound(&self, rect: &BoxRect, scale: f64) -> Result<f64> {
        // |g| is convex, so its supremum over the box sits at a corner;
        // |g'| = 1 and g'' = 0. The bound is exact, no safety factor.
        let m = [
            C64::new(rect.re_min, rect.im_min),
            C64::new(rect.re_max, rect.im_min),
            C64::new(rect.re_max, rect.im_max),
            C64::new(rect.re_min, rect.im_max),
        ]
        .iter()
        .map(|c| (c - self.zero).norm())
        .fold(0.0f64, f64::max);
        Ok((m + 1.0) * (-scale).exp())
    }

    fn heuristic_bound(&self) -> bool {
        false
    }
}

/// `g(k) = H^(1)_order(factor * k)`: analytic test function with closed-form
/// derivatives, used to exercise certification against known Hankel zeros.
pub struct HankelProbe {
    pub order: usize,
    pub factor: C64,
}

impl HankelProbe {
    fn row(&self, k: C64) -> Result<HankelRow> {
        hankel_row(self.order, self.factor * k)
    }
}

impl AnalyticTarget for HankelProbe {
    fn log_eval(&self, k: C64) -> Result<LogDet> {
        let v = self.row(k)?.values[self.order];
        Ok(LogDet {
            log_abs: v.norm().ln(),
            arg: v.arg(),
        })
    }

    fn log_derivative(&self, k: C64) -> Result<C64> {
        let row = self.row(k)?;
        Ok(self.factor * row.derivs[self.order] / row.values[self.order])
    }

    fn scaled_bound(&self, rect: &BoxRect, scale: f64) -> Result<f64> {
        // Direct sampled supremum of |g| + |g'| + |g''| (second derivative
        // from the Bessel equation), 2x safety factor; avoids the Cauchy
        // blow-up on boxes much smaller than their distance to the cut.
        let pitch = rect.min_side() / 8.0;
        let nx = ((rect.width() / pitch).ceil() as usize).max(1);
        let ny = ((rect.height() / pitch).ceil() as usize).max(1);
        let m = self.order as f64;
        let fac = self.factor.norm();
        let damp = (-scale).exp();
        let mut sup = 0.0f64;
        for i in 0..=nx {
            for j in 0..=ny {
                let k = C64::new(
                    rect.re_min + rect.width() * i as f64 / nx as f64,
                    rect.im_min + rect.height() * j as f64 / ny as f64,
                );
                let z = self.factor * k;
                let row = self.row(k)?;
                let h = row.values[self.order];
                let hp = row.derivs[self.order];
                let hpp = -hp / z - (C64::new(1.0, 0.0) - m * m / (z * z)) * h;
                let s = h.norm() + fac * hp.norm() + fac * fac * hpp.norm();
                sup = sup.max(s * damp);
            }
        }
        Ok(2.0 * sup)
    }
}

// ---------------------------------------------------------------------------
// Contour grids.

/// Model provenance carried on exported grids and resonance lists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub n_trunc: i64,
    pub j_corr: usize,
    pub k0: C64,
    pub d_n: usize,
    /// Mesh width, when the caller knows it.
    pub h_target: Option<f64>,
}

/// Rectangular field of `log|det T_n(k)|` values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContourGrid {
    pub rect: BoxRect,
    pub n_re: usize,
    pub n_im: usize,
    /// Row-major values, index `j_im * n_re + i_re`; failed nodes hold NaN.
    pub values: Vec<f64>,
    /// Indices of nodes whose evaluation failed, ascending.
    pub failed: Vec<usize>,
    pub meta: GridMeta,
}

impl ContourGrid {
    /// Grid node `(i_re, j_im)`; both axes include their endpoints.
    pub fn node(&self, i_re: usize, j_im: usize) -> C64 {
        C64::new(
            self.rect.re_min + self.rect.width() * i_re as f64 / (self.n_re - 1) as f64,
            self.rect.im_min + self.rect.height() * j_im as f64 / (self.n_im - 1) as f64,
        )
    }

    pub fn value(&self, i_re: usize, j_im: usize) -> f64 {
        self.values[j_im * self.n_re + i_re]
    }

    /// Indices of the smallest finite value.
    pub fn argmin(&self) -> (usize, usize) {
        let mut best = (0usize, f64::INFINITY);
        for (idx, v) in self.values.iter().enumerate() {
            if v.is_finite() && *v < best.1 || !best.1.is_finite() && v.is_finite() {
                best = (idx, *v);
            }
        }
        (best.0 % self.n_re, best.0 / self.n_re)
    }

    /// `re,im,logabs` rows, one per node, row-major.
    pub fn csv(&self) -> String {
        let mut out = String::from("re,im,logabs\n");
        for j in 0..self.n_im {
            for i in 0..self.n_re {
                let k = self.node(i, j);
                out.push_str(&format!(
                    "{:.11e},{:.11e},{:.11e}\n",
                    k.re,
                    k.im,
                    self.value(i, j)
                ));
            }
        }
        out
    }
}

/// Evaluate `log|det T_n|` over an inclusive rectangular grid, in parallel;
/// per-node failures are flagged, never aborting the grid.
pub fn contour_grid(
    model: &SpectralModel,
    rect: &BoxRect,
    n_re: usize,
    n_im: usize,
) -> Result<ContourGrid> {
    if n_re < 2 || n_im < 2 {
        return Err(Error::Invalid {
            what: "contour grid",
            detail: format!("resolutions ({n_re}, {n_im}) must both be at least 2"),
        });
    }
    let values: Vec<f64> = (0..n_re * n_im)
        .into_par_iter()
        .map(|idx| {
            let k = C64::new(
                rect.re_min + rect.width() * (idx % n_re) as f64 / (n_re - 1) as f64,
                rect.im_min + rect.height() * (idx / n_re) as f64 / (n_im - 1) as f64,
            );
            match ntd::eval_t(model, k) {
                Ok(t) => ntd::logdet(&t).log_abs,
                Err(_) => f64::NAN,
            }
        })
        .collect();
    let failed = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_nan())
        .map(|(i, _)| i)
        .collect();
    Ok(ContourGrid {
        rect: *rect,
        n_re,
        n_im,
        values,
        failed,
        meta: GridMeta {
            n_trunc: model.n_trunc,
            j_corr: model.j_corr,
            k0: model.k0,
            d_n: model.d_n,
            h_target: None,
        },
    })
}

// ---------------------------------------------------------------------------
// Minimisation.

/// One damped-Newton resonance search outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResonanceResult {
    pub k: C64,
    pub log_abs: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Iterates including the start point.
    pub trail: Vec<C64>,
    /// Reference wavenumber of the model this search ran on.
    pub anchor: C64,
}

/// Damped Newton descent on `|g|`: full steps `-g/g'` halved up to eight
/// times, falling back to steepest descent on `log|g|`, with iterates
/// escaping the lower half-plane reflected to `Im k = -1e-6` at most twice.
pub fn minimize_target(
    target: &dyn AnalyticTarget,
    k_init: C64,
    stop: f64,
) -> Result<ResonanceResult> {
    if !(k_init.im < 0.0) {
        return Err(Error::Invalid {
            what: "minimize",
            detail: format!("start point {k_init} must satisfy Im k < 0"),
        });
    }
    let ln_stop = stop.ln();
    let mut k = k_init;
    let mut ld = target.log_eval(k)?;
    let mut trail = vec![k];
    let mut iterations = 0usize;
    let mut reflections = 0usize;
    let mut converged = ld.log_abs < ln_stop;

    // Reflect an escaping candidate; errors once the budget is spent.
    fn clamp(cand: C64, reflections: &mut usize, iterations: usize, residual: f64) -> Result<C64> {
        if cand.im < 0.0 {
            return Ok(cand);
        }
        *reflections += 1;
        if *reflections > 2 {
            return Err(Error::NonConvergence {
                what: "minimize: iterates escaped the lower half-plane",
                iterations,
                residual,
            });
        }
        Ok(C64::new(cand.re, -1e-6))
    }

    while !converged && iterations < 200 {
        let lder = target.log_derivative(k)?;
        if !lder.re.is_finite() || !lder.im.is_finite() || lder.norm() == 0.0 {
            break;
        }
        let newton = -1.0 / lder;
        let mut accepted = false;
        let mut lam = 1.0f64;
        for _ in 0..=8 {
            let cand = clamp(k + lam * newton, &mut reflections, iterations, ld.log_abs.exp())?;
            if let Ok(lc) = target.log_eval(cand) {
                if lc.log_abs < ld.log_abs {
                    k = cand;
                    ld = lc;
                    accepted = true;
                    break;
                }
            }
            lam *= 0.5;
        }
        if !accepted {
            // |g| rises along every damped Newton step: descend on log|g|,
            // whose gradient is the conjugate of (log g)'.
            let dir = -lder.conj() / lder.norm();
            let mut tau = (0.5 * newton.norm()).min(0.1 * (1.0 + k.norm()));
            for _ in 0..=8 {
                let cand = clamp(k + tau * dir, &mut reflections, iterations, ld.log_abs.exp())?;
                if let Ok(lc) = target.log_eval(cand) {
                    if lc.log_abs < ld.log_abs {
                        k = cand;
                        ld = lc;
                        accepted = true;
                        break;
                    }
                }
                tau *= 0.5;
            }
        }
        if !accepted {
            break;
        }
        iterations += 1;
        trail.push(k);
        converged = ld.log_abs < ln_stop;
    }

    Ok(ResonanceResult {
        k,
        log_abs: ld.log_abs,
        iterations,
        converged,
        trail,
        anchor: k_init,
    })
}

/// Minimise `|det T_n(k)|` for a spectral model from `k_init`.
pub fn minimize(model: &SpectralModel, k_init: C64, stop: f64) -> Result<ResonanceResult> {
    let mut r = minimize_target(&DetTarget { model }, k_init, stop)?;
    r.anchor = model.k0;
    Ok(r)
}

/// Truncation and corrector sizes for one refinement level.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RefinementLevel {
    pub n_trunc: i64,
    pub j_corr: usize,
}

/// March a resonance through a refining mesh sequence: each level builds its
/// model at the previous level's output and minimises from there. A level
/// that fails to converge ends the march, returning the partial sequence
/// (its non-converged result last).
pub fn anchored_refinement(
    meshes: &[TriMesh],
    levels: &[RefinementLevel],
    k0_init: C64,
    stop: f64,
) -> Result<Vec<ResonanceResult>> {
    if meshes.is_empty() || meshes.len() != levels.len() {
        return Err(Error::Invalid {
            what: "anchored refinement",
            detail: format!(
                "{} meshes for {} parameter levels",
                meshes.len(),
                levels.len()
            ),
        });
    }
    let widths: Vec<f64> = meshes.iter().map(|m| mesh_quality(m).1).collect();
    if widths.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Invalid {
            what: "anchored refinement",
            detail: format!("mesh widths {widths:?} must decrease strictly"),
        });
    }
    let mut out = Vec::with_capacity(meshes.len());
    let mut k0 = k0_init;
    for (mesh, lvl) in meshes.iter().zip(levels) {
        let model = ntd::build_model(mesh, k0, lvl.n_trunc, lvl.j_corr)?;
        let r = minimize(&model, k0, stop)?;
        let converged = r.converged;
        k0 = r.k;
        out.push(r);
        if !converged {
            break;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Certified boxes.

/// Verdict of one box certification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// Winding count 0 over an enclosing box: no zero in the box.
    ZeroFree,
    /// Winding count at least 1 over an enclosing box whose margin is below
    /// `2^-n`: a zero lies within `2^-n` of the box.
    ZeroWithinTol,
    /// Neither certificate (winding error bound below 1/2, or phase
    /// tracking with segment swings below pi) fired before the sampling
    /// cap.
    Inconclusive,
}

/// Decision record for one certified box.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertifyRecord {
    pub verdict: Verdict,
    /// Enclosing-box index `j` at decision time.
    pub j_used: u32,
    /// Boundary samples used at that `j`.
    pub samples: usize,
    /// Margin of the enclosing box (`C_B / j`).
    pub margin: f64,
    /// Minimum sampled magnitude on the enclosing boundary, common scale.
    pub l_min: f64,
    /// Bound on `|g| + |g'| + |g''|` over the enclosing box, common scale.
    pub c_bound: f64,
    /// Winding-integral error bound `D(n, j)`.
    pub d_bound: f64,
    /// Winding count: the quadrature value when the error-bound route
    /// decided, the exact phase-tracked integer when the phase route did.
    pub winding: C64,
    /// Whether the phase-tracking certificate (every segment's phase swing
    /// provably below pi, making the wrapped-argument sum exact) decided.
    pub phase_decided: bool,
    /// Whether the magnitude bound is a sampled supremum rather than exact.
    pub heuristic: bool,
}

/// Counterclockwise boundary samples at arc spacing at most `spacing`:
/// segment midpoints paired with their complex increments.
fn boundary_samples(b: &BoxRect, spacing: f64) -> (Vec<C64>, Vec<C64>) {
    let loop_pts = [
        C64::new(b.re_min, b.im_min),
        C64::new(b.re_max, b.im_min),
        C64::new(b.re_max, b.im_max),
        C64::new(b.re_min, b.im_max),
        C64::new(b.re_min, b.im_min),
    ];
    let mut mids = Vec::new();
    let mut steps = Vec::new();
    for edge in loop_pts.windows(2) {
        let len = (edge[1] - edge[0]).norm();
        let m = ((len / spacing).ceil() as usize).max(1);
        let step = (edge[1] - edge[0]) / m as f64;
        for i in 0..m {
            mids.push(edge[0] + step * (i as f64 + 0.5));
            steps.push(step);
        }
    }
    (mids, steps)
}

/// Decide by winding count whether `target` has a zero in `B`, or none
/// within `2^-n` of it, with the discretisation error bounded explicitly.
pub fn certify_box(target: &dyn AnalyticTarget, b: &BoxRect, n: u32) -> Result<CertifyRecord> {
    let c_b = (b.min_side() / 4.0).min(-b.im_max / 2.0);
    if !(c_b > 0.0) {
        return Err(Error::Invalid {
            what: "certify box",
            detail: format!("degenerate box {b:?}"),
        });
    }
    // Fix the magnitude scale for the whole box so L and C are comparable.
    let mut s0 = target.log_eval(b.center())?.log_abs;
    if !s0.is_finite() {
        s0 = 0.0;
    }
    let tol = 2f64.powi(-(n as i32));
    let j_start = (c_b / tol).floor() as u32 + 1;
    let j_cap = j_start + 24;
    let mut last: Option<CertifyRecord> = None;
    for j in j_start..=j_cap {
        let margin = c_b / j as f64;
        let bj = b.inflate(margin);
        let spacing = 2f64.powi(-(j as i32));
        if bj.perimeter() / spacing > 4.0e6 {
            break;
        }
        let (mids, steps) = boundary_samples(&bj, spacing);
        let mut l_min = f64::INFINITY;
        let mut wind = C64::new(0.0, 0.0);
        let mut args = Vec::with_capacity(mids.len());
        for (z, dz) in mids.iter().zip(&steps) {
            let ld = target.log_eval(*z)?;
            l_min = l_min.min((ld.log_abs - s0).exp());
            args.push(ld.arg);
            wind += target.log_derivative(*z)? * dz;
        }
        wind /= C64::new(0.0, TAU);
        let c_bound = target.scaled_bound(&bj, s0)?;
        let t = spacing * c_bound;
        let d_bound = if l_min > t {
            bj.perimeter() / TAU * (t / (l_min - t) + t * c_bound / ((l_min - t) * (l_min - t)))
        } else {
            f64::INFINITY
        };
        // Phase certificate: consecutive midpoints are at most `spacing`
        // apart along the contour and |g| >= l_min - t/2 everywhere on it,
        // so each segment's phase swing is below spacing C / (l_min - t);
        // when that is below 1 < pi, wrapped increments sum to the exact
        // winding. Survives high-multiplicity zeros that starve the
        // quadrature error bound.
        let phase_ok = l_min > t && spacing * c_bound / (l_min - t) < 1.0;
        let phase_wind = if phase_ok {
            let total: f64 = (0..args.len())
                .map(|i| wrap_angle(args[(i + 1) % args.len()] - args[i]))
                .sum();
            (total / TAU).round()
        } else {
            f64::NAN
        };
        let rec = CertifyRecord {
            verdict: Verdict::Inconclusive,
            j_used: j,
            samples: mids.len(),
            margin,
            l_min,
            c_bound,
            d_bound,
            winding: wind,
            phase_decided: false,
            heuristic: target.heuristic_bound(),
        };
        if margin < tol && (phase_ok || d_bound < 0.5) {
            let count = if phase_ok { phase_wind } else { wind.re.round() };
            let verdict = if count >= 1.0 {
                Verdict::ZeroWithinTol
            } else {
                Verdict::ZeroFree
            };
            return Ok(CertifyRecord {
                verdict,
                winding: if phase_ok { C64::new(phase_wind, 0.0) } else { wind },
                phase_decided: phase_ok,
                ..rec
            });
        }
        last = Some(rec);
    }
    last.ok_or_else(|| Error::Invalid {
        what: "certify box",
        detail: "sampling cap reached before any enclosure was evaluated".into(),
    })
}

/// One retained tile of a certified cover.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeptBox {
    pub rect: BoxRect,
    pub record: CertifyRecord,
}

/// Certified zero cover at resolution `n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertifiedRegion {
    pub n: u32,
    /// Nominal tile side, `2^-n / 2`; edge tiles may be clipped shorter.
    pub box_side: f64,
    /// The tiled portion of the plane (the requested region clamped to the
    /// band `2^-n <= -Im k <= 2^n`, `|Re k| <= 2^n`).
    pub covered: BoxRect,
    /// Tiles certified to sit within `2^-n` of a zero, with their records.
    pub kept: Vec<KeptBox>,
    /// Tiles whose certification did not terminate; these void the cover
    /// guarantee.
    pub inconclusive: Vec<BoxRect>,
    /// Count of tiles certified zero-free.
    pub cleared: usize,
    /// True when no tile was inconclusive.
    pub certified: bool,
    /// Attouch-Wets distance guarantee to the true zero set, `1/n`, valid
    /// when `certified`.
    pub d_aw_bound: f64,
}

/// Tile the clamped region with boxes of diameter at most `2^-n` and keep
/// those certified to lie within `2^-n` of a zero of `target`.
pub fn zero_boxes(
    target: &dyn AnalyticTarget,
    n: u32,
    region: Option<&BoxRect>,
) -> Result<CertifiedRegion> {
    if n == 0 {
        return Err(Error::Invalid {
            what: "zero boxes",
            detail: "resolution parameter must be at least 1".into(),
        });
    }
    let tol = 2f64.powi(-(n as i32));
    let big = 2f64.powi(n as i32);
    let mut covered = BoxRect {
        re_min: -big,
        re_max: big,
        im_min: -big,
        im_max: -tol,
    };
    if let Some(r) = region {
        covered = BoxRect {
            re_min: covered.re_min.max(r.re_min),
            re_max: covered.re_max.min(r.re_max),
            im_min: covered.im_min.max(r.im_min),
            im_max: covered.im_max.min(r.im_max),
        };
        if covered.re_min >= covered.re_max || covered.im_min >= covered.im_max {
            return Err(Error::Invalid {
                what: "zero boxes",
                detail: format!("region {r:?} misses the band -Im k in [2^-{n}, 2^{n}]"),
            });
        }
    }
    let side = tol / 2.0;
    let cols = (covered.width() / side).ceil() as usize;
    let rows = (covered.height() / side).ceil() as usize;
    let mut tiles = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        for c in 0..cols {
            let re_min = covered.re_min + side * c as f64;
            let im_min = covered.im_min + side * r as f64;
            let tile = BoxRect {
                re_min,
                re_max: (re_min + side).min(covered.re_max),
                im_min,
                im_max: (im_min + side).min(covered.im_max),
            };
            if tile.width() > 1e-12 && tile.height() > 1e-12 {
                tiles.push(tile);
            }
        }
    }
    let records: Vec<Result<CertifyRecord>> = tiles
        .par_iter()
        .map(|t| certify_box(target, t, n))
        .collect();
    let mut kept = Vec::new();
    let mut inconclusive = Vec::new();
    let mut cleared = 0usize;
    for (tile, rec) in tiles.into_iter().zip(records) {
        let rec = rec?;
        match rec.verdict {
            Verdict::ZeroWithinTol => kept.push(KeptBox { rect: tile, record: rec }),
            Verdict::ZeroFree => cleared += 1,
            Verdict::Inconclusive => inconclusive.push(tile),
        }
    }
    let certified = inconclusive.is_empty();
    Ok(CertifiedRegion {
        n,
        box_side: side,
        covered,
        kept,
        inconclusive,
        cleared,
        certified,
        d_aw_bound: 1.0 / n as f64,
    })
}
