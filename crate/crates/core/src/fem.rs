//! P1 finite elements on the meshed cavity: stiffness and mass assembly with
//! Dirichlet elimination, complex Helmholtz solves sharing one factorization
//! across all boundary modes, lowest eigenpairs with interface trace
//! pairings, and the closed-form annulus oracle for the disk obstacle.

use crate::error::Result;
use crate::mesh::{boundary_pairing, TriMesh, VertexTag};
use crate::specfun;
use crate::{C64, Error};
use nalgebra::DMatrix;
use std::collections::BTreeMap;

/// Symmetric real sparse matrix in CSR form (full pattern stored).
#[derive(Debug, Clone)]
pub struct SparseSym {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseSym {
    fn from_map(n: usize, map: &BTreeMap<(usize, usize), f64>) -> Self {
        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _) in map.keys() {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut col_idx = Vec::with_capacity(map.len());
        let mut values = Vec::with_capacity(map.len());
        for (&(_, j), &v) in map.iter() {
            col_idx.push(j);
            values.push(v);
        }
        SparseSym {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for t in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[t] * x[self.col_idx[t]];
            }
            out[i] = s;
        }
    }

    pub fn matvec_c(&self, x: &[C64], out: &mut [C64]) {
        for i in 0..self.n {
            let mut s = C64::new(0.0, 0.0);
            for t in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[t] * x[self.col_idx[t]];
            }
            out[i] = s;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        for t in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.col_idx[t] == j {
                return self.values[t];
            }
        }
        0.0
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for t in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[(i, self.col_idx[t])] = self.values[t];
            }
        }
        d
    }

    /// Coordinate text dump: `i j value` per stored entry.
    pub fn to_coordinate_text(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n {
            for t in self.row_ptr[i]..self.row_ptr[i + 1] {
                s.push_str(&format!("{} {} {:.17e}\n", i, self.col_idx[t], self.values[t]));
            }
        }
        s
    }
}

/// Assembled P1 system on the free (non-Dirichlet) vertices.
#[derive(Debug, Clone)]
pub struct FemSystem {
    pub k: SparseSym,
    pub m: SparseSym,
    /// Mesh vertex index -> free dof index (None for Dirichlet vertices).
    pub free_of_vertex: Vec<Option<usize>>,
    /// Free dof index -> mesh vertex index.
    pub vertex_of_free: Vec<usize>,
    /// Largest mode order N; load vectors cover alpha in -N..=N.
    pub n_modes: i64,
    /// Boundary load vectors indexed by alpha + N.
    pub b: Vec<Vec<C64>>,
    /// Total mesh area (for diagnostics and Weyl checks).
    pub area: f64,
}

impl FemSystem {
    pub fn d_n(&self) -> usize {
        self.vertex_of_free.len()
    }

    pub fn b_alpha(&self, alpha: i64) -> &[C64] {
        &self.b[(alpha + self.n_modes) as usize]
    }
}

/// Assemble stiffness, mass, and the boundary load vectors for modes
/// `-n_modes..=n_modes`. Element integrals are exact for P1.
pub fn assemble(mesh: &TriMesh, n_modes: i64) -> Result<FemSystem> {
    let nv = mesh.vertices.len();
    let mut free_of_vertex = vec![None; nv];
    let mut vertex_of_free = Vec::new();
    for (v, tag) in mesh.tags.iter().enumerate() {
        if *tag != VertexTag::Dirichlet {
            free_of_vertex[v] = Some(vertex_of_free.len());
            vertex_of_free.push(v);
        }
    }
    let d_n = vertex_of_free.len();
    let mut kmap: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut mmap: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut area_total = 0.0;
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let p: Vec<[f64; 2]> = t.iter().map(|&v| mesh.vertices[v]).collect();
        let area = 0.5
            * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
        if area <= 0.0 {
            return Err(Error::Singular(format!(
                "triangle {ti} has non-positive area {area:.3e}"
            )));
        }
        area_total += area;
        // Hat gradient coefficients: grad phi_i = (b_i, c_i) / (2 area).
        let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
        let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
        for i in 0..3 {
            let Some(fi) = free_of_vertex[t[i]] else {
                continue;
            };
            for j in 0..3 {
                let Some(fj) = free_of_vertex[t[j]] else {
                    continue;
                };
                let ke = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
                let me = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                *kmap.entry((fi, fj)).or_insert(0.0) += ke;
                *mmap.entry((fi, fj)).or_insert(0.0) += me;
            }
        }
    }
    let k = SparseSym::from_map(d_n, &kmap);
    let m = SparseSym::from_map(d_n, &mmap);
    let mut b = Vec::with_capacity((2 * n_modes + 1) as usize);
    for alpha in -n_modes..=n_modes {
        let pairing = boundary_pairing(mesh, alpha);
        let mut vec = vec![C64::new(0.0, 0.0); d_n];
        for (vid, w) in pairing.vertex_ids.iter().zip(pairing.weights.iter()) {
            let Some(fi) = free_of_vertex[*vid] else {
                return Err(Error::Invalid {
                    what: "fem",
                    detail: format!("interface vertex {vid} is Dirichlet-tagged"),
                });
            };
            vec[fi] += *w;
        }
        b.push(vec);
    }
    Ok(FemSystem {
        k,
        m,
        free_of_vertex,
        vertex_of_free,
        n_modes,
        b,
        area: area_total,
    })
}

// ---------------------------------------------------------------------------
// Ordering and the profile factorization
// ---------------------------------------------------------------------------

/// Reverse Cuthill-McKee ordering from a pseudo-peripheral start vertex.
/// Returns `perm` with `perm[new] = old`.
fn rcm_order(a: &SparseSym) -> Vec<usize> {
    let n = a.n;
    if n == 0 {
        return Vec::new();
    }
    let bfs = |start: usize| -> (Vec<i64>, usize) {
        let mut level = vec![-1i64; n];
        let mut queue = std::collections::VecDeque::new();
        level[start] = 0;
        queue.push_back(start);
        let mut last = start;
        while let Some(v) = queue.pop_front() {
            last = v;
            for t in a.row_ptr[v]..a.row_ptr[v + 1] {
                let w = a.col_idx[t];
                if level[w] < 0 {
                    level[w] = level[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        (level, last)
    };
    let (_, far) = bfs(0);
    let (_, start) = bfs(far);
    let degree: Vec<usize> = (0..n).map(|i| a.row_ptr[i + 1] - a.row_ptr[i]).collect();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    // Components beyond the first are appended from their lowest-index seed.
    let mut seed = start;
    loop {
        seen[seed] = true;
        queue.push_back(seed);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = (a.row_ptr[v]..a.row_ptr[v + 1])
                .map(|t| a.col_idx[t])
                .filter(|&w| !seen[w])
                .collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(next) => seed = next,
            None => break,
        }
    }
    order.reverse();
    order
}

/// Scalar ring for the factorization: real or complex symmetric.
pub trait Scalar:
    Copy
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
{
    const ZERO: Self;
    fn mag(self) -> f64;
}

impl Scalar for f64 {
    const ZERO: f64 = 0.0;
    fn mag(self) -> f64 {
        self.abs()
    }
}

impl Scalar for C64 {
    const ZERO: C64 = C64::new(0.0, 0.0);
    fn mag(self) -> f64 {
        self.norm()
    }
}

/// Symmetric profile (skyline) LDL^T factorization, rows of the lower
/// triangle stored contiguously from the first nonzero column.
pub struct Skyline<T> {
    n: usize,
    first: Vec<usize>,
    ptr: Vec<usize>,
    vals: Vec<T>,
    diag: Vec<T>,
}

impl<T: Scalar> Skyline<T> {
    /// Factor the matrix whose permuted entries are supplied by `entry`;
    /// `pattern_first[j]` is the first column with a structural nonzero in
    /// permuted row j.
    fn factor(
        n: usize,
        pattern_first: &[usize],
        entry: impl Fn(usize, usize) -> T,
    ) -> Result<Self> {
        // The profile must be monotone for row-major storage to cover all
        // fill-in: widen first[] so each row starts no later than any later
        // row that reaches back past it (standard envelope property keeps
        // fill inside the profile automatically, no widening needed).
        let first = pattern_first.to_vec();
        let mut ptr = vec![0usize; n + 1];
        for j in 0..n {
            ptr[j + 1] = ptr[j] + (j - first[j]);
        }
        let mut vals = vec![T::ZERO; ptr[n]];
        let mut diag = vec![T::ZERO; n];
        let mut scale = 0.0f64;
        let mut g = vec![T::ZERO; n];
        for j in 0..n {
            let fj = first[j];
            for i in fj..j {
                g[i] = entry(j, i);
            }
            let djj = entry(j, j);
            scale = scale.max(djj.mag());
            // c[i] = A[j][i] - sum_t L[i][t] c[t]; stored row i holds L[i][.].
            for i in fj..j {
                let fi = first[i];
                let lo = fi.max(fj);
                let mut s = g[i];
                let base = ptr[i];
                for t in lo..i {
                    s = s - vals[base + (t - fi)] * g[t];
                }
                g[i] = s;
            }
            let mut d = djj;
            let base_j = ptr[j];
            for t in fj..j {
                let l = g[t] / diag[t];
                d = d - l * g[t];
                vals[base_j + (t - fj)] = l;
            }
            if d.mag() <= 1e-250 * scale.max(1.0) {
                return Err(Error::Singular(format!(
                    "zero pivot at position {j}: |d| = {:.3e}",
                    d.mag()
                )));
            }
            diag[j] = d;
        }
        Ok(Skyline {
            n,
            first,
            ptr,
            vals,
            diag,
        })
    }

    /// Solve LDL^T x = b in place.
    fn solve_in_place(&self, x: &mut [T]) {
        for j in 0..self.n {
            let fj = self.first[j];
            let base = self.ptr[j];
            let mut s = x[j];
            for t in fj..j {
                s = s - self.vals[base + (t - fj)] * x[t];
            }
            x[j] = s;
        }
        for j in 0..self.n {
            x[j] = x[j] / self.diag[j];
        }
        for j in (0..self.n).rev() {
            let fj = self.first[j];
            let base = self.ptr[j];
            let xj = x[j];
            for t in fj..j {
                x[t] = x[t] - self.vals[base + (t - fj)] * xj;
            }
        }
    }
}

/// Profile description of `K` under permutation `perm` (new -> old), with
/// `inv[old] = new`.
fn profile_first(a: &SparseSym, perm: &[usize], inv: &[usize]) -> Vec<usize> {
    let n = a.n;
    let mut first: Vec<usize> = (0..n).collect();
    for jnew in 0..n {
        let jold = perm[jnew];
        let mut f = jnew;
        for t in a.row_ptr[jold]..a.row_ptr[jold + 1] {
            f = f.min(inv[a.col_idx[t]].min(jnew));
        }
        first[jnew] = f;
    }
    first
}

/// Complex factorization of `K - k0^2 M`, reused across right-hand sides.
pub struct HelmholtzFactor<'a> {
    sys: &'a FemSystem,
    pub k0: C64,
    perm: Vec<usize>,
    inv: Vec<usize>,
    ldl: Skyline<C64>,
}

/// Factor `K - k0^2 M` once for reuse over all modes at this `k0`.
pub fn factor_helmholtz(sys: &FemSystem, k0: C64) -> Result<HelmholtzFactor<'_>> {
    if k0.im >= 0.0 {
        return Err(Error::BranchCut(format!(
            "reference point {k0} must be in the lower half plane"
        )));
    }
    let perm = rcm_order(&sys.k);
    let mut inv = vec![0usize; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let first = profile_first(&sys.k, &perm, &inv);
    let k2 = k0 * k0;
    let ldl = Skyline::<C64>::factor(sys.d_n(), &first, |i, j| {
        let (oi, oj) = (perm[i], perm[j]);
        C64::new(sys.k.get(oi, oj), 0.0) - k2 * sys.m.get(oi, oj)
    })?;
    Ok(HelmholtzFactor {
        sys,
        k0,
        perm,
        inv,
        ldl,
    })
}

impl HelmholtzFactor<'_> {
    /// Solve `(K - k0^2 M) u = rhs` with two iterative-refinement passes.
    pub fn solve_rhs(&self, rhs: &[C64]) -> Vec<C64> {
        let n = self.sys.d_n();
        let k2 = self.k0 * self.k0;
        let apply = |x: &[C64], out: &mut Vec<C64>| {
            let mut kx = vec![C64::new(0.0, 0.0); n];
            let mut mx = vec![C64::new(0.0, 0.0); n];
            self.sys.k.matvec_c(x, &mut kx);
            self.sys.m.matvec_c(x, &mut mx);
            out.clear();
            out.extend((0..n).map(|i| kx[i] - k2 * mx[i]));
        };
        let solve_perm = |r: &[C64]| -> Vec<C64> {
            let mut w: Vec<C64> = (0..n).map(|i| r[self.perm[i]]).collect();
            self.ldl.solve_in_place(&mut w);
            (0..n).map(|i| w[self.inv[i]]).collect()
        };
        let mut x = solve_perm(rhs);
        let mut ax = Vec::new();
        for _ in 0..2 {
            apply(&x, &mut ax);
            let r: Vec<C64> = (0..n).map(|i| rhs[i] - ax[i]).collect();
            let dx = solve_perm(&r);
            for i in 0..n {
                x[i] += dx[i];
            }
        }
        x
    }

    /// Solve for the boundary load of mode `alpha`.
    pub fn solve(&self, alpha: i64) -> Vec<C64> {
        self.solve_rhs(self.sys.b_alpha(alpha))
    }
}

/// One-shot Helmholtz solve for mode `alpha` at reference point `k0`.
pub fn solve_helmholtz(sys: &FemSystem, k0: C64, alpha: i64) -> Result<Vec<C64>> {
    Ok(factor_helmholtz(sys, k0)?.solve(alpha))
}

// ---------------------------------------------------------------------------
// Eigenpairs
// ---------------------------------------------------------------------------

/// Lowest eigenpairs of `K w = mu M w` with interface trace pairings.
#[derive(Debug, Clone)]
pub struct EigenPack {
    pub count: usize,
    pub eigenvalues: Vec<f64>,
    /// M-orthonormal eigenvectors over free dofs.
    pub vectors: Vec<Vec<f64>>,
    /// `traces[m][alpha + N]` = pairing of mode `alpha` with eigenvector m.
    pub traces: Vec<Vec<C64>>,
    pub n_modes: i64,
}

impl EigenPack {
    pub fn trace(&self, m: usize, alpha: i64) -> C64 {
        self.traces[m][(alpha + self.n_modes) as usize]
    }
}

const DENSE_EIG_CUTOFF: usize = 3000;

/// Compute the lowest `j_count` eigenpairs of `K w = mu M w`.
pub fn eig_lowest(sys: &FemSystem, j_count: usize) -> Result<EigenPack> {
    eig_lowest_with_cutoff(sys, j_count, DENSE_EIG_CUTOFF)
}

pub(crate) fn eig_lowest_with_cutoff(
    sys: &FemSystem,
    j_count: usize,
    dense_cutoff: usize,
) -> Result<EigenPack> {
    let n = sys.d_n();
    if j_count == 0 || j_count > n {
        return Err(Error::Invalid {
            what: "fem",
            detail: format!("eigenpair count {j_count} out of range 1..={n}"),
        });
    }
    let (eigenvalues, vectors) = if n <= dense_cutoff {
        finish_eigenpairs(sys, eig_dense(sys, j_count)?)?
    } else {
        // Clustered spectra (near-symmetric geometries) can need a larger
        // Krylov subspace; retry with a growing budget before giving up.
        let mut found = None;
        let mut last_err = None;
        for budget in [1usize, 2, 4] {
            match eig_lanczos(sys, j_count, budget)
                .and_then(|pair| finish_eigenpairs(sys, pair))
            {
                Ok(pair) => {
                    found = Some(pair);
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        match found {
            Some(pair) => pair,
            None => return Err(last_err.expect("at least one attempt ran")),
        }
    };
    let traces = vectors
        .iter()
        .map(|w| {
            (-sys.n_modes..=sys.n_modes)
                .map(|alpha| {
                    sys.b_alpha(alpha)
                        .iter()
                        .zip(w.iter())
                        .map(|(b, wi)| b * wi)
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(EigenPack {
        count: j_count,
        eigenvalues,
        vectors,
        traces,
        n_modes: sys.n_modes,
    })
}

/// M-normalize, fix phases (largest-magnitude entry positive), clamp
/// near-zero eigenvalues, and verify residuals.
fn finish_eigenpairs(
    sys: &FemSystem,
    (mut eigenvalues, mut vectors): (Vec<f64>, Vec<Vec<f64>>),
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = sys.d_n();
    let mut mx = vec![0.0; n];
    for w in vectors.iter_mut() {
        sys.m.matvec(w, &mut mx);
        let norm2: f64 = w.iter().zip(mx.iter()).map(|(a, b)| a * b).sum();
        let s = 1.0 / norm2.sqrt();
        let mut big = 0usize;
        for (i, v) in w.iter().enumerate() {
            if v.abs() > w[big].abs() {
                big = i;
            }
        }
        let s = if w[big] < 0.0 { -s } else { s };
        for v in w.iter_mut() {
            *v *= s;
        }
    }
    for mu in eigenvalues.iter_mut() {
        if *mu < 0.0 && *mu > -1e-9 {
            *mu = 0.0;
        }
    }
    verify_eigenpairs(sys, &eigenvalues, &vectors)?;
    Ok((eigenvalues, vectors))
}

fn verify_eigenpairs(sys: &FemSystem, mu: &[f64], w: &[Vec<f64>]) -> Result<()> {
    let n = sys.d_n();
    let mut kx = vec![0.0; n];
    let mut mx = vec![0.0; n];
    for (m, (val, vec)) in mu.iter().zip(w.iter()).enumerate() {
        sys.k.matvec(vec, &mut kx);
        sys.m.matvec(vec, &mut mx);
        let res: f64 = (0..n)
            .map(|i| (kx[i] - val * mx[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        let wnorm: f64 = vec.iter().map(|v| v * v).sum::<f64>().sqrt();
        if res > 1e-8 * (1.0 + val) * wnorm {
            return Err(Error::NonConvergence {
                what: "eigenpair residual",
                iterations: m,
                residual: res / ((1.0 + val) * wnorm),
            });
        }
    }
    Ok(())
}

fn eig_dense(sys: &FemSystem, j_count: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = sys.d_n();
    let kd = sys.k.to_dense();
    let md = sys.m.to_dense();
    let chol = nalgebra::Cholesky::new(md).ok_or_else(|| {
        Error::Singular("mass matrix is not positive definite".into())
    })?;
    let l = chol.l();
    // C = L^-1 K L^-T, symmetric.
    let y = l
        .clone()
        .solve_lower_triangular(&kd)
        .ok_or_else(|| Error::Singular("mass Cholesky solve failed".into()))?;
    let c = l
        .clone()
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::Singular("mass Cholesky solve failed".into()))?;
    let c = (&c + &c.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(c);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let lt = l.transpose();
    let mut eigenvalues = Vec::with_capacity(j_count);
    let mut vectors = Vec::with_capacity(j_count);
    for &i in idx.iter().take(j_count) {
        eigenvalues.push(eig.eigenvalues[i]);
        let y = eig.eigenvectors.column(i).into_owned();
        let w = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::Singular("mass Cholesky solve failed".into()))?;
        vectors.push(w.iter().copied().collect());
    }
    Ok((eigenvalues, vectors))
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Shift-invert Lanczos at shift -1: Op = (K + M)^-1 M in the M inner
/// product, full reorthogonalization, eigenvalues mapped by mu = 1/theta - 1.
/// `budget` scales the subspace cap for hard (clustered) spectra.
fn eig_lanczos(
    sys: &FemSystem,
    j_count: usize,
    budget: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = sys.d_n();
    let perm = rcm_order(&sys.k);
    let mut inv = vec![0usize; n];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let first = profile_first(&sys.k, &perm, &inv);
    let ldl = Skyline::<f64>::factor(n, &first, |i, j| {
        let (oi, oj) = (perm[i], perm[j]);
        sys.k.get(oi, oj) + sys.m.get(oi, oj)
    })?;
    let solve_shifted = |r: &[f64]| -> Vec<f64> {
        let mut w: Vec<f64> = (0..n).map(|i| r[perm[i]]).collect();
        ldl.solve_in_place(&mut w);
        (0..n).map(|i| w[inv[i]]).collect()
    };
    let mut mtmp = vec![0.0; n];
    let m_dot = |sys: &FemSystem, a: &[f64], b: &[f64], mtmp: &mut Vec<f64>| -> f64 {
        sys.m.matvec(b, mtmp);
        a.iter().zip(mtmp.iter()).map(|(x, y)| x * y).sum()
    };

    let base = (2 * j_count + 30)
        .max((2.6 * j_count as f64).ceil() as usize)
        .min(600);
    let max_dim = (base * budget).min(1500).min(n);
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut state = 0x0ddc_0ffe_e5ee_d001u64;
    let mut v0: Vec<f64> = (0..n)
        .map(|_| (splitmix64(&mut state) as f64 / u64::MAX as f64) - 0.5)
        .collect();
    let nrm = m_dot(sys, &v0, &v0, &mut mtmp).sqrt();
    for v in v0.iter_mut() {
        *v /= nrm;
    }
    q.push(v0);
    let mut dim = 0;
    while dim < max_dim {
        let qj = q[dim].clone();
        sys.m.matvec(&qj, &mut mtmp);
        let mut z = solve_shifted(&mtmp);
        let a = m_dot(sys, &z, &qj, &mut mtmp);
        alpha.push(a);
        for i in 0..n {
            z[i] -= a * q[dim][i];
        }
        if dim > 0 {
            let b = beta[dim - 1];
            for i in 0..n {
                z[i] -= b * q[dim - 1][i];
            }
        }
        // Full reorthogonalization, twice for safety.
        for _ in 0..2 {
            for qk in q.iter() {
                let c = m_dot(sys, &z, qk, &mut mtmp);
                for i in 0..n {
                    z[i] -= c * qk[i];
                }
            }
        }
        let b = m_dot(sys, &z, &z, &mut mtmp).sqrt();
        if !(b > 1e-14) {
            break;
        }
        beta.push(b);
        for v in z.iter_mut() {
            *v /= b;
        }
        q.push(z);
        dim += 1;
        if dim >= 2 * j_count && dim % 10 == 0 && lanczos_converged(&alpha, &beta, j_count) {
            break;
        }
    }
    let dim = alpha.len();
    if dim < j_count {
        return Err(Error::NonConvergence {
            what: "Lanczos subspace",
            iterations: dim,
            residual: f64::NAN,
        });
    }
    // Tridiagonal eigenproblem.
    let mut t = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        t[(i, i)] = alpha[i];
        if i + 1 < dim {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(t);
    let mut idx: Vec<usize> = (0..dim).collect();
    // Largest theta first: smallest mu.
    idx.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut eigenvalues = Vec::with_capacity(j_count);
    let mut vectors = Vec::with_capacity(j_count);
    for &i in idx.iter().take(j_count) {
        let theta = eig.eigenvalues[i];
        if !(theta > 0.0) {
            return Err(Error::NonConvergence {
                what: "Lanczos Ritz value",
                iterations: dim,
                residual: theta,
            });
        }
        eigenvalues.push(1.0 / theta - 1.0);
        let y = eig.eigenvectors.column(i);
        let mut w = vec![0.0; n];
        for (j, qj) in q.iter().take(dim).enumerate() {
            let c = y[j];
            for i in 0..n {
                w[i] += c * qj[i];
            }
        }
        vectors.push(w);
    }
    Ok((eigenvalues, vectors))
}

fn lanczos_converged(alpha: &[f64], beta: &[f64], j_count: usize) -> bool {
    let dim = alpha.len();
    if dim < j_count + 2 {
        return false;
    }
    let mut t = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        t[(i, i)] = alpha[i];
        if i + 1 < dim && i < beta.len() {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(t);
    let mut vals: Vec<(f64, usize)> = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    vals.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    let blast = *beta.last().unwrap_or(&0.0);
    vals.iter().take(j_count).all(|&(theta, i)| {
        let ylast = eig.eigenvectors[(dim - 1, i)].abs();
        // Residual of Op in the shifted coordinates; mapped through the
        // spectral transform this controls the pencil residual.
        blast * ylast <= 1e-11 * theta.abs().max(1e-3)
    })
}

// ---------------------------------------------------------------------------
// Annulus oracle
// ---------------------------------------------------------------------------

/// Closed-form diagonal entry of the interior map for the centered-disk
/// obstacle of radius `a` inside the interface circle of radius `x_radius`:
/// the radial solution with zero value at `a` and unit derivative at `X`
/// gives `m_alpha(k)`; off-diagonal entries vanish by symmetry.
pub fn disk_ntd_oracle(a: f64, x_radius: f64, k: C64, alpha: i64) -> Result<C64> {
    if !(a > 0.0 && a < x_radius) {
        return Err(Error::Invalid {
            what: "disk oracle",
            detail: format!("need 0 < a < X, got a = {a}, X = {x_radius}"),
        });
    }
    if k.im >= 0.0 {
        return Err(Error::BranchCut(format!(
            "oracle point {k} must be in the lower half plane"
        )));
    }
    let nu = alpha.unsigned_abs() as usize;
    let inner = specfun::bessel_jy_row(nu, k * a)?;
    let outer = specfun::bessel_jy_row(nu, k * x_radius)?;
    let (ja, ya) = (inner.j[nu], inner.y[nu]);
    let (jx, yx, djx, dyx) = (outer.j[nu], outer.y[nu], outer.dj[nu], outer.dy[nu]);
    // Scale by the larger of J(ka), Y(ka) to avoid overflow at high order;
    // the degeneracy test applies to the unscaled cross product, so the
    // threshold is divided by the factored-out magnitude.
    let (num, den, scale) = if ya.norm() >= ja.norm() {
        let t = ja / ya;
        (jx - yx * t, k * (djx - dyx * t), ya.norm())
    } else {
        let t = ya / ja;
        (jx * t - yx, k * (djx * t - dyx), ja.norm())
    };
    if den.norm() < 1e-14 / scale {
        return Err(Error::Singular(format!(
            "radial Wronskian denominator {:.3e} at k = {k}, order {alpha}",
            den.norm() * scale
        )));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ball_polygon, disk_polygon, pixelate, trace_pixel_boundary, ObstacleSpec};
    use crate::mesh::build_mesh;
    use std::f64::consts::PI;

    fn plus_mesh(h: f64, m_b: usize) -> TriMesh {
        let disk = ObstacleSpec::Disk {
            radius: 0.5,
            center: [0.0, 0.0],
        };
        let p = pixelate(&disk, 2).unwrap();
        let obs = trace_pixel_boundary(&p).unwrap();
        let interface = ball_polygon(1.0, m_b).unwrap();
        build_mesh(&obs, &interface, h).unwrap()
    }

    fn disk_mesh(h: f64) -> TriMesh {
        let m_ob = ((2.0 * PI * 0.5) / (0.4 * h)).ceil() as usize;
        let m_b = ((2.0 * PI) / (0.4 * h)).ceil() as usize;
        let obs = disk_polygon(0.5, [0.0, 0.0], m_ob.max(16));
        let interface = ball_polygon(1.0, m_b.max(16)).unwrap();
        build_mesh(&[obs], &interface, h).unwrap()
    }

    fn hole_free_mesh(h: f64, m_b: usize) -> TriMesh {
        let interface = ball_polygon(1.0, m_b).unwrap();
        build_mesh(&[], &interface, h).unwrap()
    }

    #[test]
    fn reference_element_matrices() {
        let mesh = TriMesh {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            triangles: vec![[0, 1, 2]],
            tags: vec![VertexTag::Interior; 3],
            interface_edges: vec![],
            x_radius: 1.0,
            h: 2.0f64.sqrt(),
            quality: 2.0,
        };
        let sys = assemble(&mesh, 0).unwrap();
        let want_k = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(sys.k.get(i, j), want_k[i][j], "K[{i}][{j}]");
            }
        }
        // Mass row sums |T|/3 = 1/6.
        for i in 0..3 {
            let sum: f64 = (0..3).map(|j| sys.m.get(i, j)).sum();
            assert!((sum - 0.5 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let mesh = hole_free_mesh(0.25, 16);
        let sys = assemble(&mesh, 0).unwrap();
        let ones = vec![1.0; sys.d_n()];
        let mut kx = vec![0.0; sys.d_n()];
        sys.k.matvec(&ones, &mut kx);
        let quad: f64 = kx.iter().sum();
        assert!(quad.abs() < 1e-10, "1^T K 1 = {quad}");
    }

    #[test]
    fn matrices_symmetric_exactly() {
        let mesh = plus_mesh(0.098, 32);
        let sys = assemble(&mesh, 2).unwrap();
        for a in [&sys.k, &sys.m] {
            for i in 0..a.n {
                for t in a.row_ptr[i]..a.row_ptr[i + 1] {
                    let j = a.col_idx[t];
                    assert_eq!(a.values[t], a.get(j, i), "entry ({i}, {j})");
                }
            }
        }
    }

    #[test]
    fn mass_positive_definite() {
        let mesh = plus_mesh(0.098, 32);
        let sys = assemble(&mesh, 0).unwrap();
        let chol = nalgebra::Cholesky::new(sys.m.to_dense());
        assert!(chol.is_some());
        let mut state = 42u64;
        let v: Vec<f64> = (0..sys.d_n())
            .map(|_| splitmix64(&mut state) as f64 / u64::MAX as f64 - 0.5)
            .collect();
        let mut mv = vec![0.0; sys.d_n()];
        sys.m.matvec(&v, &mut mv);
        let q: f64 = v.iter().zip(mv.iter()).map(|(a, b)| a * b).sum();
        assert!(q > 0.0);
    }

    #[test]
    fn helmholtz_residual_small() {
        let mesh = plus_mesh(0.098, 32);
        let sys = assemble(&mesh, 3).unwrap();
        let k0 = C64::new(-1.0, -1.0);
        let fac = factor_helmholtz(&sys, k0).unwrap();
        let n = sys.d_n();
        let k2 = k0 * k0;
        for alpha in [-3i64, 0, 2] {
            let u = fac.solve(alpha);
            let mut kx = vec![C64::new(0.0, 0.0); n];
            let mut mx = vec![C64::new(0.0, 0.0); n];
            sys.k.matvec_c(&u, &mut kx);
            sys.m.matvec_c(&u, &mut mx);
            let b = sys.b_alpha(alpha);
            let res: f64 = (0..n)
                .map(|i| (kx[i] - k2 * mx[i] - b[i]).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let bnorm: f64 = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            assert!(res <= 1e-10 * bnorm, "alpha {alpha}: {res} vs {bnorm}");
        }
    }

    #[test]
    fn reciprocity_and_conjugate_pairing() {
        let mesh = plus_mesh(0.098, 32);
        let sys = assemble(&mesh, 3).unwrap();
        let k0 = C64::new(-1.2, -0.8);
        let fac = factor_helmholtz(&sys, k0).unwrap();
        let dot = |a: &[C64], b: &[C64]| -> C64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        let u: BTreeMap<i64, Vec<C64>> =
            (-3..=3).map(|alpha| (alpha, fac.solve(alpha))).collect();
        // b_{-beta}^T u_alpha = b_alpha^T u_{-beta}: symmetric-system identity.
        let mut worst = 0.0f64;
        for alpha in -3..=3i64 {
            for beta in -3..=3i64 {
                let lhs = dot(sys.b_alpha(-beta), &u[&alpha]);
                let rhs = dot(sys.b_alpha(alpha), &u[&-beta]);
                worst = worst.max((lhs - rhs).norm() / lhs.norm().max(1e-30));
                assert!(
                    (lhs - rhs).norm() <= 1e-9 * lhs.norm().max(1e-12),
                    "alpha {alpha} beta {beta}: {lhs} vs {rhs}"
                );
            }
        }
        // Conjugate pairing across the imaginary axis.
        let k0m = -k0.conj();
        let facm = factor_helmholtz(&sys, k0m).unwrap();
        for alpha in [-2i64, 1, 3] {
            let left = fac.solve(-alpha);
            let right = facm.solve(alpha);
            let diff: f64 = left
                .iter()
                .zip(right.iter())
                .map(|(l, r)| (l - r.conj()).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let scale: f64 = left.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            assert!(diff <= 1e-9 * scale, "alpha {alpha}: {diff} vs {scale}");
        }
    }

    #[test]
    fn hole_free_constant_mode() {
        let mesh = hole_free_mesh(0.3, 16);
        let sys = assemble(&mesh, 0).unwrap();
        let pack = eig_lowest(&sys, 3).unwrap();
        assert!(pack.eigenvalues[0].abs() < 1e-8, "{}", pack.eigenvalues[0]);
        assert!(pack.eigenvalues[1] > 1e-3);
        let c = 1.0 / sys.area.sqrt();
        for v in &pack.vectors[0] {
            assert!((v - c).abs() < 1e-6 * c, "{v} vs {c}");
        }
    }

    #[test]
    fn annulus_first_eigenvalue_positive() {
        let mesh = plus_mesh(0.098, 32);
        let sys = assemble(&mesh, 0).unwrap();
        let pack = eig_lowest(&sys, 2).unwrap();
        assert!(pack.eigenvalues[0] > 0.05, "{}", pack.eigenvalues[0]);
    }

    #[test]
    fn eigen_invariants_and_lower_bound() {
        let mesh = disk_mesh(0.15);
        let sys = assemble(&mesh, 2).unwrap();
        let j = 20;
        let pack = eig_lowest(&sys, j).unwrap();
        // Ascending.
        for m in 1..j {
            assert!(pack.eigenvalues[m] >= pack.eigenvalues[m - 1] - 1e-12);
        }
        // M-orthonormality.
        let n = sys.d_n();
        let mut mx = vec![0.0; n];
        for a in 0..j {
            sys.m.matvec(&pack.vectors[a], &mut mx);
            for b in 0..j {
                let dot: f64 = pack.vectors[b].iter().zip(mx.iter()).map(|(x, y)| x * y).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10, "({a}, {b}): {dot}");
            }
        }
        // Domain monotonicity against the Neumann disk values.
        let disk_eigs = specfun::neumann_disk_eigenvalues(1.0, j);
        for m in 0..j {
            assert!(
                pack.eigenvalues[m] >= disk_eigs[m] - 1e-9,
                "mu_{m} = {} < disk {}",
                pack.eigenvalues[m],
                disk_eigs[m]
            );
        }
        // Trace conjugation.
        for m in 0..j {
            for alpha in 0..=2i64 {
                let t = pack.trace(m, alpha);
                let tm = pack.trace(m, -alpha);
                assert!((tm - t.conj()).norm() <= 1e-12 * t.norm().max(1.0));
            }
        }
    }

    #[test]
    fn weyl_growth_on_disk_geometry() {
        let mesh = disk_mesh(0.15);
        let sys = assemble(&mesh, 0).unwrap();
        let j = 50;
        let pack = eig_lowest(&sys, j).unwrap();
        let lam = pack.eigenvalues[j - 1];
        let predicted = sys.area * lam / (4.0 * PI);
        let ratio = predicted / j as f64;
        assert!(
            (0.5..=2.0).contains(&ratio),
            "Weyl ratio {ratio} (mu_50 = {lam}, area = {})",
            sys.area
        );
    }

    #[test]
    fn lanczos_matches_dense() {
        let mesh = plus_mesh(0.098, 32);
        let sys = assemble(&mesh, 2).unwrap();
        let j = 12;
        let dense = eig_lowest_with_cutoff(&sys, j, usize::MAX).unwrap();
        let lanc = eig_lowest_with_cutoff(&sys, j, 0).unwrap();
        for m in 0..j {
            let (a, b) = (dense.eigenvalues[m], lanc.eigenvalues[m]);
            assert!((a - b).abs() <= 1e-7 * (1.0 + a.abs()), "mu_{m}: {a} vs {b}");
        }
        // Traces agree once phase is fixed.
        for m in 0..j {
            for alpha in [-2i64, 0, 1] {
                let (ta, tb) = (dense.trace(m, alpha), lanc.trace(m, alpha));
                assert!(
                    (ta - tb).norm() <= 1e-5 * ta.norm().max(1e-8),
                    "trace {m} {alpha}: {ta} vs {tb}"
                );
            }
        }
    }

    #[test]
    fn oracle_even_in_order() {
        let k = C64::new(-1.3, -0.7);
        for alpha in [0i64, 1, 2, 7, 19] {
            let p = disk_ntd_oracle(0.5, 1.0, k, alpha).unwrap();
            let m = disk_ntd_oracle(0.5, 1.0, k, -alpha).unwrap();
            assert_eq!(p, m);
        }
    }

    #[test]
    fn fem_matches_oracle_with_h_squared_decay() {
        let k0 = C64::new(-1.0, -1.0);
        let hs = [0.2, 0.1, 0.05];
        let mut diag_err = Vec::new();
        let mut offdiag = Vec::new();
        for &h in &hs {
            let mesh = disk_mesh(h);
            let sys = assemble(&mesh, 2).unwrap();
            let fac = factor_helmholtz(&sys, k0).unwrap();
            let u: BTreeMap<i64, Vec<C64>> =
                (-2..=2).map(|alpha| (alpha, fac.solve(alpha))).collect();
            let dot = |a: &[C64], b: &[C64]| -> C64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
            let mut worst_diag = 0.0f64;
            for alpha in -2..=2i64 {
                let ahat = dot(sys.b_alpha(-alpha), &u[&alpha]);
                let oracle = disk_ntd_oracle(0.5, 1.0, k0, alpha).unwrap();
                worst_diag = worst_diag.max((ahat - oracle).norm());
            }
            diag_err.push(worst_diag);
            let mut worst_off = 0.0f64;
            for alpha in -2..=2i64 {
                for beta in -2..=2i64 {
                    if alpha != beta {
                        worst_off = worst_off.max(dot(sys.b_alpha(-beta), &u[&alpha]).norm());
                    }
                }
            }
            offdiag.push(worst_off);
        }
        // Monotone decrease with 10% headroom, and roughly O(h^2) overall.
        assert!(diag_err[1] <= 1.1 * diag_err[0], "{diag_err:?}");
        assert!(diag_err[2] <= 1.1 * diag_err[1], "{diag_err:?}");
        assert!(diag_err[2] <= 0.35 * diag_err[0], "{diag_err:?}");
        assert!(offdiag[2] <= 1.1 * offdiag[0], "{offdiag:?}");
        assert!(offdiag[2] < 0.05, "{offdiag:?}");
    }
}
