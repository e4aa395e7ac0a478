//! Galerkin matrix of the Maxwell single-layer operator,
//!
//! ```text
//! V(a, b) = ∬ u(x, y) [ j_b(y)·j_a(x) - κ^-2 div j_b(y) div j_a(x) ] dΓ_y dΓ_x,
//! u(x, y) = exp(-iκ|x-y|) / (4π|x-y|),
//! ```
//!
//! assembled cell pair by cell pair in reference coordinates, where the
//! Piola map turns `j dΓ` into `dF v dx` and `div_Γ j dΓ` into `div v dx`.
//! Geometry and basis data are evaluated once and reused for every
//! wavenumber of a batch, so a whole contour is assembled in one sweep.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DMatrixView};
use num_complex::Complex64;

use crate::densela::{CMatrix, LuFactorization};
use crate::error::{Error, Result};
use crate::quadrature::{gauss_rule, singular_pair_rule, Adjacency, Dihedral, Orientation, MAX_DEGREE};
use crate::space::{Cell, CellValues, DivConformingSpace};
use crate::geometry::Vec3;

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// `exp(-iκr) / (4πr)` for `r = |x - y|`.
pub fn kernel(kappa: Complex64, x: &Vec3, y: &Vec3) -> Result<Complex64> {
    let r = (x - y).norm();
    if r == 0.0 {
        return Err(Error::Numerical(
            "kernel evaluated at coincident points; use a singular pair rule".into(),
        ));
    }
    Ok(kernel_r(kappa, r))
}

#[inline]
fn kernel_r(kappa: Complex64, r: f64) -> Complex64 {
    (Complex64::new(0.0, -r) * kappa).exp() / (FOUR_PI * r)
}

fn check_kappa(kappa: Complex64) -> Result<()> {
    if kappa == Complex64::new(0.0, 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidWavenumber(kappa));
    }
    Ok(())
}

/// Quadrature orders used by the assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSettings {
    /// Gauss points per direction for well-separated cells (default `p + 3`).
    pub far_degree: Option<usize>,
    /// Gauss points per direction of the singular rules (default `p + 4`).
    pub singular_degree: Option<usize>,
    /// Extra points per direction for separated but nearby cells.
    pub near_increase: usize,
    /// Cells whose centres are closer than this multiple of the larger cell
    /// diameter count as nearby.
    pub near_ratio: f64,
    /// Assemble only one triangle of cell pairs and mirror it.
    pub mirror: bool,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            far_degree: None,
            singular_degree: None,
            near_increase: 2,
            near_ratio: 1.5,
            mirror: true,
        }
    }
}

impl QuadratureSettings {
    fn resolve(&self, p: usize) -> Result<(usize, usize, usize)> {
        let far = self.far_degree.unwrap_or(p + 3);
        let sing = self.singular_degree.unwrap_or(p + 4);
        for d in [far, sing] {
            if !(1..=MAX_DEGREE).contains(&d) {
                return Err(Error::Usage(format!("quadrature degree {d} outside 1..={MAX_DEGREE}")));
            }
        }
        Ok((far, sing, (far + self.near_increase).min(MAX_DEGREE)))
    }
}

/// Dense EFIE matrix at one wavenumber.
#[derive(Debug, Clone)]
pub struct EfieMatrix {
    pub kappa: Complex64,
    pub entries: CMatrix,
    pub far_degree: usize,
    pub singular_degree: usize,
}

impl EfieMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }
}

/// Reference basis data of one cell at a set of nodes.
///
/// `vals[(n * nloc + a) * 4 + c]` holds `(dF v_a)_c` for `c < 3` and
/// `div v_a` for `c = 3`.
struct NodeEval {
    pts: Vec<Vec3>,
    vals: Vec<f64>,
}

/// Node data of one cell for the separable far-field rule.
struct FarData {
    pts: Vec<Vec3>,
    w: Vec<f64>,
    /// `(N x 4n)`, column `b * 4 + c`
    y: DMatrix<f64>,
    /// `(n x 3N)`, column `c * N + i`
    xj: DMatrix<f64>,
    /// `(n x N)`
    xd: DMatrix<f64>,
}

struct CellInfo {
    cell: Cell,
    dofs: Vec<(usize, f64)>,
    /// corners at local `(0,0), (1,0), (0,1), (1,1)`
    corners: [Vec3; 4],
    center: Vec3,
    diameter: f64,
}

const CORNERS: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];

enum PairKind {
    Far { near: bool },
    Singular(Adjacency, Orientation),
}

/// Reusable assembly context for one discrete space.
pub struct Assembler<'a> {
    space: &'a DivConformingSpace,
    far_degree: usize,
    singular_degree: usize,
    near_ratio: f64,
    mirror: bool,
    h: f64,
    cells: Vec<CellInfo>,
    far: Vec<FarData>,
    near: Vec<FarData>,
    tol: f64,
}

impl<'a> Assembler<'a> {
    pub fn new(space: &'a DivConformingSpace, settings: &QuadratureSettings) -> Result<Self> {
        let (far_degree, singular_degree, near_degree) = settings.resolve(space.degree())?;
        let h = 1.0 / space.reference().cells_per_direction() as f64;
        let geo = space.geometry();
        let mut cells = Vec::new();
        for cell in space.cells() {
            let mut corners = [Vec3::zeros(); 4];
            for (c, t) in corners.iter_mut().zip(CORNERS) {
                *c = geo.frame(cell.patch, (cell.c1 as f64 + t[0]) * h, (cell.c2 as f64 + t[1]) * h)?.point;
            }
            let center = geo
                .frame(cell.patch, (cell.c1 as f64 + 0.5) * h, (cell.c2 as f64 + 0.5) * h)?
                .point;
            let mut diameter: f64 = 0.0;
            for i in 0..4 {
                for j in 0..i {
                    diameter = diameter.max((corners[i] - corners[j]).norm());
                }
            }
            cells.push(CellInfo {
                cell,
                dofs: space.cell_dofs(cell),
                corners,
                center,
                diameter,
            });
        }
        let mut a = Self {
            space,
            far_degree,
            singular_degree,
            near_ratio: settings.near_ratio,
            mirror: settings.mirror,
            h,
            cells,
            far: Vec::new(),
            near: Vec::new(),
            tol: 1e-9 * geo.diameter(),
        };
        a.far = a.far_data(far_degree)?;
        a.near = a.far_data(near_degree)?;
        Ok(a)
    }

    pub fn space(&self) -> &DivConformingSpace {
        self.space
    }

    pub fn far_degree(&self) -> usize {
        self.far_degree
    }

    pub fn singular_degree(&self) -> usize {
        self.singular_degree
    }

    fn nloc(&self) -> usize {
        self.space.reference().functions_per_cell()
    }

    fn eval_nodes(&self, cell: Cell, nodes: &[[f64; 2]]) -> Result<NodeEval> {
        let nloc = self.nloc();
        let geo = self.space.geometry();
        let refsp = self.space.reference();
        let mut pts = Vec::with_capacity(nodes.len());
        let mut vals = vec![0.0; nodes.len() * nloc * 4];
        let mut cv = CellValues::zeroed();
        for (n, t) in nodes.iter().enumerate() {
            let x = (cell.c1 as f64 + t[0]) * self.h;
            let y = (cell.c2 as f64 + t[1]) * self.h;
            let fr = geo.frame(cell.patch, x, y)?;
            refsp.eval_cell(cell.c1, cell.c2, *t, &mut cv);
            pts.push(fr.point);
            for a in 0..nloc {
                let j = fr.push_forward(cv.values[a]);
                let o = (n * nloc + a) * 4;
                vals[o] = j.x;
                vals[o + 1] = j.y;
                vals[o + 2] = j.z;
                vals[o + 3] = cv.divs[a];
            }
        }
        Ok(NodeEval { pts, vals })
    }

    fn far_data(&self, d: usize) -> Result<Vec<FarData>> {
        let rule = gauss_rule(d)?;
        let nloc = self.nloc();
        let nn = rule.nodes.len();
        let w: Vec<f64> = rule.weights.iter().map(|w| w * self.h * self.h).collect();
        self.cells
            .iter()
            .map(|ci| {
                let e = self.eval_nodes(ci.cell, &rule.nodes)?;
                let at = |n: usize, a: usize, c: usize| e.vals[(n * nloc + a) * 4 + c];
                Ok(FarData {
                    y: DMatrix::from_fn(nn, 4 * nloc, |n, col| at(n, col / 4, col % 4)),
                    xj: DMatrix::from_fn(nloc, 3 * nn, |a, col| at(col % nn, a, col / nn)),
                    xd: DMatrix::from_fn(nloc, nn, |a, n| at(n, a, 3)),
                    pts: e.pts,
                    w: w.clone(),
                })
            })
            .collect()
    }

    fn classify(&self, k: usize, l: usize) -> PairKind {
        if k == l {
            return PairKind::Singular(Adjacency::Coincident, Orientation::Same);
        }
        let (ck, cl) = (&self.cells[k], &self.cells[l]);
        let mut shared = Vec::new();
        for (i, p) in ck.corners.iter().enumerate() {
            for (j, q) in cl.corners.iter().enumerate() {
                if (p - q).norm() <= self.tol {
                    shared.push((i, j));
                }
            }
        }
        let find = |targets: &[(usize, usize)]| {
            Dihedral::all().find(|m| {
                targets.iter().enumerate().all(|(s, &(corner, _))| {
                    let img = m.apply(CORNERS[s]);
                    img == CORNERS[corner]
                })
            })
        };
        match shared.len() {
            0 => {
                let dist = (ck.center - cl.center).norm();
                PairKind::Far {
                    near: dist < self.near_ratio * ck.diameter.max(cl.diameter),
                }
            }
            1 => {
                let a = find(&[(shared[0].0, 0)]).expect("corner symmetry exists");
                let b = find(&[(shared[0].1, 0)]).expect("corner symmetry exists");
                PairKind::Singular(Adjacency::Vertex, Orientation::Shared { a, b })
            }
            2 => {
                let a = find(&[(shared[0].0, 0), (shared[1].0, 0)]);
                let b = find(&[(shared[0].1, 0), (shared[1].1, 0)]);
                match (a, b) {
                    (Some(a), Some(b)) => PairKind::Singular(Adjacency::Edge, Orientation::Shared { a, b }),
                    // two shared corners that are not an edge of both cells
                    _ => PairKind::Far { near: true },
                }
            }
            _ => PairKind::Singular(Adjacency::Coincident, Orientation::Same),
        }
    }

    /// Separable tensor rule for separated cells.
    fn far_block(&self, fk: &FarData, fl: &FarData, kappas: &[Complex64], out: &mut [CMatrix]) {
        let (nx, ny) = (fk.pts.len(), fl.pts.len());
        let nb = fl.xd.nrows();
        let mut r = DMatrix::<f64>::zeros(nx, ny);
        for j in 0..ny {
            for i in 0..nx {
                r[(i, j)] = (fk.pts[i] - fl.pts[j]).norm();
            }
        }
        let mut kr = DMatrix::<f64>::zeros(nx, ny);
        let mut ki = DMatrix::<f64>::zeros(nx, ny);
        for (kappa, m) in kappas.iter().zip(out.iter_mut()) {
            for j in 0..ny {
                for i in 0..nx {
                    let u = kernel_r(*kappa, r[(i, j)]) * (fk.w[i] * fl.w[j]);
                    kr[(i, j)] = u.re;
                    ki[(i, j)] = u.im;
                }
            }
            let zr = &kr * &fl.y;
            let zi = &ki * &fl.y;
            let zr = DMatrixView::from_slice(zr.as_slice(), 4 * nx, nb);
            let zi = DMatrixView::from_slice(zi.as_slice(), 4 * nx, nb);
            let mjr = &fk.xj * zr.rows(0, 3 * nx);
            let mji = &fk.xj * zi.rows(0, 3 * nx);
            let mdr = &fk.xd * zr.rows(3 * nx, nx);
            let mdi = &fk.xd * zi.rows(3 * nx, nx);
            let f = -kappa.powi(-2);
            for b in 0..nb {
                for a in 0..m.nrows() {
                    let d = Complex64::new(mdr[(a, b)], mdi[(a, b)]);
                    m[(a, b)] = Complex64::new(mjr[(a, b)], mji[(a, b)]) + f * d;
                }
            }
        }
    }

    /// Paired-node rule for cells that touch.
    fn singular_block(&self, k: usize, l: usize, class: Adjacency, o: Orientation, kappas: &[Complex64], out: &mut [CMatrix]) -> Result<()> {
        let rule = singular_pair_rule(class, self.singular_degree, o)?;
        let ek = self.eval_nodes(self.cells[k].cell, &rule.x)?;
        let el = self.eval_nodes(self.cells[l].cell, &rule.y)?;
        let nloc = self.nloc();
        let nn = nloc * nloc;
        let scale = self.h.powi(4);
        let nk = kappas.len();
        const CHUNK: usize = 1024;
        let mut accum = vec![(DMatrix::<f64>::zeros(nk, nn), DMatrix::<f64>::zeros(nk, nn)); 2];
        let mut start = 0;
        while start < rule.len() {
            let c = CHUNK.min(rule.len() - start);
            let mut p = DMatrix::<f64>::zeros(c, nn);
            let mut q = DMatrix::<f64>::zeros(c, nn);
            let mut ur = DMatrix::<f64>::zeros(nk, c);
            let mut ui = DMatrix::<f64>::zeros(nk, c);
            for n in 0..c {
                let g = start + n;
                let r = (ek.pts[g] - el.pts[g]).norm();
                let w = rule.weights[g] * scale;
                for (s, kappa) in kappas.iter().enumerate() {
                    let u = kernel_r(*kappa, r) * w;
                    ur[(s, n)] = u.re;
                    ui[(s, n)] = u.im;
                }
                let xa = &ek.vals[g * nloc * 4..(g + 1) * nloc * 4];
                let yb = &el.vals[g * nloc * 4..(g + 1) * nloc * 4];
                for b in 0..nloc {
                    let y = &yb[b * 4..b * 4 + 4];
                    for a in 0..nloc {
                        let x = &xa[a * 4..a * 4 + 4];
                        let col = b * nloc + a;
                        p[(n, col)] = x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
                        q[(n, col)] = x[3] * y[3];
                    }
                }
            }
            accum[0].0 += &ur * &p;
            accum[0].1 += &ui * &p;
            accum[1].0 += &ur * &q;
            accum[1].1 += &ui * &q;
            start += c;
        }
        for (s, (kappa, m)) in kappas.iter().zip(out.iter_mut()).enumerate() {
            let f = -kappa.powi(-2);
            for b in 0..nloc {
                for a in 0..nloc {
                    let col = b * nloc + a;
                    let jj = Complex64::new(accum[0].0[(s, col)], accum[0].1[(s, col)]);
                    let dd = Complex64::new(accum[1].0[(s, col)], accum[1].1[(s, col)]);
                    m[(a, b)] = jj + f * dd;
                }
            }
        }
        Ok(())
    }

    fn pair_blocks(&self, k: usize, l: usize, kappas: &[Complex64]) -> Result<Vec<CMatrix>> {
        let nloc = self.nloc();
        let mut out = vec![CMatrix::zeros(nloc, nloc); kappas.len()];
        match self.classify(k, l) {
            PairKind::Far { near: false } => self.far_block(&self.far[k], &self.far[l], kappas, &mut out),
            PairKind::Far { near: true } => self.far_block(&self.near[k], &self.near[l], kappas, &mut out),
            PairKind::Singular(c, o) => self.singular_block(k, l, c, o, kappas, &mut out)?,
        }
        Ok(out)
    }

    /// Assembles the matrices for all `kappas` in one sweep over cell pairs.
    pub fn assemble_many(&self, kappas: &[Complex64]) -> Result<Vec<CMatrix>> {
        for k in kappas {
            check_kappa(*k)?;
        }
        let n = self.space.dim();
        let mut mats = vec![CMatrix::zeros(n, n); kappas.len()];
        let ncell = self.cells.len();
        let rows: Vec<usize> = (0..ncell).collect();
        // rows are processed in chunks; scattering is sequential so the
        // result does not depend on the number of worker threads
        for chunk in rows.chunks(8) {
            let blocks = map_rows(chunk, |k| {
                let l0 = if self.mirror { k } else { 0 };
                (l0..ncell).map(|l| Ok((l, self.pair_blocks(k, l, kappas)?))).collect::<Result<Vec<_>>>()
            })?;
            for (&k, row) in chunk.iter().zip(blocks) {
                let dk = &self.cells[k].dofs;
                for (l, bl) in row {
                    let dl = &self.cells[l].dofs;
                    for (m, b) in mats.iter_mut().zip(&bl) {
                        for (a, &(ga, sa)) in dk.iter().enumerate() {
                            for (bb, &(gb, sb)) in dl.iter().enumerate() {
                                let v = b[(a, bb)] * (sa * sb);
                                m[(ga, gb)] += v;
                                if self.mirror && l != k {
                                    m[(gb, ga)] += v;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(mats)
    }

    pub fn assemble(&self, kappa: Complex64) -> Result<EfieMatrix> {
        let entries = self.assemble_many(&[kappa])?.pop().expect("one matrix");
        Ok(EfieMatrix {
            kappa,
            entries,
            far_degree: self.far_degree,
            singular_degree: self.singular_degree,
        })
    }
}

#[cfg(feature = "parallel")]
fn map_rows<T: Send, F: Fn(usize) -> Result<T> + Sync>(rows: &[usize], f: F) -> Result<Vec<T>> {
    use rayon::prelude::*;
    rows.par_iter().map(|&k| f(k)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_rows<T, F: Fn(usize) -> Result<T>>(rows: &[usize], f: F) -> Result<Vec<T>> {
    rows.iter().map(|&k| f(k)).collect()
}

pub fn assemble(space: &DivConformingSpace, kappa: Complex64, settings: &QuadratureSettings) -> Result<EfieMatrix> {
    check_kappa(kappa)?;
    Assembler::new(space, settings)?.assemble(kappa)
}

/// Solves `V X = rhs` with a pivoted LU factorisation.
pub fn apply_inverse(matrix: &EfieMatrix, rhs: &CMatrix) -> Result<CMatrix> {
    let lu = LuFactorization::new(matrix.entries.clone())?;
    let (index, pivot) = lu.min_pivot();
    if pivot <= 1e-14 * lu.max_pivot() {
        return Err(Error::Singular { index, magnitude: pivot });
    }
    lu.solve(rhs)
}

/// Field `E(x)` of a surface current, evaluated away from the surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialValue {
    pub field: [Complex64; 3],
    /// Set when `x` is closer to the surface than one cell diameter.
    pub near_surface: bool,
}

/// `E(x) = ∫ u j dΓ + κ^-2 grad_x ∫ u div_Γ j dΓ` for the current with
/// coefficients `coefficients`. Cells close to `x` are subdivided.
pub fn eval_potential(space: &DivConformingSpace, coefficients: &[Complex64], kappa: Complex64, x: Vec3) -> Result<PotentialValue> {
    check_kappa(kappa)?;
    if coefficients.len() != space.dim() {
        return Err(Error::Usage(format!(
            "{} coefficients given for a space of dimension {}",
            coefficients.len(),
            space.dim()
        )));
    }
    let d = space.degree() + 4;
    let rule = gauss_rule(d)?;
    let h = 1.0 / space.reference().cells_per_direction() as f64;
    let inv_k2 = kappa.powi(-2);
    let mut field = [Complex64::new(0.0, 0.0); 3];
    let mut min_r = f64::INFINITY;
    let mut cell_diam: f64 = 0.0;
    let mut cv = CellValues::zeroed();
    let geo = space.geometry();
    let refsp = space.reference();
    for cell in space.cells() {
        let dofs = space.cell_dofs(cell);
        let coef: Vec<Complex64> = dofs.iter().map(|(g, s)| coefficients[*g] * *s).collect();
        // (origin, size) of sub-squares in cell-local coordinates
        let mut stack = vec![([0.0, 0.0], 1.0, 0u32)];
        while let Some((o, s, depth)) = stack.pop() {
            let corner = |t: [f64; 2]| -> Result<Vec3> {
                Ok(geo
                    .frame(cell.patch, (cell.c1 as f64 + o[0] + s * t[0]) * h, (cell.c2 as f64 + o[1] + s * t[1]) * h)?
                    .point)
            };
            let c = corner([0.5, 0.5])?;
            let mut diam: f64 = 0.0;
            let cs = [corner([0.0, 0.0])?, corner([1.0, 0.0])?, corner([0.0, 1.0])?, corner([1.0, 1.0])?];
            for i in 0..4 {
                for j in 0..i {
                    diam = diam.max((cs[i] - cs[j]).norm());
                }
            }
            let dist = (x - c).norm();
            if depth == 0 {
                cell_diam = cell_diam.max(diam);
            }
            if dist < 2.0 * diam && depth < 12 {
                for (a, b) in [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)] {
                    stack.push(([o[0] + a * s, o[1] + b * s], 0.5 * s, depth + 1));
                }
                continue;
            }
            for (t, w) in rule.nodes.iter().zip(&rule.weights) {
                let tl = [o[0] + s * t[0], o[1] + s * t[1]];
                let px = (cell.c1 as f64 + tl[0]) * h;
                let py = (cell.c2 as f64 + tl[1]) * h;
                let fr = geo.frame(cell.patch, px, py)?;
                refsp.eval_cell(cell.c1, cell.c2, tl, &mut cv);
                let mut v = [Complex64::new(0.0, 0.0); 2];
                let mut dv = Complex64::new(0.0, 0.0);
                for (a, cf) in coef.iter().enumerate() {
                    v[0] += cf * cv.values[a][0];
                    v[1] += cf * cv.values[a][1];
                    dv += cf * cv.divs[a];
                }
                let wt = w * s * s * h * h;
                let diff = x - fr.point;
                let r = diff.norm();
                min_r = min_r.min(r);
                let u = kernel_r(kappa, r);
                // grad_x u = -(1 + iκr) u (x - y) / r^2
                let gfac = -(Complex64::new(1.0, 0.0) + Complex64::new(0.0, r) * kappa) * u / (r * r);
                let [d1, d2] = fr.jacobian;
                for i in 0..3 {
                    let j = v[0] * d1[i] + v[1] * d2[i];
                    field[i] += (u * j + inv_k2 * gfac * diff[i] * dv) * wt;
                }
            }
        }
    }
    Ok(PotentialValue {
        field,
        near_surface: min_r < cell_diam,
    })
}

const DUMP_MAGIC: &[u8; 5] = b"EFIE1";

/// Writes `EFIE1`, the dimension (u64), κ and the row-major entries, all
/// little-endian.
pub fn write_matrix_dump(path: impl AsRef<Path>, matrix: &EfieMatrix) -> Result<()> {
    let n = matrix.dim();
    let mut buf = Vec::with_capacity(5 + 8 + 16 * (n * n + 1));
    buf.extend_from_slice(DUMP_MAGIC);
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&matrix.kappa.re.to_le_bytes());
    buf.extend_from_slice(&matrix.kappa.im.to_le_bytes());
    for i in 0..n {
        for j in 0..n {
            let z = matrix.entries[(i, j)];
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_matrix_dump(path: impl AsRef<Path>) -> Result<(Complex64, CMatrix)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let bad = |m: &str| Error::Parse {
        line: 0,
        message: format!("matrix dump: {m}"),
    };
    if buf.len() < 29 || &buf[..5] != DUMP_MAGIC {
        return Err(bad("missing EFIE1 header"));
    }
    let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().expect("8 bytes"));
    let n = u64::from_le_bytes(buf[5..13].try_into().expect("8 bytes")) as usize;
    if buf.len() != 29 + 16 * n * n {
        return Err(bad("length does not match dimension"));
    }
    let kappa = Complex64::new(f64_at(13), f64_at(21));
    let m = CMatrix::from_fn(n, n, |i, j| {
        let o = 29 + 16 * (i * n + j);
        Complex64::new(f64_at(o), f64_at(o + 8))
    });
    Ok((kappa, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{cube, sphere};
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn kernel_values() {
        let o = Vec3::zeros();
        let e = Vec3::new(0.0, 1.0, 0.0);
        assert_abs_diff_eq!(kernel(c(1e-300, 0.0), &o, &e).unwrap().re, 1.0 / FOUR_PI, epsilon = 1e-16);
        let k = kernel(c(1.0, 0.0), &o, &e).unwrap();
        assert_abs_diff_eq!(k.re, 0.042996, epsilon = 1e-6);
        assert_abs_diff_eq!(k.im, -0.066962, epsilon = 1e-6);
        assert_abs_diff_eq!(k.re, 1f64.cos() / FOUR_PI, epsilon = 1e-16);
        assert!(kernel(c(1.0, 0.0), &o, &o).is_err());
        let x = Vec3::new(0.3, -1.2, 0.7);
        let y = Vec3::new(-0.5, 0.1, 2.0);
        let kk = c(2.3, -0.4);
        assert_eq!(kernel(kk, &x, &y).unwrap(), kernel(kk, &y, &x).unwrap());
        let r = (x - y).norm();
        assert_abs_diff_eq!(kernel(c(2.3, 0.0), &x, &y).unwrap().norm(), 1.0 / (FOUR_PI * r), epsilon = 1e-16);
    }

    #[test]
    fn zero_wavenumber_rejected() {
        let s = DivConformingSpace::new(cube(), 1, 0).unwrap();
        assert!(matches!(
            assemble(&s, c(0.0, 0.0), &QuadratureSettings::default()),
            Err(Error::InvalidWavenumber(_))
        ));
        let bad = QuadratureSettings {
            far_degree: Some(31),
            ..Default::default()
        };
        assert!(matches!(assemble(&s, c(1.0, 0.0), &bad), Err(Error::Usage(_))));
    }

    #[test]
    fn unmirrored_matrix_is_complex_symmetric() {
        let s = DivConformingSpace::new(cube(), 1, 0).unwrap();
        let set = QuadratureSettings {
            mirror: false,
            ..Default::default()
        };
        let m = assemble(&s, c(2.0, 0.0), &set).unwrap().entries;
        let asym = max_abs(&(&m - m.transpose()));
        assert!(asym <= 1e-10 * max_abs(&m), "asymmetry {asym:e}");
        let s = DivConformingSpace::new(sphere(), 1, 1).unwrap();
        let m = assemble(&s, c(2.0, 0.3), &set).unwrap().entries;
        let asym = max_abs(&(&m - m.transpose()));
        assert!(asym <= 1e-10 * max_abs(&m), "asymmetry {asym:e}");
    }

    #[test]
    fn reflected_conjugate_wavenumber_gives_conjugate_matrix() {
        let s = DivConformingSpace::new(cube(), 1, 0).unwrap();
        let a = Assembler::new(&s, &QuadratureSettings::default()).unwrap();
        let k = c(2.0, 0.4);
        // conj(u_k) = u_{-conj(k)}
        let m = a.assemble_many(&[k, -k.conj()]).unwrap();
        let d = max_abs(&(&m[1] - m[0].map(|z| z.conj())));
        assert!(d <= 1e-12 * max_abs(&m[0]), "{d:e} {:e}", max_abs(&m[0]));
    }

    #[test]
    fn batch_matches_single_assembly() {
        let s = DivConformingSpace::new(cube(), 2, 0).unwrap();
        let a = Assembler::new(&s, &QuadratureSettings::default()).unwrap();
        let ks = [c(2.0, 0.0), c(4.4, 0.05), c(5.0, -0.05)];
        let many = a.assemble_many(&ks).unwrap();
        for (k, m) in ks.iter().zip(&many) {
            let one = a.assemble(*k).unwrap().entries;
            assert!(max_abs(&(&one - m)) <= 1e-14 * max_abs(m));
        }
    }

    #[test]
    fn holomorphic_in_kappa() {
        let s = DivConformingSpace::new(cube(), 1, 0).unwrap();
        let a = Assembler::new(&s, &QuadratureSettings::default()).unwrap();
        let k = c(3.0, 0.2);
        let d = 1e-5;
        let m = a
            .assemble_many(&[k + d, k - d, k + c(0.0, d), k - c(0.0, d)])
            .unwrap();
        let dr = (&m[0] - &m[1]) / c(2.0 * d, 0.0);
        let di = (&m[2] - &m[3]) / c(0.0, 2.0 * d);
        assert!(max_abs(&(&dr - &di)) <= 1e-4 * max_abs(&dr));
    }

    #[test]
    fn matches_high_order_oracle() {
        let s = DivConformingSpace::new(cube(), 1, 0).unwrap();
        let k = c(2.0, 0.0);
        let m = assemble(&s, k, &QuadratureSettings::default()).unwrap().entries;
        let oracle = QuadratureSettings {
            far_degree: Some(20),
            singular_degree: Some(12),
            near_increase: 0,
            ..Default::default()
        };
        let o = assemble(&s, k, &oracle).unwrap().entries;
        let rel = max_abs(&(&m - &o)) / max_abs(&o);
        assert!(rel <= 1e-6, "relative difference {rel:e}");
    }

    #[test]
    fn dump_round_trip() {
        let s = DivConformingSpace::new(cube(), 1, 0).unwrap();
        let m = assemble(&s, c(2.0, 0.5), &QuadratureSettings::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.efie");
        write_matrix_dump(&p, &m).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..5], b"EFIE1");
        assert_eq!(bytes.len(), 5 + 8 + 16 + 16 * 144);
        let (k, e) = read_matrix_dump(&p).unwrap();
        assert_eq!(k, m.kappa);
        assert_eq!(e, m.entries);
    }

    #[test]
    fn apply_inverse_residual() {
        let s = DivConformingSpace::new(cube(), 1, 0).unwrap();
        let m = assemble(&s, c(2.0, 0.0), &QuadratureSettings::default()).unwrap();
        let zero = CMatrix::zeros(12, 2);
        assert_eq!(apply_inverse(&m, &zero).unwrap(), zero);
        let rhs = CMatrix::from_fn(12, 3, |i, j| c((i as f64 + 1.0).sin(), (j as f64 * 0.7 + i as f64).cos()));
        let x = apply_inverse(&m, &rhs).unwrap();
        assert!(max_abs(&(&m.entries * x - &rhs)) <= 1e-10 * max_abs(&rhs));
    }

    #[test]
    fn potential_of_zero_current_and_linearity() {
        let s = DivConformingSpace::new(cube(), 1, 2).unwrap();
        let x = Vec3::new(0.5, 0.4, 0.45);
        let k = c(4.0, 0.0);
        let z = vec![c(0.0, 0.0); s.dim()];
        assert!(eval_potential(&s, &z, k, x).unwrap().field.iter().all(|v| v.norm() == 0.0));
        let j: Vec<Complex64> = (0..s.dim()).map(|i| c((i as f64 * 0.1).sin(), 0.2)).collect();
        let j2: Vec<Complex64> = j.iter().map(|v| v * 2.0).collect();
        let e1 = eval_potential(&s, &j, k, x).unwrap();
        let e2 = eval_potential(&s, &j2, k, x).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!((e2.field[i] - e1.field[i] * 2.0).norm(), 0.0, epsilon = 1e-13);
        }
        assert!(!e1.near_surface);
        assert!(eval_potential(&s, &j, k, Vec3::new(0.5, 0.5, 0.02)).unwrap().near_surface);
    }
}
