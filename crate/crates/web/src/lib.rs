//! wasm-bindgen entry points for the static demo page in `www/`.
//!
//! Each export is a thin wrapper over a plain function returning
//! `Result<_, String>`, so the logic is testable on the host.

use cavityeig::beyn::{self, BeynConfig, EllipticContour};
use cavityeig::efie::{Assembler, QuadratureSettings};
use cavityeig::geometry::builtin_geometry;
use cavityeig::space::DivConformingSpace;
use cavityeig::splines::SplineBasis;
use num_complex::Complex64;
use wasm_bindgen::prelude::*;

/// Row-major `dim x samples` table of B-spline values on a uniform grid.
pub fn spline_table(degree: usize, level: u32, samples: usize) -> Result<Vec<f64>, String> {
    if samples < 2 {
        return Err("need at least two samples".into());
    }
    if level > 6 || degree > 8 {
        return Err("degree at most 8 and level at most 6".into());
    }
    let basis = SplineBasis::uniform(degree, level);
    let n = basis.dim();
    let mut out = vec![0.0; n * samples];
    for s in 0..samples {
        let x = s as f64 / (samples - 1) as f64;
        let v = basis.eval(x).map_err(|e| e.to_string())?;
        for (i, b) in v.iter().enumerate() {
            out[i * samples + s] = *b;
        }
    }
    Ok(out)
}

/// Parameter lines of every patch as polylines: for each patch, `2 * lines`
/// curves of `samples` points, flattened as x, y, z.
pub fn geometry_lines(name: &str, lines: usize, samples: usize) -> Result<Vec<f64>, String> {
    let g = builtin_geometry(name).map_err(|e| e.to_string())?;
    let lines = lines.max(2);
    let samples = samples.max(2);
    let mut out = Vec::with_capacity(g.patches().len() * 2 * lines * samples * 3);
    for patch in 0..g.patches().len() {
        for dir in 0..2 {
            for l in 0..lines {
                let a = l as f64 / (lines - 1) as f64;
                for s in 0..samples {
                    let b = s as f64 / (samples - 1) as f64;
                    let (x, y) = if dir == 0 { (a, b) } else { (b, a) };
                    let p = g.frame(patch, x, y).map_err(|e| e.to_string())?.point;
                    out.extend_from_slice(&[p[0], p[1], p[2]]);
                }
            }
        }
    }
    Ok(out)
}

#[wasm_bindgen]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    singular_values: Vec<f64>,
    dofs: usize,
}

#[wasm_bindgen]
impl Spectrum {
    /// Interleaved re, im pairs.
    #[wasm_bindgen(getter)]
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues.clone()
    }

    #[wasm_bindgen(getter, js_name = singularValues)]
    pub fn singular_values(&self) -> Vec<f64> {
        self.singular_values.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn dofs(&self) -> usize {
        self.dofs
    }
}

#[allow(clippy::too_many_arguments)]
pub fn spectrum(name: &str, p: usize, m: u32, center: f64, ax: f64, ay: f64, nodes: usize, ell: usize) -> Result<Spectrum, String> {
    let err = |e: cavityeig::Error| e.to_string();
    let space = DivConformingSpace::new(builtin_geometry(name).map_err(err)?, p, m).map_err(err)?;
    if space.dim() > 400 {
        return Err(format!("{} unknowns is too many for the browser", space.dim()));
    }
    let contour = EllipticContour::new(Complex64::new(center, 0.0), ax, ay, nodes).map_err(err)?;
    let ell = ell.min(space.dim()).max(1);
    let config = BeynConfig {
        ell,
        max_ell: space.dim(),
        ..Default::default()
    };
    let assembler = Assembler::new(&space, &QuadratureSettings::default()).map_err(err)?;
    let r = beyn::solve(&assembler, &contour, &config).map_err(err)?;
    Ok(Spectrum {
        eigenvalues: r.eigenvalues.iter().flat_map(|z| [z.re, z.im]).collect(),
        singular_values: r.singular_values.clone(),
        dofs: space.dim(),
    })
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen(js_name = splineTable)]
pub fn spline_table_js(degree: usize, level: u32, samples: usize) -> Result<Vec<f64>, JsError> {
    spline_table(degree, level, samples).map_err(js)
}

#[wasm_bindgen(js_name = geometryLines)]
pub fn geometry_lines_js(name: &str, lines: usize, samples: usize) -> Result<Vec<f64>, JsError> {
    geometry_lines(name, lines, samples).map_err(js)
}

#[wasm_bindgen(js_name = solveSpectrum)]
#[allow(clippy::too_many_arguments)]
pub fn spectrum_js(name: &str, p: usize, m: u32, center: f64, ax: f64, ay: f64, nodes: usize, ell: usize) -> Result<Spectrum, JsError> {
    spectrum(name, p, m, center, ax, ay, nodes, ell).map_err(js)
}
