//! Batch driver behind the `cavityeig` binary.
//!
//! Numeric settings come from flags, then from an optional `key = value`
//! file given with `--config` (keys are the long flag names), then from
//! defaults.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use crate::analytic::reference_eigenvalues;
use crate::beyn::{self, BeynConfig, BeynResult, EllipticContour};
use crate::efie::{write_matrix_dump, Assembler, QuadratureSettings};
use crate::error::{Error, Result};
use crate::geometry::{builtin_geometry, load_geometry, MultipatchGeometry};
use crate::space::DivConformingSpace;

#[derive(Debug, Parser)]
#[command(name = "cavityeig", version, about = "Resonant wavenumbers of perfectly conducting cavities")]
pub struct Cli {
    /// Worker threads (also CAVITYEIG_THREADS; default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalues inside an elliptic contour
    Solve(SolveArgs),
    /// Estimate the number of eigenvalues inside a contour
    Count(SolveArgs),
    /// Errors and empirical orders over refinement levels
    Convergence(ConvergenceArgs),
    /// Check interfaces, orientation and sampling of a geometry
    ValidateGeometry(GeometryArgs),
    /// Write the EFIE matrix at one wavenumber in binary form
    DumpMatrix(DumpArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GeometryArgs {
    /// Built-in name (cube, sphere) or path to a multipatch file
    #[arg(long)]
    pub geometry: Option<String>,
    /// key = value file with defaults for any long flag
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DiscretisationArgs {
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long = "far-degree")]
    pub far_degree: Option<usize>,
    #[arg(long = "sing-degree")]
    pub sing_degree: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ContourArgs {
    #[arg(long)]
    pub center: Option<f64>,
    /// Imaginary part of the contour centre
    #[arg(long = "center-im")]
    pub center_im: Option<f64>,
    /// Real semi-axis
    #[arg(long)]
    pub ax: Option<f64>,
    /// Imaginary semi-axis
    #[arg(long)]
    pub ay: Option<f64>,
    /// Trapezoid nodes
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Initial probe count
    #[arg(long)]
    pub ell: Option<usize>,
    #[arg(long = "max-ell")]
    pub max_ell: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub restol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub disc: DiscretisationArgs,
    #[arg(long)]
    pub m: Option<u32>,
    #[command(flatten)]
    pub contour: ContourArgs,
    /// Eigenvalue CSV (default: stdout)
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Singular value CSV
    #[arg(long = "sigma-output")]
    pub sigma_output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub disc: DiscretisationArgs,
    /// Refinement levels, e.g. 0,1,2
    #[arg(long, value_delimiter = ',')]
    pub m: Vec<u32>,
    #[command(flatten)]
    pub contour: ContourArgs,
    /// Reference eigenvalues for geometries without a built-in one
    #[arg(long, value_delimiter = ',')]
    pub reference: Vec<f64>,
    /// Report CSV (default: stdout)
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DumpArgs {
    #[command(flatten)]
    pub disc: DiscretisationArgs,
    #[arg(long)]
    pub m: Option<u32>,
    #[arg(long = "kappa-re")]
    pub kappa_re: Option<f64>,
    #[arg(long = "kappa-im")]
    pub kappa_im: Option<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Parsed `key = value` file.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: HashMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key = value, got {raw:?}"),
            })?;
            let v = v.trim().trim_matches('"');
            values.insert(k.trim().trim_start_matches("--").to_string(), v.to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Usage(format!("config key {key}: cannot parse {v:?}"))),
        }
    }

    /// Flag value if given, otherwise the file value.
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    fn list<T: FromStr + Clone>(&self, flag: &[T], key: &str) -> Result<Vec<T>> {
        if !flag.is_empty() {
            return Ok(flag.to_vec());
        }
        match self.values.get(key) {
            None => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Usage(format!("config key {key}: cannot parse {s:?}")))
                })
                .collect(),
        }
    }
}

fn required<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::Usage(format!("missing --{name}")))
}

pub fn open_geometry(name: &str) -> Result<MultipatchGeometry> {
    match name {
        "cube" | "sphere" => builtin_geometry(name),
        path => load_geometry(path).map_err(|e| match e {
            Error::Io(io) => Error::Usage(format!("cannot read geometry {path}: {io}")),
            e => e,
        }),
    }
}

struct Discretisation {
    geometry_name: String,
    geometry: MultipatchGeometry,
    p: usize,
    quadrature: QuadratureSettings,
}

fn discretisation(args: &DiscretisationArgs, cfg: &ConfigFile) -> Result<Discretisation> {
    let geometry_name = required(cfg.pick(args.geometry.geometry.clone(), "geometry")?, "geometry")?;
    let geometry = open_geometry(&geometry_name)?;
    let p = required(cfg.pick(args.p, "p")?, "p")?;
    let quadrature = QuadratureSettings {
        far_degree: cfg.pick(args.far_degree, "far-degree")?,
        singular_degree: cfg.pick(args.sing_degree, "sing-degree")?,
        ..Default::default()
    };
    Ok(Discretisation {
        geometry_name,
        geometry,
        p,
        quadrature,
    })
}

fn contour_and_config(args: &ContourArgs, cfg: &ConfigFile) -> Result<(EllipticContour, BeynConfig)> {
    let center = Complex64::new(
        required(cfg.pick(args.center, "center")?, "center")?,
        cfg.pick(args.center_im, "center-im")?.unwrap_or(0.0),
    );
    let contour = EllipticContour::new(
        center,
        required(cfg.pick(args.ax, "ax")?, "ax")?,
        required(cfg.pick(args.ay, "ay")?, "ay")?,
        cfg.pick(args.n, "N")?.unwrap_or(25),
    )?;
    let d = BeynConfig::default();
    let config = BeynConfig {
        ell: cfg.pick(args.ell, "ell")?.unwrap_or(d.ell),
        max_ell: cfg.pick(args.max_ell, "max-ell")?.unwrap_or(d.max_ell),
        delta: cfg.pick(args.delta, "delta")?.unwrap_or(d.delta),
        residual_tol: cfg.pick(args.restol, "restol")?.unwrap_or(d.residual_tol),
        seed: cfg.pick(args.seed, "seed")?.unwrap_or(d.seed),
        batch: d.batch,
    };
    Ok((contour, config))
}

/// Probe count clipped to the space dimension.
fn fit_probes(mut config: BeynConfig, dim: usize) -> BeynConfig {
    config.ell = config.ell.min(dim);
    config.max_ell = config.max_ell.max(config.ell);
    config
}

/// `printf("%.17g")`.
pub fn format_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    const P: i32 = 17;
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    fn trim(s: &str) -> &str {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.')
        } else {
            s
        }
    }
    if !(-4..P).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim(mant), sign, exp.abs())
    } else {
        let decimals = (P - 1 - exp).max(0) as usize;
        trim(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn write_output(path: Option<&Path>, text: &str, out: &mut dyn std::io::Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Usage(format!("cannot write {}: {e}", p.display()))),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

pub fn eigenvalue_csv(r: &BeynResult) -> String {
    let mut s = String::from("re,im,residual\n");
    for (l, res) in r.eigenvalues.iter().zip(&r.residuals) {
        let _ = writeln!(s, "{},{},{}", format_g17(l.re), format_g17(l.im), format_g17(*res));
    }
    s
}

pub fn sigma_csv(r: &BeynResult) -> String {
    let mut s = String::from("index,sigma\n");
    for (i, v) in r.singular_values.iter().enumerate() {
        let _ = writeln!(s, "{},{}", i + 1, format_g17(*v));
    }
    s
}

/// Mean over computed eigenvalues of the distance to the nearest reference.
pub fn mean_error(computed: &[Complex64], reference: &[f64]) -> f64 {
    if computed.is_empty() || reference.is_empty() {
        return f64::NAN;
    }
    let total: f64 = computed
        .iter()
        .map(|l| reference.iter().map(|r| (l - r).norm()).fold(f64::INFINITY, f64::min))
        .sum();
    total / computed.len() as f64
}

/// `log2(e_prev / e)`, only when both errors are above the rounding floor.
pub fn empirical_order(prev: f64, cur: f64) -> Option<f64> {
    (prev > 1e-13 && cur > 1e-13).then(|| (prev / cur).log2())
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub p: usize,
    pub m: u32,
    pub dofs: usize,
    pub eigenvalues: Vec<Complex64>,
    pub error: f64,
    pub order: Option<f64>,
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut s = String::from("p,m,dofs,count,error,order,eigenvalues_re,eigenvalues_im\n");
    for r in rows {
        let join = |f: fn(&Complex64) -> f64| r.eigenvalues.iter().map(|l| format_g17(f(l))).collect::<Vec<_>>().join(";");
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.p,
            r.m,
            r.dofs,
            r.eigenvalues.len(),
            format_g17(r.error),
            r.order.map(format_g17).unwrap_or_default(),
            join(|l| l.re),
            join(|l| l.im)
        );
    }
    s
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let env = match std::env::var("CAVITYEIG_THREADS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Usage(format!("CAVITYEIG_THREADS: cannot parse {v:?}")))?,
        ),
        Err(_) => None,
    };
    let threads = flag.or(env);
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

pub fn solve(args: &SolveArgs, out: &mut dyn std::io::Write, log: &mut dyn std::io::Write) -> Result<BeynResult> {
    let cfg = ConfigFile::load(args.disc.geometry.config.as_deref())?;
    let d = discretisation(&args.disc, &cfg)?;
    let m = required(cfg.pick(args.m, "m")?, "m")?;
    let (contour, config) = contour_and_config(&args.contour, &cfg)?;
    let space = DivConformingSpace::new(d.geometry, d.p, m)?;
    let config = fit_probes(config, space.dim());
    let assembler = Assembler::new(&space, &d.quadrature)?;
    let r = beyn::solve(&assembler, &contour, &config)?;
    writeln!(
        log,
        "{} p={} m={} dofs={}: {} eigenvalue(s), rank {}, {} probes",
        d.geometry_name,
        d.p,
        m,
        space.dim(),
        r.eigenvalues.len(),
        r.rank,
        r.probes
    )?;
    write_output(cfg.pick(args.output.clone(), "output")?.as_deref(), &eigenvalue_csv(&r), out)?;
    if let Some(p) = cfg.pick(args.sigma_output.clone(), "sigma-output")? {
        write_output(Some(&p), &sigma_csv(&r), out)?;
    }
    Ok(r)
}

pub fn count(args: &SolveArgs, out: &mut dyn std::io::Write) -> Result<usize> {
    let cfg = ConfigFile::load(args.disc.geometry.config.as_deref())?;
    let d = discretisation(&args.disc, &cfg)?;
    let m = required(cfg.pick(args.m, "m")?, "m")?;
    let (contour, config) = contour_and_config(&args.contour, &cfg)?;
    let space = DivConformingSpace::new(d.geometry, d.p, m)?;
    let config = fit_probes(config, space.dim());
    let assembler = Assembler::new(&space, &d.quadrature)?;
    let k = beyn::estimate_count(&assembler, &contour, &config)?;
    writeln!(out, "{k}")?;
    Ok(k)
}

pub fn convergence(args: &ConvergenceArgs, out: &mut dyn std::io::Write, log: &mut dyn std::io::Write) -> Result<Vec<ConvergenceRow>> {
    let cfg = ConfigFile::load(args.disc.geometry.config.as_deref())?;
    let d = discretisation(&args.disc, &cfg)?;
    let levels = cfg.list(&args.m, "m")?;
    if levels.is_empty() {
        return Err(Error::Usage("missing --m levels".into()));
    }
    let mut reference = cfg.list(&args.reference, "reference")?;
    if reference.is_empty() {
        reference = reference_eigenvalues(&d.geometry_name).ok_or_else(|| {
            Error::Usage(format!("no reference eigenvalues known for {}; pass --reference", d.geometry_name))
        })?;
    }
    let (contour, config) = contour_and_config(&args.contour, &cfg)?;
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for m in levels {
        let space = DivConformingSpace::new(d.geometry.clone(), d.p, m)?;
        let assembler = Assembler::new(&space, &d.quadrature)?;
        let r = beyn::solve(&assembler, &contour, &fit_probes(config.clone(), space.dim()))?;
        let error = mean_error(&r.eigenvalues, &reference);
        let order = rows.last().and_then(|prev| empirical_order(prev.error, error));
        writeln!(log, "p={} m={} dofs={} count={} error={:e}", d.p, m, space.dim(), r.eigenvalues.len(), error)?;
        rows.push(ConvergenceRow {
            p: d.p,
            m,
            dofs: space.dim(),
            eigenvalues: r.eigenvalues,
            error,
            order,
        });
    }
    write_output(cfg.pick(args.output.clone(), "output")?.as_deref(), &convergence_csv(&rows), out)?;
    Ok(rows)
}

pub fn validate_geometry(args: &GeometryArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let cfg = ConfigFile::load(args.config.as_deref())?;
    let name = required(cfg.pick(args.geometry.clone(), "geometry")?, "geometry")?;
    let g = open_geometry(&name)?;
    let report = g.validate()?;
    writeln!(out, "geometry {name}: {} patches, {} interfaces", report.patches.len(), report.interfaces.len())?;
    for (k, p) in report.patches.iter().enumerate() {
        writeln!(
            out,
            "  patch {k}: degrees {:?}, {} control points, area {:.12}, measure [{:.6e}, {:.6e}]",
            p.degrees, p.control_points, p.area, p.min_measure, p.max_measure
        )?;
    }
    for i in &report.interfaces {
        writeln!(
            out,
            "  interface patch {} {:?} - patch {} {:?}{}: deviation {:.3e}",
            i.a.patch,
            i.a.edge,
            i.b.patch,
            i.b.edge,
            if i.reversed { " (reversed)" } else { "" },
            i.deviation
        )?;
    }
    writeln!(out, "area {:.15}", report.area)?;
    writeln!(out, "enclosed volume {:.15}", report.enclosed_volume)?;
    writeln!(out, "max radial deviation {:.3e}", report.max_radial_deviation)?;
    writeln!(out, "max interface deviation {:.3e}", report.max_interface_deviation())?;
    writeln!(out, "PASS")?;
    Ok(())
}

pub fn dump_matrix(args: &DumpArgs) -> Result<()> {
    let cfg = ConfigFile::load(args.disc.geometry.config.as_deref())?;
    let d = discretisation(&args.disc, &cfg)?;
    let m = required(cfg.pick(args.m, "m")?, "m")?;
    let kappa = Complex64::new(
        required(cfg.pick(args.kappa_re, "kappa-re")?, "kappa-re")?,
        cfg.pick(args.kappa_im, "kappa-im")?.unwrap_or(0.0),
    );
    let output = required(cfg.pick(args.output.clone(), "output")?, "output")?;
    let space = DivConformingSpace::new(d.geometry, d.p, m)?;
    let matrix = Assembler::new(&space, &d.quadrature)?.assemble(kappa)?;
    write_matrix_dump(&output, &matrix).map_err(|e| match e {
        Error::Io(io) => Error::Usage(format!("cannot write {}: {io}", output.display())),
        e => e,
    })
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32 {
    let result = configure_threads(cli.threads).and_then(|_| match &cli.command {
        Command::Solve(a) => solve(a, out, err).map(|_| ()),
        Command::Count(a) => count(a, out).map(|_| ()),
        Command::Convergence(a) => convergence(a, out, err).map(|_| ()),
        Command::ValidateGeometry(a) => validate_geometry(a, out).inspect_err(|_e| {
            let _ = writeln!(out, "FAIL");
        }),
        Command::DumpMatrix(a) => dump_matrix(a),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_matches_printf() {
        assert_eq!(format_g17(0.0), "0");
        assert_eq!(format_g17(1.0), "1");
        assert_eq!(format_g17(-2.5), "-2.5");
        assert_eq!(format_g17(0.1), "0.10000000000000001");
        assert_eq!(format_g17(std::f64::consts::PI), "3.1415926535897931");
        assert_eq!(format_g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(format_g17(1e20), "1e+20");
        assert_eq!(format_g17(123456789.0), "123456789");
        assert_eq!(format_g17(1e-4), "0.0001");
        assert_eq!(format_g17(f64::NAN), "nan");
        for x in [0.1, 2.743707269992269, -7.25e-300, 1.0 / 3.0, 6.02e23] {
            assert_eq!(format_g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn config_file_parsing() {
        let c = ConfigFile::parse("# run\ngeometry = cube\np=2\n--center = 5.0 # inline\nm = 0,1\n").unwrap();
        assert_eq!(c.get::<String>("geometry").unwrap().unwrap(), "cube");
        assert_eq!(c.pick(Some(3usize), "p").unwrap(), Some(3));
        assert_eq!(c.pick(None::<usize>, "p").unwrap(), Some(2));
        assert_eq!(c.get::<f64>("center").unwrap(), Some(5.0));
        assert_eq!(c.list::<u32>(&[], "m").unwrap(), vec![0, 1]);
        assert!(c.get::<usize>("geometry").is_err());
        assert!(matches!(ConfigFile::parse("a = 1\nnonsense\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn error_formulas() {
        let c = |x: f64| Complex64::new(x, 0.0);
        let e = mean_error(&[c(1.1), c(1.9), c(2.0)], &[1.0, 2.0]);
        assert!((e - 0.2 / 3.0).abs() < 1e-15);
        assert!(mean_error(&[], &[1.0]).is_nan());
        assert_eq!(empirical_order(8e-3, 1e-3), Some(3.0));
        assert_eq!(empirical_order(1e-14, 1e-15), None);
    }

    #[test]
    fn missing_flags_are_usage_errors() {
        let cli = Cli::try_parse_from(["cavityeig", "solve", "--geometry", "cube", "--m", "0"]).unwrap();
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run(cli, &mut o, &mut e), 2);
        assert!(String::from_utf8(e).unwrap().contains("--p"));
        let cli = Cli::try_parse_from(["cavityeig", "validate-geometry", "--geometry", "torus"]).unwrap();
        assert_eq!(run(cli, &mut Vec::new(), &mut Vec::new()), 2);
    }
}
