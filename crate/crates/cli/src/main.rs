//! caffine: construct quasi-umbilical hypersurface families, verify their
//! structural identities, and export samples and reports.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use caffine::blaschke::{extract, DsSource};
use caffine::families::{
    calibrate_constants, catalog_seed, resolve_params, split_eigenvalues, Calibration,
    FamilyCase, FamilyParams, FamilySurface, SeedSurface,
};
use caffine::immersion::{Immersion, JetMode, Paraboloid, SphereChart};
use caffine::verify::{run_suite, CheckReport, GridSpec, SuiteInput, Tolerances};
use caffine::Error;

const EXIT_CHECKS_FAILED: u8 = 1;
const EXIT_INVALID_INPUT: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_EXTRACTION: u8 = 4;

/// Fatal CLI error: exit code plus message for standard error.
struct Fatal {
    code: u8,
    message: String,
}

impl Fatal {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Fatal { code, message: message.into() }
    }
}

fn fatal_from(err: Error) -> Fatal {
    let code = match err {
        Error::Domain(_)
        | Error::Stencil { .. }
        | Error::Degenerate { .. }
        | Error::FrameSolve { .. }
        | Error::SupportZero { .. }
        | Error::Chart(_)
        | Error::NotQuasiUmbilical(_)
        | Error::Rank(_) => EXIT_EXTRACTION,
        Error::OrderUnsupported(_)
        | Error::InvalidRatio(_)
        | Error::CaseMismatch(_)
        | Error::Calibration(_)
        | Error::Determinant(_)
        | Error::InvalidParams(_) => EXIT_INVALID_INPUT,
    };
    Fatal::new(code, err.to_string())
}

fn io_fatal(path: &PathBuf, err: std::io::Error) -> Fatal {
    Fatal::new(EXIT_IO, format!("cannot write {}: {err}", path.display()))
}

#[derive(Parser)]
#[command(name = "caffine", version, about = "Blaschke structure toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a constructed family surface to CSV or OBJ.
    Construct(ConstructArgs),
    /// Run the verification suite and write a JSON report.
    Verify(VerifyArgs),
    /// Print pointwise Blaschke invariants.
    Invariants(InvariantsArgs),
    /// List available seeds and classical surfaces.
    Catalog(CatalogArgs),
    /// Run the suite over a range of eigenvalue ratios, one CSV row each.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CaseFlag {
    A,
    B,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CalibrationFlag {
    Unit,
    PaperExact,
}

impl From<CalibrationFlag> for Calibration {
    fn from(c: CalibrationFlag) -> Self {
        match c {
            CalibrationFlag::Unit => Calibration::Unit,
            CalibrationFlag::PaperExact => Calibration::PaperExact,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatFlag {
    Csv,
    Obj,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeFlag {
    Analytic,
    Fd,
}

/// Family parameters: a JSON file, inline flags, or both (flags win).
/// Flags mirror the FamilyParams field names.
#[derive(Args, Clone)]
struct ParamArgs {
    /// JSON file with a full FamilyParams object.
    #[arg(long)]
    params: Option<PathBuf>,

    #[arg(long, value_enum)]
    case: Option<CaseFlag>,
    #[arg(long)]
    n: Option<usize>,
    /// Eigenvalue ratio r = l0/l1.
    #[arg(long = "ratio", visible_alias = "r", allow_hyphen_values = true)]
    r: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    l0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    l1: Option<f64>,
    #[arg(long = "K0", allow_hyphen_values = true)]
    k0: Option<f64>,
    #[arg(long = "K1", allow_hyphen_values = true)]
    k1: Option<f64>,
    #[arg(long = "N", allow_hyphen_values = true)]
    nn: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    zeta0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    rho0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    n1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    n2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    e0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    phi0: Option<f64>,
    #[arg(long = "B", allow_hyphen_values = true)]
    b: Option<f64>,

    /// Seed surface name from the catalog.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long, value_enum, default_value = "unit")]
    calibration: CalibrationFlag,
}

#[derive(Args, Clone)]
struct GridArgs {
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    t_count: Option<usize>,
    /// Points per seed coordinate.
    #[arg(long)]
    u_count: Option<usize>,
}

#[derive(Args)]
struct ConstructArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatFlag,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Verify a classical catalog surface instead of a constructed family.
    #[arg(long, conflicts_with = "params")]
    surface: Option<String>,
    /// Parameter dimension for --surface.
    #[arg(long, default_value = "2")]
    dim: usize,
    /// Report path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "analytic")]
    mode: ModeFlag,
    #[arg(long)]
    tol_analytic: Option<f64>,
    #[arg(long)]
    tol_fallback: Option<f64>,
    #[arg(long)]
    tol_fit: Option<f64>,
}

#[derive(Args)]
struct InvariantsArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Classical catalog surface instead of a constructed family.
    #[arg(long, conflicts_with = "params")]
    surface: Option<String>,
    #[arg(long, default_value = "2")]
    dim: usize,
    /// Evaluation point, comma-separated coordinates.
    #[arg(long, allow_hyphen_values = true)]
    point: String,
    /// Machine-readable output.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CatalogArgs {
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, allow_hyphen_values = true)]
    r_min: f64,
    #[arg(long, allow_hyphen_values = true)]
    r_max: f64,
    #[arg(long, default_value = "1.0")]
    r_step: f64,
    /// Restrict to one case; ranges touching the other case's locus fail.
    #[arg(long, value_enum)]
    case: Option<CaseFlag>,
    #[command(flatten)]
    grid: GridArgs,
    /// CSV path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Parameter assembly
// ---------------------------------------------------------------------------

fn assemble_params(args: &ParamArgs) -> Result<FamilyParams<f64>, Fatal> {
    let mut p: FamilyParams<f64> = if let Some(path) = &args.params {
        let text = fs::read_to_string(path)
            .map_err(|e| Fatal::new(EXIT_IO, format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Fatal::new(EXIT_INVALID_INPUT, format!("bad params file: {e}")))?
    } else {
        let n = args
            .n
            .ok_or_else(|| Fatal::new(EXIT_INVALID_INPUT, "--n is required (or --params)"))?;
        let r = args
            .r
            .ok_or_else(|| Fatal::new(EXIT_INVALID_INPUT, "--ratio is required (or --params)"))?;
        resolve_params(n, r, args.calibration.into()).map_err(fatal_from)?
    };
    if let Some(n) = args.n {
        p.n = n;
    }
    if let Some(v) = args.r {
        p.r = v;
    }
    if let Some(v) = args.l0 {
        p.l0 = v;
    }
    if let Some(v) = args.l1 {
        p.l1 = v;
    }
    if let Some(v) = args.k0 {
        p.k0 = v;
    }
    if let Some(v) = args.k1 {
        p.k1 = v;
    }
    if let Some(v) = args.nn {
        p.nn = v;
    }
    if let Some(v) = args.zeta0 {
        p.zeta0 = v;
    }
    if let Some(v) = args.rho0 {
        p.rho0 = v;
    }
    if let Some(v) = args.n1 {
        p.n1 = v;
    }
    if let Some(v) = args.n2 {
        p.n2 = v;
    }
    if let Some(v) = args.e0 {
        p.e0 = v;
    }
    if let Some(v) = args.phi0 {
        p.phi0 = v;
    }
    if let Some(v) = args.b {
        p.b = v;
    }
    if let Some(c) = args.case {
        let requested = match c {
            CaseFlag::A => FamilyCase::A,
            CaseFlag::B => FamilyCase::B,
        };
        if requested != p.case {
            return Err(Fatal::new(
                EXIT_INVALID_INPUT,
                format!(
                    "requested case {:?} but the resolved constants give case {:?} \
                     (case B needs (n+2) r + n = 0)",
                    c_name(requested),
                    c_name(p.case)
                ),
            ));
        }
    }
    Ok(p)
}

fn c_name(c: FamilyCase) -> &'static str {
    match c {
        FamilyCase::A => "a",
        FamilyCase::B => "b",
    }
}

fn pick_seed(p: &FamilyParams<f64>, name: Option<&str>) -> Result<SeedSurface<f64>, Fatal> {
    let default = match p.case {
        FamilyCase::A => {
            if p.n == 2 {
                "circle"
            } else {
                "sphere"
            }
        }
        FamilyCase::B => "ma_quadratic",
    };
    catalog_seed(name.unwrap_or(default), p.n - 1).map_err(fatal_from)
}

struct BuiltFamily {
    params: FamilyParams<f64>,
    surface: FamilySurface<f64>,
    calibration: Calibration,
    grid: GridSpec<f64>,
}

fn build_family(args: &ParamArgs, grid: &GridArgs) -> Result<BuiltFamily, Fatal> {
    let mut params = assemble_params(args)?;
    let seed = pick_seed(&params, args.seed.as_deref())?;
    let calibration: Calibration = args.calibration.into();
    if calibration == Calibration::PaperExact && params.case == FamilyCase::A {
        params = calibrate_constants(&params, &seed).map_err(fatal_from)?;
    }
    let mut spec = GridSpec::default_for_seed(&seed.chart_domain());
    apply_grid_args(&mut spec, grid);
    spec.validate().map_err(fatal_from)?;
    let surface = FamilySurface::new(params.clone(), seed).map_err(fatal_from)?;
    Ok(BuiltFamily { params, surface, calibration, grid: spec })
}

fn apply_grid_args(spec: &mut GridSpec<f64>, grid: &GridArgs) {
    if let Some((t0, t1, tc)) = spec.t_range.as_mut() {
        if let Some(v) = grid.t_min {
            *t0 = v;
        }
        if let Some(v) = grid.t_max {
            *t1 = v;
        }
        if let Some(v) = grid.t_count {
            *tc = v;
        }
    }
    if let Some(c) = grid.u_count {
        for r in spec.u_ranges.iter_mut() {
            r.2 = c;
        }
    }
}

/// Classical surface by catalog name with a default verification grid.
fn classical_surface(
    name: &str,
    dim: usize,
) -> Result<(Box<dyn Immersion<f64>>, GridSpec<f64>), Fatal> {
    match name {
        "paraboloid" => Ok((
            Box::new(Paraboloid { dim }),
            GridSpec::chart_only(vec![(0.3, 1.1, 8); dim]),
        )),
        "unit_sphere" | "sphere" => Ok((
            Box::new(SphereChart { dim }),
            GridSpec::chart_only(vec![(-0.4, 0.4, 8); dim]),
        )),
        other => Err(Fatal::new(
            EXIT_INVALID_INPUT,
            format!("unknown classical surface '{other}' (see `caffine catalog`)"),
        )),
    }
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

fn fnum(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_output(path: Option<&PathBuf>, content: &str) -> Result<(), Fatal> {
    match path {
        Some(p) => fs::write(p, content).map_err(|e| io_fatal(p, e)),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// construct
// ---------------------------------------------------------------------------

fn cmd_construct(args: ConstructArgs) -> Result<u8, Fatal> {
    let built = build_family(&args.params, &args.grid)?;
    match args.format {
        FormatFlag::Csv => {
            let csv = construct_csv(&built)?;
            fs::write(&args.out, csv).map_err(|e| io_fatal(&args.out, e))?;
        }
        FormatFlag::Obj => {
            if built.params.n != 2 {
                return Err(Fatal::new(
                    EXIT_INVALID_INPUT,
                    "OBJ export needs ambient dimension 3 (n = 2)",
                ));
            }
            let obj = construct_obj(&built)?;
            fs::write(&args.out, obj).map_err(|e| io_fatal(&args.out, e))?;
        }
        FormatFlag::Json => {
            return Err(Fatal::new(
                EXIT_INVALID_INPUT,
                "construct exports csv or obj; json is for verify reports",
            ))
        }
    }
    Ok(0)
}

fn construct_csv(built: &BuiltFamily) -> Result<String, Fatal> {
    let n = built.params.n;
    let mut out = String::new();
    out.push('t');
    for i in 1..n {
        out.push_str(&format!(",u_{i}"));
    }
    for i in 0..=n {
        out.push_str(&format!(",x_{i}"));
    }
    out.push('\n');
    for p in built.grid.points() {
        let x = built.surface.eval(&p).map_err(fatal_from)?;
        let row: Vec<String> = p.iter().chain(x.iter()).map(|&v| fnum(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

fn construct_obj(built: &BuiltFamily) -> Result<String, Fatal> {
    let points = built.grid.points();
    let tc = built.grid.t_count();
    let uc = built.grid.u_count();
    let mut out = String::new();
    out.push_str(&format!(
        "# caffine params: {}\n",
        serde_json::to_string(&built.params).expect("params serialize")
    ));
    let mut verts: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    for p in &points {
        let x = built.surface.eval(p).map_err(fatal_from)?;
        out.push_str(&format!("v {} {} {}\n", fnum(x[0]), fnum(x[1]), fnum(x[2])));
        verts.push(x);
    }
    // Quad (i,j)-(i+1,j)-(i+1,j+1)-(i,j+1) split into two triangles,
    // wound counter-clockwise as seen from the +xi side.
    for i in 0..tc - 1 {
        for j in 0..uc - 1 {
            let a = i * uc + j;
            let b = (i + 1) * uc + j;
            let c = (i + 1) * uc + j + 1;
            let d = i * uc + j + 1;
            let xi = extract(&built.surface, &points[a], JetMode::Analytic, 3)
                .map_err(fatal_from)?
                .xi;
            for tri in [[a, b, c], [a, c, d]] {
                let [p0, p1, p2] = [&verts[tri[0]], &verts[tri[1]], &verts[tri[2]]];
                let u = [p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]];
                let v = [p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]];
                let normal = [
                    u[1] * v[2] - u[2] * v[1],
                    u[2] * v[0] - u[0] * v[2],
                    u[0] * v[1] - u[1] * v[0],
                ];
                let along_xi =
                    normal[0] * xi[0] + normal[1] * xi[1] + normal[2] * xi[2] >= 0.0;
                let (f0, f1, f2) = if along_xi {
                    (tri[0], tri[1], tri[2])
                } else {
                    (tri[0], tri[2], tri[1])
                };
                out.push_str(&format!("f {} {} {}\n", f0 + 1, f1 + 1, f2 + 1));
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

fn cmd_verify(args: VerifyArgs) -> Result<u8, Fatal> {
    let mut tol = Tolerances::default();
    if let Some(v) = args.tol_analytic {
        tol.analytic = v;
    }
    if let Some(v) = args.tol_fallback {
        tol.fallback = v;
    }
    if let Some(v) = args.tol_fit {
        tol.fit_residual = v;
    }
    let mode = match args.mode {
        ModeFlag::Analytic => JetMode::Analytic,
        ModeFlag::Fd => JetMode::finite_difference_default(),
    };

    let report: CheckReport<f64> = if let Some(name) = &args.surface {
        let (surface, mut grid) = classical_surface(name, args.dim)?;
        apply_grid_args(&mut grid, &args.grid);
        grid.validate().map_err(fatal_from)?;
        let input = SuiteInput {
            immersion: surface.as_ref(),
            params: None,
            calibration: Calibration::Unit,
            mode,
            ds_source: DsSource::FieldDifference,
        };
        run_suite(&input, &grid, &tol).map_err(fatal_from)?
    } else {
        let built = build_family(&args.params, &args.grid)?;
        let input = SuiteInput {
            immersion: &built.surface,
            params: Some(&built.params),
            calibration: built.calibration,
            mode,
            ds_source: DsSource::FieldDifference,
        };
        run_suite(&input, &built.grid, &tol).map_err(fatal_from)?
    };

    let mut json = report.to_json();
    json.push('\n');
    write_output(args.out.as_ref(), &json)?;
    Ok(if report.overall_pass { 0 } else { EXIT_CHECKS_FAILED })
}

// ---------------------------------------------------------------------------
// invariants
// ---------------------------------------------------------------------------

fn cmd_invariants(args: InvariantsArgs) -> Result<u8, Fatal> {
    let point: Vec<f64> = args
        .point
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Fatal::new(EXIT_INVALID_INPUT, format!("bad coordinate '{s}'")))
        })
        .collect::<Result<_, _>>()?;

    let bp = if let Some(name) = &args.surface {
        let (surface, _) = classical_surface(name, args.dim)?;
        extract(surface.as_ref(), &point, JetMode::Analytic, 4).map_err(fatal_from)?
    } else {
        let built = build_family(&args.params, &GridArgs {
            t_min: None,
            t_max: None,
            t_count: None,
            u_count: None,
        })?;
        extract(&built.surface, &point, JetMode::Analytic, 4).map_err(fatal_from)?
    };

    let d = bp.dim();
    let spectrum: Vec<f64> = bp
        .spectrum
        .as_ref()
        .map(|s| s.eigvals.clone())
        .unwrap_or_default();
    let split = split_eigenvalues(&bp).ok();

    let vec_json = |v: &[f64]| {
        let parts: Vec<String> = v.iter().map(|&x| fnum(x)).collect();
        format!("[{}]", parts.join(","))
    };
    let mat_json = |m: &caffine::linalg::Mat<f64>| {
        let rows: Vec<String> = (0..m.nrows()).map(|i| vec_json(&m.row(i))).collect();
        format!("[{}]", rows.join(","))
    };

    if args.json {
        let mut out = String::from("{");
        out.push_str(&format!("\"point\":{},", vec_json(&bp.point)));
        out.push_str(&format!("\"h\":{},", mat_json(&bp.h)));
        out.push_str(&format!("\"xi\":{},", vec_json(&bp.xi)));
        out.push_str(&format!("\"s_spectrum\":{},", vec_json(&spectrum)));
        out.push_str(&format!("\"rho\":{},", fnum(bp.rho)));
        match &bp.z_star {
            Some(z) => out.push_str(&format!("\"z_star\":{},", vec_json(z))),
            None => out.push_str("\"z_star\":null,"),
        }
        match &split {
            Some(sp) => out.push_str(&format!(
                "\"a0\":{},\"K0\":{},\"K1\":{},",
                fnum(sp.a0),
                fnum(sp.k0()),
                fnum(sp.k1())
            )),
            None => out.push_str("\"a0\":null,\"K0\":null,\"K1\":null,"),
        }
        out.push_str(&format!("\"centre\":{}", vec_json(&bp.centre)));
        out.push_str("}\n");
        print!("{out}");
    } else {
        println!("point: {:?}", bp.point);
        println!("h ({d}x{d}):");
        for i in 0..d {
            println!("  {:?}", bp.h.row(i));
        }
        println!("xi: {:?}", bp.xi);
        println!("S spectrum: {spectrum:?}");
        println!("rho: {}", bp.rho);
        match &bp.z_star {
            Some(z) => println!("Z*: {z:?}"),
            None => println!("Z*: undefined (rho = 0)"),
        }
        match &split {
            Some(sp) => {
                println!("a0: {}", sp.a0);
                println!("K0: {}", sp.k0());
                println!("K1: {}", sp.k1());
            }
            None => println!("a0/K0/K1: not quasi-umbilical at this point"),
        }
        println!("centre: {:?}", bp.centre);
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// catalog
// ---------------------------------------------------------------------------

const CATALOG: &[(&str, &str, &str)] = &[
    ("circle", "seed", "unit circle, proper affine hypersphere, dim 1"),
    ("sphere", "seed", "unit sphere, proper affine hypersphere, dim >= 1"),
    ("ellipsoid_unit", "seed", "alias of sphere"),
    ("ellipse", "seed", "anisotropic proper hypersphere, first axis squeezed"),
    ("ellipsoid", "seed", "alias of ellipse for dim >= 2"),
    ("hyperboloid", "seed", "hyperboloid branch, proper affine hypersphere"),
    (
        "ma_quadratic_graph",
        "seed",
        "quadratic graph solving det D^2 F = 1 (name: ma_quadratic)",
    ),
    ("ma_anisotropic", "seed", "anisotropic unit-determinant quadratic graph"),
    ("paraboloid", "classical", "graph of |u|^2/2, improper affine hypersphere"),
    ("unit_sphere", "classical", "upper hemisphere graph chart"),
];

fn cmd_catalog(args: CatalogArgs) -> Result<u8, Fatal> {
    if args.json {
        let items: Vec<String> = CATALOG
            .iter()
            .map(|(name, kind, desc)| {
                format!("{{\"name\":\"{name}\",\"kind\":\"{kind}\",\"description\":\"{desc}\"}}")
            })
            .collect();
        println!("[{}]", items.join(","));
    } else {
        for (name, kind, desc) in CATALOG {
            println!("{name:<20} {kind:<10} {desc}");
        }
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

/// Canonical column order; checks that are not applicable for a row leave
/// the cell empty.
const SWEEP_COLUMNS: &[&str] = &[
    "gauss_closure",
    "apolarity",
    "weingarten",
    "ccf1",
    "ccf2",
    "ccf3",
    "ccf4",
    "spectrum_split",
    "rho_lambda_constant",
    "z_star_alignment",
    "x0_a0_flow",
    "rho_lambda1_k1",
    "a0_squared_constraint",
    "centroaffine_margins",
    "warped_tt_constancy",
    "warped_cross_terms",
    "warped_ratio_law",
    "difference_tensor_block",
    "nabla_hat_x0",
    "g1_flat_directions",
    "g1_radial_law",
    "phi_decay",
    "congruence_fit",
    "congruence_entries",
];

fn cmd_sweep(args: SweepArgs) -> Result<u8, Fatal> {
    if args.r_step <= 0.0 {
        return Err(Fatal::new(EXIT_INVALID_INPUT, "--r-step must be positive"));
    }
    if args.r_max < args.r_min {
        return Err(Fatal::new(EXIT_INVALID_INPUT, "--r-max must be >= --r-min"));
    }
    let nf = args.n as f64;
    let eps = 1e-9;
    let mut ratios = Vec::new();
    let steps = ((args.r_max - args.r_min) / args.r_step).round() as usize;
    for k in 0..=steps {
        let r = args.r_min + args.r_step * k as f64;
        if r > args.r_max + eps {
            break;
        }
        ratios.push(r);
    }
    let case_b_locus = -nf / (nf + 2.0);
    for &r in &ratios {
        if (r - 1.0).abs() < eps || (r + 1.0).abs() < eps {
            return Err(Fatal::new(
                EXIT_INVALID_INPUT,
                format!("ratio range touches the excluded value r = {r}"),
            ));
        }
        if args.case == Some(CaseFlag::A) && (r - case_b_locus).abs() < eps {
            return Err(Fatal::new(
                EXIT_INVALID_INPUT,
                format!("ratio range touches the case-B locus r = {case_b_locus}"),
            ));
        }
    }

    let mut out = String::from("r,case");
    for c in SWEEP_COLUMNS {
        out.push(',');
        out.push_str(c);
    }
    out.push_str(",overall_pass\n");

    for &r in &ratios {
        let params = resolve_params(args.n, r, Calibration::Unit).map_err(fatal_from)?;
        if let Some(c) = args.case {
            let requested = match c {
                CaseFlag::A => FamilyCase::A,
                CaseFlag::B => FamilyCase::B,
            };
            if requested != params.case {
                return Err(Fatal::new(
                    EXIT_INVALID_INPUT,
                    format!("r = {r} resolves to case {}, not {}", c_name(params.case), c_name(requested)),
                ));
            }
        }
        let seed = pick_seed(&params, None)?;
        let mut grid = GridSpec::default_for_seed(&seed.chart_domain());
        // Sweeps trade grid density for breadth.
        if let Some((_, _, tc)) = grid.t_range.as_mut() {
            *tc = 6;
        }
        for ur in grid.u_ranges.iter_mut() {
            ur.2 = ur.2.min(8);
        }
        apply_grid_args(&mut grid, &args.grid);
        grid.validate().map_err(fatal_from)?;
        let surface = FamilySurface::new(params.clone(), seed).map_err(fatal_from)?;
        let input = SuiteInput {
            immersion: &surface,
            params: Some(&params),
            calibration: Calibration::Unit,
            mode: JetMode::Analytic,
            ds_source: DsSource::FieldDifference,
        };
        let report = run_suite(&input, &grid, &Tolerances::default()).map_err(fatal_from)?;
        out.push_str(&fnum(r));
        out.push(',');
        out.push_str(c_name(params.case));
        for col in SWEEP_COLUMNS {
            out.push(',');
            if let Some(item) = report.items.iter().find(|i| &i.name == col) {
                out.push_str(&fnum(item.max_residual));
            }
        }
        out.push(',');
        out.push_str(if report.overall_pass { "true" } else { "false" });
        out.push('\n');
    }

    write_output(args.out.as_ref(), &out)?;
    Ok(0)
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Construct(a) => cmd_construct(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Invariants(a) => cmd_invariants(a),
        Command::Catalog(a) => cmd_catalog(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(fatal) => {
            eprintln!("error: {}", fatal.message);
            ExitCode::from(fatal.code)
        }
    }
}
