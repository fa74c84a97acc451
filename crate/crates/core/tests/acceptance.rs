//! Acceptance suite: one test per criterion, each printing a single
//! pass/fail line. Tolerances are pinned and must not be loosened.

use std::sync::OnceLock;
use std::time::Instant;

use caffine::blaschke::{extract, field_derivatives, DsSource};
use caffine::families::{
    catalog_seed, resolve_params, split_eigenvalues, Calibration, FamilyParams, FamilySurface,
};
use caffine::immersion::{JetMode, Paraboloid, SphereChart};
use caffine::verify::{
    fit_congruence, run_suite, sample_grid, CheckReport, GridSpec, SuiteInput, Tolerances,
};

fn report_line(criterion: usize, name: &str, pass: bool) {
    println!(
        "criterion {criterion} ({name}): {}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn case_a_grid(n: usize) -> GridSpec<f64> {
    let (tc, u_ranges) = match n {
        2 => (6, vec![(-2.5, 2.5, 7)]),
        3 => (5, vec![(0.4, 2.7, 4), (-2.5, 2.5, 4)]),
        4 => (4, vec![(-0.4, 0.4, 3), (-0.4, 0.4, 3), (-0.4, 0.4, 3)]),
        _ => unreachable!(),
    };
    GridSpec { t_range: Some((0.5, 2.0, tc)), u_ranges }
}

/// Worker threads for the heavy grid runs; perf only, results identical.
fn enable_threads() {
    let n = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    std::env::set_var("CAFFINE_THREADS", n.to_string());
}

fn case_a_seed_name(n: usize) -> &'static str {
    match n {
        2 => "circle",
        _ => "sphere",
    }
}

fn run_case_a(n: usize, r: f64) -> (FamilyParams<f64>, CheckReport<f64>) {
    enable_threads();
    let params = resolve_params(n, r, Calibration::Unit).unwrap();
    let seed = catalog_seed::<f64>(case_a_seed_name(n), n - 1).unwrap();
    let surf = FamilySurface::new(params.clone(), seed).unwrap();
    let input = SuiteInput {
        immersion: &surf,
        params: Some(&params),
        calibration: Calibration::Unit,
        mode: JetMode::Analytic,
        ds_source: DsSource::FieldDifference,
    };
    let grid = case_a_grid(n);
    let report = run_suite(&input, &grid, &Tolerances::default()).unwrap();
    (params, report)
}

fn run_case_b(n: usize) -> (FamilyParams<f64>, CheckReport<f64>, FamilySurface<f64>) {
    enable_threads();
    let r = -(n as f64) / (n as f64 + 2.0);
    let params = resolve_params(n, r, Calibration::Unit).unwrap();
    let seed = catalog_seed::<f64>("ma_quadratic", n - 1).unwrap();
    let surf = FamilySurface::new(params.clone(), seed).unwrap();
    let grid = GridSpec {
        t_range: Some((0.5, 2.0, 6)),
        u_ranges: vec![(-0.4, 0.4, if n == 2 { 7 } else { 4 }); n - 1],
    };
    let input = SuiteInput {
        immersion: &surf,
        params: Some(&params),
        calibration: Calibration::Unit,
        mode: JetMode::Analytic,
        ds_source: DsSource::FieldDifference,
    };
    let report = run_suite(&input, &grid, &Tolerances::default()).unwrap();
    (params, report, surf)
}

const CASE_A_NS: [usize; 3] = [2, 3, 4];
const CASE_A_RS: [f64; 3] = [-5.0, -3.0, -2.0];

fn case_a_reports() -> &'static Vec<(usize, f64, FamilyParams<f64>, CheckReport<f64>)> {
    static CACHE: OnceLock<Vec<(usize, f64, FamilyParams<f64>, CheckReport<f64>)>> =
        OnceLock::new();
    CACHE.get_or_init(|| {
        let mut out = Vec::new();
        for &n in &CASE_A_NS {
            for &r in &CASE_A_RS {
                let (p, rep) = run_case_a(n, r);
                out.push((n, r, p, rep));
            }
        }
        out
    })
}

fn item_residual(rep: &CheckReport<f64>, name: &str) -> f64 {
    rep.items
        .iter()
        .find(|i| i.name == name)
        .unwrap_or_else(|| panic!("item {name} missing"))
        .max_residual
}

#[test]
fn criterion_1_classical_oracles() {
    let start = Instant::now();
    let tol = 1e-9;
    let mut ok = true;

    // Paraboloid: S = 0, xi = (0, 0, 1), K = 0.
    let parab = Paraboloid { dim: 2 };
    for &(u, v) in &[(0.3f64, -0.4), (1.1, 0.7), (-0.9, 0.2)] {
        let bp: caffine::blaschke::BlaschkePoint<f64> =
            extract(&parab, &[u, v], JetMode::Analytic, 4).unwrap();
        let s = bp.s.as_ref().unwrap();
        ok &= s.max_abs() < tol;
        ok &= (bp.xi[0].abs()).max(bp.xi[1].abs()) < tol && (bp.xi[2] - 1.0).abs() < tol;
        ok &= bp.k_tensor.max_abs() < tol;
    }

    // Unit sphere: S = id, rho = -1, centre = 0.
    let sphere = SphereChart { dim: 2 };
    for &(u, v) in &[(0.1f64, 0.2), (-0.4, 0.3), (0.5, -0.2)] {
        let bp: caffine::blaschke::BlaschkePoint<f64> =
            extract(&sphere, &[u, v], JetMode::Analytic, 4).unwrap();
        let s = bp.s.as_ref().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                ok &= (s[(i, j)] - expect).abs() < tol;
            }
        }
        ok &= (bp.rho + 1.0).abs() < tol;
        ok &= bp.centre.iter().all(|c| c.abs() < tol);
    }

    let fast = start.elapsed().as_secs_f64() < 1.0;
    report_line(1, "classical oracles", ok && fast);
    assert!(ok, "oracle residuals exceeded 1e-9");
    assert!(fast, "criterion 1 exceeded 1 s");
}

#[test]
fn criterion_2_case_a_converse() {
    let start = Instant::now();
    let mut ok = true;
    for (n, r, _p, rep) in case_a_reports() {
        for eq in ["ccf1", "ccf2", "ccf3", "ccf4"] {
            let res = item_residual(rep, eq);
            if res >= 1e-6 {
                ok = false;
                eprintln!("n={n} r={r}: {eq} residual {res}");
            }
        }
        ok &= item_residual(rep, "spectrum_split") < 1e-6;
        ok &= item_residual(rep, "warped_cross_terms") < 1e-7;
        ok &= item_residual(rep, "warped_ratio_law") < 1e-6;
        ok &= item_residual(rep, "apolarity") < 1e-7;
        ok &= item_residual(rep, "congruence_fit") < 1e-6;
        if !rep.overall_pass {
            ok = false;
            for i in rep.items.iter().filter(|i| !i.pass) {
                eprintln!("n={n} r={r}: {} residual {}", i.name, i.max_residual);
            }
        }
    }
    let fast = start.elapsed().as_secs_f64() < 30.0;
    report_line(2, "case A converse", ok && fast);
    assert!(ok, "case A suite failed");
    assert!(fast, "criterion 2 exceeded 30 s");
}

#[test]
fn criterion_3_paper_exact_constants() {
    let n = 2;
    let r = -3.0;
    let params: FamilyParams<f64> = resolve_params(n, r, Calibration::PaperExact).unwrap();
    let mut ok = true;
    if (params.rho0 - (-2.0 / 3.0)).abs() >= 1e-6 {
        ok = false;
        eprintln!("rho0 = {} != -2/3", params.rho0);
    }

    let seed = catalog_seed::<f64>("circle", 1).unwrap();
    let surf = FamilySurface::new(params.clone(), seed).unwrap();
    // rho0 recovered from the invariant rho * lambda_j / l_j at sample
    // points (rho itself carries the t^2 conformal factor).
    for &(t, u) in &[(0.7, 0.4), (1.0, -1.1), (1.8, 2.0)] {
        let bp = extract(&surf, &[t, u], JetMode::Analytic, 4).unwrap();
        let split = split_eigenvalues(&bp).unwrap();
        for (lam, l) in [(split.lambda0, params.l0), (split.lambda1, params.l1)] {
            let rho0 = bp.rho * lam / l;
            if (rho0 - params.rho0).abs() >= 1e-6 {
                ok = false;
                eprintln!(
                    "rho lambda / l at ({t}, {u}) = {rho0} != rho0 = {}",
                    params.rho0
                );
            }
        }
    }

    let input = SuiteInput {
        immersion: &surf,
        params: Some(&params),
        calibration: Calibration::PaperExact,
        mode: JetMode::Analytic,
        ds_source: DsSource::FieldDifference,
    };
    let grid = case_a_grid(2);
    let samples = sample_grid(&input, &grid).unwrap();
    let (a, items) = fit_congruence(&samples, Some(&params), Calibration::PaperExact, 1e-6).unwrap();
    // Closed forms: 4 rho0 K1 = 2/3 on the first n diagonal slots,
    // -2 rho0 N = 4 in the corner.
    for i in 0..n {
        if (a[(i, i)] - 2.0 / 3.0).abs() >= 1e-5 {
            ok = false;
            eprintln!("A[{i},{i}] = {} != 2/3", a[(i, i)]);
        }
    }
    if (a[(n, n)] - 4.0).abs() >= 1e-5 {
        ok = false;
        eprintln!("A[{n},{n}] = {} != 4", a[(n, n)]);
    }
    for i in 0..=n {
        for j in 0..=n {
            if i != j && a[(i, j)].abs() >= 1e-5 {
                ok = false;
                eprintln!("A[{i},{j}] = {} != 0", a[(i, j)]);
            }
        }
    }
    for item in &items {
        if !item.pass {
            ok = false;
            eprintln!("{}: residual {}", item.name, item.max_residual);
        }
    }

    report_line(3, "case A paper-exact constants", ok);
    assert!(ok, "paper-exact constants not reproduced");
}

#[test]
fn criterion_4_case_b_converse() {
    let mut ok = true;
    for n in [2usize, 3] {
        let (params, rep, surf) = run_case_b(n);
        if !rep.overall_pass {
            ok = false;
            for i in rep.items.iter().filter(|i| !i.pass) {
                eprintln!("case B n={n}: {} residual {}", i.name, i.max_residual);
            }
        }
        ok &= item_residual(&rep, "phi_decay") < 1e-6;
        // (n+2) lambda_0 + n lambda_1 = 0.
        let mut point = vec![1.1];
        point.extend(std::iter::repeat(0.2).take(n - 1));
        let bp = extract(&surf, &point, JetMode::Analytic, 4).unwrap();
        let split = split_eigenvalues(&bp).unwrap();
        let nf = n as f64;
        let res = ((nf + 2.0) * split.lambda0 + nf * split.lambda1).abs()
            / split.lambda0.abs().max(split.lambda1.abs());
        ok &= res < 1e-5;
        // Constants satisfy the case-B locus relation exactly.
        ok &= ((nf + 2.0) * params.l0 + nf * params.l1).abs() < 1e-12;
    }
    report_line(4, "case B converse", ok);
    assert!(ok, "case B suite failed");
}

#[test]
fn criterion_5_identity_battery() {
    let mut ok = true;
    let mut reports: Vec<(String, FamilyParams<f64>, CheckReport<f64>)> = case_a_reports()
        .iter()
        .map(|(n, r, p, rep)| (format!("case A n={n} r={r}"), p.clone(), rep.clone()))
        .collect();
    for n in [2usize, 3] {
        let (p, rep, _) = run_case_b(n);
        reports.push((format!("case B n={n}"), p, rep));
    }
    for (tag, params, rep) in &reports {
        // K0 - K1 = 1 exact.
        ok &= (params.k0 - params.k1 - 1.0).abs() < 1e-14;
        for name in [
            "a0_squared_constraint",
            "rho_lambda1_k1",
            "x0_a0_flow",
            "rho_lambda_constant",
        ] {
            let res = item_residual(rep, name);
            if res >= 1e-5 {
                ok = false;
                eprintln!("{tag}: {name} residual {res}");
            }
        }
    }
    report_line(5, "identity battery", ok);
    assert!(ok, "identity battery exceeded 1e-5");
}

#[test]
fn criterion_6_negative_controls() {
    let mut ok = true;

    // Paraboloid must fail the compatibility system and the congruence fit
    // with residual >= 0.01.
    let parab = Paraboloid { dim: 2 };
    let grid = GridSpec::chart_only(vec![(0.4, 1.2, 4), (0.3, 1.1, 4)]);
    let input = SuiteInput::analytic(&parab);
    let rep = run_suite(&input, &grid, &Tolerances::default()).unwrap();
    let fv_broken = ["ccf1", "ccf2", "ccf3", "ccf4"]
        .iter()
        .any(|eq| item_residual(&rep, eq) >= 0.01);
    if !fv_broken {
        ok = false;
        eprintln!("paraboloid satisfies ccf1-ccf4 (max residual {:.3e})",
            ["ccf1", "ccf2", "ccf3", "ccf4"]
                .iter()
                .map(|eq| item_residual(&rep, eq))
                .fold(0.0f64, f64::max));
    }
    let fit_broken = item_residual(&rep, "congruence_fit") >= 0.01;
    if !fit_broken {
        ok = false;
        eprintln!(
            "paraboloid congruence fit residual {:.3e} < 0.01",
            item_residual(&rep, "congruence_fit")
        );
    }

    // Unit sphere must fail the centroaffine margins.
    let sphere = SphereChart { dim: 2 };
    let grid = GridSpec::chart_only(vec![(-0.4, 0.4, 4), (-0.4, 0.4, 4)]);
    let input = SuiteInput::analytic(&sphere);
    let rep = run_suite(&input, &grid, &Tolerances::default()).unwrap();
    let sphere_flagged = rep
        .items
        .iter()
        .any(|i| i.name == "centroaffine_margins" && !i.pass);
    if !sphere_flagged {
        ok = false;
        eprintln!("sphere passed centroaffine margins");
    }

    // Perturbed case-A constants (constraint offset 0.1) must trip the
    // eigen-relation or compatibility checks.
    let n = 2usize;
    let base: FamilyParams<f64> = resolve_params(n, -3.0, Calibration::Unit).unwrap();
    let mut p = base.clone();
    let l1 = p.l1;
    let nf = n as f64;
    let b = 2.0 * nf - 2.0 * l1;
    let c = l1 * l1 + 2.0 * nf * l1 - 0.1;
    let l0 = (-b - (b * b - 4.0 * c).sqrt()) / 2.0;
    assert!((2.0 * nf * (l0 + l1) + (l0 - l1) * (l0 - l1) - 0.1).abs() < 1e-10);
    p.l0 = l0;
    p.r = l0 / l1;
    p.k0 = l0 / (l0 - l1);
    p.k1 = l1 / (l0 - l1);
    p.nn = (nf - 2.0) * p.k1 + (nf + 2.0) * p.k0;
    p.zeta0 = (l1 / nf) * ((nf + 2.0) * l0 + nf * l1) / (l0 + l1);
    let seed = catalog_seed::<f64>("circle", 1).unwrap();
    let surf = FamilySurface::new(p.clone(), seed).unwrap();
    let grid = GridSpec {
        t_range: Some((0.8, 1.6, 3)),
        u_ranges: vec![(-2.0, 2.0, 5)],
    };
    let input = SuiteInput {
        immersion: &surf,
        params: Some(&p),
        calibration: Calibration::Unit,
        mode: JetMode::Analytic,
        ds_source: DsSource::FieldDifference,
    };
    let rep = run_suite(&input, &grid, &Tolerances::default()).unwrap();
    let perturbed_flagged = rep.items.iter().any(|i| {
        !i.pass
            && (i.name.starts_with("ccf")
                || [
                    "rho_lambda_constant",
                    "z_star_alignment",
                    "x0_a0_flow",
                    "rho_lambda1_k1",
                    "a0_squared_constraint",
                ]
                .contains(&i.name.as_str()))
    });
    if !perturbed_flagged {
        ok = false;
        eprintln!("perturbed constants went undetected");
    }

    report_line(6, "negative controls", ok);
    assert!(ok, "negative controls not all triggered");
}

#[test]
fn criterion_7_differentiation_cross_validation() {
    let mut ok = true;

    // 100-point subsample over the criterion-2 grids: every Blaschke field
    // agrees between analytic jets and the finite-difference fallback.
    let mut checked = 0usize;
    for &n in &CASE_A_NS {
        for &r in &CASE_A_RS {
            let params = resolve_params(n, r, Calibration::Unit).unwrap();
            let seed = catalog_seed::<f64>(case_a_seed_name(n), n - 1).unwrap();
            let surf = FamilySurface::new(params, seed).unwrap();
            let points = case_a_grid(n).points();
            let stride = (points.len() / 12).max(1);
            for p in points.iter().step_by(stride).take(12) {
                let a = extract(&surf, p, JetMode::Analytic, 4).unwrap();
                let f = extract(&surf, p, JetMode::finite_difference_default(), 4).unwrap();
                let tol = 1e-4;
                let scale_h = a.h.max_abs().max(1.0);
                ok &= f.h.sub(&a.h).max_abs() / scale_h < tol;
                let xi_err = a
                    .xi
                    .iter()
                    .zip(&f.xi)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0f64, f64::max);
                ok &= xi_err < tol;
                ok &= (a.rho - f.rho).abs() / a.rho.abs().max(1.0) < tol;
                let sa = a.s.as_ref().unwrap();
                let sf = f.s.as_ref().unwrap();
                ok &= sf.sub(sa).max_abs() / sa.max_abs().max(1.0) < tol;
                let za = a.z_star.as_ref().unwrap();
                let zf = f.z_star.as_ref().unwrap();
                let z_err = za
                    .iter()
                    .zip(zf)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0f64, f64::max);
                ok &= z_err < tol;
                checked += 1;
            }
        }
    }
    ok &= checked >= 100;

    // Order-5 jet derivative of S vs field differencing, analytic mode.
    for &(n, r) in &[(2usize, -3.0), (3usize, -2.0)] {
        let params = resolve_params(n, r, Calibration::Unit).unwrap();
        let seed = catalog_seed::<f64>(case_a_seed_name(n), n - 1).unwrap();
        let surf = FamilySurface::new(params, seed).unwrap();
        let mut point = vec![1.2];
        point.extend(std::iter::repeat(0.7).take(n - 1));
        let (_, fd_jets) = field_derivatives(
            &surf,
            &point,
            JetMode::Analytic,
            DsSource::Order5Jets,
            1e-4,
        )
        .unwrap();
        let (_, fd_field) = field_derivatives(
            &surf,
            &point,
            JetMode::Analytic,
            DsSource::FieldDifference,
            1e-4,
        )
        .unwrap();
        let scale = fd_jets.d_s.max_abs().max(1.0);
        let err = fd_jets.d_s.sub(&fd_field.d_s).max_abs() / scale;
        if err >= 1e-5 {
            ok = false;
            eprintln!("n={n} r={r}: order-5 vs field-differenced dS error {err}");
        }
    }

    report_line(7, "differentiation cross-validation", ok);
    assert!(ok, "analytic and fallback differentiation disagree");
}

#[test]
fn criterion_8_deterministic_reports() {
    let mut ok = true;
    for &n in &CASE_A_NS {
        for &r in &CASE_A_RS {
            let (_, rep1) = run_case_a(n, r);
            let (_, rep2) = run_case_a(n, r);
            if rep1.to_json() != rep2.to_json() {
                ok = false;
                eprintln!("n={n} r={r}: reports differ between runs");
            }
        }
    }
    report_line(8, "deterministic reports", ok);
    assert!(ok, "reports are not byte-identical");
}
