//! Implementations of the subcommands.

use nalgebra::Vector2;
use serde::Serialize;

use mrw_core::chain::InitialLaw;
use mrw_core::exactdist::Weight;
use mrw_core::montecarlo::{AuditReport, SimConfig, SimModel, SimStart};
use mrw_core::spectral::{NormalizerKind, ScanOptions, ScanVerdict};
use mrw_core::{fixtures, io as core_io, Error, FiniteMRW, ModelSpec, Result};

use crate::output::{announce, config_hash, emit_json, version, with_csv_sink};
use crate::{AnalyzeArgs, ArithArgs, LltArgs, ModelArgs, RecurArgs, SimulateArgs};

fn parse_point(s: &str) -> Result<Vector2<f64>> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::Domain(format!(
            "field --s expects \"x,y\", got {s:?}"
        )));
    }
    let x = parts[0].trim().parse::<f64>().map_err(|_| {
        Error::Domain(format!("field --s has a non-numeric coordinate {:?}", parts[0]))
    })?;
    let y = parts[1].trim().parse::<f64>().map_err(|_| {
        Error::Domain(format!("field --s has a non-numeric coordinate {:?}", parts[1]))
    })?;
    Ok(Vector2::new(x, y))
}

fn parse_weight(s: &str) -> Result<Weight> {
    if s == "ones" {
        return Ok(Weight::Ones);
    }
    if let Some(idx) = s.strip_prefix("state:") {
        let k = idx
            .parse::<usize>()
            .map_err(|_| Error::Domain(format!("field --f expects state:K, got {s:?}")))?;
        return Ok(Weight::State(k));
    }
    Err(Error::Domain(format!(
        "field --f expects \"ones\" or \"state:K\", got {s:?}"
    )))
}

impl ModelArgs {
    fn label(&self) -> String {
        if let Some(name) = &self.fixture {
            name.clone()
        } else if let Some(path) = &self.model {
            path.display().to_string()
        } else {
            "<none>".into()
        }
    }

    /// Load a finite model; `lenient` skips the centering gate so diagnostic
    /// commands can report the measured drift.
    fn load_finite(&self, lenient: bool) -> Result<FiniteMRW> {
        if let Some(name) = &self.fixture {
            return fixtures::finite_by_name(name).ok_or_else(|| {
                Error::Domain(format!("field --fixture: unknown finite fixture {name:?}"))
            });
        }
        if let Some(path) = &self.model {
            let text = std::fs::read_to_string(path)?;
            let spec: ModelSpec = serde_json::from_str(&text)?;
            return if lenient { spec.build_lenient() } else { spec.build() };
        }
        Err(Error::Domain("field --fixture or --model is required".into()))
    }

    fn load_sim(&self) -> Result<SimModel> {
        if let Some(name) = &self.fixture {
            match name.to_ascii_lowercase().as_str() {
                "af1" => return Ok(SimModel::Affine(fixtures::af1())),
                "ifs1" => return Ok(SimModel::Ifs(fixtures::ifs1())),
                _ => {}
            }
            if let Some(m) = fixtures::finite_by_name(name) {
                return Ok(SimModel::Finite(m));
            }
            return Err(Error::Domain(format!(
                "field --fixture: unknown fixture {name:?}"
            )));
        }
        Ok(SimModel::Finite(self.load_finite(false)?))
    }
}

#[derive(Serialize)]
struct CheckRow {
    name: &'static str,
    status: &'static str,
    detail: String,
}

#[derive(Serialize)]
struct AnalyzeReport {
    version: String,
    config_hash: String,
    model: String,
    checks: Vec<CheckRow>,
    drift: [f64; 2],
    gap: Option<f64>,
    harris: bool,
    gamma: Option<[[f64; 2]; 2]>,
    d_s: Option<f64>,
    route: Option<String>,
    scan: Option<mrw_core::ScanReport>,
    verdict: String,
}

pub fn analyze(args: AnalyzeArgs) -> Result<u8> {
    #[derive(Serialize)]
    struct Config<'a> {
        command: &'static str,
        model: String,
        grid: usize,
        tol: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        out: Option<&'a std::path::PathBuf>,
    }
    let config = Config {
        command: "analyze",
        model: args.model.label(),
        grid: args.grid,
        tol: args.tol,
        out: args.out.as_ref(),
    };
    let hash = config_hash(&config);

    let model = args.model.load_finite(true)?;
    let mut checks = Vec::new();
    let mut all_pass = true;
    let push = |name: &'static str, ok: bool, detail: String, checks: &mut Vec<CheckRow>| {
        checks.push(CheckRow {
            name,
            status: if ok { "PASS" } else { "FAIL" },
            detail,
        });
    };

    let gap = match model.ergodicity_gap() {
        Ok(g) => {
            push("(A1) strong ergodicity", true, format!("gap = {g:.6}"), &mut checks);
            Some(g)
        }
        Err(e) => {
            all_pass = false;
            push("(A1) strong ergodicity", false, e.to_string(), &mut checks);
            None
        }
    };

    let drift = match model.stationary() {
        Ok(pi) => {
            let d = model.drift(&pi);
            let ok = d.norm() <= 1e-8;
            all_pass &= ok;
            push(
                "centering E[S1] = 0",
                ok,
                format!("drift = ({:.3e}, {:.3e})", d.x, d.y),
                &mut checks,
            );
            [d.x, d.y]
        }
        Err(e) => {
            all_pass = false;
            push("centering E[S1] = 0", false, e.to_string(), &mut checks);
            [f64::NAN, f64::NAN]
        }
    };

    push(
        "(A2)-(A4) operator continuity and quasi-compactness",
        true,
        "automatic for finite-state Fourier matrices".into(),
        &mut checks,
    );

    let mut gamma_out = None;
    let mut d_s = None;
    match mrw_core::covariance(&model) {
        Ok(cov) => {
            let ok = !cov.degenerate;
            all_pass &= ok;
            let grad = mrw_core::spectral::lambda_gradient(&model)?.norm();
            push(
                "(A5) CLT with non-degenerate covariance",
                ok,
                format!(
                    "det Gamma = {:.6e}, |grad lambda(0)| = {grad:.2e}",
                    cov.gamma.determinant()
                ),
                &mut checks,
            );
            gamma_out = Some([
                [cov.gamma[(0, 0)], cov.gamma[(0, 1)]],
                [cov.gamma[(1, 0)], cov.gamma[(1, 1)]],
            ]);
            if ok {
                d_s = model.lattice().llt_constant(&cov.gamma).ok();
            }
        }
        Err(e) => {
            all_pass = false;
            push("(A5) CLT with non-degenerate covariance", false, e.to_string(), &mut checks);
        }
    }

    let scan = if gap.is_some() {
        match mrw_core::arithmeticity_scan(&model, args.grid, args.tol, &ScanOptions::default()) {
            Ok(report) => {
                let ok = report.verdict == ScanVerdict::NonArithmetic;
                all_pass &= ok;
                let detail = if ok {
                    format!("delta margin = {:.4}", report.delta_margin)
                } else {
                    let witness = report
                        .g_points
                        .iter()
                        .max_by(|a, b| a[2].total_cmp(&b[2]))
                        .map(|p| format!("witness t = ({:.4}, {:.4})", p[0], p[1]))
                        .unwrap_or_default();
                    witness
                };
                push("(A6) non-sublattice", ok, detail, &mut checks);
                Some(report)
            }
            Err(e) => {
                all_pass = false;
                push("(A6) non-sublattice", false, e.to_string(), &mut checks);
                None
            }
        }
    } else {
        push("(A6) non-sublattice", false, "skipped: chain not ergodic".into(), &mut checks);
        None
    };

    let report = AnalyzeReport {
        version: version().into(),
        config_hash: hash,
        model: args.model.label(),
        checks,
        drift,
        gap,
        harris: model.is_harris(),
        gamma: gamma_out,
        d_s,
        route: all_pass.then(|| "TheoremII".to_string()),
        scan,
        verdict: if all_pass { "PASS".into() } else { "FAIL".into() },
    };
    emit_json(&args.out, "analyze.json", &report)?;
    announce(&args.out, "analyze.json");
    Ok(if all_pass { 0 } else { 2 })
}

pub fn llt(args: LltArgs) -> Result<u8> {
    #[derive(Serialize)]
    struct Config {
        command: &'static str,
        model: String,
        nmax: usize,
        s: String,
        eps: Option<f64>,
        f: String,
        bivar: Option<String>,
        start: usize,
    }
    let config = Config {
        command: "llt",
        model: args.model.label(),
        nmax: args.nmax,
        s: args.s.clone(),
        eps: args.eps,
        f: args.f.clone(),
        bivar: args.bivar.clone(),
        start: args.start,
    };
    let hash = config_hash(&config);

    let model = args.model.load_finite(false)?;
    let s = parse_point(&args.s)?;
    let eps = args.eps.unwrap_or(0.5 * model.lattice().epsilon_s());
    let weight = parse_weight(&args.f)?;
    let init = InitialLaw::Dirac(args.start);

    // Gate on the non-sublattice hypothesis before promising a limit.
    let scan = mrw_core::arithmeticity_scan(&model, 64, 1e-6, &ScanOptions::default())?;
    if scan.verdict == ScanVerdict::Arithmetic {
        let w = scan
            .g_points
            .iter()
            .max_by(|a, b| a[2].total_cmp(&b[2]))
            .map(|p| (p[0], p[1]))
            .unwrap_or((f64::NAN, f64::NAN));
        return Err(Error::Arithmetic(w.0, w.1));
    }

    let series = mrw_core::llt_series(&model, &init, &s, eps, &weight, args.nmax, None)?;
    with_csv_sink(&args.out, "llt_series.csv", |w| {
        core_io::write_llt_csv(w, &series)
    })?;
    announce(&args.out, "llt_series.csv");

    if args.snapshot {
        let policy = mrw_core::WindowPolicy::for_horizon(&model, args.nmax)?;
        let mut evolver = mrw_core::Evolver::new(&model, &init, policy)?;
        evolver.run_to(args.nmax)?;
        emit_json(&args.out, "snapshot.json", &evolver.dist().snapshot())?;
        announce(&args.out, "snapshot.json");
    }

    #[derive(Serialize)]
    struct Summary {
        version: String,
        config_hash: String,
        d_s: f64,
        pi_f: f64,
        final_ratio: f64,
        tail_mean: f64,
        bivariate: Option<mrw_core::BivariateReport>,
    }
    let bivariate = match &args.bivar {
        Some(text) => {
            let p = parse_point(text)?;
            let (n, m) = (p.x as usize, p.y as usize);
            Some(mrw_core::bivariate_llt(&model, &init, &s, eps, n, m, None)?)
        }
        None => None,
    };
    let summary = Summary {
        version: version().into(),
        config_hash: hash,
        d_s: series.d_s,
        pi_f: series.pi_f,
        final_ratio: series.final_ratio(),
        tail_mean: series.tail_mean,
        bivariate,
    };
    emit_json(&args.out, "llt_summary.json", &summary)?;
    announce(&args.out, "llt_summary.json");
    Ok(0)
}

pub fn recur(args: RecurArgs) -> Result<u8> {
    #[derive(Serialize)]
    struct Config {
        command: &'static str,
        model: String,
        n: usize,
        targets: Vec<String>,
        eps: Vec<f64>,
        grid: usize,
        tol: f64,
        start: usize,
    }
    let config = Config {
        command: "recur",
        model: args.model.label(),
        n: args.n,
        targets: args.targets.clone(),
        eps: args.eps.clone(),
        grid: args.grid,
        tol: args.tol,
        start: args.start,
    };
    let hash = config_hash(&config);

    let model = args.model.load_finite(false)?;
    let targets = args
        .targets
        .iter()
        .map(|t| parse_point(t))
        .collect::<Result<Vec<_>>>()?;
    let report = mrw_core::recurrence_report(
        &model,
        &args.model.label(),
        &InitialLaw::Dirac(args.start),
        &targets,
        &args.eps,
        args.n,
        args.grid,
        args.tol,
    )?;

    #[derive(Serialize)]
    struct Stamped {
        version: String,
        config_hash: String,
        #[serde(flatten)]
        report: mrw_core::RecurrenceReport,
    }
    emit_json(
        &args.out,
        "recurrence.json",
        &Stamped {
            version: version().into(),
            config_hash: hash,
            report,
        },
    )?;
    announce(&args.out, "recurrence.json");
    Ok(0)
}

pub fn arith(args: ArithArgs) -> Result<u8> {
    #[derive(Serialize)]
    struct Config {
        command: &'static str,
        model: String,
        grid: usize,
        tol: f64,
        window: Option<f64>,
    }
    let config = Config {
        command: "arith",
        model: args.model.label(),
        grid: args.grid,
        tol: args.tol,
        window: args.window,
    };
    let hash = config_hash(&config);

    let model = args.model.load_finite(false)?;
    let opts = ScanOptions {
        window: args.window,
        ..ScanOptions::default()
    };
    let report = mrw_core::arithmeticity_scan(&model, args.grid, args.tol, &opts)?;

    #[derive(Serialize)]
    struct Stamped {
        version: String,
        config_hash: String,
        #[serde(flatten)]
        report: mrw_core::ScanReport,
    }
    emit_json(
        &args.out,
        "scan.json",
        &Stamped {
            version: version().into(),
            config_hash: hash,
            report,
        },
    )?;
    announce(&args.out, "scan.json");
    Ok(0)
}

pub fn simulate(args: SimulateArgs) -> Result<u8> {
    #[derive(Serialize)]
    struct Config {
        command: &'static str,
        model: String,
        traj: usize,
        nmax: usize,
        seed: u64,
        normalizer: String,
        checkpoints: Option<String>,
        targets: Vec<String>,
        eps: f64,
    }
    let config = Config {
        command: "simulate",
        model: args.model.label(),
        traj: args.traj,
        nmax: args.nmax,
        seed: args.seed,
        normalizer: args.normalizer.clone(),
        checkpoints: args.checkpoints.clone(),
        targets: args.targets.clone(),
        eps: args.eps,
    };
    let hash = config_hash(&config);

    let model = args.model.load_sim()?;
    let kind = NormalizerKind::parse(&args.normalizer)?;
    let checkpoints = match &args.checkpoints {
        Some(text) => text
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Domain(format!("bad checkpoint {p:?}")))
            })
            .collect::<Result<Vec<_>>>()?,
        None => vec![(args.nmax / 4).max(1), args.nmax],
    };
    let targets = args
        .targets
        .iter()
        .map(|t| parse_point(t).map(|p| ([p.x, p.y], args.eps)))
        .collect::<Result<Vec<_>>>()?;

    let audit = model.audit(args.seed, 100_000);
    let start = match &model {
        SimModel::Finite(_) => SimStart::State(0),
        _ => SimStart::Point([0.0, 0.0]),
    };
    let sim_config = SimConfig {
        n_steps: args.nmax,
        n_traj: args.traj,
        seed: args.seed,
        checkpoints,
        targets,
    };
    let batch = mrw_core::simulate(&model, start, &sim_config)?;
    let clt = mrw_core::empirical_clt(&batch, kind)?;

    with_csv_sink(&args.out, "checkpoints.csv", |w| {
        core_io::write_clt_csv(w, &clt)
    })?;
    announce(&args.out, "checkpoints.csv");
    for target in 0..batch.targets.len() {
        let hits = mrw_core::empirical_hits(&batch, target)?;
        let name = format!("hits_{target}.csv");
        with_csv_sink(&args.out, &name, |w| core_io::write_hits_csv(w, &hits))?;
        announce(&args.out, &name);
    }

    #[derive(Serialize)]
    struct Summary {
        version: String,
        config_hash: String,
        audit: AuditReport,
        excluded: u64,
        #[serde(flatten)]
        clt: mrw_core::CltReport,
    }
    let audit_passed = audit.passed;
    emit_json(
        &args.out,
        "simulate.json",
        &Summary {
            version: version().into(),
            config_hash: hash,
            audit,
            excluded: batch.excluded,
            clt,
        },
    )?;
    announce(&args.out, "simulate.json");
    Ok(if audit_passed { 0 } else { 2 })
}
