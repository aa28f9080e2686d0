//! Command-line driver: system verification, relative-equilibrium search,
//! slice reports, relative-periodic-orbit hunting, continuation, family
//! counting, and plot emission.
//!
//! Exit codes: 0 success, 2 solver non-convergence, 3 invalid input,
//! 4 invariance failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use torsym::config::Tolerances;
use torsym::flow;
use torsym::io::csv as csvio;
use torsym::io::def::{load_system, DefError};
use torsym::io::report::{
    CertificateRecord, FamilyRecord, GaugeRecord, IdentityCheck, OrbitRecord, ReleqRecord, Report,
    ReportResults, SignatureRecord, SliceRecord, Timings, VerificationRecord,
};
use torsym::io::svg::{line_plot, XScale};
use torsym::io::write_atomic;
use torsym::linalg::{canonical_j, hamiltonian_vector_field};
use torsym::poly::Polynomial;
use torsym::releq::{
    find_relative_equilibrium, verify_relative_equilibrium, RelativeEquilibrium, ReleqOptions,
    SolveError, SymmetricSystem,
};
use torsym::rpo::{
    continue_family, count_distinct_families, seed_from_slice, shoot, RpoError, ShootOptions,
};
use torsym::slice::{
    build_slice_data, optimize_velocity_gauge, slice_hessian, symplectic_slice, SliceError,
    SliceGeometry,
};
use torsym::symmetry::check_invariance;

#[derive(Parser)]
#[command(
    name = "torsym",
    version,
    about = "Relative equilibria, symplectic slices, and relative periodic orbit families \
             of torus-symmetric polynomial Hamiltonian systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check invariance of the Hamiltonian and the structural identities of
    /// the torus action
    Verify {
        /// Definition file path or built-in name
        system: String,
        /// Write the report here instead of stdout
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Solve for a relative equilibrium from a guess
    FindReleq {
        system: String,
        /// Starting point, comma-separated `q1..qn,p1..pn`
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        x0: Vec<f64>,
        /// Starting velocity, comma-separated, one value per torus generator
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        xi0: Vec<f64>,
        /// Pin the momentum to these target values
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        pin_momentum: Option<Vec<f64>>,
        /// Permit the trivial solution x = 0
        #[arg(long)]
        allow_trivial: bool,
        /// Horizon for the dynamic verification
        #[arg(long, default_value_t = 10.0)]
        verify_horizon: f64,
        /// Integrator step for the dynamic verification
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Maximum allowed dynamic deviation
        #[arg(long, default_value_t = 1e-5)]
        deviation_tol: f64,
        /// Write the equilibrium record here for downstream commands
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Slice geometry, slice Hessian, inertia, and the gauge search
    SliceReport {
        system: String,
        /// Equilibrium record produced by find-releq --out
        releq: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Find one relative periodic orbit from a slice-mode seed
    FindRpo {
        system: String,
        releq: PathBuf,
        /// Slice mode index (0-based, frequencies ascending)
        #[arg(long)]
        mode: usize,
        /// Level offset epsilon > 0
        #[arg(long)]
        eps: f64,
        /// Integrator step for shooting
        #[arg(long, default_value_t = 1.5e-4)]
        dt: f64,
        /// Write the orbit trajectory CSV here
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write a 2D projection SVG here
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Coordinate pair for the projection, e.g. q1,p1
        #[arg(long, default_value = "q1,p1")]
        coords: String,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Continue a family of relative periodic orbits over a level grid
    Continue {
        system: String,
        releq: PathBuf,
        #[arg(long)]
        mode: usize,
        /// Grid spec: `lo:hi:logN`, `lo:hi:linN`, or a comma list
        #[arg(long)]
        eps_grid: String,
        #[arg(long, default_value_t = 1.5e-4)]
        dt: f64,
        /// Write the family summary CSV here
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the period-vs-level SVG here
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Shoot every slice mode at one level and count distinct families
    CountFamilies {
        system: String,
        releq: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Render an SVG plot from a CSV written by find-rpo or continue
    EmitPlot {
        #[arg(long)]
        kind: PlotKind,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        svg: PathBuf,
        /// Coordinate pair for orbit plots, e.g. q1,p1
        #[arg(long)]
        coords: Option<String>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlotKind {
    /// Period against level offset from a family summary CSV
    TVsEps,
    /// Two phase-space coordinates from a trajectory CSV
    Orbit,
}

/// A command failure carrying its documented exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
    report: Option<Report>,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into(), report: None }
    }

    fn solver(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into(), report: None }
    }

    fn invariance(message: impl Into<String>) -> Self {
        Self { code: 4, message: message.into(), report: None }
    }
}

impl From<DefError> for Failure {
    fn from(e: DefError) -> Self {
        match e {
            DefError::NotInvariant { .. } => Failure::invariance(e.to_string()),
            _ => Failure::input(e.to_string()),
        }
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::TrivialGuess | SolveError::GuessDimension { .. } => {
                Failure::input(e.to_string())
            }
            _ => Failure::solver(e.to_string()),
        }
    }
}

impl From<RpoError> for Failure {
    fn from(e: RpoError) -> Self {
        match e {
            RpoError::ModeOutOfRange { .. }
            | RpoError::NonPositiveLevel(_)
            | RpoError::IndefiniteHessian(_) => Failure::input(e.to_string()),
            _ => Failure::solver(e.to_string()),
        }
    }
}

impl From<SliceError> for Failure {
    fn from(e: SliceError) -> Self {
        match e {
            SliceError::RadicalOrbitMismatch { .. }
            | SliceError::DegenerateForm(_)
            | SliceError::IndefiniteHessian { .. } => Failure::input(e.to_string()),
            _ => Failure::solver(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::input(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let echo = std::env::args().skip(1).collect::<Vec<_>>().join(" ");
    match run(cli.command, &echo, started) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            if let Some(report) = f.report {
                // An invariance failure still documents its witness.
                print!("{}", report.to_json());
            }
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command, echo: &str, started: Instant) -> Result<(), Failure> {
    match command {
        Command::Verify { system, report } => cmd_verify(&system, report, echo, started),
        Command::FindReleq {
            system,
            x0,
            xi0,
            pin_momentum,
            allow_trivial,
            verify_horizon,
            dt,
            deviation_tol,
            out,
            report,
        } => cmd_find_releq(
            &system,
            x0,
            xi0,
            pin_momentum,
            allow_trivial,
            verify_horizon,
            dt,
            deviation_tol,
            out,
            report,
            echo,
            started,
        ),
        Command::SliceReport { system, releq, report } => {
            cmd_slice_report(&system, &releq, report, echo, started)
        }
        Command::FindRpo { system, releq, mode, eps, dt, csv, svg, coords, report } => {
            cmd_find_rpo(&system, &releq, mode, eps, dt, csv, svg, &coords, report, echo, started)
        }
        Command::Continue { system, releq, mode, eps_grid, dt, csv, svg, report } => {
            cmd_continue(&system, &releq, mode, &eps_grid, dt, csv, svg, report, echo, started)
        }
        Command::CountFamilies { system, releq, eps, dt, report } => {
            cmd_count_families(&system, &releq, eps, dt, report, echo, started)
        }
        Command::EmitPlot { kind, csv, svg, coords, report } => {
            cmd_emit_plot(kind, &csv, &svg, coords.as_deref(), report, echo, started)
        }
    }
}

/// Loads the system and its tolerance table, collecting warnings.
fn load(system_arg: &str) -> Result<(SymmetricSystem<f64>, Tolerances, Vec<String>), Failure> {
    let def = load_system(system_arg)?;
    let mut warnings = Vec::new();
    if def.experimental() {
        warnings.push(format!("system '{}' is experimental", def.name));
    }
    let (sys, tol) = def.build()?;
    Ok((sys, tol, warnings))
}

fn emit_report(report: &Report, path: Option<PathBuf>) -> Result<(), Failure> {
    let json = report.to_json();
    match path {
        Some(p) => write_atomic(&p, &json)?,
        None => print!("{json}"),
    }
    Ok(())
}

fn finish(report: Report, path: Option<PathBuf>, started: Instant) -> Result<(), Failure> {
    let mut report = report;
    report.timings = Timings { total_ms: started.elapsed().as_secs_f64() * 1e3 };
    emit_report(&report, path)
}

fn cmd_verify(
    system_arg: &str,
    report_path: Option<PathBuf>,
    echo: &str,
    started: Instant,
) -> Result<(), Failure> {
    let def = load_system(system_arg)?;
    let mut warnings = Vec::new();
    if def.experimental() {
        warnings.push(format!("system '{}' is experimental", def.name));
    }
    let tol = def.tolerances.clone().unwrap_or_default();

    // Invariance failures still emit a report documenting the witness.
    let (sys, _) = match def.build() {
        Ok(v) => v,
        Err(DefError::NotInvariant { witness }) => {
            let report = Report {
                command: echo.to_string(),
                system: def.name.clone(),
                tolerances: tol,
                results: ReportResults::Verify {
                    invariant: false,
                    witness: Some(witness.clone()),
                    identities: vec![],
                },
                pass: false,
                warnings,
                timings: Timings { total_ms: started.elapsed().as_secs_f64() * 1e3 },
            };
            emit_report(&report, report_path)?;
            return Err(Failure {
                code: 4,
                message: format!("invariance failure: {witness}"),
                report: None,
            });
        }
        Err(e) => return Err(e.into()),
    };

    let invariant = check_invariance(sys.hamiltonian(), sys.moment(), &tol)
        .map_err(|e| Failure::input(e.to_string()))?
        .is_ok();
    let identities = structural_identities(&sys);
    let all_pass = invariant && identities.iter().all(|c| c.pass);

    let report = Report {
        command: echo.to_string(),
        system: sys.label().to_string(),
        tolerances: tol,
        results: ReportResults::Verify { invariant, witness: None, identities },
        pass: all_pass,
        warnings,
        timings: Timings::default(),
    };
    finish(report, report_path, started)?;
    if all_pass {
        Ok(())
    } else {
        Err(Failure::invariance("structural identity check failed"))
    }
}

/// The exact identities every well-formed action satisfies.
fn structural_identities(sys: &SymmetricSystem<f64>) -> Vec<IdentityCheck> {
    let mut checks = Vec::new();
    let n = sys.dof();
    let k = sys.torus_dim();
    let j = canonical_j::<f64>(n);

    // X_{Phi_i} = A_i z as exact polynomials.
    let mut field_ok = true;
    for (a, phi) in sys.action().generators().iter().zip(sys.moment().components()) {
        let field = match hamiltonian_vector_field(phi) {
            Ok(f) => f,
            Err(_) => {
                field_ok = false;
                break;
            }
        };
        for r in 0..2 * n {
            let mut row = Polynomial::zero(2 * n);
            for c in 0..2 * n {
                if a[(r, c)] != 0.0 {
                    let v = Polynomial::monomial(2 * n, a[(r, c)], &[(c, 1)]).unwrap();
                    row = row.add(&v).unwrap();
                }
            }
            if field[r] != row {
                field_ok = false;
            }
        }
    }
    checks.push(IdentityCheck { name: "moment-generates-action".into(), pass: field_ok });

    let mut commute_ok = true;
    for i in 0..k {
        for l in (i + 1)..k {
            let b = sys.moment().components()[i]
                .poisson_bracket(&sys.moment().components()[l])
                .map(|p| p.is_zero())
                .unwrap_or(false);
            commute_ok &= b;
        }
    }
    checks.push(IdentityCheck { name: "moment-components-commute".into(), pass: commute_ok });

    let mut inf_symp = true;
    for a in sys.action().generators() {
        let skew = a.transpose() * &j + &j * a;
        inf_symp &= skew.iter().all(|&v| v == 0.0);
    }
    checks.push(IdentityCheck {
        name: "generators-infinitesimally-symplectic".into(),
        pass: inf_symp,
    });

    // Probe a fixed phase: the group element must be symplectic and fix Phi.
    let theta = DVector::from_fn(k, |i, _| 0.3 + 0.17 * i as f64);
    let g = sys.action().group_element(&theta);
    let pulled = g.transpose() * &j * &g;
    let symp = (pulled - &j).abs().max() <= 1e-12;
    checks.push(IdentityCheck { name: "group-element-symplectic".into(), pass: symp });

    let z = DVector::from_fn(2 * n, |i, _| 0.1 + 0.05 * i as f64);
    let gz = &g * &z;
    let equiv = match (sys.moment().values(z.as_slice()), sys.moment().values(gz.as_slice())) {
        (Ok(a), Ok(b)) => (a - b).abs().max() <= 1e-12,
        _ => false,
    };
    checks.push(IdentityCheck { name: "moment-invariant-under-group".into(), pass: equiv });

    checks
}

#[allow(clippy::too_many_arguments)]
fn cmd_find_releq(
    system_arg: &str,
    x0: Vec<f64>,
    xi0: Vec<f64>,
    pin_momentum: Option<Vec<f64>>,
    allow_trivial: bool,
    verify_horizon: f64,
    dt: f64,
    deviation_tol: f64,
    out: Option<PathBuf>,
    report_path: Option<PathBuf>,
    echo: &str,
    started: Instant,
) -> Result<(), Failure> {
    let (sys, tol, warnings) = load(system_arg)?;
    let opts = ReleqOptions { pin_momentum: pin_momentum.map(DVector::from_vec), allow_trivial };
    let re = find_relative_equilibrium(
        &sys,
        &DVector::from_vec(x0),
        &DVector::from_vec(xi0),
        &opts,
        &tol,
    )?;
    let verification =
        verify_relative_equilibrium(&sys, &re, verify_horizon, dt, deviation_tol, &tol)
            .map_err(Failure::from)?;
    let record = ReleqRecord::new(&re, Some(VerificationRecord::new(&verification)));

    if let Some(out_path) = out {
        let mut json = serde_json::to_string_pretty(&record).expect("record serializes");
        json.push('\n');
        write_atomic(&out_path, &json)?;
    }

    let pass = verification.pass;
    let report = Report {
        command: echo.to_string(),
        system: sys.label().to_string(),
        tolerances: tol,
        results: ReportResults::Releq { releq: record },
        pass,
        warnings,
        timings: Timings::default(),
    };
    finish(report, report_path, started)
}

/// Rebuilds a `RelativeEquilibrium` from a record file, recomputing the
/// derived quantities so downstream results are reproducible from `x, xi`.
fn load_releq(
    path: &Path,
    sys: &SymmetricSystem<f64>,
    tol: &Tolerances,
) -> Result<RelativeEquilibrium<f64>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    let record: ReleqRecord = serde_json::from_str(&text)
        .map_err(|e| Failure::input(format!("malformed equilibrium record: {e}")))?;
    if record.x.len() != sys.phase_dim() {
        return Err(Failure::input(format!(
            "equilibrium record has {} coordinates, system needs {}",
            record.x.len(),
            sys.phase_dim()
        )));
    }
    if record.xi.len() != sys.torus_dim() {
        return Err(Failure::input(format!(
            "equilibrium record has {} velocity components, system needs {}",
            record.xi.len(),
            sys.torus_dim()
        )));
    }
    let x = record.x_vector();
    let xi = record.xi_vector();
    let isotropy = sys
        .action()
        .isotropy_algebra(&x, tol)
        .map_err(|e| Failure::input(e.to_string()))?;
    let residual = sys
        .augmented_gradient(&x, &xi)
        .map_err(|e| Failure::input(e.to_string()))?
        .norm();
    let mu = sys
        .moment()
        .values(x.as_slice())
        .map_err(|e| Failure::input(e.to_string()))?;
    Ok(RelativeEquilibrium { x, xi, mu, residual, isotropy, iterations: record.iterations })
}

fn cmd_slice_report(
    system_arg: &str,
    releq_path: &Path,
    report_path: Option<PathBuf>,
    echo: &str,
    started: Instant,
) -> Result<(), Failure> {
    let (sys, tol, mut warnings) = load(system_arg)?;
    let re = load_releq(releq_path, &sys, &tol)?;
    let data = build_slice_data(&sys, &re, &tol)?;
    let gauge = optimize_velocity_gauge(&sys, &re, &data.geometry, &tol)?;
    if !gauge.definite {
        warnings.push("no definite gauge found".into());
    }
    let record = SliceRecord::new(&data, Some(GaugeRecord::new(&gauge)));
    let report = Report {
        command: echo.to_string(),
        system: sys.label().to_string(),
        tolerances: tol,
        results: ReportResults::SliceReport { slice: record },
        pass: true,
        warnings,
        timings: Timings::default(),
    };
    finish(report, report_path, started)
}

/// Chooses the working velocity: the equilibrium's own if its slice Hessian
/// is definite, otherwise the gauge-search representative.
fn definite_velocity(
    sys: &SymmetricSystem<f64>,
    re: &RelativeEquilibrium<f64>,
    geometry: &SliceGeometry<f64>,
    tol: &Tolerances,
    warnings: &mut Vec<String>,
) -> Result<RelativeEquilibrium<f64>, Failure> {
    let own = slice_hessian(sys, &re.x, &re.xi, geometry, tol)?;
    if own.inertia.is_positive_definite() {
        return Ok(re.clone());
    }
    let gauge = optimize_velocity_gauge(sys, re, geometry, tol)?;
    if !gauge.definite {
        return Err(Failure::input(
            "no definite gauge found: the slice Hessian is indefinite for every sampled velocity",
        ));
    }
    warnings.push("using gauge-shifted velocity for a definite slice Hessian".into());
    Ok(RelativeEquilibrium { xi: gauge.xi, ..re.clone() })
}

#[allow(clippy::too_many_arguments)]
fn cmd_find_rpo(
    system_arg: &str,
    releq_path: &Path,
    mode: usize,
    eps: f64,
    dt: f64,
    csv: Option<PathBuf>,
    svg: Option<PathBuf>,
    coords: &str,
    report_path: Option<PathBuf>,
    echo: &str,
    started: Instant,
) -> Result<(), Failure> {
    let (sys, tol, mut warnings) = load(system_arg)?;
    let re = load_releq(releq_path, &sys, &tol)?;
    let geometry = symplectic_slice(&sys, &re, &tol)?;
    let re = definite_velocity(&sys, &re, &geometry, &tol, &mut warnings)?;
    let hessian = slice_hessian(&sys, &re.x, &re.xi, &geometry, &tol)?;
    let seed = seed_from_slice(&sys, &re, &geometry, &hessian, mode, eps, &tol)?;
    let opts = ShootOptions::new(dt);
    let orbit = shoot(&sys, &re, &seed, &opts, &tol)?;

    if csv.is_some() || svg.is_some() {
        let invariants: Vec<Polynomial<f64>> = sys.moment().components().to_vec();
        let traj = flow::flow(sys.hamiltonian(), &invariants, &orbit.z0, orbit.period, dt, &tol)
            .map_err(|e| Failure::solver(e.to_string()))?;
        let thinned = thin_trajectory(traj, 1000);
        if let Some(csv_path) = &csv {
            let text = csvio::trajectory_csv(&thinned, sys.dof(), sys.torus_dim());
            write_atomic(csv_path, &text)?;
        }
        if let Some(svg_path) = &svg {
            let (ai, bi, alabel, blabel) = parse_coords(coords, sys.dof())?;
            let pts: Vec<(f64, f64)> = thinned.states.iter().map(|z| (z[ai], z[bi])).collect();
            let svg_text = line_plot(
                &pts,
                &format!("{} orbit projection", sys.label()),
                &alabel,
                &blabel,
                XScale::Linear,
            );
            write_atomic(svg_path, &svg_text)?;
        }
    }

    let report = Report {
        command: echo.to_string(),
        system: sys.label().to_string(),
        tolerances: tol,
        results: ReportResults::Rpo { orbit: OrbitRecord::new(&orbit) },
        pass: true,
        warnings,
        timings: Timings::default(),
    };
    finish(report, report_path, started)
}

fn thin_trajectory(traj: flow::Trajectory<f64>, max_rows: usize) -> flow::Trajectory<f64> {
    let len = traj.times.len();
    if len <= max_rows {
        return traj;
    }
    let stride = len.div_ceil(max_rows);
    let keep = |i: usize| i % stride == 0 || i == len - 1;
    flow::Trajectory {
        times: traj.times.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, &t)| t).collect(),
        states: traj
            .states
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, s)| s.clone())
            .collect(),
        h_values: traj
            .h_values
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, &v)| v)
            .collect(),
        invariant_values: traj
            .invariant_values
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, v)| v.clone())
            .collect(),
    }
}

/// Parses `q1,p2`-style coordinate pairs into state-vector indices.
fn parse_coords(spec: &str, n: usize) -> Result<(usize, usize, String, String), Failure> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 2 {
        return Err(Failure::input(format!("coords must be a pair like q1,p1, got '{spec}'")));
    }
    let idx = |name: &str| -> Result<usize, Failure> {
        let name = name.trim();
        if name.len() < 2 {
            return Err(Failure::input(format!("bad coordinate '{name}'")));
        }
        let (kind, num) = name.split_at(1);
        let j: usize =
            num.parse().map_err(|_| Failure::input(format!("bad coordinate '{name}'")))?;
        if j == 0 || j > n {
            return Err(Failure::input(format!("coordinate '{name}' out of range for n = {n}")));
        }
        match kind {
            "q" => Ok(j - 1),
            "p" => Ok(n + j - 1),
            _ => Err(Failure::input(format!("bad coordinate '{name}'"))),
        }
    };
    let a = idx(parts[0])?;
    let b = idx(parts[1])?;
    Ok((a, b, parts[0].trim().to_string(), parts[1].trim().to_string()))
}

/// Parses `lo:hi:logN`, `lo:hi:linN`, or a comma list of levels.
fn parse_eps_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(Failure::input(format!("bad grid spec '{spec}'")));
        }
        let lo: f64 =
            parts[0].parse().map_err(|_| Failure::input(format!("bad grid bound '{}'", parts[0])))?;
        let hi: f64 =
            parts[1].parse().map_err(|_| Failure::input(format!("bad grid bound '{}'", parts[1])))?;
        let (log, count_text) = if let Some(stripped) = parts[2].strip_prefix("log") {
            (true, stripped)
        } else if let Some(stripped) = parts[2].strip_prefix("lin") {
            (false, stripped)
        } else {
            return Err(Failure::input(format!(
                "grid kind must be logN or linN, got '{}'",
                parts[2]
            )));
        };
        let count: usize = count_text
            .parse()
            .map_err(|_| Failure::input(format!("bad grid count '{count_text}'")))?;
        if count < 1 || lo <= 0.0 || hi <= lo {
            return Err(Failure::input(format!(
                "grid spec '{spec}' must satisfy 0 < lo < hi, N >= 1"
            )));
        }
        if count == 1 {
            return Ok(vec![lo]);
        }
        let mut grid = Vec::with_capacity(count);
        for i in 0..count {
            let f = i as f64 / (count - 1) as f64;
            let v = if log {
                10f64.powf(lo.log10() + f * (hi.log10() - lo.log10()))
            } else {
                lo + f * (hi - lo)
            };
            grid.push(v);
        }
        Ok(grid)
    } else {
        let mut grid = Vec::new();
        for part in spec.split(',') {
            let v: f64 = part
                .trim()
                .parse()
                .map_err(|_| Failure::input(format!("bad grid value '{part}'")))?;
            if v <= 0.0 {
                return Err(Failure::input("grid levels must be positive"));
            }
            grid.push(v);
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Failure::input("grid levels must increase"));
        }
        Ok(grid)
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_continue(
    system_arg: &str,
    releq_path: &Path,
    mode: usize,
    eps_grid_spec: &str,
    dt: f64,
    csv: Option<PathBuf>,
    svg: Option<PathBuf>,
    report_path: Option<PathBuf>,
    echo: &str,
    started: Instant,
) -> Result<(), Failure> {
    let (sys, tol, mut warnings) = load(system_arg)?;
    let re = load_releq(releq_path, &sys, &tol)?;
    let grid = parse_eps_grid(eps_grid_spec)?;
    let geometry = symplectic_slice(&sys, &re, &tol)?;
    let re = definite_velocity(&sys, &re, &geometry, &tol, &mut warnings)?;
    let hessian = slice_hessian(&sys, &re.x, &re.xi, &geometry, &tol)?;
    let opts = ShootOptions::new(dt);
    let family = continue_family(&sys, &re, &geometry, &hessian, mode, &grid, &opts, &tol)?;
    if family.orbits.len() < grid.len() {
        warnings.push(format!(
            "family truncated: {} of {} levels converged",
            family.orbits.len(),
            grid.len()
        ));
    }

    if let Some(csv_path) = &csv {
        write_atomic(csv_path, &csvio::family_csv(&family, sys.torus_dim()))?;
    }
    if let Some(svg_path) = &svg {
        let pts: Vec<(f64, f64)> = family.orbits.iter().map(|o| (o.eps, o.period)).collect();
        let svg_text = line_plot(
            &pts,
            &format!("{} period vs level, mode {mode}", sys.label()),
            "eps",
            "T",
            XScale::Log10,
        );
        write_atomic(svg_path, &svg_text)?;
    }

    let record = FamilyRecord::new(&family);
    let pass = record.continuous && family.orbits.len() == grid.len();
    let report = Report {
        command: echo.to_string(),
        system: sys.label().to_string(),
        tolerances: tol,
        results: ReportResults::Continue { family: record },
        pass,
        warnings,
        timings: Timings::default(),
    };
    finish(report, report_path, started)
}

fn cmd_count_families(
    system_arg: &str,
    releq_path: &Path,
    eps: f64,
    dt: f64,
    report_path: Option<PathBuf>,
    echo: &str,
    started: Instant,
) -> Result<(), Failure> {
    let (sys, tol, mut warnings) = load(system_arg)?;
    let re = load_releq(releq_path, &sys, &tol)?;
    let geometry = symplectic_slice(&sys, &re, &tol)?;
    let re = definite_velocity(&sys, &re, &geometry, &tol, &mut warnings)?;
    let hessian = slice_hessian(&sys, &re.x, &re.xi, &geometry, &tol)?;
    let opts = ShootOptions::new(dt);
    let outcome = count_distinct_families(&sys, &re, &geometry, &hessian, eps, &opts, &tol)?;
    if outcome.deficient {
        warnings.push(format!(
            "family count {} is below the expected bound {}",
            outcome.count, outcome.expected
        ));
    }
    let certificates = outcome
        .certificates
        .iter()
        .map(|(o, s)| CertificateRecord {
            orbit: OrbitRecord::new(o),
            signature: SignatureRecord::new(s),
        })
        .collect();
    let report = Report {
        command: echo.to_string(),
        system: sys.label().to_string(),
        tolerances: tol,
        results: ReportResults::CountFamilies {
            count: outcome.count,
            expected: outcome.expected,
            deficient: outcome.deficient,
            certificates,
            failed_modes: outcome.failed_modes,
        },
        pass: true,
        warnings,
        timings: Timings::default(),
    };
    finish(report, report_path, started)
}

fn cmd_emit_plot(
    kind: PlotKind,
    csv_path: &Path,
    svg_path: &Path,
    coords: Option<&str>,
    report_path: Option<PathBuf>,
    echo: &str,
    started: Instant,
) -> Result<(), Failure> {
    let text = std::fs::read_to_string(csv_path)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", csv_path.display())))?;
    let (points, title, xl, yl, scale) = match kind {
        PlotKind::TVsEps => {
            let pts = csvio::parse_columns(&text, "eps", "T")
                .ok_or_else(|| Failure::input("CSV lacks eps/T columns"))?;
            (pts, "period vs level".to_string(), "eps".to_string(), "T".to_string(), XScale::Log10)
        }
        PlotKind::Orbit => {
            let spec =
                coords.ok_or_else(|| Failure::input("--coords required for orbit plots"))?;
            let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(Failure::input("coords must be a pair like q1,p1"));
            }
            let pts = csvio::parse_columns(&text, parts[0], parts[1])
                .ok_or_else(|| Failure::input(format!("CSV lacks columns {spec}")))?;
            (
                pts,
                "orbit projection".to_string(),
                parts[0].to_string(),
                parts[1].to_string(),
                XScale::Linear,
            )
        }
    };
    let svg_text = line_plot(&points, &title, &xl, &yl, scale);
    write_atomic(svg_path, &svg_text)?;

    let report = Report {
        command: echo.to_string(),
        system: String::new(),
        tolerances: Tolerances::default(),
        results: ReportResults::Plot {
            svg_path: svg_path.display().to_string(),
            points: points.len(),
        },
        pass: true,
        warnings: vec![],
        timings: Timings::default(),
    };
    finish(report, report_path, started)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eps_grid_specs() {
        let g = parse_eps_grid("1e-4:1e-2:log5").unwrap();
        assert_eq!(g.len(), 5);
        assert!((g[0] - 1e-4).abs() < 1e-18);
        assert!((g[4] - 1e-2).abs() < 1e-12);
        assert!((g[2] - 1e-3).abs() < 1e-12);

        let g = parse_eps_grid("0.1:0.5:lin3").unwrap();
        assert_eq!(g.len(), 3);
        for (got, want) in g.iter().zip([0.1, 0.3, 0.5]) {
            assert!((got - want).abs() < 1e-12);
        }

        let g = parse_eps_grid("1e-4,2e-4,5e-4").unwrap();
        assert_eq!(g.len(), 3);

        assert!(parse_eps_grid("1e-2:1e-4:log5").is_err());
        assert!(parse_eps_grid("a:b:log5").is_err());
        assert!(parse_eps_grid("3e-4,1e-4").is_err());
    }

    #[test]
    fn coord_specs() {
        let (a, b, _, _) = parse_coords("q1,p1", 2).unwrap();
        assert_eq!((a, b), (0, 2));
        let (a, b, _, _) = parse_coords("q2,p2", 2).unwrap();
        assert_eq!((a, b), (1, 3));
        assert!(parse_coords("q3,p1", 2).is_err());
        assert!(parse_coords("x1,p1", 2).is_err());
        assert!(parse_coords("q1", 2).is_err());
    }
}
