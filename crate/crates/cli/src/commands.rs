use std::fmt;
use std::fs;
use std::path::Path;

use skorokhod::fields::extract_barriers;
use skorokhod::io::{self, DelayFile, FieldFile};
use skorokhod::mc::{simulate, tv_distance};
use skorokhod::multimarginal::{default_tol_eq, diff_against_field, interpolating_potentials, recover_barriers, solve_chain};
use skorokhod::osp::verify_switching;
use skorokhod::scaling::{convergence_experiment, ContinuousProblemSpec};
use skorokhod::{
    propagate, solve, BarrierKind, DelaySpec, LatticeMeasure, Mode, Problem, Rational, Scalar, SolverOptions,
    StoppingField, TimeIndex,
};

use crate::{BarrierSide, ChainArgs, Command, ConvergeArgs, ExportArgs, ExportFormat, SimulateArgs, SolveArgs, StartArgs, VerifyArgs};

/// Bad input exits with 1, a failed check with 2.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Failed(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Failed(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Failed(m) => f.write_str(m),
        }
    }
}

impl From<skorokhod::Error> for CliError {
    fn from(e: skorokhod::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

macro_rules! dispatch {
    ($mode:expr, $f:ident ( $($arg:expr),* )) => {
        match $mode {
            Mode::Rational => $f::<Rational>($($arg),*),
            Mode::Float => $f::<f64>($($arg),*),
        }
    };
}

pub fn run(command: Command) -> CliResult {
    match command {
        Command::Solve(a) => dispatch!(a.mode, solve_cmd(&a)),
        Command::Chain(a) => dispatch!(a.mode, chain_cmd(&a)),
        Command::Verify(a) => {
            let file: FieldFile = io::read_json(&a.field)?;
            dispatch!(a.mode.or(file.mode).unwrap_or(Mode::Rational), verify_cmd(&a, &file))
        }
        Command::Simulate(a) => {
            let file: FieldFile = io::read_json(&a.field)?;
            dispatch!(a.mode.or(file.mode).unwrap_or(Mode::Rational), simulate_cmd(&a, &file))
        }
        Command::Converge(a) => dispatch!(a.mode, converge_cmd(&a)),
        Command::Export(a) => {
            let file: FieldFile = io::read_json(&a.field)?;
            dispatch!(a.mode.or(file.mode).unwrap_or(Mode::Rational), export_cmd(&a, &file))
        }
    }
}

fn write_text(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn field_json<S: Scalar>(field: &StoppingField<S>) -> CliResult<String> {
    Ok(io::json_text(&io::field_to_file(field))?)
}

fn delay_spec<S: Scalar>(
    delay: Option<&Path>,
    delay_t: Option<usize>,
    lambda: &LatticeMeasure<S>,
    time_step: &S,
) -> CliResult<DelaySpec<S>> {
    match (delay, delay_t) {
        (Some(p), _) => {
            let f: DelayFile = io::read_json(p)?;
            Ok(io::delay_from_file(&f, lambda.grid(), time_step)?)
        }
        (None, Some(t0)) => Ok(DelaySpec::Deterministic(t0)),
        (None, None) => Ok(DelaySpec::none()),
    }
}

fn load_start<S: Scalar>(start: &StartArgs, time_step: &S) -> CliResult<(LatticeMeasure<S>, DelaySpec<S>)> {
    let lambda = io::read_measure::<S>(&start.lambda)?;
    let delay = delay_spec(start.delay.as_deref(), start.delay_t, &lambda, time_step)?;
    Ok((lambda, delay))
}

/// Exact Root runs reach a zero residual; Rost residuals only decay
/// geometrically, so they get a small positive default in both modes.
fn default_tol<S: Scalar>(kind: BarrierKind) -> f64 {
    match (S::MODE, kind) {
        (Mode::Rational, BarrierKind::Root) => 0.0,
        _ => 1e-12,
    }
}

fn solve_cmd<S: Scalar>(a: &SolveArgs) -> CliResult {
    let time_step = S::parse_str(&a.time_step)?;
    let (lambda, delay) = load_start::<S>(&a.start, &time_step)?;
    let mu = io::read_measure::<S>(&a.mu)?;
    let problem = Problem::new(lambda, mu).with_delay(delay).with_time_step(time_step);
    let opts = SolverOptions {
        tol: a.tol.unwrap_or_else(|| default_tol::<S>(a.kind)),
        max_horizon: a.max_horizon,
        min_horizon: a.min_horizon,
    };
    let sol = solve(&problem, a.kind, &opts)?;
    write_text(a.out_field.as_deref(), &field_json(&sol.field)?)?;
    if let Some(p) = &a.out_trace {
        fs::write(p, sol.trace.to_csv())?;
    }
    let d = &sol.diagnostics;
    eprintln!(
        "kind={} mode={} horizon={} residual={} converged={}",
        a.kind,
        d.mode,
        d.horizon,
        sol.trace.residual().to_text(),
        d.converged
    );
    if !d.converged {
        return Err(CliError::Failed(format!("residual {} above tolerance {}", d.residual, opts.tol)));
    }
    Ok(())
}

fn chain_cmd<S: Scalar>(a: &ChainArgs) -> CliResult {
    let time_step = S::parse_str(&a.time_step)?;
    let (lambda, delay) = load_start::<S>(&a.start, &time_step)?;
    let measures = a.mu.iter().map(|p| io::read_measure::<S>(p)).collect::<Result<Vec<_>, _>>()?;
    let opts = SolverOptions {
        tol: a.tol.unwrap_or_else(|| default_tol::<S>(a.kind)),
        max_horizon: a.max_horizon,
        min_horizon: 0,
    };
    let mut chain = solve_chain(&lambda, &delay, &measures, a.kind, &time_step, &opts)?;
    // Potentials need every stage materialized up to `tmax`.
    let longest = chain.stages.iter().map(|s| s.diagnostics.horizon).max().unwrap_or(0);
    let tmax = a.tmax.unwrap_or(longest);
    if chain.stages.iter().any(|s| s.diagnostics.horizon < tmax) {
        let opts = SolverOptions { min_horizon: tmax, ..opts.clone() };
        chain = solve_chain(&lambda, &delay, &measures, a.kind, &time_step, &opts)?;
    }
    fs::create_dir_all(&a.out_dir)?;
    for (k, stage) in chain.stages.iter().enumerate() {
        let k = k + 1;
        fs::write(a.out_dir.join(format!("stage{k}.field.json")), field_json(&stage.field)?)?;
        fs::write(a.out_dir.join(format!("stage{k}.trace.csv")), stage.trace.to_csv())?;
        eprintln!(
            "stage={k} horizon={} residual={} converged={}",
            stage.diagnostics.horizon,
            stage.trace.residual().to_text(),
            stage.diagnostics.converged
        );
    }
    let window = match a.window {
        Some(w) => w.range(),
        None => measures.last().and_then(|m| m.padded_window(2)).ok_or(skorokhod::Error::EmptyMeasure)?,
    };
    let family = interpolating_potentials(&chain, window.clone(), tmax)?;
    fs::write(a.out_dir.join("potentials.csv"), family.to_csv())?;
    let recovered = recover_barriers(&family, a.kind, default_tol_eq::<S>(&window));
    let mut ok = chain.converged();
    for (k, (set, stage)) in recovered.iter().zip(&chain.stages).enumerate() {
        let k = k + 1;
        fs::write(a.out_dir.join(format!("recovered{k}.csv")), set.to_csv())?;
        match a.kind {
            BarrierKind::Root => {
                let diff = diff_against_field(k, set, &stage.field);
                eprintln!(
                    "stage={k} recovered_only={} solver_only={} outside_band={}",
                    diff.recovered_only.len(),
                    diff.solver_only.len(),
                    diff.outside_band.len()
                );
                ok &= diff.within_band();
            }
            // Rost recovery also marks cells that collect no local time
            // before the horizon, so only containment of `plus` is checked.
            BarrierKind::Rost => {
                let (plus, _) = extract_barriers(&stage.field)?;
                let missing = plus.cells.iter().filter(|&&(t, y)| t <= tmax && !set.contains(t, y)).count();
                eprintln!("stage={k} recovered={} plus_missing={missing}", set.len());
                ok &= missing == 0;
            }
        }
    }
    if ok {
        Ok(())
    } else {
        Err(CliError::Failed("chain did not converge or recovery disagreed with the stage fields".into()))
    }
}

fn verify_cmd<S: Scalar>(a: &VerifyArgs, file: &FieldFile) -> CliResult {
    let field = io::field_from_file::<S>(file)?;
    let (lambda, delay) = load_start::<S>(&a.start, field.time_step())?;
    let mu = io::read_measure::<S>(&a.mu)?;
    let problem = Problem::new(lambda, mu).with_delay(delay).with_time_step(field.time_step().clone());
    let window = match a.window {
        Some(w) => w.range(),
        None => problem.mu.padded_window(2).ok_or(skorokhod::Error::EmptyMeasure)?,
    };
    let rows = field.horizon().unwrap_or(0);
    let horizons: Vec<usize> = if a.horizons.is_empty() { (0..=rows).collect() } else { a.horizons.clone() };
    let exact = S::MODE == Mode::Rational;
    let within = |gap: f64, is_zero: bool| if exact { is_zero } else { gap <= a.tol };
    let mut failures = 0usize;
    let last = horizons.iter().copied().max().unwrap_or(0).max(rows);
    let trace = propagate(&problem.lambda, &problem.delay, &field, last)?;
    for &t in &horizons {
        let report = verify_switching(&problem, field.kind(), &field, t, window.clone(), a.tol)?;
        // Tanaka at the horizon: U_{beta_t} = V_t - l_t.
        let beta = trace.stopped_law(TimeIndex::At(t))?;
        let v = trace.delay().truncated_law(t);
        let mut tanaka_gap: f64 = 0.0;
        let mut tanaka_exact = true;
        for y in window.clone() {
            let gap = beta.potential_at(y) - (v.potential_at(y) - trace.local_time_at(t, y));
            tanaka_exact &= gap.is_zero();
            tanaka_gap = tanaka_gap.max(gap.abs().to_f64());
        }
        let tanaka_ok = within(tanaka_gap, tanaka_exact);
        println!(
            "T={t} switching_gap={} switching={} tanaka_gap={tanaka_gap} tanaka={}",
            report.max_abs_gap,
            verdict(report.pass),
            verdict(tanaka_ok)
        );
        failures += usize::from(!report.pass) + usize::from(!tanaka_ok);
    }
    if field.kind() == BarrierKind::Root && trace.residual().is_zero() {
        let alpha_x = trace.delay().alpha_x();
        let mut gap: f64 = 0.0;
        let mut all_zero = true;
        for y in window {
            let d = trace.local_time_at(last, y) - (alpha_x.potential_at(y) - problem.mu.potential_at(y));
            all_zero &= d.is_zero();
            gap = gap.max(d.abs().to_f64());
        }
        let ok = within(gap, all_zero);
        println!("local_time_gap={gap} local_time={}", verdict(ok));
        failures += usize::from(!ok);
    }
    if failures == 0 {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{failures} checks failed")))
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

fn simulate_cmd<S: Scalar>(a: &SimulateArgs, file: &FieldFile) -> CliResult {
    let field = io::field_from_file::<S>(file)?;
    let (lambda, delay) = load_start::<S>(&a.start, field.time_step())?;
    let cap = a.cap.unwrap_or_else(|| field.horizon().unwrap_or(0));
    let result = simulate(&lambda, &delay, &field, a.paths, a.seed, cap)?;
    write_text(a.out.as_deref(), &result.to_csv())?;
    eprintln!("paths={} stopped={} censored={}", result.n_paths, result.stopped_paths(), result.censored);
    if let Some(p) = &a.mu {
        let mu = io::read_measure::<S>(p)?;
        eprintln!("tv={}", tv_distance(&result, &mu));
    }
    Ok(())
}

fn converge_cmd<S: Scalar>(a: &ConvergeArgs) -> CliResult {
    let spec: ContinuousProblemSpec = io::read_json(&a.spec)?;
    let opts = SolverOptions::with_tol(a.tol);
    let report = convergence_experiment::<S>(&spec, &a.ns, &a.times, &opts, a.switching_tol)?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("report.csv"), report.to_csv())?;
    for (n, barrier) in &report.barriers {
        fs::write(a.out.join(format!("barrier_N{n}.csv")), barrier.to_csv())?;
    }
    let mut ok = report.d_r_decreasing();
    for r in &report.rows {
        eprintln!(
            "N={} horizon={} residual={} d_R_to_next={:?} switching_gap={}",
            r.n, r.horizon, r.residual, r.d_r_to_next, r.switching_gap
        );
        ok &= r.converged && r.switching_gap <= a.switching_tol;
    }
    if ok {
        Ok(())
    } else {
        Err(CliError::Failed("scaling trend or switching gaps out of bounds".into()))
    }
}

fn export_cmd<S: Scalar>(a: &ExportArgs, file: &FieldFile) -> CliResult {
    let field = io::field_from_file::<S>(file)?;
    let window = a.window.map_or_else(|| field.sites(), |w| w.range());
    let text = match a.format {
        ExportFormat::BarrierCsv => {
            let (plus, minus) = extract_barriers(&field)?;
            let mut set = match a.set {
                BarrierSide::Plus => plus,
                BarrierSide::Minus => minus,
            };
            set.cells.retain(|(_, x)| window.contains(x));
            set.to_csv()
        }
        ExportFormat::PotentialCsv => {
            let lambda_path = a
                .lambda
                .as_deref()
                .ok_or_else(|| CliError::Input("potential-csv needs --lambda".into()))?;
            let lambda = io::read_measure::<S>(lambda_path)?;
            let delay = delay_spec(a.delay.as_deref(), a.delay_t, &lambda, field.time_step())?;
            let horizon = field.horizon().unwrap_or(0);
            let trace = propagate(&lambda, &delay, &field, horizon)?;
            let mut out = String::from("t,site,value\n");
            for t in 0..=horizon {
                for (y, v) in trace.stopped_potential(TimeIndex::At(t), window.clone())?.iter() {
                    out.push_str(&format!("{t},{y},{}\n", v.to_text()));
                }
            }
            out
        }
    };
    write_text(a.out.as_deref(), &text)
}
