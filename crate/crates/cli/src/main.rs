//! Command line front end: reads a scenario file, runs one stage and writes
//! machine-readable reports.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use skewtorus::cohomology::{solve_twisted, solve_untwisted, EquationKind};
use skewtorus::kam::{run_kam, KamReport, KamStatus};
use skewtorus::lattice::{cyclotomic_factors, higher_rank_window, is_ergodic, LatticeMatrix};
use skewtorus::reduction::{check_intersection_property, choose_subaction, rational_average_pipeline, RationalFiberData};
use skewtorus::{Error, Profile, Scenario, VERSION};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "skewtorus", version, about = "Solvers and conjugacies for commuting skew products on tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario file (JSON).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Directory for report files; reports go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for grid evaluations.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Frequency cutoff profile, overriding the scenario.
    #[arg(long, global = true, value_enum)]
    profile: Option<ProfileArg>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Ergodicity, higher-rank window, fiber data and intersection checks.
    Check,
    /// Solve the cohomological equations of the `solve` section.
    Solve,
    /// Run the KAM iteration on the perturbed pair.
    Run,
    /// Conjugate a perturbed action by extensions to its model.
    Pipeline,
    /// Summarize the reports found in `--out`.
    Report,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ProfileArg {
    Sharp,
    Smooth,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Sharp => Profile::Sharp,
            ProfileArg::Smooth => Profile::Smooth,
        }
    }
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
    stage: Option<String>,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_validation() { EXIT_VALIDATION } else { EXIT_NUMERICAL };
        match e {
            Error::Stage { stage, source } => Failure {
                code,
                message: source.to_string(),
                stage: Some(stage),
            },
            other => Failure {
                code,
                message: other.to_string(),
                stage: None,
            },
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure {
            code: EXIT_VALIDATION,
            message: format!("{e:#}"),
            stage: None,
        }
    }
}

/// A loaded scenario and the digest of its bytes.
struct Loaded {
    scenario: Scenario,
    sha256: String,
}

fn load(path: &Path) -> Result<Loaded, Failure> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = String::from_utf8(bytes.clone()).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let scenario = Scenario::from_json(&text)?;
    let sha256 = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    Ok(Loaded { scenario, sha256 })
}

/// Writes `name` into the output directory, or prints it when there is none.
struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    fn write(&self, name: &str, contents: &str) -> Result<(), Failure> {
        match &self.dir {
            Some(dir) => {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                let path = dir.join(name);
                fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
            }
            None => {
                if name.ends_with(".json") && name.starts_with("report") {
                    // A closed pipe downstream is not an error of ours.
                    let _ = std::io::stdout().lock().write_all(contents.as_bytes());
                }
            }
        }
        Ok(())
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).context("serializing report")?;
        text.push('\n');
        self.write(name, &text)
    }
}

fn envelope(command: &str, loaded: &Loaded, status: &str, body: Value) -> Value {
    json!({
        "tool": "skewtorus",
        "version": VERSION,
        "command": command,
        "scenario": loaded.scenario.name,
        "scenario_sha256": loaded.sha256,
        "status": status,
        "result": body,
    })
}

fn failure_body(f: &Failure) -> Value {
    json!({
        "stage": f.stage,
        "message": f.message,
        "validation": f.code == EXIT_VALIDATION,
    })
}

fn matrix_summary(m: &LatticeMatrix) -> Value {
    json!({
        "matrix": m.rows(),
        "charpoly": m.charpoly(),
        "cyclotomic_factors": cyclotomic_factors(m),
        "ergodic": is_ergodic(m),
    })
}

fn cmd_check(loaded: &Loaded) -> Result<Value, Failure> {
    let sc = &loaded.scenario;
    let (a1, a2) = (&sc.a1, &sc.a2);
    let commuting = a1.commutes_with(a2);
    let window = if commuting {
        serde_json::to_value(higher_rank_window(a1, a2, sc.check.window)?).context("serializing window")?
    } else {
        Value::Null
    };
    let mut body = json!({
        "a1": matrix_summary(a1),
        "a2": matrix_summary(a2),
        "commuting": commuting,
        "higher_rank": window,
    });
    if sc.theta1.is_some() || sc.theta2.is_some() {
        let (t1, t2) = sc.thetas();
        let data = RationalFiberData::new(&t1, &t2)?;
        let sub = if commuting {
            match choose_subaction(&data, a1, a2) {
                Ok(s) => serde_json::to_value(s).context("serializing subaction")?,
                Err(e) => json!({ "error": e.to_string() }),
            }
        } else {
            Value::Null
        };
        body["fiber_data"] = json!({
            "m0": data.m0,
            "sigma_count": data.sigma.len(),
            "lambda_count": data.lambda.len(),
            "delta_star": data.delta_star,
            "delta_star_value": data.delta_star.map(|r| r.to_f64()),
            "subaction": sub,
        });
    }
    if sc.dims.s > 0 && commuting {
        let pair = sc.extension_pair()?;
        let mut verdicts = Vec::new();
        for (i, g) in [&pair.alpha1, &pair.alpha2].into_iter().enumerate() {
            let v = check_intersection_property(g, sc.check.intersection_trials, sc.check.graph_amplitude, sc.check.seed.wrapping_add(i as u64))?;
            verdicts.push(v);
        }
        body["intersection"] = serde_json::to_value(verdicts).context("serializing verdicts")?;
    }
    Ok(body)
}

fn cmd_solve(loaded: &Loaded, sink: &Sink) -> Result<Value, Failure> {
    let sc = &loaded.scenario;
    let (kind, r, s, potential) = sc.cohomology_data()?;
    let solver = match kind {
        EquationKind::Twisted => solve_twisted,
        EquationKind::Untwisted => solve_untwisted,
    };
    let sol = solver(&r, &s, &sc.a1, &sc.a2, &sc.options.orbit, sc.gate)?;
    sink.json("omega.json", &sol.omega)?;
    Ok(json!({
        "kind": kind,
        "residual_a": sol.residual_a,
        "residual_b": sol.residual_b,
        "condition": sol.condition,
        "warnings": sol.warnings,
        "coefficients": sol.omega.len(),
        "recovery_error": potential.map(|p| p.max_coeff_diff(&sol.omega)),
    }))
}

/// Iteration table with a fixed column order.
fn iteration_csv(report: &KamReport) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "iteration",
        "cutoff",
        "eps0",
        "eps1",
        "delta1",
        "commutation_defect",
        "split_error",
        "average_term",
        "budget",
    ])?;
    for it in &report.iterations {
        let mut rec = vec![it.iteration.to_string()];
        for v in [
            it.cutoff,
            it.eps0,
            it.eps1,
            it.delta1,
            it.commutation_defect,
            it.split_error,
            it.average_term,
            it.budget,
        ] {
            rec.push(format!("{v:.16e}"));
        }
        w.write_record(&rec)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn cmd_run(loaded: &Loaded, sink: &Sink, profile: Option<Profile>) -> Result<(Value, bool), Failure> {
    let sc = &loaded.scenario;
    let system = sc.kam_system().map_err(|e| e.at_stage("setup"))?;
    let schedule = sc.schedule();
    let report = run_kam(&system, &schedule, &sc.options_with(profile)).map_err(|e| e.at_stage("kam"))?;
    sink.write("iterations.csv", &iteration_csv(&report).context("writing iteration table")?)?;
    sink.json("conjugacy.json", &report.composed)?;
    let ok = report.status == KamStatus::Converged;
    let body = json!({
        "status": report.status,
        "schedule": schedule,
        "initial_commutation_defect": system.commutation_defect,
        "iterations": report.iterations,
        "decay_ratios": report.decay_ratios(schedule.floor_tol),
        "final_eps": report.final_eps,
        "final_residuals": report.final_residuals,
        "total_budget": report.total_budget,
        "kappa": report.kappa,
        "mu0": report.mu0,
        "warnings": report.warnings,
    });
    Ok((body, ok))
}

fn cmd_pipeline(loaded: &Loaded, sink: &Sink, profile: Option<Profile>) -> Result<Value, Failure> {
    let sc = &loaded.scenario;
    let pair = sc.extension_pair().map_err(|e| e.at_stage("setup"))?;
    let out = rational_average_pipeline(&pair, &sc.pipeline_params(profile))?;
    sink.json("conjugacy.json", &out.conjugacy)?;
    Ok(serde_json::to_value(&out.report).context("serializing report")?)
}

fn cmd_report(dir: Option<&Path>, scenario: Option<&Path>) -> Result<(), Failure> {
    let dir = dir.ok_or_else(|| anyhow::anyhow!("`report` needs --out pointing at a report directory"))?;
    let expected = scenario.map(load).transpose()?.map(|l| l.sha256);
    let mut names: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("report") && n.ends_with(".json"))
        })
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(anyhow::anyhow!("no report files in {}", dir.display()).into());
    }
    for path in names {
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let hash = v["scenario_sha256"].as_str().unwrap_or("");
        let matches = match &expected {
            Some(h) if h != hash => " (scenario hash differs)",
            _ => "",
        };
        println!(
            "{}: {} {} [{}] version {}{}",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("?"),
            v["command"].as_str().unwrap_or("?"),
            v["scenario"].as_str().unwrap_or(""),
            v["status"].as_str().unwrap_or("?"),
            v["version"].as_str().unwrap_or("?"),
            matches
        );
        let r = &v["result"];
        for key in ["final_residuals", "final_eps", "residual_a", "residual_b", "message"] {
            if !r[key].is_null() {
                println!("  {key}: {}", r[key]);
            }
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build_global()
        .context("configuring the thread pool")?;
    if cli.command == Command::Report {
        cmd_report(cli.out.as_deref(), cli.scenario.as_deref())?;
        return Ok(0);
    }
    let path = cli
        .scenario
        .as_deref()
        .ok_or_else(|| anyhow::anyhow!("--scenario is required"))?;
    let loaded = load(path)?;
    let sink = Sink { dir: cli.out.clone() };
    let profile = cli.profile.map(Profile::from);
    let (name, result) = match cli.command {
        Command::Check => ("check", cmd_check(&loaded).map(|b| (b, true))),
        Command::Solve => ("solve", cmd_solve(&loaded, &sink).map(|b| (b, true))),
        Command::Run => ("run", cmd_run(&loaded, &sink, profile)),
        Command::Pipeline => ("pipeline", cmd_pipeline(&loaded, &sink, profile).map(|b| (b, true))),
        Command::Report => unreachable!(),
    };
    let file = format!("report_{name}.json");
    match result {
        Ok((body, ok)) => {
            let status = if ok { "ok" } else { "not-converged" };
            sink.json(&file, &envelope(name, &loaded, status, body))?;
            Ok(if ok { 0 } else { EXIT_NUMERICAL })
        }
        Err(f) => {
            sink.json(&file, &envelope(name, &loaded, "error", failure_body(&f)))?;
            Err(f)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            match &f.stage {
                Some(stage) => eprintln!("error [{stage}]: {}", f.message),
                None => eprintln!("error: {}", f.message),
            }
            ExitCode::from(f.code)
        }
    }
}
