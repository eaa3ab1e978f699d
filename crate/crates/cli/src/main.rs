//! Billiard laboratory command line.
//!
//! Subcommands: `orbit`, `caustic`, `symmetry`, `cone`, `pencil`, `oracle`.
//! Exit codes: 0 pass, 1 invariant/verdict failure, 2 input error,
//! 3 numerical failure.

mod config;

use std::collections::BTreeMap;

use billiards::caustic::conservation_report_with;
use billiards::cone::{
    classify_partial_cone, cone_coefficients, conic_ode_residual, ClassifyOptions, ConeVerdict,
    ConicKind, IntegrationOptions,
};
use billiards::error::{Error, Result};
use billiards::flow::{orbit_with, MarchOptions, Trajectory};
use billiards::geom::{tangency_spectrum_with, SpectrumOptions};
use billiards::reflect::DerivativeMode;
use billiards::symmetry::is_l_symmetric;
use serde::Serialize;

const USAGE: &str = "\
usage: billiards <command> [--flag value ...]

commands:
  orbit     --table <t.json> --init \"px,..;vx,..\" --steps <n> --out <traj.csv>
            [--max-chord <x>] [--t-max <x>]
  caustic   --traj <traj.csv> --pencil <spec> [--tol <x>] [--grid <n>] [--out <r.json>]
  symmetry  --table <t.json> [--samples <n>] [--tol <x>] [--mode analytic|fd]
            [--seed <n>] [--out <r.json>]
  cone      --table <t.json> --point \"x,y,z\" [--mode analytic|fd]
            [--steps <n>] [--step-size <x>] [--accept <x>] [--reject <x>] [--out <r.json>]
  pencil    --pencil <spec> --line \"px,..;ux,..\" [--grid <n>] [--out <r.json>]
  oracle    --kind ellipse|hyperbola --params \"b,c,e,r1,r2,phi\" [--tol <x>] [--out <r.json>]

pencil <spec> is inline `a1,..,ad;r=<int>` or a JSON file `{\"a\":[..],\"r\":n}`.
exit codes: 0 pass, 1 verdict failure, 2 input error, 3 numerical failure.
";

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    std::process::exit(run(&args));
}

fn run(args: &[String]) -> i32 {
    if args.is_empty() {
        eprint!("{USAGE}");
        return 2;
    }
    let command = args[0].as_str();
    let result = match command {
        "orbit" => cmd_orbit(&args[1..]),
        "caustic" => cmd_caustic(&args[1..]),
        "symmetry" => cmd_symmetry(&args[1..]),
        "cone" => cmd_cone(&args[1..]),
        "pencil" => cmd_pencil(&args[1..]),
        "oracle" => cmd_oracle(&args[1..]),
        "--help" | "-h" | "help" => {
            print!("{USAGE}");
            return 0;
        }
        other => {
            eprintln!("unknown command `{other}`");
            eprint!("{USAGE}");
            return 2;
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Input(_)
        | Error::Parse { .. }
        | Error::Eval { .. }
        | Error::DegenerateMember { .. } => 2,
        Error::SingularPoint
        | Error::LightLikeNormal
        | Error::GrazingHit
        | Error::Escape
        | Error::DegenerateSecondFundamentalForm
        | Error::DegenerateField
        | Error::Numerical(_) => 3,
    }
}

// ── Flag parsing ───────────────────────────────────────────────────────────

struct Flags {
    values: BTreeMap<String, String>,
}

impl Flags {
    fn parse(args: &[String], known: &[&str]) -> Result<Flags> {
        let mut values = BTreeMap::new();
        let mut i = 0;
        while i < args.len() {
            let key = args[i]
                .strip_prefix("--")
                .ok_or_else(|| Error::Input(format!("expected a --flag, found `{}`", args[i])))?;
            if !known.contains(&key) {
                return Err(Error::Input(format!("unknown flag `--{key}`")));
            }
            let value = args
                .get(i + 1)
                .ok_or_else(|| Error::Input(format!("flag --{key} needs a value")))?;
            if values.insert(key.to_string(), value.clone()).is_some() {
                return Err(Error::Input(format!("flag --{key} given twice")));
            }
            i += 2;
        }
        Ok(Flags { values })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Input(format!("missing required flag --{key}")))
    }

    fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(text) => text
                .parse()
                .map_err(|_| Error::Input(format!("bad value for --{key}: `{text}`"))),
        }
    }

    fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(text) => text
                .parse()
                .map_err(|_| Error::Input(format!("bad value for --{key}: `{text}`"))),
        }
    }
}

fn read_file(path: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read `{path}`: {e}")))
}

fn write_output(path: Option<&str>, contents: &str) -> Result<()> {
    match path {
        Some(path) => std::fs::write(path, contents)
            .map_err(|e| Error::Input(format!("cannot write `{path}`: {e}"))),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serialization");
    text.push('\n');
    text
}

fn derivative_mode(flags: &Flags) -> Result<DerivativeMode> {
    match flags.get("mode").unwrap_or("analytic") {
        "analytic" => Ok(DerivativeMode::Analytic),
        "fd" | "finite-difference" => Ok(DerivativeMode::FiniteDifference),
        other => Err(Error::Input(format!("bad --mode `{other}`"))),
    }
}

// ── Commands ───────────────────────────────────────────────────────────────

fn cmd_orbit(args: &[String]) -> Result<i32> {
    let flags = Flags::parse(
        args,
        &["table", "init", "steps", "out", "max-chord", "t-max"],
    )?;
    let table = config::TableConfig::parse(&read_file(flags.require("table")?)?)?.build()?;
    let (p0, v0) = config::parse_init(flags.require("init")?)?;
    let steps = flags.get_usize("steps", 100)?;
    let out = flags.require("out")?;
    let march = MarchOptions {
        max_chord: flags.get_f64("max-chord", MarchOptions::default().max_chord)?,
        t_max: flags.get_f64("t-max", MarchOptions::default().t_max)?,
    };
    let trajectory = orbit_with(&table, &p0, &v0, steps, Some(&march))?;
    std::fs::write(out, trajectory.to_csv())
        .map_err(|e| Error::Input(format!("cannot write `{out}`: {e}")))?;
    eprintln!(
        "status: {}, events: {}",
        trajectory.status.as_str(),
        trajectory.events.len()
    );
    Ok(0)
}

fn cmd_caustic(args: &[String]) -> Result<i32> {
    let flags = Flags::parse(args, &["traj", "pencil", "tol", "grid", "out"])?;
    let trajectory = Trajectory::from_csv(&read_file(flags.require("traj")?)?)?;
    let pencil = config::load_pencil(flags.require("pencil")?)?;
    let tol = flags.get_f64("tol", 1e-8)?;
    let options = SpectrumOptions {
        grid_points: flags.get_usize("grid", SpectrumOptions::default().grid_points)?,
        ..SpectrumOptions::default()
    };
    let report = conservation_report_with(&trajectory, &pencil, tol, &options)?;
    write_output(flags.get("out"), &to_json(&report))?;
    Ok(if report.pass { 0 } else { 1 })
}

fn cmd_symmetry(args: &[String]) -> Result<i32> {
    let flags = Flags::parse(args, &["table", "samples", "tol", "mode", "seed", "out"])?;
    let table = config::TableConfig::parse(&read_file(flags.require("table")?)?)?.build()?;
    let samples = flags.get_usize("samples", 200)?;
    let tol = flags.get_f64("tol", 1e-6)?;
    let seed = flags.get_usize("seed", 0)? as u64;
    let mode = derivative_mode(&flags)?;
    let report = is_l_symmetric(
        &table.surface,
        &table.field,
        &table.interior_point,
        samples,
        tol,
        mode,
        seed,
    )?;
    write_output(flags.get("out"), &to_json(&report))?;
    Ok(if report.symmetric { 0 } else { 1 })
}

fn cmd_cone(args: &[String]) -> Result<i32> {
    let flags = Flags::parse(
        args,
        &[
            "table",
            "point",
            "mode",
            "steps",
            "step-size",
            "accept",
            "reject",
            "out",
        ],
    )?;
    let table = config::TableConfig::parse(&read_file(flags.require("table")?)?)?.build()?;
    let point = config::parse_vector(flags.require("point")?)?;
    let mode = derivative_mode(&flags)?;
    let defaults = ClassifyOptions::default();
    let options = ClassifyOptions {
        integration: IntegrationOptions {
            steps: flags.get_usize("steps", defaults.integration.steps)?,
            step_size: flags.get_f64("step-size", defaults.integration.step_size)?,
            ..defaults.integration
        },
        accept: flags.get_f64("accept", defaults.accept)?,
        reject: flags.get_f64("reject", defaults.reject)?,
        min_points: defaults.min_points,
    };
    let coefficients = cone_coefficients(&table.surface, &table.field, &point, mode)?;
    let report = classify_partial_cone(&coefficients, &options)?;
    write_output(flags.get("out"), &to_json(&report))?;
    Ok(match report.verdict {
        ConeVerdict::QuadraticCone => 0,
        ConeVerdict::NonConic => 1,
        ConeVerdict::Inconclusive => 3,
    })
}

#[derive(Serialize)]
struct SpectrumReport {
    roots: Vec<SpectrumEntry>,
}

#[derive(Serialize)]
struct SpectrumEntry {
    lambda: f64,
    at_pole: bool,
}

fn cmd_pencil(args: &[String]) -> Result<i32> {
    let flags = Flags::parse(args, &["pencil", "line", "grid", "out"])?;
    let pencil = config::load_pencil(flags.require("pencil")?)?;
    let (p, u) = config::parse_init(flags.require("line")?)?;
    let line = billiards::geom::OrientedLine::new(p, u)?;
    let options = SpectrumOptions {
        grid_points: flags.get_usize("grid", SpectrumOptions::default().grid_points)?,
        ..SpectrumOptions::default()
    };
    let roots = tangency_spectrum_with(&pencil, &line, &options)?;
    let report = SpectrumReport {
        roots: roots
            .iter()
            .map(|r| SpectrumEntry {
                lambda: r.lambda,
                at_pole: r.at_pole,
            })
            .collect(),
    };
    write_output(flags.get("out"), &to_json(&report))?;
    Ok(0)
}

fn cmd_oracle(args: &[String]) -> Result<i32> {
    let flags = Flags::parse(args, &["kind", "params", "tol", "out"])?;
    let kind = match flags.require("kind")? {
        "ellipse" => ConicKind::Ellipse,
        "hyperbola" => ConicKind::Hyperbola,
        other => return Err(Error::Input(format!("bad --kind `{other}`"))),
    };
    let params = config::parse_vector(flags.require("params")?)?;
    if params.len() != 6 {
        return Err(Error::Input(
            "oracle needs six parameters `b,c,e,r1,r2,phi`".into(),
        ));
    }
    let tol = flags.get_f64("tol", 1e-9)?;
    let check = conic_ode_residual(
        params[0], params[1], params[2], params[3], params[4], params[5], kind,
    )?;
    write_output(flags.get("out"), &to_json(&check))?;
    let ks_pass = check
        .ks
        .map(|ks| ks.iter().all(|k| k.abs() <= tol))
        .unwrap_or(true);
    Ok(if check.max_residual <= tol && ks_pass {
        0
    } else {
        1
    })
}
