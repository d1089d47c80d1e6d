use anyhow::{anyhow, bail, Context};
use capacitylab::bounds::{self, BoundTable, GridSpec};
use capacitylab::ehz::{self, EhzOptions};
use capacitylab::orbits;
use capacitylab::verify::{self, Level};
use capacitylab::BodySpec;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "capacitylab", version, about = "Symplectic capacity experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the EHZ capacity of a convex body.
    Ehz(EhzArgs),
    /// Scan closed characteristics on the boundary of B⁴(1) ∩ A⁻¹W⁴.
    Orbits(OrbitArgs),
    /// Tabulate the Gromov-width lower bounds against the upper bound t.
    Bounds(BoundArgs),
    /// Run the acceptance criteria.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Output directory; without it results go to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output formats, comma separated.
    #[arg(long, value_enum, value_delimiter = ',')]
    format: Vec<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Svg,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Svg => "svg",
        }
    }
}

#[derive(Args, Debug)]
struct EhzArgs {
    /// Body kind (ball4, ellipsoid, intersection, mt-image, al-scaled),
    /// an inline JSON spec, or a path to a JSON spec file.
    #[arg(long)]
    body: String,
    #[arg(long)]
    t: Option<f64>,
    /// Capacity radius of the ball.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    radii: Vec<f64>,
    #[arg(long = "L", alias = "l")]
    l: Option<f64>,
    #[arg(long, default_value_t = 256)]
    n_samples: usize,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct OrbitArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    t: Vec<f64>,
    /// Random boundary starts per scan.
    #[arg(long, default_value_t = verify::SCAN_SAMPLES)]
    n_samples: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct BoundArgs {
    /// `start:end:step`.
    #[arg(long, default_value = "0.01:0.99:0.01")]
    grid: String,
    /// Also solve the embedding problem at these t.
    #[arg(long, value_delimiter = ',')]
    t: Vec<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value = "quick")]
    level: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failures mapped onto the exit-code contract.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Numeric(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numeric(_) => 2,
        }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn numeric(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Numeric(e.into())
}

/// What a command produced: stdout text, files, and whether it converged.
struct Output {
    summary: String,
    files: Vec<(String, String)>,
    ok: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let e = match &f {
                Failure::Usage(e) | Failure::Numeric(e) => e,
            };
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let (out, formats, result) = match cli.command {
        Command::Ehz(a) => (a.common.out.clone(), a.common.format.clone(), cmd_ehz(&a)?),
        Command::Orbits(a) => (a.common.out.clone(), a.common.format.clone(), cmd_orbits(&a)?),
        Command::Bounds(a) => (a.common.out.clone(), a.common.format.clone(), cmd_bounds(&a)?),
        Command::Verify(a) => (a.out.clone(), vec![Format::Json], cmd_verify(&a)?),
    };
    emit(out.as_deref(), &formats, &result).map_err(usage)?;
    Ok(if result.ok { 0 } else { 2 })
}

/// Writes the selected files, or prints them when no directory is given.
/// Every file is staged under a temporary name and renamed only once all
/// writes have succeeded.
fn emit(out: Option<&Path>, formats: &[Format], result: &Output) -> anyhow::Result<()> {
    let wanted = |name: &str| formats.is_empty() || formats.iter().any(|f| name.ends_with(f.ext()));
    let files: Vec<&(String, String)> = result.files.iter().filter(|(n, _)| wanted(n)).collect();
    match out {
        None if formats.is_empty() => print!("{}", result.summary),
        None => {
            for (_, body) in files {
                print!("{body}");
                if !body.ends_with('\n') {
                    println!();
                }
            }
        }
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let mut staged = Vec::new();
            for (name, body) in &files {
                let tmp = dir.join(format!(".{name}.partial"));
                if let Err(e) = fs::write(&tmp, body) {
                    for (t, _) in &staged {
                        let _ = fs::remove_file(t);
                    }
                    return Err(e).with_context(|| format!("writing {}", tmp.display()));
                }
                staged.push((tmp, dir.join(name)));
            }
            for (tmp, dest) in staged {
                fs::rename(&tmp, &dest).with_context(|| format!("writing {}", dest.display()))?;
            }
            print!("{}", result.summary);
        }
    }
    Ok(())
}

fn check_t(t: f64) -> Result<(), Failure> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(usage(anyhow!("t = {t} must lie in (0, 1)")))
    }
}

fn body_spec(a: &EhzArgs) -> anyhow::Result<BodySpec> {
    let need_t = || a.t.ok_or_else(|| anyhow!("--body {} needs --t", a.body));
    Ok(match a.body.as_str() {
        "ball4" => BodySpec::Ball4 { r: a.r.unwrap_or(1.0) },
        "ellipsoid" => {
            if a.radii.is_empty() {
                bail!("--body ellipsoid needs --radii");
            }
            BodySpec::Ellipsoid { radii: a.radii.clone() }
        }
        "intersection" => BodySpec::Intersection { t: need_t()? },
        "mt-image" => BodySpec::MtImage {
            t: need_t()?,
            r: a.r.unwrap_or(1.0),
        },
        "al-scaled" => BodySpec::AlScaled {
            t: need_t()?,
            l: a.l.ok_or_else(|| anyhow!("--body al-scaled needs --L"))?,
        },
        s if s.trim_start().starts_with('{') => BodySpec::from_json(s)?,
        path => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("{path:?} is neither a body kind nor a readable file"))?;
            BodySpec::from_json(&text)?
        }
    })
}

fn cmd_ehz(a: &EhzArgs) -> Result<Output, Failure> {
    let spec = body_spec(a).map_err(usage)?;
    let body = spec.build().map_err(usage)?;
    if a.n_samples < ehz::MIN_SAMPLES {
        return Err(usage(anyhow!("--n-samples must be at least {}", ehz::MIN_SAMPLES)));
    }
    if a.restarts == 0 {
        return Err(usage(anyhow!("--restarts must be positive")));
    }
    let opts = EhzOptions::new(a.n_samples, a.restarts, a.common.seed);
    let res = ehz::ehz_capacity_with(&body, &opts).map_err(numeric)?;
    let mut summary = format!(
        "body {}\ncapacity = {:.6}\nN = {}, restarts = {}, seed = {}\ngradient norm {:.2e}, {}\n",
        spec.to_json(),
        res.capacity,
        a.n_samples,
        a.restarts,
        a.common.seed,
        res.grad_norm,
        if res.converged { "converged" } else { "NOT converged" },
    );
    if let BodySpec::Ellipsoid { radii } = &spec {
        if let Ok(exact) = ehz::ehz_ellipsoid_closed_form(radii) {
            summary.push_str(&format!("closed form min radius = {exact:.6}\n"));
        }
    }
    Ok(Output {
        summary,
        files: vec![
            ("ehz.json".into(), res.to_json()),
            ("ehz_loop.csv".into(), res.minimizer.to_csv()),
        ],
        ok: res.converged,
    })
}

fn cmd_orbits(a: &OrbitArgs) -> Result<Output, Failure> {
    for &t in &a.t {
        check_t(t)?;
    }
    if a.n_samples == 0 {
        return Err(usage(anyhow!("--n-samples must be positive")));
    }
    let mut summary = String::new();
    let mut files = Vec::new();
    for &t in &a.t {
        let scan = orbits::min_action_scan(t, a.n_samples, a.common.seed).map_err(numeric)?;
        summary.push_str(&format!(
            "t = {t}: min action {:.9} ({:?}), {} closed orbits, {} unclosed\n  glide PLUS action {:.9}\n",
            scan.min_action,
            scan.witness.kind(),
            scan.closed.len(),
            scan.unclosed,
            scan.glide_plus,
        ));
        match scan.glide_minus {
            Some(m) => summary.push_str(&format!("  glide MINUS action {m:.9}\n")),
            None => summary.push_str("  no MINUS glide family for t >= 1/2\n"),
        }
        files.push((format!("orbits_t{t}.csv"), scan.witness.to_csv()));
        files.push((format!("orbits_t{t}.json"), scan.summary_json()));
    }
    Ok(Output {
        summary,
        files,
        ok: true,
    })
}

fn cmd_bounds(a: &BoundArgs) -> Result<Output, Failure> {
    let grid: GridSpec = a.grid.parse().map_err(usage)?;
    grid.within_unit().map_err(usage)?;
    for &t in &a.t {
        check_t(t)?;
    }
    let table = BoundTable::new(grid).map_err(numeric)?;
    let below = table.rows.iter().all(|r| r.below_upper());
    let dominated = table.rows.iter().filter(|r| !r.f_dominates()).count();
    let mut summary = format!(
        "{} rows on {}; every bound <= t: {below}; rows where f is not the largest lower bound: {dominated}\n",
        table.rows.len(),
        a.grid
    );
    let mut ok = below;
    let mut solutions = Vec::new();
    for &t in &a.t {
        let sol = bounds::solve_embedding(t).map_err(numeric)?;
        summary.push_str(&format!(
            "t = {t}: d1 = {:.9}, d2 = {:.9}, capacity {:.9}, f(t) = {:.9}, {}\n",
            sol.d1,
            sol.d2,
            sol.capacity,
            bounds::bound_f(t).map_err(numeric)?,
            if sol.converged { "converged" } else { "NOT converged" },
        ));
        ok &= sol.converged;
        solutions.push(sol);
    }
    let mut files = vec![
        ("bounds.csv".into(), table.to_csv()),
        ("bounds.json".into(), table.to_json()),
        ("bounds.svg".into(), table.to_svg()),
    ];
    if !solutions.is_empty() {
        let json = serde_json::to_string_pretty(&solutions).map_err(numeric)?;
        files.push(("embedding.json".into(), json));
    }
    Ok(Output { summary, files, ok })
}

fn cmd_verify(a: &VerifyArgs) -> Result<Output, Failure> {
    let level: Level = a.level.parse().map_err(|e: String| usage(anyhow!(e)))?;
    let report = verify::run(level, a.seed);
    let mut summary: String = report.criteria.iter().map(|c| c.line() + "\n").collect();
    summary.push_str(if report.all_passed { "all criteria passed\n" } else { "some criteria failed\n" });
    eprint!("{summary}");
    let json = report.to_json();
    Ok(Output {
        summary: json.clone() + "\n",
        files: vec![("verify.json".into(), json)],
        ok: report.all_passed,
    })
}
