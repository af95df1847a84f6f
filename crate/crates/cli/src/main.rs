mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qmetrix::fitting::{fit, FitFamily};
use qmetrix::laws::{law_point, LawSpectrum};
use qmetrix::optimizer::{maximize_qfi, sweep, ConstrainedProblem, EsConfig, OptimizationResult, SearchSpace};
use qmetrix::report::{
    csv_string, read_columns, read_csv, svg_line_chart, write_svg, LawRow, OptimizeRow, RunManifest, SampleRow, Series,
    TableKind,
};
use qmetrix::sampler::{convergence_check, run_sampler, SamplerConfig};
use qmetrix::states::cramer_rao_stddev;
use qmetrix::verify::{expected_failure, AcceptanceConfig, CRITERIA};
use qmetrix::{Generator, GeneratorKind, Measure};

use settings::{parse_grid, parse_list, Settings};

#[derive(Parser)]
#[command(name = "qmetrix", version, about = "Optimal QFI under entanglement constraints")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, env = "QMETRIX_THREADS", global = true)]
    threads: Option<usize>,
    /// Key-value config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate a closed-form optimal curve.
    Law(LawArgs),
    /// Maximize QFI at one target or independently at every grid target.
    Optimize(ProblemArgs),
    /// Warm-started sweep over a monotone target grid.
    Sweep(ProblemArgs),
    /// Bin random states by GM and record the largest QFI per bin.
    SampleGm(SampleArgs),
    /// Fit a curve family to two columns of a result table.
    Fit(FitArgs),
    /// Run the acceptance criteria.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct LawArgs {
    #[arg(long)]
    measure: Option<Measure>,
    /// Grid as from:step:to.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    /// `standard` or `unequal-d3`.
    #[arg(long)]
    spectrum: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct ProblemArgs {
    /// Number of parties.
    #[arg(long = "N", visible_alias = "parties")]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    /// pauli-z, spin-rescaled or custom.
    #[arg(long)]
    generator: Option<GeneratorKind>,
    /// Local eigenvalues for a custom generator, comma separated.
    #[arg(long)]
    eigenvalues: Option<String>,
    #[arg(long)]
    measure: Option<Measure>,
    #[arg(long)]
    target: Option<f64>,
    /// Grid as from:step:to.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    search_space: Option<SearchSpace>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    ranking_pressure: Option<f64>,
    #[arg(long)]
    stall_generations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Number of sampled states.
    #[arg(long)]
    nu: Option<u64>,
    #[arg(long = "N", visible_alias = "parties")]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    bin_width: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Compare two sampler tables instead of sampling.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    compare: Option<Vec<PathBuf>>,
    #[arg(long)]
    rel_tol: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// quadratic-inv-sqrt, quadratic-direct or rational-inv-sqrt.
    #[arg(long)]
    family: Option<FitFamily>,
    #[arg(long)]
    x: Option<String>,
    #[arg(long)]
    y: Option<String>,
    #[arg(long)]
    x_min: Option<f64>,
    #[arg(long)]
    x_max: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Comma-separated criterion numbers; all by default.
    #[arg(long)]
    criteria: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut s = Settings::load(cli.config.as_deref())?;
    let threads: Option<usize> = s.opt("threads", cli.threads)?;
    if let Some(t) = threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the worker pool")?;
    }
    // The thread count never changes results, so it is not part of the replay config.
    s.resolved.remove("threads");
    let start = Instant::now();
    let (name, outputs) = match cli.command {
        Command::Law(a) => ("law", cmd_law(&mut s, a)?),
        Command::Optimize(a) => ("optimize", cmd_problem(&mut s, a, false)?),
        Command::Sweep(a) => ("sweep", cmd_problem(&mut s, a, true)?),
        Command::SampleGm(a) => ("sample-gm", cmd_sample(&mut s, a)?),
        Command::Fit(a) => ("fit", cmd_fit(&mut s, a)?),
        Command::Verify(a) => return cmd_verify(&mut s, a),
    };
    s.check_unused(&["threads"])?;
    if let Some(primary) = outputs.first() {
        let seeds = s
            .resolved
            .get("seed")
            .and_then(|v| v.parse().ok())
            .into_iter()
            .collect();
        let mut m = RunManifest::new(name, s.resolved.clone(), seeds);
        for o in &outputs {
            m.add_output(o)?;
        }
        m.wall_time_s = start.elapsed().as_secs_f64();
        m.write(&RunManifest::sidecar(primary))?;
    }
    Ok(ExitCode::SUCCESS)
}

/// Writes `text` to `out`, or to stdout when no path is given.
fn emit(text: &str, out: Option<&Path>, outputs: &mut Vec<PathBuf>) -> Result<()> {
    match out {
        Some(p) => {
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
            outputs.push(p.to_path_buf());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn emit_svg(svg: Option<&Path>, chart: impl FnOnce() -> String, outputs: &mut Vec<PathBuf>) -> Result<()> {
    if let Some(p) = svg {
        write_svg(p, &chart())?;
        outputs.push(p.to_path_buf());
    }
    Ok(())
}

fn cmd_law(s: &mut Settings, a: LawArgs) -> Result<Vec<PathBuf>> {
    let measure = s.get("measure", a.measure, Measure::Ggm)?;
    let default_grid = match measure {
        Measure::Entropy => "0:0.1:1",
        _ => "0:0.05:0.5",
    };
    let grid = parse_grid(&s.get("grid", a.grid, default_grid.to_string())?)?;
    let d = s.get("d", a.d, 2)?;
    if !(2..=5).contains(&d) {
        bail!("--d must be in 2..=5");
    }
    let spectrum = match s.get("spectrum", a.spectrum, "standard".to_string())?.as_str() {
        "standard" => LawSpectrum::Standard,
        "unequal-d3" => {
            if d != 3 {
                bail!("--spectrum unequal-d3 needs --d 3");
            }
            LawSpectrum::UnequalD3
        }
        other => bail!("unknown spectrum `{other}`"),
    };
    let out = s.opt("out", a.out.map(|p| p.display().to_string()))?;
    let svg = s.opt("svg", a.svg.map(|p| p.display().to_string()))?;
    let mut rows = Vec::with_capacity(grid.len());
    for v in grid {
        let p = law_point(measure, v, spectrum)?;
        rows.push(LawRow {
            measure: measure.to_string(),
            value: v,
            q_opt: p.q_opt,
            stddev: p.stddev,
        });
    }
    let mut outputs = Vec::new();
    emit(
        &csv_string(TableKind::Law, &rows)?,
        out.as_deref().map(Path::new),
        &mut outputs,
    )?;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.value, r.stddev)).collect();
    emit_svg(
        svg.as_deref().map(Path::new),
        || {
            svg_line_chart(
                "optimal precision",
                &measure.to_string(),
                "stddev",
                &[Series {
                    label: "law",
                    points: &pts,
                }],
            )
        },
        &mut outputs,
    )?;
    Ok(outputs)
}

fn build_generator(
    s: &mut Settings,
    n: Option<usize>,
    d: Option<usize>,
    kind: Option<GeneratorKind>,
    eig: Option<String>,
) -> Result<Generator> {
    let n = s.get("N", n, 2)?;
    let eig = s.opt("eigenvalues", eig)?;
    let custom = eig.as_deref().map(parse_list).transpose()?;
    let d = s.get("d", d, custom.as_ref().map_or(2, Vec::len))?;
    let default_kind = if custom.is_some() {
        GeneratorKind::Custom
    } else if d == 2 {
        GeneratorKind::PauliZ
    } else {
        GeneratorKind::SpinRescaled
    };
    let kind = s.get("generator", kind, default_kind)?;
    Ok(Generator::new(n, d, kind, custom.as_deref())?)
}

fn row_of(target: f64, seed: u64, r: &qmetrix::Result<OptimizationResult>) -> OptimizeRow {
    match r {
        Ok(r) => OptimizeRow {
            target,
            q_best: r.q_best,
            stddev: cramer_rao_stddev(r.q_best).unwrap_or(f64::NAN),
            residual: r.constraint_residual,
            generations: r.generations,
            feasible_fraction: r.feasible_fraction,
            seed,
            converged: r.converged,
        },
        Err(e) => {
            eprintln!("target {target}: {e}");
            OptimizeRow {
                target,
                q_best: f64::NAN,
                stddev: f64::NAN,
                residual: f64::NAN,
                generations: 0,
                feasible_fraction: 0.0,
                seed,
                converged: false,
            }
        }
    }
}

fn cmd_problem(s: &mut Settings, a: ProblemArgs, warm: bool) -> Result<Vec<PathBuf>> {
    let generator = build_generator(s, a.n, a.d, a.generator, a.eigenvalues)?;
    let measure = s.get("measure", a.measure, Measure::Ggm)?;
    let target = s.opt("target", a.target)?;
    let grid = s.opt("grid", a.grid)?;
    let targets = match (target, grid) {
        (Some(t), None) => vec![t],
        (None, Some(g)) => parse_grid(&g)?,
        (Some(_), Some(_)) => bail!("give either --target or --grid, not both"),
        (None, None) => bail!("one of --target or --grid is required"),
    };
    if warm && targets.len() < 2 {
        bail!("sweep needs a --grid with at least two targets");
    }
    let tol = s.get("tol", a.tol, 1e-6)?;
    let space = s.get("search-space", a.search_space, SearchSpace::FullSimplex)?;
    let defaults = EsConfig::default();
    let population = s.opt("population", a.population)?;
    let cfg = EsConfig {
        population,
        generations: s.get("generations", a.generations, defaults.generations)?,
        restarts: s.get("restarts", a.restarts, defaults.restarts)?,
        ranking_pressure: s.get("ranking-pressure", a.ranking_pressure, defaults.ranking_pressure)?,
        stall_generations: s.get("stall-generations", a.stall_generations, defaults.stall_generations)?,
        seed: s.seed(a.seed)?,
        ..defaults
    };
    cfg.validate()?;
    let out = s.opt("out", a.out.map(|p| p.display().to_string()))?;
    let svg = s.opt("svg", a.svg.map(|p| p.display().to_string()))?;
    let template = ConstrainedProblem::new(generator, measure, targets[0], tol, space)?;

    let results: Vec<(f64, qmetrix::Result<OptimizationResult>)> = if warm {
        sweep(&template, &targets, &cfg)?
    } else {
        targets
            .iter()
            .map(|&t| (t, template.with_target(t).and_then(|p| maximize_qfi(&p, &cfg))))
            .collect()
    };
    let rows: Vec<OptimizeRow> = results.iter().map(|(t, r)| row_of(*t, cfg.seed, r)).collect();
    let kind = if warm { TableKind::Sweep } else { TableKind::Optimize };
    let mut outputs = Vec::new();
    emit(&csv_string(kind, &rows)?, out.as_deref().map(Path::new), &mut outputs)?;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.target, r.stddev)).collect();
    emit_svg(
        svg.as_deref().map(Path::new),
        || {
            svg_line_chart(
                "optimized precision",
                &measure.to_string(),
                "stddev",
                &[Series {
                    label: "q_best",
                    points: &pts,
                }],
            )
        },
        &mut outputs,
    )?;
    Ok(outputs)
}

fn cmd_sample(s: &mut Settings, a: SampleArgs) -> Result<Vec<PathBuf>> {
    let out = s.opt("out", a.out.map(|p| p.display().to_string()))?;
    if let Some(files) = a.compare {
        let rel_tol = s.get("rel-tol", a.rel_tol, 0.05)?;
        let load = |p: &Path| -> Result<Vec<qmetrix::sampler::BinReport>> {
            let rows: Vec<SampleRow> =
                read_csv(p, &[TableKind::SampleGm]).with_context(|| format!("reading {}", p.display()))?;
            Ok(rows.iter().map(SampleRow::to_bin).collect())
        };
        let report = convergence_check(&load(&files[0])?, &load(&files[1])?, rel_tol)?;
        let mut text = String::from("k,q_a,q_b,rel_diff,exceeds\n");
        for b in &report.bins {
            let f = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                b.bin_index,
                f(b.q_a),
                f(b.q_b),
                f(b.rel_diff),
                b.exceeds
            ));
        }
        let mut outputs = Vec::new();
        emit(&text, out.as_deref().map(Path::new), &mut outputs)?;
        s.resolved.insert(
            "compare".into(),
            format!("{} {}", files[0].display(), files[1].display()),
        );
        return Ok(outputs);
    }
    let cfg = SamplerConfig {
        samples: s.get("nu", a.nu, 100_000)?,
        parties: s.get("N", a.n, 3)?,
        local_dim: s.get("d", a.d, 2)?,
        bin_width: s.get("bin-width", a.bin_width, 0.05)?,
        seed: s.seed(a.seed)?,
    };
    let svg = s.opt("svg", a.svg.map(|p| p.display().to_string()))?;
    let run = run_sampler(&cfg)?;
    if run.overflow > 0 {
        eprintln!("{} states had GM above the binned range", run.overflow);
    }
    let rows: Vec<SampleRow> = run.bins.iter().map(SampleRow::from_bin).collect();
    let mut outputs = Vec::new();
    emit(
        &csv_string(TableKind::SampleGm, &rows)?,
        out.as_deref().map(Path::new),
        &mut outputs,
    )?;
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.stddev.map(|sd| (0.5 * (r.gm_lo + r.gm_hi), sd)))
        .collect();
    emit_svg(
        svg.as_deref().map(Path::new),
        || {
            svg_line_chart(
                "sampled minimum stddev",
                "GM",
                "stddev",
                &[Series {
                    label: "bins",
                    points: &pts,
                }],
            )
        },
        &mut outputs,
    )?;
    Ok(outputs)
}

fn cmd_fit(s: &mut Settings, a: FitArgs) -> Result<Vec<PathBuf>> {
    let input: String = s.require("input", a.input.map(|p| p.display().to_string()))?;
    let family = s.get("family", a.family, FitFamily::RationalInvSqrt)?;
    let x = s.get("x", a.x, "target".to_string())?;
    let y = s.get("y", a.y, "stddev".to_string())?;
    let x_min = s.opt("x-min", a.x_min)?;
    let x_max = s.opt("x-max", a.x_max)?;
    let out = s.opt("out", a.out.map(|p| p.display().to_string()))?;
    let points: Vec<(f64, f64)> = read_columns(Path::new(&input), &x, &y)?
        .into_iter()
        .filter(|p| x_min.is_none_or(|m| p.0 >= m) && x_max.is_none_or(|m| p.0 <= m))
        .filter(|p| p.1.is_finite())
        .collect();
    let result = fit(&points, family)?;
    let mut text = serde_json::to_string_pretty(&result)?;
    text.push('\n');
    let mut outputs = Vec::new();
    emit(&text, out.as_deref().map(Path::new), &mut outputs)?;
    Ok(outputs)
}

fn cmd_verify(s: &mut Settings, a: VerifyArgs) -> Result<ExitCode> {
    let ids: Vec<u32> = match s.opt("criteria", a.criteria)? {
        Some(list) => list
            .split(',')
            .map(|t| t.trim().parse::<u32>().map_err(|e| anyhow!("criterion `{t}`: {e}")))
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    if let Some(bad) = ids.iter().find(|&&i| i == 0 || i as usize > CRITERIA.len()) {
        bail!("no criterion {bad}; valid range is 1..={}", CRITERIA.len());
    }
    let cfg = AcceptanceConfig::default();
    let mut unexpected = 0;
    for (id, criterion) in (1u32..).zip(CRITERIA) {
        if !ids.is_empty() && !ids.contains(&id) {
            continue;
        }
        match criterion(&cfg) {
            Ok(o) => {
                println!("{}", o.line());
                if !o.passed {
                    match expected_failure(id) {
                        Some(why) => println!("     expected failure: {why}"),
                        None => unexpected += 1,
                    }
                }
            }
            Err(e) => {
                println!("FAIL criterion {id:>2}: error: {e}");
                unexpected += 1;
            }
        }
    }
    Ok(if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
