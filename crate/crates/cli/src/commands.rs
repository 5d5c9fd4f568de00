use std::fs;
use std::io::Write;
use std::path::Path;

use wsep::empirical::{build_chain_grid, verify_chain_grid, ChainGridReport, ChainSide};
use wsep::hermite::{moment_estimate, normalization_dn, weighted_coefficient_sup};
use wsep::montecarlo::{run_limit_experiment, run_moment_check, run_reduction_experiment};
use wsep::process::{generate_path, subordinate};
use wsep::{ConvergenceReport, CovarianceModel, ExperimentConfig, HermiteProfile, Subordination};

use crate::error::{CliError, CliResult};
use crate::options::{
    ChainArgs, CoefficientArgs, ConfigArgs, ExperimentArgs, ModelArgs, SimulateArgs, WeightArgs,
};

/// Writes a line to stdout, ignoring a closed pipe (e.g. `wsep ... | head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

const DEFAULT_HURST: f64 = 0.75;
const DEFAULT_DELTA: f64 = 3.0;
/// Above this many evaluation points the coefficient table is only written to CSV.
const PRINT_ROWS: usize = 12;

fn resolve_model(args: &ModelArgs, fallback: &CovarianceModel) -> CliResult<CovarianceModel> {
    let fallback_hurst = match fallback {
        CovarianceModel::Fgn { hurst } => *hurst,
        _ => DEFAULT_HURST,
    };
    let model = match args.model.as_deref() {
        None => match args.hurst {
            Some(hurst) => CovarianceModel::Fgn { hurst },
            None => fallback.clone(),
        },
        Some("fgn") => CovarianceModel::Fgn {
            hurst: args.hurst.unwrap_or(fallback_hurst),
        },
        Some(other) => {
            if args.hurst.is_some() {
                return Err(CliError::Usage("--hurst applies only to --model fgn".into()));
            }
            if other == "white" {
                CovarianceModel::White
            } else if let Some(file) = other.strip_prefix("explicit:") {
                CovarianceModel::Explicit {
                    lags: read_lags(Path::new(file))?,
                }
            } else {
                return Err(CliError::Usage(format!(
                    "unknown model `{other}` (expected fgn, white or explicit:<file>)"
                )));
            }
        }
    };
    model.validate()?;
    Ok(model)
}

fn read_lags(path: &Path) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|_| {
                CliError::Usage(format!(
                    "{}:{}: `{}` is not a number",
                    path.display(),
                    i + 1,
                    l.trim()
                ))
            })
        })
        .collect()
}

fn build_profile(g: Subordination, weight: &WeightArgs) -> CliResult<HermiteProfile> {
    let profile = HermiteProfile::detect(g, weight.delta.unwrap_or(DEFAULT_DELTA))?;
    Ok(match weight.lambda {
        Some(l) => profile.with_lambda_override(l)?,
        None => profile,
    })
}

fn lambda_line(profile: &HermiteProfile) -> String {
    if profile.lambda_overridden() {
        format!("lambda = {} (experimental override)", profile.lambda())
    } else {
        format!("lambda = {} (delta / 3)", profile.lambda())
    }
}

fn create_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let model = resolve_model(&args.model, &CovarianceModel::Fgn { hurst: DEFAULT_HURST })?;
    let g = args.model.g.clone().unwrap_or(Subordination::Identity);
    let profile = build_profile(g, &args.weight)?;
    let len = usize::try_from(args.n).map_err(|_| CliError::Usage("--n is too large".into()))?;
    let path = generate_path(&model, len, args.seed)?;
    let sample = subordinate(&path, profile.g());

    create_out(&args.out)?;
    let file = args.out.join("path.csv");
    let mut w = csv_writer(&file)?;
    w.write_record(["j", "x", "y"])?;
    for (j, (x, y)) in path.values.iter().zip(&sample.y).enumerate() {
        w.write_record([(j + 1).to_string(), x.to_string(), y.to_string()])?;
    }
    w.flush()?;

    let m = profile.rank();
    let moment = moment_estimate(profile.g(), profile.delta())?;
    say!("m = {m}");
    match model.memory_exponent() {
        Some(d) => say!("D = {d}  (mD = {})", m as f64 * d),
        None => say!("D = undefined (short memory)"),
    }
    say!("d_N = {}  (N = {len})", normalization_dn(&model, m, len)?);
    say!(
        "E|Y|^{} = {}  (quadrature error {:.1e}{})",
        moment.delta,
        moment.value,
        moment.quadrature_error,
        if moment.divergence_risk {
            ", heavy tail: moment may diverge"
        } else {
            ""
        }
    );
    say!("{}", lambda_line(&profile));
    say!("wrote {}", file.display());
    Ok(())
}

fn default_x_grid() -> Vec<f64> {
    (0..=320).map(|i| -8.0 + 0.05 * i as f64).collect()
}

pub fn coefficients(args: &CoefficientArgs) -> CliResult<()> {
    let profile = build_profile(args.g.clone(), &args.weight)?;
    let q_max = args.q as usize;
    let xs = if args.x.is_empty() {
        default_x_grid()
    } else {
        args.x.clone()
    };
    say!("m = {}", profile.rank());

    let mut table = Vec::with_capacity(xs.len());
    for &x in &xs {
        let row = (1..=q_max)
            .map(|q| profile.coefficient(q, x))
            .collect::<Result<Vec<_>, _>>()?;
        table.push(row);
    }

    create_out(&args.out)?;
    let mut header = vec!["x".to_string()];
    header.extend((1..=q_max).map(|q| format!("J_{q}")));
    let file = args.out.join("coefficients.csv");
    let mut w = csv_writer(&file)?;
    w.write_record(&header)?;
    for (x, row) in xs.iter().zip(&table) {
        let mut rec = vec![x.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;

    if xs.len() <= PRINT_ROWS {
        say!(
            "{}",
            header.iter().map(|h| format!("{h:>12}")).collect::<String>()
        );
        for (x, row) in xs.iter().zip(&table) {
            let cells: String = row.iter().map(|v| format!("{v:>12.7}")).collect();
            say!("{x:>12}{cells}");
        }
    }

    let lambda = profile.lambda();
    let sup_file = args.out.join("coefficient_sup.csv");
    let mut w = csv_writer(&sup_file)?;
    w.write_record(["q", "lambda", "sup", "argmax", "radius", "change"])?;
    say!("sup |w J_q| with w(x) = (1 + |x|)^{lambda}:");
    for q in 1..=q_max {
        let s = weighted_coefficient_sup(profile.g(), q, lambda)?;
        say!(
            "  q = {q}: sup = {:.7} at x = {:.4} (stable at radius {})",
            s.value,
            s.argmax,
            s.radius
        );
        w.write_record([
            q.to_string(),
            lambda.to_string(),
            s.value.to_string(),
            s.argmax.to_string(),
            s.radius.to_string(),
            s.change.to_string(),
        ])?;
    }
    w.flush()?;
    say!("wrote {} and {}", file.display(), sup_file.display());
    Ok(())
}

/// Loads the TOML file (or the defaults) and applies the command-line overrides.
fn experiment_config(args: &ExperimentArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            toml::from_str::<ExperimentConfig>(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if args.model.model.is_some() || args.model.hurst.is_some() {
        cfg.model = resolve_model(&args.model, &cfg.model)?;
    }
    if let Some(g) = &args.model.g {
        cfg.g = g.clone();
    }
    if let Some(d) = args.weight.delta {
        cfg.delta = d;
    }
    if let Some(l) = args.weight.lambda {
        cfg.lambda = Some(l);
    }
    if let Some(r) = args.reps {
        cfg.replications = r;
    }
    if let Some(ladder) = &args.n_ladder {
        cfg.n_ladder = ladder.clone();
    }
    if let Some(eps) = &args.epsilon {
        cfg.epsilon_grid = eps.clone();
    }
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_report(args: &ExperimentArgs, report: &ConvergenceReport, stem: &str) -> CliResult<()> {
    let file = args.out.join(format!("{stem}_report.json"));
    write_text(&file, &report.to_json())?;
    say!("wrote {}", file.display());
    if args.keep_raw {
        let raw = args.out.join(format!("{stem}_raw.csv"));
        let mut w = csv_writer(&raw)?;
        w.write_record(["experiment", "N", "replication", "seed", "label", "value"])?;
        for r in &report.raw {
            w.write_record([
                r.experiment.clone(),
                r.n.to_string(),
                r.replication.to_string(),
                r.seed.to_string(),
                r.label.clone(),
                r.value.to_string(),
            ])?;
        }
        w.flush()?;
        say!("wrote {}", raw.display());
    }
    Ok(())
}

fn conclude(report: &ConvergenceReport) -> CliResult<()> {
    for n in &report.notices {
        say!("notice: {n}");
    }
    for f in &report.flags {
        say!(
            "[{}] {}: {}",
            if f.passed { "pass" } else { "FAIL" },
            f.name,
            f.detail
        );
    }
    if report.passed {
        Ok(())
    } else {
        let failed = report.flags.iter().filter(|f| !f.passed).count();
        Err(CliError::Verification(format!(
            "{failed} verification flag(s) failed"
        )))
    }
}

fn warn_low_reps(cfg: &ExperimentConfig) {
    if !cfg.distributional_flags() {
        eprintln!("warning: R < 100: distributional flags suppressed");
    }
}

pub fn verify_reduction(args: &ExperimentArgs) -> CliResult<()> {
    let cfg = experiment_config(args)?;
    warn_low_reps(&cfg);
    let report = run_reduction_experiment(&cfg)?.merge(run_moment_check(&cfg)?);
    create_out(&args.out)?;

    say!(
        "m = {}, D = {}, mD = {}",
        report.profile.rank,
        report.profile.memory_exponent,
        report.profile.m_times_d
    );
    for s in &report.tail_probabilities {
        let p: Vec<String> = s
            .estimates
            .iter()
            .map(|e| format!("{:.4}+-{:.4}", e.p_hat, e.se))
            .collect();
        say!("P(M_N > {}) along N: [{}]", s.epsilon, p.join(", "));
        if let Some(fit) = &s.slope {
            say!("  log-log slope {:.3} +- {:.3}", fit.slope, fit.half_width);
        }
    }
    for m in &report.moments {
        let r: Vec<String> = m
            .rows
            .iter()
            .map(|row| match (row.ratio, row.ratio_se) {
                (Some(r), Some(se)) => format!("{r:.4}+-{se:.4}"),
                (Some(r), None) => format!("{r:.4}"),
                _ => "undefined".into(),
            })
            .collect();
        say!(
            "second-moment ratio at (x, y) = ({}, {}): [{}]",
            m.x,
            m.y,
            r.join(", ")
        );
    }
    write_report(args, &report, "reduction")?;
    conclude(&report)
}

pub fn verify_limit(args: &ExperimentArgs) -> CliResult<()> {
    let cfg = experiment_config(args)?;
    warn_low_reps(&cfg);
    let report = run_limit_experiment(&cfg)?;
    create_out(&args.out)?;

    let plot = args.out.join("limit_plot.csv");
    let mut w = csv_writer(&plot)?;
    w.write_record(["N", "x", "t", "ks", "threshold"])?;
    say!(
        "m = {}, D = {}, mD = {}",
        report.profile.rank,
        report.profile.memory_exponent,
        report.profile.m_times_d
    );
    for p in &report.limit {
        let ks: Vec<String> = p.levels.iter().map(|l| format!("{:.4}", l.ks)).collect();
        say!(
            "(x, t) = ({}, {}) vs {}: KS [{}]",
            p.x,
            p.t,
            p.reference,
            ks.join(", ")
        );
        for l in &p.levels {
            w.write_record([
                l.n.to_string(),
                p.x.to_string(),
                p.t.to_string(),
                l.ks.to_string(),
                l.threshold.to_string(),
            ])?;
        }
    }
    w.flush()?;
    say!("wrote {}", plot.display());
    write_report(args, &report, "limit")?;
    conclude(&report)
}

pub fn chain_grid(args: &ChainArgs) -> CliResult<()> {
    let profile = build_profile(args.g.clone(), &args.weight)?;
    let w = profile.weight();
    let i_max = usize::try_from(args.imax).map_err(|_| CliError::Usage("--imax is too large".into()))?;
    // Both sides are built before anything is written.
    let mut grids = Vec::new();
    for side in [ChainSide::Positive, ChainSide::Negative] {
        let grid = build_chain_grid(&profile, &w, side, args.kmax, i_max)?;
        let report = verify_chain_grid(&grid, &profile, &w)?;
        grids.push((grid, report));
    }

    create_out(&args.out)?;
    let nodes_file = args.out.join("chain_nodes.csv");
    let mut nw = csv_writer(&nodes_file)?;
    nw.write_record(["side", "k", "i", "x"])?;
    for (grid, _) in &grids {
        for level in &grid.levels {
            for (i, x) in level.nodes.iter().enumerate() {
                nw.write_record([
                    grid.side.label().to_string(),
                    level.k.to_string(),
                    i.to_string(),
                    x.to_string(),
                ])?;
            }
        }
    }
    nw.flush()?;

    let levels_file = args.out.join("chain_levels.csv");
    let mut lw = csv_writer(&levels_file)?;
    lw.write_record([
        "side",
        "k",
        "nodes",
        "truncation",
        "max_spacing",
        "bound",
        "slack",
        "refines_previous",
        "sum_a",
        "sum_b",
        "b_ratio",
        "b_bound",
        "passed",
    ])?;
    let series_file = args.out.join("chain_series.csv");
    let mut sw = csv_writer(&series_file)?;
    sw.write_record(["side", "j", "partial_sum"])?;
    let reports: Vec<&ChainGridReport> = grids.iter().map(|(_, r)| r).collect();
    for r in &reports {
        let side = r.side.label();
        for l in &r.levels {
            lw.write_record([
                side.to_string(),
                l.k.to_string(),
                l.nodes.to_string(),
                format!("{:?}", l.truncation).to_lowercase(),
                l.max_spacing.to_string(),
                l.bound.to_string(),
                l.slack.to_string(),
                l.refines_previous.to_string(),
                l.sums.a.to_string(),
                l.sums.b.to_string(),
                l.b_ratio.to_string(),
                l.b_bound.to_string(),
                l.passed.to_string(),
            ])?;
        }
        for (j, s) in r.series.partial_sums.iter().enumerate() {
            sw.write_record([side.to_string(), (j + 1).to_string(), s.to_string()])?;
        }
    }
    lw.flush()?;
    sw.flush()?;
    let json = serde_json::to_string_pretty(&reports).map_err(|e| CliError::Io(e.to_string()))?;
    let report_file = args.out.join("chain_report.json");
    write_text(&report_file, &json)?;

    say!(
        "m = {}, {}, Lambda(0) = {}",
        profile.rank(),
        lambda_line(&profile),
        reports[0].anchor
    );
    for r in &reports {
        let min_slack = r.levels.iter().map(|l| l.slack).fold(f64::INFINITY, f64::min);
        say!(
            "{}: {} levels, min spacing slack {:.3e}, series {} (last increment {:.2e}), max B ratio {:.4} [{}]",
            r.side.label(),
            r.levels.len(),
            min_slack,
            r.series.total,
            r.series.last_increment,
            r.max_b_ratio,
            if r.passed { "pass" } else { "FAIL" }
        );
    }
    say!(
        "wrote {}, {}, {} and {}",
        nodes_file.display(),
        levels_file.display(),
        series_file.display(),
        report_file.display()
    );
    if reports.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(CliError::Verification(
            "chain-grid inequality check failed".into(),
        ))
    }
}

pub fn config(args: &ConfigArgs) -> CliResult<()> {
    if !args.print_defaults {
        return Err(CliError::Usage(
            "nothing to do; try `wsep config --print-defaults`".into(),
        ));
    }
    let text = toml::to_string(&ExperimentConfig::default())
        .map_err(|e| CliError::Io(format!("serializing defaults: {e}")))?;
    let _ = std::io::stdout().write_all(text.as_bytes());
    Ok(())
}
