use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, CommandFactory, Parser, Subcommand};

use acwb::bench::{cross_validate, report_table, write_results, BenchOptions, Variant};
use acwb::data::{load_csv, load_csv_with_schema, subsample, CsvOptions};
use acwb::error::ErrorClass;
use acwb::hpo::{tune, TuneOptions};
use acwb::interpret::{
    complexity_report, decompose_prediction, interaction_surface, partial_effect, variable_importance, GridAxis,
    VipStage, DEFAULT_CURVE_GRID, DEFAULT_SURFACE_GRID,
};
use acwb::model_io::{load_model, save_model};
use acwb::stages::{fit_acwb, AcwbModel, FittedModel};
use acwb::{AcwbConfig, Error, Result, Task};

#[derive(Parser)]
#[command(
    name = "acwb",
    version,
    about = "Interpretable AutoML with three-stage componentwise boosting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write it to a .acwb file
    Train(TrainArgs),
    /// Score a CSV with a saved model
    Predict(PredictArgs),
    /// Export importance, explained-risk fractions, effects and surfaces
    Explain(ExplainArgs),
    /// Tune the learning rate and interaction fraction with Hyperband
    Tune(TuneArgs),
    /// Cross-validated benchmark against the published reference scores
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Input CSV file
    #[arg(long)]
    data: PathBuf,
    /// Target column
    #[arg(long)]
    target: Option<String>,
    /// auto, regression, binary or multiclass
    #[arg(long, default_value = "auto")]
    task: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// key = value configuration file; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra cell values read as missing, comma separated ("" and NA always are)
    #[arg(long, value_delimiter = ',')]
    na_strings: Vec<String>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    psi: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Deep-tree stage: on or off
    #[arg(long)]
    deep: Option<String>,
    /// Pairwise interaction stage: on or off
    #[arg(long)]
    interactions: Option<String>,
    /// Output model file
    #[arg(long, default_value = "model.acwb")]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "predictions.csv")]
    out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    na_strings: Vec<String>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    /// Output directory
    #[arg(long, default_value = "explain")]
    out: PathBuf,
    /// Data for per-row decompositions
    #[arg(long)]
    data: Option<PathBuf>,
    /// Row index (0-based) to decompose; needs --data
    #[arg(long)]
    row: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_CURVE_GRID)]
    grid: usize,
    #[arg(long, default_value_t = DEFAULT_SURFACE_GRID)]
    surface_grid: usize,
    #[arg(long, value_delimiter = ',')]
    na_strings: Vec<String>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 3.0)]
    eta: f64,
    #[arg(long, default_value_t = 1.0 / 9.0)]
    r_min: f64,
    #[arg(long, default_value_t = 1.0)]
    r_max: f64,
    /// Wall-clock limit; remaining brackets are skipped
    #[arg(long)]
    max_minutes: Option<f64>,
    /// Evaluation log CSV
    #[arg(long, default_value = "tune_log.csv")]
    log: PathBuf,
    /// Best configuration as a key = value file
    #[arg(long, default_value = "best.cfg")]
    best: PathBuf,
    /// Refit on all rows with the best configuration
    #[arg(long)]
    retrain: bool,
    #[arg(long, default_value = "model.acwb")]
    out: PathBuf,
    #[arg(long)]
    deep: Option<String>,
    #[arg(long)]
    interactions: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    /// Dataset names, each read from <data-dir>/<name>.csv; `name:target` overrides the target column
    #[arg(long, value_delimiter = ',', required = true)]
    datasets: Vec<String>,
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    #[arg(long, default_value = "class")]
    target: String,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// ACWB, ACWB_deep, ACWB_deep_no_HPO, ACWB_no_HPO or all
    #[arg(long, value_delimiter = ',', default_value = "ACWB_no_HPO")]
    variant: Vec<String>,
    /// Subsample each dataset to at most this many rows (stratified)
    #[arg(long)]
    max_rows: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    na_strings: Vec<String>,
    /// HPO wall-clock limit per fold, in minutes
    #[arg(long, default_value_t = 5.0)]
    max_minutes: f64,
    /// Flag deltas to the reference above this
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Data | ErrorClass::Io => 2,
        ErrorClass::Fit => 3,
        ErrorClass::Config => 4,
    }
}

fn set_threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn csv_options(na: &[String]) -> CsvOptions {
    CsvOptions {
        na_strings: na.iter().filter(|s| !s.is_empty()).cloned().collect(),
    }
}

fn build_config(c: &Common, deep: Option<&str>, interactions: Option<&str>) -> Result<AcwbConfig> {
    let mut cfg = match &c.config {
        Some(p) => AcwbConfig::from_file(p)?,
        None => AcwbConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(v) = c.validation_fraction {
        cfg.validation_fraction = v;
    }
    if let Some(v) = c.nu {
        cfg.nu = v;
    }
    if let Some(v) = c.psi {
        cfg.psi = v;
    }
    if let Some(d) = deep {
        cfg.set("deep", d)?;
    }
    if let Some(i) = interactions {
        cfg.set("interactions", i)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_training(c: &Common) -> Result<acwb::Dataset> {
    let target = c
        .target
        .as_deref()
        .ok_or_else(|| Error::Config(format!("--target is required\n\n{}", Cli::command().render_usage())))?;
    let task = Task::parse(&c.task).ok_or_else(|| Error::Config(format!("unknown task `{}`", c.task)))?;
    load_csv(&c.data, target, task, &csv_options(&c.na_strings))
}

fn print_summary(m: &AcwbModel) {
    let c = m.checkpoints;
    let iters = |t: Option<&acwb::boosting::BoostTrace>| t.map_or("-".to_string(), |t| t.best_iteration.to_string());
    println!("stage        train_risk     val_risk  iterations  seconds");
    println!(
        "offset    {:>13.6} {:>12.6}  {:>10}  {:>7.2}",
        c.r0, m.val_checkpoints.r0, "-", m.timings.preprocess
    );
    println!(
        "uni       {:>13.6} {:>12.6}  {:>10}  {:>7.2}",
        c.r_uni,
        m.val_checkpoints.r_uni,
        iters(Some(&m.uni.trace)),
        m.timings.uni
    );
    println!(
        "pint      {:>13.6} {:>12.6}  {:>10}  {:>7.2}",
        c.r_pint,
        m.val_checkpoints.r_pint,
        iters(m.pint.as_ref().map(|p| &p.trace)),
        m.timings.screening + m.timings.pint
    );
    println!(
        "deep      {:>13.6} {:>12.6}  {:>10}  {:>7.2}",
        c.r_deep,
        m.val_checkpoints.r_deep,
        iters(m.deep.as_ref().map(|d| &d.trace)),
        m.timings.deep
    );
    if let Some(reason) = &m.pint_skipped {
        println!("interaction stage skipped: {reason}");
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    set_threads(a.common.threads)?;
    let cfg = build_config(&a.common, a.deep.as_deref(), a.interactions.as_deref())?;
    let ds = load_training(&a.common)?;
    let model = fit_acwb(&ds, &cfg)?;
    for (i, m) in model.models().into_iter().enumerate() {
        if let FittedModel::OneVsRest { classes, .. } = &model {
            println!("class {}:", classes[i]);
        }
        print_summary(m);
    }
    save_model(&model, &a.out)?;
    println!("model written to {}", a.out.display());
    Ok(())
}

fn write_csv_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(err) => Error::io(path.display().to_string(), err),
        other => Error::Fit(format!("writing {}: {other:?}", path.display())),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    set_threads(a.threads)?;
    let model = load_model(&a.model)?;
    let schema = &model.primary().recipe.source_schema;
    let ds = load_csv_with_schema(&a.data, schema, &csv_options(&a.na_strings))?;
    let p = model.predict(&ds)?;
    let mut header: Vec<String> = vec!["row_id".into(), "score".into()];
    if p.task.is_classification() {
        header.push("probability".into());
        header.push("predicted_class".into());
    }
    if p.task == Task::MulticlassClassification {
        header.extend(p.classes.iter().map(|c| format!("prob_{c}")));
    }
    let rows = (0..ds.n_rows()).map(|i| {
        let mut r = vec![i.to_string(), num(p.score[i])];
        if let (Some(prob), Some(cls)) = (&p.probability, &p.predicted_class) {
            r.push(num(prob[i]));
            r.push(cls[i].clone());
        }
        if let Some(row) = p.class_probabilities.get(i) {
            r.extend(row.iter().map(|v| num(*v)));
        }
        r
    });
    write_csv_rows(&a.out, &header, rows)?;
    println!("{} predictions written to {}", ds.n_rows(), a.out.display());
    Ok(())
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn explain_one(m: &AcwbModel, dir: &Path, a: &ExplainArgs) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let vip = variable_importance(m);
    write_csv_rows(
        &dir.join("vip.csv"),
        &["term".into(), "stage".into(), "vip".into()],
        vip.iter().map(|e| {
            let stage = match e.stage {
                VipStage::Uni => "uni",
                VipStage::Pint => "pint",
            };
            vec![e.term.clone(), stage.into(), num(e.vip)]
        }),
    )?;
    let report = complexity_report(m);
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Fit(e.to_string()))?;
    let path = dir.join("complexity.json");
    fs::write(&path, json).map_err(|e| Error::io(path.display().to_string(), e))?;

    for kept in &m.recipe.kept {
        let curve = partial_effect(m, &kept.name, a.grid)?;
        let header = match curve.grid {
            GridAxis::Numeric(_) => "grid",
            GridAxis::Levels(_) => "level",
        };
        write_csv_rows(
            &dir.join("effects").join(format!("{}.csv", file_safe(&kept.name))),
            &[header.into(), "total".into(), "linear".into(), "nonlinear".into()],
            (0..curve.grid.len()).map(|i| {
                vec![
                    curve.grid.label(i),
                    num(curve.total[i]),
                    num(curve.linear_part[i]),
                    num(curve.nonlinear_part[i]),
                ]
            }),
        )?;
    }
    if let Some(p) = &m.pint {
        for kind in &p.candidates {
            let f = kind.features();
            let s = interaction_surface(m, f[0], f[1], a.surface_grid)?;
            let name = format!("{}_{}.csv", file_safe(&s.first), file_safe(&s.second));
            let (n1, n2) = (s.first_axis.len(), s.second_axis.len());
            write_csv_rows(
                &dir.join("interactions").join(name),
                &[s.first.clone(), s.second.clone(), "value".into()],
                (0..n1 * n2).map(|k| {
                    let (i, j) = (k / n2, k % n2);
                    vec![s.first_axis.label(i), s.second_axis.label(j), num(s.values[i][j])]
                }),
            )?;
        }
    }
    if !a.row.is_empty() {
        let data = a
            .data
            .as_ref()
            .ok_or_else(|| Error::Config("--row needs --data".into()))?;
        let ds = load_csv_with_schema(data, &m.recipe.source_schema, &csv_options(&a.na_strings))?;
        for &k in &a.row {
            let d = decompose_prediction(m, &ds, k)?;
            let mut rows = vec![vec!["offset".to_string(), num(d.offset)]];
            rows.extend(d.univariate.iter().map(|c| vec![c.term.clone(), num(c.value)]));
            rows.extend(d.pairs.iter().map(|c| vec![c.term.clone(), num(c.value)]));
            rows.push(vec!["deep_trees".into(), num(d.deep)]);
            rows.push(vec!["total".into(), num(d.total)]);
            write_csv_rows(
                &dir.join(format!("decomposition_{k}.csv")),
                &["term".into(), "contribution".into()],
                rows.into_iter(),
            )?;
        }
    }
    Ok(())
}

fn cmd_explain(a: ExplainArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    match &model {
        FittedModel::Single(m) => explain_one(m, &a.out, &a)?,
        FittedModel::OneVsRest { classes, models } => {
            for (c, m) in classes.iter().zip(models) {
                explain_one(m, &a.out.join(format!("class_{}", file_safe(c))), &a)?;
            }
        }
    }
    println!("explanations written to {}", a.out.display());
    Ok(())
}

fn config_text(cfg: &AcwbConfig) -> String {
    format!(
        "nu = {:?}\npsi = {:?}\ndf = {:?}\nkappa = {}\ndeep = {}\ninteractions = {}\nseed = {}\n",
        cfg.nu,
        cfg.psi,
        cfg.df,
        cfg.patience,
        if cfg.deep { "on" } else { "off" },
        if cfg.interactions { "on" } else { "off" },
        cfg.seed
    )
}

fn cmd_tune(a: TuneArgs) -> Result<()> {
    set_threads(a.common.threads)?;
    let base = build_config(&a.common, a.deep.as_deref(), a.interactions.as_deref())?;
    let ds = load_training(&a.common)?;
    let opts = TuneOptions {
        eta: a.eta,
        r_min: a.r_min,
        r_max: a.r_max,
        max_time: a.max_minutes.map(|m| Duration::from_secs_f64(m * 60.0)),
    };
    let res = tune(&ds, &base, &opts)?;
    write_csv_rows(
        &a.log,
        &["config_id", "nu", "psi", "budget", "risk", "seconds"].map(String::from),
        res.log.iter().map(|r| {
            vec![
                r.config_id.to_string(),
                num(r.nu),
                num(r.psi),
                num(r.budget),
                r.risk.map_or("NA".into(), num),
                format!("{:.3}", r.seconds),
            ]
        }),
    )?;
    let best = res.best.apply(&base);
    fs::write(&a.best, config_text(&best)).map_err(|e| Error::io(a.best.display().to_string(), e))?;
    println!(
        "best config {}: nu = {:.5}, psi = {:.4}, risk = {:.6}{}",
        res.best_id,
        res.best.nu,
        res.best.psi,
        res.best_risk,
        if res.truncated { " (time limit reached)" } else { "" }
    );
    if a.retrain {
        let model = fit_acwb(&ds, &best)?;
        save_model(&model, &a.out)?;
        println!("model written to {}", a.out.display());
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    set_threads(a.threads)?;
    let base = match &a.config {
        Some(p) => AcwbConfig::from_file(p)?,
        None => AcwbConfig::default(),
    };
    let variants: Vec<Variant> = if a.variant.iter().any(|v| v.eq_ignore_ascii_case("all")) {
        Variant::ALL.to_vec()
    } else {
        a.variant.iter().map(|v| v.parse()).collect::<Result<_>>()?
    };
    let opts = BenchOptions {
        folds: a.folds,
        seed: a.seed,
        base,
        tune: TuneOptions {
            max_time: Some(Duration::from_secs_f64(a.max_minutes * 60.0)),
            ..TuneOptions::default()
        },
        parallel_folds: true,
    };
    let mut results = Vec::new();
    for entry in &a.datasets {
        let (name, target) = entry.split_once(':').unwrap_or((entry.as_str(), a.target.as_str()));
        let path = a.data_dir.join(format!("{name}.csv"));
        let mut ds = load_csv(&path, target, None, &csv_options(&a.na_strings))?;
        if let Some(max) = a.max_rows.filter(|&m| m < ds.n_rows()) {
            ds = subsample(&ds, max as f64 / ds.n_rows() as f64, a.seed)?;
        }
        for &v in &variants {
            let r = cross_validate(&ds, name, v, &opts)?;
            println!("{name:<20} {v:<18} {} = {:.4}  ({:.1}s)", r.metric, r.mean, r.seconds);
            results.push(r);
        }
    }
    let rows = report_table(&results, a.tolerance);
    println!("\ndataset              variant            measured  reference   delta");
    for r in &rows {
        println!(
            "{:<20} {:<18} {:>8.4}  {:>9}  {:>7}{}",
            r.dataset,
            r.variant.to_string(),
            r.measured,
            r.reference.map_or("-".into(), |v| format!("{v:.3}")),
            r.delta.map_or("-".into(), |v| format!("{v:+.4}")),
            if r.flagged { "  !" } else { "" }
        );
    }
    let file = fs::File::create(&a.out).map_err(|e| Error::io(a.out.display().to_string(), e))?;
    write_results(&results, &rows, file)?;
    println!("results written to {}", a.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
