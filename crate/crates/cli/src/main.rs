//! `pgan`: command-line front end for the photonic GAN simulator.
//!
//! Every option can also come from `--config FILE` (`key = value` lines, keys named like
//! the long flags with `-` replaced by `_`). Flags given on the command line win.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pgan_core::eval::{accuracy, ClassifierConfig, FidEvaluator, DEFAULT_FID_BATCH};
use pgan_core::gan::{generate, train, StrategyKind, TrainConfig};
use pgan_core::harness::{
    experiment_train_config, format_sig6, image_grid, load_or_train_classifier, load_split,
    run_comparison, run_sweep, sweep_summary, sweep_summary_table, train_config_from_kv,
    train_config_to_kv, ComparisonConfig, CsvTable, Digits, ExperimentData, KvConfig, Manifest,
    Split, SweepConfig, GRID_SIDE,
};
use pgan_core::nn::{read_checkpoint, write_checkpoint, Exec, NetRole};
use pgan_core::noise_sources::{
    autocorrelation, ks_vs_fitted_gaussian, moment_report, sample_latent, LatentSourceConfig,
};
use pgan_core::pmmc::{
    mvm_error_stats, predicted_mvm_error_std, program_error_trials, InputDist, NoiseSpec,
    PulseSchedule, TensorCore,
};
use pgan_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "pgan", version, about = "Noise-aware photonic GAN simulator")]
struct Cli {
    /// Plain-text key = value file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for independent jobs (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Latent source statistics: autocorrelation CSV and a moment report.
    RngTest(RngTestArgs),
    /// Programming-error and MVM-error statistics of the tensor core.
    CoreCalibrate(CalibrateArgs),
    /// Train a generator with one strategy.
    Train(TrainArgs),
    /// Generate images from a generator checkpoint.
    Generate(GenerateArgs),
    /// Ideal-versus-noisy FID of a generator checkpoint over several evaluation seeds.
    Evaluate(EvaluateArgs),
    /// Train and compare strategies at one deployment noise level.
    Compare(CompareArgs),
    /// Noise sweep over strategies, noise levels and seeds (resumable).
    Sweep(SweepArgs),
    /// Train the feature classifier used by the FID metric.
    TrainClassifier(DataArgs),
}

#[derive(Args, Debug)]
struct RngTestArgs {
    /// ideal | ase
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    max_lag: Option<usize>,
    /// Spectral components per channel in ase mode.
    #[arg(long)]
    components: Option<usize>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[arg(long)]
    write_std: Option<f64>,
    #[arg(long)]
    read_std: Option<f64>,
    /// Programs per target.
    #[arg(long)]
    programs: Option<usize>,
    /// Write STD for the pulse-programming statistics.
    #[arg(long)]
    program_std: Option<f64>,
    /// Noisy MVMs for the error histogram.
    #[arg(long)]
    mvms: Option<usize>,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Directory with the four MNIST IDX files.
    #[arg(long)]
    mnist: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// nf | ic | wc | cr
    #[arg(long)]
    strategy: Option<String>,
    /// A single digit 0..9 or `all`.
    #[arg(long)]
    digits: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    weight_noise: Option<f64>,
    #[arg(long)]
    train_sigma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args, Debug)]
struct NoiseArgs {
    #[arg(long)]
    write_std: Option<f64>,
    #[arg(long)]
    read_std: Option<f64>,
    /// fresh | fixed
    #[arg(long)]
    regime: Option<String>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// exact | hw
    #[arg(long)]
    exec: Option<String>,
    #[command(flatten)]
    noise: NoiseArgs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    classifier: Option<PathBuf>,
    /// Number of evaluation seeds.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    digits: Option<String>,
    #[command(flatten)]
    noise: NoiseArgs,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    digits: Option<String>,
    /// Number of training seeds.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    write_std: Option<f64>,
    /// Also train CR generators.
    #[arg(long)]
    with_cr: bool,
    #[arg(long)]
    classifier: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Comma-separated strategy names.
    #[arg(long)]
    strategies: Option<String>,
    /// Comma-separated write STDs, ascending.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    digits: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    classifier: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
}

/// Config-file entries with the command-line values laid over them.
struct Settings {
    kv: KvConfig,
}

impl Settings {
    fn new(cli: &Cli) -> Result<Self> {
        let mut kv = match &cli.config {
            Some(p) => KvConfig::load(p)?,
            None => KvConfig::new(),
        };
        if let Some(s) = cli.seed {
            kv.set("seed", s);
        }
        if let Some(o) = &cli.out {
            kv.set("out", o.display());
        }
        Ok(Self { kv })
    }

    fn put<T: std::fmt::Display>(&mut self, key: &str, v: &Option<T>) {
        if let Some(v) = v {
            self.kv.set(key, v);
        }
    }

    fn put_path(&mut self, key: &str, v: &Option<PathBuf>) {
        if let Some(v) = v {
            self.kv.set(key, v.display());
        }
    }

    fn put_noise(&mut self, n: &NoiseArgs) {
        self.put("write_std", &n.write_std);
        self.put("read_std", &n.read_std);
        self.put("regime", &n.regime);
    }

    fn out(&self) -> PathBuf {
        PathBuf::from(self.kv.get_str("out").unwrap_or("out"))
    }

    fn seed(&self) -> Result<u64> {
        self.kv.get_or("seed", 0)
    }

    fn path(&self, key: &str) -> Result<PathBuf> {
        self.kv
            .get_str(key)
            .map(PathBuf::from)
            .ok_or_else(|| Error::Config(format!("missing --{}", key.replace('_', "-"))))
    }

    fn mnist_dir(&self) -> PathBuf {
        self.kv
            .get_str("mnist")
            .map(PathBuf::from)
            .or_else(|| std::env::var_os("PGAN_MNIST_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data/mnist"))
    }

    fn digits(&self, default: Digits) -> Result<Digits> {
        match self.kv.get_str("digits") {
            Some(d) => d.parse(),
            None => Ok(default),
        }
    }

    /// Training settings: experiment defaults for the digit selection, then config entries.
    fn train_config(&self, digits: Digits) -> Result<TrainConfig> {
        train_config_from_kv(&self.kv, &experiment_train_config(digits))
    }

    fn manifest(&self, command: &str, extra: &KvConfig) -> Result<PathBuf> {
        let mut kv = self.kv.clone();
        kv.merge(extra);
        Manifest::new(command, &kv).write(&self.out())
    }
}

fn classifier_for(
    s: &Settings,
    train_set: &pgan_core::harness::MnistSet,
    test_set: &pgan_core::harness::MnistSet,
) -> Result<pgan_core::nn::DenseNet> {
    let cache = match s.kv.get_str("classifier") {
        Some(p) => PathBuf::from(p),
        None => s.out().join("classifier.ckpt"),
    };
    load_or_train_classifier(
        train_set,
        test_set,
        &ClassifierConfig::default(),
        Some(&cache),
    )
}

fn cmd_rng_test(s: &mut Settings, a: &RngTestArgs) -> Result<()> {
    s.put("mode", &a.mode);
    s.put("sigma", &a.sigma);
    s.put("n", &a.n);
    s.put("max_lag", &a.max_lag);
    s.put("components", &a.components);
    let sigma = s.kv.get_or("sigma", 0.2)?;
    let n = s.kv.get_or("n", 50_000usize)?;
    let max_lag = s.kv.get_or("max_lag", 100usize)?;
    let seed = s.seed()?;
    let cfg = match s.kv.get_str("mode").unwrap_or("ideal") {
        "ideal" => LatentSourceConfig::ideal(sigma, seed),
        "ase" => LatentSourceConfig::ase(sigma, s.kv.get_or("components", 512usize)?, 1, seed),
        other => {
            return Err(Error::Config(format!(
                "unknown mode `{other}` (expected ideal or ase)"
            )))
        }
    };
    let seq = sample_latent(&cfg, n)?;
    let ac = autocorrelation(&seq, max_lag)?;
    let mut t = CsvTable::new(&["lag", "autocorr"]);
    for (i, r) in ac.iter().enumerate() {
        t.push(vec![(i + 1).to_string(), format_sig6(*r)])?;
    }
    let out = s.out();
    t.write(&out.join("rng_autocorr.csv"))?;
    let m = moment_report(&seq)?;
    let max_abs = ac.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    println!(
        "mean={} std={} skew={} kurtosis={} max_abs_autocorr={} ks={} n={n}",
        format_sig6(m.mean),
        format_sig6(m.std),
        format_sig6(m.skew),
        format_sig6(m.kurtosis),
        format_sig6(max_abs),
        format_sig6(ks_vs_fitted_gaussian(&seq)?),
    );
    s.manifest("rng-test", &KvConfig::new())?;
    Ok(())
}

fn cmd_core_calibrate(s: &mut Settings, a: &CalibrateArgs) -> Result<()> {
    s.put("write_std", &a.write_std);
    s.put("read_std", &a.read_std);
    s.put("programs", &a.programs);
    s.put("program_std", &a.program_std);
    s.put("mvms", &a.mvms);
    let seed = s.seed()?;
    let out = s.out();
    let program_std = s.kv.get_or("program_std", 0.007)?;
    let programs = s.kv.get_or("programs", 1000usize)?;
    let targets = [-0.7, 0.0, 0.7];
    let errs = program_error_trials(
        &targets,
        programs,
        &PulseSchedule::default(),
        program_std,
        seed,
    )?;
    let mut t = CsvTable::new(&["target", "error_std", "error_mean"]);
    for (target, e) in targets.iter().zip(&errs) {
        let n = e.len() as f64;
        let mean = e.iter().sum::<f64>() / n;
        let std = (e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        println!(
            "program target={target} error_std={} error_mean={}",
            format_sig6(std),
            format_sig6(mean)
        );
        t.push(vec![
            format_sig6(*target),
            format_sig6(std),
            format_sig6(mean),
        ])?;
    }
    t.write(&out.join("programming_errors.csv"))?;

    let noise = NoiseSpec::new(
        s.kv.get_or("write_std", NoiseSpec::DEFAULT_WRITE_STD)?,
        s.kv.get_or("read_std", 0.0)?,
        pgan_core::pmmc::NoiseRegime::FreshPerUse,
    )?;
    let mut core = TensorCore::prototype(noise, seed);
    let targets = ndarray::Array2::from_shape_fn((core.rows(), core.cols()), |(i, j)| {
        [[0.7, -0.3], [0.2, -0.6]][i % 2][j % 2]
    });
    core.set_targets(&targets)?;
    let input = InputDist::default();
    let stats = mvm_error_stats(&core, s.kv.get_or("mvms", 4900usize)?, input)?;
    let predicted = predicted_mvm_error_std(noise.write_std, noise.read_std, input, core.cols());
    println!(
        "mvm error_std={} predicted={} mean={} samples={}",
        format_sig6(stats.std),
        format_sig6(predicted),
        format_sig6(stats.mean),
        stats.errors.len()
    );
    let mut h = CsvTable::new(&["bin_center", "count"]);
    for (c, n) in stats
        .histogram
        .bin_centers
        .iter()
        .zip(&stats.histogram.counts)
    {
        h.push(vec![format_sig6(*c), n.to_string()])?;
    }
    h.write(&out.join("mvm_error_histogram.csv"))?;
    s.manifest("core-calibrate", &KvConfig::new())?;
    Ok(())
}

fn cmd_train(s: &mut Settings, a: &TrainArgs) -> Result<()> {
    s.put("strategy", &a.strategy);
    s.put("digits", &a.digits);
    s.put("epochs", &a.epochs);
    s.put("batch", &a.batch);
    s.put("weight_noise", &a.weight_noise);
    s.put("train_sigma", &a.train_sigma);
    s.put("lambda", &a.lambda);
    s.put("lr", &a.lr);
    s.put_path("mnist", &a.data.mnist);
    let digits = s.digits(Digits::One(7))?;
    let cfg = s.train_config(digits)?;
    let data = ExperimentData::load(&s.mnist_dir(), digits)?;
    let run = train(&cfg, &data.train.images)?;
    let out = s.out();
    write_checkpoint(&run.generator, &out.join("generator.ckpt"))?;
    write_checkpoint(&run.discriminator, &out.join("discriminator.ckpt"))?;
    let mut t = CsvTable::new(&["epoch", "d_loss", "g_loss"]);
    for (i, l) in run.loss_trace.iter().enumerate() {
        t.push(vec![
            (i + 1).to_string(),
            format_sig6(l.d_loss),
            format_sig6(l.g_loss),
        ])?;
    }
    t.write(&out.join("loss_trace.csv"))?;
    let mut kv = train_config_to_kv(&cfg);
    kv.set("digits", digits);
    kv.set("streams", run.streams.map(|v| v.to_string()).join(","));
    s.manifest("train", &kv)?;
    println!(
        "trained {} for {} steps in {:.1}s; checkpoints in {}",
        cfg.strategy.name(),
        run.steps,
        run.wall_clock.as_secs_f64(),
        out.display()
    );
    Ok(())
}

fn load_generator(s: &Settings) -> Result<pgan_core::nn::DenseNet> {
    let p = s.path("ckpt")?;
    let g = read_checkpoint(&p)?;
    if g.role != NetRole::Generator {
        return Err(Error::Config(format!(
            "{} is not a generator checkpoint",
            p.display()
        )));
    }
    Ok(g)
}

fn cmd_generate(s: &mut Settings, a: &GenerateArgs) -> Result<()> {
    s.put_path("ckpt", &a.ckpt);
    s.put("n", &a.n);
    s.put("exec", &a.exec);
    s.put_noise(&a.noise);
    let gen = load_generator(s)?;
    let mut cfg = train_config_from_kv(&s.kv, &TrainConfig::default())?;
    cfg.latent_dim = gen.in_dim();
    let n = s.kv.get_or("n", GRID_SIDE * GRID_SIDE)?;
    let seed = s.seed()?;
    let imgs = match s.kv.get_str("exec").unwrap_or("exact") {
        "exact" => generate(&gen, n, &cfg, &Exec::Exact, seed)?,
        "hw" => {
            let hw = cfg.hardware_exec(pgan_core::rng::derive_seed(seed, 1));
            generate(&gen, n, &cfg, &Exec::Hardware(&hw), seed)?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown exec `{other}` (expected exact or hw)"
            )))
        }
    };
    let out = s.out();
    let per = GRID_SIDE * GRID_SIDE;
    for (k, start) in (0..n).step_by(per).enumerate() {
        let end = (start + per).min(n);
        image_grid(&imgs.slice(ndarray::s![start..end, ..]).to_owned())?
            .write_pgm(&out.join(format!("grid_{k:03}.pgm")))?;
    }
    let names: Vec<String> = (0..imgs.ncols()).map(|j| format!("p{j}")).collect();
    let mut t = CsvTable::new(&names.iter().map(String::as_str).collect::<Vec<_>>());
    for r in imgs.rows() {
        t.push(r.iter().map(|v| format_sig6(*v)).collect())?;
    }
    t.write(&out.join("samples.csv"))?;
    s.manifest("generate", &KvConfig::new())?;
    println!("wrote {n} images to {}", out.display());
    Ok(())
}

fn cmd_evaluate(s: &mut Settings, a: &EvaluateArgs) -> Result<()> {
    s.put_path("ckpt", &a.ckpt);
    s.put_path("classifier", &a.classifier);
    s.put("seeds", &a.seeds);
    s.put("digits", &a.digits);
    s.put_noise(&a.noise);
    s.put_path("mnist", &a.data.mnist);
    let gen = load_generator(s)?;
    let clf = read_checkpoint(&s.path("classifier")?)?;
    let digits = s.digits(Digits::One(7))?;
    let data = ExperimentData::load(&s.mnist_dir(), digits)?;
    let mut cfg = train_config_from_kv(&s.kv, &TrainConfig::default())?;
    cfg.latent_dim = gen.in_dim();
    let ev = FidEvaluator::new(clf, &data.reference, DEFAULT_FID_BATCH)?;
    let seeds = s.kv.get_or("seeds", 5u64)?;
    let base = s.seed()?;
    let mut t = CsvTable::new(&[
        "seed",
        "fid_ideal",
        "fid_noisy",
        "delta_fid",
        "diversity_std",
    ]);
    for k in 0..seeds {
        let seed = base + k;
        let r = ev.evaluate_run(&gen, &cfg, cfg.noise, seed, true)?;
        t.push(vec![
            seed.to_string(),
            format_sig6(r.fid_ideal),
            format_sig6(r.fid_noisy),
            format_sig6(r.delta_fid),
            r.diversity_std.map(format_sig6).unwrap_or_default(),
        ])?;
    }
    let out = s.out();
    t.write(&out.join("evaluation.csv"))?;
    s.manifest("evaluate", &KvConfig::new())?;
    print!("{}", t.to_text());
    Ok(())
}

fn load_sets(s: &Settings) -> Result<(pgan_core::harness::MnistSet, pgan_core::harness::MnistSet)> {
    let dir = s.mnist_dir();
    Ok((
        load_split(&dir, Split::Train)?,
        load_split(&dir, Split::Test)?,
    ))
}

fn cmd_compare(s: &mut Settings, a: &CompareArgs) -> Result<()> {
    s.put("digits", &a.digits);
    s.put("seeds", &a.seeds);
    s.put("epochs", &a.epochs);
    s.put("write_std", &a.write_std);
    s.put_path("classifier", &a.classifier);
    s.put_path("mnist", &a.data.mnist);
    if a.with_cr {
        s.kv.set("with_cr", true);
    }
    let digits = s.digits(Digits::One(7))?;
    let (train_set, test_set) = load_sets(s)?;
    let clf = classifier_for(s, &train_set, &test_set)?;
    let data = ExperimentData::new(&train_set, &test_set, digits)?;
    let ev = FidEvaluator::new(clf, &data.reference, DEFAULT_FID_BATCH)?;
    let base_seed = s.seed()?;
    let seeds: Vec<u64> = (0..s.kv.get_or("seeds", 5u64)?)
        .map(|k| base_seed + k)
        .collect();
    let mut cfg = ComparisonConfig::standard(seeds, s.kv.get_or("with_cr", false)?);
    cfg.base = s.train_config(digits)?;
    cfg.write_std = s.kv.get_or("write_std", cfg.write_std)?;
    let result = run_comparison(&data, &ev, &cfg)?;
    let out = s.out();
    result.write(&out)?;
    s.manifest("compare", &train_config_to_kv(&cfg.base))?;
    print!("{}", result.summary().to_text());
    Ok(())
}

fn cmd_sweep(s: &mut Settings, a: &SweepArgs) -> Result<()> {
    s.put("strategies", &a.strategies);
    s.put("levels", &a.levels);
    s.put("seeds", &a.seeds);
    s.put("digits", &a.digits);
    s.put("epochs", &a.epochs);
    s.put_path("classifier", &a.classifier);
    s.put_path("mnist", &a.data.mnist);
    let mut cfg = SweepConfig::standard();
    cfg.digits = s.digits(Digits::All)?;
    // The strategy key would select a single training strategy; sweeps use `strategies`.
    s.kv.set("strategy", "nf");
    cfg.base = s.train_config(cfg.digits)?;
    if let Some(names) = s.kv.get_list::<String>("strategies")? {
        cfg.strategies = names
            .iter()
            .map(|n| {
                let mut k = StrategyKind::from_name(n)?;
                match &mut k {
                    StrategyKind::IC { train_sigma } => {
                        *train_sigma = s.kv.get_or("train_sigma", *train_sigma)?
                    }
                    StrategyKind::WC { weight_noise_std } => {
                        *weight_noise_std = s.kv.get_or("weight_noise", *weight_noise_std)?
                    }
                    StrategyKind::CR {
                        weight_noise_std,
                        lambda,
                    } => {
                        *weight_noise_std = s.kv.get_or("weight_noise", *weight_noise_std)?;
                        *lambda = s.kv.get_or("lambda", *lambda)?;
                    }
                    StrategyKind::NF => {}
                }
                Ok(k)
            })
            .collect::<Result<_>>()?;
    }
    if let Some(levels) = s.kv.get_list::<f64>("levels")? {
        cfg.noise_levels = levels;
    }
    cfg.seeds = s.kv.get_or("seeds", cfg.seeds)?;
    cfg.validate()?;
    let (train_set, test_set) = load_sets(s)?;
    let clf = classifier_for(s, &train_set, &test_set)?;
    let data = ExperimentData::new(&train_set, &test_set, cfg.digits)?;
    let ev = FidEvaluator::new(clf, &data.reference, DEFAULT_FID_BATCH)?;
    let out = s.out();
    let rows = run_sweep(&data, &ev, &cfg, &out.join("sweep.csv"))?;
    let summary = sweep_summary_table(&sweep_summary(&rows));
    summary.write(&out.join("sweep_summary.csv"))?;
    s.manifest("sweep", &train_config_to_kv(&cfg.base))?;
    print!("{}", summary.to_text());
    Ok(())
}

fn cmd_train_classifier(s: &mut Settings, a: &DataArgs) -> Result<()> {
    s.put_path("mnist", &a.mnist);
    let (train_set, test_set) = load_sets(s)?;
    let cfg = ClassifierConfig {
        seed: s.seed()?,
        ..ClassifierConfig::default()
    };
    let path = s.out().join("classifier.ckpt");
    if path.exists() {
        std::fs::remove_file(&path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    let clf = load_or_train_classifier(&train_set, &test_set, &cfg, Some(&path))?;
    let acc = accuracy(&clf, &test_set.images, &test_set.labels)?;
    s.manifest("train-classifier", &KvConfig::new())?;
    println!(
        "held-out accuracy {} ; classifier in {}",
        format_sig6(acc),
        path.display()
    );
    Ok(())
}

fn configure_workers(workers: Option<usize>) -> Result<()> {
    let Some(n) = workers else { return Ok(()) };
    if n == 0 {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_workers(cli.workers)?;
    let mut s = Settings::new(&cli)?;
    let sequential = cli.workers == Some(1);
    let go = |s: &mut Settings| match &cli.command {
        Command::RngTest(a) => cmd_rng_test(s, a),
        Command::CoreCalibrate(a) => cmd_core_calibrate(s, a),
        Command::Train(a) => cmd_train(s, a),
        Command::Generate(a) => cmd_generate(s, a),
        Command::Evaluate(a) => cmd_evaluate(s, a),
        Command::Compare(a) => cmd_compare(s, a),
        Command::Sweep(a) => cmd_sweep(s, a),
        Command::TrainClassifier(a) => cmd_train_classifier(s, a),
    };
    if sequential {
        pgan_core::par::sequential(|| go(&mut s))
    } else {
        go(&mut s)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "error: {}: {}",
                e.category(),
                e.to_string().replace('\n', " ")
            );
            ExitCode::FAILURE
        }
    }
}
