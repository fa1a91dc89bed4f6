//! Strategy comparison and noise sweeps.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use ndarray::{s, Array2};

use crate::error::{Error, Result};
use crate::eval::{
    train_feature_classifier, ClassifierConfig, FidEvaluator, FidReport, DEFAULT_FID_BATCH,
};
use crate::gan::{
    generate_from_latents, sample_latents, train, StrategyKind, TrainConfig, TrainingRun,
};
use crate::harness::artifacts::{format_sig6, image_grid, CsvTable, GrayImage, GRID_SIDE};
use crate::harness::{filter_digit, load_split, MnistSet, Split};
use crate::nn::{read_checkpoint, write_checkpoint, DenseNet, Exec};
use crate::pmmc::NoiseSpec;
use crate::{par, rng};

/// Seed label for evaluation draws derived from a training seed.
const EVAL_LABEL: u64 = 0xE7A1;

/// Training digits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Digits {
    One(u8),
    All,
}

impl Digits {
    pub fn is_all(&self) -> bool {
        matches!(self, Digits::All)
    }
}

impl FromStr for Digits {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Digits::All),
            d => match d.parse::<u8>() {
                Ok(v) if v <= 9 => Ok(Digits::One(v)),
                _ => Err(Error::Config(format!(
                    "digits must be 0..9 or `all`, got `{d}`"
                ))),
            },
        }
    }
}

impl std::fmt::Display for Digits {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Digits::One(d) => write!(f, "{d}"),
            Digits::All => f.write_str("all"),
        }
    }
}

/// Training settings used by the comparison and sweep experiments: 100 epochs on one digit,
/// 10 epochs on all ten (about the same number of steps), Adam at `2e-4`.
pub fn experiment_train_config(digits: Digits) -> TrainConfig {
    let mut cfg = TrainConfig {
        epochs: if digits.is_all() { 10 } else { 100 },
        ..TrainConfig::default()
    };
    cfg.adam.learning_rate = 2e-4;
    cfg
}

/// Training images plus the held-out FID reference for one digit selection.
#[derive(Clone, Debug)]
pub struct ExperimentData {
    pub digits: Digits,
    pub train: MnistSet,
    /// Test-split images (pixels in `[-1, 1]`), at most [`DEFAULT_FID_BATCH`].
    pub reference: Array2<f64>,
}

impl ExperimentData {
    pub fn new(train_set: &MnistSet, test_set: &MnistSet, digits: Digits) -> Result<Self> {
        let (train, test) = match digits {
            Digits::All => (train_set.clone(), test_set.clone()),
            Digits::One(d) => (filter_digit(train_set, d)?, filter_digit(test_set, d)?),
        };
        let n = test.len().min(DEFAULT_FID_BATCH);
        Ok(Self {
            digits,
            train,
            reference: test.images.slice(s![..n, ..]).to_owned(),
        })
    }

    pub fn load(mnist_dir: &Path, digits: Digits) -> Result<Self> {
        let train = load_split(mnist_dir, Split::Train)?;
        let test = load_split(mnist_dir, Split::Test)?;
        Self::new(&train, &test, digits)
    }
}

/// Reads the classifier from `cache` when it exists, otherwise trains it on `train` (checked
/// on `test`) and writes it there.
pub fn load_or_train_classifier(
    train_set: &MnistSet,
    test_set: &MnistSet,
    cfg: &ClassifierConfig,
    cache: Option<&Path>,
) -> Result<DenseNet> {
    if let Some(p) = cache.filter(|p| p.exists()) {
        return read_checkpoint(p);
    }
    let (clf, _) = train_feature_classifier(
        (&train_set.images, &train_set.labels),
        (&test_set.images, &test_set.labels),
        cfg,
    )?;
    if let Some(p) = cache {
        write_checkpoint(&clf, p)?;
    }
    Ok(clf)
}

fn strategy_config(base: &TrainConfig, strategy: StrategyKind, seed: u64) -> TrainConfig {
    TrainConfig {
        strategy,
        seed,
        ..base.clone()
    }
}

/// Deployment noise with the given write STD and the base config's read noise and regime.
fn deployment(base: &TrainConfig, write_std: f64) -> Result<NoiseSpec> {
    NoiseSpec::new(write_std, base.noise.read_std, base.noise.regime)
}

/// Seed for evaluating a model trained with `seed` at `write_std`.
pub fn eval_seed(seed: u64, write_std: f64) -> u64 {
    rng::derive_seed(rng::derive_seed(seed, EVAL_LABEL), write_std.to_bits())
}

/// `GRID_SIDE²` images from `gen` in `[0, 1]`, exact or on hardware with `noise`.
pub fn sample_grid(
    gen: &DenseNet,
    cfg: &TrainConfig,
    noise: Option<NoiseSpec>,
    seed: u64,
) -> Result<GrayImage> {
    let z = sample_latents(
        GRID_SIDE * GRID_SIDE,
        gen.in_dim(),
        cfg.infer_sigma,
        cfg.latent_mode,
        seed,
    )?;
    let imgs = match noise {
        None => generate_from_latents(gen, &z, &Exec::Exact)?,
        Some(n) => {
            let hw = TrainConfig {
                noise: n,
                ..cfg.clone()
            }
            .hardware_exec(rng::derive_seed(seed, 1));
            generate_from_latents(gen, &z, &Exec::Hardware(&hw))?
        }
    };
    image_grid(&imgs)
}

#[derive(Clone, Debug)]
pub struct ComparisonConfig {
    pub strategies: Vec<StrategyKind>,
    pub seeds: Vec<u64>,
    /// Deployment write noise for the noisy evaluation.
    pub write_std: f64,
    pub base: TrainConfig,
}

impl ComparisonConfig {
    /// NF, IC and WC (plus CR when `with_cr`) at default parameters, 5% write noise.
    pub fn standard(seeds: Vec<u64>, with_cr: bool) -> Self {
        let mut strategies: Vec<StrategyKind> = ["nf", "ic", "wc"]
            .iter()
            .map(|s| StrategyKind::from_name(s).expect("known strategy"))
            .collect();
        if with_cr {
            strategies.push(StrategyKind::from_name("cr").expect("known strategy"));
        }
        Self {
            strategies,
            seeds,
            write_std: NoiseSpec::DEFAULT_WRITE_STD,
            base: experiment_train_config(Digits::One(7)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CellOutput {
    pub report: FidReport,
    pub ideal_grid: GrayImage,
    pub noisy_grid: GrayImage,
    pub run: TrainingRun,
}

/// One (strategy, seed) cell of the comparison; a failed cell keeps its error message.
#[derive(Clone, Debug)]
pub struct ComparisonCell {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub outcome: std::result::Result<CellOutput, String>,
}

#[derive(Clone, Debug)]
pub struct ComparisonResult {
    pub write_std: f64,
    pub cells: Vec<ComparisonCell>,
}

/// Trains every (strategy, seed) cell and scores it ideal and at `cfg.write_std`.
/// A failing cell is recorded and the remaining cells still run.
pub fn run_comparison(
    data: &ExperimentData,
    evaluator: &FidEvaluator,
    cfg: &ComparisonConfig,
) -> Result<ComparisonResult> {
    if cfg.strategies.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Config(
            "comparison needs at least one strategy and one seed".into(),
        ));
    }
    let noise = deployment(&cfg.base, cfg.write_std)?;
    let n_seeds = cfg.seeds.len();
    let cells = par::map_indexed(cfg.strategies.len() * n_seeds, |i| {
        let strategy = cfg.strategies[i / n_seeds];
        let seed = cfg.seeds[i % n_seeds];
        let tc = strategy_config(&cfg.base, strategy, seed);
        let outcome = (|| -> Result<CellOutput> {
            let run = train(&tc, &data.train.images)?;
            let es = eval_seed(seed, cfg.write_std);
            let report =
                evaluator.evaluate_run(&run.generator, &tc, noise, es, data.digits.is_all())?;
            Ok(CellOutput {
                ideal_grid: sample_grid(&run.generator, &tc, None, es)?,
                noisy_grid: sample_grid(&run.generator, &tc, Some(noise), es)?,
                report,
                run,
            })
        })()
        .map_err(|e| format!("{}: {e}", e.category()));
        ComparisonCell {
            strategy,
            seed,
            outcome,
        }
    });
    Ok(ComparisonResult {
        write_std: cfg.write_std,
        cells,
    })
}

/// Median of the values; `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

impl ComparisonResult {
    /// Successful reports of `strategy` by seed.
    pub fn reports(&self, strategy: &str) -> BTreeMap<u64, &FidReport> {
        self.cells
            .iter()
            .filter(|c| c.strategy.name() == strategy)
            .filter_map(|c| c.outcome.as_ref().ok().map(|o| (c.seed, &o.report)))
            .collect()
    }

    /// One row per cell: strategy, seed, fid_ideal, fid_noisy, delta_fid, diversity_std,
    /// status.
    pub fn table(&self) -> CsvTable {
        let mut t = CsvTable::new(&[
            "strategy",
            "seed",
            "fid_ideal",
            "fid_noisy",
            "delta_fid",
            "diversity_std",
            "status",
        ]);
        for c in &self.cells {
            let row = match &c.outcome {
                Ok(o) => vec![
                    c.strategy.name().to_string(),
                    c.seed.to_string(),
                    format_sig6(o.report.fid_ideal),
                    format_sig6(o.report.fid_noisy),
                    format_sig6(o.report.delta_fid),
                    o.report.diversity_std.map(format_sig6).unwrap_or_default(),
                    "ok".into(),
                ],
                Err(e) => vec![
                    c.strategy.name().to_string(),
                    c.seed.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    e.replace(',', ";"),
                ],
            };
            t.push(row).expect("fixed width");
        }
        t
    }

    /// Per-strategy medians over successful seeds.
    pub fn summary(&self) -> CsvTable {
        let mut t = CsvTable::new(&[
            "strategy",
            "seeds_ok",
            "median_fid_ideal",
            "median_fid_noisy",
            "median_delta_fid",
        ]);
        let mut seen = Vec::new();
        for c in &self.cells {
            let name = c.strategy.name();
            if seen.contains(&name) {
                continue;
            }
            seen.push(name);
            let r = self.reports(name);
            let col = |f: fn(&FidReport) -> f64| {
                median(&r.values().map(|x| f(x)).collect::<Vec<_>>())
                    .map(format_sig6)
                    .unwrap_or_default()
            };
            t.push(vec![
                name.to_string(),
                r.len().to_string(),
                col(|x| x.fid_ideal),
                col(|x| x.fid_noisy),
                col(|x| x.delta_fid),
            ])
            .expect("fixed width");
        }
        t
    }

    /// `comparison.csv`, `comparison_summary.csv` and a pair of sample grids per cell.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.table().write(&dir.join("comparison.csv"))?;
        self.summary().write(&dir.join("comparison_summary.csv"))?;
        let w = format_sig6(self.write_std);
        for c in &self.cells {
            if let Ok(o) = &c.outcome {
                let stem = format!("{}_seed{}", c.strategy.name(), c.seed);
                o.ideal_grid
                    .write_pgm(&dir.join("grids").join(format!("{stem}_w0.pgm")))?;
                o.noisy_grid
                    .write_pgm(&dir.join("grids").join(format!("{stem}_w{w}.pgm")))?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub strategies: Vec<StrategyKind>,
    /// Deployment write STDs, ascending.
    pub noise_levels: Vec<f64>,
    /// Seeds `0..seeds` are trained for every strategy.
    pub seeds: u64,
    pub digits: Digits,
    pub base: TrainConfig,
}

impl SweepConfig {
    pub const DEFAULT_LEVELS: [f64; 6] = [0.0, 0.01, 0.025, 0.05, 0.075, 0.10];
    pub const DEFAULT_SEEDS: u64 = 5;

    /// NF and CR on all digits over the default noise grid.
    pub fn standard() -> Self {
        Self {
            strategies: vec![
                StrategyKind::NF,
                StrategyKind::from_name("cr").expect("known strategy"),
            ],
            noise_levels: Self::DEFAULT_LEVELS.to_vec(),
            seeds: Self::DEFAULT_SEEDS,
            digits: Digits::All,
            base: experiment_train_config(Digits::All),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() || self.noise_levels.is_empty() || self.seeds == 0 {
            return Err(Error::Config(
                "sweep needs at least one strategy, noise level and seed".into(),
            ));
        }
        if self
            .noise_levels
            .iter()
            .any(|w| !(*w >= 0.0 && w.is_finite()))
        {
            return Err(Error::Config("noise levels must be finite and >= 0".into()));
        }
        if self.noise_levels.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::Config(
                "noise levels must be strictly ascending".into(),
            ));
        }
        let mut names: Vec<&str> = self.strategies.iter().map(StrategyKind::name).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.strategies.len() {
            return Err(Error::Config("sweep strategies must be distinct".into()));
        }
        for s in &self.strategies {
            s.validate()?;
        }
        self.base.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub strategy: String,
    pub write_std: f64,
    pub seed: u64,
    pub fid: f64,
    pub diversity_std: f64,
}

pub const SWEEP_HEADER: [&str; 5] = ["strategy", "write_std", "seed", "fid", "diversity_std"];

impl SweepRow {
    fn cells(&self) -> Vec<String> {
        vec![
            self.strategy.clone(),
            format_sig6(self.write_std),
            self.seed.to_string(),
            format_sig6(self.fid),
            format_sig6(self.diversity_std),
        ]
    }

    fn key(&self) -> (String, String, u64) {
        (
            self.strategy.clone(),
            format_sig6(self.write_std),
            self.seed,
        )
    }

    fn from_cells(cells: &[String], context: &str) -> Result<Self> {
        let num = |i: usize| {
            cells[i]
                .parse::<f64>()
                .map_err(|_| Error::parse(context, format!("bad number `{}`", cells[i])))
        };
        Ok(Self {
            strategy: cells[0].clone(),
            write_std: num(1)?,
            seed: cells[2]
                .parse()
                .map_err(|_| Error::parse(context, format!("bad seed `{}`", cells[2])))?,
            fid: num(3)?,
            diversity_std: num(4)?,
        })
    }
}

fn read_sweep_rows(path: &Path) -> Result<Vec<SweepRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let t = CsvTable::read(path)?;
    if t.header != SWEEP_HEADER {
        return Err(Error::parse(
            path.display().to_string(),
            format!("unexpected sweep header {:?}", t.header),
        ));
    }
    t.rows
        .iter()
        .map(|r| SweepRow::from_cells(r, &path.display().to_string()))
        .collect()
}

/// Every (strategy, noise level, seed) point of the sweep, written to `csv_path`.
///
/// One model is trained per (strategy, seed) and evaluated at every noise level with fresh
/// deployment draws. Rows are appended to `csv_path` as each model finishes; points already
/// present in the file are not recomputed. On completion the file is rewritten in
/// (strategy, noise level, seed) order, so an interrupted and resumed sweep ends with the
/// same file as an uninterrupted one.
pub fn run_sweep(
    data: &ExperimentData,
    evaluator: &FidEvaluator,
    cfg: &SweepConfig,
    csv_path: &Path,
) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut done: BTreeMap<(String, String, u64), SweepRow> = read_sweep_rows(csv_path)?
        .into_iter()
        .map(|r| (r.key(), r))
        .collect();
    if !csv_path.exists() {
        CsvTable::new(&SWEEP_HEADER).write(csv_path)?;
    }
    let units: Vec<(StrategyKind, u64)> = cfg
        .strategies
        .iter()
        .flat_map(|s| (0..cfg.seeds).map(move |seed| (*s, seed)))
        .filter(|(s, seed)| {
            cfg.noise_levels
                .iter()
                .any(|w| !done.contains_key(&(s.name().to_string(), format_sig6(*w), *seed)))
        })
        .collect();
    let file = OpenOptions::new()
        .append(true)
        .open(csv_path)
        .map_err(|e| Error::io(csv_path, e))?;
    let sink = Mutex::new(file);
    let fresh = par::try_map_indexed(units.len(), |i| -> Result<Vec<SweepRow>> {
        let (strategy, seed) = units[i];
        let tc = strategy_config(&cfg.base, strategy, seed);
        let run = train(&tc, &data.train.images)?;
        let mut rows = Vec::with_capacity(cfg.noise_levels.len());
        for &w in &cfg.noise_levels {
            let key = (strategy.name().to_string(), format_sig6(w), seed);
            if done.contains_key(&key) {
                continue;
            }
            let r = evaluator.evaluate_run(
                &run.generator,
                &tc,
                deployment(&cfg.base, w)?,
                eval_seed(seed, w),
                true,
            )?;
            rows.push(SweepRow {
                strategy: strategy.name().to_string(),
                write_std: w,
                seed,
                fid: r.fid_noisy,
                diversity_std: r.diversity_std.unwrap_or(f64::NAN),
            });
        }
        let text: String = rows.iter().map(|r| r.cells().join(",") + "\n").collect();
        let mut f = sink.lock().unwrap_or_else(|p| p.into_inner());
        f.write_all(text.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| Error::io(csv_path, e))?;
        Ok(rows)
    })?;
    // Round-trip through the file format so resumed and uninterrupted sweeps agree.
    for r in fresh.into_iter().flatten() {
        let r = SweepRow::from_cells(&r.cells(), &csv_path.display().to_string())?;
        done.insert(r.key(), r);
    }
    let mut rows = Vec::new();
    for s in &cfg.strategies {
        for &w in &cfg.noise_levels {
            for seed in 0..cfg.seeds {
                let key = (s.name().to_string(), format_sig6(w), seed);
                rows.push(done.remove(&key).expect("every sweep point computed"));
            }
        }
    }
    sweep_table(&rows).write(csv_path)?;
    Ok(rows)
}

pub fn sweep_table(rows: &[SweepRow]) -> CsvTable {
    let mut t = CsvTable::new(&SWEEP_HEADER);
    for r in rows {
        t.push(r.cells()).expect("fixed width");
    }
    t
}

/// Aggregate of one (strategy, noise level) point over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub strategy: String,
    pub write_std: f64,
    pub seeds: usize,
    pub median_fid: f64,
    pub min_fid: f64,
    pub max_fid: f64,
    pub median_diversity: f64,
}

/// Median with min/max band per (strategy, noise level), in first-appearance order.
pub fn sweep_summary(rows: &[SweepRow]) -> Vec<SweepPoint> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let k = (r.strategy.clone(), format_sig6(r.write_std));
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(s, w)| {
            let pts: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.strategy == s && format_sig6(r.write_std) == w)
                .collect();
            let fids: Vec<f64> = pts.iter().map(|r| r.fid).collect();
            let divs: Vec<f64> = pts.iter().map(|r| r.diversity_std).collect();
            SweepPoint {
                strategy: s,
                write_std: pts[0].write_std,
                seeds: pts.len(),
                median_fid: median(&fids).expect("non-empty"),
                min_fid: fids.iter().copied().fold(f64::INFINITY, f64::min),
                max_fid: fids.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                median_diversity: median(&divs).expect("non-empty"),
            }
        })
        .collect()
}

pub fn sweep_summary_table(points: &[SweepPoint]) -> CsvTable {
    let mut t = CsvTable::new(&[
        "strategy",
        "write_std",
        "seeds",
        "median_fid",
        "min_fid",
        "max_fid",
        "median_diversity_std",
    ]);
    for p in points {
        t.push(vec![
            p.strategy.clone(),
            format_sig6(p.write_std),
            p.seeds.to_string(),
            format_sig6(p.median_fid),
            format_sig6(p.min_fid),
            format_sig6(p.max_fid),
            format_sig6(p.median_diversity),
        ])
        .expect("fixed width");
    }
    t
}
