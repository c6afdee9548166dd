//! Subcommand configurations and their implementations.
//!
//! Each subcommand has a JSON configuration. Values come from flags first,
//! then from the `--config` file, then from the defaults below.

use std::path::{Path, PathBuf};

use entroseg::dataset::{read_dataset, read_manifest, write_dataset};
use entroseg::extraction::{coverage, extract_esl, extract_ssl, pseudo_label_diff, Coverage, DiffCounts};
use entroseg::mapcore::{write_probmap, write_pseudolabels};
use entroseg::metrics::{iou, ConfusionMatrix, IncorrectRatios, MetricsReport};
use entroseg::model::{evaluate_miou, forward, train_uda, write_checkpoint, TrainConfig, TrainingSet};
use entroseg::provenance::config_hash;
use entroseg::render::{comparison_panel, render_diff, render_entropy, render_pseudolabels, write_png};
use entroseg::selftrain::{
    run_selftrain_full, sweep_nu_full, write_sweep, ExtractionMode, SelfTrainPlan,
};
use entroseg::synth::{Benchmark, Dataset};
use entroseg::thresholds::{ClassSampleBag, ClassThresholds};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::fail::{CliResult, Failure};
use crate::maps::{self, MapKind};
use crate::run::{create_dir, write_json, Prepared, Run};

/// Options shared by every subcommand.
#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// JSON configuration; flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Parent of the content-addressed run directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Recompute even when a complete run with the same key exists.
    #[arg(long)]
    pub force: bool,
    /// Print the effective configuration and exit.
    #[arg(long)]
    pub print_config: bool,
}

const DEFAULT_OUT: &str = "out";

pub fn load_config<T: DeserializeOwned>(path: Option<&Path>, default: impl FnOnce() -> T) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(default());
    };
    let bytes = std::fs::read(path).map_err(|e| Failure::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

/// Runs `body` in the run directory unless an identical run is complete.
/// Prints the run directory as the last line of standard output.
fn execute<C: Serialize>(
    common: &Common,
    command: &str,
    config: &C,
    seeds: Vec<u64>,
    inputs: &[PathBuf],
    out_fallback: Option<&Path>,
    body: impl FnOnce(&Path) -> CliResult<()>,
) -> CliResult<()> {
    if common.print_config {
        let text = serde_json::to_string_pretty(config)
            .map_err(|e| Failure::Validation(format!("config: {e}")))?;
        println!("{text}");
        return Ok(());
    }
    let out = common
        .out
        .as_deref()
        .or(out_fallback)
        .unwrap_or(Path::new(DEFAULT_OUT));
    match Run::prepare(out, command, config, seeds, inputs, common.force)? {
        Prepared::Done(dir) => {
            eprintln!("up to date");
            println!("{}", dir.display());
        }
        Prepared::Fresh(run) => {
            body(&run.dir)?;
            let dir = run.finish()?;
            println!("{}", dir.display());
        }
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| Failure::io(path, e))
}

/// The manifest and every file it references.
fn dataset_inputs(manifest: &Path) -> CliResult<Vec<PathBuf>> {
    let m = read_manifest(manifest)?;
    let root = manifest.parent().unwrap_or(Path::new("."));
    let mut files = vec![manifest.to_path_buf()];
    files.extend(m.files().map(|f| root.join(f)));
    Ok(files)
}

// ---------------------------------------------------------------- synth

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub n_source: Option<usize>,
    #[arg(long)]
    pub n_target: Option<usize>,
    #[arg(long)]
    pub n_eval: Option<usize>,
}

pub fn synth(a: SynthArgs) -> CliResult<()> {
    let mut b: Benchmark = load_config(a.common.config.as_deref(), || {
        Benchmark::default_with_seed(a.seed.unwrap_or(0))
    })?;
    set(&mut b.scene.seed, a.seed);
    set(&mut b.scene.height, a.height);
    set(&mut b.scene.width, a.width);
    set(&mut b.n_source, a.n_source);
    set(&mut b.n_target, a.n_target);
    set(&mut b.n_eval, a.n_eval);
    b.validate()?;
    execute(&a.common, "synth", &b, vec![b.scene.seed], &[], None, |dir| {
        let data = b.generate()?;
        write_dataset(dir, &data)?;
        Ok(())
    })
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCommandConfig {
    pub train: TrainConfig,
    pub track_target_miou: bool,
}

/// Training hyperparameters settable from the command line.
#[derive(Debug, Clone, clap::Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub lr_f: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub lr_d: Option<f64>,
    #[arg(long)]
    pub lambda_adv: Option<f64>,
    #[arg(long)]
    pub lambda_sl: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl TrainFlags {
    fn apply(&self, t: &mut TrainConfig) {
        set(&mut t.lr_f, self.lr_f);
        set(&mut t.momentum, self.momentum);
        set(&mut t.weight_decay, self.weight_decay);
        set(&mut t.lr_d, self.lr_d);
        set(&mut t.lambda_adv, self.lambda_adv);
        set(&mut t.lambda_sl, self.lambda_sl);
        set(&mut t.epochs, self.epochs);
        set(&mut t.batch, self.batch);
        set(&mut t.seed, self.seed);
    }
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Dataset manifest written by `synth`.
    #[arg(long, value_name = "MANIFEST")]
    pub data: PathBuf,
    /// Pseudo-labels for the target scenes, one .segl per scene in manifest order.
    #[arg(long, value_name = "DIR")]
    pub pseudo: Option<PathBuf>,
    #[arg(long)]
    pub track_target_miou: bool,
}

fn eval_pairs(data: &Dataset) -> Vec<(&entroseg::mapcore::FeatureMap, &entroseg::mapcore::LabelMap)> {
    data.target_eval.iter().map(|s| (&s.features, &s.labels)).collect()
}

pub fn train(a: TrainArgs) -> CliResult<()> {
    let mut cfg: TrainCommandConfig = load_config(a.common.config.as_deref(), Default::default)?;
    a.train.apply(&mut cfg.train);
    cfg.track_target_miou |= a.track_target_miou;
    cfg.train.validate()?;
    let mut inputs = dataset_inputs(&a.data)?;
    let pseudo_files = match &a.pseudo {
        Some(dir) => maps::list(dir, &["segl"])?,
        None => Vec::new(),
    };
    inputs.extend(pseudo_files.iter().cloned());
    execute(&a.common, "train", &cfg, vec![cfg.train.seed], &inputs, None, |dir| {
        let data = read_dataset(&a.data)?;
        let pseudo = pseudo_files
            .iter()
            .map(|p| maps::pseudo(p))
            .collect::<CliResult<Vec<_>>>()?;
        if a.pseudo.is_some() && pseudo.len() != data.target.len() {
            return Err(Failure::Validation(format!(
                "{} pseudo-label maps for {} target scenes",
                pseudo.len(),
                data.target.len()
            )));
        }
        let set = TrainingSet {
            source: data.source.iter().map(|s| (&s.features, &s.labels)).collect(),
            target: data.target.iter().map(|s| &s.features).collect(),
            pseudo: a.pseudo.is_some().then(|| pseudo.iter().collect()),
        };
        let eval = eval_pairs(&data);
        let tracked = cfg.track_target_miou.then_some(eval.as_slice());
        let outcome = train_uda(&set, tracked, &cfg.train)?;
        write_checkpoint(
            dir.join("checkpoint.bin"),
            &outcome.classifier,
            &outcome.discriminator,
            &config_hash(&cfg),
        )?;
        write_json(&dir.join("train_log.json"), &outcome.log)?;
        let metrics = MetricsReport::from_iou(evaluate_miou(&outcome.classifier, &eval)?);
        write_text(&dir.join("metrics.csv"), &metrics.to_csv())?;
        print!("{}", metrics.to_text());
        let preds = dir.join("preds");
        create_dir(&preds)?;
        for (i, s) in data.target.iter().enumerate() {
            let p = forward(&outcome.classifier, &s.features)?.to_probmap();
            write_probmap(&p, preds.join(format!("{i:04}.segp")))?;
        }
        Ok(())
    })
}

// ----------------------------------------------------------- thresholds

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub mode: ExtractionMode,
    pub mu_star: Option<f64>,
    pub nu_star: Option<f64>,
    pub median_mode: bool,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            mode: ExtractionMode::Esl,
            mu_star: None,
            nu_star: None,
            median_mode: false,
        }
    }
}

impl ExtractionConfig {
    fn hyper_slot(&mut self) -> &mut Option<f64> {
        match self.mode {
            ExtractionMode::Ssl => &mut self.mu_star,
            ExtractionMode::Esl => &mut self.nu_star,
        }
    }

    /// Fills the hyperparameter of the active mode with its default.
    fn resolve_defaults(&mut self) {
        let plan = SelfTrainPlan::default();
        self.mu_star.get_or_insert(plan.mu_star);
        self.nu_star.get_or_insert(plan.nu_star);
    }

    fn hyper(&self) -> Option<f64> {
        let h = match self.mode {
            ExtractionMode::Ssl => self.mu_star,
            ExtractionMode::Esl => self.nu_star,
        };
        (!self.median_mode).then_some(h).flatten()
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct ExtractionFlags {
    /// Confidence rule: ssl (softmax) or esl (entropy).
    #[arg(long)]
    pub mode: Option<ExtractionMode>,
    #[arg(long)]
    pub mu_star: Option<f64>,
    #[arg(long)]
    pub nu_star: Option<f64>,
    /// Per-class medians without the hyperparameter clamp (esl only).
    #[arg(long)]
    pub median_mode: bool,
}

impl ExtractionFlags {
    fn apply(&self, c: &mut ExtractionConfig) {
        set(&mut c.mode, self.mode);
        if self.mu_star.is_some() {
            c.mu_star = self.mu_star;
        }
        if self.nu_star.is_some() {
            c.nu_star = self.nu_star;
        }
        c.median_mode |= self.median_mode;
    }
}

fn compute_thresholds(cfg: &ExtractionConfig, probs_paths: &[PathBuf]) -> CliResult<ClassThresholds> {
    let probs = maps::probs(probs_paths)?;
    let c = probs[0].num_classes();
    let mut bag = ClassSampleBag::new(cfg.mode.kind(), c);
    for (p, path) in probs.iter().zip(probs_paths) {
        match cfg.mode {
            ExtractionMode::Ssl => bag.accumulate(p)?,
            ExtractionMode::Esl => bag.accumulate_with_entropy(p, Some(&maps::entropies(path)?))?,
        }
    }
    Ok(match (cfg.mode, cfg.hyper()) {
        (_, None) => ClassThresholds::median_only(&bag)?,
        (ExtractionMode::Ssl, Some(mu)) => ClassThresholds::compute_mu(&bag, mu)?,
        (ExtractionMode::Esl, Some(nu)) => ClassThresholds::compute_nu(&bag, nu)?,
    })
}

#[derive(Debug, clap::Args)]
pub struct ThresholdsArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub extraction: ExtractionFlags,
    /// Directory of .segp probability maps.
    #[arg(long = "in", value_name = "DIR")]
    pub input: PathBuf,
}

pub fn thresholds(a: ThresholdsArgs) -> CliResult<()> {
    let mut cfg: ExtractionConfig = load_config(a.common.config.as_deref(), Default::default)?;
    a.extraction.apply(&mut cfg);
    cfg.resolve_defaults();
    let files = maps::list(&a.input, &["segp"])?;
    execute(&a.common, "thresholds", &cfg, vec![], &files, None, |dir| {
        let t = compute_thresholds(&cfg, &files)?;
        t.write_json(dir.join("thresholds.json"))?;
        let text = t.report().to_text();
        write_text(&dir.join("thresholds.txt"), &text)?;
        print!("{text}");
        Ok(())
    })
}

// -------------------------------------------------------------- extract

#[derive(Debug, clap::Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub extraction: ExtractionFlags,
    /// Directory of .segp probability maps.
    #[arg(long = "in", value_name = "DIR")]
    pub input: PathBuf,
    /// Precomputed thresholds; computed from the inputs when absent.
    #[arg(long, value_name = "FILE")]
    pub thresholds: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct FileCoverage {
    name: String,
    labeled_fraction: f64,
}

#[derive(Debug, Serialize)]
struct ExtractSummary {
    thresholds: entroseg::thresholds::ThresholdsReport,
    coverage: Coverage,
    files: Vec<FileCoverage>,
}

/// Reconciles the configuration with a thresholds file; a differing kind or hyperparameter is an error.
fn reconcile(cfg: &mut ExtractionConfig, t: &ClassThresholds, path: &Path) -> CliResult<()> {
    if t.kind() != cfg.mode.kind() {
        return Err(Failure::Validation(format!(
            "{}: thresholds of kind {:?} cannot drive {} extraction",
            path.display(),
            t.kind(),
            cfg.mode.name()
        )));
    }
    if t.is_median_only() {
        if cfg.hyper_slot().is_some() && !cfg.median_mode {
            return Err(Failure::Validation(format!(
                "{}: median-only thresholds, but a hyperparameter was given",
                path.display()
            )));
        }
        cfg.median_mode = true;
        return Ok(());
    }
    if cfg.median_mode {
        return Err(Failure::Validation(format!(
            "{}: thresholds were clamped with hyperparameter {}, not median mode",
            path.display(),
            t.hyper()
        )));
    }
    let slot = cfg.hyper_slot();
    match *slot {
        Some(h) if h != t.hyper() => Err(Failure::Validation(format!(
            "{}: thresholds use hyperparameter {}, but {h} was requested",
            path.display(),
            t.hyper()
        ))),
        _ => {
            *slot = Some(t.hyper());
            Ok(())
        }
    }
}

pub fn extract(a: ExtractArgs) -> CliResult<()> {
    let mut cfg: ExtractionConfig = load_config(a.common.config.as_deref(), Default::default)?;
    a.extraction.apply(&mut cfg);
    let given = match &a.thresholds {
        Some(path) => {
            let t = ClassThresholds::read_json(path)?;
            reconcile(&mut cfg, &t, path)?;
            Some(t)
        }
        None => None,
    };
    cfg.resolve_defaults();
    let files = maps::list(&a.input, &["segp"])?;
    let mut inputs = files.clone();
    inputs.extend(a.thresholds.iter().cloned());
    execute(&a.common, "extract", &cfg, vec![], &inputs, None, |dir| {
        let t = match given {
            Some(t) => t,
            None => compute_thresholds(&cfg, &files)?,
        };
        let mut total = Coverage::empty(t.num_classes());
        let mut per_file = Vec::new();
        for path in &files {
            let p = entroseg::mapcore::read_probmap(path)?;
            let pseudo = match cfg.mode {
                ExtractionMode::Ssl => extract_ssl(&p, &t)?,
                ExtractionMode::Esl => extract_esl(&p, &maps::entropies(path)?, &t)?,
            };
            let name = maps::stem(path);
            write_pseudolabels(&pseudo, dir.join(format!("{name}.segl")))?;
            let cov = coverage(&pseudo);
            per_file.push(FileCoverage {
                name,
                labeled_fraction: cov.labeled_fraction,
            });
            total.add(&cov);
        }
        t.write_json(dir.join("thresholds.json"))?;
        println!(
            "{} maps, {} of {} pixels labeled ({:.4})",
            files.len(),
            total.labeled,
            total.total,
            total.labeled_fraction
        );
        write_json(
            &dir.join("summary.json"),
            &ExtractSummary {
                thresholds: t.report(),
                coverage: total,
                files: per_file,
            },
        )
    })
}

// -------------------------------------------------------------- metrics

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Expected number of classes; taken from the files when absent.
    pub classes: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub common: Common,
    /// Predictions: .segl label maps or .segp probability maps (argmax).
    #[arg(long, value_name = "DIR")]
    pub pred: PathBuf,
    /// Ground-truth .segl maps with the same file names.
    #[arg(long, value_name = "DIR")]
    pub gt: PathBuf,
    #[arg(long)]
    pub classes: Option<usize>,
}

pub fn metrics(a: MetricsArgs) -> CliResult<()> {
    let mut cfg: MetricsConfig = load_config(a.common.config.as_deref(), Default::default)?;
    if a.classes.is_some() {
        cfg.classes = a.classes;
    }
    let preds = maps::list(&a.pred, &["segl", "segp"])?;
    let pairs = maps::pair_with(&preds, &a.gt, "segl")?;
    let inputs: Vec<PathBuf> = pairs.iter().flat_map(|(p, g)| [p.clone(), g.clone()]).collect();
    execute(&a.common, "metrics", &cfg, vec![], &inputs, None, |dir| {
        let mut cm: Option<ConfusionMatrix> = None;
        let mut ratios: Option<IncorrectRatios> = None;
        let mut cov: Option<Coverage> = None;
        for (p, g) in &pairs {
            let pred = maps::prediction(p)?;
            let gt = maps::labels(g)?;
            let c = cfg.classes.unwrap_or(gt.num_classes());
            for (what, n) in [("prediction", pred.num_classes()), ("ground truth", gt.num_classes())] {
                if n != c {
                    return Err(Failure::Validation(format!(
                        "{}: {what} has {n} classes, expected {c}",
                        p.display()
                    )));
                }
            }
            cm.get_or_insert_with(|| ConfusionMatrix::new(c)).accumulate(&pred, &gt)?;
            ratios.get_or_insert_with(|| IncorrectRatios::new(c)).accumulate(&pred, &gt)?;
            cov.get_or_insert_with(|| Coverage::empty(c)).add(&coverage(&pred));
        }
        let (Some(cm), Some(ratios), Some(cov)) = (cm, ratios, cov) else {
            return Err(Failure::Validation("no prediction maps".into()));
        };
        let report = MetricsReport::from_iou(iou(&cm)).with_pseudo_quality(&ratios, cov);
        write_json(&dir.join("metrics.json"), &report)?;
        write_text(&dir.join("metrics.csv"), &report.to_csv())?;
        print!("{}", report.to_text());
        Ok(())
    })
}

// ----------------------------------------------------------------- diff

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffConfig {
    /// Write an indexed difference image per map.
    pub render: bool,
}

impl Default for DiffConfig {
    fn default() -> Self {
        Self { render: true }
    }
}

#[derive(Debug, clap::Args)]
pub struct DiffArgs {
    #[command(flatten)]
    pub common: Common,
    /// Softmax pseudo-labels (.segl).
    #[arg(long, value_name = "DIR")]
    pub ssl: PathBuf,
    /// Entropy pseudo-labels (.segl) with the same file names.
    #[arg(long, value_name = "DIR")]
    pub esl: PathBuf,
    /// Skip the difference images.
    #[arg(long)]
    pub no_render: bool,
}

#[derive(Debug, Serialize)]
struct FileDiff {
    name: String,
    counts: DiffCounts,
}

#[derive(Debug, Serialize)]
struct DiffSummary {
    total: DiffCounts,
    files: Vec<FileDiff>,
}

pub fn diff(a: DiffArgs) -> CliResult<()> {
    let mut cfg: DiffConfig = load_config(a.common.config.as_deref(), Default::default)?;
    cfg.render &= !a.no_render;
    let ssl = maps::list(&a.ssl, &["segl"])?;
    let pairs = maps::pair_with(&ssl, &a.esl, "segl")?;
    let inputs: Vec<PathBuf> = pairs.iter().flat_map(|(s, e)| [s.clone(), e.clone()]).collect();
    execute(&a.common, "diff", &cfg, vec![], &inputs, None, |dir| {
        let mut total = DiffCounts::default();
        let mut files = Vec::new();
        let mut csv = String::from("name,both_null,agree,ssl_only,esl_only,conflict\n");
        for (s, e) in &pairs {
            let d = pseudo_label_diff(&maps::pseudo(s)?, &maps::pseudo(e)?)?;
            let name = maps::stem(s);
            let k = d.counts;
            csv.push_str(&format!(
                "{name},{},{},{},{},{}\n",
                k.both_null, k.agree, k.ssl_only, k.esl_only, k.conflict
            ));
            if cfg.render {
                write_png(&render_diff(&d), dir.join(format!("{name}.png")))?;
            }
            total.add(&k);
            files.push(FileDiff { name, counts: k });
        }
        csv.push_str(&format!(
            "total,{},{},{},{},{}\n",
            total.both_null, total.agree, total.ssl_only, total.esl_only, total.conflict
        ));
        println!(
            "agree {} ssl only {} esl only {} conflict {} both null {}",
            total.agree, total.ssl_only, total.esl_only, total.conflict, total.both_null
        );
        write_text(&dir.join("diff.csv"), &csv)?;
        write_json(&dir.join("diff.json"), &DiffSummary { total, files })
    })
}

// ------------------------------------------------------------ selftrain

#[derive(Debug, Clone, clap::Args)]
pub struct PlanFlags {
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub mode: Option<ExtractionMode>,
    #[arg(long)]
    pub mu_star: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Dataset manifest; the default benchmark seeded with the training seed when absent.
    #[arg(long, value_name = "MANIFEST")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub track_target_miou: bool,
    /// Render ground truth / ssl / esl comparison panels per iteration.
    #[arg(long)]
    pub render_panels: bool,
}

impl PlanFlags {
    fn apply(&self, p: &mut SelfTrainPlan) {
        self.train.apply(&mut p.train);
        set(&mut p.mode, self.mode);
        set(&mut p.mu_star, self.mu_star);
        set(&mut p.iterations, self.iterations);
        if self.data.is_some() {
            p.manifest = self.data.clone();
        }
        p.track_target_miou |= self.track_target_miou;
        p.render_panels |= self.render_panels;
    }
}

fn plan_dataset(plan: &SelfTrainPlan) -> CliResult<(Vec<PathBuf>, Option<Benchmark>)> {
    match &plan.manifest {
        Some(m) => Ok((dataset_inputs(m)?, None)),
        None => Ok((vec![], Some(Benchmark::default_with_seed(plan.train.seed)))),
    }
}

fn load_dataset(plan: &SelfTrainPlan, bench: Option<&Benchmark>) -> CliResult<Dataset> {
    match (bench, &plan.manifest) {
        (Some(b), _) => Ok(b.generate()?),
        (None, Some(m)) => Ok(read_dataset(m)?),
        (None, None) => Err(Failure::Validation("no dataset".into())),
    }
}

#[derive(Debug, clap::Args)]
pub struct SelftrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub plan: PlanFlags,
    #[arg(long)]
    pub nu_star: Option<f64>,
    /// Per-class medians without the hyperparameter clamp (esl only).
    #[arg(long)]
    pub median_mode: bool,
}

pub fn selftrain(a: SelftrainArgs) -> CliResult<()> {
    let mut plan: SelfTrainPlan = load_config(a.common.config.as_deref(), Default::default)?;
    a.plan.apply(&mut plan);
    set(&mut plan.nu_star, a.nu_star);
    plan.median_mode |= a.median_mode;
    plan.validate()?;
    let (inputs, bench) = plan_dataset(&plan)?;
    let out = plan.output_dir.clone();
    execute(&a.common, "selftrain", &plan, vec![plan.train.seed], &inputs, out.as_deref(), |dir| {
        let data = load_dataset(&plan, bench.as_ref())?;
        let run = run_selftrain_full(&plan, &data)?;
        run.write_artifacts(dir, &data, plan.render_panels)?;
        let r = &run.report;
        let fmt = |v: Option<f64>| v.map_or("n/a".into(), |x| format!("{x:.4}"));
        println!("baseline mIoU {}", fmt(r.baseline.metrics.miou));
        for it in &r.iterations {
            println!(
                "iteration {} mIoU {} pseudo-label incorrect ratio {}",
                it.iteration,
                fmt(it.metrics.miou),
                fmt(it.pseudo.incorrect.global)
            );
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub plan: SelfTrainPlan,
    pub nu_stars: Vec<f64>,
    /// Add a median-mode run after the listed values.
    pub median_mode: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            plan: SelfTrainPlan::default(),
            nu_stars: vec![0.05, 0.1, 0.15, 0.2, 0.3],
            median_mode: false,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub plan: PlanFlags,
    /// Comma-separated entropy hyperparameters.
    #[arg(long, value_delimiter = ',')]
    pub nu_stars: Option<Vec<f64>>,
    #[arg(long)]
    pub median_mode: bool,
}

pub fn sweep(a: SweepArgs) -> CliResult<()> {
    let mut cfg: SweepConfig = load_config(a.common.config.as_deref(), Default::default)?;
    a.plan.apply(&mut cfg.plan);
    set(&mut cfg.nu_stars, a.nu_stars.clone());
    cfg.median_mode |= a.median_mode;
    cfg.plan.mode = ExtractionMode::Esl;
    cfg.plan.median_mode = false;
    if cfg.nu_stars.is_empty() && !cfg.median_mode {
        return Err(Failure::Usage("nothing to sweep".into()));
    }
    cfg.plan.validate()?;
    let (inputs, bench) = plan_dataset(&cfg.plan)?;
    let out = cfg.plan.output_dir.clone();
    execute(&a.common, "sweep", &cfg, vec![cfg.plan.train.seed], &inputs, out.as_deref(), |dir| {
        let data = load_dataset(&cfg.plan, bench.as_ref())?;
        let runs = sweep_nu_full(&cfg.plan, &data, &cfg.nu_stars, cfg.median_mode)?;
        write_sweep(dir, &runs, &data, cfg.plan.render_panels)?;
        for r in &runs {
            let m = r.run.report.final_metrics().miou;
            println!("{} mIoU {}", r.label(), m.map_or("n/a".into(), |x| format!("{x:.4}")));
        }
        Ok(())
    })
}

// --------------------------------------------------------------- render

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    /// Three-part ground truth / ssl / esl panels instead of single maps.
    pub panels: bool,
}

#[derive(Debug, clap::Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub common: Common,
    /// Maps to render: .segl as classes, .sege and .segp as entropy.
    #[arg(long = "in", value_name = "DIR", conflicts_with_all = ["gt", "ssl", "esl"])]
    pub input: Option<PathBuf>,
    #[arg(long, value_name = "DIR", requires_all = ["ssl", "esl"])]
    pub gt: Option<PathBuf>,
    #[arg(long, value_name = "DIR", requires_all = ["gt", "esl"])]
    pub ssl: Option<PathBuf>,
    #[arg(long, value_name = "DIR", requires_all = ["gt", "ssl"])]
    pub esl: Option<PathBuf>,
}

pub fn render(a: RenderArgs) -> CliResult<()> {
    let mut cfg: RenderConfig = load_config(a.common.config.as_deref(), Default::default)?;
    cfg.panels |= a.gt.is_some();
    if cfg.panels {
        let (Some(gt), Some(ssl), Some(esl)) = (&a.gt, &a.ssl, &a.esl) else {
            return Err(Failure::Usage("panels need --gt, --ssl and --esl".into()));
        };
        let ssls = maps::list(ssl, &["segl"])?;
        let gts = maps::pair_with(&ssls, gt, "segl")?;
        let esls = maps::pair_with(&ssls, esl, "segl")?;
        let triples: Vec<[PathBuf; 3]> = gts
            .into_iter()
            .zip(esls)
            .map(|((s, g), (_, e))| [g, s, e])
            .collect();
        let inputs: Vec<PathBuf> = triples.iter().flatten().cloned().collect();
        return execute(&a.common, "render", &cfg, vec![], &inputs, None, |dir| {
            for [g, s, e] in &triples {
                let img = comparison_panel(&maps::labels(g)?, &maps::pseudo(s)?, &maps::pseudo(e)?)?;
                write_png(&img, dir.join(format!("{}.png", maps::stem(s))))?;
            }
            Ok(())
        });
    }
    let Some(input) = &a.input else {
        return Err(Failure::Usage("give --in, or --gt/--ssl/--esl for panels".into()));
    };
    let files = maps::list(input, &["segl", "sege", "segp"])?;
    execute(&a.common, "render", &cfg, vec![], &files, None, |dir| {
        for f in &files {
            let img = match maps::sniff(f)? {
                MapKind::Label => render_pseudolabels(&maps::pseudo(f)?)?,
                MapKind::Entropy | MapKind::Prob => render_entropy(&maps::entropies(f)?),
                MapKind::Feature => {
                    return Err(Failure::Validation(format!(
                        "{}: feature maps cannot be rendered",
                        f.display()
                    )))
                }
            };
            write_png(&img, dir.join(format!("{}.png", maps::stem(f))))?;
        }
        Ok(())
    })
}
