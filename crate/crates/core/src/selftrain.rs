//! Self-training: train without pseudo-labels, extract pseudo-labels on the
//! target training scenes, retrain from scratch with them, and repeat.
//!
//! The training path only ever sees source scenes, target features and
//! pseudo-labels. Target labels are read by the evaluation path alone.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confidence::{entropy_map, ConfidenceKind};
use crate::error::{Error, Result};
use crate::extraction::{coverage, extract_esl, extract_ssl, Coverage};
use crate::mapcore::{write_pseudolabels, FeatureMap, LabelMap, ProbMap, PseudoLabelMap};
use crate::metrics::{relative_change_pct, IncorrectRatios, MetricsReport};
use crate::model::{
    evaluate_miou, forward, write_checkpoint, train_uda, PixelClassifier, TrainConfig, TrainLog,
    TrainOutcome, TrainingSet,
};
use crate::provenance::config_hash;
use crate::synth::{Benchmark, Dataset};
use crate::thresholds::{thresholds_report, ClassSampleBag, ClassThresholds, ThresholdsReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractionMode {
    Ssl,
    Esl,
}

impl ExtractionMode {
    pub fn kind(self) -> ConfidenceKind {
        match self {
            ExtractionMode::Ssl => ConfidenceKind::Softmax,
            ExtractionMode::Esl => ConfidenceKind::Entropy,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ExtractionMode::Ssl => "ssl",
            ExtractionMode::Esl => "esl",
        }
    }
}

impl std::str::FromStr for ExtractionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ssl" => Ok(ExtractionMode::Ssl),
            "esl" => Ok(ExtractionMode::Esl),
            other => Err(Error::InvalidArgument(format!(
                "unknown extraction mode {other:?}, expected ssl or esl"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelfTrainPlan {
    pub mode: ExtractionMode,
    pub mu_star: f64,
    pub nu_star: f64,
    /// Use the per-class medians as thresholds, without the hyperparameter clamp.
    pub median_mode: bool,
    pub iterations: usize,
    pub train: TrainConfig,
    /// Record target mIoU after every epoch in the training logs.
    pub track_target_miou: bool,
    /// Dataset manifest, for plans read from disk.
    pub manifest: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub render_panels: bool,
}

impl Default for SelfTrainPlan {
    fn default() -> Self {
        Self {
            mode: ExtractionMode::Esl,
            mu_star: 0.9,
            nu_star: 0.1,
            median_mode: false,
            iterations: 1,
            train: TrainConfig::default(),
            track_target_miou: false,
            manifest: None,
            output_dir: None,
            render_panels: false,
        }
    }
}

fn check_hyper(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "{name} must lie in (0, 1], got {v}"
        )));
    }
    Ok(())
}

impl SelfTrainPlan {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be >= 1".into()));
        }
        if !self.median_mode {
            match self.mode {
                ExtractionMode::Ssl => check_hyper("mu_star", self.mu_star)?,
                ExtractionMode::Esl => check_hyper("nu_star", self.nu_star)?,
            }
        }
        self.train.validate()
    }

    /// The hyperparameter of the active mode, `None` in median mode.
    pub fn hyper(&self) -> Option<f64> {
        match (self.median_mode, self.mode) {
            (true, _) => None,
            (false, ExtractionMode::Ssl) => Some(self.mu_star),
            (false, ExtractionMode::Esl) => Some(self.nu_star),
        }
    }

    fn provenance(&self, benchmark: Option<&Benchmark>) -> Provenance {
        Provenance {
            mode: self.mode,
            mu_star: self.mu_star,
            nu_star: self.nu_star,
            median_mode: self.median_mode,
            iterations: self.iterations,
            train: self.train.clone(),
            benchmark: benchmark.cloned(),
        }
    }
}

/// Everything that determines a run's results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub mode: ExtractionMode,
    pub mu_star: f64,
    pub nu_star: f64,
    pub median_mode: bool,
    pub iterations: usize,
    pub train: TrainConfig,
    pub benchmark: Option<Benchmark>,
}

impl Provenance {
    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoQuality {
    pub coverage: Coverage,
    pub incorrect: IncorrectRatios,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    /// Evaluation on the held-out target scenes.
    pub metrics: MetricsReport,
    pub log: TrainLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub thresholds: ThresholdsReport,
    /// Quality of the pseudo-labels this iteration trained on.
    pub pseudo: PseudoQuality,
    /// Evaluation of the retrained model, with the pseudo-label quality attached.
    pub metrics: MetricsReport,
    pub log: TrainLog,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub provenance: Provenance,
    pub config_hash: String,
    pub baseline: StageReport,
    pub iterations: Vec<IterationReport>,
}

impl ExperimentReport {
    /// Metrics of the last stage.
    pub fn final_metrics(&self) -> &MetricsReport {
        self.iterations
            .last()
            .map(|it| &it.metrics)
            .unwrap_or(&self.baseline.metrics)
    }

    /// One row per stage: `stage,miou,global_incorrect_ratio,labeled_fraction`.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let mut out = String::from("stage,miou,global_incorrect_ratio,labeled_fraction\n");
        out.push_str(&format!("baseline,{},,\n", cell(self.baseline.metrics.miou)));
        for it in &self.iterations {
            out.push_str(&format!(
                "iteration_{},{},{},{}\n",
                it.iteration,
                cell(it.metrics.miou),
                cell(it.pseudo.incorrect.global),
                it.pseudo.coverage.labeled_fraction
            ));
        }
        out
    }
}

/// Pseudo-labels for every target training scene and the thresholds that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub thresholds: ClassThresholds,
    pub pseudo: Vec<PseudoLabelMap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationArtifacts {
    pub extraction: Extraction,
    pub outcome: TrainOutcome,
}

/// A finished run with the models and pseudo-labels behind its report.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfTrainRun {
    pub report: ExperimentReport,
    pub baseline: TrainOutcome,
    pub iterations: Vec<IterationArtifacts>,
}

/// The training view of a dataset: source pairs and target features only.
pub fn training_set(data: &Dataset) -> TrainingSet<'_> {
    TrainingSet {
        source: data.source.iter().map(|s| (&s.features, &s.labels)).collect(),
        target: data.target.iter().map(|s| &s.features).collect(),
        pseudo: None,
    }
}

fn eval_pairs(data: &Dataset) -> Vec<(&FeatureMap, &LabelMap)> {
    data.target_eval
        .iter()
        .map(|s| (&s.features, &s.labels))
        .collect()
}

/// Thresholds over all `probs` followed by extraction on each map.
/// `hyper == None` selects median mode.
pub fn extract_from_probs(
    probs: &[ProbMap],
    mode: ExtractionMode,
    hyper: Option<f64>,
) -> Result<Extraction> {
    let Some(first) = probs.first() else {
        return Err(Error::InvalidArgument("no probability maps to extract from".into()));
    };
    let num_classes = first.num_classes();
    let entropies = match mode {
        ExtractionMode::Esl => Some(probs.par_iter().map(entropy_map).collect::<Result<Vec<_>>>()?),
        ExtractionMode::Ssl => None,
    };
    let mut bag = ClassSampleBag::new(mode.kind(), num_classes);
    for (i, p) in probs.iter().enumerate() {
        bag.accumulate_with_entropy(p, entropies.as_ref().map(|e| &e[i]))?;
    }
    let thresholds = match (mode, hyper) {
        (_, None) => ClassThresholds::median_only(&bag)?,
        (ExtractionMode::Ssl, Some(mu)) => ClassThresholds::compute_mu(&bag, mu)?,
        (ExtractionMode::Esl, Some(nu)) => ClassThresholds::compute_nu(&bag, nu)?,
    };
    let pseudo = probs
        .par_iter()
        .enumerate()
        .map(|(i, p)| match &entropies {
            Some(e) => extract_esl(p, &e[i], &thresholds),
            None => extract_ssl(p, &thresholds),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Extraction { thresholds, pseudo })
}

pub fn predict_probs(clf: &PixelClassifier, features: &[&FeatureMap]) -> Result<Vec<ProbMap>> {
    features
        .par_iter()
        .map(|f| Ok(forward(clf, f)?.to_probmap()))
        .collect()
}

/// Pseudo-labels of `clf` on the target training scenes.
pub fn extract_pseudo_labels(
    clf: &PixelClassifier,
    target: &[&FeatureMap],
    mode: ExtractionMode,
    hyper: Option<f64>,
) -> Result<Extraction> {
    extract_from_probs(&predict_probs(clf, target)?, mode, hyper)
}

/// Coverage and incorrect ratios of pseudo-labels against withheld labels.
pub fn pseudo_quality(pseudo: &[PseudoLabelMap], gt: &[&LabelMap]) -> Result<PseudoQuality> {
    if pseudo.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} pseudo-label maps for {} label maps",
            pseudo.len(),
            gt.len()
        )));
    }
    let num_classes = pseudo.first().map_or(0, |p| p.num_classes());
    let mut cov = Coverage::empty(num_classes);
    let mut incorrect = IncorrectRatios::new(num_classes);
    for (p, g) in pseudo.iter().zip(gt) {
        cov.add(&coverage(p));
        incorrect.accumulate(p, g)?;
    }
    Ok(PseudoQuality {
        coverage: cov,
        incorrect,
    })
}

fn check_dataset(data: &Dataset) -> Result<()> {
    if data.source.is_empty() || data.target.is_empty() || data.target_eval.is_empty() {
        return Err(Error::InvalidArgument(
            "self-training needs source, target and target_eval scenes".into(),
        ));
    }
    Ok(())
}

/// Step one: adversarial training without pseudo-labels.
pub fn train_baseline(plan: &SelfTrainPlan, data: &Dataset) -> Result<TrainOutcome> {
    plan.validate()?;
    check_dataset(data)?;
    let eval = eval_pairs(data);
    let tracked = plan.track_target_miou.then_some(eval.as_slice());
    train_uda(&training_set(data), tracked, &plan.train)
}

fn stage_report(clf: &PixelClassifier, log: TrainLog, data: &Dataset) -> Result<StageReport> {
    let iou = evaluate_miou(clf, &eval_pairs(data))?;
    Ok(StageReport {
        metrics: MetricsReport::from_iou(iou),
        log,
    })
}

/// Runs the self-training iterations on top of an already trained baseline.
pub fn run_from_baseline(
    plan: &SelfTrainPlan,
    data: &Dataset,
    baseline: TrainOutcome,
) -> Result<SelfTrainRun> {
    plan.validate()?;
    check_dataset(data)?;
    let provenance = plan.provenance(data.benchmark.as_ref());
    let baseline_report = stage_report(&baseline.classifier, baseline.log.clone(), data)?;
    let eval = eval_pairs(data);
    let tracked = plan.track_target_miou.then_some(eval.as_slice());
    let withheld: Vec<&LabelMap> = data.target.iter().map(|s| &s.labels).collect();

    let mut iterations = Vec::with_capacity(plan.iterations);
    let mut reports = Vec::with_capacity(plan.iterations);
    for iteration in 1..=plan.iterations {
        let teacher = match iterations.last() {
            Some(IterationArtifacts { outcome, .. }) => &outcome.classifier,
            None => &baseline.classifier,
        };
        let mut set = training_set(data);
        let extraction = extract_pseudo_labels(teacher, &set.target, plan.mode, plan.hyper())?;
        let mut warnings = Vec::new();
        if extraction
            .pseudo
            .iter()
            .all(|p| p.labels().iter().all(|&l| l == crate::mapcore::NULL))
        {
            warnings.push(format!(
                "iteration {iteration}: every pseudo-label is null, retraining sees no target labels"
            ));
        }
        set.pseudo = Some(extraction.pseudo.iter().collect());
        let outcome = train_uda(&set, tracked, &plan.train)?;

        let quality = pseudo_quality(&extraction.pseudo, &withheld)?;
        let stage = stage_report(&outcome.classifier, outcome.log.clone(), data)?;
        reports.push(IterationReport {
            iteration,
            thresholds: thresholds_report(&extraction.thresholds),
            metrics: stage
                .metrics
                .with_pseudo_quality(&quality.incorrect, quality.coverage.clone()),
            pseudo: quality,
            log: stage.log,
            warnings,
        });
        iterations.push(IterationArtifacts {
            extraction,
            outcome,
        });
    }

    let config_hash = provenance.hash();
    Ok(SelfTrainRun {
        report: ExperimentReport {
            provenance,
            config_hash,
            baseline: baseline_report,
            iterations: reports,
        },
        baseline,
        iterations,
    })
}

/// Baseline training followed by the configured self-training iterations.
pub fn run_selftrain_full(plan: &SelfTrainPlan, data: &Dataset) -> Result<SelfTrainRun> {
    let baseline = train_baseline(plan, data)?;
    run_from_baseline(plan, data, baseline)
}

pub fn run_selftrain(plan: &SelfTrainPlan, data: &Dataset) -> Result<ExperimentReport> {
    Ok(run_selftrain_full(plan, data)?.report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    /// The swept value, `None` for median mode.
    pub nu_star: Option<f64>,
    pub run: SelfTrainRun,
}

impl SweepRun {
    pub fn label(&self) -> String {
        match self.nu_star {
            Some(v) => format!("nu_{v}"),
            None => "median".into(),
        }
    }
}

/// One entropy-guided run per value of `nu_values`, plus median mode when
/// requested, all sharing a single baseline training.
pub fn sweep_nu_full(
    plan: &SelfTrainPlan,
    data: &Dataset,
    nu_values: &[f64],
    include_median_mode: bool,
) -> Result<Vec<SweepRun>> {
    if nu_values.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one nu* value".into()));
    }
    let mut settings: Vec<Option<f64>> = nu_values.iter().copied().map(Some).collect();
    if include_median_mode {
        settings.push(None);
    }
    let plans: Vec<SelfTrainPlan> = settings
        .iter()
        .map(|s| {
            let mut p = plan.clone();
            p.mode = ExtractionMode::Esl;
            match s {
                Some(v) => {
                    p.nu_star = *v;
                    p.median_mode = false;
                }
                None => p.median_mode = true,
            }
            p.validate().map(|_| p)
        })
        .collect::<Result<_>>()?;
    let baseline = train_baseline(&plans[0], data)?;
    plans
        .par_iter()
        .zip(&settings)
        .map(|(p, s)| {
            Ok(SweepRun {
                nu_star: *s,
                run: run_from_baseline(p, data, baseline.clone())?,
            })
        })
        .collect()
}

pub fn sweep_nu(
    plan: &SelfTrainPlan,
    data: &Dataset,
    nu_values: &[f64],
    include_median_mode: bool,
) -> Result<Vec<ExperimentReport>> {
    Ok(sweep_nu_full(plan, data, nu_values, include_median_mode)?
        .into_iter()
        .map(|s| s.run.report)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// Class id, or `global` for the summary row.
    pub id: String,
    pub iou_a: Option<f64>,
    pub iou_b: Option<f64>,
    pub iou_delta: Option<f64>,
    pub incorrect_a: Option<f64>,
    pub incorrect_b: Option<f64>,
    pub incorrect_delta: Option<f64>,
    /// Relative change of the incorrect ratio from `a` to `b`, in percent.
    pub incorrect_change_pct: Option<f64>,
}

/// Side-by-side final metrics of two runs; deltas are `b - a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportComparison {
    pub num_classes: usize,
    pub rows: Vec<ComparisonRow>,
    pub miou_a: Option<f64>,
    pub miou_b: Option<f64>,
    pub miou_delta: Option<f64>,
    pub miou_change_pct: Option<f64>,
}

fn delta(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(b? - a?)
}

pub fn compare_metrics(a: &MetricsReport, b: &MetricsReport) -> Result<ReportComparison> {
    if a.num_classes != b.num_classes {
        return Err(Error::DimensionMismatch(format!(
            "cannot compare reports over {} and {} classes",
            a.num_classes, b.num_classes
        )));
    }
    let row = |id: String, ia, ib, ra, rb| ComparisonRow {
        id,
        iou_a: ia,
        iou_b: ib,
        iou_delta: delta(ia, ib),
        incorrect_a: ra,
        incorrect_b: rb,
        incorrect_delta: delta(ra, rb),
        incorrect_change_pct: relative_change_pct(rb, ra),
    };
    let mut rows: Vec<ComparisonRow> = (0..a.num_classes)
        .map(|c| {
            row(
                c.to_string(),
                a.per_class_iou[c],
                b.per_class_iou[c],
                a.per_class_incorrect_ratio[c],
                b.per_class_incorrect_ratio[c],
            )
        })
        .collect();
    rows.push(row(
        "global".into(),
        a.miou,
        b.miou,
        a.global_incorrect_ratio,
        b.global_incorrect_ratio,
    ));
    Ok(ReportComparison {
        num_classes: a.num_classes,
        rows,
        miou_a: a.miou,
        miou_b: b.miou,
        miou_delta: delta(a.miou, b.miou),
        miou_change_pct: relative_change_pct(b.miou, a.miou),
    })
}

/// Compares the final stages of two runs.
pub fn compare_reports(a: &ExperimentReport, b: &ExperimentReport) -> Result<ReportComparison> {
    compare_metrics(a.final_metrics(), b.final_metrics())
}

impl ReportComparison {
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let mut out = String::from(
            "id,iou_a,iou_b,iou_delta,incorrect_a,incorrect_b,incorrect_delta,incorrect_change_pct\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.id,
                cell(r.iou_a),
                cell(r.iou_b),
                cell(r.iou_delta),
                cell(r.incorrect_a),
                cell(r.incorrect_b),
                cell(r.incorrect_delta),
                cell(r.incorrect_change_pct)
            ));
        }
        out
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_vec_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_stage(dir: &Path, outcome: &TrainOutcome, metrics: &MetricsReport, hash: &str) -> Result<()> {
    create_dir(dir)?;
    write_checkpoint(
        dir.join("checkpoint.bin"),
        &outcome.classifier,
        &outcome.discriminator,
        hash,
    )?;
    write_json(&dir.join("train_log.json"), &outcome.log)?;
    write_text(&dir.join("metrics.csv"), &metrics.to_csv())
}

impl SelfTrainRun {
    /// Writes checkpoints, thresholds, pseudo-labels and reports under `dir`:
    ///
    /// ```text
    /// report.json  report.csv
    /// baseline/    checkpoint.bin train_log.json metrics.csv
    /// iter_K/      checkpoint.bin train_log.json metrics.csv thresholds.json
    ///              pseudo/NNNN.segl  [panels/NNNN.png]
    /// ```
    ///
    /// Iteration `K` was extracted with the checkpoint of the stage before it.
    /// Panels show ground truth, softmax and entropy pseudo-labels of that same
    /// teacher, and their difference.
    pub fn write_artifacts(&self, dir: &Path, data: &Dataset, render_panels: bool) -> Result<()> {
        create_dir(dir)?;
        let hash = &self.report.config_hash;
        write_json(&dir.join("report.json"), &self.report)?;
        write_text(&dir.join("report.csv"), &self.report.to_csv())?;
        write_stage(
            &dir.join("baseline"),
            &self.baseline,
            &self.report.baseline.metrics,
            hash,
        )?;
        let target: Vec<&FeatureMap> = data.target.iter().map(|s| &s.features).collect();
        for (k, (art, rep)) in self.iterations.iter().zip(&self.report.iterations).enumerate() {
            let it_dir = dir.join(format!("iter_{}", rep.iteration));
            write_stage(&it_dir, &art.outcome, &rep.metrics, hash)?;
            art.extraction
                .thresholds
                .write_json(it_dir.join("thresholds.json"))?;
            let pseudo_dir = it_dir.join("pseudo");
            create_dir(&pseudo_dir)?;
            for (i, p) in art.extraction.pseudo.iter().enumerate() {
                write_pseudolabels(p, pseudo_dir.join(format!("{i:04}.segl")))?;
            }
            if render_panels {
                let teacher = match k {
                    0 => &self.baseline.classifier,
                    _ => &self.iterations[k - 1].outcome.classifier,
                };
                let plan = &self.report.provenance;
                let probs = predict_probs(teacher, &target)?;
                let ssl = extract_from_probs(&probs, ExtractionMode::Ssl, Some(plan.mu_star))?;
                let esl = extract_from_probs(
                    &probs,
                    ExtractionMode::Esl,
                    (!plan.median_mode).then_some(plan.nu_star),
                )?;
                let panel_dir = it_dir.join("panels");
                create_dir(&panel_dir)?;
                for (i, scene) in data.target.iter().enumerate() {
                    let img =
                        crate::render::comparison_panel(&scene.labels, &ssl.pseudo[i], &esl.pseudo[i])?;
                    crate::render::write_png(&img, panel_dir.join(format!("{i:04}.png")))?;
                }
            }
        }
        Ok(())
    }
}

/// Writes each sweep run into `dir/<label>/` and a `sweep.csv` summary.
pub fn write_sweep(dir: &Path, runs: &[SweepRun], data: &Dataset, render_panels: bool) -> Result<()> {
    create_dir(dir)?;
    let cell = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    let mut csv = String::from("run,nu_star,baseline_miou,miou,global_incorrect_ratio\n");
    for s in runs {
        s.run
            .write_artifacts(&dir.join(s.label()), data, render_panels)?;
        let r = &s.run.report;
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            s.label(),
            cell(s.nu_star),
            cell(r.baseline.metrics.miou),
            cell(r.final_metrics().miou),
            cell(r.final_metrics().global_incorrect_ratio)
        ));
    }
    write_text(&dir.join("sweep.csv"), &csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (SelfTrainPlan, Dataset) {
        let mut b = Benchmark::default_with_seed(11);
        b.scene.height = 10;
        b.scene.width = 10;
        b.n_source = 3;
        b.n_target = 3;
        b.n_eval = 2;
        let mut plan = SelfTrainPlan::default();
        plan.train.epochs = 3;
        plan.train.lr_f = 1e-2;
        (plan, b.generate().unwrap())
    }

    #[test]
    fn plan_validation() {
        let mut p = SelfTrainPlan::default();
        p.iterations = 0;
        assert!(p.validate().is_err());
        let mut p = SelfTrainPlan::default();
        p.nu_star = 0.0;
        assert!(p.validate().is_err());
        p.median_mode = true;
        assert!(p.validate().is_ok());
        assert_eq!("ssl".parse::<ExtractionMode>().unwrap(), ExtractionMode::Ssl);
        assert!("x".parse::<ExtractionMode>().is_err());
    }

    #[test]
    fn report_shape_and_reproducibility() {
        let (mut plan, data) = tiny();
        plan.iterations = 2;
        let a = run_selftrain(&plan, &data).unwrap();
        assert_eq!(a.iterations.len(), 2);
        assert_eq!(a, run_selftrain(&plan, &data).unwrap());
    }

    #[test]
    fn zero_pseudo_weight_reproduces_baseline() {
        let (mut plan, data) = tiny();
        plan.train.lambda_sl = 0.0;
        let run = run_selftrain_full(&plan, &data).unwrap();
        assert_eq!(run.iterations[0].outcome.classifier, run.baseline.classifier);
        assert_eq!(
            run.report.iterations[0].metrics.per_class_iou,
            run.report.baseline.metrics.per_class_iou
        );
    }

    #[test]
    fn compare_self_is_zero() {
        let (plan, data) = tiny();
        let r = run_selftrain(&plan, &data).unwrap();
        let cmp = compare_reports(&r, &r).unwrap();
        for row in &cmp.rows {
            assert!(row.iou_delta.map_or(true, |d| d == 0.0));
            assert!(row.incorrect_delta.map_or(true, |d| d == 0.0));
        }
        assert_eq!(cmp.rows.len(), 7);
    }
}
