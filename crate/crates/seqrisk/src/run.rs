//! Run configuration and the run directory written by `train` and `sweep`.
//!
//! ```text
//! config.json       resolved RunConfig
//! history.csv       per-epoch losses of every fold and of the final model
//! model.bin         final model trained on all users
//! folds.json        per-fold results of the main variant
//! scores.json       rendered fold scores (what `evaluate` reprints)
//! scores.csv        the same as a table
//! predictions.csv   per-window test predictions
//! comparison.csv    one row per variant (full, w/o RF, ...); also .json
//! sweep.csv         value sweep results (sweep only); also .json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seqrisk_core::catalog::RiskLevel;
use seqrisk_core::corpus::UserTimeline;
use seqrisk_core::embedding::EmbeddingProvider;
use seqrisk_core::metrics::{GradedCounts, GradedScores};
use seqrisk_core::model::Ablations;
use seqrisk_core::trainer::{self, CrossValidation, EpochRecord, SweepParam, SweepRow, TrainConfig};

use crate::embeddings::EmbedderConfig;
use crate::error::{Error, Result};
use crate::model_io::save_model;

fn default_folds() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: TrainConfig,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default = "default_folds")]
    pub folds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { model: TrainConfig::default(), embedder: EmbedderConfig::default(), folds: default_folds() }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.folds < 2 {
            return Err(Error::Format(format!("folds must be at least 2, got {}", self.folds)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub test_users: Vec<String>,
    pub train_windows: usize,
    pub test_windows: usize,
    pub counts: GradedCounts,
    pub scores: GradedScores,
    pub majority: RiskLevel,
    pub baseline_counts: GradedCounts,
    pub baseline_scores: GradedScores,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Contents of `folds.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldsFile {
    pub variant: String,
    pub k: usize,
    pub fold_of_user: BTreeMap<String, usize>,
    pub folds: Vec<FoldSummary>,
    pub mean: GradedScores,
    pub baseline_mean: GradedScores,
}

impl FoldsFile {
    pub fn from_cv(variant: &str, cv: &CrossValidation) -> Self {
        FoldsFile {
            variant: variant.to_string(),
            k: cv.assignment.k,
            fold_of_user: cv.assignment.fold_of_user.clone(),
            folds: cv
                .folds
                .iter()
                .map(|f| FoldSummary {
                    fold: f.fold,
                    test_users: f.test_users.clone(),
                    train_windows: f.train_windows,
                    test_windows: f.predictions.len(),
                    counts: f.counts,
                    scores: f.scores,
                    majority: f.majority,
                    baseline_counts: f.baseline_counts,
                    baseline_scores: f.baseline_scores,
                    best_epoch: f.best_epoch,
                    epochs_run: f.epochs_run,
                })
                .collect(),
            mean: cv.mean,
            baseline_mean: cv.baseline_mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    /// Fold index, or "mean".
    pub fold: String,
    pub gp: f64,
    pub gr: f64,
    pub fs: f64,
    pub baseline_fs: f64,
}

/// Contents of `scores.json`; `evaluate` rebuilds it from `folds.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoresFile {
    pub variant: String,
    pub rows: Vec<ScoreRow>,
}

pub fn scores_of(folds: &FoldsFile) -> ScoresFile {
    let mut rows: Vec<ScoreRow> = folds
        .folds
        .iter()
        .map(|f| ScoreRow {
            fold: f.fold.to_string(),
            gp: f.scores.gp,
            gr: f.scores.gr,
            fs: f.scores.fs,
            baseline_fs: f.baseline_scores.fs,
        })
        .collect();
    rows.push(ScoreRow {
        fold: "mean".into(),
        gp: folds.mean.gp,
        gr: folds.mean.gr,
        fs: folds.mean.fs,
        baseline_fs: folds.baseline_mean.fs,
    });
    ScoresFile { variant: folds.variant.clone(), rows }
}

pub fn render_scores_json(scores: &ScoresFile) -> Result<String> {
    let mut s = serde_json::to_string_pretty(scores)?;
    s.push('\n');
    Ok(s)
}

pub fn write_scores_csv<W: Write>(out: W, scores: &ScoresFile) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["fold", "gp", "gr", "fs", "baseline_fs"])?;
    for r in &scores.rows {
        w.write_record([r.fold.clone(), r.gp.to_string(), r.gr.to_string(), r.fs.to_string(), r.baseline_fs.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub variant: String,
    pub gp: f64,
    pub gr: f64,
    pub fs: f64,
    pub baseline_fs: f64,
}

#[derive(Debug, Clone)]
pub struct VariantResult {
    pub ablations: Ablations,
    pub cv: CrossValidation,
}

impl VariantResult {
    pub fn row(&self) -> ComparisonRow {
        ComparisonRow {
            variant: self.ablations.label(),
            gp: self.cv.mean.gp,
            gr: self.cv.mean.gr,
            fs: self.cv.mean.fs,
            baseline_fs: self.cv.baseline_mean.fs,
        }
    }
}

/// Cross-validate the configured model and each requested ablation.
/// The configured variant always comes first.
pub fn cross_validate_variants(
    users: &[UserTimeline],
    provider: &dyn EmbeddingProvider,
    config: &RunConfig,
    extra: &[Ablations],
) -> Result<Vec<VariantResult>> {
    let mut variants = vec![config.model.ablations];
    for a in extra {
        if !variants.contains(a) {
            variants.push(*a);
        }
    }
    variants
        .into_iter()
        .map(|ablations| {
            let mut model = config.model.clone();
            model.ablations = ablations;
            log::info!("cross-validating variant {}", ablations.label());
            let cv = trainer::cross_validate(users, provider, &model, config.folds)?;
            Ok(VariantResult { ablations, cv })
        })
        .collect()
}

fn history_rows<W: Write>(w: &mut csv::Writer<W>, fold: &str, history: &[EpochRecord]) -> Result<()> {
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for h in history {
        w.write_record([
            fold.to_string(),
            h.epoch.to_string(),
            h.train.sr.to_string(),
            h.train.pf.to_string(),
            h.train.rf.to_string(),
            h.train.df.to_string(),
            h.train_total.to_string(),
            opt(h.validation.map(|v| v.sr)),
            opt(h.validation.map(|v| v.pf)),
            opt(h.validation.map(|v| v.rf)),
            opt(h.validation.map(|v| v.df)),
            opt(h.validation_total),
        ])?;
    }
    Ok(())
}

pub const HISTORY_HEADER: [&str; 12] = [
    "fold", "epoch", "train_sr", "train_pf", "train_rf", "train_df", "train_total", "val_sr", "val_pf", "val_rf",
    "val_df", "val_total",
];

pub const PREDICTION_HEADER: [&str; 11] = [
    "fold", "user_id", "target_post_id", "last_level", "truth", "predicted", "p_in", "p_id", "p_br", "p_at", "s_p",
];

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn write_comparison(dir: &Path, variants: &[VariantResult]) -> Result<()> {
    let rows: Vec<ComparisonRow> = variants.iter().map(VariantResult::row).collect();
    let path = dir.join("comparison.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["variant", "gp", "gr", "fs", "baseline_fs"])?;
    for r in &rows {
        w.write_record([r.variant.clone(), r.gp.to_string(), r.gr.to_string(), r.fs.to_string(), r.baseline_fs.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_json(&dir.join("comparison.json"), &rows)
}

/// Everything `train` produces.
pub struct TrainRun {
    pub variants: Vec<VariantResult>,
    pub folds: FoldsFile,
    pub scores: ScoresFile,
}

/// Cross-validate, train the final model on every user and write the run
/// directory.
pub fn train_run(
    users: &[UserTimeline],
    provider: &dyn EmbeddingProvider,
    config: &RunConfig,
    extra: &[Ablations],
    dir: &Path,
) -> Result<TrainRun> {
    config.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("config.json"), config)?;

    let variants = cross_validate_variants(users, provider, config, extra)?;
    let main = &variants[0];
    let final_model = trainer::train(users, provider, &config.model)?;
    save_model(&dir.join("model.bin"), &final_model.params)?;

    let path = dir.join("history.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(HISTORY_HEADER)?;
    for f in &main.cv.folds {
        history_rows(&mut w, &f.fold.to_string(), &f.history)?;
    }
    history_rows(&mut w, "all", &final_model.history)?;
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("predictions.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(PREDICTION_HEADER)?;
    for f in &main.cv.folds {
        for p in &f.predictions {
            let mut rec = vec![
                f.fold.to_string(),
                p.user_id.clone(),
                p.target_post_id.clone(),
                p.last_level.code().to_string(),
                p.truth.code().to_string(),
                p.predicted.code().to_string(),
            ];
            rec.extend(p.probs.iter().map(|x| x.to_string()));
            rec.push(p.s_p.to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let folds = FoldsFile::from_cv(&main.ablations.label(), &main.cv);
    write_json(&dir.join("folds.json"), &folds)?;
    let scores = scores_of(&folds);
    let path = dir.join("scores.json");
    fs::write(&path, render_scores_json(&scores)?).map_err(|e| Error::io(&path, e))?;
    write_scores_csv(create(&dir.join("scores.csv"))?, &scores)?;
    write_comparison(dir, &variants)?;
    Ok(TrainRun { variants, folds, scores })
}

pub fn load_folds(dir: &Path) -> Result<FoldsFile> {
    let path = dir.join("folds.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFile {
    pub param: String,
    pub rows: Vec<SweepRow>,
}

pub fn sweep_run(
    users: &[UserTimeline],
    provider: &dyn EmbeddingProvider,
    config: &RunConfig,
    param: SweepParam,
    values: &[f64],
    dir: &Path,
) -> Result<SweepFile> {
    config.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("config.json"), config)?;
    let rows = trainer::sweep(users, provider, &config.model, param, values, config.folds)?;
    let path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["param", "value", "windows", "gp", "gr", "fs"])?;
    for r in &rows {
        w.write_record([
            param.name().to_string(),
            r.value.to_string(),
            r.windows.to_string(),
            r.scores.gp.to_string(),
            r.scores.gr.to_string(),
            r.scores.fs.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let file = SweepFile { param: param.name().to_string(), rows };
    write_json(&dir.join("sweep.json"), &file)?;
    Ok(file)
}

/// `config.json` beside a model file, if there is one.
pub fn sibling_config(model: &Path) -> Option<PathBuf> {
    let p = model.parent()?.join("config.json");
    p.is_file().then_some(p)
}
