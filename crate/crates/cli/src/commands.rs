use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use idiomkit::dataset::{
    generate_synthetic, load_dataset, save_dataset, stratified_nested_folds, validate, Dataset,
    FoldPlan, SyntheticSpec,
};
use idiomkit::evaluation::{comparison_table, fold_table, render_report, build_report};
use idiomkit::models::{forward, write_atomic, Mode};
use idiomkit::parallel::Parallelism;
use idiomkit::textnorm::{NormalizationConfig, Normalizer, UnificationTable};
use idiomkit::tokenizer::{train_vocab, Tokenizer, Vocab};
use idiomkit::training::{
    evaluate, load_model, run_cross_validation, train_fold, EncodedSplit, RunRecord, TrainConfig,
    RECORD_FILE,
};
use idiomkit::Error;

use crate::{Command, Hyper, VocabCommand};

pub const PLAN_FILE: &str = "plan.json";
pub const REPORT_DIR: &str = "report";

#[derive(Debug)]
pub enum CliError {
    /// Bad input or arguments: exit 1.
    Invalid(String),
    /// The run itself failed: exit 2.
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::NonFiniteLoss { .. }
            | Error::NonFiniteGradient(_)
            | Error::Shape { .. }
            | Error::Tensor(_)
            | Error::AllMasked { .. }
            | Error::TargetOutOfRange { .. }
            | Error::NonScalarLoss(_) => CliError::Runtime(msg),
            Error::Io { ref source, .. } if source.kind() != std::io::ErrorKind::NotFound => {
                CliError::Runtime(msg)
            }
            _ => CliError::Invalid(msg),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        let msg = format!("{}: {e}", path.display());
        match e.kind() {
            std::io::ErrorKind::NotFound | std::io::ErrorKind::InvalidData => CliError::Invalid(msg),
            _ => CliError::Runtime(msg),
        }
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    Ok(write_atomic(path, text.as_bytes())?)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn normalizer(table: Option<&Path>) -> Result<Normalizer> {
    let table = match table {
        Some(p) => UnificationTable::from_file(p)?,
        None => UnificationTable::default(),
    };
    Ok(Normalizer::new(table, NormalizationConfig::default()))
}

fn train_config(
    model: crate::ModelArg,
    preset: crate::PresetArg,
    hyper: &Hyper,
    fold: usize,
) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::new(model.into(), preset.into());
    if let Some(e) = hyper.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = hyper.lr {
        cfg.base_lr = lr;
    }
    cfg.batch_size = hyper.batch_size;
    cfg.seed = hyper.seed;
    cfg.max_len = hyper.max_len;
    cfg.fold = fold;
    cfg.validate()?;
    Ok(cfg)
}

fn load_plan(path: &Path, ds: &Dataset) -> Result<FoldPlan> {
    let plan = FoldPlan::load(path)?;
    plan.check(ds).map_err(|m| CliError::Invalid(format!("{}: {m}", path.display())))?;
    Ok(plan)
}

fn check_fold(plan: &FoldPlan, fold: usize) -> Result<()> {
    if fold >= plan.k {
        return Err(CliError::Invalid(format!("fold {fold} out of range for k = {}", plan.k)));
    }
    Ok(())
}

/// Every `record.json` below `dir`, in path order.
fn find_records(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| {
        let msg = format!("{}: {e}", dir.display());
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Invalid(msg)
        } else {
            CliError::Runtime(msg)
        }
    })?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        if p.is_dir() {
            find_records(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == RECORD_FILE) {
            out.push(p);
        }
    }
    Ok(())
}

fn softmax(row: &[f32]) -> Vec<f64> {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = row.iter().map(|&v| (v as f64 - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Normalize { input, out, table } => {
            let norm = normalizer(table.as_deref())?;
            let text = read_text(&input)?;
            let body: String = text.lines().map(|l| norm.normalize(l) + "\n").collect();
            write_text(&out, &body)
        }
        Command::Vocab(VocabCommand::Train { corpus, size, min_freq, out }) => {
            let text = read_text(&corpus)?;
            let vocab = train_vocab(text.lines(), size, min_freq)?;
            log::info!("trained {} entries", vocab.len());
            write_text(&out, &vocab.to_file_string())
        }
        Command::Encode { vocab, max_len, input, out } => {
            let tok = Tokenizer::new(Vocab::from_file(&vocab)?, max_len)?;
            let text = read_text(&input)?;
            let mut body = String::new();
            for line in text.lines() {
                body.push_str(&serde_json::to_string(&tok.encode(line)).expect("serializable"));
                body.push('\n');
            }
            write_text(&out, &body)
        }
        Command::GenData { idioms, contexts, variants, non_idiom, seed, out } => {
            let ds = generate_synthetic(&SyntheticSpec {
                num_idioms: idioms,
                contexts_per_idiom: contexts,
                variants_per_context: variants,
                non_idiom_count: non_idiom,
                seed,
            })?;
            log::info!("generated {} sentences in {} classes", ds.len(), ds.num_classes());
            Ok(save_dataset(&ds, &out)?)
        }
        Command::Validate { data, min_count } => {
            let ds = load_dataset(&data)?;
            let report = validate(&ds, min_count);
            println!("{}", report.summary());
            if report.is_ok() {
                Ok(())
            } else {
                Err(CliError::Invalid(format!("{}: {} errors", data.display(), report.error_count())))
            }
        }
        Command::Split { data, k, seed, out } => {
            let ds = load_dataset(&data)?;
            let plan = stratified_nested_folds(&ds, k, seed).map_err(|e| match e {
                Error::ClassTooSmall { .. } => {
                    CliError::Invalid(format!("class with fewer than k examples: {e}"))
                }
                e => e.into(),
            })?;
            Ok(plan.save(&out)?)
        }
        Command::Train { model, data, plan, fold, preset, hyper, out } => {
            let ds = load_dataset(&data)?;
            let plan = load_plan(&plan, &ds)?;
            check_fold(&plan, fold)?;
            let cfg = train_config(model, preset, &hyper, fold)?;
            create_dir(&out)?;
            let rec = train_fold(&ds, &plan, &cfg, &Normalizer::default(), Some(&out))?;
            log::info!("fold {fold} test F1 {:.2}", rec.test.f1);
            Ok(())
        }
        Command::Cv { model, data, k, preset, hyper, parallel, out } => {
            let ds = load_dataset(&data)?;
            let cfg = train_config(model, preset, &hyper, 0)?;
            let plan = stratified_nested_folds(&ds, k, hyper.seed)?;
            create_dir(&out)?;
            plan.save(out.join(PLAN_FILE))?;
            let cv = run_cross_validation(
                &ds,
                &plan,
                &cfg,
                &Normalizer::default(),
                Some(&out),
                parallel.max(1),
            )?;
            render_report(&cv.records, &out.join(REPORT_DIR))?;
            log::info!("average F1 {:.2}", cv.aggregate.f1);
            Ok(())
        }
        Command::Eval { checkpoint, data, plan, fold, out } => {
            let (params, meta, vocab) = load_model(&checkpoint, None)?;
            let ds = load_dataset(&data)?;
            if ds.classes != meta.classes {
                return Err(CliError::Invalid(format!(
                    "{}: class table differs from the checkpoint's",
                    data.display()
                )));
            }
            let plan = load_plan(&plan, &ds)?;
            check_fold(&plan, fold)?;
            let norm = Normalizer::default();
            warn_table_version(&norm, meta.normalization_table_version.as_deref());
            let tok = Tokenizer::new(vocab, meta.model_config.max_len)?;
            let split = plan.split(fold)?;
            let test = EncodedSplit::encode(ds.subset(&split.test), &norm, &tok);
            let ev = evaluate(&params, &test, Parallelism::default())?;
            let [a, p, r, f] = ev.metrics.rendered();
            println!("fold {fold}: accuracy {a}  precision {p}  recall {r}  f1 {f}  loss {:.4}", ev.loss);
            if let Some(out) = out {
                write_text(&out, &(serde_json::to_string_pretty(&ev).expect("serializable") + "\n"))?;
            }
            Ok(())
        }
        Command::Classify { checkpoint, vocab, text } => {
            let (params, meta, vocab) = load_model(&checkpoint, vocab.as_deref())?;
            let norm = Normalizer::default();
            warn_table_version(&norm, meta.normalization_table_version.as_deref());
            let tok = Tokenizer::new(vocab, meta.model_config.max_len)?;
            let input = tok.encode(&norm.normalize(&text));
            let logits = forward(&params, &[input], Mode::Eval, Parallelism::Sequential)?;
            let probs = softmax(logits.row(0));
            let best = logits.argmax_rows()[0];
            let label = |c: usize| {
                let s = &meta.classes[c].surface;
                if s.is_empty() { "(non-idiom)".to_string() } else { s.clone() }
            };
            println!("{best}\t{}", label(best));
            for (c, p) in probs.iter().enumerate() {
                println!("{c}\t{p:.6}\t{}", label(c));
            }
            Ok(())
        }
        Command::Report { runs, out } => {
            let mut paths = Vec::new();
            find_records(&runs, &mut paths)?;
            if paths.is_empty() {
                return Err(CliError::Invalid(format!("{}: no {RECORD_FILE} found", runs.display())));
            }
            let records = paths.iter().map(RunRecord::load).collect::<idiomkit::Result<Vec<_>>>()?;
            create_dir(&out)?;
            let written = render_report(&records, &out)?;
            let report = build_report(&records)?;
            for m in &report.models {
                log::info!("\n{}", fold_table(m));
            }
            log::info!("\n{}", comparison_table(&report.models));
            log::info!("wrote {} files to {}", written.len(), out.display());
            Ok(())
        }
    }
}

fn warn_table_version(norm: &Normalizer, trained_with: Option<&str>) {
    if norm.table().version() != trained_with {
        log::warn!(
            "model was trained with normalization table {:?}, using {:?}",
            trained_with,
            norm.table().version()
        );
    }
}
