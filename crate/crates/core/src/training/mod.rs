//! AdamW, learning-rate schedules, the per-fold loop and cross-validation.

mod config;
mod cv;
mod optim;
mod run;

pub use config::{
    desk_lr, paper_epochs, TrainConfig, CLIP_NORM, EVAL_EVERY_EPOCHS, PAPER_BATCH_SIZE, PAPER_LR,
    WARMUP_FRACTION,
};
pub use cv::{fold_dir, run_cross_validation, CvResult, CvStatus, CV_SUMMARY_FILE};
pub use optim::{
    adamw_step, clip_global_norm, lr_at, AdamWConfig, OptimizerState, Schedule, ScheduleKind,
};
pub use run::{
    evaluate, load_model, meta_path, predict, prepare_fold, train_fold, BestValidation,
    EncodedSplit, Evaluation, FoldData, ModelMeta, RunRecord, TokenizerInfo, Trainer,
    ValidationPoint, BEST_CHECKPOINT, FINAL_CHECKPOINT, RECORD_FILE, VOCAB_FILE,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, stratified_nested_folds, SyntheticSpec};
    use crate::models::{ModelKind, Preset};
    use crate::textnorm::Normalizer;

    fn tiny_cfg() -> TrainConfig {
        let mut cfg = TrainConfig::new(ModelKind::Rcnn, Preset::Desk);
        cfg.epochs = 3;
        cfg.eval_every_epochs = 2;
        cfg.max_len = 24;
        cfg.seed = 5;
        cfg
    }

    fn data() -> crate::dataset::Dataset {
        generate_synthetic(&SyntheticSpec {
            num_idioms: 2,
            contexts_per_idiom: 5,
            variants_per_context: 2,
            non_idiom_count: 10,
            seed: 1,
        })
        .unwrap()
    }

    #[test]
    fn fold_training_is_deterministic_and_persists() {
        let ds = data();
        let plan = stratified_nested_folds(&ds, 2, 3).unwrap();
        let norm = Normalizer::default();
        let dir = tempfile::tempdir().unwrap();
        let a = train_fold(&ds, &plan, &tiny_cfg(), &norm, Some(dir.path())).unwrap();
        let b = train_fold(&ds, &plan, &tiny_cfg(), &norm, None).unwrap();
        assert_eq!(a.train_losses, b.train_losses);
        assert_eq!(a.test, b.test);
        assert_eq!(a.validation.iter().map(|p| p.epoch).collect::<Vec<_>>(), vec![2, 3]);
        for f in [FINAL_CHECKPOINT, BEST_CHECKPOINT, VOCAB_FILE, RECORD_FILE] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let (params, meta, _) = load_model(&dir.path().join(FINAL_CHECKPOINT), None).unwrap();
        assert_eq!(meta.classes, ds.classes);
        assert_eq!(params.config(), &a.model_config);
        assert_eq!(RunRecord::load(dir.path().join(RECORD_FILE)).unwrap(), a);
    }

    #[test]
    fn other_fold_changes_the_curve() {
        let ds = data();
        let plan = stratified_nested_folds(&ds, 2, 3).unwrap();
        let norm = Normalizer::default();
        let a = train_fold(&ds, &plan, &tiny_cfg(), &norm, None).unwrap();
        let b = train_fold(&ds, &plan, &TrainConfig { fold: 1, ..tiny_cfg() }, &norm, None).unwrap();
        assert_ne!(a.train_losses, b.train_losses);
    }
}
