//! Train the gender-aware model and the single-model baseline on a reduced
//! cohort and compare them on the validation split.

use twostage::data::{generate_synthetic, CohortSpec, Split};
use twostage::metrics::{render_per_class_table, render_summary_table};
use twostage::pipeline::{
    evaluate_features, train_baseline_features, train_two_stage_features, Evaluated, FeatureSet, TrainConfig,
};

fn main() -> twostage::Result<()> {
    let mut spec = CohortSpec::with_seed(1);
    spec.dims = [8, 32, 32];
    let dataset = generate_synthetic(&spec)?;

    let mut config = TrainConfig::desk(1);
    config.epochs = 6;
    config.preprocess.target_dims = [4, 16, 16];
    let features = FeatureSet::build(&dataset, &config.preprocess)?;

    let two = train_two_stage_features(&features, &config)?;
    for h in two.histories() {
        println!("{:<8} best epoch {} of {}", h.stage.name(), h.best_epoch, h.epochs.len());
    }
    let base = train_baseline_features(&features, &config)?;

    let r2 = evaluate_features(Evaluated::TwoStage(&two.model), &features, Split::Val)?;
    let rb = evaluate_features(Evaluated::Baseline(&base.model), &features, Split::Val)?;
    let rows = [("Gender-aware (two-stage)", &r2), ("Baseline", &rb)];
    print!("{}", render_summary_table(&rows));
    print!("{}", render_per_class_table(&rows, Some("squamous_cell_carcinoma")));
    Ok(())
}
