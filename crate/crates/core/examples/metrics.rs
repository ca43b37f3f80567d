//! Confusion matrix, macro scores and one-vs-rest AUC on a toy prediction set.

use twostage::metrics::{auc_binary, render_per_class_table, MetricsReport};

fn main() -> twostage::Result<()> {
    println!("binary AUC {:?}", auc_binary(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]));

    let truth = [0, 0, 1, 1, 2, 2, 3, 3, 1, 0];
    let probs = vec![
        vec![0.7, 0.1, 0.1, 0.1],
        vec![0.4, 0.4, 0.1, 0.1],
        vec![0.2, 0.6, 0.1, 0.1],
        vec![0.5, 0.3, 0.1, 0.1],
        vec![0.1, 0.1, 0.7, 0.1],
        vec![0.1, 0.2, 0.6, 0.1],
        vec![0.1, 0.1, 0.1, 0.7],
        vec![0.2, 0.1, 0.3, 0.4],
        vec![0.1, 0.8, 0.05, 0.05],
        vec![0.3, 0.3, 0.2, 0.2],
    ];
    let names = ["a", "b", "c", "d"];
    let report = MetricsReport::from_probabilities(&truth, &probs, &names)?;
    println!(
        "accuracy {:.3}  macro-F1 {:.3}  macro AUC {:.3}",
        report.accuracy, report.macro_f1, report.macro_auc
    );
    println!("confusion {:?}", report.confusion.counts);
    print!("{}", render_per_class_table(&[("toy", &report)], Some("b")));
    Ok(())
}
