use crate::tensor::{norm, Matrix};

/// Accuracy and macro-F1 of `predicted` against `labels` over `nodes`.
///
/// Macro-F1 averages per-class F1 over every class that has a true member in
/// `nodes` or is predicted at least once there; a class that is predicted but
/// absent scores 0. A zero denominator gives F1 = 0.
pub fn evaluate_predictions(predicted: &[usize], labels: &[usize], nodes: &[usize], n_classes: usize) -> (f64, f64) {
    if nodes.is_empty() {
        return (0.0, 0.0);
    }
    let mut tp = vec![0usize; n_classes];
    let mut pred_count = vec![0usize; n_classes];
    let mut true_count = vec![0usize; n_classes];
    let mut correct = 0;
    for &v in nodes {
        let (p, y) = (predicted[v], labels[v]);
        pred_count[p] += 1;
        true_count[y] += 1;
        if p == y {
            tp[y] += 1;
            correct += 1;
        }
    }
    let mut f1_sum = 0.0;
    let mut counted = 0;
    for c in 0..n_classes {
        if true_count[c] == 0 && pred_count[c] == 0 {
            continue;
        }
        counted += 1;
        let denom = pred_count[c] + true_count[c];
        if tp[c] > 0 {
            f1_sum += 2.0 * tp[c] as f64 / denom as f64;
        }
    }
    (correct as f64 / nodes.len() as f64, f1_sum / counted as f64)
}

/// [`evaluate_predictions`] on the row-wise argmax of `y_hat`.
pub fn evaluate(y_hat: &Matrix, labels: &[usize], nodes: &[usize]) -> (f64, f64) {
    evaluate_predictions(&y_hat.argmax_rows(), labels, nodes, y_hat.cols())
}

/// Mean over rows of the row L2 norm, for each of the three attention maps.
pub fn attention_norm_trace(alpha_t: &Matrix, alpha_f: &Matrix, alpha_c: &Matrix) -> [f64; 3] {
    [alpha_t, alpha_f, alpha_c].map(mean_row_norm)
}

fn mean_row_norm(m: &Matrix) -> f64 {
    if m.rows() == 0 {
        return 0.0;
    }
    m.row_iter().map(norm).sum::<f64>() / m.rows() as f64
}
