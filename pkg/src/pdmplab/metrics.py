"""Classification metrics shared by the analysis and training modules."""

import numpy as np


def accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    return float(np.count_nonzero(predictions == labels) / labels.shape[0])


def macro_f1(predictions: np.ndarray, labels: np.ndarray, num_classes: int) -> float:
    """Unweighted mean of per-class F1.

    Convention: a class with no predicted and no true samples contributes
    F1 = 0 (it still divides the mean), as does any class where precision
    and recall are both zero.
    """
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    total = 0.0
    for c in range(num_classes):
        pred_c = predictions == c
        true_c = labels == c
        tp = float(np.count_nonzero(pred_c & true_c))
        n_pred = float(np.count_nonzero(pred_c))
        n_true = float(np.count_nonzero(true_c))
        precision = tp / n_pred if n_pred > 0 else 0.0
        recall = tp / n_true if n_true > 0 else 0.0
        if precision + recall > 0:
            total += 2.0 * precision * recall / (precision + recall)
    return total / num_classes
