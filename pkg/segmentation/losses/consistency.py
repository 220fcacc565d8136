def cross_consistency(main_pred, aux_preds, detach_target=True):
    """
    Mean squared distance between the main probabilities and those of every
    auxiliary head, averaged over heads, pixels and classes. The main
    prediction acts as a constant target unless ``detach_target`` is off.
    """
    if not aux_preds:
        raise ValueError("cross_consistency needs at least one auxiliary prediction")
    target = main_pred.probs.detach() if detach_target else main_pred.probs
    for pred in aux_preds:
        if pred.probs.shape != target.shape:
            raise ValueError(
                f"Auxiliary prediction {tuple(pred.probs.shape)} does not match main {tuple(target.shape)}")
    total = sum((pred.probs - target).pow(2).mean() for pred in aux_preds)
    return total / len(aux_preds)
