"""
Scalar-loop reference implementations of the losses, written for
readability over speed. Inputs are plain nested sequences or tensors that
are read element by element.
"""
import math


def _values(tensor):
    return tensor.tolist() if hasattr(tensor, 'tolist') else tensor


def supervised_ce_oracle(probs, target, ignore_index):
    """``probs`` B x C x H x W, ``target`` B x H x W."""
    probs, target = _values(probs), _values(target)
    total, count = 0.0, 0
    for b, rows in enumerate(target):
        for y, row in enumerate(rows):
            for x, label in enumerate(row):
                if label == ignore_index:
                    continue
                total -= math.log(probs[b][label][y][x])
                count += 1
    return total / count if count else 0.0


def _cosine(a, b):
    dot = sum(x * y for x, y in zip(a, b))
    norm_a = math.sqrt(sum(x * x for x in a))
    norm_b = math.sqrt(sum(y * y for y in b))
    return dot / (norm_a * norm_b)


def directional_contrastive_pair_oracle(phi1, phi2, conf1, conf2, pl1, pl2, negatives, negative_labels,
                                        threshold, temperature, divisor='positives'):
    phi1, phi2 = _values(phi1), _values(phi2)
    conf1, conf2, pl1, pl2 = _values(conf1), _values(conf2), _values(pl1), _values(pl2)
    negatives, negative_labels = _values(negatives) or [], _values(negative_labels) or []

    def similarity(a, b):
        return math.exp(_cosine(a, b) / temperature)

    total, positives = 0.0, 0
    for i in range(len(phi1)):
        if not (conf1[i] > threshold and conf1[i] < conf2[i]):
            continue
        positives += 1
        positive = similarity(phi1[i], phi2[i])
        denominator = positive
        for j in range(len(phi2)):
            if pl2[j] != pl1[i]:
                denominator += similarity(phi1[i], phi2[j])
        for vector, label in zip(negatives, negative_labels):
            if label != pl1[i]:
                denominator += similarity(phi1[i], vector)
        total -= math.log(positive / denominator)
    if positives == 0:
        return 0.0
    return total / (positives if divisor == 'positives' else len(phi1))


def cross_consistency_oracle(main_probs, aux_probs):
    """``main_probs`` B x C x h x w, ``aux_probs`` a list of the same."""
    main = _values(main_probs)
    total, count = 0.0, 0
    for aux in aux_probs:
        aux = _values(aux)
        for b, classes in enumerate(main):
            for c, rows in enumerate(classes):
                for y, row in enumerate(rows):
                    for x, value in enumerate(row):
                        total += (value - aux[b][c][y][x]) ** 2
                        count += 1
    return total / count


def entropy_oracle(probs):
    probs = _values(probs)
    total, pixels = 0.0, 0
    for classes in probs:
        height, width = len(classes[0]), len(classes[0][0])
        for y in range(height):
            for x in range(width):
                for c in range(len(classes)):
                    p = classes[c][y][x]
                    if p > 0:
                        total -= p * math.log(p)
                pixels += 1
    return total / pixels
