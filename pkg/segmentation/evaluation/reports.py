import json
import os

import tablib

from .settings import DEFAULT_REPORT_NAME
from .settings import REPORT_HEADERS


def class_rows(result, class_names=()):
    rows = []
    for index, (iou, dice) in enumerate(zip(result.iou, result.dice)):
        name = class_names[index] if index < len(class_names) else str(index)
        rows.append((name, iou, dice, index not in result.absent_classes))
    return rows


def write_report(result, out_dir, name=DEFAULT_REPORT_NAME, class_names=()):
    """
    Write the per-class table as CSV and the whole report as JSON; returns
    both paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    dataset = tablib.Dataset(*class_rows(result, class_names), headers=REPORT_HEADERS)
    csv_path = os.path.join(out_dir, f"{name}.csv")
    json_path = os.path.join(out_dir, f"{name}.json")
    with open(csv_path, 'w', newline='') as handle:
        handle.write(dataset.csv)
    with open(json_path, 'w') as handle:
        json.dump(result.as_dict() | {'class_names': list(class_names)}, handle, indent=2)
    return csv_path, json_path


def format_report(result, class_names=()):
    if not result.defined:
        return "No evaluated pixels: metrics undefined"
    lines = [f"{'class':<16}{'IoU':>8}{'Dice':>8}"]
    for name, iou, dice, present in class_rows(result, class_names):
        if present:
            lines.append(f"{name:<16}{iou:>8.4f}{dice:>8.4f}")
        else:
            lines.append(f"{name:<16}{'absent':>16}")
    lines.append(f"{'mean':<16}{result.miou:>8.4f}{result.mean_dice:>8.4f}")
    lines.append(f"accuracy ({result.accuracy_mode}): {result.accuracy:.4f}")
    lines.append(f"pixels: {result.pixels}, ignored: {result.ignored}")
    return "\n".join(lines)
