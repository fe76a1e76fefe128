"""Structured result export: metric rows, summary stats, similarity matrix."""

import csv
import json
import os

import numpy as np


def metric_rows(task, metrics, seed):
    """Flatten an evaluate_ranking dict into (task, metric, k, seed, value) rows."""
    rows = []
    for key, value in sorted(metrics.items()):
        metric, k = key.split("@")
        rows.append((task, metric, int(k), seed, float(value)))
    return rows


def write_metrics_csv(rows, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("task", "metric", "k", "seed", "value"))
        for row in rows:
            writer.writerow(row)


def _spread(vals):
    # identical repeats must report exactly 0, not mean-subtraction dust
    if all(v == vals[0] for v in vals):
        return 0.0
    return float(np.std(vals))


def summarize(rows):
    """Per task and metric@k, mean and std over the seed column."""
    grouped = {}
    for task, metric, k, _seed, value in rows:
        grouped.setdefault(task, {}).setdefault(f"{metric}@{k}", []).append(value)
    out = {}
    for task, metrics in grouped.items():
        out[task] = {
            key: {"mean": float(np.mean(vals)), "std": _spread(vals)}
            for key, vals in metrics.items()
        }
    return out


def write_summary_json(rows, config_dict, dataset_name, wall_time_s, path):
    payload = {
        "dataset": dataset_name,
        "config": config_dict,
        "results": summarize(rows),
        "wall_time_s": float(wall_time_s),
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return payload


def write_similarity_csv(matrix, path):
    matrix = np.asarray(matrix)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for row in matrix:
            writer.writerow([f"{v:.6f}" for v in row])


def export_report(rows, config_dict, dataset_name, wall_time_s, out_dir, similarity=None):
    """Write metrics.csv, summary.json, and optionally interest_sim.csv."""
    os.makedirs(out_dir, exist_ok=True)
    write_metrics_csv(rows, os.path.join(out_dir, "metrics.csv"))
    summary = write_summary_json(
        rows, config_dict, dataset_name, wall_time_s, os.path.join(out_dir, "summary.json")
    )
    if similarity is not None:
        write_similarity_csv(similarity, os.path.join(out_dir, "interest_sim.csv"))
    return summary
