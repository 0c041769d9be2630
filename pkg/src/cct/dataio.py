"""CSV ingestion and experiment report emission."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np


class DataFormatError(ValueError):
    """A data file failed to parse against the declared schema."""


@dataclass(frozen=True)
class LoadedDataset:
    """Numeric dataset parsed from CSV against declared column roles."""

    covariates: np.ndarray
    responses: np.ndarray | None
    covariate_names: tuple
    response_names: tuple


def load_csv(path: str, covariate_cols, response_cols=None) -> LoadedDataset:
    """Load a headered CSV, selecting covariate and response columns by name.

    Every selected cell must parse as a decimal float; failures are reported
    with their row and column.  Row order is preserved.
    """
    covariate_cols = list(covariate_cols)
    response_cols = list(response_cols or [])
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        index = {}
        for name in covariate_cols + response_cols:
            if name not in header:
                raise DataFormatError(f"{path}: missing column {name!r}")
            index[name] = header.index(name)
        cov_rows, resp_rows = [], []
        n_rows = 0
        for row_num, row in enumerate(reader, start=2):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            n_rows += 1

            def parse(name):
                cell = row[index[name]].strip()
                try:
                    return float(cell)
                except ValueError:
                    raise DataFormatError(
                        f"{path}: non-numeric cell {cell!r} at row {row_num}, column {name!r}"
                    ) from None

            cov_rows.append([parse(c) for c in covariate_cols])
            if response_cols:
                resp_rows.append([parse(c) for c in response_cols])
    if n_rows == 0:
        raise DataFormatError(f"{path}: no data rows")
    covariates = np.array(cov_rows, dtype=float)
    responses = None
    if response_cols:
        responses = np.array(resp_rows, dtype=float)
        if responses.shape[1] == 1:
            responses = responses[:, 0]
    return LoadedDataset(
        covariates=covariates,
        responses=responses,
        covariate_names=tuple(covariate_cols),
        response_names=tuple(response_cols),
    )


def write_dataset_csv(path: str, covariates, responses=None, extra=None):
    """Write a dataset as CSV using round-trip float formatting.

    ``extra`` maps column names to 1-d arrays (e.g. truth flags).
    """
    covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
    names = [f"x{k}" for k in range(covariates.shape[1])]
    columns = [covariates[:, k] for k in range(covariates.shape[1])]
    if responses is not None:
        responses = np.asarray(responses, dtype=float)
        if responses.ndim == 1:
            names.append("y")
            columns.append(responses)
        else:
            for k in range(responses.shape[1]):
                names.append(f"y{k}")
                columns.append(responses[:, k])
    for key, values in (extra or {}).items():
        names.append(key)
        columns.append(np.asarray(values))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(covariates.shape[0]):
            writer.writerow([repr(float(col[i])) for col in columns])


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def emit_report(report, path: str, fmt: str = "json"):
    """Write an experiment report as JSON or CSV.

    JSON: one document with the config echo, per-replication rows, and
    aggregates.  CSV: one row per replication followed by aggregate rows;
    floats carry 17 significant digits.
    """
    if not report.rows:
        raise ValueError("report has no replication rows")
    metrics = list(report.rows[0].keys())
    if fmt == "json":
        doc = {
            "config": report.config,
            "version": report.version,
            "master_seed": report.master_seed,
            "replications": len(report.rows),
            "rows": report.rows,
            "aggregates": {
                k: {"mean": v[0], "se": v[1]} for k, v in report.aggregates.items()
            },
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    elif fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["replication"] + metrics)
            for i, row in enumerate(report.rows):
                writer.writerow([i] + [_fmt(row[k]) for k in metrics])
            writer.writerow(["mean"] + [_fmt(report.aggregates[k][0]) for k in metrics])
            writer.writerow(["se"] + [_fmt(report.aggregates[k][1]) for k in metrics])
    else:
        raise ValueError(f"unknown report format {fmt!r}")
