"""Dataset dump files: a JSON header line followed by CSV rows.

One file per simulated instance.  The header records the problem name,
the generating parameters in raw and preprocessed form and the row count;
the body holds the raw dataset, one observation (or time step) per line.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ConfigError


def dump_dataset(path, problem_name: str, x_raw: np.ndarray,
                 theta_raw: np.ndarray | None = None,
                 theta_proc: np.ndarray | None = None) -> None:
    x = np.atleast_2d(np.asarray(x_raw, dtype=float))
    header = {
        "problem": problem_name,
        "theta_raw": None if theta_raw is None else [float(v) for v in theta_raw],
        "theta_proc": None if theta_proc is None else [float(v) for v in theta_proc],
        "n": int(x.shape[0]),
    }
    lines = [json.dumps(header)]
    lines += [",".join(f"{v:.17g}" for v in row) for row in x]
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path) -> tuple[dict, np.ndarray]:
    text = Path(path).read_text().strip().splitlines()
    if not text:
        raise ConfigError(f"empty dataset file {path}")
    try:
        header = json.loads(text[0])
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad dataset header in {path}: {exc}") from exc
    rows = [np.fromstring(line, sep=",") for line in text[1:] if line.strip()]
    x = np.array(rows) if rows else np.empty((0, 0))
    if header.get("n") != x.shape[0]:
        raise ConfigError(
            f"{path}: header declares n={header.get('n')} but found {x.shape[0]} rows")
    return header, x
