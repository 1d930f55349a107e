"""Synthetic low-rank data with missing entries, the matrix-M fixture, and CSV I/O."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import LabeledExample, ObservedVector, check_dims
from .reference import SubspaceSpec
from .regularity import pattern_diagnostics

log = logging.getLogger(__name__)

TRUTH_FORMAT_VERSION = 1
LABEL_RULES = ("margin", "regression")


class GenerationError(RuntimeError):
    pass


class CsvFormatError(ValueError):
    pass


@dataclass
class GeneratorConfig:
    d: int = 10
    rank: int = 2
    lambda0: float = 0.2
    n: int = 100
    keep_prob: float = 0.5
    patterns: list[list[int]] | None = None   # if set, masks are drawn uniformly from these
    margin: float = 0.0
    seed: int = 0
    label_rule: str = "margin"
    noise: float = 0.0
    max_attempts: int = 1_000_000

    def validate(self):
        if not 1 <= self.rank <= self.d:
            raise ValueError(f"rank must satisfy 1 <= rank <= d (got rank={self.rank}, d={self.d})")
        if self.n < 1:
            raise ValueError(f"n must be >= 1 (got {self.n})")
        if not 0 < self.lambda0 <= 1:
            raise ValueError(f"lambda0 must lie in (0, 1] (got {self.lambda0})")
        if self.patterns is None and not 0 < self.keep_prob <= 1:
            raise ValueError(f"keep_prob must lie in (0, 1] (got {self.keep_prob})")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if self.label_rule not in LABEL_RULES:
            raise ValueError(f"label_rule must be one of {LABEL_RULES}")


@dataclass
class GroundTruth:
    subspace: SubspaceSpec
    wstar: np.ndarray
    full_vectors: np.ndarray
    scale: float = 1.0
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "format_version": TRUTH_FORMAT_VERSION,
            "d": self.subspace.dim,
            "rank": self.subspace.rank,
            "basis": self.subspace.basis.tolist(),
            "wstar": self.wstar.tolist(),
            "scale": self.scale,
            "seed": self.seed,
            "full_vectors": self.full_vectors.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        if d.get("format_version") != TRUTH_FORMAT_VERSION:
            raise ValueError(f"unsupported ground-truth format_version {d.get('format_version')!r}")
        basis = np.array(d["basis"], dtype=np.float64).reshape(d["d"], d["rank"])
        full = np.array(d["full_vectors"], dtype=np.float64).reshape(-1, d["d"])
        return cls(SubspaceSpec.from_basis(basis), np.array(d["wstar"], dtype=np.float64),
                   full, float(d["scale"]), d.get("seed"))


def save_ground_truth(truth: GroundTruth, path) -> None:
    with open(path, "w") as f:
        json.dump(truth.to_dict(), f)
        f.write("\n")


def load_ground_truth(path) -> GroundTruth:
    with open(path) as f:
        return GroundTruth.from_dict(json.load(f))


def generate(config: GeneratorConfig) -> tuple[list[LabeledExample], GroundTruth]:
    """Sample a lambda0-regular labeled dataset on a random rank-r subspace.

    Points are U z with z uniform on the unit sphere of R^r. Masks whose
    pattern loses rank or has a positive singular value below lambda0 are
    rejected, as are points closer than ``margin`` to the decision boundary.
    The accepted set is finally rescaled so that max |P_o x| = 1.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    E = SubspaceSpec.random(config.d, config.rank, rng)
    c = rng.standard_normal(config.rank)
    c /= np.linalg.norm(c)
    wstar = E.basis @ c
    patterns = [np.array(sorted(set(p)), dtype=np.int64) for p in config.patterns] if config.patterns else None

    verdicts: dict[tuple[int, ...], bool] = {}

    def pattern_ok(o: np.ndarray) -> bool:
        key = tuple(o.tolist())
        if key not in verdicts:
            diag = pattern_diagnostics(key, E)
            verdicts[key] = diag.kernel_ok and diag.lambda_o >= config.lambda0
        return verdicts[key]

    full, masks, labels = [], [], []
    attempts = 0
    while len(full) < config.n:
        attempts += 1
        if attempts > config.max_attempts or (attempts >= 10_000 and len(full) < attempts / 100):
            raise GenerationError(
                f"accepted {len(full)} of {attempts} draws; lower lambda0 or margin, "
                f"or raise keep_prob")
        z = rng.standard_normal(config.rank)
        z /= np.linalg.norm(z)
        x = E.basis @ z
        if patterns is not None:
            o = patterns[rng.integers(len(patterns))]
        else:
            o = np.flatnonzero(rng.random(config.d) < config.keep_prob)
        if not pattern_ok(o):
            continue
        score = float(wstar @ x)
        if config.label_rule == "margin":
            if abs(score) < config.margin:
                continue
            y = 1.0 if score >= 0 else -1.0
        else:
            y = score + config.noise * rng.standard_normal()
        full.append(x)
        masks.append(o)
        labels.append(y)

    full = np.array(full)
    scale = 1.0 / max(np.linalg.norm(x[o]) for x, o in zip(full, masks))
    full *= scale
    if config.label_rule == "regression":
        labels = [y * scale for y in labels]
    examples = [LabeledExample(ObservedVector(config.d, o, x[o]), y)
                for x, o, y in zip(full, masks, labels)]
    log.info("generated %d examples in %d draws, scale %.6g", config.n, attempts, scale)
    return examples, GroundTruth(E, wstar, full, scale, config.seed)


def matrix_m_fixture(per_type: int = 1, scale: float = 0.5) -> list[LabeledExample]:
    """The three instance types [1,*,1,*] -> +1, [*,-1,*,-1] -> -1, [1,-1,1,-1] -> +1,
    scaled by ``scale`` and interleaved ``per_type`` times."""
    types = [
        (ObservedVector(4, [0, 2], [scale, scale]), 1.0),
        (ObservedVector(4, [1, 3], [-scale, -scale]), -1.0),
        (ObservedVector(4, [0, 1, 2, 3], [scale, -scale, scale, -scale]), 1.0),
    ]
    return [LabeledExample(x, y) for _ in range(per_type) for x, y in types]


def rescale_examples(examples: Sequence[LabeledExample]) -> tuple[list[LabeledExample], float]:
    """Divide every input by max |P_o x| so that the largest observed norm is 1."""
    top = max((e.input.norm() for e in examples), default=0.0)
    if top == 0.0:
        return list(examples), 1.0
    s = 1.0 / top
    return [LabeledExample(e.input.scaled(s), e.label) for e in examples], s


def format_float(v: float) -> str:
    return format(v, ".17g")


def save_csv(examples: Sequence[LabeledExample], path, dim: int | None = None,
             missing: str = "?", label_column: str = "label") -> None:
    dim = check_dims([e.input for e in examples], dim)
    if dim is None:
        raise ValueError("cannot infer the dimension of an empty dataset; pass dim")
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(dim)] + [label_column])
        for e in examples:
            row = [missing] * dim
            for i, v in zip(e.input.observed, e.input.values):
                row[i] = format_float(v)
            w.writerow(row + [format_float(e.label)])


def read_csv(path, missing: Sequence[str] = ("", "?"), label_column: str = "label",
             require_label: bool = True) -> tuple[list[ObservedVector], list[float] | None]:
    """Parse a CSV with a header row into inputs and labels.

    Feature columns are every column except ``label_column``; cells equal to one
    of ``missing`` are unobserved. Labels are None when the column is absent and
    ``require_label`` is False.
    """
    missing = set(missing)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file, expected a header row") from None
        if label_column in header:
            li = header.index(label_column)
        elif require_label:
            raise CsvFormatError(f"{path}: no label column {label_column!r} in header")
        else:
            li = None
        feat = [j for j in range(len(header)) if j != li]
        if not feat:
            raise CsvFormatError(f"{path}: no feature columns")
        inputs, labels = [], []
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(f"{path}:{rowno}: expected {len(header)} cells, got {len(row)}")
            if li is not None:
                cell = row[li].strip()
                if cell in missing:
                    raise CsvFormatError(f"{path}:{rowno}: missing label")
                labels.append(_parse(cell, path, rowno, label_column))
            idx, vals = [], []
            for k, j in enumerate(feat):
                c = row[j].strip()
                if c in missing:
                    continue
                idx.append(k)
                vals.append(_parse(c, path, rowno, header[j]))
            inputs.append(ObservedVector(len(feat), idx, vals))
    return inputs, (labels if li is not None else None)


def load_csv(path, missing: Sequence[str] = ("", "?"), label_column: str = "label",
             rescale: bool = False) -> list[LabeledExample]:
    """Read labeled examples; with ``rescale`` divide inputs by the largest observed norm."""
    inputs, labels = read_csv(path, missing, label_column)
    examples = [LabeledExample(x, y) for x, y in zip(inputs, labels)]
    if rescale:
        examples, s = rescale_examples(examples)
        log.info("rescaled %s by %.17g", path, s)
    return examples


def csv_dim(path, label_column: str = "label") -> int:
    with open(path, newline="") as f:
        header = next(csv.reader(f), None)
    if header is None:
        raise CsvFormatError(f"{path}: empty file, expected a header row")
    return len(header) - (1 if label_column in [h.strip() for h in header] else 0)


def _parse(cell: str, path, rowno: int, column: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise CsvFormatError(f"{path}:{rowno}: cannot parse {cell!r} in column {column!r}") from None
    if not math.isfinite(v):
        raise CsvFormatError(f"{path}:{rowno}: non-finite value {cell!r} in column {column!r}")
    return v
