"""German-credit style tabular data.

Input is the classic space-delimited file: 20 attributes and a label per
row, label 1 = good and 2 = bad.  Preprocessing drops age and the combined
personal-status/sex attribute, label-encodes categoricals in lexicographic
level order, standardizes numeric columns, records per-feature bounds and
marks the eight features agents may change.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..agents import LogisticOutcome
from ..errors import NumericDivergenceError, ParseError, SchemaError, UninitializedSimulatorError
from ..numkit import logistic

# (name, kind, modifiable, keep)
ATTRIBUTES = [
    ("checking_status", "categorical", True, True),
    ("duration", "numeric", False, True),
    ("credit_history", "categorical", True, True),
    ("purpose", "categorical", False, True),
    ("credit_amount", "numeric", True, True),
    ("savings", "categorical", True, True),
    ("employment", "categorical", True, True),
    ("installment_rate", "numeric", True, True),
    ("personal_status_sex", "categorical", False, False),
    ("guarantors", "categorical", True, True),
    ("residence_since", "numeric", True, True),
    ("property", "categorical", False, True),
    ("age", "numeric", False, False),
    ("other_installment_plans", "categorical", False, True),
    ("housing", "categorical", False, True),
    ("existing_credits", "numeric", False, True),
    ("job", "categorical", False, True),
    ("num_dependents", "numeric", False, True),
    ("telephone", "categorical", False, True),
    ("foreign_worker", "categorical", False, True),
]
N_COLUMNS = len(ATTRIBUTES) + 1


@dataclass
class TabularDataset:
    columns: list
    kinds: list
    X: np.ndarray
    y: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    modifiable: np.ndarray
    levels: dict = field(default_factory=dict)
    scaling: dict = field(default_factory=dict)

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]

    @property
    def categorical(self):
        return tuple(i for i, k in enumerate(self.kinds) if k == "categorical")

    @property
    def numeric(self):
        return tuple(i for i, k in enumerate(self.kinds) if k == "numeric")

    def rows(self, idx):
        return replace(self, X=self.X[idx], y=self.y[idx])


def parse_credit(lines):
    """Raw string/number columns and labels from an iterable of lines."""
    raw, labels = [], []
    for lineno, line in enumerate(lines, start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != N_COLUMNS:
            raise SchemaError(f"line {lineno}: expected {N_COLUMNS} columns, got {len(tokens)}")
        row = []
        for (name, kind, _, _), tok in zip(ATTRIBUTES, tokens):
            if kind == "numeric":
                try:
                    row.append(float(tok))
                except ValueError:
                    raise ParseError(f"{name}: {tok!r} is not a number", line=lineno) from None
            else:
                if tok[:1].isdigit() or not tok:
                    raise ParseError(f"{name}: {tok!r} is not a category code", line=lineno)
                row.append(tok)
        if tokens[-1] not in ("1", "2"):
            raise ParseError(f"label {tokens[-1]!r} not in {{1, 2}}", line=lineno)
        raw.append(row)
        labels.append(1 if tokens[-1] == "1" else 0)
    if not raw:
        raise SchemaError("no data rows")
    return raw, np.array(labels, dtype=np.int64)


def load_credit(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"credit data file not found: {path}")
    with path.open() as fh:
        raw, y = parse_credit(fh)
    return preprocess_credit(raw, y)


def preprocess_credit(raw, y):
    columns, kinds, modifiable, data = [], [], [], []
    levels, scaling = {}, {}
    for j, (name, kind, mod, keep) in enumerate(ATTRIBUTES):
        if not keep:
            continue
        col = [r[j] for r in raw]
        idx = len(columns)
        if kind == "categorical":
            codes = sorted(set(col))
            lookup = {c: k for k, c in enumerate(codes)}
            values = np.array([lookup[c] for c in col], dtype=np.float64)
            levels[idx] = np.unique(values)
            scaling[name] = {"codes": codes}
        else:
            values = np.array(col, dtype=np.float64)
            mu, sd = values.mean(), values.std()
            values = (values - mu) / (sd if sd > 0 else 1.0)
            # one more pass removes the residual rounding in the mean
            values = values - values.mean()
            scaling[name] = {"mean": float(mu), "std": float(sd)}
        columns.append(name)
        kinds.append(kind)
        modifiable.append(mod)
        data.append(values)
    X = np.column_stack(data)
    return TabularDataset(
        columns=columns,
        kinds=kinds,
        X=X,
        y=np.asarray(y, dtype=np.int64),
        lower=X.min(axis=0),
        upper=X.max(axis=0),
        modifiable=np.array(modifiable, dtype=bool),
        levels=levels,
        scaling=scaling,
    )


def fit_outcome_simulator(dataset, steps=3000, lr=0.05, l2=1e-4):
    """Logistic regression on ``(X, y)`` by full-batch gradient descent on BCE."""
    X = np.asarray(dataset.X, dtype=np.float64)
    y = np.asarray(dataset.y, dtype=np.float64)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    mean = float(y.mean())
    if mean in (0.0, 1.0):
        p = np.clip(mean, 1e-6, 1 - 1e-6)
        return LogisticOutcome(np.zeros(X.shape[1]), np.log(p / (1 - p)), degenerate=True)
    n, d = X.shape
    w = np.zeros(d)
    b = float(np.log(mean / (1 - mean)))
    m = np.zeros(d + 1)
    v = np.zeros(d + 1)
    for t in range(1, steps + 1):
        p = logistic(X @ w + b)
        r = p - y
        gvec = np.concatenate([X.T @ r / n + l2 * w, [r.mean()]])
        if not np.all(np.isfinite(gvec)):
            raise NumericDivergenceError("logistic fit diverged", iteration=t)
        m = 0.9 * m + 0.1 * gvec
        v = 0.999 * v + 0.001 * gvec * gvec
        step = lr * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        w = w - step[:d]
        b = b - step[d]
    return LogisticOutcome(w, b)


def bootstrap_augment(dataset, n_extra, jitter=0.05, seed=0, simulator=None):
    """Append ``n_extra`` bootstrap rows with Gaussian jitter on numeric columns.

    Jitter has standard deviation ``jitter * column std`` and is clipped to
    the recorded bounds; categorical values are copied.  Labels of new rows
    are drawn from ``simulator``.
    """
    if jitter < 0:
        raise ValueError("jitter must be nonnegative")
    if n_extra == 0:
        return replace(dataset, X=dataset.X.copy(), y=dataset.y.copy())
    if simulator is None or not simulator.fitted:
        raise UninitializedSimulatorError("labels for new rows need a fitted outcome simulator")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(dataset), size=n_extra)
    new = dataset.X[idx].copy()
    num = list(dataset.numeric)
    if num and jitter > 0:
        sd = dataset.X[:, num].std(axis=0)
        new[:, num] += rng.standard_normal((n_extra, len(num))) * (jitter * sd)
        new[:, num] = np.clip(new[:, num], dataset.lower[num], dataset.upper[num])
    labels = simulator.draw(new, rng.random(n_extra))
    return replace(
        dataset,
        X=np.vstack([dataset.X, new]),
        y=np.concatenate([dataset.y, labels]),
    )
