"""Experiment configuration files.

A config is a TOML document.  ``load_config`` validates it, fills in every
default and returns an :class:`ExperimentConfig` whose ``snapshot()`` is the
fully resolved plan as canonical JSON.  A snapshot file is itself a valid
config, so a run can be replayed from the manifest it wrote.

Top level keys::

    kind        noharm | synthetic-rrm | credit-rrm | theory-check
    seed        integer, default 0
    output_dir  optional run-output root

Tables: ``[noharm]``, ``[synthetic]``, ``[credit]``, ``[rrm]``, ``[arms]``
and ``[check]``; only the tables relevant to ``kind`` are kept in the
resolved plan.  Unknown keys anywhere are errors.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

import numpy as np
import tomli
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..errors import ConfigError
from .synthetic import synthetic_outcome

KINDS = ("noharm", "synthetic-rrm", "credit-rrm", "theory-check")
SECTIONS = {
    "noharm": ("noharm",),
    "synthetic-rrm": ("synthetic", "rrm", "arms"),
    "credit-rrm": ("credit", "rrm", "arms"),
    "theory-check": ("check",),
}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class NoharmSection(_Strict):
    n: int = Field(100, ge=1)
    taylor_order: Literal[1, 2] = 2
    box: tuple[float, float] = (-3.0, 3.0)
    grid: int = Field(4001, ge=3)
    arex_variance: float = Field(0.25, gt=0)

    @field_validator("box")
    @classmethod
    def _ordered(cls, v):
        if not v[0] < v[1]:
            raise ValueError("box must satisfy lower < upper")
        return v


class SyntheticSection(_Strict):
    outcome_seed: int | None = None
    outcome_scale: float = Field(0.1, gt=0)
    # resolved from outcome_seed when absent
    A: list[list[float]] | None = None
    b: list[float] | None = None
    c: float | None = None

    @model_validator(mode="after")
    def _complete(self):
        given = [v is not None for v in (self.A, self.b, self.c)]
        if any(given) and not all(given):
            raise ValueError("outcome coefficients A, b and c must be given together")
        if self.A is not None:
            A = np.asarray(self.A)
            if A.shape != (4, 4) or len(self.b) != 4:
                raise ValueError("A must be 4x4 and b of length 4")
        return self


class CreditSection(_Strict):
    data: str = "data/german.data"
    augment_rows: int = Field(9000, ge=0)
    test_rows: int = Field(1000, ge=1)
    jitter: float = Field(0.05, ge=0)
    cost_scale: float = Field(0.01, gt=0)
    simulator_steps: int = Field(3000, ge=1)
    simulator_lr: float = Field(0.05, gt=0)


class RRMSection(_Strict):
    iterations: int = Field(30, ge=1)
    batch_sizes: int | list[int] = 2000
    pretrain_size: int = Field(5000, ge=1)
    compliance_size: int = Field(20000, ge=1)
    test_size: int = Field(100000, ge=1)
    inner_steps: int = Field(200, ge=1)
    lr: float = Field(1e-3, gt=0)
    hidden: int = Field(32, ge=1)
    pretrain_steps: int = Field(2000, ge=1)
    pretrain_batch: int | None = 500
    compliance_steps: int = Field(2000, ge=1)
    compliance_batch: int | None = 512
    compliance_lr: float = Field(3e-3, gt=0)
    sampler_variance: float = Field(4.0, gt=0)
    ce_steps: int = Field(500, ge=1)
    ce_lr: float = Field(0.05, gt=0)
    ce_tol: float = Field(1e-7, ge=0)
    inner_batch: int | None = 256
    sigma_lr: float | None = None

    @model_validator(mode="after")
    def _batches(self):
        if isinstance(self.batch_sizes, list):
            if len(self.batch_sizes) != self.iterations:
                raise ValueError(f"{len(self.batch_sizes)} batch sizes for {self.iterations} iterations")
            if any(b < 1 for b in self.batch_sizes):
                raise ValueError("batch sizes must be positive")
        elif self.batch_sizes < 1:
            raise ValueError("batch sizes must be positive")
        return self


class ArmsSection(_Strict):
    joint: bool = True
    lambdas: list[float] = [0.1, 1.0, 4.0]

    @field_validator("lambdas")
    @classmethod
    def _positive(cls, v):
        if any(not lam > 0 for lam in v):
            raise ValueError("every lambda must be positive")
        if len(set(v)) != len(v):
            raise ValueError("lambdas must be distinct")
        return v


class ModelSpec(_Strict):
    """Either a 1-D polynomial (ascending coefficients) or a quadratic form."""

    polynomial: list[float] | None = None
    A: list[list[float]] | None = None
    b: list[float] | None = None
    c: float = 0.0

    @model_validator(mode="after")
    def _one_kind(self):
        if (self.polynomial is None) == (self.A is None):
            raise ValueError("give exactly one of 'polynomial' or 'A' (with optional 'b', 'c')")
        if self.A is not None:
            A = np.asarray(self.A, dtype=np.float64)
            if A.ndim != 2 or A.shape[0] != A.shape[1]:
                raise ValueError("A must be square")
            if self.b is not None and len(self.b) != A.shape[0]:
                raise ValueError("b must match A")
        return self

    @property
    def dim(self):
        return 1 if self.polynomial is not None else len(self.A)

    def build(self):
        from ..models import Polynomial, Quadratic

        if self.polynomial is not None:
            return Polynomial(self.polynomial)
        d = len(self.A)
        return Quadratic(np.asarray(self.A), np.zeros(d) if self.b is None else np.asarray(self.b), self.c)


class CheckSection(_Strict):
    model: ModelSpec = ModelSpec(polynomial=[0.0, 0.0, 1.0])
    surrogate: ModelSpec = ModelSpec(polynomial=[-25.0, 10.0])
    base: list[float] = [5.0]
    lower: list[float] = [2.0]
    upper: list[float] = [5.0]
    probes: int | None = None
    tolerance: float = Field(1e-9, ge=0)

    @model_validator(mode="after")
    def _dims(self):
        d = len(self.base)
        if self.model.dim != d or self.surrogate.dim != d:
            raise ValueError(f"model, surrogate and base disagree on dimension ({d})")
        if len(self.lower) != d or len(self.upper) != d:
            raise ValueError("lower and upper must match the base dimension")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("probe box must satisfy lower < upper")
        if self.probes is not None and self.probes < 2:
            raise ValueError("at least two probes are needed")
        return self

    @property
    def n_probes(self):
        if self.probes is not None:
            return self.probes
        return 2001 if len(self.base) == 1 else 4096


class ExperimentConfig(_Strict):
    kind: Literal["noharm", "synthetic-rrm", "credit-rrm", "theory-check"]
    seed: int = Field(0, ge=0)
    output_dir: str | None = None
    noharm: NoharmSection | None = None
    synthetic: SyntheticSection | None = None
    credit: CreditSection | None = None
    rrm: RRMSection | None = None
    arms: ArmsSection | None = None
    check: CheckSection | None = None

    @model_validator(mode="after")
    def _sections(self):
        wanted = SECTIONS[self.kind]
        for name in ("noharm", "synthetic", "credit", "rrm", "arms", "check"):
            if name not in wanted and getattr(self, name) is not None:
                raise ValueError(f"table [{name}] does not apply to kind {self.kind!r}")
        return self

    def resolved(self, seed=None, base_dir=None):
        """Copy with defaults filled in, ``seed`` applied and paths made absolute."""
        seed = self.seed if seed is None else int(seed)
        if seed < 0:
            raise ConfigError("seed: must be nonnegative")
        update = {"seed": seed}
        defaults = {
            "noharm": NoharmSection, "synthetic": SyntheticSection, "credit": CreditSection,
            "rrm": RRMSection, "arms": ArmsSection, "check": CheckSection,
        }
        for name in SECTIONS[self.kind]:
            section = getattr(self, name) or defaults[name]()
            if name == "synthetic" and section.A is None:
                oseed = seed if section.outcome_seed is None else section.outcome_seed
                h = synthetic_outcome(oseed, scale=section.outcome_scale)
                section = section.model_copy(update={
                    "outcome_seed": oseed,
                    "A": h.A.tolist(), "b": h.b.tolist(), "c": float(h.c),
                })
            if name == "credit":
                path = Path(section.data)
                if not path.is_absolute() and base_dir is not None:
                    path = Path(base_dir) / path
                section = section.model_copy(update={"data": str(path.resolve())})
            update[name] = section
        return self.model_copy(update=update)

    def snapshot(self):
        """Canonical JSON text of this config (stable key order, exact floats)."""
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def _format_errors(exc):
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_config(data):
    """Validate a mapping; errors name the offending field path."""
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def loads_config(text, fmt="toml"):
    try:
        data = json.loads(text) if fmt == "json" else tomli.loads(text)
    except (tomli.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    return parse_config(data)


def load_config(path, seed=None):
    """Read a TOML (or snapshot JSON) config and return the resolved plan."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    fmt = "json" if path.suffix == ".json" else "toml"
    cfg = loads_config(path.read_text(), fmt)
    return cfg.resolved(seed=seed, base_dir=path.parent)


def rrm_config(cfg):
    """The training-loop config for an RRM experiment."""
    from ..train import RRMConfig

    section = cfg.rrm.model_dump()
    if isinstance(section["batch_sizes"], list):
        section["batch_sizes"] = list(section["batch_sizes"])
    return RRMConfig(seed=cfg.seed, **section)
