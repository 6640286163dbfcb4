"""Monte Carlo measurement campaigns.

Each run draws one lower-state detuning (tweezer intensity imbalance shared by
every atom in that run) and then samples every atom's joint outcome
(exit port x clock state) from the exact four-level probabilities.

Random streams are counter-based: a Philox generator keyed by
(seed, ensemble, duration index). A stream is consumed in a fixed order
(all detunings for the duration, then all atom outcomes), so a table is
reproducible bit-for-bit no matter how durations or ensembles are scheduled.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError, InvalidInputError
from .sequence import (
    SequenceParams,
    collapsed_probabilities,
    joint_probabilities,
)

NOISE_KINDS = ("uniform-phase", "uniform-energy", "gaussian-energy", "none")
DEFAULT_SEED = 20240917
RUN_OVERHEAD = 5.0  # s per run, bookkeeping only


@dataclass(frozen=True)
class NoiseModel:
    """Intensity-imbalance noise on the lower-state detuning.

    ``scale`` is in units of the drive detuning; it is ignored by
    ``uniform-phase`` (the phase is uniform over a full turn) and ``none``.
    """

    kind: str = "uniform-phase"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if not self.scale >= 0:
            raise ConfigError("noise scale must be >= 0")


def sample_delta(noise: NoiseModel, drive_detuning: float, T: float, rng: np.random.Generator,
                 delta0: float = 0.0, size=None):
    """Draw lower-state detuning(s) for runs of duration T."""
    if noise.kind == "none":
        return delta0 if size is None else np.full(size, float(delta0))
    if noise.kind == "uniform-phase":
        return delta0 + rng.uniform(0.0, 2 * math.pi, size) / T
    width = noise.scale * abs(drive_detuning)
    if noise.kind == "uniform-energy":
        return delta0 + rng.uniform(-width, width, size)
    if noise.kind == "gaussian-energy":
        return delta0 + rng.normal(0.0, width, size)
    raise ConfigError(f"unknown noise kind {noise.kind!r}")


@dataclass(frozen=True)
class RunResult:
    counts: tuple[int, int, int, int]  # (g;1, g;2, e;1, e;2)
    delta_realized: float = 0.0

    @property
    def n_atoms(self) -> int:
        return sum(self.counts)

    @property
    def p1_hat(self) -> float:
        return (self.counts[0] + self.counts[2]) / self.n_atoms

    @property
    def pg_hat(self) -> float:
        return (self.counts[0] + self.counts[1]) / self.n_atoms


def _draw(probs: np.ndarray, n_atoms: int, rng: np.random.Generator) -> np.ndarray:
    if n_atoms < 1:
        raise InvalidInputError("n_atoms must be >= 1")
    return rng.multinomial(n_atoms, probs)


def sample_run(p: SequenceParams, n_atoms: int, rng: np.random.Generator) -> RunResult:
    """One coherent run of n_atoms independent atoms."""
    probs = joint_probabilities(p.T, p.drive_detuning, p.lower_detuning, p.epsilon)
    return RunResult(tuple(int(c) for c in _draw(probs, n_atoms, rng)), p.lower_detuning)


def incoherent_run(p: SequenceParams, n_atoms: int, rng: np.random.Generator) -> RunResult:
    """One run where every atom collapses onto a random arm after splitting."""
    probs = collapsed_probabilities(p.T, p.drive_detuning, p.lower_detuning, p.epsilon)
    return RunResult(tuple(int(c) for c in _draw(probs, n_atoms, rng)), p.lower_detuning)


@dataclass(frozen=True)
class ExperimentPlan:
    n_atoms: int = 20
    n_durations: int = 8
    n_reps: int = 5000
    t0: float = 10.0
    drive_detuning: float = 2 * math.pi * 1000
    delta0: float = 0.0
    epsilon: float = 0.0
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = DEFAULT_SEED
    overhead: float = RUN_OVERHEAD
    coherent: bool = True
    delta_per: str = "run"  # "run" or "duration"

    def __post_init__(self):
        for name in ("n_atoms", "n_durations", "n_reps"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.t0 > 0:
            raise ConfigError("t0 must be positive")
        if not self.drive_detuning > 0:
            raise ConfigError("drive detuning must be positive")
        if self.delta_per not in ("run", "duration"):
            raise ConfigError("delta_per must be 'run' or 'duration'")
        if isinstance(self.noise, dict):
            object.__setattr__(self, "noise", _strict(NoiseModel, self.noise, "noise"))

    @property
    def period(self) -> float:
        return 2 * math.pi / self.drive_detuning

    @property
    def durations(self) -> np.ndarray:
        """N1 durations equally spaced over one fringe period, endpoint excluded."""
        return self.t0 + self.period * np.arange(self.n_durations) / self.n_durations

    @property
    def window_midpoint(self) -> float:
        return self.t0 + self.period / 2

    def total_runtime(self) -> float:
        """Wall-clock seconds of data taking: N1 * N2 * (mean T + overhead)."""
        return self.n_durations * self.n_reps * (float(self.durations.mean()) + self.overhead)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExperimentPlan:
        return _strict(cls, data, "plan")

    def to_dict(self) -> dict[str, Any]:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["noise"] = {"kind": self.noise.kind, "scale": self.noise.scale}
        return out


def _strict(cls, data: dict[str, Any], where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def stream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for the sub-stream addressed by ``key``."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *map(int, key)])
    return np.random.Generator(np.random.Philox(key=ss.generate_state(2, np.uint64)))


@dataclass(frozen=True, eq=False)
class EnsembleTable:
    """Complete (duration x repetition) grid of run results."""

    durations: np.ndarray  # (N1,)
    counts: np.ndarray  # (N1, N2, 4) int
    deltas: np.ndarray  # (N1, N2)

    @property
    def n_atoms(self) -> int:
        return int(self.counts[0, 0].sum())

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape[:2]

    @property
    def p1_hat(self) -> np.ndarray:
        return (self.counts[..., 0] + self.counts[..., 2]) / self.n_atoms

    @property
    def pg_hat(self) -> np.ndarray:
        return (self.counts[..., 0] + self.counts[..., 1]) / self.n_atoms

    def __getitem__(self, idx: tuple[int, int]) -> RunResult:
        i, j = idx
        return RunResult(tuple(int(c) for c in self.counts[i, j]), float(self.deltas[i, j]))

    def summary(self) -> dict[str, list[float]]:
        """Per-duration means and standard errors of both estimators."""
        n2 = self.shape[1]
        out: dict[str, Any] = {"T_s": self.durations.tolist(), "n_atoms": self.n_atoms, "n_reps": n2}
        for name in ("pg", "p1"):
            vals = getattr(self, f"{name}_hat")
            out[f"{name}_mean"] = vals.mean(axis=1).tolist()
            sd = vals.std(axis=1, ddof=1) if n2 > 1 else np.zeros(len(vals))
            out[f"{name}_stderr"] = (sd / math.sqrt(n2)).tolist()
        return out

    CSV_HEADER = (
        "duration_index", "T[s]", "rep", "n_g1", "n_g2", "n_e1", "n_e2",
        "p1_hat", "pg_hat", "delta_realized[rad/s]",
    )

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_HEADER)
        p1, pg = self.p1_hat, self.pg_hat
        n1, n2 = self.shape
        for i in range(n1):
            t = fmt(self.durations[i])
            for j in range(n2):
                c = self.counts[i, j]
                w.writerow((i, t, j, *map(int, c), fmt(p1[i, j]), fmt(pg[i, j]), fmt(self.deltas[i, j])))
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="\n")
        return text

    @classmethod
    def from_csv(cls, path: str | Path) -> EnsembleTable:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))[1:]
        n1 = max(int(r[0]) for r in rows) + 1
        n2 = max(int(r[2]) for r in rows) + 1
        durations = np.zeros(n1)
        counts = np.zeros((n1, n2, 4), dtype=np.int64)
        deltas = np.zeros((n1, n2))
        for r in rows:
            i, j = int(r[0]), int(r[2])
            durations[i] = float(r[1])
            counts[i, j] = [int(v) for v in r[3:7]]
            deltas[i, j] = float(r[9])
        return cls(durations, counts, deltas)


def fmt(x: float) -> str:
    """Float with 17 significant digits (round-trips exactly)."""
    return f"{float(x):.17g}"


def simulate_ensemble(plan: ExperimentPlan, ensemble: int = 0) -> EnsembleTable:
    """Run the whole duration scan of ``plan``.

    ``ensemble`` selects an independent replica of the campaign for the same
    top-level seed.
    """
    durations = plan.durations
    n1, n2 = plan.n_durations, plan.n_reps
    counts = np.empty((n1, n2, 4), dtype=np.int64)
    deltas = np.empty((n1, n2))
    probability = joint_probabilities if plan.coherent else collapsed_probabilities
    for i, T in enumerate(durations):
        rng = stream(plan.seed, ensemble, i)
        if plan.delta_per == "run":
            d = sample_delta(plan.noise, plan.drive_detuning, T, rng, plan.delta0, size=n2)
        else:
            d = np.full(n2, sample_delta(plan.noise, plan.drive_detuning, T, rng, plan.delta0, size=1)[0])
        probs = probability(T, plan.drive_detuning, d, plan.epsilon)
        counts[i] = rng.multinomial(plan.n_atoms, probs)
        deltas[i] = d
    return EnsembleTable(durations, counts, deltas)
