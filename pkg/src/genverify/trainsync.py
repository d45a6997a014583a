"""Simulated embedding fine-tuning with controllable stochasticity sources,
checkpoint resynchronization, drift metrics, and PCA trajectory projection.

The training task is a seeded quadratic surrogate: a hidden concept vector
plus exemplar perturbations define per-example targets, and each step
moves the trained embedding toward a noisy batch mean.  Six independent
random streams feed exactly the places real fine-tuning is stochastic:
batch order, exemplar sign flips, prompt-template choice, latent noise,
timestep choice, and the noise schedule.  Each source is either fixed
(seeded, replayable) or free (fresh OS entropy per run); hardware
nondeterminism is an explicit per-step jitter amplitude.

With every source fixed and zero jitter, a run is a pure function of
(task seed, configs) — any verifier replays it bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .rng import Stream, derive_seed, fresh_seed

TOGGLE_NAMES = (
    "horizontal_flip",
    "template_choice",
    "data_shuffle",
    "latent_noise",
    "timestep_choice",
    "noise_schedule",
)

_EXEMPLAR_SCALE = 0.1
_TEMPLATE_SCALE = 0.05
_NOISE_AMPLITUDE = 0.05
_TEMPLATE_COUNT = 4
_TIMESTEP_RANGE = 1000


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 768
    learning_rate: float = 5e-4
    max_steps: int = 2000
    batch_size: int = 4
    checkpoint_every: int = 50
    exemplar_count: int = 5

    def __post_init__(self):
        if self.dim < 1 or self.batch_size < 1:
            raise ValueError("dim and batch_size must be >= 1")
        if self.checkpoint_every < 1 or self.max_steps < self.checkpoint_every:
            raise ValueError("max_steps must be >= checkpoint_every >= 1")
        if self.max_steps % self.checkpoint_every != 0:
            raise ValueError("max_steps must be a multiple of checkpoint_every")
        if not 3 <= self.exemplar_count <= 10:
            raise ValueError("exemplar_count must lie in [3, 10]")


@dataclass(frozen=True)
class StochasticityConfig:
    """Per-source seeds; ``None`` frees a source to fresh entropy per run.

    ``hardware_jitter`` is the per-step perturbation amplitude; the noise
    stream is unseeded (fresh entropy, like the hardware it emulates)
    unless ``jitter_seed`` pins it for reproducible reports.
    """

    horizontal_flip: int | None
    template_choice: int | None
    data_shuffle: int | None
    latent_noise: int | None
    timestep_choice: int | None
    noise_schedule: int | None
    hardware_jitter: float = 0.0
    jitter_seed: int | None = None

    def __post_init__(self):
        if self.hardware_jitter < 0.0:
            raise ValueError("hardware_jitter must be >= 0")

    @classmethod
    def deterministic(cls, master_seed: int, hardware_jitter: float = 0.0,
                      jitter_seed: int | None = None):
        """All six sources fixed, with seeds derived from one master."""
        seeds = {
            name: derive_seed("trainsync.toggle", master_seed, name)
            for name in TOGGLE_NAMES
        }
        return cls(hardware_jitter=hardware_jitter, jitter_seed=jitter_seed,
                   **seeds)

    def freeing(self, name: str, reseed: int | None = None) -> "StochasticityConfig":
        """Copy with one named source freed (or re-seeded when ``reseed``
        is given, which diverges from the original just like freeing but
        stays replayable)."""
        if name not in TOGGLE_NAMES:
            raise ValueError(f"unknown stochasticity source {name!r}")
        return replace(self, **{name: reseed})

    @property
    def is_deterministic(self) -> bool:
        return self.hardware_jitter == 0.0 and all(
            getattr(self, name) is not None for name in TOGGLE_NAMES
        )


@dataclass(frozen=True)
class Checkpoint:
    step: int
    embedding: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    run_id: str
    checkpoints: tuple[Checkpoint, ...]

    @property
    def steps(self) -> tuple[int, ...]:
        return tuple(c.step for c in self.checkpoints)

    def at_step(self, step: int) -> Checkpoint:
        for c in self.checkpoints:
            if c.step == step:
                return c
        raise KeyError(f"no checkpoint at step {step}")

    @property
    def final(self) -> Checkpoint:
        return self.checkpoints[-1]


@dataclass(frozen=True)
class SyncPolicy:
    resync_every: int = 300
    source_run: str = ""


class _TaskWorld:
    """Targets derived from the task seed: concept, exemplars, templates."""

    def __init__(self, task_seed: int, cfg: TrainConfig):
        stream = Stream(derive_seed("trainsync.task", task_seed))
        self.concept = stream.normal_block(cfg.dim)
        self.exemplars = [
            _EXEMPLAR_SCALE * stream.normal_block(cfg.dim)
            for _ in range(cfg.exemplar_count)
        ]
        self.templates = [
            _TEMPLATE_SCALE * stream.normal_block(cfg.dim)
            for _ in range(_TEMPLATE_COUNT)
        ]
        self.initial = stream.normal_block(cfg.dim)


def expected_target(task_seed: int, cfg: TrainConfig) -> np.ndarray:
    """Mean of the per-step regression targets (flips and noise average out)."""
    world = _TaskWorld(task_seed, cfg)
    return world.concept + np.mean(world.templates, axis=0)


def _toggle_stream(name: str, seed: int | None) -> Stream:
    effective = seed if seed is not None else fresh_seed()
    return Stream(derive_seed("trainsync.stream", name, effective))


def _run_steps(
    task_seed: int,
    cfg: TrainConfig,
    stoch: StochasticityConfig,
    run_id: str,
    sync_source: Trajectory | None,
    resync_every: int,
) -> Trajectory:
    world = _TaskWorld(task_seed, cfg)
    streams = {name: _toggle_stream(name, getattr(stoch, name)) for name in TOGGLE_NAMES}
    delta = stoch.hardware_jitter
    jitter = None
    if delta > 0.0:
        jitter_key = (stoch.jitter_seed if stoch.jitter_seed is not None
                      else fresh_seed())
        jitter = Stream(derive_seed("trainsync.jitter", jitter_key))

    w = world.initial.copy()
    exemplars = world.exemplars
    k = len(exemplars)
    checkpoints = []
    for step in range(1, cfg.max_steps + 1):
        batch = [streams["data_shuffle"].randrange(k) for _ in range(cfg.batch_size)]
        target = np.zeros(cfg.dim)
        for idx in batch:
            sign = -1.0 if streams["horizontal_flip"].chance(0.5) else 1.0
            target += world.concept + sign * exemplars[idx]
        target /= cfg.batch_size
        template = streams["template_choice"].randrange(_TEMPLATE_COUNT)
        target += world.templates[template]
        timestep = streams["timestep_choice"].randrange(_TIMESTEP_RANGE)
        schedule = streams["noise_schedule"].uniform(0.5, 1.5)
        noise = streams["latent_noise"].normal_block(cfg.dim)
        target += _NOISE_AMPLITUDE * (timestep / (_TIMESTEP_RANGE - 1)) * schedule * noise

        w += cfg.learning_rate * (target - w)
        if jitter is not None:
            w += jitter.uniform_block(cfg.dim, -delta, delta)
        if sync_source is not None and step % resync_every == 0:
            w = sync_source.at_step(step).embedding.copy()
        if step % cfg.checkpoint_every == 0:
            snapshot = w.copy()
            snapshot.setflags(write=False)
            checkpoints.append(Checkpoint(step, snapshot))
    return Trajectory(run_id=run_id, checkpoints=tuple(checkpoints))


def train(
    task_seed: int,
    train_cfg: TrainConfig,
    stoch_cfg: StochasticityConfig,
    run_id: str = "run",
) -> Trajectory:
    """One simulated fine-tuning run; checkpoints every checkpoint_every steps.

    The run id is metadata only — with all sources fixed, differently
    named runs produce bit-identical trajectories.
    """
    return _run_steps(task_seed, train_cfg, stoch_cfg, run_id, None, 0)


def train_synced(
    task_seed: int,
    train_cfg: TrainConfig,
    stoch_cfg: StochasticityConfig,
    policy: SyncPolicy,
    source: Trajectory,
    run_id: str = "synced",
) -> Trajectory:
    """Like train(), but the embedding is overwritten with the source's
    checkpoint at every resync boundary before continuing."""
    if policy.resync_every < 1:
        raise ValueError("resync_every must be >= 1")
    if policy.resync_every % train_cfg.checkpoint_every != 0:
        raise ValueError("resync_every must be a multiple of checkpoint_every")
    for step in range(policy.resync_every, train_cfg.max_steps + 1, policy.resync_every):
        if step not in source.steps:
            raise ValueError(f"source trajectory missing checkpoint at step {step}")
    return _run_steps(
        task_seed, train_cfg, stoch_cfg, run_id, source, policy.resync_every
    )


def drift(a: Trajectory, b: Trajectory) -> list[tuple[int, float]]:
    """Euclidean distance per shared checkpoint; steps must align."""
    if a.steps != b.steps:
        raise ValueError("trajectories have misaligned checkpoint steps")
    return [
        (ca.step, float(np.linalg.norm(ca.embedding - cb.embedding)))
        for ca, cb in zip(a.checkpoints, b.checkpoints)
    ]


def trajectory_loss(
    task_seed: int, cfg: TrainConfig, trajectory: Trajectory
) -> list[tuple[int, float]]:
    """Squared-error loss against the mean target, per checkpoint."""
    mu = expected_target(task_seed, cfg)
    return [
        (c.step, 0.5 * float(np.sum((c.embedding - mu) ** 2)))
        for c in trajectory.checkpoints
    ]


# ---------------------------------------------------------------------------
# PCA projection


_PCA_TOLERANCE = 1e-10
_PCA_MAX_ITERATIONS = 10_000


def _orient(v: np.ndarray) -> np.ndarray:
    """Sign convention: the largest-magnitude coordinate is positive."""
    if v[int(np.argmax(np.abs(v)))] < 0.0:
        return -v
    return v


def _power_component(
    cov: np.ndarray, previous: list[np.ndarray], start: np.ndarray
) -> np.ndarray:
    """Dominant eigenvector of cov orthogonal to ``previous`` components."""
    v = start.copy()
    for prev in previous:
        v -= (v @ prev) * prev
    norm = np.linalg.norm(v)
    if norm == 0.0:
        v = np.zeros_like(start)
        v[len(previous) % len(start)] = 1.0
        for prev in previous:
            v -= (v @ prev) * prev
        norm = np.linalg.norm(v)
    v /= norm
    for _ in range(_PCA_MAX_ITERATIONS):
        nxt = cov @ v
        for prev in previous:
            nxt -= (nxt @ prev) * prev
        norm = np.linalg.norm(nxt)
        if norm < 1e-300:
            # Deflated matrix is numerically zero: any orthogonal unit
            # vector works, projections vanish along it anyway.
            break
        nxt /= norm
        if min(np.linalg.norm(nxt - v), np.linalg.norm(nxt + v)) < _PCA_TOLERANCE:
            v = nxt
            break
        v = nxt
    return _orient(v)


def pca_project(
    trajectories: Sequence[Trajectory], components: int = 2
) -> list[tuple]:
    """Project every checkpoint onto the top principal components.

    Pools all checkpoint embeddings, centers by the pooled mean, and runs
    deterministic power iteration with deflation on the covariance.  A
    zero-variance pool yields all-zero projections.
    """
    points = []
    labels = []
    for traj in trajectories:
        for c in traj.checkpoints:
            points.append(c.embedding)
            labels.append((traj.run_id, c.step))
    if len(points) < 2:
        raise ValueError("need at least two checkpoints to project")
    x = np.stack(points)
    centered = x - x.mean(axis=0)
    if not np.any(centered):
        return [(rid, step) + (0.0,) * components for rid, step in labels]
    cov = (centered.T @ centered) / len(points)
    vectors: list[np.ndarray] = []
    for i in range(components):
        start = Stream(derive_seed("trainsync.pca", i)).normal_block(cov.shape[0])
        vectors.append(_power_component(cov, vectors, start))
    projected = centered @ np.stack(vectors, axis=1)
    return [
        (rid, step) + tuple(float(p) for p in projected[row])
        for row, (rid, step) in enumerate(labels)
    ]


# ---------------------------------------------------------------------------
# Serialization (17 significant digits, bit-exact for doubles)


def trajectory_rows(trajectories: Iterable[Trajectory]) -> list[str]:
    rows = ["run_id,step,dim,values"]
    for traj in trajectories:
        for c in traj.checkpoints:
            values = ",".join(f"{v:.17g}" for v in c.embedding)
            rows.append(f"{traj.run_id},{c.step},{c.embedding.size},{values}")
    return rows


def write_trajectories(path: str | Path, trajectories: Iterable[Trajectory]) -> None:
    Path(path).write_text("\n".join(trajectory_rows(trajectories)) + "\n")


def read_trajectories(path: str | Path) -> list[Trajectory]:
    lines = Path(path).read_text().strip().splitlines()
    grouped: dict[str, list[Checkpoint]] = {}
    order: list[str] = []
    for line in lines[1:]:
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        run_id, step, dim = parts[0], int(parts[1]), int(parts[2])
        values = np.array([float(v) for v in parts[3 : 3 + dim]])
        if run_id not in grouped:
            grouped[run_id] = []
            order.append(run_id)
        grouped[run_id].append(Checkpoint(step, values))
    return [Trajectory(rid, tuple(grouped[rid])) for rid in order]


# ---------------------------------------------------------------------------
# Canonical experiment compositions


def replication_suite(
    task_seed: int,
    train_cfg: TrainConfig,
    stoch_master_seed: int,
    replayable: bool = False,
) -> list[Trajectory]:
    """Three deterministic runs plus flip/shuffle/no-seed ablations.

    With ``replayable`` the ablated sources are re-seeded from the master
    instead of truly freed, so the whole suite is a pure function of its
    arguments (the divergence behavior is the same either way).
    """
    deter = StochasticityConfig.deterministic(stoch_master_seed)
    ablations = [
        ("flip-free", "horizontal_flip"),
        ("shuffle-free", "data_shuffle"),
        ("noseed", "latent_noise"),
    ]
    runs = [
        train(task_seed, train_cfg, deter, run_id=f"deter-{i}") for i in (1, 2, 3)
    ]
    for run_id, source in ablations:
        reseed = None
        if replayable:
            reseed = derive_seed("trainsync.reseed", stoch_master_seed, run_id)
        runs.append(
            train(task_seed, train_cfg, deter.freeing(source, reseed), run_id=run_id)
        )
    return runs
