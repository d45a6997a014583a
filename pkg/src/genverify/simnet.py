"""Seeded simulation of a decentralized verification network.

Diffusion inference is replaced by a procedural generator: a handful of
low-frequency cosine blobs keyed by (prompt_id, seed) through the
counter-based stream of :mod:`genverify.rng`.  That preserves everything
the protocol logic can observe — determinism, seed sensitivity, hash
locality — at desk scale.  A corpus manifest of real generated images can
be substituted wherever a synthetic class corpus is used.

Every simulation is a pure function of (config, master seed); per-node and
per-image streams are derived by hashing the master seed with stable
labels, never by drawing order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from . import imaging
from .consensus import ConsensusDecision, QuorumRule, VerifierReport, decide
from .imaging import Image
from .phash import (
    HashKind,
    PerceptualHash,
    hamming,
    hamming_block,
    hash_image,
    pack_hashes,
)
from .rng import Stream, derive_seed

DEFAULT_IMAGE_SIZE = 128
_BLOBS_PER_CHANNEL = 5
_MAX_FREQ = 4


class NodeKind(Enum):
    HONEST = "honest"
    NOISY_HONEST = "noisy"
    MALICIOUS_GUESSER = "guesser"
    LAZY = "lazy"


@dataclass(frozen=True)
class NodeProfile:
    kind: NodeKind
    flip_rate: float = 0.0  # only NoisyHonest reads this
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.flip_rate <= 1.0:
            raise ValueError("flip_rate must lie in [0, 1]")

    @property
    def is_honest(self) -> bool:
        return self.kind in (NodeKind.HONEST, NodeKind.NOISY_HONEST)


@dataclass(frozen=True)
class Task:
    task_id: int
    prompt_id: int
    seed: int
    hash_kind: HashKind = HashKind.AHASH
    tolerance: int = 2


@dataclass(frozen=True)
class RoundOutcome:
    task_id: int
    decision: ConsensusDecision
    ground_truth_honest: bool
    detected_fraud: bool
    worker_distance: int


@dataclass
class CollisionStats:
    comparisons: int = 0
    collisions_at: dict[int, int] = field(default_factory=dict)

    @property
    def rate_at(self) -> dict[int, float]:
        if self.comparisons == 0:
            return {t: 0.0 for t in self.collisions_at}
        return {t: c / self.comparisons for t, c in self.collisions_at.items()}

    def merge(self, other: "CollisionStats") -> None:
        self.comparisons += other.comparisons
        for t, c in other.collisions_at.items():
            self.collisions_at[t] = self.collisions_at.get(t, 0) + c


def _reference_field(prompt_id: int, seed: int, width: int, height: int) -> np.ndarray:
    """Smooth deterministic RGB field for (prompt_id, seed), float in [0, 255]."""
    stream = Stream(derive_seed("simnet.image", prompt_id, seed))
    y = np.arange(height, dtype=np.float64).reshape(-1, 1) / height
    x = np.arange(width, dtype=np.float64).reshape(1, -1) / width
    channels = []
    for _ in range(3):
        total = np.full((height, width), 128.0)
        for _ in range(_BLOBS_PER_CHANNEL):
            fx = stream.randrange(_MAX_FREQ + 1)
            fy = stream.randrange(_MAX_FREQ + 1)
            if fx == 0 and fy == 0:
                fx = 1
            amplitude = stream.uniform(10.0, 42.0)
            phase = stream.uniform(0.0, 2.0 * np.pi)
            total += amplitude * np.cos(2.0 * np.pi * (fx * x + fy * y) + phase)
        channels.append(total)
    return np.clip(np.stack(channels, axis=-1), 0.0, 255.0)


def generate(
    prompt_id: int,
    seed: int,
    node: NodeProfile,
    size: int = DEFAULT_IMAGE_SIZE,
) -> Image:
    """Produce the node's claimed output image for (prompt_id, seed).

    Honest nodes render the reference field; noisy-honest nodes add ±1
    pixel perturbations at their flip rate; a malicious guesser renders
    the right prompt under its own seed; a lazy node returns a constant
    image.
    """
    if node.kind is NodeKind.LAZY:
        return Image(np.full((size, size, 3), 128, dtype=np.uint8))
    if node.kind is NodeKind.MALICIOUS_GUESSER:
        raster = _reference_field(prompt_id, node.seed, size, size)
        return Image(np.rint(raster).astype(np.uint8))
    raster = np.rint(_reference_field(prompt_id, seed, size, size))
    if node.kind is NodeKind.NOISY_HONEST and node.flip_rate > 0.0:
        noise = Stream(derive_seed("simnet.noise", node.seed, prompt_id, seed))
        count = raster.size
        flips = noise.uniform_block(count).reshape(raster.shape) < node.flip_rate
        signs = np.where(
            noise.uniform_block(count).reshape(raster.shape) < 0.5, -1.0, 1.0
        )
        raster = np.clip(raster + flips * signs, 0.0, 255.0)
    return Image(raster.astype(np.uint8))


def run_round(
    task: Task,
    workers: Sequence[NodeProfile],
    verifiers: Sequence[NodeProfile],
    rule: QuorumRule,
    size: int = DEFAULT_IMAGE_SIZE,
) -> RoundOutcome:
    """One verification round: the worker's hash against verifier rehashes.

    The first worker is the node under test.  Fraud is flagged when the
    quorum reaches a decision and the worker's hash falls outside the
    accepted mode's tolerance ball.
    """
    if len(workers) < 1:
        raise ValueError("need at least one worker")
    if len(verifiers) < 2:
        raise ValueError("need at least two verifiers")
    reports = []
    for i, node in enumerate(workers):
        img = generate(task.prompt_id, task.seed, node, size)
        reports.append(VerifierReport(f"worker-{i}", hash_image(img, task.hash_kind)))
    for i, node in enumerate(verifiers):
        img = generate(task.prompt_id, task.seed, node, size)
        reports.append(VerifierReport(f"verifier-{i}", hash_image(img, task.hash_kind)))
    decision = decide(reports, task.tolerance, rule)
    worker_hash = reports[0].hash
    worker_distance = hamming(worker_hash, decision.mode_hash)
    detected = decision.accepted and worker_distance > task.tolerance
    return RoundOutcome(
        task_id=task.task_id,
        decision=decision,
        ground_truth_honest=workers[0].is_honest,
        detected_fraud=detected,
        worker_distance=worker_distance,
    )


def monte_carlo_type1(
    p_emulated: float,
    n: int,
    rule: QuorumRule,
    trials: int,
    seed: int,
) -> float:
    """Empirical quorum acceptance rate under Bernoulli verifier matching.

    Each verifier independently matches the mode with probability
    ``p_emulated``; the closed form in :func:`consensus.quorum_probability`
    is the oracle this validates.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0.0 <= p_emulated <= 1.0:
        raise ValueError("p_emulated must lie in [0, 1]")
    stream = Stream(derive_seed("simnet.type1", seed, n))
    k_min = rule.min_matches(n)
    accepted = 0
    chunk = 65536
    done = 0
    while done < trials:
        batch = min(chunk, trials - done)
        u = stream.uniform_block(batch * n).reshape(batch, n)
        successes = (u < p_emulated).sum(axis=1)
        accepted += int((successes >= k_min).sum())
        done += batch
    return accepted / trials


def count_pair_collisions(
    hashes: Sequence[PerceptualHash],
    tolerances: Sequence[int],
) -> CollisionStats:
    """Unordered all-pairs Hamming comparison with per-tolerance counts.

    The kernel is word-wise XOR plus population count over the packed
    uint64 representation.
    """
    n = len(hashes)
    if n < 2:
        raise ValueError("need at least two hashes to compare")
    packed = pack_hashes(hashes)
    counts = {int(t): 0 for t in tolerances}
    for i in range(n - 1):
        d = hamming_block(packed[i + 1 :], packed[i])
        for t in counts:
            counts[t] += int((d <= t).sum())
    return CollisionStats(comparisons=n * (n - 1) // 2, collisions_at=counts)


def collision_experiment(
    classes: int,
    per_class: int,
    kind: HashKind,
    tolerances: Sequence[int],
    seed: int,
    size: int = DEFAULT_IMAGE_SIZE,
) -> tuple[list[CollisionStats], CollisionStats]:
    """Intra-class all-to-all collision scan over a synthetic corpus.

    Emulates a guesser who knows the prompt but not the seed: every image
    in a class shares the prompt and differs only in generation seed.
    Returns (per-class stats, aggregate).
    """
    if per_class < 2:
        raise ValueError("per_class must be >= 2")
    if classes < 1:
        raise ValueError("classes must be >= 1")
    honest = NodeProfile(NodeKind.HONEST)
    per_class_stats = []
    aggregate = CollisionStats(collisions_at={int(t): 0 for t in tolerances})
    for class_id in range(classes):
        hashes = []
        for i in range(per_class):
            image_seed = derive_seed("simnet.collide", seed, class_id, i)
            img = generate(class_id, image_seed, honest, size)
            hashes.append(hash_image(img, kind))
        stats = count_pair_collisions(hashes, tolerances)
        per_class_stats.append(stats)
        aggregate.merge(stats)
    return per_class_stats, aggregate


def load_manifest(path: str | Path) -> list[tuple[int, list[Path]]]:
    """Parse a corpus manifest: {"classes": [{"prompt_id", "images"}]}."""
    path = Path(path)
    data = json.loads(path.read_text())
    classes = data.get("classes")
    if not isinstance(classes, list) or not classes:
        raise ValueError(f"manifest {path} has no classes")
    out = []
    base = path.parent
    for entry in classes:
        prompt_id = int(entry["prompt_id"])
        images = [base / p if not Path(p).is_absolute() else Path(p)
                  for p in entry["images"]]
        if not images:
            raise ValueError(f"class {prompt_id} lists no images")
        out.append((prompt_id, images))
    return out


def collision_experiment_manifest(
    manifest_path: str | Path,
    kind: HashKind,
    tolerances: Sequence[int],
) -> tuple[list[CollisionStats], CollisionStats]:
    """Collision scan over a manifest of real image files, intra-class."""
    per_class_stats = []
    aggregate = CollisionStats(collisions_at={int(t): 0 for t in tolerances})
    for _, paths in load_manifest(manifest_path):
        hashes = []
        for p in paths:
            data = p.read_bytes()
            img = imaging.load_image(data, imaging.detect_format(data))
            hashes.append(hash_image(img, kind))
        stats = count_pair_collisions(hashes, tolerances)
        per_class_stats.append(stats)
        aggregate.merge(stats)
    return per_class_stats, aggregate
