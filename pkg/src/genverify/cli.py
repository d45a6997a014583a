"""Command-line driver: one subcommand per experiment family.

Subcommands: hash, prob, collide, simulate, decode, trainsim.  Shared
flags: --config <json> (per-command defaults, overridden by CLI args),
--seed <u64> (required for every randomized experiment), --out <dir>
(also write reports as files), --check (assert the command's invariants
and exit nonzero on violation).

All reports are CSV with a header row and a trailing config-echo comment
line prefixed '#'.  Identical seeded invocations produce byte-identical
output.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import consensus, decoding, imaging, simnet, trainsync
from .consensus import QuorumRule, VerificationModel
from .phash import HashKind, PerceptualHash, hash_image, tolerant_mode


class CheckFailure(Exception):
    """A --check assertion did not hold."""


def _rule(name: str) -> QuorumRule:
    try:
        return QuorumRule(name)
    except ValueError:
        raise SystemExit(f"error: unknown rule {name!r} (majority or super)")


def _kind(name: str) -> HashKind:
    try:
        return HashKind(name)
    except ValueError:
        raise SystemExit(f"error: unknown hash kind {name!r}")


def _int_list(text: str) -> list[int]:
    return [int(part) for part in str(text).split(",") if part != ""]


def _float_list(text: str) -> list[float]:
    return [float(part) for part in str(text).split(",") if part != ""]


class Report:
    """Collects CSV lines, prints them, optionally mirrors to a file."""

    def __init__(self, out_dir: Path | None, filename: str):
        self.lines: list[str] = []
        self.out_dir = out_dir
        self.filename = filename

    def add(self, line: str) -> None:
        self.lines.append(line)

    def echo_config(self, config: dict) -> None:
        self.add("# config: " + json.dumps(config, sort_keys=True, default=str))

    def emit(self) -> None:
        text = "\n".join(self.lines)
        print(text)
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            (self.out_dir / self.filename).write_text(text + "\n")


def _resolve(args: argparse.Namespace, command: str, defaults: dict) -> dict:
    """CLI value if given, else config-file value, else built-in default."""
    file_config = {}
    if args.config:
        loaded = json.loads(Path(args.config).read_text())
        file_config = loaded.get(command, {})
    resolved = {}
    for key, default in defaults.items():
        cli_value = getattr(args, key, None)
        if cli_value is not None:
            resolved[key] = cli_value
        elif key in file_config:
            resolved[key] = file_config[key]
        else:
            resolved[key] = default
    return resolved


def _require_seed(params: dict) -> int:
    if params.get("seed") is None:
        raise SystemExit("error: this experiment is randomized; provide --seed")
    return int(params["seed"])


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise CheckFailure(message)


# ---------------------------------------------------------------------------
# hash


def cmd_hash(args: argparse.Namespace) -> int:
    params = _resolve(args, "hash", {
        "kind": "ahash", "all_kinds": False, "manifest": None, "inputs": [],
    })
    kinds = list(HashKind) if params["all_kinds"] else [_kind(params["kind"])]
    out_dir = Path(args.out) if args.out else None
    report = Report(out_dir, "hash.csv")
    report.add("path,kind,hex_hash,elapsed_us")

    def hash_file(path: Path) -> dict[HashKind, PerceptualHash]:
        try:
            data = path.read_bytes()
            img = imaging.load_image(data, imaging.detect_format(data))
            result = {}
            for kind in kinds:
                start = time.perf_counter()
                h = hash_image(img, kind)
                elapsed_us = (time.perf_counter() - start) * 1e6
                result[kind] = h
                report.add(f"{path},{kind.value},{h.hex},{elapsed_us:.1f}")
        except (OSError, ValueError) as exc:
            raise SystemExit(f"error: cannot hash {path}: {exc}")
        return result

    if params["manifest"]:
        classes = simnet.load_manifest(params["manifest"])
        summary = ["class,n,consensus_pct_t0,consensus_pct_t1,consensus_pct_t2,"
                   "outliers,aDist"]
        for prompt_id, paths in classes:
            hashes = [hash_file(p)[kinds[0]] for p in paths]
            votes = {t: tolerant_mode(hashes, t) for t in (0, 1, 2)}
            n = len(hashes)
            pct = {t: 100.0 * votes[t].matched_count / n for t in (0, 1, 2)}
            if args.check:
                _check(pct[0] <= pct[1] <= pct[2],
                       f"class {prompt_id}: consensus not monotone in tolerance")
            summary.append(
                f"{prompt_id},{n},{pct[0]:.1f},{pct[1]:.1f},{pct[2]:.1f},"
                f"{len(votes[0].outliers)},{votes[0].avg_outlier_distance:.3f}"
            )
        report.lines.extend(summary)
    elif params["inputs"]:
        seen = []
        for path in params["inputs"]:
            seen.append(hash_file(Path(path)))
        if args.check:
            for path, first in zip(params["inputs"], seen):
                again = {k: hash_image(
                    imaging.load_image(Path(path).read_bytes(),
                                       imaging.detect_format(Path(path).read_bytes())),
                    k) for k in kinds}
                _check(again == first, f"re-hash of {path} differs")
    else:
        raise SystemExit("error: provide image paths or --manifest")

    report.echo_config(params)
    report.emit()
    return 0


# ---------------------------------------------------------------------------
# prob


def cmd_prob(args: argparse.Namespace) -> int:
    params = _resolve(args, "prob", {
        "p": "0.977", "n": "3,5,7", "rule": "majority",
        "target": None, "n_max": 64,
    })
    p_values = _float_list(params["p"])
    n_values = _int_list(params["n"])
    rule = _rule(params["rule"])
    for p in p_values:
        if not 0.0 <= p <= 1.0:
            raise SystemExit(f"error: p={p} outside [0, 1]")

    report = Report(Path(args.out) if args.out else None, "prob.csv")
    report.add("p,n,rule,probability")
    rows = consensus.probability_table(p_values, n_values, rule)
    for p, n, r, prob in rows:
        report.add(f"{p:g},{n},{r.value},{prob:.6f}")

    if params["target"] is not None:
        target = float(params["target"])
        for p in p_values:
            n = consensus.min_verifiers(p, rule, target, int(params["n_max"]))
            report.add(f"# min_verifiers p={p:g} rule={rule.value} "
                       f"target={target:g} -> {n if n is not None else 'none'}")

    if args.check:
        for p, n, r, prob in rows:
            model = VerificationModel(p, n, r)
            k_min = r.min_matches(n)
            from math import comb
            lower = sum(comb(n, k) * p**k * (1 - p) ** (n - k) for k in range(k_min))
            _check(abs(prob + lower - 1.0) < 1e-12, "tail + head != 1")
            simple = consensus.quorum_probability(
                VerificationModel(p, n, QuorumRule.SIMPLE_MAJORITY))
            _check(simple + 1e-15 >= prob if r is QuorumRule.SUPER_MAJORITY else True,
                   "simple majority below super majority")
        grid = [consensus.quorum_probability(VerificationModel(q, n_values[0], rule))
                for q in sorted(p_values)]
        _check(all(a <= b + 1e-15 for a, b in zip(grid, grid[1:])),
               "probability not monotone in p")

    report.echo_config(params)
    report.emit()
    return 0


# ---------------------------------------------------------------------------
# collide


def cmd_collide(args: argparse.Namespace) -> int:
    params = _resolve(args, "collide", {
        "classes": 10, "per_class": 20, "kind": "ahash",
        "tolerances": "0,1,2", "seed": None, "manifest": None,
        "size": simnet.DEFAULT_IMAGE_SIZE,
    })
    kind = _kind(params["kind"])
    tolerances = _int_list(params["tolerances"])
    report = Report(Path(args.out) if args.out else None, "collide.csv")

    if params["manifest"]:
        per_class, aggregate = simnet.collision_experiment_manifest(
            params["manifest"], kind, tolerances)
    else:
        seed = _require_seed(params)
        classes, count = int(params["classes"]), int(params["per_class"])
        if count < 2:
            raise SystemExit("error: --per-class must be >= 2")
        per_class, aggregate = simnet.collision_experiment(
            classes, count, kind, tolerances, seed, int(params["size"]))

    header = "class_id,comparisons," + ",".join(f"collisions_t{t}" for t in tolerances)
    report.add(header)
    for class_id, stats in enumerate(per_class):
        counts = ",".join(str(stats.collisions_at[t]) for t in tolerances)
        report.add(f"{class_id},{stats.comparisons},{counts}")
    agg_counts = ",".join(str(aggregate.collisions_at[t]) for t in tolerances)
    report.add(f"aggregate,{aggregate.comparisons},{agg_counts}")
    for t in tolerances:
        report.add(f"# aggregate rate t<={t}: {aggregate.rate_at[t]:.8f}")
    report.add(f"# total comparisons: {aggregate.comparisons}")

    if args.check:
        rates = [aggregate.rate_at[t] for t in sorted(tolerances)]
        _check(all(a <= b for a, b in zip(rates, rates[1:])),
               "collision rate not monotone in tolerance")
        weighted = {t: sum(s.collisions_at[t] for s in per_class) for t in tolerances}
        _check(all(weighted[t] == aggregate.collisions_at[t] for t in tolerances),
               "aggregate counts do not equal per-class sums")

    report.echo_config(params)
    report.emit()
    return 0


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args: argparse.Namespace) -> int:
    params = _resolve(args, "simulate", {
        "n_verifiers": 3, "rule": "majority", "tolerance": 2,
        "adversary": "none", "flip_rate": 0.01, "trials": 100,
        "seed": None, "kind": "ahash", "size": simnet.DEFAULT_IMAGE_SIZE,
        "emulate_p": None, "n": None,
    })
    rule = _rule(params["rule"])
    seed = _require_seed(params)
    report = Report(Path(args.out) if args.out else None, "simulate.csv")

    if params["emulate_p"] is not None:
        p = float(params["emulate_p"])
        n = int(params["n"] if params["n"] is not None else params["n_verifiers"])
        trials = int(params["trials"])
        empirical = simnet.monte_carlo_type1(p, n, rule, trials, seed)
        closed = consensus.quorum_probability(VerificationModel(p, n, rule))
        report.add("p,n,rule,trials,empirical,closed_form,abs_err")
        report.add(f"{p:g},{n},{rule.value},{trials},"
                   f"{empirical:.6f},{closed:.6f},{abs(empirical - closed):.3e}")
        if args.check:
            sigma = max((closed * (1 - closed) / trials) ** 0.5, 1e-12)
            _check(abs(empirical - closed) <= 5 * sigma,
                   f"empirical {empirical} beyond 5 sigma of {closed}")
    else:
        trials = int(params["trials"])
        kind = _kind(params["kind"])
        adversary = params["adversary"]
        n_verifiers = int(params["n_verifiers"])
        accepted = 0
        detected = 0
        matched_reports = 0
        total_reports = 0
        for trial in range(trials):
            worker = _worker_profile(adversary, float(params["flip_rate"]), seed, trial)
            verifiers = [
                simnet.NodeProfile(simnet.NodeKind.HONEST) for _ in range(n_verifiers)
            ]
            task = simnet.Task(
                task_id=trial,
                prompt_id=trial,
                seed=simnet.derive_seed("cli.simulate", seed, trial),
                hash_kind=kind,
                tolerance=int(params["tolerance"]),
            )
            outcome = simnet.run_round(task, [worker], verifiers, rule,
                                       int(params["size"]))
            accepted += outcome.decision.accepted
            detected += outcome.detected_fraud
            matched_reports += outcome.decision.matched_count
            total_reports += outcome.decision.total
        acceptance = accepted / trials
        detection = detected / trials
        p_hat = matched_reports / total_reports
        closed = consensus.quorum_probability(
            VerificationModel(min(p_hat, 1.0), n_verifiers + 1, rule))
        report.add("trials,n_verifiers,rule,tolerance,adversary,"
                   "acceptance_rate,fraud_detection_rate,closed_form")
        report.add(f"{trials},{n_verifiers},{rule.value},{params['tolerance']},"
                   f"{adversary},{acceptance:.6f},{detection:.6f},{closed:.6f}")
        if args.check:
            if adversary == "none":
                _check(acceptance == 1.0, "honest rounds were rejected")
                _check(detection == 0.0, "honest rounds flagged as fraud")

    report.echo_config(params)
    report.emit()
    return 0


def _worker_profile(adversary: str, flip_rate: float, seed: int, trial: int):
    guess_seed = simnet.derive_seed("cli.adversary", seed, trial)
    if adversary == "none":
        return simnet.NodeProfile(simnet.NodeKind.HONEST)
    if adversary == "guesser":
        return simnet.NodeProfile(simnet.NodeKind.MALICIOUS_GUESSER, seed=guess_seed)
    if adversary == "lazy":
        return simnet.NodeProfile(simnet.NodeKind.LAZY)
    if adversary == "noisy":
        return simnet.NodeProfile(simnet.NodeKind.NOISY_HONEST,
                                  flip_rate=flip_rate, seed=guess_seed)
    raise SystemExit(f"error: unknown adversary {adversary!r}")


# ---------------------------------------------------------------------------
# decode


def cmd_decode(args: argparse.Namespace) -> int:
    params = _resolve(args, "decode", {
        "strategy": "all", "beams": "5,10", "max_tokens": 30,
        "runs": 20, "jitter": 0.0, "seed": None, "vocab": 50,
    })
    seed = _require_seed(params)
    model = decoding.ToyLM(vocab_size=int(params["vocab"]), context_window=4,
                           table_seed=seed)
    prompt = [0, 1, 2]
    runs = int(params["runs"])
    jitter = float(params["jitter"])
    max_tokens = int(params["max_tokens"])

    jobs = []
    strategy = params["strategy"]
    if strategy in ("greedy", "all"):
        jobs.append(("greedy", decoding.DecodeConfig(
            decoding.Strategy.GREEDY, max_tokens, jitter=jitter)))
    if strategy in ("beam", "all"):
        for width in _int_list(params["beams"]):
            jobs.append((f"beam-{width}", decoding.DecodeConfig(
                decoding.Strategy.BEAM, max_tokens, beam_width=width,
                jitter=jitter)))
    if strategy in ("multinomial", "all"):
        jobs.append(("multinomial", decoding.DecodeConfig(
            decoding.Strategy.MULTINOMIAL, max_tokens, rng_seed=seed,
            jitter=jitter)))
    if not jobs:
        raise SystemExit(f"error: unknown strategy {strategy!r}")

    report = Report(Path(args.out) if args.out else None, "decode.csv")
    report.add("strategy,max_tokens,runs,distinct_outputs,deterministic")
    rows = []
    for label, cfg in jobs:
        row = decoding.determinism_experiment(model, prompt, cfg, runs, label)
        rows.append(row)
        report.add(f"{row.strategy},{row.max_tokens},{row.runs},"
                   f"{row.distinct_outputs},{'yes' if row.deterministic else 'no'}")

    if args.check:
        for row in rows:
            if row.strategy.startswith(("greedy", "beam")) and jitter == 0.0:
                _check(row.deterministic, f"{row.strategy} was not deterministic")
        greedy_cfg = decoding.DecodeConfig(decoding.Strategy.GREEDY, max_tokens)
        beam1_cfg = decoding.DecodeConfig(decoding.Strategy.BEAM, max_tokens,
                                          beam_width=1)
        _check(decoding.greedy_decode(model, prompt, greedy_cfg)
               == decoding.beam_decode(model, prompt, beam1_cfg),
               "beam width 1 differs from greedy")

    report.echo_config(params)
    report.emit()
    return 0


# ---------------------------------------------------------------------------
# trainsim


def cmd_trainsim(args: argparse.Namespace) -> int:
    params = _resolve(args, "trainsim", {
        "mode": "deter", "task_seed": None, "seed": None, "jitter": 0.0,
        "resync_every": 300, "dim": 768, "steps": 2000,
        "checkpoint_every": 50, "batch_size": 4,
    })
    seed = _require_seed(params)
    task_seed = int(params["task_seed"]) if params["task_seed"] is not None else seed
    cfg = trainsync.TrainConfig(
        dim=int(params["dim"]),
        max_steps=int(params["steps"]),
        checkpoint_every=int(params["checkpoint_every"]),
        batch_size=int(params["batch_size"]),
    )
    mode = params["mode"]
    jitter = float(params["jitter"])
    out_dir = Path(args.out) if args.out else None

    # freed sources and jitter are re-seeded from the master seed so the
    # whole report is replayable; divergence behavior is unchanged
    if mode == "deter":
        runs = trainsync.replication_suite(task_seed, cfg, seed, replayable=True)
    elif mode == "ablate":
        deter = trainsync.StochasticityConfig.deterministic(seed)
        runs = [trainsync.train(task_seed, cfg, deter, run_id="reference")]
        for name in trainsync.TOGGLE_NAMES:
            reseed = simnet.derive_seed("cli.ablate", seed, name)
            runs.append(trainsync.train(
                task_seed, cfg, deter.freeing(name, reseed),
                run_id=f"free-{name}"))
    elif mode == "sync":
        delta = jitter if jitter > 0.0 else 1e-5
        policy = trainsync.SyncPolicy(resync_every=int(params["resync_every"]),
                                      source_run="source")
        source = trainsync.train(
            task_seed, cfg,
            trainsync.StochasticityConfig.deterministic(seed), run_id="source")
        runs = [source]
        for run_id in ("unsynced", "synced-1", "synced-2", "synced-3"):
            stoch = trainsync.StochasticityConfig.deterministic(
                seed, hardware_jitter=delta,
                jitter_seed=simnet.derive_seed("cli.jitter", seed, run_id))
            if run_id == "unsynced":
                runs.append(trainsync.train(task_seed, cfg, stoch, run_id=run_id))
            else:
                runs.append(trainsync.train_synced(
                    task_seed, cfg, stoch, policy, source, run_id=run_id))
    else:
        raise SystemExit(f"error: unknown mode {mode!r} (deter, ablate, sync)")

    drift_report = Report(out_dir, "drift.csv")
    drift_report.add("run_id,step,distance")
    reference = runs[0]
    for traj in runs[1:]:
        for step, distance in trainsync.drift(reference, traj):
            drift_report.add(f"{traj.run_id},{step},{distance:.17g}")

    pca_report = Report(out_dir, "pca.csv")
    pca_report.add("run_id,step,pc1,pc2")
    for run_id, step, pc1, pc2 in trainsync.pca_project(runs):
        pca_report.add(f"{run_id},{step},{pc1:.17g},{pc2:.17g}")

    if args.check:
        if mode == "deter":
            d12 = trainsync.drift(runs[0], runs[1])
            d13 = trainsync.drift(runs[0], runs[2])
            _check(all(d == 0.0 for _, d in d12 + d13),
                   "deterministic replicas drifted")
        if mode == "ablate":
            for traj in runs[1:]:
                final = trainsync.drift(reference, traj)[-1][1]
                _check(final > 0.0, f"{traj.run_id} produced zero drift")
        if mode == "sync":
            for traj in runs[2:]:
                for step, distance in trainsync.drift(reference, traj):
                    if step % int(params["resync_every"]) == 0:
                        _check(distance == 0.0,
                               f"{traj.run_id} nonzero drift at resync step {step}")

    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        trainsync.write_trajectories(out_dir / "trajectories.csv", runs)
    drift_report.echo_config(params)
    drift_report.emit()
    pca_report.echo_config(params)
    pca_report.emit()
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file with per-command defaults")
    common.add_argument("--seed", type=int, help="master seed (u64)")
    common.add_argument("--out", help="directory for report files")
    common.add_argument("--check", action="store_true",
                        help="assert invariants; nonzero exit on violation")

    parser = argparse.ArgumentParser(
        prog="genverify",
        description="Verification and consensus experiments for generative outputs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("hash", parents=[common], help="hash images, report consensus")
    p.add_argument("inputs", nargs="*", default=None,
                   help="image files (PPM P6 or PNG)")
    p.add_argument("--manifest", help="corpus manifest JSON")
    p.add_argument("--kind", choices=[k.value for k in HashKind])
    p.add_argument("--all-kinds", dest="all_kinds", action="store_true", default=None)
    p.set_defaults(handler=cmd_hash)

    p = sub.add_parser("prob", parents=[common], help="closed-form quorum probabilities")
    p.add_argument("--p", help="comma-separated per-verifier probabilities")
    p.add_argument("--n", help="comma-separated verifier counts")
    p.add_argument("--rule", choices=["majority", "super"])
    p.add_argument("--target", type=float, help="also report min verifiers for target")
    p.add_argument("--n-max", dest="n_max", type=int)
    p.set_defaults(handler=cmd_prob)

    p = sub.add_parser("collide", parents=[common], help="intra-class collision scan")
    p.add_argument("--classes", type=int)
    p.add_argument("--per-class", dest="per_class", type=int)
    p.add_argument("--kind", choices=[k.value for k in HashKind])
    p.add_argument("--tolerances")
    p.add_argument("--manifest", help="corpus manifest JSON instead of synthetic")
    p.add_argument("--size", type=int)
    p.set_defaults(handler=cmd_collide)

    p = sub.add_parser("simulate", parents=[common], help="verification round simulation")
    p.add_argument("--n-verifiers", dest="n_verifiers", type=int)
    p.add_argument("--rule", choices=["majority", "super"])
    p.add_argument("--tolerance", type=int)
    p.add_argument("--adversary", choices=["none", "guesser", "lazy", "noisy"])
    p.add_argument("--flip-rate", dest="flip_rate", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--kind", choices=[k.value for k in HashKind])
    p.add_argument("--size", type=int)
    p.add_argument("--emulate-p", dest="emulate_p", type=float,
                   help="Bernoulli mode: per-verifier match probability")
    p.add_argument("--n", type=int, help="verifier count for Bernoulli mode")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("decode", parents=[common], help="decoding determinism report")
    p.add_argument("--strategy", choices=["greedy", "beam", "multinomial", "all"])
    p.add_argument("--beams", help="comma-separated beam widths")
    p.add_argument("--max-tokens", dest="max_tokens", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--jitter", type=float)
    p.add_argument("--vocab", type=int)
    p.set_defaults(handler=cmd_decode)

    p = sub.add_parser("trainsim", parents=[common], help="training replication suite")
    p.add_argument("--mode", choices=["deter", "ablate", "sync"])
    p.add_argument("--task-seed", dest="task_seed", type=int)
    p.add_argument("--jitter", type=float)
    p.add_argument("--resync-every", dest="resync_every", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.set_defaults(handler=cmd_trainsim)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except CheckFailure as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
