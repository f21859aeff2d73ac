"""Experiment harness: cohort runs, N and d sweeps, collusion, byte accounting.

Every round is checked against the plaintext sum; a mismatch raises
:class:`VerificationError` instead of being written out as a data point.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import statistics
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .codec import decode
from .errors import HybAggError
from .masking import client_mask, derive_pair_secret, expand_mask
from .mkckks import noise_budget_check
from .protocol import ParamSet
from .ring import RingElement
from .sampling import NoiseSpec, Prg, derive_seed, seed_from_int
from .simulator import Cohort
from .wire import payload_accounting

# Expansion reported for OpenFHE-serialized uploads; printed for comparison only.
REFERENCE_EXPANSION = 12.0

TIMING_FIELDS = (
    "client_encode_ms",
    "client_encrypt_ms",
    "client_share_ms",
    "client_mask_ms",
    "client_total_ms",
    "server_aggregate_ms",
    "server_decode_ms",
    "server_total_ms",
)


class VerificationError(HybAggError):
    """A round's recovered sum disagreed with the plaintext oracle."""


@dataclass(frozen=True)
class ExperimentConfig:
    clients: tuple[int, ...] = (10,)
    dims: tuple[int, ...] = (8192,)
    rounds: int = 1
    delta_bits: int = 40
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    out: Path | None = None
    value_range: float = 1.0
    precision: int = 6
    bit_budget: int = 100
    workers: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "clients", tuple(int(c) for c in self.clients))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if not self.clients or not self.dims:
            raise ValueError("client and dimension lists must be nonempty")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not self.value_range > 0:
            raise ValueError("value_range must be positive")
        if self.precision < 0:
            raise ValueError("precision must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def params(self, n_clients: int, d: int) -> ParamSet:
        return ParamSet(
            d=d,
            n_max=n_clients,
            delta_bits=self.delta_bits,
            bit_budget=self.bit_budget,
            noise=self.noise,
            max_abs_input=self.value_range,
        )


@dataclass(frozen=True)
class RoundMetrics:
    N: int
    d: int
    n: int
    round: int
    client_encode_ms: float
    client_encrypt_ms: float
    client_share_ms: float
    client_mask_ms: float
    client_total_ms: float
    server_aggregate_ms: float
    server_decode_ms: float
    server_total_ms: float
    client_uplink_bytes: int
    expansion_factor: float
    max_abs_error: float
    exact_after_round: bool

    def as_row(self, timings: bool = True) -> dict:
        row = dataclasses.asdict(self)
        if not timings:
            for k in TIMING_FIELDS:
                del row[k]
        return row


def metric_fields(timings: bool = True) -> list[str]:
    names = [f.name for f in dataclasses.fields(RoundMetrics)]
    return names if timings else [n for n in names if n not in TIMING_FIELDS]


def is_exact(err: float, precision: int) -> bool:
    return round(err, precision) == 0


def synthetic_inputs(seed: bytes, round_no: int, n_clients: int, d: int, value_range: float) -> np.ndarray:
    """``(N, d)`` array uniform on (-range, range], reproducible from the seed."""
    u = Prg(derive_seed(seed, "inputs", round_no)).unit_floats(n_clients * d)
    return ((2.0 * u - 1.0) * value_range).reshape(n_clients, d)


def _cohort_seed(cfg: ExperimentConfig, n_clients: int, d: int) -> bytes:
    return derive_seed(seed_from_int(cfg.seed), "cohort", n_clients, d)


class CohortRun:
    """One set-up cohort that yields verified rounds on demand."""

    def __init__(self, cfg: ExperimentConfig, n_clients: int, d: int):
        self.cfg, self.n_clients, self.d = cfg, n_clients, d
        self.params = cfg.params(n_clients, d)
        self.seed = _cohort_seed(cfg, n_clients, d)
        self.cohort = Cohort(self.params, n_clients, self.seed)
        self.cohort.setup()
        self.predicted_uplink = payload_accounting(self.params, n_clients).client_uplink_bytes

    def round(self, r: int) -> RoundMetrics:
        cfg, n_clients, d = self.cfg, self.n_clients, self.d
        xs = synthetic_inputs(self.seed, r, n_clients, d, cfg.value_range)
        rec = self.cohort.run_round(xs, r, workers=cfg.workers)
        sizes = set(rec.upload_bytes)
        if sizes != {self.predicted_uplink}:
            raise VerificationError(f"round {r}: upload sizes {sorted(sizes)} != predicted {self.predicted_uplink}")
        err = float(np.max(np.abs(rec.result.sum_vector - xs.sum(axis=0))))
        exact = is_exact(err, cfg.precision)
        if not exact:
            raise VerificationError(
                f"N={n_clients} d={d} round {r}: max |error| {err:.3e} is not zero at {cfg.precision} decimals"
            )

        # Median over clients: a stray GC pause in one client should not move the row.
        def client(key: str) -> float:
            return statistics.median(t[key] for t in rec.client_timings)

        return RoundMetrics(
            N=n_clients,
            d=d,
            n=self.params.n,
            round=r,
            client_encode_ms=client("encode"),
            client_encrypt_ms=client("encrypt"),
            client_share_ms=client("share"),
            client_mask_ms=client("mask"),
            client_total_ms=client("total"),
            server_aggregate_ms=rec.server_timings["aggregate"],
            server_decode_ms=rec.server_timings["decode"],
            server_total_ms=rec.server_timings["total"],
            client_uplink_bytes=self.predicted_uplink,
            expansion_factor=self.predicted_uplink / (8 * d),
            max_abs_error=err,
            exact_after_round=exact,
        )


def run_cohort(cfg: ExperimentConfig, n_clients: int, d: int) -> list[RoundMetrics]:
    """Setup once, then ``cfg.rounds`` verified rounds.

    Raises ``ParameterError`` if the parameters cannot be exact for this
    cohort, and :class:`VerificationError` if any round misses the oracle.
    """
    run = CohortRun(cfg, n_clients, d)
    return [run.round(r) for r in range(1, cfg.rounds + 1)]


def run_grid(cfg: ExperimentConfig, pairs: Sequence[tuple[int, int]]) -> list[RoundMetrics]:
    """Several cohorts, rounds taken round-robin so host drift hits all alike.

    Rows come back sorted by (N, d, round).
    """
    runs = [CohortRun(cfg, n_clients, d) for n_clients, d in pairs]
    rows = [run.round(r) for r in range(1, cfg.rounds + 1) for run in runs]
    return sorted(rows, key=lambda m: (m.N, m.d, m.round))


def sweep_clients(cfg: ExperimentConfig) -> list[RoundMetrics]:
    if len(cfg.dims) != 1:
        raise ValueError("sweep-clients needs exactly one dimension")
    rows = run_grid(cfg, [(n_clients, cfg.dims[0]) for n_clients in cfg.clients])
    _maybe_write(cfg, rows)
    return rows


def sweep_dims(cfg: ExperimentConfig) -> list[RoundMetrics]:
    if len(cfg.clients) != 1:
        raise ValueError("sweep-dims needs exactly one client count")
    rows = run_grid(cfg, [(cfg.clients[0], d) for d in cfg.dims])
    _maybe_write(cfg, rows)
    return rows


def _maybe_write(cfg: ExperimentConfig, rows: Sequence[RoundMetrics]) -> None:
    if cfg.out is not None:
        Path(cfg.out).write_text(to_csv(rows))


def to_csv(rows: Iterable[RoundMetrics], timings: bool = True) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=metric_fields(timings), lineterminator="\n")
    w.writeheader()
    for m in rows:
        w.writerow(m.as_row(timings))
    return buf.getvalue()


def to_json(rows: Iterable[RoundMetrics], timings: bool = True) -> str:
    rows = list(rows)
    doc = {"rows": [m.as_row(timings) for m in rows]}
    if timings:
        doc["medians"] = summarize(rows)
    return json.dumps(doc, indent=2, sort_keys=True)


def summarize(rows: Iterable[RoundMetrics]) -> list[dict]:
    """Median of each timing column per (N, d), across rounds."""
    groups: dict[tuple[int, int], list[RoundMetrics]] = {}
    for m in rows:
        groups.setdefault((m.N, m.d), []).append(m)
    out = []
    for (n_clients, d), ms in groups.items():
        entry = {"N": n_clients, "d": d, "n": ms[0].n, "rounds": len(ms)}
        for k in TIMING_FIELDS:
            entry[k] = statistics.median(getattr(m, k) for m in ms)
        out.append(entry)
    return out


# ---------------------------------------------------------------------------
# Collusion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CollusionReport:
    N: int
    k: int
    d: int
    trials: int
    tolerance: float
    success_rate: float
    worst_trial_success: float
    control_success_rate: float
    leak_success_rate: float
    correlation: float


def _hit_rate(guess: np.ndarray, truth: np.ndarray, tol: float) -> float:
    return float(np.mean(np.abs(guess - truth) <= tol))


def collusion_experiment(
    cfg: ExperimentConfig, n_clients: int, k: int, d: int | None = None, trials: int = 50
) -> CollusionReport:
    """Server plus ``k`` corrupted clients try to read one honest update.

    The adversary strips every mask component it can compute from the
    honest upload and decodes ``c0 + mu_hat``. Two controls run on the
    same uploads: one adversary who also knows every pair secret of the
    target, and one who sees the share before masking.
    """
    if not 0 <= k <= n_clients - 2:
        raise ValueError(f"coalition size k={k} outside 0..N-2={n_clients - 2}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    d = cfg.dims[0] if d is None else d
    params = cfg.params(n_clients, d)
    ctx = params.ctx
    # A correct reconstruction is off by the target's own noise plus flooring.
    budget = noise_budget_check(params, 1)
    tol = (budget.b_enc + budget.b_smudge + 1) / params.delta
    base = derive_seed(seed_from_int(cfg.seed), "collude", n_clients, k, d)

    rates, control, leak = [], [], []
    guesses, truths = [], []
    for t in range(trials):
        seed = derive_seed(base, t)
        cohort = Cohort(params, n_clients, seed)
        directory = cohort.setup()
        xs = synthetic_inputs(seed, 1, n_clients, d, cfg.value_range)
        rec = cohort.run_round(xs, 1)

        order = np.argsort(Prg(derive_seed(seed, "roles")).uint64(n_clients), kind="stable")
        target = int(order[0])
        coalition = [int(j) for j in order[2 : 2 + k]]
        up = rec.uploads[target]
        truth = xs[target]

        def strip(peers: Iterable[int]) -> RingElement:
            mu_hat = up.mu_tilde
            for j in peers:
                ks = derive_pair_secret(cohort.keyrings[j].ecdh, directory.ecdh_pks[target], (j, target))
                p = expand_mask(ks, 1, ctx).p
                mu_hat = mu_hat - p if j > target else mu_hat + p
            return mu_hat

        guess = decode(up.c0 + strip(coalition), params.scale)
        rates.append(_hit_rate(guess, truth, tol))
        guesses.append(guess)
        truths.append(truth)

        everyone = [j for j in range(n_clients) if j != target]
        control.append(_hit_rate(decode(up.c0 + strip(everyone), params.scale), truth, tol))

        # The harness recomputes the target's own mask to expose its raw share.
        kr = cohort.keyrings[target]
        r = client_mask(target, kr.ecdh, directory.ecdh_pks, 1, ctx, n_clients)
        leak.append(_hit_rate(decode(up.c0 + (up.mu_tilde - r), params.scale), truth, tol))

    g = np.concatenate(guesses)
    x = np.concatenate(truths)
    rho = float(np.corrcoef(g, x)[0, 1]) if np.std(g) > 0 and np.std(x) > 0 else 0.0
    return CollusionReport(
        N=n_clients,
        k=k,
        d=d,
        trials=trials,
        tolerance=tol,
        success_rate=statistics.fmean(rates),
        worst_trial_success=max(rates),
        control_success_rate=statistics.fmean(control),
        leak_success_rate=statistics.fmean(leak),
        correlation=rho,
    )


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def _int_list(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("list must be nonempty")
    return vals


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--clients", type=_int_list, default=(10,), help="client counts, comma-separated")
    common.add_argument("--dims", type=_int_list, default=(8192,), help="vector lengths, comma-separated")
    common.add_argument("--rounds", type=int, default=1)
    common.add_argument("--delta-bits", type=int, default=40)
    common.add_argument("--smudge-bits", type=float, default=None, help="log2(sigma_smudge / sigma_err)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--value-range", type=float, default=1.0, help="inputs are uniform on [-r, r]")
    common.add_argument("--precision", type=int, default=6, help="decimals for the exactness check")
    common.add_argument("--workers", type=int, default=1, help="client threads; timings unreliable if > 1")
    common.add_argument("--out", type=Path, default=None, help="write CSV here instead of stdout")
    common.add_argument("--json", action="store_true", help="emit JSON instead of CSV")
    common.add_argument("--no-timings", action="store_true", help="drop wall-clock columns")

    ap = argparse.ArgumentParser(prog="hybagg", description="One-shot secure aggregation benchmarks.")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("cohort", parents=[common], help="run every (N, d) combination")
    sub.add_parser("sweep-clients", parents=[common], help="vary N at one d")
    sub.add_parser("sweep-dims", parents=[common], help="vary d at one N")
    col = sub.add_parser("collude", parents=[common], help="coalition reconstruction experiment")
    col.add_argument("-k", "--colluders", type=int, default=None, help="coalition size (default N-2)")
    col.add_argument("--trials", type=int, default=50)
    sub.add_parser("accounting", parents=[common], help="predicted byte counts per message")
    return ap


def _config(ns: argparse.Namespace) -> ExperimentConfig:
    noise = NoiseSpec() if ns.smudge_bits is None else NoiseSpec.with_smudge_bits(ns.smudge_bits)
    return ExperimentConfig(
        clients=ns.clients,
        dims=ns.dims,
        rounds=ns.rounds,
        delta_bits=ns.delta_bits,
        noise=noise,
        seed=ns.seed,
        out=ns.out,
        value_range=ns.value_range,
        precision=ns.precision,
        workers=ns.workers,
    )


def _emit(ns: argparse.Namespace, text: str) -> None:
    if ns.out is not None:
        Path(ns.out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _run(ns: argparse.Namespace, cfg: ExperimentConfig) -> int:
    timings = not ns.no_timings
    if ns.command in ("cohort", "sweep-clients", "sweep-dims"):
        if ns.command == "sweep-clients" and len(cfg.dims) != 1:
            raise ValueError("sweep-clients needs exactly one --dims value")
        if ns.command == "sweep-dims" and len(cfg.clients) != 1:
            raise ValueError("sweep-dims needs exactly one --clients value")
        rows = run_grid(cfg, [(n_clients, d) for n_clients in cfg.clients for d in cfg.dims])
        _emit(ns, to_json(rows, timings) if ns.json else to_csv(rows, timings))
        if timings and not ns.json:
            for s in summarize(rows):
                print(
                    f"N={s['N']} d={s['d']} n={s['n']}: median client {s['client_total_ms']:.1f} ms "
                    f"(mask {s['client_mask_ms']:.1f} ms), server {s['server_total_ms']:.1f} ms",
                    file=sys.stderr,
                )
        return 0

    if ns.command == "collude":
        n_clients = cfg.clients[0]
        k = n_clients - 2 if ns.colluders is None else ns.colluders
        if not 0 <= k <= n_clients - 2:
            raise ValueError(f"--colluders must lie in 0..N-2 = 0..{n_clients - 2}, got {k}")
        rep = collusion_experiment(cfg, n_clients, k, cfg.dims[0], ns.trials)
        doc = dataclasses.asdict(rep)
        _emit(ns, json.dumps(doc, indent=2) if ns.json else "\n".join(f"{k_}: {v}" for k_, v in doc.items()))
        ok = rep.success_rate < 0.01 and rep.control_success_rate == 1.0
        return 0 if ok else 1

    # accounting
    docs = []
    for d in cfg.dims:
        for n_clients in cfg.clients:
            doc = dataclasses.asdict(payload_accounting(cfg.params(n_clients, d), n_clients))
            doc["reference_expansion_openfhe"] = REFERENCE_EXPANSION
            docs.append(doc)
    if ns.json:
        _emit(ns, json.dumps(docs, indent=2))
    else:
        _emit(ns, "\n\n".join("\n".join(f"{k_}: {v}" for k_, v in doc.items()) for doc in docs))
    return 0


def cli_main(argv: Sequence[str] | None = None) -> int:
    """Exit codes: 0 success, 1 verification failure, 2 usage error."""
    ap = _parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _config(ns)
        return _run(ns, cfg)
    except VerificationError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return 1
    except (ValueError, HybAggError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())
