"""Command-line front end: `relcomp <command> --model <file> [...]`.

Commands: blocks, infer, curve, verify, compress-stats.  Every library
failure maps to a stable exit code via RelcompError.exit_code; argparse
usage errors exit 2, matching DomainError.  CSV output uses a header
row, `.` decimals, UTF-8, and `\n` line ends, so identical runs produce
identical bytes.
"""
from __future__ import annotations

import argparse
import csv
import sys
from typing import Sequence

import numpy as np

from .blocks import block_state_counts, find_blocks, validate_structure
from .engine import (
    FLAT_CHUNK,
    leaf_distribution,
    npt_compress_stats,
    parent_groups,
    reliability_curve,
    reliability_states_for,
)
from .errors import DomainError, RelcompError
from .inference import QuerySpec, dependent_infer
from .model import SystemModel, TimeGrid, load_model
from .oracle import ENUM_GUARD, enumerate_joint, monte_carlo

__all__ = ["main", "build_parser"]

ORACLE_TOL = 1e-12


def _f(x) -> str:
    # shortest round-trip form; deterministic, locale-free
    return repr(float(x))


def _parse_assignments(text: str | None) -> dict[str, int]:
    """Parse `NODE=STATE,NODE=STATE` literals into a 1-based state map."""
    out: dict[str, int] = {}
    for part in (text or "").split(","):
        part = part.strip()
        if not part:
            continue
        name, sep, value = part.partition("=")
        name = name.strip()
        if not sep or not name:
            raise DomainError(f"expected NODE=STATE, got {part!r}")
        try:
            state = int(value)
        except ValueError:
            raise DomainError(
                f"state for {name!r} must be an integer, got {value.strip()!r}"
            ) from None
        if name in out:
            raise DomainError(f"node {name!r} assigned twice")
        out[name] = state
    return out


def _write_csv(path: str, header: Sequence[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _stdout_csv(header: Sequence[str], rows) -> None:
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


def _fmt_bytes(n: int) -> str:
    x = float(n)
    for unit in ("B", "KB", "MB", "GB", "TB"):
        if x < 1024 or unit == "TB":
            return f"{x:.0f} {unit}" if unit == "B" else f"{x:.1f} {unit}"
        x /= 1024
    raise AssertionError


def _load(args) -> SystemModel:
    return load_model(args.model)


def _model_title(model: SystemModel, args) -> str:
    return model.name or args.model


def _resolve_t(model: SystemModel, args) -> float | None:
    """Single evaluation time: --t0, else the model grid's start."""
    t0 = getattr(args, "t0", None)
    if not model.needs_time:
        if t0 is not None:
            raise DomainError("model has no lifetime laws; --t0 does not apply")
        return None
    if t0 is not None:
        return float(t0)
    if model.time_grid is not None:
        return float(model.time_grid.start)
    raise DomainError("model is time-dependent: give --t0")


def _resolve_grid(args) -> TimeGrid | None:
    given = [args.t0 is not None, args.dt is not None, args.steps is not None]
    if all(given):
        return TimeGrid(start=float(args.t0), step=float(args.dt), count=int(args.steps))
    if any(given):
        raise DomainError("give all of --t0 --dt --steps, or none to use the model grid")
    return None


# ---------------------------------------------------------------------------
# commands


def cmd_blocks(args) -> int:
    model = _load(args)
    print(f"model: {_model_title(model, args)}")
    rows = []
    if not validate_structure(model):
        part = find_blocks(model)
        print(f"leaf: {model.leaf}")
        indep = ", ".join(part.independent_nodes) or "(none)"
        print(f"independent leaf parents: {indep}")
        for name in part.independent_nodes:
            rows.append(["independent", name, "", model.states(name), ""])
        for i, b in enumerate(part.blocks, start=1):
            t_all, t_children = block_state_counts(b)
            print(
                f"block {i}: roots [{', '.join(b.roots)}] -> "
                f"children [{', '.join(b.children)}] "
                f"({t_children} child joint states, {t_all} total)"
            )
            rows.append(
                ["block", "+".join(b.children), "+".join(b.roots), t_children, t_all]
            )
    else:
        print("layout: layered (no single leaf-level partition)")
        n_local = 0
        for node, groups in parent_groups(model).items():
            for members, shared in groups:
                if len(members) < 2:
                    continue
                n_local += 1
                print(
                    f"local block at {node}: [{', '.join(members)}] "
                    f"over roots [{', '.join(shared)}]"
                )
                rows.append(["local-block", "+".join(members), "+".join(shared), "", node])
        if n_local == 0:
            print("no dependent parent groups: all fan-ins independent")
    if args.out:
        _write_csv(
            args.out, ["kind", "members", "roots", "joint_states", "context"], rows
        )
        print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _leaf_posterior(model: SystemModel, args, query, evidence, t):
    """(distribution over leaf, situation) via the mode the model supports."""
    if not validate_structure(model):
        res = dependent_infer(model, QuerySpec(query=query, evidence=evidence), t=t)
        return res.distribution, res.situation
    if query:
        raise DomainError(
            "layered models answer marginal queries only; "
            "use --evidence on roots instead of --query"
        )
    dist = leaf_distribution(
        model, t=t, evidence=evidence, mode=args.mode, chunk=args.chunk
    )
    return dist, 1


def cmd_infer(args) -> int:
    model = _load(args)
    query = _parse_assignments(args.query)
    evidence = _parse_assignments(args.evidence)
    t = _resolve_t(model, args)
    dist, situation = _leaf_posterior(model, args, query, evidence, t)
    leaf = dist.names[0]

    print(f"model: {_model_title(model, args)}")
    if t is not None:
        print(f"t: {_f(t)}")
    if query:
        print("query: " + ", ".join(f"{k}={v}" for k, v in query.items()))
    if evidence:
        print("evidence: " + ", ".join(f"{k}={v}" for k, v in evidence.items()))
    print(f"situation: {situation}")
    for s in range(dist.radices[0]):
        print(f"Pr({leaf}={s + 1}) = {_f(dist.values[s])}")
    if args.out:
        rows = [[leaf, s + 1, _f(dist.values[s])] for s in range(dist.radices[0])]
        _write_csv(args.out, ["node", "state", "probability"], rows)
        print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_curve(args) -> int:
    model = _load(args)
    evidence = _parse_assignments(args.evidence)
    grid = _resolve_grid(args)
    cur = reliability_curve(
        model,
        grid,
        mode=args.mode,
        evidence=evidence or None,
        threads=args.threads,
        chunk=args.chunk,
    )
    k = cur.state_probs.shape[1]
    header = ["t"] + [f"p_state_{s + 1}" for s in range(k)] + ["reliability"]
    rows = [
        [_f(t)] + [_f(p) for p in cur.state_probs[i]] + [_f(cur.reliability[i])]
        for i, t in enumerate(cur.times)
    ]
    if not cur.monotone:
        print("warning: R(t) is not monotone non-increasing", file=sys.stderr)
    if args.out:
        _write_csv(args.out, header, rows)
        rs = ", ".join(str(s) for s in cur.reliability_states)
        print(f"model: {_model_title(model, args)}")
        print(f"reliability states: {rs}")
        print(f"monotone: {cur.monotone}")
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        _stdout_csv(header, rows)
    return 0


def cmd_verify(args) -> int:
    model = _load(args)
    t = _resolve_t(model, args)
    leaf_id = model.leaf
    single = not validate_structure(model)
    if single:
        dist = dependent_infer(model, QuerySpec(), t=t).distribution
        path = "block decomposition"
    else:
        dist = leaf_distribution(model, t=t, mode=args.mode, chunk=args.chunk)
        path = f"{args.mode} evaluation"

    print(f"model: {_model_title(model, args)}")
    if t is not None:
        print(f"t: {_f(t)}")
    print(f"compressed path: {path}")
    for s in range(dist.radices[0]):
        print(f"Pr({leaf_id}={s + 1}) = {_f(dist.values[s])}")

    rows = []
    ok = True

    joint = 1
    for n in model.nodes:
        joint *= n.states
    if joint <= ENUM_GUARD:
        ref = enumerate_joint(model, t=t).marginal(leaf_id)
        delta = float(np.abs(dist.values - ref).max())
        status = "PASS" if delta <= ORACLE_TOL else "FAIL"
        ok &= status == "PASS"
        print(f"enumeration oracle: max |delta| = {_f(delta)} -> {status} (tol {_f(ORACLE_TOL)})")
        rows.append(["enumeration", status, _f(delta), _f(ORACLE_TOL), f"{joint} joint states"])
    else:
        print(f"enumeration oracle: skipped ({joint} joint states exceeds the dense guard)")
        rows.append(["enumeration", "SKIPPED", "", "", f"{joint} joint states"])

    mc = monte_carlo(model, args.samples, args.seed, t=t, node=leaf_id)
    delta = np.abs(dist.values - mc.estimate)
    bound = 3.0 * mc.std_error + 3.0 / args.samples
    status = "PASS" if bool((delta <= bound).all()) else "FAIL"
    ok &= status == "PASS"
    worst = int(np.argmax(delta - bound))
    print(
        f"monte carlo oracle: n = {args.samples}, seed = {args.seed}, "
        f"worst state {worst + 1}: |delta| = {_f(delta[worst])} vs "
        f"3 SE bound {_f(bound[worst])} -> {status}"
    )
    rows.append(
        ["monte-carlo", status, _f(float(delta.max())), _f(float(bound[worst])),
         f"n={args.samples} seed={args.seed}"]
    )

    if args.out:
        _write_csv(args.out, ["check", "status", "max_abs_delta", "threshold", "note"], rows)
        print(f"wrote {len(rows)} rows to {args.out}")
    print("verify: " + ("PASS" if ok else "FAIL"))
    return 0 if ok else 1


def cmd_compress_stats(args) -> int:
    model = _load(args)
    evidence = _parse_assignments(args.evidence)
    t = _resolve_t(model, args)
    layout = "leaf conditional table" if not validate_structure(model) else "flat system table"
    rep = npt_compress_stats(model, t=t, evidence=evidence or None, chunk=args.chunk)
    st = rep.stats
    assert st is not None
    ratio = st.compressed_bytes / rep.dense_equivalent_bytes

    print(f"model: {_model_title(model, args)}")
    if t is not None:
        print(f"t: {_f(t)}")
    print(f"layout: {layout}")
    print(f"table entries: {st.total_len}")
    print(
        f"dense equivalent: {rep.dense_equivalent_bytes} bytes"
        f" ({_fmt_bytes(rep.dense_equivalent_bytes)})"
    )
    print(
        f"compressed: {st.compressed_bytes} bytes ({_fmt_bytes(st.compressed_bytes)}),"
        f" ratio {ratio:.3e}"
    )
    print(
        f"rows: {st.n_rows} (dictionary: {st.n_run_entries} runs,"
        f" {st.n_phrase_entries} phrases)"
    )
    print(
        f"peak resident during streaming: {rep.peak_table_bytes} bytes"
        f" ({_fmt_bytes(rep.peak_table_bytes)})"
    )
    print(f"chunk entries: {rep.chunk_entries}")
    leaf = rep.distribution.names[0]
    for s in range(rep.distribution.radices[0]):
        print(f"Pr({leaf}={s + 1}) = {_f(rep.distribution.values[s])}")
    if args.out:
        _write_csv(
            args.out,
            [
                "layout", "total_entries", "dense_equivalent_bytes",
                "compressed_bytes", "compression_ratio", "n_rows",
                "n_run_entries", "n_phrase_entries", "peak_table_bytes",
                "chunk_entries",
            ],
            [[
                layout, st.total_len, rep.dense_equivalent_bytes,
                st.compressed_bytes, _f(ratio), st.n_rows,
                st.n_run_entries, st.n_phrase_entries, rep.peak_table_bytes,
                rep.chunk_entries,
            ]],
        )
        print(f"wrote 1 row to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser, *, time_point: bool) -> None:
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument("--out", help="write results to this CSV file")
    if time_point:
        p.add_argument(
            "--t0", type=float, default=None,
            help="evaluation time for lifetime-law models (default: model grid start)",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relcomp",
        description=(
            "Exact reliability inference over compressed probability tables."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("blocks", help="show the dependence partition of a model")
    _add_common(p, time_point=False)
    p.set_defaults(func=cmd_blocks)

    p = sub.add_parser("infer", help="Pr(leaf | query, evidence)")
    _add_common(p, time_point=True)
    p.add_argument("--query", help="query literals, e.g. SM=3,DF=2")
    p.add_argument("--evidence", help="evidence literals, e.g. C=1")
    p.add_argument(
        "--mode", choices=["multilevel", "flat"], default="multilevel",
        help="evaluation mode for layered models",
    )
    p.add_argument("--chunk", type=int, default=FLAT_CHUNK,
                   help="flat-mode chunk entries (max 1e6)")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("curve", help="leaf state probabilities and R(t) over a time grid")
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument("--out", help="write the curve to this CSV file")
    p.add_argument("--t0", type=float, default=None, help="grid start (with --dt --steps)")
    p.add_argument("--dt", type=float, default=None, help="grid step (with --t0 --steps)")
    p.add_argument("--steps", type=int, default=None, help="grid point count (with --t0 --dt)")
    p.add_argument("--evidence", help="root evidence literals, e.g. H1=2")
    p.add_argument(
        "--mode", choices=["multilevel", "flat"], default="multilevel",
        help="evaluation mode for layered models",
    )
    p.add_argument("--threads", type=int, default=1, help="parallel time points")
    p.add_argument("--chunk", type=int, default=FLAT_CHUNK,
                   help="flat-mode chunk entries (max 1e6)")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("verify", help="compare the compressed path against both oracles")
    _add_common(p, time_point=True)
    p.add_argument(
        "--mode", choices=["multilevel", "flat"], default="multilevel",
        help="evaluation mode for layered models",
    )
    p.add_argument("--seed", type=int, default=0, help="Monte Carlo seed")
    p.add_argument("--samples", type=int, default=200_000, help="Monte Carlo sample count")
    p.add_argument("--chunk", type=int, default=FLAT_CHUNK,
                   help="flat-mode chunk entries (max 1e6)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser(
        "compress-stats",
        help="stream the system table, reporting compressed vs dense vs peak sizes",
    )
    _add_common(p, time_point=True)
    p.add_argument("--evidence", help="root evidence literals, e.g. H1=2")
    p.add_argument("--chunk", type=int, default=FLAT_CHUNK,
                   help="streaming chunk entries (max 1e6)")
    p.set_defaults(func=cmd_compress_stats)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RelcompError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
