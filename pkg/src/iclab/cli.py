"""Command-line front end: ``iclab <group> <command> [flags]``.

Every command prints its JSON result and, with ``--out DIR``, also writes it
(plus a CSV for tabular results and a ``manifest.json``) into DIR.  Exit
status: 0 success, 1 a check found a violation, 2 invalid input.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import bell, boxes, info, ising, quantum, rac

MANIFEST = "manifest.json"


class InputError(ValueError):
    """Bad user input; reported with exit status 2."""


# -- output helpers ------------------------------------------------------------


def _clean(obj):
    """Plain JSON types with floats rounded to 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(f"{x:.12g}")
    return obj


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, ensure_ascii=False) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return "" if v is None else str(v)


class Emitter:
    """Collects output files for one command and writes the manifest last."""

    def __init__(self, args: argparse.Namespace, command: str):
        self.out = Path(args.out) if getattr(args, "out", None) else None
        self.command = command
        skip = {"out", "handler", "group", "cmd"}
        self.params = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
        self.outputs: list[str] = []
        if self.out:
            self.out.mkdir(parents=True, exist_ok=True)

    def json(self, name: str, payload: dict) -> dict:
        payload = dict(payload)
        payload["manifest"] = MANIFEST
        if self.out:
            (self.out / name).write_text(_dumps(payload), encoding="utf-8")
            self.outputs.append(name)
        return payload

    def csv(self, name: str, header: list[str], rows) -> None:
        if not self.out:
            return
        with open(self.out / name, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self.outputs.append(name)

    def raw(self, name: str, text: str) -> None:
        if self.out:
            (self.out / name).write_text(text, encoding="utf-8")
            self.outputs.append(name)

    def finish(self) -> None:
        if not self.out:
            return
        manifest = {
            "command": self.command,
            "params": self.params,
            "seed": self.params.get("seed"),
            "version": __version__,
            "outputs": self.outputs,
        }
        # parameters are echoed exactly (no rounding) so a manifest can replay its run
        (self.out / MANIFEST).write_text(json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


# -- box and state loading -------------------------------------------------------


def _parse_float(text: str, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise InputError(f"bad {what} {text!r}") from None


def _parse_int(text: str, what: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise InputError(f"bad {what} {text!r}") from None


def _read_json(path: str):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"{path} is not valid JSON: {e}") from None


def load_state(spec) -> quantum.DensityMatrix:
    """A named state ("singlet", "ghz3", "product:01", ...) or a dict with
    ``real`` (and optionally ``imag``) density-matrix rows."""
    if isinstance(spec, str):
        return quantum.named_state(spec)
    if isinstance(spec, dict) and "real" in spec:
        m = np.array(spec["real"], dtype=float) + 1j * np.array(spec.get("imag", np.zeros_like(spec["real"])), dtype=float)
        return quantum.DensityMatrix(m)
    raise InputError("state must be a name or {real, imag} matrix")


def quantum_box_from_dict(d: dict) -> boxes.BoxTable:
    """Quantum box file: {"state": ..., "settings": [[[x, y, z], ...] per qubit]}
    or {"state": ..., "optimize": functional name, "seed": int} to use the
    optimised settings of that functional."""
    if not isinstance(d, dict) or "state" not in d:
        raise InputError("quantum box file needs a 'state' entry")
    rho = load_state(d["state"])
    if "settings" in d:
        vecs = [np.asarray(s, dtype=float) for s in d["settings"]]
    elif "optimize" in d:
        func = bell.functional(d["optimize"], d.get("k"))
        vecs = bell.optimize_settings(rho, func, seed=int(d.get("seed", 0))).settings
    else:
        raise InputError("quantum box file needs 'settings' or 'optimize'")
    if len(vecs) != rho.num_qubits or any(v.ndim != 2 or v.shape[1] != 3 for v in vecs):
        raise InputError("settings must list (inputs, 3) Bloch vectors for every qubit")
    obs = [[quantum.observable_from_vector(r) for r in v] for v in vecs]
    return boxes.quantum_box(rho, obs)


def load_box(spec: str) -> boxes.BoxTable:
    """pr | iso:E | coin:n[:k] | bpr:n | sb[:E] | quantum:FILE | table:FILE"""
    kind, _, arg = spec.partition(":")
    try:
        if kind == "pr" and not arg:
            return boxes.pr_box()
        if kind == "iso":
            E = _parse_float(arg, "correlation weight")
            if not 0.0 <= E <= 1.0:
                raise InputError(f"isotropic weight {E} outside [0, 1]")
            return boxes.isotropic_box(E)
        if kind == "sb":
            E = _parse_float(arg, "correlation weight") if arg else 1.0
            if not 0.0 <= E <= 1.0:
                raise InputError(f"weight {E} outside [0, 1]")
            return boxes.sb_box(E)
        if kind == "coin":
            parts = arg.split(":")
            n = _parse_int(parts[0], "receiver count")
            k = _parse_int(parts[1], "database size") if len(parts) > 1 else 2
            return boxes.shared_coin_box(n, k)
        if kind == "bpr":
            return boxes.broadcast_pr_box(_parse_int(arg, "receiver count"))
        if kind == "table" and arg:
            d = _read_json(arg)
            return boxes.BoxTable.from_dict(d)
        if kind == "quantum" and arg:
            return quantum_box_from_dict(_read_json(arg))
    except InputError:
        raise
    except (ValueError, KeyError, TypeError) as e:
        raise InputError(f"invalid box {spec!r}: {e}") from None
    raise InputError(f"unknown box spec {spec!r}")


# -- commands ------------------------------------------------------------------


def _info_rows(rep: rac.InfoReport):
    for j in range(rep.n):
        for l in range(rep.k):
            yield [j + 1, l, rep.mi[j, l], rep.xi[j, l]]


def _rac_output(em: Emitter, rep: rac.InfoReport, extra: dict | None = None) -> tuple[dict, int]:
    body = rep.to_dict()
    body["quadratic_bound_report"] = rac.quadratic_bound_report(rep)
    if extra:
        body.update(extra)
    payload = em.json("report.json", body)
    em.csv("report.csv", ["receiver", "l", "mi", "xi"], _info_rows(rep))
    ok = rep.ic_satisfied and rep.leak_free
    return payload, 0 if ok else 1


def cmd_rac_run(args, em: Emitter):
    box = load_box(args.box)
    if args.variant == "sb_variant":
        rep = rac.run_sb_variant(box, args.n)
    else:
        rep = rac.run_additive(box, rac.RacConfig(args.n, args.k, "additive"))
    return _rac_output(em, rep, {"box": args.box})


def cmd_rac_nested(args, em: Emitter):
    box = load_box(args.box)
    rep = rac.run_nested(box, args.depth)
    return _rac_output(em, rep, {"box": args.box, "depth": args.depth})


def cmd_rac_classical(args, em: Emitter):
    res = rac.classical_strategy_search(args.n, args.k, args.shared_bits)
    res["ic_satisfied"] = res["I"] <= 1 + rac.IC_TOL
    return em.json("search.json", res), 0


def cmd_bell_value(args, em: Emitter):
    func = bell.functional(args.functional, args.k)
    body: dict = {"functional": func.name, "local_max": func.local_max, "quantum_max": func.quantum_max}
    if (args.box is None) == (args.state is None):
        raise InputError("give exactly one of --box or --state")
    if args.box is not None:
        body["box"] = args.box
        body["value"] = bell.evaluate(func, load_box(args.box))
    else:
        rho = load_state(args.state)
        res = bell.optimize_settings(rho, func, seed=args.seed, restarts=args.restarts)
        body.update({"state": args.state, "value": res.value, "settings": [s.tolist() for s in res.settings]})
    if func.k is not None and func.name.startswith("ic"):
        body["classification"] = bell.classify_ic(body["value"], func.k)
    return em.json("value.json", body), 0


def cmd_bell_bounds(args, em: Emitter):
    lower, upper = bell.ic_bounds(args.k)
    enumerated, witness = bell.local_max(bell.functional("ic", args.k))
    body = {
        "k": args.k,
        "lower": lower,
        "upper": upper,
        "enumerated_local_max": enumerated,
        "witness": witness,
        "lower_matches_enumeration": bool(abs(lower - enumerated) <= 1e-12),
    }
    return em.json("bounds.json", body), 0


def cmd_bell_monogamy(args, em: Emitter):
    rel = bell.relation(args.relation, n=args.n, k=args.k)
    if args.box:
        source = [load_box(b) for b in args.box]
    elif args.state:
        source = [load_state(s) for s in args.state]
    else:
        source = bell.RandomStates(rel.num_sites, args.random_states, args.seed)
    res = bell.monogamy_sweep(rel, source, seed=args.seed, restarts=args.restarts)
    em.csv(
        "sweep.csv",
        ["sample_id", "seed", "lhs", "bound", "violated"],
        ([s["sample_id"], s["seed"], s["lhs"], s["bound"], s["violated"]] for s in res.samples),
    )
    body = res.summary()
    body["num_violations"] = len(res.violations)
    body["terms_of_max"] = max(res.samples, key=lambda s: s["lhs"])["terms"]
    return em.json("summary.json", body), 1 if res.violations else 0


def cmd_es_verify(args, em: Emitter):
    res = info.es_ratio_probe(args.trials, args.seed)
    res["passed"] = res["max_ratio"] <= 1 + 1e-9
    return em.json("probe.json", res), 0 if res["passed"] else 1


def cmd_bb84(args, em: Emitter):
    try:
        i1, i2 = info.bb84_split(args.qber)
    except ValueError as e:
        raise InputError(str(e)) from None
    return em.json("bb84.json", {"Q": args.qber, "I1": i1, "I2": i2, "I": i1 + i2}), 0


def cmd_ising_scan(args, em: Emitter):
    tree = ising.build_tree(args.p, args.s0, args.J, seed=args.seed)
    params = ising.McParams(args.T[0], args.burn_in, args.measure, args.seed)
    curve = ising.temperature_scan(tree, args.T, params)
    rows = [r.summary() for r in curve]
    em.csv(
        "scan.csv",
        ["T", "mean_abs_mag", "gauge_mag", "stderr", "energy_mean"],
        ([r["T"], r["mean_abs_mag"], r["gauge_mag"], r["stderr"], r["energy_mean"]] for r in rows),
    )
    body = {
        "params": {"p": args.p, "s0": args.s0, "J": args.J, "burn_in": args.burn_in, "measure": args.measure, "seed": args.seed},
        "curve": rows,
        "monotonicity": ising.monotonicity(curve),
        "xi_report": ising.xi_report(curve, args.E, args.p),
    }
    return em.json("scan.json", body), 0


def cmd_box_check(args, em: Emitter):
    box = load_box(args.box)
    rep = boxes.no_signaling_check(box, args.tol)
    body = {"box": args.box, "parties": [list(p) for p in box.parties]}
    body.update(rep.to_dict())
    payload = em.json("check.json", body)
    em.raw("box.json", box.to_json())
    return payload, 0 if rep.passed else 1


# -- parser --------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="iclab", description="Information causality laboratory")
    p.add_argument("--version", action="version", version=f"iclab {__version__}")
    groups = p.add_subparsers(dest="group", required=True, parser_class=_Parser)

    def leaf(sub, name, handler, help_text):
        c = sub.add_parser(name, help=help_text)
        c.add_argument("--out", help="directory for JSON/CSV outputs and manifest")
        c.set_defaults(handler=handler)
        return c

    g = groups.add_parser("rac", help="random access code protocols").add_subparsers(dest="cmd", required=True)
    c = leaf(g, "run", cmd_rac_run, "additive or SB-variant (n,k)-RAC")
    c.add_argument("--box", required=True)
    c.add_argument("--n", type=_positive_int, default=1)
    c.add_argument("--k", type=int, default=2)
    c.add_argument("--variant", choices=["additive", "sb_variant"], default="additive")
    c = leaf(g, "nested", cmd_rac_nested, "nested tree protocol")
    c.add_argument("--box", required=True)
    c.add_argument("--depth", type=int, choices=[1, 2, 3], default=2)
    c = leaf(g, "classical-search", cmd_rac_classical, "exhaustive classical strategies")
    c.add_argument("--n", type=_positive_int, default=1)
    c.add_argument("--k", type=int, default=2)
    c.add_argument("--shared-bits", type=int, choices=[0, 1], default=0)

    g = groups.add_parser("bell", help="Bell functionals and monogamy").add_subparsers(dest="cmd", required=True)
    c = leaf(g, "value", cmd_bell_value, "functional value of a box or optimised state")
    c.add_argument("--functional", required=True, choices=["chsh", "sb", "mermin", "ic"])
    c.add_argument("--k", type=int)
    c.add_argument("--box")
    c.add_argument("--state")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--restarts", type=_positive_int, default=5)
    c = leaf(g, "bounds", cmd_bell_bounds, "IC functional bounds")
    c.add_argument("--k", type=int, required=True)
    c = leaf(g, "monogamy", cmd_bell_monogamy, "quadratic monogamy sweep")
    c.add_argument("--relation", required=True)
    c.add_argument("--n", type=_positive_int, default=2)
    c.add_argument("--k", type=int, default=2)
    c.add_argument("--random-states", type=_positive_int, default=100)
    c.add_argument("--state", action="append")
    c.add_argument("--box", action="append")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--restarts", type=_positive_int, default=5)

    g = groups.add_parser("es", help="channel attenuation").add_subparsers(dest="cmd", required=True)
    c = leaf(g, "verify", cmd_es_verify, "randomised attenuation probe")
    c.add_argument("--trials", type=_positive_int, default=10000)
    c.add_argument("--seed", type=int, default=0)

    c = leaf(groups, "bb84", cmd_bb84, "BB84 information split")
    c.add_argument("--qber", type=float, required=True)

    g = groups.add_parser("ising", help="Bethe-lattice spin glass").add_subparsers(dest="cmd", required=True)
    c = leaf(g, "scan", cmd_ising_scan, "Metropolis temperature scan")
    c.add_argument("--p", type=int, default=6)
    c.add_argument("--s0", choices=["all_plus", "random"], default="all_plus")
    c.add_argument("--J", type=float, default=1.0)
    c.add_argument("--T", type=float, nargs="+", default=[0.1, 1.0, 10.0])
    c.add_argument("--E", type=float, nargs="*", default=[1.0, 0.9])
    c.add_argument("--burn-in", type=int, default=1000)
    c.add_argument("--measure", type=_positive_int, default=10000)
    c.add_argument("--seed", type=int, default=0)

    g = groups.add_parser("box", help="box utilities").add_subparsers(dest="cmd", required=True)
    c = leaf(g, "check", cmd_box_check, "no-signaling check")
    c.add_argument("--box", required=True)
    c.add_argument("--tol", type=float, default=boxes.NS_TOL)
    return p


def _leaf_parser(command: str) -> argparse.ArgumentParser:
    p = build_parser()
    for word in command.split():
        sub = next(a for a in p._actions if isinstance(a, argparse._SubParsersAction))
        p = sub.choices[word]
    return p


def argv_from_manifest(manifest: dict) -> list[str]:
    """Command line that reproduces the run a manifest describes (without --out)."""
    parser = _leaf_parser(manifest["command"])
    argv = manifest["command"].split()
    params = manifest["params"]
    for action in parser._actions:
        if not action.option_strings or action.dest in ("help", "out"):
            continue
        value = params.get(action.dest)
        if value is None:
            continue
        flag = action.option_strings[0]
        if isinstance(action, argparse._AppendAction):
            for v in value:
                argv += [flag, str(v)]
        elif isinstance(value, list):
            argv += [flag, *(str(v) for v in value)]
        else:
            argv += [flag, str(value)]
    return argv


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    command = args.group if getattr(args, "cmd", None) is None else f"{args.group} {args.cmd}"
    em = Emitter(args, command)
    try:
        payload, code = args.handler(args, em)
    except (InputError, ValueError, KeyError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"iclab {command}: error: {msg}", file=sys.stderr)
        return 2
    em.finish()
    sys.stdout.write(_dumps(payload))
    return code


if __name__ == "__main__":
    sys.exit(main())
