"""Command-line interface.

Commands: verify | simulate | rates | maxdist | threshold.

Parameters resolve as flag > config file > default. The config file is INI
style; keys may sit in any of the sections ``[system]``, ``[protocol]``,
``[rates]``, ``[output]``, e.g.::

    [system]
    fidelity = 0.99, 0.97
    topology = symmetric, proximal
    dark_count = 1e-7

    [rates]
    grid = 0:400:1

Outputs
  rates     one CSV per (fidelity, topology, p_d) with columns
            L_km,R_raw,R_clamped,e_tot,Q
  simulate  transcript.jsonl: a header object, then one object per round with
            round_index, keys ([[a, b], ...] with Alice first), outcome
            ("psi+", "psi-" or "?"), sifted, sample; plus summary.json
  verify    report.json

Every output starts with the toolkit version and the resolved configuration.
Exit codes: 0 ok, 1 verification failure, 2 config error, 3 no bracket.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import protocol, rates
from .bsa import DetectorParams
from .channel import AdversaryModel, Topology, end_to_end_error

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BRACKET = 0, 1, 2, 3
VERSION_LINE = f"mdiqss {__version__}"
SAMPLING_NOTE = "security-check samples are drawn from sifted rounds"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    rounds: int = 100_000
    parties: int = 3
    fidelity: list[float] = field(default_factory=lambda: [0.99, 0.97])
    topology: list[str] = field(default_factory=lambda: ["symmetric"])
    dark_count: list[float] = field(default_factory=lambda: [1e-7])
    eta_d: float = 0.93
    eta_D: float = 0.863
    alpha: float = 0.19
    length_km: float = 0.0
    adversary: str = "none"
    sample_fraction: float = 0.1
    threshold: float = 0.11
    grid: str = "0:400:1"
    trials: int = 100_000
    out: str = "out"
    workers: int = 1  # never echoed: outputs do not depend on it

    # keys echoed per command
    ECHO = {
        "verify": ("seed", "trials"),
        "simulate": ("seed", "rounds", "parties", "fidelity", "topology", "dark_count", "eta_d",
                     "eta_D", "alpha", "length_km", "adversary", "sample_fraction", "threshold"),
        "rates": ("fidelity", "topology", "dark_count", "eta_d", "eta_D", "alpha", "grid"),
        "maxdist": ("fidelity", "topology", "dark_count", "eta_d", "eta_D", "alpha"),
        "threshold": ("topology", "dark_count", "eta_d", "eta_D", "alpha"),
    }

    def echo(self, command: str) -> dict:
        return {k: getattr(self, k) for k in self.ECHO[command]}


_LIST_KEYS = {"fidelity": float, "topology": str, "dark_count": float}
_SCALAR_KEYS = {
    "seed": int, "rounds": int, "parties": int, "eta_d": float, "eta_D": float, "alpha": float,
    "length_km": float, "adversary": str, "sample_fraction": float, "threshold": float,
    "grid": str, "trials": int, "out": str, "workers": int,
}
_SECTIONS = ("system", "protocol", "rates", "output")


def _convert(key: str, raw):
    try:
        if key in _LIST_KEYS:
            items = raw if isinstance(raw, list) else [raw]
            parts = [p.strip() for item in items for p in str(item).split(",") if p.strip()]
            if not parts:
                raise ConfigError(f"{key}: empty list")
            return [_LIST_KEYS[key](p) for p in parts]
        return _SCALAR_KEYS[key](raw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None


def _read_file(path: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    values = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            key = key.replace("-", "_")
            if key not in _LIST_KEYS and key not in _SCALAR_KEYS:
                raise ConfigError(f"unknown config key {key!r} in [{section}]")
            values[key] = _convert(key, raw)
    return values


def _validate(cfg: RunConfig, command: str) -> None:
    def check(ok, msg):
        if not ok:
            raise ConfigError(msg)

    check(cfg.rounds >= 1, f"rounds must be >= 1, got {cfg.rounds}")
    check(cfg.parties >= 3, f"parties must be >= 3, got {cfg.parties}")
    check(cfg.trials >= 1, f"trials must be >= 1, got {cfg.trials}")
    check(cfg.workers >= 1, f"workers must be >= 1, got {cfg.workers}")
    check(0 <= cfg.seed < 2**64, f"seed must lie in [0, 2^64), got {cfg.seed}")
    for p in cfg.fidelity:
        check(0.75 <= p <= 1.0, f"fidelity must lie in [0.75, 1], got {p}")
    for t in cfg.topology:
        check(t in {x.value for x in Topology}, f"topology must be symmetric or proximal, got {t!r}")
    for p in cfg.dark_count:
        check(0.0 <= p < 1.0, f"dark count probability must lie in [0, 1), got {p}")
    check(0.0 <= cfg.eta_d <= 1.0, f"eta_d must lie in [0, 1], got {cfg.eta_d}")
    check(0.0 <= cfg.eta_D <= 1.0, f"eta_D must lie in [0, 1], got {cfg.eta_D}")
    check(cfg.alpha >= 0.0, f"alpha must be >= 0, got {cfg.alpha}")
    check(cfg.length_km >= 0.0, f"length must be >= 0 km, got {cfg.length_km}")
    check(cfg.adversary in {a.value for a in AdversaryModel},
          f"adversary must be one of {[a.value for a in AdversaryModel]}, got {cfg.adversary!r}")
    check(0.0 < cfg.sample_fraction < 1.0, f"sample fraction must lie in (0, 1), got {cfg.sample_fraction}")
    check(0.0 <= cfg.threshold <= 1.0, f"threshold must lie in [0, 1], got {cfg.threshold}")
    parse_grid(cfg.grid)
    if command == "simulate":
        check(len(cfg.fidelity) == len(cfg.topology) == len(cfg.dark_count) == 1,
              "simulate takes a single fidelity, topology and dark-count value")


def parse_grid(text: str) -> np.ndarray:
    parts = text.split(":")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"grid must be START:STOP:STEP, got {text!r}") from None
    if not (step > 0 and stop >= start >= 0):
        raise ConfigError(f"grid needs 0 <= START <= STOP and STEP > 0, got {text!r}")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


_COMMAND_DEFAULTS = {
    "simulate": {"fidelity": [1.0]},
    "threshold": {"dark_count": [0.0], "eta_d": 1.0, "eta_D": 1.0},
}


def resolve_config(command: str, args: argparse.Namespace) -> RunConfig:
    values = dict(_COMMAND_DEFAULTS.get(command, {}))
    if args.config:
        values.update(_read_file(args.config))
    for key in list(_LIST_KEYS) + list(_SCALAR_KEYS):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = _convert(key, flag)
    cfg = RunConfig(**values)
    _validate(cfg, command)
    return cfg


# --- output helpers --------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, list):
        return ",".join(_fmt(v) for v in x)
    return str(x)


def _comment_block(cfg: RunConfig, command: str) -> list[str]:
    return [f"# {VERSION_LINE}"] + [f"# {k}={_fmt(v)}" for k, v in cfg.echo(command).items()]


def _system(cfg: RunConfig, fidelity: float, topology: str, p_d: float) -> rates.SystemParams:
    return rates.SystemParams.from_fidelity(fidelity, eta_d=cfg.eta_d, eta_D=cfg.eta_D, p_d=p_d,
                                            alpha=cfg.alpha, topology=topology)


def _combos(cfg: RunConfig):
    for fid in cfg.fidelity:
        for top in cfg.topology:
            for p_d in cfg.dark_count:
                yield fid, top, p_d


# --- commands --------------------------------------------------------------------

def cmd_verify(cfg: RunConfig, inject: str | None = None) -> int:
    rng = np.random.default_rng(cfg.seed)
    checks = []

    def record(name, ok, detail):
        checks.append({"check": name, "ok": bool(ok), "detail": detail})
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")

    for line in _comment_block(cfg, "verify"):
        print(line)
    try:
        tables = protocol.verify_tables(trials=cfg.trials, rng=rng, inject=inject)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    det_ok = sum(c.ok for c in tables.cells if c.reference is not protocol.UNBIASED)
    unb_ok = sum(c.ok for c in tables.cells if c.reference is protocol.UNBIASED)
    record("tables", tables.passed,
           f"{len(tables.cells) - len(tables.failures)}/{len(tables.cells)} combinations "
           f"({det_ok}/{tables.n_deterministic} deterministic, "
           f"{unb_ok}/{len(tables.cells) - tables.n_deterministic} unbiased)")
    for cell in tables.failures:
        print(f"    failing cell {cell.name}: expected {_outcome_symbol(cell.reference)}, "
              f"P(psi+) = {cell.p_plus:.6f}")
    record("parity formula", tables.formula_agreement == len(tables.cells),
           f"{tables.formula_agreement}/{len(tables.cells)} combinations agree with the matrices; "
           f"naive relation s = a_A ^ b_A ^ b_B ^ b_C disagrees on "
           f"{tables.literal_mismatches} deterministic cells (corrected offset a_A & a_B)")

    worst = 0.0
    for beta in (-0.9, -0.5, 0.0, 0.5, 0.9, 0.8):
        spec = rates.gram_spectrum(beta)
        worst = max(worst, float(np.max(np.abs(spec.eigenvalues - spec.closed_form(beta)))))
    record("gram spectrum", worst < 1e-10, f"max eigenvalue deviation {worst:.2e}")
    dev = 0.0
    for e_x in np.linspace(0.0, 0.25, 20):
        for e_y in np.linspace(0.0, 0.25, 20):
            dev = max(dev, abs(rates.gram_holevo(e_x, e_y)[1] - rates.holevo_bound(e_x, e_y)))
    record("gram holevo", dev < 1e-9, f"max |S_max - 1 - h(e_x + e_y)| on 20x20 grid {dev:.2e}")

    for n in (3, 4):
        eq = protocol.virtual_ghz_equivalence(n, cfg.trials, rng)
        ok = eq.tv_distance < 0.01 and eq.minus_pairs_with_psi_minus and eq.ghz_parity_violations == 0
        record(f"virtual GHZ n={n}", ok, f"TV distance {eq.tv_distance:.4f}, "
               f"parity violations {eq.ghz_parity_violations}")

    passed = all(c["ok"] for c in checks)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {"version": VERSION_LINE, "config": cfg.echo("verify"), "passed": passed, "checks": checks,
              "failing_cells": [c.name for c in tables.failures]}
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print("verification", "passed" if passed else "FAILED")
    return EXIT_OK if passed else EXIT_FAIL


def _outcome_symbol(x) -> str:
    return "-" if x is protocol.UNBIASED else x.symbol


_OUTCOME_JSON = ('"psi+"', '"psi-"', '"?"')
_KEY_JSON = ("[0,0]", "[0,1]", "[1,0]", "[1,1]")


def write_transcript(path: Path, batch: protocol.RoundBatch, header: dict) -> None:
    """Line-delimited JSON transcript; formatted by hand for speed."""
    sifted = batch.sifted
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        keys = batch.keys
        for r in range(len(batch)):
            ks = ",".join(_KEY_JSON[k] for k in keys[r])
            fh.write(f'{{"round_index":{batch.start + r},"keys":[{ks}],'
                     f'"outcome":{_OUTCOME_JSON[batch.outcome[r]]},'
                     f'"sifted":{"true" if sifted[r] else "false"},'
                     f'"sample":{"true" if batch.sample[r] else "false"}}}\n')


def cmd_simulate(cfg: RunConfig) -> int:
    fid, top, p_d = cfg.fidelity[0], cfg.topology[0], cfg.dark_count[0]
    e = 1.0 - fid
    if e > 0.25:
        raise ConfigError(f"fidelity must lie in [0.75, 1], got {fid}")
    links = protocol.build_links(cfg.parties, cfg.alpha, cfg.length_km, e, e, top)
    det = DetectorParams(eta_d=cfg.eta_d, p_d=p_d, eta_D=cfg.eta_D)
    batch = protocol.simulate(cfg.rounds, cfg.parties, links, det, cfg.adversary, seed=cfg.seed,
                              workers=cfg.workers)
    # sampling uses a stream separate from the round kernel
    rng = np.random.default_rng([cfg.seed, 1])
    summary = {"version": VERSION_LINE, "config": cfg.echo("simulate"), "sampling": SAMPLING_NOTE,
               "rounds": len(batch), "conclusive": int(np.count_nonzero(batch.conclusive))}
    try:
        report, key = protocol.sift_and_check(batch, cfg.sample_fraction, cfg.threshold, rng)
    except protocol.NoSiftedRoundsError as exc:
        summary.update({"sifted": 0, "error": str(exc)})
        report = key = None
    if report is not None:
        match = None
        if len(key):
            rebuilt = protocol.reconstruct_secret(key, range(1, cfg.parties))
            match = float(np.mean(rebuilt == key.bits[:, 0]))
        summary.update({
            "sifted": report.n_sifted,
            "sifted_fraction": report.sifted_fraction,
            "sample_size": report.sample_size,
            "estimated_error": report.estimated_error,
            "analytic_channel_error": end_to_end_error(e, e),
            "threshold": report.threshold,
            "abort": report.abort,
            "key_length": len(key),
            "reconstruction_match": match,
        })
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    header = {"type": "header", "version": VERSION_LINE, "config": cfg.echo("simulate"),
              "sampling": SAMPLING_NOTE, "segments": protocol.segment_names(cfg.parties)}
    write_transcript(out / "transcript.jsonl", batch, header)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for k in ("rounds", "conclusive", "sifted", "sample_size", "estimated_error", "abort",
              "key_length", "reconstruction_match"):
        if k in summary:
            print(f"{k}: {summary[k]}")
    if report is None:
        print(summary["error"], file=sys.stderr)
    return EXIT_OK


def curve_filename(fidelity: float, topology: str, p_d: float) -> str:
    return f"rate_P{fidelity:g}_{topology}_pd{p_d:g}.csv"


def cmd_rates(cfg: RunConfig) -> int:
    grid = parse_grid(cfg.grid)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for fid, top, p_d in _combos(cfg):
        curve = rates.rate_curve(_system(cfg, fid, top, p_d), grid)
        lines = _comment_block(cfg, "rates")
        lines.append(f"# curve fidelity={fid!r} topology={top} dark_count={p_d!r}")
        lines.append("L_km,R_raw,R_clamped,e_tot,Q")
        for row in zip(curve.length_km, curve.rate_raw, curve.rate_clamped, curve.e_tot, curve.q):
            lines.append(",".join(repr(float(v)) for v in row))
        path = out / curve_filename(fid, top, p_d)
        path.write_text("\n".join(lines) + "\n")
        print(path)
    return EXIT_OK


def cmd_maxdist(cfg: RunConfig) -> int:
    for line in _comment_block(cfg, "maxdist"):
        print(line)
    status = EXIT_OK
    for fid, top, p_d in _combos(cfg):
        label = f"fidelity={fid!r} topology={top} dark_count={p_d!r}"
        try:
            dist = rates.max_distance(_system(cfg, fid, top, p_d))
        except rates.NoBracketError as exc:
            print(f"{label} max_distance_km=none ({exc})")
            status = EXIT_BRACKET
            continue
        print(f"{label} max_distance_km={dist:.1f}")
    return status


def cmd_threshold(cfg: RunConfig) -> int:
    for line in _comment_block(cfg, "threshold"):
        print(line)
    status = EXIT_OK
    for top in cfg.topology:
        for p_d in cfg.dark_count:
            params = rates.SystemParams(eta_d=cfg.eta_d, eta_D=cfg.eta_D, p_d=p_d, alpha=cfg.alpha,
                                        topology=top)
            try:
                p_th = rates.threshold_fidelity(params)
            except rates.NoBracketError as exc:
                print(f"topology={top} dark_count={p_d!r} threshold_fidelity=none ({exc})")
                status = EXIT_BRACKET
                continue
            print(f"topology={top} dark_count={p_d!r} threshold_fidelity={p_th:.4f}")
    return status


# --- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI-style config file")
    common.add_argument("--seed", type=str, metavar="N")
    common.add_argument("--rounds", type=str, metavar="N")
    common.add_argument("--parties", type=str, metavar="N")
    common.add_argument("--fidelity", action="append", metavar="P",
                        help="channel fidelity 1 - e_x; repeat or comma-separate")
    common.add_argument("--topology", action="append", choices=[t.value for t in Topology])
    common.add_argument("--dark-count", dest="dark_count", action="append", metavar="P")
    common.add_argument("--out", metavar="DIR")
    common.add_argument("--grid", metavar="START:STOP:STEP", help="distance grid in km")
    common.add_argument("--length", dest="length_km", metavar="KM", help="segment length for simulate")
    common.add_argument("--adversary", choices=[a.value for a in AdversaryModel])
    common.add_argument("--sample-fraction", dest="sample_fraction", metavar="F")
    common.add_argument("--threshold", metavar="E", help="abort threshold for the sampled error")
    common.add_argument("--eta-d", dest="eta_d", metavar="P")
    common.add_argument("--eta-D", dest="eta_D", metavar="P")
    common.add_argument("--alpha", metavar="DB_PER_KM")
    common.add_argument("--trials", metavar="N", help="statistical trials for verify")
    common.add_argument("--workers", metavar="N")

    parser = argparse.ArgumentParser(prog="mdiqss", description="MDI quantum secret sharing toolkit")
    parser.add_argument("--version", action="version", version=VERSION_LINE)
    sub = parser.add_subparsers(dest="command", required=True)
    verify = sub.add_parser("verify", parents=[common], help="run the verification suite")
    verify.add_argument("--inject-fault", dest="inject", metavar="CELL", help=argparse.SUPPRESS)
    sub.add_parser("simulate", parents=[common], help="Monte Carlo protocol run")
    sub.add_parser("rates", parents=[common], help="key-rate curves")
    sub.add_parser("maxdist", parents=[common], help="maximal distances")
    sub.add_parser("threshold", parents=[common], help="threshold fidelity")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = resolve_config(args.command, args)
        if args.command == "verify":
            return cmd_verify(cfg, args.inject)
        return {"simulate": cmd_simulate, "rates": cmd_rates, "maxdist": cmd_maxdist,
                "threshold": cmd_threshold}[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
