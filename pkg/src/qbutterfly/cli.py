"""Scenario files, deterministic reports and the ``qbutterfly`` command.

Scenario file: one ``[name]`` section of ``key = value`` lines::

    [three_terminal]
    kind = butterfly
    n = 3
    seed = 7

Report file: ASCII lines in three sections, ``SCENARIO`` (sorted
``key = value`` echo), ``RESULTS`` (``key value`` lines in a fixed order)
and ``VERDICTS`` (``VERDICT <name> PASS|FAIL``). Reals are printed with
``%.12f``. Transcripts are embedded between ``BEGIN TRANSCRIPT`` and
``END TRANSCRIPT`` in the line format of
:func:`qbutterfly.butterfly.format_transcript`.

Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 usage or scenario
error, 3 internal error.
"""
from __future__ import annotations

import argparse
import configparser
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, analysis, butterfly, qsim, recovery

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3
THREADS_ENV = "QBUTTERFLY_THREADS"
PERFECT_TOL = 1e-9

KINDS = {
    "butterfly": {"n", "seed", "chirality", "mode", "trials", "inputs", "composite"},
    "recovery": {"seed", "topology", "failures", "phi", "false_negative_rate", "false_positive_rate", "expect", "flank_scope"},
    "bound": {"seed", "d", "fidelities", "expect"},
    "baseline": {"seed", "n"},
}
DEFAULTS = {
    "butterfly": {"chirality": "clockwise", "mode": "exhaustive", "trials": "1", "composite": "false"},
    "recovery": {"failures": "", "false_negative_rate": "0", "false_positive_rate": "0", "expect": "recovered", "flank_scope": "block"},
    "bound": {},
    "baseline": {},
}
REQUIRED = {"butterfly": {"n"}, "recovery": {"topology"}, "bound": {"d", "fidelities"}, "baseline": {"n"}}


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    kind: str
    params: dict[str, str]
    base_dir: Path = Path(".")
    topology: recovery.NetworkTopology | None = None

    @property
    def seed(self) -> int:
        return int(self.params["seed"])

    def get_int(self, key: str) -> int:
        try:
            return int(self.params[key])
        except ValueError:
            raise ScenarioError(f"{key} must be an integer, got {self.params[key]!r}") from None

    def get_float(self, key: str) -> float:
        try:
            return float(self.params[key])
        except ValueError:
            raise ScenarioError(f"{key} must be a number, got {self.params[key]!r}") from None


def _parse_complex_pairs(text: str) -> list[tuple[complex, complex]]:
    pairs = []
    for chunk in filter(None, (c.strip() for c in text.split(";"))):
        parts = [p.strip() for p in chunk.split(",")]
        if len(parts) != 2:
            raise ScenarioError(f"amplitude pair needs two values: {chunk!r}")
        try:
            pairs.append((complex(parts[0]), complex(parts[1])))
        except ValueError:
            raise ScenarioError(f"bad complex literal in {chunk!r}") from None
    return pairs


def _parse_ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ScenarioError(f"expected integers, got {text!r}") from None


def parse_scenario(text: str, base_dir: Path = Path("."), *, seed: int | None = None) -> Scenario:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(f"parse error: {exc}") from None
    sections = parser.sections()
    if len(sections) != 1:
        raise ScenarioError(f"expected exactly one [section], found {len(sections)}")
    name = sections[0]
    params = dict(parser[name])
    kind = params.pop("kind", None)
    if kind not in KINDS:
        raise ScenarioError(f"kind must be one of {sorted(KINDS)}, got {kind!r}")
    unknown = sorted(set(params) - KINDS[kind])
    if unknown:
        raise ScenarioError(f"unknown key(s) for {kind}: {', '.join(unknown)}")
    if seed is not None:
        params["seed"] = str(seed)
    missing = sorted((REQUIRED[kind] | {"seed"}) - set(params))
    if missing:
        raise ScenarioError(f"missing key(s): {', '.join(missing)}")
    params = {**DEFAULTS[kind], **params}
    scenario = Scenario(name, kind, params, base_dir)
    _validate(scenario)
    return scenario


def _validate(s: Scenario) -> None:
    s.get_int("seed")
    if s.kind == "butterfly":
        n = s.get_int("n")
        if n < 3:
            raise ScenarioError("n must be at least 3")
        if s.params["chirality"] not in ("clockwise", "counterclockwise", "both"):
            raise ScenarioError(f"bad chirality {s.params['chirality']!r}")
        if s.params["mode"] not in ("sample", "exhaustive"):
            raise ScenarioError(f"bad mode {s.params['mode']!r}")
        if s.get_int("trials") < 1:
            raise ScenarioError("trials must be positive")
        if "inputs" in s.params and len(_parse_complex_pairs(s.params["inputs"])) != n:
            raise ScenarioError(f"inputs must list {n} amplitude pairs")
        if s.params["composite"] not in ("true", "false"):
            raise ScenarioError("composite must be true or false")
    elif s.kind == "recovery":
        path = s.base_dir / s.params["topology"]
        try:
            s.topology = recovery.load_topology(path)
        except OSError as exc:
            raise ScenarioError(f"cannot read topology {path}: {exc.strerror}") from None
        except recovery.TopologyError as exc:
            raise ScenarioError(f"topology {path}: {exc}") from None
        unknown = set(_parse_ints(s.params["failures"])) - set(s.topology.nodes)
        if unknown:
            raise ScenarioError(f"failures reference unknown nodes {sorted(unknown)}")
        for key in ("false_negative_rate", "false_positive_rate"):
            if not 0 <= s.get_float(key) <= 1:
                raise ScenarioError(f"{key} must lie in [0, 1]")
        if s.params["expect"] not in ("intact", "recovered", "partial", "unrecoverable"):
            raise ScenarioError(f"bad expect {s.params['expect']!r}")
        if s.params["flank_scope"] not in ("block", "graph"):
            raise ScenarioError(f"bad flank_scope {s.params['flank_scope']!r}")
        if "phi" in s.params and len(_parse_complex_pairs(s.params["phi"])) != 1:
            raise ScenarioError("phi must be a single amplitude pair")
    elif s.kind == "bound":
        d = s.get_int("d")
        f = [float(v) for v in s.params["fidelities"].replace(",", " ").split()]
        if len(f) != d:
            raise ScenarioError(f"fidelities must list {d} values")
        if "expect" in s.params and s.params["expect"] not in ("satisfied", "violated"):
            raise ScenarioError(f"bad expect {s.params['expect']!r}")
    elif s.kind == "baseline":
        if s.get_int("n") < 3:
            raise ScenarioError("n must be at least 3")


def load_scenario(path: str | Path, *, seed: int | None = None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}") from None
    return parse_scenario(text, path.parent, seed=seed)


@dataclass
class Report:
    scenario: Scenario
    results: list[tuple[str, str]] = field(default_factory=list)
    verdicts: list[tuple[str, bool]] = field(default_factory=list)
    blocks: list[str] = field(default_factory=list)
    error: str | None = None
    wall_clock: float | None = None

    def add(self, key: str, value) -> None:
        self.results.append((key, _fmt(value)))

    def verdict(self, name: str, ok: bool) -> None:
        self.verdicts.append((name, bool(ok)))

    @property
    def passed(self) -> bool:
        return self.error is None and all(ok for _, ok in self.verdicts)

    def exit_code(self) -> int:
        if self.error is not None:
            return EXIT_INTERNAL
        return EXIT_PASS if self.passed else EXIT_FAIL

    def to_text(self) -> str:
        s = self.scenario
        lines = ["SCENARIO", f"name = {s.name}", f"kind = {s.kind}"]
        lines += [f"{k} = {s.params[k]}" for k in sorted(s.params)]
        lines.append(f"tool_version = {__version__}")
        lines.append("RESULTS")
        lines += [f"{k} {v}" for k, v in self.results]
        for block in self.blocks:
            lines.append("BEGIN TRANSCRIPT")
            lines.extend(block.rstrip("\n").splitlines())
            lines.append("END TRANSCRIPT")
        if self.error is not None:
            lines.append(f"ERROR {self.error}")
        if self.wall_clock is not None:
            lines.append(f"wall_clock_seconds {self.wall_clock:.3f}")
        lines.append("VERDICTS")
        lines += [f"VERDICT {name} {'PASS' if ok else 'FAIL'}" for name, ok in self.verdicts]
        return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12f}"
    if isinstance(value, (list, tuple)):
        return " ".join(_fmt(v) for v in value) if value else "-"
    return str(value)


def amplitude_lines(state: qsim.StateVector) -> list[str]:
    """Debug dump: ``AMPLITUDE <index> <re> <im>`` for each nonzero amplitude."""
    return [
        f"AMPLITUDE {k} {_fmt(a.real)} {_fmt(a.imag)}"
        for k, a in enumerate(state.amplitudes)
        if abs(a) > qsim.ATOL
    ]


def _threads(requested: int | None) -> int:
    if requested is not None:
        return max(1, requested)
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _run_butterfly(s: Scenario, report: Report, threads: int) -> None:
    n = s.get_int("n")
    rng = qsim.random_source(s.seed)
    chiralities = ["clockwise", "counterclockwise"] if s.params["chirality"] == "both" else [s.params["chirality"]]
    trials = s.get_int("trials")
    if "inputs" in s.params:
        input_sets = [_parse_complex_pairs(s.params["inputs"])] * trials
    else:
        input_sets = [butterfly.random_inputs(n, rng) for _ in range(trials)]
    jobs = [(inputs, ch) for inputs in input_sets for ch in chiralities]
    report.add("terminals", n)
    report.add("trials", trials)
    report.add("chiralities", chiralities)

    if s.params["mode"] == "exhaustive":
        def job(item):
            inputs, ch = item
            return butterfly.enumerate_branches(butterfly.build_instance(n, inputs), butterfly.RoutingConfig(n, ch))

        with ThreadPoolExecutor(max_workers=threads) as pool:
            sets = list(pool.map(job, jobs))
        min_fid = min(bs.min_fidelity() for bs in sets)
        counts = {len(bs) for bs in sets}
        expected_p = 2.0 ** -(n * n)
        uniform = all(np.allclose(bs.probabilities, expected_p, rtol=0, atol=1e-12) for bs in sets)
        signaling = max(
            float(np.abs(bs.averaged_raw_density(t) - np.eye(2) / 2).max()) for bs in sets for t in range(1, n + 1)
        )
        first = sets[0][0]
        cost = butterfly.cost_summary(first)
        report.add("branches_per_run", sorted(counts))
        report.add("min_fidelity", min_fid)
        report.add("max_pre_correction_deviation_from_mixed", signaling)
        report.add("channels", cost["channels"])
        report.add("bits_per_channel", cost["bits_per_channel"])
        report.add("abstract_bits_per_channel", cost["abstract_bits_per_channel"])
        report.verdict("perfect_transmission", min_fid >= 1 - PERFECT_TOL)
        report.verdict("branch_count", counts == {2 ** (n * n)})
        report.verdict("uniform_branch_probabilities", uniform)
        report.verdict("no_signaling", signaling <= PERFECT_TOL)
        report.verdict("channel_count", cost["channels"] == n + 1)
        report.blocks.append(first.to_text())
    else:
        composite = s.params["composite"] == "true"
        transcripts = []
        for inputs, ch in jobs:
            inst = butterfly.build_instance(n, inputs)
            transcripts.append(butterfly.run_round(inst, butterfly.RoutingConfig(n, ch), rng, composite=composite))
        min_fid = min(min(tr.final_fidelities.values()) for tr in transcripts)
        cost = butterfly.cost_summary(transcripts[0])
        report.add("rounds", len(transcripts))
        report.add("min_fidelity", min_fid)
        report.add("channels", cost["channels"])
        report.add("bits_per_channel", cost["bits_per_channel"])
        report.add("abstract_bits_per_channel", cost["abstract_bits_per_channel"])
        report.verdict("perfect_transmission", min_fid >= 1 - PERFECT_TOL)
        report.verdict("channel_count", cost["channels"] == n + 1)
        report.blocks.extend(tr.to_text() for tr in transcripts)


def _run_recovery(s: Scenario, report: Report) -> None:
    topo = s.topology
    rng = qsim.random_source(s.seed)
    phi = _parse_complex_pairs(s.params["phi"])[0] if "phi" in s.params else recovery.PLUS
    failures = _parse_ints(s.params["failures"])
    detector = recovery.DetectorModel(s.get_float("false_negative_rate"), s.get_float("false_positive_rate"))
    network = recovery.prepare_graph_network(topo, phi)
    report.add("nodes", len(topo.nodes))
    report.add("blocks", len(topo.blocks))
    report.add("initial_stabilizers_ok", recovery.stabilizers_hold(network))
    criticality = recovery.criticality_check(topo, failures, s.params["flank_scope"])
    final, statuses, rec = recovery.recover(network, failures, detector, rng, flank_scope=s.params["flank_scope"])
    report.add("true_failures", sorted(failures))
    report.add("criticality_of_true_failures", criticality.value)
    report.add("reported_failures", list(rec.reported))
    report.add("undetected_failures", list(rec.undetected))
    report.add("false_alarms", list(rec.false_alarms))
    for k in sorted(rec.decoded):
        bits = rec.decoded[k]
        report.add(f"block_{k}_decoded_status", [f"{v}:{bits[v]}" for v in sorted(bits)])
    report.add("critical_blocks", list(rec.critical_blocks))
    report.add("excised", list(rec.excised))
    report.add("substituted", [f"{v}@{b}" for v, b in sorted(rec.substituted.items())])
    report.add("unrepaired", list(rec.unrepaired))
    report.add("data_loss", rec.data_loss)
    for v in sorted(rec.stabilizers):
        report.add(f"stabilizer_{v}", rec.stabilizers[v])
    for v in sorted(statuses):
        report.add(f"status_{v}", statuses[v].value)
    report.add("outcome", rec.status)
    report.verdict("initial_stabilizers", recovery.stabilizers_hold(network))
    report.verdict("final_stabilizers", rec.stabilizers_ok)
    report.verdict("untouched_nodes", rec.untouched_ok)
    report.verdict("recovery_outcome", rec.status == s.params["expect"])


def _run_bound(s: Scenario, report: Report) -> None:
    d = s.get_int("d")
    f = [float(v) for v in s.params["fidelities"].replace(",", " ").split()]
    br = analysis.check_bound(f, d)
    _add_bound(report, "", br)
    if "expect" in s.params:
        report.verdict("bound_expectation", br.satisfied == (s.params["expect"] == "satisfied"))
    else:
        report.verdict("bound_evaluated", True)


def _add_bound(report: Report, prefix: str, br: analysis.BoundReport) -> None:
    report.add(f"{prefix}d", br.d)
    report.add(f"{prefix}fidelities", list(br.fidelities))
    report.add(f"{prefix}sum", br.total)
    report.add(f"{prefix}threshold", br.threshold)
    report.add(f"{prefix}satisfied", br.satisfied)


def _run_baseline(s: Scenario, report: Report) -> None:
    n = s.get_int("n")
    base = analysis.baseline_no_entanglement(n)
    ent = analysis.protocol_bound_report(n)
    _add_bound(report, "baseline_", base)
    _add_bound(report, "entangled_", ent)
    report.verdict("baseline_satisfies_bound", base.satisfied)
    report.verdict("entangled_violates_bound", not ent.satisfied)


def run_scenario(s: Scenario, *, threads: int | None = None, timing: bool = False) -> Report:
    report = Report(s)
    start = time.perf_counter()
    try:
        if s.kind == "butterfly":
            _run_butterfly(s, report, _threads(threads))
        elif s.kind == "recovery":
            _run_recovery(s, report)
        elif s.kind == "bound":
            _run_bound(s, report)
        else:
            _run_baseline(s, report)
    except Exception as exc:  # embedded in the report, surfaced as exit code 3
        report.error = f"{type(exc).__name__}: {exc}"
    if timing:
        report.wall_clock = time.perf_counter() - start
    return report


def emit_report(report: Report, path: str | Path | None) -> None:
    text = report.to_text()
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def verify_table1(seed: int = 0, samples: int = 10) -> Report:
    rng = qsim.random_source(seed)
    s = Scenario("table1", "table1", {"seed": str(seed), "samples": str(samples)})
    report = Report(s)
    worst_res, worst_rest = 1.0, 1.0
    rows = None
    for alpha, beta in butterfly.random_inputs(samples, rng):
        rows = butterfly.check_table1(alpha, beta)
        worst_res = min(worst_res, *(r.residual_fidelity for r in rows))
        worst_rest = min(worst_rest, *(r.restored_fidelity for r in rows))
        for r in rows:
            if abs(r.bell_probability - 0.25) > 1e-12:
                report.error = f"Bell outcome {r.a} has probability {r.bell_probability}"
    for r in rows:
        label = qsim.TABLE_BELL_LABELS[r.a]
        report.add(f"row_{r.a[0]}{r.a[1]}_{r.b}", [label, r.correction])
    report.add("min_residual_fidelity", worst_res)
    report.add("min_restored_fidelity", worst_rest)
    report.verdict("table1_residuals", worst_res >= 1 - PERFECT_TOL)
    report.verdict("table1_corrections", worst_rest >= 1 - PERFECT_TOL)
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qbutterfly", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario file and write its report")
    run.add_argument("scenario")
    run.add_argument("--out")
    run.add_argument("--seed", type=int)
    run.add_argument("--threads", type=int)
    run.add_argument("--timing", action="store_true", help="append wall-clock time (breaks byte-identical reports)")
    t1 = sub.add_parser("verify-table1", help="check the single-copy truth table")
    t1.add_argument("--seed", type=int, default=0)
    t1.add_argument("--out")
    en = sub.add_parser("enumerate", help="exhaustively enumerate every outcome branch")
    en.add_argument("--n", type=int, choices=(3, 4), required=True)
    en.add_argument("--seed", type=int, default=0)
    en.add_argument("--trials", type=int, default=1)
    en.add_argument("--threads", type=int)
    en.add_argument("--out")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    try:
        if args.command == "run":
            scenario = load_scenario(args.scenario, seed=args.seed)
            report = run_scenario(scenario, threads=args.threads, timing=args.timing)
        elif args.command == "verify-table1":
            report = verify_table1(args.seed)
        else:
            text = (
                f"[enumerate_n{args.n}]\nkind = butterfly\nn = {args.n}\nseed = {args.seed}\n"
                f"chirality = both\nmode = exhaustive\ntrials = {args.trials}\n"
            )
            report = run_scenario(parse_scenario(text), threads=args.threads)
    except ScenarioError as exc:
        print(f"qbutterfly: {exc}", file=sys.stderr)
        return EXIT_USAGE
    emit_report(report, args.out)
    return report.exit_code()


if __name__ == "__main__":
    sys.exit(main())
