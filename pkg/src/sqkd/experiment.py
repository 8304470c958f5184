"""Monte Carlo experiments: configuration, seeding, result files.

Trial ``t`` of an experiment with master seed ``s`` runs with protocol seed
``splitmix64((s + (t + 1) * 0x9E3779B97F4A7C15) mod 2**64)``; within a run
each party's stream is a PCG64 generator spawned from that seed. Results do
not depend on the number of workers.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from . import analysis
from .attacks import AttackParameterError, build_attack
from .protocol import ConfigError, ProtocolConfig, RunResult, run_protocol

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trial_seed(master_seed: int, trial_index: int) -> int:
    return splitmix64((master_seed + (trial_index + 1) * GOLDEN) & MASK64)


_PROTOCOL_FIELDS = {f.name for f in fields(ProtocolConfig)} - {"seed"}


@dataclass(frozen=True)
class OutputSpec:
    results_path: str | None = None
    trace_path: str | None = None
    format: str = "json"

    def __post_init__(self):
        if self.format not in ("json", "csv"):
            raise ConfigError(f"output.format must be 'json' or 'csv', got {self.format!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: dict
    attack: dict = field(default_factory=lambda: {"name": "none", "params": {}})
    trials: int = 1
    output: OutputSpec = OutputSpec()
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        unknown = set(self.protocol) - _PROTOCOL_FIELDS
        if unknown:
            raise ConfigError(f"protocol: unknown field(s) {sorted(unknown)}")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError(f"trials must be a positive integer, got {self.trials!r}")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError(f"workers must be a positive integer, got {self.workers!r}")
        if not isinstance(self.master_seed, int) or not 0 <= self.master_seed <= MASK64:
            raise ConfigError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed!r}")
        if set(self.attack) - {"name", "params"} or "name" not in self.attack:
            raise ConfigError("attack must be {'name': ..., 'params': {...}}")
        self.protocol_config(0)
        try:
            self.build_attack()
        except AttackParameterError as exc:
            raise ConfigError(f"attack: {exc}") from None

    def protocol_config(self, seed: int) -> ProtocolConfig:
        try:
            return ProtocolConfig(seed=seed, **self.protocol)
        except TypeError as exc:
            raise ConfigError(f"protocol: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"protocol: {exc}") from None

    def build_attack(self):
        return build_attack(self.attack["name"], self.attack.get("params") or {})

    def to_dict(self) -> dict:
        return {
            "protocol": dict(self.protocol),
            "attack": {"name": self.attack["name"], "params": self.attack.get("params") or {}},
            "trials": self.trials,
            "output": {"results_path": self.output.results_path,
                       "trace_path": self.output.trace_path,
                       "format": self.output.format},
            "master_seed": self.master_seed,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        d = dict(d)
        unknown = set(d) - {"protocol", "attack", "trials", "output", "master_seed", "workers"}
        if unknown:
            raise ConfigError(f"unknown top-level field(s) {sorted(unknown)}")
        if "protocol" not in d:
            raise ConfigError("missing field 'protocol'")
        out = d.pop("output", None) or {}
        unknown = set(out) - {"results_path", "trace_path", "format"}
        if unknown:
            raise ConfigError(f"output: unknown field(s) {sorted(unknown)}")
        attack = d.pop("attack", None) or {"name": "none"}
        attack = {"name": attack.get("name"), "params": attack.get("params") or {}}
        return cls(attack=attack, output=OutputSpec(**out), **d)


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    try:
        return ExperimentConfig.from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def run_trial(config: ExperimentConfig, index: int, trace: bool = False):
    events = [] if trace else None
    result = run_protocol(config.protocol_config(trial_seed(config.master_seed, index)),
                          config.build_attack(), trial=index, trace=events)
    return result, events


def _run_trial_job(args):
    return run_trial(*args)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    results: list
    theory: analysis.TheoryReport

    @property
    def passed(self) -> bool:
        return self.theory.passed

    def aggregate(self) -> dict:
        obs = analysis._observed(self.results)
        return {
            claim: {"successes": k, "samples": n,
                    "rate": (k / n) if n else None}
            for claim, (k, n) in obs.items() if n
        } | {
            "trials_passed_both_checks": sum(r.passed for r in self.results),
            "final_keys_equal_in_all_trials": all(
                r.summary()["final_keys_equal"] for r in self.results),
        }

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "per_trial": [dict(trial=i, **r.summary()) for i, r in enumerate(self.results)],
            "aggregate": self.aggregate(),
            "verdicts": self.theory.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        rows = [dict(trial=i, **r.summary()) for i, r in enumerate(self.results)]
        for row in rows:
            row["degenerate"] = ";".join(row["degenerate"])
        cols = list(rows[0])
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols + ["predicted", "ci_low", "ci_high", "verdict"],
                           lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow(row)
        for claim_row in self.theory.rows:
            e = claim_row.estimate
            w.writerow({
                "trial": f"aggregate:{claim_row.claim}",
                "predicted": repr(claim_row.predicted),
                "ci_low": "" if e is None else repr(e.ci_low),
                "ci_high": "" if e is None else repr(e.ci_high),
                "verdict": claim_row.verdict,
            })
        return buf.getvalue()


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    want_trace = config.output.trace_path is not None
    jobs = [(config, i, want_trace) for i in range(config.trials)]
    if config.workers > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outputs = list(pool.map(_run_trial_job, jobs))
    else:
        outputs = [_run_trial_job(j) for j in jobs]
    results = [r for r, _ in outputs]
    report = ExperimentReport(config, results,
                              analysis.compare_theory(results, config.build_attack()))
    if config.output.results_path:
        text = report.to_json() if config.output.format == "json" else report.to_csv()
        Path(config.output.results_path).write_text(text)
    if want_trace:
        with open(config.output.trace_path, "w") as fh:
            for _, events in outputs:
                for ev in events:
                    fh.write(json.dumps(ev, sort_keys=True) + "\n")
    return report


def with_overrides(config: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(config, **changes)
