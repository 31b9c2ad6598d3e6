"""Experiment reports: per-repeat accuracies, mean and population std per stage."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class StageResult:
    stage: str
    accuracies: list = field(default_factory=list)  # None marks a failed repeat
    errors: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    split_digests: list = field(default_factory=list)
    details: list = field(default_factory=list)

    def add(self, acc, err, seconds, digest, details):
        self.accuracies.append(acc)
        self.errors.append(err)
        self.seconds.append(float(seconds))
        self.split_digests.append(digest)
        self.details.append(_jsonable(details))

    @property
    def ok(self) -> list:
        return [a for a in self.accuracies if a is not None]

    @property
    def failed(self) -> int:
        return sum(a is None for a in self.accuracies)

    @property
    def mean(self) -> float:
        ok = self.ok
        return math.fsum(ok) / len(ok) if ok else float("nan")

    @property
    def std(self) -> float:
        """Population standard deviation over the successful repeats."""
        ok = self.ok
        if not ok:
            return float("nan")
        m = self.mean
        return math.sqrt(math.fsum((a - m) ** 2 for a in ok) / len(ok))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):
        return obj.item()
    if hasattr(obj, "tolist"):
        return obj.tolist()
    return obj


@dataclass
class Report:
    config: dict
    stages: list
    metadata: dict = field(default_factory=dict)
    splits: list = field(default_factory=list)
    models: dict = field(default_factory=dict)  # not serialised

    def stage(self, name: str) -> StageResult:
        for s in self.stages:
            if s.stage == name:
                return s
        raise KeyError(name)

    def to_dict(self, timings: bool = True) -> dict:
        out = {"config": self.config, "metadata": self.metadata, "splits": self.splits,
               "stages": []}
        for s in self.stages:
            row = {"stage": s.stage, "accuracies": s.accuracies, "mean": s.mean, "std": s.std,
                   "failed": s.failed, "errors": s.errors, "split_digests": s.split_digests,
                   "details": s.details}
            if timings:
                row["seconds"] = s.seconds
            out["stages"].append(row)
        return out

    def comparable(self) -> str:
        """Canonical JSON without wall-clock times, for determinism checks."""
        return json.dumps(self.to_dict(timings=False), sort_keys=True, default=str)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=str)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = max((len(s.accuracies) for s in self.stages), default=0)
        w.writerow(["stage", "mean", "std", "failed", "seconds"] + [f"repeat_{r}" for r in range(n)])
        for s in self.stages:
            w.writerow([s.stage, _fmt(s.mean), _fmt(s.std), s.failed, f"{sum(s.seconds):.1f}"]
                       + ["" if a is None else repr(a) for a in s.accuracies])
        return buf.getvalue()

    def to_text(self) -> str:
        name = self.config.get("name") or self.config.get("dataset", "")
        head = ["stage", "accuracy (%)", "failed", "time (s)"]
        rows = [[s.stage, f"{100 * s.mean:.2f} ± {100 * s.std:.2f}", str(s.failed),
                 f"{sum(s.seconds):.1f}"] for s in self.stages]
        widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
        line = lambda r: "  ".join(c.ljust(wd) for c, wd in zip(r, widths)).rstrip()
        out = [f"dataset: {name}  repeats: {self.config.get('repeats')}  "
               f"seed: {self.config.get('seed')}  (mean ± population std)", line(head),
               line(["-" * wd for wd in widths])]
        out += [line(r) for r in rows]
        for s in self.stages:
            for r, e in enumerate(s.errors):
                if e:
                    out.append(f"! {s.stage} repeat {r}: {e}")
        return "\n".join(out) + "\n"

    def write(self, out) -> list:
        """Write ``<out>.csv``, ``<out>.txt`` and ``<out>.json``; returns the paths."""
        base = Path(out)
        if base.suffix in (".csv", ".txt", ".json"):
            base = base.with_suffix("")
        base.parent.mkdir(parents=True, exist_ok=True)
        paths = []
        for ext, text in ((".csv", self.to_csv()), (".txt", self.to_text()),
                          (".json", self.to_json())):
            p = base.with_suffix(ext)
            p.write_text(text)
            paths.append(p)
        return paths


def _fmt(x: float) -> str:
    return "nan" if x != x else repr(x)
