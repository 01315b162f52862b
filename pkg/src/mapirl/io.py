"""Demonstration (JSON Lines) and fitted-parameter (JSON) files."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

from mapirl.core import DemonstrationSet, DomainError, Trajectory

FORMAT_VERSION = 1
PARAM_KEYS = ("model", "beta", "gamma", "ridge", "w_Q", "feature_spec", "objective", "converged")

PathLike = Union[str, Path]


class DemoFormatError(ValueError):
    def __init__(self, path, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.line = line


def write_demos(D: DemonstrationSet, path: PathLike) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"env": D.env_tag, "version": FORMAT_VERSION}) + "\n")
        for t in D:
            rec = {"states": list(t.states), "actions": list(t.actions), "terminal_included": t.terminal_included}
            fh.write(json.dumps(rec) + "\n")


def read_demos(path: PathLike) -> DemonstrationSet:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DemoFormatError(path, 1, "missing header line")
    try:
        header = json.loads(lines[0])
        env = header["env"]
        version = header["version"]
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise DemoFormatError(path, 1, f"bad header ({e})") from None
    if version != FORMAT_VERSION:
        raise DemoFormatError(path, 1, f"unsupported version {version}")
    trajectories = []
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            traj = Trajectory(
                tuple(rec["states"]), tuple(rec["actions"]), terminal_included=bool(rec["terminal_included"])
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, DomainError) as e:
            raise DemoFormatError(path, n, str(e)) from None
        trajectories.append(traj)
    return DemonstrationSet(tuple(trajectories), env)


def write_params(doc: dict, path: PathLike) -> None:
    missing = [k for k in PARAM_KEYS if k not in doc]
    if missing:
        raise ValueError(f"parameter document lacks {missing}")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_params(path: PathLike) -> dict:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise DemoFormatError(path, e.lineno, e.msg) from None
    missing = [k for k in PARAM_KEYS if k not in doc]
    if missing or doc["model"] not in ("lrp", "lpo") or (doc["model"] == "lrp" and "w_R" not in doc):
        raise DemoFormatError(path, 1, f"not a parameter document (missing {missing or ['w_R']})")
    return doc
