"""Run outputs and reproducibility plumbing.

Everything written here must be byte-stable across identical runs:
floats use repr (shortest round-trip form), times use fixed six-decimal
seconds, and every file is emitted in one canonical sort order. The
manifest is the only file allowed to differ between runs, and only in
its wall_clock_s field.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Mapping


class IoFailure(Exception):
    pass


def fmt_time(seconds: float) -> str:
    return f"{seconds:.6f}"


def fmt_value(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def substream(root_seed: int, label: str) -> int:
    """Stable 64-bit sub-seed; new labels never disturb existing streams."""
    digest = hashlib.sha256(f"{root_seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class ResultStore:
    """Scalar and time-series collection for one run."""

    def __init__(self) -> None:
        self._scalars: dict[tuple[str, str], object] = {}
        self._vectors: dict[tuple[str, str], list[tuple[float, object]]] = {}

    def add_scalar(self, module: str, name: str, value) -> None:
        self._scalars[(module, name)] = value

    def append_vector(self, module: str, name: str, time_s: float, value) -> None:
        series = self._vectors.setdefault((module, name), [])
        if series and time_s <= series[-1][0]:
            raise ValueError(
                f"vector {module}/{name}: time {time_s} not after {series[-1][0]}"
            )
        series.append((time_s, value))

    def scalar(self, module: str, name: str):
        return self._scalars[(module, name)]

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        sca = out / "result.sca"
        vec = out / "result.vec"
        try:
            out.mkdir(parents=True, exist_ok=True)
            with sca.open("w", encoding="utf-8", newline="\n") as fh:
                fh.write("# module name value\n")
                for (module, name) in sorted(self._scalars):
                    fh.write(f"{module} {name} {fmt_value(self._scalars[(module, name)])}\n")
            with vec.open("w", encoding="utf-8", newline="\n") as fh:
                fh.write("module,name,time_s,value\n")
                for (module, name) in sorted(self._vectors):
                    for time_s, value in self._vectors[(module, name)]:
                        fh.write(f"{module},{name},{fmt_time(time_s)},{fmt_value(value)}\n")
        except OSError as exc:
            raise IoFailure(str(exc)) from None
        return sca, vec


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    out_dir: str | Path,
    flags: Mapping[str, object],
    seed: int,
    inputs: Mapping[str, str | Path],
    wall_clock_s: float,
) -> Path:
    doc = {
        "flags": dict(sorted(flags.items())),
        "seed": seed,
        "inputs": {name: file_sha256(p) for name, p in sorted(inputs.items())},
        "wall_clock_s": round(wall_clock_s, 3),
    }
    path = Path(out_dir) / "manifest.json"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(exc)) from None
    return path
