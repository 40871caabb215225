"""Instance files, CSV emission and deterministic serialization helpers.

Instances are stored one per JSON file; CSVs are written with repr-exact
floats so a rerun with the same seeds reproduces identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .opswtw import OpswtwInstance
from .routing import CVRP, MTSP, TSP, RoutingInstance

OPSWTW_FORMAT = "opswtw-instance"
ROUTING_FORMAT = "routing-instance"


def _dump_json(path: Path, payload: dict[str, Any]) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, separators=(",", ": "),
                               indent=1) + "\n")


def save_instance(path: str | Path, instance: OpswtwInstance | RoutingInstance) -> None:
    path = Path(path)
    if isinstance(instance, OpswtwInstance):
        payload = {
            "format": OPSWTW_FORMAT,
            "version": 1,
            "n": instance.n,
            "coords": instance.coords.tolist(),
            "prizes": instance.prizes.tolist(),
            "tw_open": instance.tw_open.tolist(),
            "tw_close": instance.tw_close.tolist(),
            "max_tour": instance.max_tour,
            "beta": instance.beta,
        }
    else:
        payload = {
            "format": ROUTING_FORMAT,
            "version": 1,
            "variant": instance.variant,
            "n": len(instance.coords) if instance.variant == TSP else instance.n_customers,
            "coords": instance.coords.tolist(),
            "demands": None if instance.demands is None else instance.demands.tolist(),
            "capacity": instance.capacity,
            "salesmen": instance.salesmen,
        }
    _dump_json(path, payload)


def load_instance(path: str | Path) -> OpswtwInstance | RoutingInstance:
    payload = json.loads(Path(path).read_text())
    fmt = payload.get("format")
    if fmt == OPSWTW_FORMAT:
        return OpswtwInstance(coords=np.asarray(payload["coords"]),
                              prizes=np.asarray(payload["prizes"]),
                              tw_open=np.asarray(payload["tw_open"]),
                              tw_close=np.asarray(payload["tw_close"]),
                              max_tour=float(payload["max_tour"]),
                              beta=int(payload["beta"]))
    if fmt == ROUTING_FORMAT:
        demands = payload.get("demands")
        return RoutingInstance(variant=payload["variant"],
                               coords=np.asarray(payload["coords"]),
                               demands=None if demands is None else np.asarray(demands),
                               capacity=payload.get("capacity"),
                               salesmen=payload.get("salesmen"))
    raise ValueError(f"{path}: unknown instance format {fmt!r}")


def instance_filename(problem: str, size: int, seed: int, index: int) -> str:
    return f"{problem}-{size}-s{seed}-{index:04d}.json"


def load_instance_dir(path: str | Path) -> list[tuple[str, Any]]:
    """All instances in a directory, sorted by filename for stable order."""
    files = sorted(Path(path).glob("*.json"))
    if not files:
        raise ValueError(f"no instance files found under {path}")
    return [(f.stem, load_instance(f)) for f in files]


def format_cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: str | Path, header: Sequence[str],
              rows: Iterable[Sequence[Any]]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(format_cell(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path} is empty")
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:] if line]
