"""File formats: density JSON, plan/support CSV, and run manifests.

Densities travel as human-inspectable JSON with complex entries encoded as
[re, im] pairs; bulk plan and plotting data use CSV so any external tool
can consume them. All writes are atomic (temp file + rename).
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .full import FullTransportPlan, MatrixDensity, SolverConfig
from .hermitian import asymmetry

LOAD_HERMITIAN_TOL = 1e-9


class InputError(ValueError):
    """Malformed or inconsistent input file."""


def _atomic_write(path: str, write_fn) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-matrixot-")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            write_fn(handle)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_density(path: str, mu: MatrixDensity) -> None:
    doc = {
        "n": mu.dim,
        "grid": mu.grid.tolist(),
        "blocks": [
            [[[float(v.real), float(v.imag)] for v in row] for row in block]
            for block in mu.blocks
        ],
    }
    _atomic_write(path, lambda h: json.dump(doc, h, indent=1))


def load_density(path: str) -> MatrixDensity:
    try:
        with open(path) as handle:
            doc = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read density file {path}: {exc}") from exc
    try:
        n = int(doc["n"])
        grid = np.asarray(doc["grid"], dtype=np.float64)
        raw = np.asarray(doc["blocks"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed density file {path}: {exc}") from exc
    if raw.ndim != 4 or raw.shape[1:] != (n, n, 2):
        raise InputError(
            f"{path}: blocks must be (len(grid), {n}, {n}, 2) re/im entries"
        )
    if raw.shape[0] != grid.size:
        raise InputError(f"{path}: block count does not match grid length")
    blocks = raw[..., 0] + 1j * raw[..., 1]
    if asymmetry(blocks) > LOAD_HERMITIAN_TOL:
        raise InputError(
            f"{path}: blocks deviate from Hermitian beyond {LOAD_HERMITIAN_TOL:g}"
        )
    try:
        return MatrixDensity(grid, blocks)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def save_plan_csv(path: str, plan: FullTransportPlan) -> None:
    """One row per cell: indices, coordinates, mass, block entries (re/im)."""
    n = plan.dim

    def write(handle):
        writer = csv.writer(handle)
        header = ["i", "j", "x", "y", "mass"]
        for tag in ("b0", "b1"):
            for k in range(n):
                for l in range(n):
                    header += [f"{tag}_{k}{l}_re", f"{tag}_{k}{l}_im"]
        writer.writerow(header)
        for i in range(plan.source_grid.size):
            for j in range(plan.target_grid.size):
                row = [
                    i, j,
                    repr(float(plan.source_grid[i])),
                    repr(float(plan.target_grid[j])),
                    repr(float(plan.mass[i, j])),
                ]
                for blocks in (plan.block0, plan.block1):
                    for k in range(n):
                        for l in range(n):
                            v = blocks[i, j, k, l]
                            row += [repr(float(v.real)), repr(float(v.imag))]
                writer.writerow(row)

    _atomic_write(path, write)


def load_plan_csv(path: str) -> FullTransportPlan:
    try:
        with open(path, newline="") as handle:
            rows = list(csv.reader(handle))
    except OSError as exc:
        raise InputError(f"cannot read plan file {path}: {exc}") from exc
    if not rows or len(rows) < 2:
        raise InputError(f"{path}: empty plan file")
    header = rows[0]
    base = ["i", "j", "x", "y", "mass"]
    if header[: len(base)] != base:
        raise InputError(f"{path}: unexpected plan header {header[:5]}")
    n_entries = (len(header) - len(base)) // 2  # re/im pairs over both blocks
    n = int(round((n_entries / 2) ** 0.5))
    if 2 * 2 * n * n != len(header) - len(base):
        raise InputError(f"{path}: cannot infer block dimension from header")
    cells = {}
    xs, ys = {}, {}
    for row in rows[1:]:
        if not row:
            continue
        i, j = int(row[0]), int(row[1])
        xs[i] = float(row[2])
        ys[j] = float(row[3])
        vals = np.asarray([float(v) for v in row[4:]])
        cells[(i, j)] = vals
    ni, nj = max(xs) + 1, max(ys) + 1
    if len(xs) != ni or len(ys) != nj or len(cells) != ni * nj:
        raise InputError(f"{path}: plan grid has holes")
    source = np.array([xs[i] for i in range(ni)])
    target = np.array([ys[j] for j in range(nj)])
    mass = np.zeros((ni, nj))
    b0 = np.zeros((ni, nj, n, n), dtype=np.complex128)
    b1 = np.zeros_like(b0)
    for (i, j), vals in cells.items():
        mass[i, j] = vals[0]
        flat = vals[1:].reshape(2, n * n, 2)
        b0[i, j] = (flat[0, :, 0] + 1j * flat[0, :, 1]).reshape(n, n)
        b1[i, j] = (flat[1, :, 0] + 1j * flat[1, :, 1]).reshape(n, n)
    try:
        return FullTransportPlan(source, target, mass, b0, b1)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def save_support_csv(path: str, points: np.ndarray) -> None:
    def write(handle):
        writer = csv.writer(handle)
        writer.writerow(["x", "y", "mass"])
        for x, y, m in points:
            writer.writerow([repr(float(x)), repr(float(y)), repr(float(m))])

    _atomic_write(path, write)


def save_channel_csv(path: str, taus, densities) -> None:
    """Long-format trajectory: tau, theta, channel, magnitude, phase."""

    def write(handle):
        writer = csv.writer(handle)
        writer.writerow(["tau", "theta", "channel", "magnitude", "phase"])
        for tau, mu in zip(taus, densities):
            n = mu.dim
            for p, theta in enumerate(mu.grid):
                for k in range(n):
                    for l in range(n):
                        v = mu.blocks[p, k, l]
                        writer.writerow([
                            repr(float(tau)),
                            repr(float(theta)),
                            f"{k + 1}{l + 1}",
                            repr(float(abs(v))),
                            repr(float(np.angle(v))),
                        ])

    _atomic_write(path, write)


@dataclass
class RunManifest:
    """Record of one solve: config, input digests, and outcome."""

    command: str
    version: str
    timestamp_utc: str
    inputs: dict
    config: dict
    results: dict = field(default_factory=dict)

    @classmethod
    def create(cls, command: str, input_paths: list[str], cfg: SolverConfig,
               extra_config: dict | None = None) -> "RunManifest":
        from . import __version__

        config = asdict(cfg)
        config.update(extra_config or {})
        return cls(
            command=command,
            version=__version__,
            timestamp_utc=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            inputs={p: file_digest(p) for p in input_paths},
            config=config,
        )

    def write(self, path: str) -> None:
        _atomic_write(path, lambda h: json.dump(asdict(self), h, indent=1))


def load_manifest(path: str) -> dict:
    with open(path) as handle:
        return json.load(handle)
