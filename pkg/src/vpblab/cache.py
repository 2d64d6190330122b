"""Deterministic binary caches for operator data and solver checkpoints.

Format: magic + version header, a JSON manifest (array names, dtypes, shapes,
metadata, payload sha256), then raw C-order array bytes.  Writing the same
arrays always produces identical bytes, so cache hits can be compared
bit-for-bit against regeneration; the checksum guards against truncation and
corruption.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .basis import HermiteBasis, MomentVectors, QuadratureGrid, build_basis, thirteen_moments
from .collisions import (
    CollisionOperators,
    Projections,
    assemble_operators,
    build_projections,
)
from .errors import CacheError
from .transport import TransportCoefficients, compute_coefficients

_MAGIC = b"VPBLAB\x00"
CACHE_VERSION = 1


def save_arrays(path: Path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    path = Path(path)
    names = sorted(arrays)
    payload = b"".join(np.ascontiguousarray(arrays[k]).tobytes() for k in names)
    manifest = {
        "version": CACHE_VERSION,
        "meta": meta,
        "arrays": [
            {
                "name": k,
                "dtype": str(arrays[k].dtype),
                "shape": list(arrays[k].shape),
            }
            for k in names
        ],
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    blob = json.dumps(manifest, sort_keys=True).encode()
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", CACHE_VERSION, len(blob)))
        fh.write(blob)
        fh.write(payload)
    tmp.replace(path)


def load_arrays(path: Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CacheError(f"cannot read cache file {path}: {exc}") from exc
    if raw[: len(_MAGIC)] != _MAGIC:
        raise CacheError(f"{path} is not a vpblab cache file")
    ver, blob_len = struct.unpack_from("<II", raw, len(_MAGIC))
    if ver != CACHE_VERSION:
        raise CacheError(f"{path}: cache version {ver} != supported {CACHE_VERSION}")
    off = len(_MAGIC) + 8
    manifest = json.loads(raw[off : off + blob_len])
    payload = raw[off + blob_len :]
    if hashlib.sha256(payload).hexdigest() != manifest["sha256"]:
        raise CacheError(f"{path}: payload checksum mismatch (corrupt cache)")
    arrays = {}
    cursor = 0
    for entry in manifest["arrays"]:
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = dt.itemsize * count
        arrays[entry["name"]] = np.frombuffer(
            payload[cursor : cursor + nbytes], dtype=dt
        ).reshape(entry["shape"]).copy()
        cursor += nbytes
    return arrays, manifest["meta"]


# ----------------------------------------------------------------------------
# operator suite
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class OperatorSuite:
    """Everything velocity-space: basis, collision operators, projections, transport."""

    basis: HermiteBasis
    ops: CollisionOperators
    moments: MomentVectors
    projections: Projections
    transport: TransportCoefficients


def build_suite(
    K: int = 4,
    quad_order: int = 16,
    *,
    cross_section: float = 1.0,
    rule_scale: float = 1.0,
    certify: bool = True,
) -> OperatorSuite:
    basis = build_basis(K, quad_order)
    ops = assemble_operators(
        basis, cross_section=cross_section, rule_scale=rule_scale, certify=certify
    )
    moments = thirteen_moments(basis)
    projections = build_projections(moments)
    transport = compute_coefficients(basis, ops, moments, projections)
    return OperatorSuite(basis, ops, moments, projections, transport)


def basis_cache_path(cache_dir: Path, K: int, quad_order: int) -> Path:
    return Path(cache_dir) / f"basis_K{K}_q{quad_order}_v{CACHE_VERSION}.vpb"


def suite_cache_path(
    cache_dir: Path, K: int, quad_order: int, cross_section: float, rule_scale: float
) -> Path:
    return (
        Path(cache_dir)
        / f"ops_K{K}_q{quad_order}_cs{cross_section:g}_rs{rule_scale:g}_v{CACHE_VERSION}.vpb"
    )


def save_basis(basis: HermiteBasis, path: Path) -> None:
    arrays = {
        "index_map": np.asarray(basis.index_map, dtype=np.int64),
        "V": basis.V,
        "D": basis.D,
        "nu_gram": basis.nu_gram,
        "nodes": basis.grid.nodes,
        "weights": basis.grid.weights,
        "values_at_grid": basis.values_at_grid,
    }
    save_arrays(path, arrays, {"K": basis.K, "quad_order": basis.quad_order, "kind": "basis"})


def load_basis(path: Path) -> HermiteBasis:
    arrays, meta = load_arrays(path)
    if meta.get("kind") != "basis":
        raise CacheError(f"{path} does not hold a basis cache")
    grid = QuadratureGrid(
        nodes=arrays["nodes"],
        weights=arrays["weights"],
        order_per_axis=int(meta["quad_order"]),
    )
    index_map = tuple(tuple(int(x) for x in row) for row in arrays["index_map"])
    return HermiteBasis(
        K=int(meta["K"]),
        quad_order=int(meta["quad_order"]),
        index_map=index_map,
        dim=len(index_map),
        V=arrays["V"],
        D=arrays["D"],
        nu_gram=arrays["nu_gram"],
        grid=grid,
        values_at_grid=arrays["values_at_grid"],
    )


def save_suite(suite: OperatorSuite, path: Path) -> None:
    basis = suite.basis
    ops = suite.ops
    arrays = {
        "index_map": np.asarray(basis.index_map, dtype=np.int64),
        "V": basis.V,
        "D": basis.D,
        "nu_gram": basis.nu_gram,
        "nodes": basis.grid.nodes,
        "weights": basis.grid.weights,
        "values_at_grid": basis.values_at_grid,
        "B_tensor": ops.B_tensor,
    }
    meta = {
        "kind": "suite",
        "K": basis.K,
        "quad_order": basis.quad_order,
        "cross_section": ops.cross_section,
        "sphere_rule": ops.sphere_rule,
        "symmetry_defect": ops.symmetry_defect,
    }
    save_arrays(path, arrays, meta)


def load_suite(path: Path) -> OperatorSuite:
    arrays, meta = load_arrays(path)
    if meta.get("kind") != "suite":
        raise CacheError(f"{path} does not hold an operator-suite cache")
    grid = QuadratureGrid(
        nodes=arrays["nodes"],
        weights=arrays["weights"],
        order_per_axis=int(meta["quad_order"]),
    )
    index_map = tuple(tuple(int(x) for x in row) for row in arrays["index_map"])
    basis = HermiteBasis(
        K=int(meta["K"]),
        quad_order=int(meta["quad_order"]),
        index_map=index_map,
        dim=len(index_map),
        V=arrays["V"],
        D=arrays["D"],
        nu_gram=arrays["nu_gram"],
        grid=grid,
        values_at_grid=arrays["values_at_grid"],
    )
    tensor = arrays["B_tensor"]
    l2_raw = -2.0 * tensor[:, :, 0]
    l1_raw = l2_raw - 2.0 * tensor[:, 0, :]
    ops = CollisionOperators(
        K=basis.K,
        dim=basis.dim,
        Q_tensor=tensor + tensor.transpose(0, 2, 1),
        B_tensor=tensor,
        L1=0.5 * (l1_raw + l1_raw.T),
        L2=0.5 * (l2_raw + l2_raw.T),
        L1_cross=-2.0 * (tensor[:, :, 0] - tensor[:, 0, :]),
        sphere_rule=meta["sphere_rule"],
        cross_section=float(meta["cross_section"]),
        symmetry_defect=float(meta["symmetry_defect"]),
    )
    moments = thirteen_moments(basis)
    projections = build_projections(moments)
    transport = compute_coefficients(basis, ops, moments, projections)
    return OperatorSuite(basis, ops, moments, projections, transport)


def save_checkpoint(path: Path, state, config_echo: dict) -> None:
    """Binary kinetic-state checkpoint with a versioned header for restart."""
    arrays = {"f": state.f, "g": state.g, "phi": state.phi}
    meta = {
        "kind": "checkpoint",
        "t": state.t,
        "epsilon": state.epsilon,
        "config": config_echo,
    }
    save_arrays(path, arrays, meta)


def load_checkpoint(path: Path):
    """Returns (state, config_echo); see kinetic.KineticState."""
    from .kinetic import KineticState

    arrays, meta = load_arrays(path)
    if meta.get("kind") != "checkpoint":
        raise CacheError(f"{path} does not hold a state checkpoint")
    state = KineticState(
        t=float(meta["t"]),
        epsilon=float(meta["epsilon"]),
        f=arrays["f"],
        g=arrays["g"],
        phi=arrays["phi"],
    )
    return state, meta["config"]


def load_or_build_suite(
    cache_dir: Path | None,
    K: int = 4,
    quad_order: int = 16,
    *,
    cross_section: float = 1.0,
    rule_scale: float = 1.0,
    certify: bool = True,
) -> OperatorSuite:
    """Load the suite from cache if present, else assemble and cache it."""
    if cache_dir is None:
        return build_suite(
            K, quad_order, cross_section=cross_section, rule_scale=rule_scale, certify=certify
        )
    path = suite_cache_path(Path(cache_dir), K, quad_order, cross_section, rule_scale)
    if path.exists():
        return load_suite(path)
    suite = build_suite(
        K, quad_order, cross_section=cross_section, rule_scale=rule_scale, certify=certify
    )
    save_suite(suite, path)
    return suite
