"""Self-supervised data collection: random actions on a chained oracle surface."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..actions import (
    Action,
    ActionBounds,
    action_from_dict,
    denormalize,
    sample_units,
    vector_to_action,
)
from ..field import HeightField, bilinear_tolerance
from ..io import quantize_f32, read_hfd, read_hfd_array, write_hfd, write_hfd_array
from ..warp import DEFAULT_PATCH, canonical_values, from_canonical
from .materials import MaterialSpec, ToolProfile
from .oracle import DEFAULT_BOUNDS, apply_action, scan

MANIFEST = "manifest.json"


class DatasetError(RuntimeError):
    pass


def _q32(a: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=np.float32).astype(np.float64)


@dataclass
class Record:
    action: Action
    before: HeightField
    after: HeightField
    patch_before: np.ndarray
    patch_delta: np.ndarray


@dataclass
class Dataset:
    records: list[Record]
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    @property
    def kind(self) -> str:
        return self.meta.get("kind", "push")

    @property
    def bounds(self) -> ActionBounds:
        b = self.meta.get("bounds")
        return ActionBounds(**b) if b else DEFAULT_BOUNDS

    def subset(self, indices) -> "Dataset":
        return Dataset([self.records[i] for i in indices], dict(self.meta))

    def split(self, val_fraction: float = 0.1, seed: int = 0) -> tuple["Dataset", "Dataset"]:
        """Seeded shuffle then a (1 - f) / f train/validation cut."""
        n = len(self)
        order = np.random.default_rng(seed).permutation(n)
        n_val = max(1, int(round(n * val_fraction))) if n > 1 else 0
        return self.subset(order[n_val:]), self.subset(order[:n_val])

    def arrays(self) -> dict:
        """Stacked canonical training tensors as numpy arrays."""
        return {
            "patch_before": np.stack([r.patch_before for r in self.records]),
            "patch_delta": np.stack([r.patch_delta for r in self.records]),
            "shape": np.array([r.action.shape_params for r in self.records]),
        }

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for r in self.records:
            h.update(json.dumps(r.action.to_dict(), sort_keys=True).encode())
            h.update(r.patch_before.astype("<f4").tobytes())
            h.update(r.patch_delta.astype("<f4").tobytes())
        return h.hexdigest()[:16]

    def save(self, out_dir) -> str:
        """Write records and the manifest; returns the manifest path."""
        try:
            os.makedirs(out_dir, exist_ok=True)
            entries = []
            for i, r in enumerate(self.records):
                name = f"record_{i:05d}"
                rdir = os.path.join(out_dir, name)
                os.makedirs(rdir, exist_ok=True)
                cs, d_max = r.before.cell_size, r.before.d_max
                write_hfd(os.path.join(rdir, "before.hfd"), r.before)
                write_hfd(os.path.join(rdir, "after.hfd"), r.after)
                write_hfd_array(os.path.join(rdir, "patch_before.hfd"), r.patch_before, cs, d_max)
                write_hfd_array(os.path.join(rdir, "patch_delta.hfd"), r.patch_delta, cs, d_max)
                with open(os.path.join(rdir, "action.json"), "w") as f:
                    json.dump(r.action.to_dict(), f, sort_keys=True, indent=1)
                entries.append({"id": i, "dir": name, "action": r.action.to_dict()})
            manifest = dict(self.meta, n=len(self.records), records=entries)
            path = os.path.join(out_dir, MANIFEST)
            with open(path, "w") as f:
                json.dump(manifest, f, sort_keys=True, indent=1)
        except OSError as e:
            raise DatasetError(f"cannot write dataset to {out_dir}: {e}") from e
        return path


def load_dataset(path) -> Dataset:
    """Load from a dataset directory or its manifest file."""
    manifest_path = os.path.join(path, MANIFEST) if os.path.isdir(path) else path
    root = os.path.dirname(manifest_path)
    try:
        with open(manifest_path) as f:
            manifest = json.load(f)
        records = []
        for entry in manifest["records"]:
            rdir = os.path.join(root, entry["dir"])
            with open(os.path.join(rdir, "action.json")) as f:
                action = action_from_dict(json.load(f))
            records.append(
                Record(
                    action=action,
                    before=read_hfd(os.path.join(rdir, "before.hfd")),
                    after=read_hfd(os.path.join(rdir, "after.hfd")),
                    patch_before=read_hfd_array(os.path.join(rdir, "patch_before.hfd"))[0],
                    patch_delta=read_hfd_array(os.path.join(rdir, "patch_delta.hfd"))[0],
                )
            )
    except (OSError, KeyError, ValueError) as e:
        raise DatasetError(f"cannot load dataset from {path}: {e}") from e
    meta = {k: v for k, v in manifest.items() if k not in ("records", "n")}
    return Dataset(records, meta)


def make_record(before: HeightField, after: HeightField, action: Action, patch_side: int) -> Record:
    cs = before.cell_size
    return Record(
        action=action,
        before=before,
        after=after,
        patch_before=_q32(canonical_values(before.depths, cs, action, patch_side)),
        patch_delta=_q32(canonical_values(after.depths - before.depths, cs, action, patch_side)),
    )


def generate_dataset(
    initial: HeightField,
    n: int,
    material: MaterialSpec,
    tool: ToolProfile,
    seed: int,
    out_dir=None,
    bounds: ActionBounds = DEFAULT_BOUNDS,
    reset_every: int = 25,
    patch_side: int = DEFAULT_PATCH,
) -> Dataset:
    """Collect ``n`` (before, action, after) records from uniformly sampled actions.

    Each action acts on the previous result; every ``reset_every`` actions the
    surface returns to ``initial``. All stored values are f32-representable so a
    dataset reloaded from disk is bit-identical to the in-memory one.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise DatasetError(f"need at least one sample, got {n!r}")
    if reset_every < 1:
        raise DatasetError("reset_every must be >= 1")
    kind = "pinch" if tool.mode == "gripper-pair" else "push"
    ss = np.random.SeedSequence(seed)
    action_rng = np.random.default_rng(ss.spawn(1)[0])
    scan_seeds = ss.generate_state(2 * n + 2, dtype=np.uint32)

    records = []
    state = None
    for i in range(n):
        if i % reset_every == 0:
            state = quantize_f32(scan(initial, material, int(scan_seeds[2 * i + 1])))
        units = sample_units(action_rng, 1, bounds)[0]
        action = vector_to_action(denormalize(units, bounds, kind), kind)
        after = quantize_f32(apply_action(state, action, material, tool, int(scan_seeds[2 * i]), bounds))
        records.append(make_record(state, after, action, patch_side))
        state = after

    meta = {
        "version": 1,
        "kind": kind,
        "material": material.to_dict(),
        "tool": tool.to_dict(),
        "bounds": bounds.to_dict(),
        "seed": int(seed),
        "reset_every": reset_every,
        "patch_side": patch_side,
    }
    ds = Dataset(records, meta)
    if out_dir is not None:
        ds.save(out_dir)
    return ds


def record_residual(record: Record) -> tuple[float, float]:
    """(max |before + placed delta - after|, tolerance) for one record.

    The tolerance allows two bilinear resamplings of the true delta plus the
    scan noise that sits outside the patch.
    """
    cs = record.before.cell_size
    delta = record.after.depths - record.before.depths
    rebuilt = record.before.depths + from_canonical(record.patch_delta, record.action, record.before.shape, cs)
    resid = float(np.max(np.abs(rebuilt - record.after.depths)))
    noise = float(record_noise_floor(delta))
    return resid, 2.0 * bilinear_tolerance(delta) + 8.0 * noise + 1e-4


def record_noise_floor(delta: np.ndarray) -> float:
    """Robust std of the delta far from the action (median absolute deviation)."""
    flat = np.asarray(delta).ravel()
    mad = np.median(np.abs(flat - np.median(flat)))
    return 1.4826 * mad
