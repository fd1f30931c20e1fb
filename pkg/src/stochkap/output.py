"""Artifact writers, the output manifest and on-disk result stores.

Tabular outputs are CSV with a single header row; units are part of the
column names (``x_cm``, ``T_mean_K``). Floats are written with ``repr`` so
that they round-trip exactly and identical runs give identical bytes.
"""

import csv
import hashlib
import json
import platform
from pathlib import Path

import numpy as np
import scipy

from .driver import IterationRecord, MCResult, MixedChaosExpansion, PCResult
from .errors import UsageError
from .reduced import ChaosExpansion, ReducedExpansion

__all__ = [
    "OutputDir",
    "save_pc_store",
    "load_pc_store",
    "save_mc_store",
    "load_mc_store",
    "PC_STORE",
    "MC_STORE",
]

PC_STORE = "pce_store.npz"
MC_STORE = "mc_store.npz"
MANIFEST = "manifest.json"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _versions():
    from . import __version__

    return {
        "stochkap": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


class OutputDir:
    """Directory collecting the artifacts of one subcommand.

    Every file written through this object is listed in ``manifest.json``
    together with its SHA-256, the producing command and the config hash.
    """

    def __init__(self, path):
        self.root = Path(path)
        self.root.mkdir(parents=True, exist_ok=True)
        self.written = []

    def path(self, name):
        return self.root / name

    def track(self, name):
        """Register ``name`` for the manifest and return its path."""
        if name not in self.written:
            self.written.append(name)
        return self.path(name)

    def csv(self, name, header, rows):
        with open(self.track(name), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])

    def json(self, name, obj):
        with open(self.track(name), "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def finalize(self, command, cfg_hash):
        """Merge this command's files into the manifest and return its path."""
        path = self.path(MANIFEST)
        manifest = {"commands": {}, "files": {}}
        if path.exists():
            try:
                with open(path, encoding="utf-8") as fh:
                    manifest = json.load(fh)
            except json.JSONDecodeError:
                pass
        manifest["versions"] = _versions()
        manifest.setdefault("commands", {})[command] = {
            "config_hash": cfg_hash,
            "files": list(self.written),
        }
        files = manifest.setdefault("files", {})
        for name in self.written:
            files[name] = {
                "command": command,
                "sha256": _sha256(self.path(name)),
                "bytes": self.path(name).stat().st_size,
            }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _record_from_dict(data):
    return IterationRecord(**data)


def save_pc_store(path, result, model_hash, cfg_hash):
    """Write every iteration's expansions to a compressed ``.npz`` file."""
    arrays = {f"T_{i}": h["T"].coefficients for i, h in enumerate(result.history)}
    t = result.history[-1]["T"]
    meta = {
        "model_hash": model_hash,
        "config_hash": cfg_hash,
        "T": {"xi_dim": t.xi_dim, "zeta_dim": t.zeta_dim, "degree": t.degree},
        "records": [r.to_dict() for r in result.records],
        "reduced": [h["reduced"].to_dict() for h in result.history],
        "Phi": [h["Phi"].to_dict() for h in result.history],
    }
    with open(path, "wb") as fh:
        np.savez_compressed(fh, meta=np.array(json.dumps(meta)), **arrays)
    return meta


def load_pc_store(path):
    """Inverse of :func:`save_pc_store`; returns ``(PCResult, meta)``."""
    if not Path(path).exists():
        raise FileNotFoundError(f"{path}: PC store not found; run `stochkap pce` first")
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        t = meta["T"]
        history = []
        for i, (red, phi) in enumerate(zip(meta["reduced"], meta["Phi"])):
            history.append(
                {
                    "T": ChaosExpansion(t["xi_dim"], t["zeta_dim"], t["degree"], data[f"T_{i}"]),
                    "reduced": ReducedExpansion.from_dict(red),
                    "Phi": MixedChaosExpansion.from_dict(phi),
                }
            )
    if not history:
        raise UsageError(f"{path}: PC store holds no iterations")
    records = [_record_from_dict(r) for r in meta["records"]]
    last = history[-1]
    result = PCResult(last["T"], last["Phi"], last["reduced"], records, history, {}, None)
    return result, meta


_MC_FIELDS = ("xi", "zeta", "T", "Phi", "failed", "T_updates", "Phi_updates")


def save_mc_store(path, mc, model_hash, cfg_hash):
    meta = {"model_hash": model_hash, "config_hash": cfg_hash}
    with open(path, "wb") as fh:
        np.savez_compressed(
            fh,
            meta=np.array(json.dumps(meta)),
            **{name: getattr(mc, name) for name in _MC_FIELDS},
        )
    return meta


def load_mc_store(path):
    """Inverse of :func:`save_mc_store`; returns ``(MCResult, meta)``."""
    if not Path(path).exists():
        raise FileNotFoundError(f"{path}: MC store not found; run `stochkap mc` first")
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        mc = MCResult(**{name: data[name] for name in _MC_FIELDS})
    return mc, meta
