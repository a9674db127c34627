"""Parameter checkpoints: one ORDT file per slot plus a text manifest.

``manifest.txt`` has one line per tensor::

    <name> <dim0>x<dim1>x... <trainable 0|1> <kind param|buffer>

Tensors are stored as f32, so a reloaded checkpoint matches the saved one
to single precision.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from ..errors import ArgumentError
from ..tensorcore import load_ordt, ordt_dumps
from .model import Network

MANIFEST = "manifest.txt"


def _tensor_items(net: Network):
    for name, t in net.params.items():
        yield name, t, "param"
    for name, t in net.buffers.items():
        yield name, t, "buffer"


def checkpoint_hash(net: Network) -> str:
    h = hashlib.sha256()
    for name, t, kind in _tensor_items(net):
        h.update(f"{kind}:{name}".encode())
        h.update(ordt_dumps(t))
    return h.hexdigest()[:16]


def save_checkpoint(net: Network, directory) -> str:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = []
    for name, t, kind in _tensor_items(net):
        (d / f"{name}.ordt").write_bytes(ordt_dumps(t))
        dims = "x".join(str(s) for s in t.shape)
        flag = int(net.trainable.get(name, False)) if kind == "param" else 0
        lines.append(f"{name} {dims} {flag} {kind}")
    (d / MANIFEST).write_text("\n".join(lines) + "\n")
    return checkpoint_hash(net)


def load_checkpoint(directory, cfg) -> Network:
    d = Path(directory)
    params, buffers, trainable = {}, {}, {}
    for line in (d / MANIFEST).read_text().splitlines():
        if not line.strip():
            continue
        name, dims, flag, kind = line.split()
        t = load_ordt(d / f"{name}.ordt")
        expected = tuple(int(s) for s in dims.split("x")) if dims else ()
        if t.shape != expected:
            raise ArgumentError(f"{name}: manifest says {expected}, file holds {t.shape}")
        if kind == "param":
            params[name] = t
            trainable[name] = flag == "1"
        else:
            buffers[name] = t
    return Network(cfg, params, buffers, trainable)
