"""Run configuration: defaults, flat key=value config files, and content
fingerprints for artifact consistency checks.

Precedence: command-line flags override config-file values, which override
the defaults below. Every pipeline stage writes its resolved config next to
its outputs.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass, field


@dataclass
class RunConfig:
    # paths
    physical_train: str = ""
    physical_test: str = ""
    network_train: str = ""
    network_test: str = ""
    node_map: str = ""
    out_dir: str = ""
    # hyperparameters
    window: int = 15
    topk: int = 20
    batch_size: int = 32
    dropout: float = 0.2
    depth: int = 2
    momentum: float = 0.9
    embed_dim: int = 32
    head_hidden: int = 128
    lr1: float = 0.1
    lr2: float = 0.001
    lr3: float = 0.001
    epochs: int = 50
    patience: int = 5
    val_fraction: float = 0.1
    # mode flags
    attention: bool = True
    static_weights: str = ""  # "A,B" for fixed task weights, empty = solver
    fused_score: bool = False
    domains: str = "physical,network"
    seed: int = 0

    def domain_list(self) -> list[str]:
        return [d for d in self.domains.split(",") if d]

    def static_weight_pair(self) -> tuple[float, float] | None:
        if not self.static_weights:
            return None
        a, b = (float(x) for x in self.static_weights.split(","))
        if abs(a + b - 1.0) > 1e-9 or a < 0 or b < 0:
            raise ValueError(f"static weights must be non-negative and sum to 1: {a},{b}")
        return a, b

    def fingerprint(self) -> str:
        """Hash of everything that affects results (paths excluded)."""
        skip = {"physical_train", "physical_test", "network_train", "network_test",
                "node_map", "out_dir"}
        items = [
            f"{f.name}={getattr(self, f.name)}"
            for f in dataclasses.fields(self)
            if f.name not in skip
        ]
        return hashlib.sha256(";".join(items).encode()).hexdigest()[:16]


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as f:
        f.write("[run]\n")
        for fld in dataclasses.fields(cfg):
            f.write(f"{fld.name} = {getattr(cfg, fld.name)}\n")


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    """Flat `key = value` lines; `[section]` headers and `#` comments are
    ignored. Unknown keys are an error."""
    cfg = dataclasses.replace(base) if base else RunConfig()
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#") or line.startswith("["):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value, got {line!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in fields:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            ftype = fields[key].type
            if ftype in ("bool", bool):
                setattr(cfg, key, value.lower() in ("true", "1", "yes"))
            elif ftype in ("int", int):
                setattr(cfg, key, int(value))
            elif ftype in ("float", float):
                setattr(cfg, key, float(value))
            else:
                setattr(cfg, key, value)
    return cfg


def output_root() -> str:
    return os.environ.get("CDAD_OUT", ".")


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]
