"""The two-level model with its training config and checkpoint format.

Checkpoint layout (all integers little-endian)::

    b"GOGN"  u32 version  u32 header_len  header (UTF-8 JSON: config, metadata)
    u32 n_records
    n_records x [u16 name_len, name, u8 ndim, u32 dims[ndim], float32 values]
    u32 crc32 of everything before it
"""

import json
import struct
import zlib
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import CheckpointError, ContractError
from .interaction import InteractionStack, SideEffectTable
from .mol_encoder import MoleculeEncoder, SumPoolEncoder
from .nn import Module
from .objectives import RelationWeights

ABLATIONS = ("full", "mol_only", "inter_only", "no_pool", "no_attn")
MAGIC = b"GOGN"
VERSION = 1


@dataclass
class TrainConfig:
    task: str = "cci"
    hidden_dim: int = 384
    repr_dim: int = 256
    pooling_ratio: float = 0.5
    learning_rate: float = None  # 0.001 for both tasks; see README
    epochs: int = 100
    batch_edges: int = 1024
    seed: int = 0
    ablation: str = "full"
    gcn_layers: int = 3
    gat_heads: int = 4
    interaction_layers: int = 2
    patience: int = 20
    split: str = None  # "8:1:1" for cci, "6:2:2" for ddi
    threshold: int = 950
    side_effect_dim: int = 128
    edge_mlp_hidden: int = 32
    negative_sampling: str = "uniform"
    lr_warmup: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        if self.learning_rate is None:
            self.learning_rate = 0.001
        if self.split is None:
            self.split = "8:1:1" if self.task == "cci" else "6:2:2"
        self.validate()

    def validate(self):
        if self.task not in ("cci", "ddi"):
            raise ContractError(f"task must be cci or ddi, got {self.task!r}")
        if self.ablation not in ABLATIONS:
            raise ContractError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if not 0 < self.pooling_ratio <= 1:
            raise ContractError(f"pooling_ratio must lie in (0, 1], got {self.pooling_ratio}")
        if self.learning_rate <= 0:
            raise ContractError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("hidden_dim", "repr_dim", "gcn_layers", "gat_heads", "interaction_layers",
                     "batch_edges", "side_effect_dim", "edge_mlp_hidden"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.lr_warmup < 0:
            raise ContractError(f"lr_warmup must be >= 0, got {self.lr_warmup}")
        if self.epochs < 0 or self.patience < 1:
            raise ContractError("epochs must be >= 0 and patience >= 1")
        if self.dtype not in ("float64", "float32"):
            raise ContractError(f"dtype must be float64 or float32, got {self.dtype!r}")
        if self.negative_sampling not in ("uniform", "degree"):
            raise ContractError(f"unknown negative_sampling {self.negative_sampling!r}")

    @classmethod
    def from_dict(cls, values):
        """Build from string or typed values, coercing to each field's type."""
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, val in values.items():
            if key not in types:
                raise ContractError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, types[key], val)
        return cls(**kwargs)

    def to_dict(self):
        return asdict(self)

    def replace(self, **changes):
        return TrainConfig.from_dict({**self.to_dict(), **changes})


def _coerce(key, typ, val):
    if val is None or not isinstance(val, str):
        return val
    name = typ if isinstance(typ, str) else typ.__name__
    try:
        if name == "int":
            return int(val)
        if name == "float":
            return float(val)
    except ValueError as err:
        raise ContractError(f"config key {key!r} expects {name}, got {val!r}") from err
    return val


def read_config_file(path):
    """Flat ``key = value`` lines, ``#`` comments."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ContractError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key] = val
    return values


# ---------------------------------------------------------------- model

def interaction_kind(task, ablation):
    if ablation == "mol_only":
        return None
    if ablation == "no_attn":
        return "gcn"
    return "gat" if task == "cci" else "edge"


class GoGNNModel(Module):
    """Molecule encoder -> interaction stack -> final node representations.

    ``context`` holds what inference needs besides weights: the molecule
    table in node order and the message-passing (training) edges, with
    relation names for DDI.
    """

    def __init__(self, config, relation_count=0):
        self.config = config
        self.relation_count = int(relation_count)
        c = config
        rng = np.random.default_rng(c.seed)
        dtype = np.dtype(c.dtype).type
        if c.ablation == "inter_only":
            self.encoder = SumPoolEncoder(dtype=dtype)
        else:
            self.encoder = MoleculeEncoder(c.hidden_dim, c.repr_dim, c.gcn_layers, c.pooling_ratio,
                                           pool=c.ablation != "no_pool", rng=rng, dtype=dtype)
        kind = interaction_kind(c.task, c.ablation)
        d = self.encoder.out_dim
        self.interaction = None
        if kind is not None:
            self.interaction = InteractionStack(kind, d, c.repr_dim, c.interaction_layers,
                                                c.gat_heads, c.side_effect_dim,
                                                c.edge_mlp_hidden, rng=rng, dtype=dtype)
            d = self.interaction.out_dim
        self.se_table = None
        self.relation_weights = None
        if c.task == "ddi":
            if kind == "edge":
                self.se_table = SideEffectTable(max(self.relation_count, 1), c.side_effect_dim,
                                                rng=rng, dtype=dtype)
            self.relation_weights = RelationWeights(max(self.relation_count, 1), d, rng, dtype)
        self.out_dim = d
        self.dtype = dtype
        self.context = {}

    def node_representations(self, graph, batch):
        x = self.encoder(batch)
        if self.interaction is not None:
            x = self.interaction(graph, x, self.se_table)
        return x

    __call__ = node_representations

    # ------------------------------------------------------------ persistence

    def state(self):
        return {name: p.data for name, p in self.named_parameters()}

    def load_state(self, state):
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(state))
        if missing:
            raise CheckpointError(f"checkpoint lacks parameter record {missing[0]!r}")
        for name, arr in state.items():
            if name not in params:
                raise CheckpointError(f"unexpected parameter record {name!r}")
            if params[name].shape != tuple(arr.shape):
                raise CheckpointError(f"shape mismatch for record {name!r}: checkpoint "
                                      f"{tuple(arr.shape)}, model {params[name].shape}")
            params[name].data = np.asarray(arr, dtype=params[name].dtype).copy()

    def snapshot(self):
        return {name: arr.copy() for name, arr in self.state().items()}


def save_checkpoint(model, path, metadata=None):
    header = {"config": model.config.to_dict(), "relation_count": model.relation_count,
              "context": model.context, "metadata": metadata or {}}
    blob = bytearray(MAGIC)
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob += struct.pack("<II", VERSION, len(head)) + head
    records = sorted(model.state().items())
    blob += struct.pack("<I", len(records))
    for name, arr in records:
        raw = name.encode("utf-8")
        blob += struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)))
    Path(path).write_bytes(bytes(blob))


class _Reader:
    def __init__(self, data):
        self.data, self.pos = data, 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint while reading {what} at byte {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_checkpoint(path):
    """Returns (model, metadata); validates magic, version, shapes and checksum."""
    try:
        data = Path(path).read_bytes()
    except OSError as err:
        raise CheckpointError(f"cannot read checkpoint {path}: {err}") from err
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError("bad magic: not a checkpoint file")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    (head_len,) = r.unpack("<I", "header length")
    try:
        header = json.loads(r.take(head_len, "header").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"corrupt checkpoint header: {err}") from err
    (n_records,) = r.unpack("<I", "record count")
    state = {}
    for k in range(n_records):
        (name_len,) = r.unpack("<H", f"record {k} name length")
        name = r.take(name_len, f"record {k} name").decode("utf-8", errors="replace")
        (ndim,) = r.unpack("<B", f"record {name!r} rank")
        shape = r.unpack(f"<{ndim}I", f"record {name!r} shape")
        count = int(np.prod(shape)) if ndim else 1
        raw = r.take(4 * count, f"record {name!r} values")
        state[name] = np.frombuffer(raw, dtype="<f4").reshape(shape)
    body_end = r.pos
    (crc,) = r.unpack("<I", "checksum")
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after checksum")
    if zlib.crc32(data[:body_end]) != crc:
        raise CheckpointError("checksum mismatch: checkpoint is corrupt")
    try:
        config = TrainConfig.from_dict(header["config"])
        model = GoGNNModel(config, header["relation_count"])
    except (KeyError, ContractError) as err:
        raise CheckpointError(f"invalid checkpoint config: {err}") from err
    model.load_state(state)
    model.context = header.get("context", {})
    return model, header.get("metadata", {})

