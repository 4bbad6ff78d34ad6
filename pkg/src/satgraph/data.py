"""Dataset handling: schema-driven CSV ingestion, record-to-graph
encoding, synthetic task generators, label-noise injection, splits.

A record is one row of tabular feedback: categorical and numeric
feature fields plus one binary label. Records become hub-and-spokes
graphs: node 0 is a zero-featured hub standing for the session, and
each present feature field contributes one node wired to the hub in
both directions (plus any schema-declared field-to-field edges).

The synthetic generators emit records in this same schema language and
push them through the same encoder, so the CSV path and the synthetic
path cannot drift apart.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .errors import ConfigError, DataError
from .graph import FeatureRef, Graph, build_graph
from .linalg import Rng

NOISE_STREAM = 2
SPLIT_STREAM = 3
DATA_STREAM = 4

COLUMN_KINDS = ("categorical", "numeric", "label", "ignore")


@dataclass(frozen=True)
class Column:
    name: str
    kind: str


@dataclass
class Schema:
    columns: list                      # of Column
    label_positive: str
    field_edges: list = field(default_factory=list)   # (field, field) pairs
    dim: int = 8                       # node feature width
    categorical_encoding: str = "embedding"           # or "fixed"
    token_vectors: dict = field(default_factory=dict) # value -> vector (fixed mode)
    absent_value: str = None           # categorical cell meaning "no node"
    missing_numeric: str = "impute-mean"              # or "drop-row"
    provenance: str = None

    def __post_init__(self):
        for c in self.columns:
            if c.kind not in COLUMN_KINDS:
                raise DataError(f"column {c.name!r} has unknown kind {c.kind!r}")
        labels = [c for c in self.columns if c.kind == "label"]
        if len(labels) != 1:
            raise DataError(f"schema needs exactly one label column, found {len(labels)}")
        if not self.feature_columns():
            raise DataError("schema needs at least one feature column")
        if self.dim < 1:
            raise DataError(f"feature width must be >= 1, got {self.dim}")
        if self.categorical_encoding not in ("embedding", "fixed"):
            raise DataError(f"unknown categorical encoding {self.categorical_encoding!r}")
        if self.missing_numeric not in ("impute-mean", "drop-row"):
            raise DataError(f"unknown missing-numeric policy {self.missing_numeric!r}")

    def feature_columns(self) -> list:
        return [c for c in self.columns if c.kind in ("categorical", "numeric")]

    def label_column(self) -> str:
        return next(c.name for c in self.columns if c.kind == "label")


def load_schema(path) -> Schema:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise DataError(f"cannot read schema {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise DataError(f"schema {path} is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict) or "columns" not in doc:
        raise DataError(f"schema {path} must be a mapping with a 'columns' list")
    try:
        cols = [Column(str(c["name"]), str(c["kind"])) for c in doc["columns"]]
        enc = doc.get("encoding", {}) or {}
        return Schema(
            columns=cols,
            label_positive=str(doc["label_positive"]),
            field_edges=[tuple(e) for e in doc.get("field_edges", []) or []],
            dim=int(enc.get("dim", 8)),
            categorical_encoding=str(enc.get("categorical", "embedding")),
            token_vectors={str(k): [float(x) for x in v]
                           for k, v in (enc.get("token_vectors", {}) or {}).items()},
            absent_value=(None if doc.get("absent_value") is None
                          else str(doc["absent_value"])),
            missing_numeric=str(doc.get("missing_numeric", "impute-mean")),
            provenance=doc.get("provenance"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"schema {path} is malformed: {exc}") from exc


def save_schema(schema: Schema, path):
    doc = {
        "columns": [{"name": c.name, "kind": c.kind} for c in schema.columns],
        "label_positive": schema.label_positive,
        "field_edges": [list(e) for e in schema.field_edges],
        "encoding": {
            "dim": schema.dim,
            "categorical": schema.categorical_encoding,
            "token_vectors": {k: list(v) for k, v in sorted(schema.token_vectors.items())},
        },
        "absent_value": schema.absent_value,
        "missing_numeric": schema.missing_numeric,
        "provenance": schema.provenance,
    }
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False, default_flow_style=None)


@dataclass(frozen=True)
class LoadReport:
    n_rows: int
    n_imputed: int
    n_dropped: int


def load_csv(path, schema: Schema):
    """Parse a CSV into typed records.

    Returns (records, LoadReport). Empty numeric cells follow the
    schema's missing policy (impute the column mean over this file, or
    drop the row); any other unparseable numeric is an error naming the
    row. The header must carry exactly the schema's columns.
    """
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    if not rows:
        raise DataError(f"dataset {path} is empty (no header row)")
    header = rows[0]
    want = {c.name for c in schema.columns}
    have = set(header)
    for name in sorted(want - have):
        raise DataError(f"dataset {path} is missing schema column {name!r}")
    for name in sorted(have - want):
        raise DataError(f"dataset {path} has column {name!r} not in the schema "
                        f"(declare it with kind 'ignore')")
    pos = {name: header.index(name) for name in want}

    records = []
    missing_at = []                    # (record idx, column name)
    n_dropped = 0
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path} row {lineno}: {len(row)} cells for "
                            f"{len(header)} columns")
        rec = {}
        drop = False
        for c in schema.columns:
            raw = row[pos[c.name]]
            if c.kind == "ignore":
                continue
            if c.kind in ("label", "categorical"):
                rec[c.name] = raw
            else:
                text = raw.strip()
                if text == "":
                    if schema.missing_numeric == "drop-row":
                        drop = True
                        break
                    rec[c.name] = None
                    missing_at.append((len(records), c.name))
                else:
                    try:
                        rec[c.name] = float(text)
                    except ValueError:
                        raise DataError(f"{path} row {lineno}: column {c.name!r} "
                                        f"value {raw!r} is not numeric") from None
        if drop:
            n_dropped += 1
        else:
            records.append(rec)

    n_imputed = len(missing_at)
    if n_imputed:
        means = {}
        for name in {col for _, col in missing_at}:
            present = [r[name] for r in records if r[name] is not None]
            means[name] = sum(present) / len(present) if present else 0.0
        for idx, name in missing_at:
            records[idx][name] = means[name]
    return records, LoadReport(n_rows=len(records), n_imputed=n_imputed,
                               n_dropped=n_dropped)


@dataclass(frozen=True)
class Scaler:
    """Per-field standardization constants, fitted on training records."""

    stats: dict                        # field -> (mean, std)

    def transform(self, name: str, value: float) -> float:
        mean, std = self.stats[name]
        return (value - mean) / std


def fit_scaler(records, schema: Schema) -> Scaler:
    stats = {}
    for c in schema.columns:
        if c.kind != "numeric":
            continue
        vals = np.array([r[c.name] for r in records], dtype=np.float64)
        std = float(vals.std()) if vals.size else 0.0
        stats[c.name] = (float(vals.mean()) if vals.size else 0.0,
                         std if std > 0.0 else 1.0)
    return Scaler(stats=stats)


def fit_vocab(records, schema: Schema) -> dict:
    """Value -> embedding row per categorical field; row 0 is reserved
    for unseen or missing values."""
    vocab = {}
    for c in schema.columns:
        if c.kind != "categorical":
            continue
        seen = {r[c.name] for r in records
                if r[c.name] != "" and r[c.name] != schema.absent_value}
        vocab[c.name] = {v: i + 1 for i, v in enumerate(sorted(seen))}
    return vocab


def embedding_rows_of(vocab: dict, schema: Schema) -> dict:
    """Table sizes the model must allocate for an embedding-mode schema:
    one row per known categorical value plus the reserved row, and a
    single direction row per numeric field."""
    rows = {name: len(v) + 1 for name, v in vocab.items()}
    for c in schema.columns:
        if c.kind == "numeric":
            rows[c.name] = 1
    return rows


def encode_record_graph(record: dict, schema: Schema, embedding_vocab=None,
                        scaler: Scaler = None) -> Graph:
    """Encode one record as a hub-and-spokes graph.

    Node 0 is the all-zero hub; each present feature field adds one node
    connected hub<->field. Categorical fields in embedding mode carry a
    FeatureRef into their field's table (row 0 when the value is unknown)
    instead of literal features; numeric fields scale a learned 1-row
    direction by the standardized value. Fixed mode reads vectors from
    the schema and puts standardized numerics on axis 0.
    """
    fields = schema.feature_columns()
    present = []
    for c in fields:
        if c.name not in record:
            raise DataError(f"record is missing field {c.name!r}")
        if (c.kind == "categorical" and schema.absent_value is not None
                and record[c.name] == schema.absent_value):
            continue
        present.append(c)

    n = len(present) + 1
    feats = np.zeros((n, schema.dim))
    refs = []
    node_of = {}
    for i, c in enumerate(present, start=1):
        node_of[c.name] = i
        value = record[c.name]
        if c.kind == "numeric":
            if not isinstance(value, (int, float)) or value is True:
                raise DataError(f"field {c.name!r} expects a number, got {value!r}")
            z = scaler.transform(c.name, float(value)) if scaler else float(value)
            if schema.categorical_encoding == "embedding":
                refs.append(FeatureRef(c.name, 0, i, scale=z))
            else:
                feats[i, 0] = z
        elif schema.categorical_encoding == "embedding":
            if embedding_vocab is None or c.name not in embedding_vocab:
                raise DataError(f"no embedding vocabulary for field {c.name!r}")
            row = embedding_vocab[c.name].get(value, 0)
            if value == "":
                row = 0
            refs.append(FeatureRef(c.name, row, i, scale=1.0))
        else:
            vec = schema.token_vectors.get(value)
            if vec is not None:
                if len(vec) != schema.dim:
                    raise DataError(f"token vector for {value!r} has length "
                                    f"{len(vec)}, schema width is {schema.dim}")
                feats[i] = vec

    edges = []
    for i in range(1, n):
        edges.append((0, i))
        edges.append((i, 0))
    for a, b in schema.field_edges:
        if a in node_of and b in node_of:
            edges.append((node_of[a], node_of[b]))
            edges.append((node_of[b], node_of[a]))
    g, dups = build_graph(feats, edges)
    if dups:
        raise DataError(f"schema field_edges duplicate the hub wiring ({dups} repeats)")
    return Graph(node_features=g.node_features, edges=g.edges,
                 feature_refs=tuple(refs))


@dataclass
class LabeledDataset:
    items: list                        # of (Graph, int)
    source: str                        # "csv" | "synthetic"
    noise_rate: float = 0.0
    flipped_ids: tuple = ()
    embedding_rows: dict = field(default_factory=dict)
    feature_dim: int = 0
    ids: tuple = ()                    # provenance indices through splits
    records: list = None               # kept on full synthetic sets for export
    schema: Schema = None

    def __post_init__(self):
        if not self.ids:
            self.ids = tuple(range(len(self.items)))

    def labels(self) -> np.ndarray:
        return np.array([y for _, y in self.items], dtype=np.int64)


def label_of(record: dict, schema: Schema) -> int:
    return 1 if record[schema.label_column()] == schema.label_positive else 0


def dataset_from_records(records, schema: Schema, source: str,
                         embedding_vocab=None, scaler=None,
                         keep_records: bool = False) -> LabeledDataset:
    items = [(encode_record_graph(r, schema, embedding_vocab, scaler),
              label_of(r, schema)) for r in records]
    rows = (embedding_rows_of(embedding_vocab or {}, schema)
            if schema.categorical_encoding == "embedding" else {})
    return LabeledDataset(items=items, source=source, embedding_rows=rows,
                          feature_dim=schema.dim,
                          records=list(records) if keep_records else None,
                          schema=schema)


# ---------------------------------------------------------------------------
# synthetic tasks

MOTIF_TOKENS = ("m1", "m2", "m3")
FILLER_TOKENS = ("f1", "f2", "f3", "f4", "f5")

DN_ROLES = ("plain", "dist")
DN_VALUES = ("p", "q", "r", "s")
# distractors never combine the distinguished role with a deciding value,
# so exactly one node per graph determines the label
DN_DISTRACTORS = tuple(f"plain_{v}" for v in DN_VALUES) + ("dist_r", "dist_s")
DN_DECIDERS = ("dist_p", "dist_q")     # dist_p -> label 1, dist_q -> label 0


def motif_label(values) -> int:
    """The planted rule: positive iff all three motif tokens appear."""
    present = set(values)
    return 1 if all(t in present for t in MOTIF_TOKENS) else 0


def dn_label(values) -> int:
    """The planted rule: label read off the unique decider token."""
    deciders = [v for v in values if v in DN_DECIDERS]
    if len(deciders) != 1:
        raise DataError(f"expected exactly one decider token, found {deciders}")
    return 1 if deciders[0] == "dist_p" else 0


def _one_hot(k: int, dim: int) -> list:
    v = [0.0] * dim
    v[k] = 1.0
    return v


def _motif_schema(max_fields: int, provenance: str) -> Schema:
    dim = len(MOTIF_TOKENS) + len(FILLER_TOKENS)
    tokens = {t: _one_hot(k, dim) for k, t in enumerate(MOTIF_TOKENS + FILLER_TOKENS)}
    cols = [Column(f"f{i + 1:02d}", "categorical") for i in range(max_fields)]
    cols.append(Column("label", "label"))
    return Schema(columns=cols, label_positive="1", dim=dim,
                  categorical_encoding="fixed", token_vectors=tokens,
                  absent_value="none", provenance=provenance)


def _dn_schema(max_fields: int, provenance: str) -> Schema:
    dim = len(DN_ROLES) + len(DN_VALUES)
    tokens = {}
    for ri, role in enumerate(DN_ROLES):
        for vi, val in enumerate(DN_VALUES):
            vec = [0.0] * dim
            vec[ri] = 1.0
            vec[len(DN_ROLES) + vi] = 1.0
            tokens[f"{role}_{val}"] = vec
    cols = [Column(f"f{i + 1:02d}", "categorical") for i in range(max_fields)]
    cols.append(Column("label", "label"))
    return Schema(columns=cols, label_positive="1", dim=dim,
                  categorical_encoding="fixed", token_vectors=tokens,
                  absent_value="none", provenance=provenance)


def _balanced_labels(n: int, rng: Rng) -> np.ndarray:
    labels = np.zeros(n, dtype=np.int64)
    labels[: n // 2] = 1
    return labels[rng.permutation(n)]


def generate_synthetic(n_graphs: int, size_range, task: str, seed: int) -> LabeledDataset:
    """Build a labeled synthetic dataset of hub-and-spokes graphs.

    motif: the label is 1 exactly when all of m1, m2, m3 occur among the
    field tokens; negatives are resampled-and-repaired so no negative
    contains the full pattern. Any token-counting shortcut short of the
    three-way conjunction mislabels some graphs.

    distinguished-neighbor: every graph has exactly one node pairing the
    distinguished role with a deciding value (p -> 1, q -> 0); all other
    nodes are drawn from distractors that share a role or a value with
    the decider but never both. Identifying the one node that matters
    among look-alikes is what neighbor attention can do and uniform
    aggregation cannot.

    Labels are exactly balanced (odd counts leave one extra negative).
    """
    if n_graphs < 2:
        raise ConfigError(f"n_graphs must be >= 2, got {n_graphs}")
    lo, hi = int(size_range[0]), int(size_range[1])
    if not (4 <= lo <= hi <= 64):
        raise ConfigError(f"size range must satisfy 4 <= lo <= hi <= 64, got {lo}..{hi}")
    if task not in ("motif", "distinguished-neighbor"):
        raise ConfigError(f"unknown synthetic task {task!r}")
    if task == "motif" and lo < len(MOTIF_TOKENS) + 1:
        raise ConfigError(f"motif graphs need at least {len(MOTIF_TOKENS) + 1} nodes")

    rng = Rng(seed, DATA_STREAM)
    max_fields = hi - 1
    prov = f"synthetic task={task} seed={seed} sizes={lo}-{hi} n={n_graphs}"
    schema = _motif_schema(max_fields, prov) if task == "motif" else _dn_schema(max_fields, prov)
    labels = _balanced_labels(n_graphs, rng)

    all_motif = MOTIF_TOKENS + FILLER_TOKENS
    records = []
    for y in labels:
        k = int(rng.integers(lo, hi + 1)) - 1      # field count for this graph
        slots = np.sort(rng.permutation(max_fields)[:k])
        if task == "motif":
            values = [all_motif[int(t)] for t in rng.integers(0, len(all_motif), k)]
            if y == 1:
                where = rng.permutation(k)[: len(MOTIF_TOKENS)]
                for j, tok in enumerate(MOTIF_TOKENS):
                    values[int(where[j])] = tok
            else:
                while motif_label(values) == 1:
                    tok = MOTIF_TOKENS[int(rng.integers(0, len(MOTIF_TOKENS)))]
                    hits = [i for i, v in enumerate(values) if v == tok]
                    pick = hits[int(rng.integers(0, len(hits)))]
                    values[pick] = FILLER_TOKENS[int(rng.integers(0, len(FILLER_TOKENS)))]
        else:
            values = [DN_DISTRACTORS[int(t)]
                      for t in rng.integers(0, len(DN_DISTRACTORS), k)]
            values[int(rng.integers(0, k))] = DN_DECIDERS[0] if y == 1 else DN_DECIDERS[1]

        rec = {c.name: "none" for c in schema.columns if c.kind == "categorical"}
        for slot, val in zip(slots, values):
            rec[f"f{int(slot) + 1:02d}"] = val
        rec["label"] = "1" if y == 1 else "0"
        records.append(rec)

    planted = motif_label if task == "motif" else dn_label
    for rec, y in zip(records, labels):
        got = planted([v for k2, v in rec.items() if k2 != "label" and v != "none"])
        if got != y:
            raise DataError(f"generator self-check failed: planted rule says {got}, "
                            f"label is {y}")

    ds = dataset_from_records(records, schema, source="synthetic", keep_records=True)
    return ds


def save_dataset_csv(dataset: LabeledDataset, csv_path, schema_path=None):
    """Write a dataset's records (and optionally its schema) to disk.

    Only datasets that kept their records (full synthetic sets) can be
    exported. Same content -> byte-identical files.
    """
    if dataset.records is None or dataset.schema is None:
        raise DataError("dataset has no record table to export")
    schema = dataset.schema
    names = [c.name for c in schema.columns]
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for rec in dataset.records:
            w.writerow([_cell(rec[name]) for name in names])
    if schema_path is not None:
        save_schema(schema, schema_path)


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ---------------------------------------------------------------------------
# noise and splitting

def inject_label_noise(dataset: LabeledDataset, rate: float, seed: int) -> LabeledDataset:
    """Flip each label independently with probability `rate`.

    Returns a new dataset (graphs shared, labels copied); the input is
    untouched. Flipped positions are recorded on the result.
    """
    if not 0.0 <= rate <= 1.0:
        raise ConfigError(f"noise rate must be in [0, 1], got {rate}")
    rng = Rng(seed, NOISE_STREAM)
    flips = rng.random(len(dataset.items)) < rate
    items = [(g, (1 - y) if f else y)
             for (g, y), f in zip(dataset.items, flips)]
    return replace(dataset, items=items, noise_rate=rate,
                   flipped_ids=tuple(int(i) for i in np.nonzero(flips)[0]),
                   records=None)


@dataclass
class SplitSpec:
    train: float = 0.8
    val: float = 0.1
    test: float = 0.1
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        fr = (self.train, self.val, self.test)
        if any(f <= 0 for f in fr):
            raise ConfigError(f"split fractions must be positive, got {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {sum(fr)}")


def _allocate(n: int, fractions) -> list:
    """Largest-remainder rounding: sizes sum to n exactly."""
    raw = [f * n for f in fractions]
    base = [int(x) for x in raw]
    short = n - sum(base)
    order = sorted(range(len(raw)), key=lambda i: (raw[i] - base[i], -i), reverse=True)
    for i in order[:short]:
        base[i] += 1
    return base


def split_indices(labels, spec: SplitSpec):
    """Assign item indices to (train, val, test), optionally per class."""
    labels = np.asarray(labels)
    rng = Rng(spec.seed, SPLIT_STREAM)
    fractions = (spec.train, spec.val, spec.test)
    parts = [[], [], []]
    groups = ([np.nonzero(labels == c)[0] for c in (0, 1)] if spec.stratified
              else [np.arange(labels.shape[0])])
    for idx in groups:
        idx = idx[rng.permutation(idx.shape[0])]
        sizes = _allocate(idx.shape[0], fractions)
        at = 0
        for p, size in enumerate(sizes):
            parts[p].extend(int(i) for i in idx[at:at + size])
            at += size
    return tuple(sorted(p) for p in parts)


def split(dataset: LabeledDataset, spec: SplitSpec):
    """Partition into (train, val, test) datasets, disjoint and exhaustive."""
    parts = split_indices(dataset.labels(), spec)
    names = ("train", "val", "test")
    sizes = {name: len(p) for name, p in zip(names, parts)}
    if min(sizes.values()) == 0:
        raise DataError(f"split produced an empty part: {sizes} from "
                        f"{len(dataset.items)} items")
    flipped = set(dataset.flipped_ids)
    out = []
    for p in parts:
        out.append(replace(dataset,
                           items=[dataset.items[i] for i in p],
                           ids=tuple(dataset.ids[i] for i in p),
                           flipped_ids=tuple(j for j, i in enumerate(p) if i in flipped),
                           records=None))
    return tuple(out)
