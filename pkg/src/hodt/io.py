"""Dataset CSV files and versioned JSON model files."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .exceptions import CorruptModelError, CSVParseError
from .geometry import Dataset, Hyperplane, augment, embedding_dim, veronese_embed
from .tree import DecisionTree

FORMAT_VERSION = 1
MODEL_KIND = "hodt-model"


# --------------------------------------------------------------------------
# datasets


def read_csv(path, n_classes=None):
    """Read ``f0,...,f{D-1},label`` rows; parse errors carry the 1-based line number."""
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise CSVParseError(path, 0, str(exc)) from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CSVParseError(path, 1, "empty file, expected a header row") from None
        header = [h.strip() for h in header]
        d = len(header) - 1
        expected = [f"f{i}" for i in range(d)] + ["label"]
        if d < 1 or header != expected:
            raise CSVParseError(path, 1, f"header must be {','.join(expected) if d >= 1 else 'f0,...,label'}")
        points, labels = [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != d + 1:
                raise CSVParseError(path, line, f"expected {d + 1} cells, found {len(row)}")
            try:
                values = [float(c) for c in row[:d]]
            except ValueError:
                raise CSVParseError(path, line, "feature cells must be decimal numbers") from None
            if not all(math.isfinite(v) for v in values):
                raise CSVParseError(path, line, "feature cells must be finite")
            cell = row[d].strip()
            if not cell.isdigit():
                raise CSVParseError(path, line, f"label must be a nonnegative integer, got {cell!r}")
            points.append(values)
            labels.append(int(cell))
    x = np.array(points, dtype=float).reshape(len(points), d)
    y = np.array(labels, dtype=np.int64)
    if n_classes is None:
        n_classes = int(y.max()) + 1 if y.size else 1
    return Dataset(x, y, int(n_classes))


def write_csv(path, data):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"f{i}" for i in range(data.d)] + ["label"])
        for row, label in zip(data.points.tolist(), data.labels.tolist()):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


# --------------------------------------------------------------------------
# models


class Model:
    """A trained tree together with the embedding it lives in.

    Parameters
    ----------
    tree : DecisionTree
    degree : int
        Embedding degree M.
    n_features : int
        Raw dimension D.
    metadata : dict
        Training metadata (K, loss, seed, backend, ...).
    """

    def __init__(self, tree, degree, n_features, metadata=None):
        self.tree = tree
        self.degree = int(degree)
        self.n_features = int(n_features)
        self.g = embedding_dim(self.n_features, self.degree)
        self.metadata = dict(metadata or {})

    def predict(self, points):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.n_features:
            raise ValueError(f"expected points with {self.n_features} features")
        return self.tree.predict(augment(veronese_embed(points, self.degree, max_dim=None).points))

    def to_dict(self):
        rules = []
        for rank in sorted(self.tree.hyperplanes):
            h = self.tree.hyperplanes[rank]
            rules.append({"rank": int(rank), "defining": [int(i) for i in h.defining],
                          "normal": [repr(float(v)) for v in h.normal]})
        nodes = []
        for i in range(self.tree.n_nodes):
            if self.tree.rule[i] >= 0:
                nodes.append({"rule": int(self.tree.rule[i]), "pos": int(self.tree.pos[i]),
                              "neg": int(self.tree.neg[i]), "n": int(self.tree.n_samples[i])})
            else:
                nodes.append({"label": int(self.tree.label[i]), "n": int(self.tree.n_samples[i])})
        return {
            "format": MODEL_KIND,
            "format_version": FORMAT_VERSION,
            "M": self.degree,
            "D": self.n_features,
            "G": self.g,
            "rules": rules,
            "nodes": nodes,
            "metadata": self.metadata,
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def from_dict(cls, doc):
        try:
            if doc.get("format") != MODEL_KIND:
                raise CorruptModelError("not a model file")
            if doc.get("format_version") != FORMAT_VERSION:
                raise CorruptModelError(f"unsupported format_version {doc.get('format_version')!r}")
            degree, d = int(doc["M"]), int(doc["D"])
            g = embedding_dim(d, degree)
            if int(doc["G"]) != g:
                raise CorruptModelError(f"G={doc['G']} does not match D={d}, M={degree}")
            hyperplanes = {}
            for r in doc["rules"]:
                normal = np.array([float(v) for v in r["normal"]], dtype=float)
                if normal.shape != (g + 1,):
                    raise CorruptModelError(f"rule {r['rank']} has a normal of the wrong length")
                rank = int(r["rank"])
                hyperplanes[rank] = Hyperplane(rank, tuple(int(i) for i in r["defining"]), normal,
                                               np.zeros(0, dtype=bool))
            rule, pos, neg, label, count = [], [], [], [], []
            n_nodes = len(doc["nodes"])
            for node in doc["nodes"]:
                if "rule" in node:
                    if int(node["rule"]) not in hyperplanes:
                        raise CorruptModelError(f"node references unknown rule {node['rule']}")
                    rule.append(int(node["rule"]))
                    pos.append(int(node["pos"]))
                    neg.append(int(node["neg"]))
                    label.append(-1)
                else:
                    rule.append(-1)
                    pos.append(-1)
                    neg.append(-1)
                    label.append(int(node["label"]))
                count.append(int(node.get("n", 0)))
            for i in range(n_nodes):
                if rule[i] >= 0 and not (i < pos[i] < n_nodes and i < neg[i] < n_nodes):
                    raise CorruptModelError(f"node {i} has out-of-range children")
            if not n_nodes:
                raise CorruptModelError("model has no nodes")
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptModelError(f"malformed model file: {exc}") from exc
        tree = DecisionTree(rule, pos, neg, label, count, hyperplanes, [None] * n_nodes)
        return cls(tree, degree, d, doc.get("metadata", {}))

    @classmethod
    def loads(cls, text):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CorruptModelError(f"model file is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise CorruptModelError("model file must hold a JSON object")
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path):
        return cls.loads(Path(path).read_text())


def save_model(model, path):
    model.save(path)


def load_model(path):
    return Model.load(path)
