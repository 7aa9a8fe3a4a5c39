#!/usr/bin/env python3
"""Convert a Planetoid citation dataset (Cora, CiteSeer, PubMed) to a graph bundle.

Input is the raw file set distributed with the dataset (ind.<name>.x, .y, .tx,
.ty, .allx, .ally, .graph, .test.index), e.g. the `raw/` directory that
torch_geometric's Planetoid loader downloads.

Preprocessing applied:
  * features are row-normalized to sum 1 (rows of zeros stay zero);
  * edges are symmetrized, deduplicated and self-loops dropped;
  * the standard semi-supervised split: the first |y| nodes train
    (20 per class), the next 500 validate, ind.<name>.test.index tests;
  * CiteSeer's isolated test-index gaps are padded with zero features and
    label 0; those nodes are in no split.

Usage:
  tools/export_planetoid.py --raw-dir data/Cora/raw --name cora --out bundles/cora
"""

import argparse
import json
import os
import pickle
import sys

import numpy as np
import scipy.sparse as sp


def load_raw(raw_dir, name):
    objs = {}
    for key in ("x", "y", "tx", "ty", "allx", "ally", "graph"):
        path = os.path.join(raw_dir, f"ind.{name}.{key}")
        with open(path, "rb") as f:
            objs[key] = pickle.load(f, encoding="latin1")
    with open(os.path.join(raw_dir, f"ind.{name}.test.index")) as f:
        test_index = [int(line) for line in f if line.strip()]
    return objs, test_index


def to_dense(m):
    return m.toarray() if sp.issparse(m) else np.asarray(m)


def build(objs, test_index):
    test_sorted = np.sort(test_index)
    tx, ty = to_dense(objs["tx"]), to_dense(objs["ty"])
    if tx.shape[0] != test_sorted[-1] - test_sorted[0] + 1:
        full = test_sorted[-1] - test_sorted[0] + 1
        tx_ext = np.zeros((full, tx.shape[1]))
        ty_ext = np.zeros((full, ty.shape[1]))
        tx_ext[test_sorted - test_sorted[0]] = tx
        ty_ext[test_sorted - test_sorted[0]] = ty
        tx, ty = tx_ext, ty_ext

    features = np.vstack([to_dense(objs["allx"]), tx])
    labels_1h = np.vstack([to_dense(objs["ally"]), ty])
    features[test_index] = features[test_sorted]
    labels_1h[test_index] = labels_1h[test_sorted]
    labels = labels_1h.argmax(axis=1)

    rowsum = features.sum(axis=1, keepdims=True)
    features = np.divide(features, rowsum, out=np.zeros_like(features), where=rowsum != 0)

    n = features.shape[0]
    edges = set()
    for u, nbrs in objs["graph"].items():
        for v in nbrs:
            if u != v and u < n and v < n:
                edges.add((min(u, v), max(u, v)))

    n_train = to_dense(objs["y"]).shape[0]
    split = {
        "train": list(range(n_train)),
        "val": list(range(n_train, n_train + 500)),
        "test": sorted(int(i) for i in test_sorted),
    }
    return features, labels, sorted(edges), split


def write_bundle(out, name, features, labels, edges, split):
    os.makedirs(out, exist_ok=True)
    n, c = features.shape
    with open(os.path.join(out, "graph.edges"), "w") as f:
        f.writelines(f"{u} {v}\n" for u, v in edges)
    with open(os.path.join(out, "features.csv"), "w") as f:
        for row in features:
            f.write(",".join("0" if x == 0 else repr(float(x)) for x in row) + "\n")
    with open(os.path.join(out, "labels.csv"), "w") as f:
        f.writelines(f"{int(y)}\n" for y in labels)
    with open(os.path.join(out, "splits.json"), "w") as f:
        json.dump(split, f)
    with open(os.path.join(out, "meta.json"), "w") as f:
        json.dump({"n": n, "c": c, "num_classes": int(labels.max()) + 1, "name": name}, f, indent=2)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--raw-dir", required=True, help="directory with the ind.<name>.* files")
    ap.add_argument("--name", required=True, choices=["cora", "citeseer", "pubmed"])
    ap.add_argument("--out", required=True, help="bundle directory to write")
    args = ap.parse_args(argv)
    objs, test_index = load_raw(args.raw_dir, args.name)
    features, labels, edges, split = build(objs, test_index)
    write_bundle(args.out, args.name, features, labels, edges, split)
    print(f"{args.name}: n={features.shape[0]} c={features.shape[1]} classes={labels.max() + 1} "
          f"edges={len(edges)} train={len(split['train'])} val={len(split['val'])} test={len(split['test'])}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
