"""Reader/writer for the .kgrid kernel-exchange documents.

This is the trainer's own implementation of the exchange contract (JSON
with format_version, kind, n, eps, q, lambda_samples, values); it shares
no code with the controller package so the file format stays the single
point of contact between the two sides.
"""
import json

import numpy as np

KGRID_VERSION = 1
FIELDS = ("format_version", "kind", "n", "eps", "q", "lambda_samples", "values")


def write_kgrid(path, values, kind, eps, q, lambda_samples):
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if values.shape != (n, n):
        raise ValueError("values must be square")
    lam = np.asarray(lambda_samples, dtype=float)
    if lam.size != n:
        raise ValueError("lambda_samples must have length n")
    doc = {
        "format_version": KGRID_VERSION,
        "kind": kind,
        "n": int(n),
        "eps": float(eps),
        "q": float(q),
        "lambda_samples": [float(v) for v in lam],
        "values": [float(v) for v in values.reshape(-1)],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def read_kgrid(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    for key in FIELDS:
        if key not in doc:
            raise ValueError(f"kgrid file missing field {key!r}")
    if doc["format_version"] != KGRID_VERSION:
        raise ValueError(f"unsupported format_version {doc['format_version']}")
    n = int(doc["n"])
    values = np.asarray(doc["values"], dtype=float).reshape(n, n)
    lam = np.asarray(doc["lambda_samples"], dtype=float)
    return {"kind": doc["kind"], "n": n, "eps": float(doc["eps"]),
            "q": float(doc["q"]), "lambda_samples": lam, "values": values}
