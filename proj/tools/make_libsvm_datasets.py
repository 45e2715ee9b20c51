#!/usr/bin/env python3
"""Convert KEEL-format raw datasets into LIBSVM '.scale' files.

Features are min-max scaled to [-1, 1] per column, the same transform
LIBSVM's svm-scale applies to its published '.scale' datasets. Constant
columns are dropped from every row and zero values are omitted.

Usage:
    pip download keel-ds --no-deps -d /tmp/keel
    python3 tools/make_libsvm_datasets.py --wheel /tmp/keel/keel_ds-*.whl --out data
"""
import argparse
import glob
import io
import zipfile


def read_keel(text):
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("@"):
            continue
        parts = [p.strip() for p in line.split(",")]
        rows.append(([float(v) for v in parts[:-1]], parts[-1]))
    return rows


def label_codes(labels):
    try:
        values = sorted({int(float(l)) for l in labels})
        return {str(l): int(float(l)) for l in labels}, values
    except ValueError:
        order = []
        for l in labels:
            if l not in order:
                order.append(l)
        return {l: i + 1 for i, l in enumerate(order)}, order


def to_libsvm(rows):
    n_feat = len(rows[0][0])
    lo = [min(r[0][j] for r in rows) for j in range(n_feat)]
    hi = [max(r[0][j] for r in rows) for j in range(n_feat)]
    codes, _ = label_codes([r[1] for r in rows])
    out = io.StringIO()
    for feats, label in rows:
        tokens = [str(codes[label])]
        for j, v in enumerate(feats):
            if hi[j] == lo[j]:
                continue
            s = -1.0 + 2.0 * (v - lo[j]) / (hi[j] - lo[j])
            if s != 0.0:
                tokens.append("%d:%.8g" % (j + 1, s))
        out.write(" ".join(tokens) + "\n")
    return out.getvalue()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--wheel", required=True)
    ap.add_argument("--out", default="data")
    ap.add_argument("--names", default="iris,wine,segment")
    args = ap.parse_args()
    wheel = glob.glob(args.wheel)[0]
    with zipfile.ZipFile(wheel) as zf:
        for name in args.names.split(","):
            raw = zf.read("keel_ds/data/balanced/raw/%s.dat" % name).decode()
            with open("%s/%s.scale" % (args.out, name), "w") as f:
                f.write(to_libsvm(read_keel(raw)))


if __name__ == "__main__":
    main()
