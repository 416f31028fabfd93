"""Convert the KEEL copies of the small benchmark sets into libsvm text files.

The KEEL repository is redistributed on PyPI as ``keel-ds``; its wheel is the
only offline-reachable source for these datasets in some sandboxes.

    pip download --no-deps keel-ds -d /tmp/keel
    python scripts/keel_to_libsvm.py /tmp/keel/keel_ds-*.whl data/
"""

import sys
import zipfile
from pathlib import Path

# keel name -> (output name, positive-class token)
DATASETS = {
    "pima": ("diabetes", "tested_positive"),
    "wisconsin": ("breast-cancer", "4"),
    "sonar": ("sonar", "M"),
    "mushroom": ("mushrooms", "p"),
}
CATEGORICAL = {"mushroom"}


def _records(text):
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("@"):
            yield [tok.strip() for tok in line.split(",")]


def _one_hot(rows):
    vocab = {}
    for feats, _ in rows:
        for col, tok in enumerate(feats):
            vocab.setdefault((col, tok), None)
    index = {key: k + 1 for k, key in enumerate(sorted(vocab))}
    return [([(index[(c, t)], 1.0) for c, t in enumerate(f)], lab) for f, lab in rows]


def convert(wheel, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(wheel) as zf:
        for keel, (name, positive) in DATASETS.items():
            text = zf.read(f"keel_ds/data/balanced/raw/{keel}.dat").decode()
            rows = [(rec[:-1], 1 if rec[-1] == positive else -1) for rec in _records(text)]
            if keel in CATEGORICAL:
                encoded = _one_hot(rows)
            else:
                encoded = [
                    ([(k + 1, float(v)) for k, v in enumerate(f) if float(v) != 0.0], lab)
                    for f, lab in rows
                ]
            path = out_dir / f"{name}.libsvm"
            with open(path, "w") as fh:
                for feats, lab in encoded:
                    body = " ".join(f"{k}:{v:g}" for k, v in feats)
                    fh.write(f"{lab:+d} {body}\n")
            print(f"{path}: {len(encoded)} rows")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    convert(sys.argv[1], sys.argv[2])
