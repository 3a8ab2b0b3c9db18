"""Transcribe the worked-example matrices from a Markdown source into CSV fixtures.

Usage: ``python tools/extract_fixtures.py SOURCE.md``. Run once; the
resulting CSVs plus MANIFEST.sha256 are committed.
"""
import hashlib
import re
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
OUT = ROOT / "src" / "enn" / "fixtures"


def bmatrix_after(text, anchor, start=0):
    i = text.index(anchor, start)
    j = text.index(r"\begin{bmatrix}", i)
    k = text.index(r"\end{bmatrix}", j)
    body = text[j + len(r"\begin{bmatrix}"):k]
    rows = [r for r in body.split(r"\\") if r.strip()]
    return np.array([[float(v) for v in r.split("&")] for r in rows]), k


def tsv_after(text, anchor, nrows):
    i = text.index(anchor)
    lines = text[i:].splitlines()[1:]
    rows = []
    for ln in lines:
        if not ln.strip():
            if rows:
                break
            continue
        rows.append([float(v) for v in ln.split("\t")])
        if len(rows) == nrows:
            break
    return np.array(rows)


def vec_after(text, anchor):
    i = text.index(anchor)
    m = re.search(r"\[([-0-9.\s]+)\]", text[i:])
    return np.array([float(v) for v in m.group(1).split()])


def main():
    text = Path(sys.argv[1]).read_text()
    sup = text.index("Supplementary Material. Detailed example")
    t = text[sup:]
    mats = {}
    mats["m1"], _ = bmatrix_after(t, "The randomly generated m^1")
    mats["g1_train"], _ = bmatrix_after(t, "g(m^1)_{\\text{train}} = f(m^1")
    mats["g1_test"], _ = bmatrix_after(t, "g(m^1)_{\\text{test}} = f(m^1")
    mats["d1_obs"], _ = bmatrix_after(t, "D^1_{obs} = ")
    mats["c_md1"], _ = bmatrix_after(t, "C_{M_1, D_1} = \\frac")
    mats["c_d1"], _ = bmatrix_after(t, "C_{D_1} = \\frac")
    mats["c_m1"], _ = bmatrix_after(t, "C_{M_1} = \\frac")
    mats["m2"], _ = bmatrix_after(t, "$$m^2 =$$")
    mats["g2_train"], _ = bmatrix_after(t, "g(m^2)_{\\text{train}} = f(m^2")
    mats["g2_test"], _ = bmatrix_after(t, "g(m^2)_{\\text{test}} = f(m^2")
    mats["d2_obs"], _ = bmatrix_after(t, "D^2_{\\text{obs}} = ")
    mats["c_md2"] = tsv_after(t, "C_{M_2, D_2} = \\frac", 16)
    mats["c_d2"] = tsv_after(t, "C_{D_2} = \\frac", 6)
    mats["c_m2"] = tsv_after(t, "C_{M_2} = \\frac", 16)
    mats["m3"], _ = bmatrix_after(t, "m^3 = \\begin")
    mats["g3_train"], _ = bmatrix_after(t, "g(m^3)_{\\text{train}} = f(m^3")
    mats["g3_test"], _ = bmatrix_after(t, "g(m^3)_{\\text{test}} = f(m^3")
    OUT.mkdir(parents=True, exist_ok=True)
    manifest = []
    for name, a in mats.items():
        print(name, a.shape, file=sys.stderr)
        lines = [",".join(f"{v:.3f}" for v in row) for row in np.atleast_2d(a)]
        data = ("\n".join(lines) + "\n").encode()
        (OUT / f"{name}.csv").write_bytes(data)
        manifest.append(f"{hashlib.sha256(data).hexdigest()}  {name}.csv")
    (OUT / "MANIFEST.sha256").write_text("\n".join(manifest) + "\n")


if __name__ == "__main__":
    main()
