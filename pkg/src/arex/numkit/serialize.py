"""Plain-text parameter files.

Layout: a ``# arex-params`` header line, then for every array a
``# shape d0 d1 ...`` comment followed by its entries one per line in C
order.  Floats are written with ``repr`` so a save/load round trip is exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import ParseError

HEADER = "# arex-params v1"


def dumps_params(arrays, meta=None):
    lines = [HEADER]
    for key, value in (meta or {}).items():
        lines.append(f"# meta {key} {value}")
    for a in arrays:
        a = np.asarray(a, dtype=np.float64)
        lines.append("# shape " + " ".join(str(d) for d in a.shape))
        lines.extend(repr(float(v)) for v in a.reshape(-1))
    return "\n".join(lines) + "\n"


def loads_params(text):
    arrays, meta = [], {}
    shape, buf = None, []

    def flush():
        if shape is not None:
            size = int(np.prod(shape)) if shape else 1
            if len(buf) != size:
                raise ParseError(f"expected {size} values for shape {shape}, got {len(buf)}")
            arrays.append(np.array(buf, dtype=np.float64).reshape(shape))

    lines = text.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise ParseError("missing parameter-file header", line=1)
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        if line.startswith("# shape"):
            flush()
            shape = tuple(int(t) for t in line.split()[2:])
            buf = []
        elif line.startswith("# meta"):
            _, _, key, value = line.split(maxsplit=3)
            meta[key] = value
        elif line.startswith("#"):
            continue
        else:
            if shape is None:
                raise ParseError("value before any shape header", line=lineno)
            try:
                buf.append(float(line))
            except ValueError:
                raise ParseError(f"not a number: {line!r}", line=lineno) from None
    flush()
    return arrays, meta


def save_params(path, arrays, meta=None):
    Path(path).write_text(dumps_params(arrays, meta))


def load_params(path):
    return loads_params(Path(path).read_text())
