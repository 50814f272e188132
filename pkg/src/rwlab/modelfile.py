"""YAML model files.

Schema (all keys required unless marked optional)::

    name: E1                  # optional
    description: ...          # optional
    dimension: 1
    states: [A, B]
    pi: [1/2, 1/2]
    support: [[-1], [0], [1]]
    p0: [1/3, 1/3, 1/3]
    c:
      A: [1/8, -1/4, 1/8]
      B: [-1/8, 1/4, -1/8]

Numbers may be written as integers, decimals or exact fractions ("1/3").
Lists under ``p0`` and ``c`` follow the order of ``support``. Unknown keys
are rejected.
"""

from __future__ import annotations

import hashlib
import json
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .model import EnvAlphabet, EnvLaw, Kernel, Model, ModelError

REQUIRED = ("dimension", "states", "pi", "support", "p0", "c")
OPTIONAL = ("name", "description")
ZOO = ("E1", "E3", "E4", "bad_bounds", "bad_drift", "bad_pi_mean")


class ModelFileError(ValueError):
    pass


def _key_lines(text):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return {}
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: k.start_mark.line + 1 for k, _ in node.value}


def _number(v, where):
    if isinstance(v, bool):
        raise ModelFileError(f"{where}: expected a number, got {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        try:
            return float(Fraction(v.strip()))
        except (ValueError, ZeroDivisionError):
            pass
    raise ModelFileError(f"{where}: expected a number, got {v!r}")


def _numbers(v, where, length=None):
    if not isinstance(v, list):
        raise ModelFileError(f"{where}: expected a list")
    if length is not None and len(v) != length:
        raise ModelFileError(f"{where}: expected {length} entries, got {len(v)}")
    return [_number(x, f"{where}[{i}]") for i, x in enumerate(v)]


def parse_model(text: str, source: str = "<model>") -> Model:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f" line {mark.line + 1}" if mark is not None else ""
        raise ModelFileError(f"{source}:{line} malformed YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ModelFileError(f"{source}: expected a mapping at top level")
    lines = _key_lines(text)

    def at(key):
        return f"{source}: line {lines[key]} field '{key}'" if key in lines else f"{source}: field '{key}'"

    unknown = sorted(set(doc) - set(REQUIRED) - set(OPTIONAL))
    if unknown:
        raise ModelFileError(f"{at(unknown[0])}: unknown field(s) {unknown}")
    missing = [k for k in REQUIRED if k not in doc]
    if missing:
        raise ModelFileError(f"{source}: missing field(s) {missing}")

    n = doc["dimension"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ModelFileError(f"{at('dimension')}: expected a positive integer")
    states = doc["states"]
    if not isinstance(states, list) or not states:
        raise ModelFileError(f"{at('states')}: expected a nonempty list of labels")
    states = [str(s) for s in states]
    pi = _numbers(doc["pi"], at("pi"), len(states))

    support = doc["support"]
    if not isinstance(support, list) or not support:
        raise ModelFileError(f"{at('support')}: expected a nonempty list of vectors")
    vecs = []
    for i, u in enumerate(support):
        u = [u] if isinstance(u, int) and n == 1 else u
        if (not isinstance(u, list) or len(u) != n
                or not all(isinstance(a, int) and not isinstance(a, bool) for a in u)):
            raise ModelFileError(f"{at('support')}[{i}]: expected {n} integers, got {u!r}")
        vecs.append(u)
    k = len(vecs)
    p0 = _numbers(doc["p0"], at("p0"), k)

    c = doc["c"]
    if not isinstance(c, dict):
        raise ModelFileError(f"{at('c')}: expected a mapping from state to list")
    extra = sorted(set(map(str, c)) - set(states))
    if extra:
        raise ModelFileError(f"{at('c')}: states {extra} not in 'states'")
    cmap = {str(s): v for s, v in c.items()}
    cols = []
    for s in states:
        if s not in cmap:
            raise ModelFileError(f"{at('c')}: no row for state {s!r}")
        cols.append(_numbers(cmap[s], f"{at('c')}[{s}]", k))

    name = doc.get("name", "")
    try:
        return Model(
            alphabet=EnvAlphabet(tuple(states)),
            law=EnvLaw(np.array(pi)),
            kernel=Kernel(np.array(vecs), np.array(p0), np.array(cols).T),
            name=str(name) if name is not None else "",
        )
    except ModelError as exc:
        raise ModelFileError(f"{source}: {exc}") from None


def load_model(path) -> Model:
    """Load a model file, or a zoo model by bare name (e.g. ``E1``)."""
    p = Path(path)
    if not p.exists() and str(path) in ZOO:
        return zoo_model(str(path))
    try:
        text = p.read_text()
    except OSError as exc:
        raise ModelFileError(f"{path}: cannot read ({exc.strerror})") from None
    return parse_model(text, str(path))


def zoo_text(name: str) -> str:
    if name not in ZOO:
        raise KeyError(f"no zoo model named {name!r}; have {list(ZOO)}")
    return resources.files("rwlab.zoo").joinpath(f"{name}.yaml").read_text()


def zoo_model(name: str) -> Model:
    return parse_model(zoo_text(name), f"zoo:{name}")


def model_dict(model: Model) -> dict:
    k = model.kernel
    return {
        "name": model.name,
        "dimension": model.dim,
        "states": list(model.alphabet.states),
        "pi": model.law.probs.tolist(),
        "support": k.support.tolist(),
        "p0": k.p0.tolist(),
        "c": {s: k.c[:, i].tolist() for i, s in enumerate(model.alphabet.states)},
    }


def model_hash(model: Model) -> str:
    """sha256 over the canonical JSON of the parsed model (name excluded)."""
    d = model_dict(model)
    d.pop("name")
    blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
