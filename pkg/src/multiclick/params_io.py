"""Flat ``param<TAB>index...<TAB>value`` files for fitted models and counters.

The first line is a header naming the format version and the model. Floats
are written with ``repr`` so they reload bit-exactly.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Iterator, TextIO

import numpy as np

from .attractiveness import AttractivenessTable
from .estimation import Hyperparams, SatisfactionTable, SufficientStats
from .model import ModelParams

FORMAT = "multiclick-params"
VERSION = 1

Record = tuple


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def write_records(fh: TextIO, model: str, records: Iterable[Record]) -> None:
    fh.write(f"#{FORMAT}\t{VERSION}\t{model}\n")
    for rec in records:
        *keys, value = rec
        if any("\t" in str(k) or "\n" in str(k) for k in keys):
            raise ValueError(f"index contains a tab or newline: {keys!r}")
        fh.write("\t".join([*map(str, keys), _fmt(value)]) + "\n")


def read_records(fh: Iterable[str]) -> tuple[str, list[list[str]]]:
    lines = iter(fh)
    header = next(lines, "").rstrip("\r\n").split("\t")
    if len(header) != 3 or header[0] != f"#{FORMAT}":
        raise ValueError("not a parameter file")
    if int(header[1]) != VERSION:
        raise ValueError(f"unsupported parameter file version {header[1]}")
    return header[2], [line.rstrip("\r\n").split("\t") for line in lines if line.strip()]


def save(path: str | Path, model: str, records: Iterable[Record]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_records(fh, model, records)


def load(path: str | Path) -> tuple[str, list[list[str]]]:
    with open(path, encoding="utf-8") as fh:
        return read_records(fh)


def _num(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


# --- proposed model -----------------------------------------------------------

def model_records(p: ModelParams) -> Iterator[Record]:
    yield ("n_max", p.n_max)
    for j, v in enumerate(p.eta):
        yield ("eta", j, v)
    for i in range(p.n_max + 1):
        for j in range(1, p.n_max + 1):
            yield ("gamma", i, j, p.gamma[i, j])
    yield ("rho_default", p.rho.default)
    for (q, a), v in sorted(p.rho.values.items()):
        yield ("rho", q, a, v)
    yield ("theta_default", p.theta.default)
    for (q, a), v in sorted(p.theta.values.items()):
        yield ("theta", q, a, v)
    if p.hyper is not None:
        for j in range(p.n_max + 1):
            yield ("eta_alpha", j, p.hyper.eta_alpha[j])
            yield ("eta_beta", j, p.hyper.eta_beta[j])
        for i in range(p.n_max + 1):
            for j in range(1, p.n_max + 1):
                yield ("gamma_alpha", i, j, p.hyper.gamma_alpha[i, j])


def model_from_records(rows: list[list[str]]) -> ModelParams:
    n_max = next(int(r[1]) for r in rows if r[0] == "n_max")
    size = n_max + 1
    eta = np.zeros(size)
    gamma = np.zeros((size, size))
    ea, eb, ga = np.zeros(size), np.zeros(size), np.zeros((size, size))
    rho, theta = SatisfactionTable(), AttractivenessTable()
    has_hyper = False
    for r in rows:
        kind = r[0]
        if kind == "eta":
            eta[int(r[1])] = float(r[2])
        elif kind == "gamma":
            gamma[int(r[1]), int(r[2])] = float(r[3])
        elif kind == "rho":
            rho.values[(r[1], r[2])] = float(r[3])
        elif kind == "rho_default":
            rho.default = float(r[1])
        elif kind == "theta":
            theta.values[(r[1], r[2])] = float(r[3])
        elif kind == "theta_default":
            theta.default = float(r[1])
        elif kind == "eta_alpha":
            ea[int(r[1])] = float(r[2])
            has_hyper = True
        elif kind == "eta_beta":
            eb[int(r[1])] = float(r[2])
        elif kind == "gamma_alpha":
            ga[int(r[1]), int(r[2])] = float(r[3])
        elif kind != "n_max":
            raise ValueError(f"unknown parameter {kind!r}")
    return ModelParams(eta, gamma, rho, theta, Hyperparams(ea, eb, ga) if has_hyper else None)


def save_model(path: str | Path, params: ModelParams, name: str = "ours") -> None:
    save(path, name, model_records(params))


def load_model(path: str | Path) -> ModelParams:
    name, rows = load(path)
    return model_from_records(rows)


# --- counters -------------------------------------------------------------------

def stats_records(s: SufficientStats) -> Iterator[Record]:
    yield ("n_max", s.n_max)
    yield ("sessions", s.sessions)
    yield ("rejected", s.rejected)
    for j in range(s.n_max + 1):
        yield ("exactly", j, s.exactly[j])
        yield ("beyond", j, s.beyond[j])
    for i in range(s.n_max + 1):
        for j in range(1, s.n_max + 1):
            yield ("delta", i, j, s.delta[i, j])
    for name in ("psi", "kappa", "kappa_end"):
        for (q, a), v in sorted(getattr(s, name).items()):
            if v:
                yield (name, q, a, v)


def stats_from_records(rows: list[list[str]]) -> SufficientStats:
    n_max = next(int(r[1]) for r in rows if r[0] == "n_max")
    s = SufficientStats(n_max)
    for r in rows:
        kind = r[0]
        if kind in ("sessions", "rejected"):
            setattr(s, kind, int(r[1]))
        elif kind in ("exactly", "beyond"):
            getattr(s, kind)[int(r[1])] = int(r[2])
        elif kind == "delta":
            s.delta[int(r[1]), int(r[2])] = int(r[3])
        elif kind in ("psi", "kappa", "kappa_end"):
            getattr(s, kind)[(r[1], r[2])] = int(r[3])
    return s


def generic_from_records(rows: list[list[str]]) -> dict:
    """Group rows by parameter name: scalars map to a value, indexed ones to a dict."""
    out: dict = {}
    for r in rows:
        kind, *keys, value = r
        if keys:
            out.setdefault(kind, {})[tuple(keys) if len(keys) > 1 else keys[0]] = _num(value)
        else:
            out[kind] = _num(value)
    return out

