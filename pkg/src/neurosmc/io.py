"""CSV persistence for traces, filter outputs, chains and bound series.

Floats are written with :func:`repr`, the shortest decimal form that parses
back to the identical binary value, so emit -> parse is lossless.  Each file
starts with one ``#``-prefixed metadata line carrying the scalar fields that
have no column of their own (t_s, x0, noise levels, ...).
"""

import csv
import json

import numpy as np

from .bounds import PcrbSeries
from .filtering import FilterOutput
from .pmcmc import Chain
from .simulate import Trace

__all__ = [
    "write_trace_csv", "read_trace_csv",
    "write_filter_csv", "read_filter_csv",
    "write_chain_csv", "read_chain_csv",
    "write_pcrb_csv", "read_pcrb_csv",
    "write_manifest",
]


def _fmt(x):
    return "" if x is None else repr(float(x))


def _fmt_list(values):
    return ",".join(repr(float(v)) for v in values)


def _meta_line(pairs):
    body = "; ".join(f"{k}={v}" for k, v in pairs.items() if v != "")
    return f"# {body}"


def _read_rows(path):
    """Returns (metadata dict, header list, list of row lists)."""
    meta = {}
    with open(path, newline="") as fh:
        first = fh.readline()
        if first.startswith("#"):
            for item in first[1:].strip().split("; "):
                if "=" in item:
                    key, _, value = item.partition("=")
                    meta[key.strip()] = value
            header_line = fh.readline()
        else:
            header_line = first
        reader = csv.reader([header_line.rstrip("\n")])
        header = next(reader)
        rows = list(csv.reader(fh))
    return meta, header, rows


def write_trace_csv(path, trace: Trace):
    four = trace.dim == 4
    meta = {
        "t_s": _fmt(trace.t_s),
        "x0": "" if trace.x0 is None else _fmt_list(trace.x0),
        "sigma_y": _fmt(trace.sigma_y),
        "seed": "" if not isinstance(trace.seed, (int, np.integer)) else str(int(trace.seed)),
    }
    with open(path, "w", newline="") as fh:
        fh.write(_meta_line(meta) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["k", "t_ms", "v_true", "n_true", "gE_true", "gI_true",
                         "i_app", "y"])
        y = trace.observations
        for k in range(trace.n_steps):
            row = [k + 1, _fmt((k + 1) * trace.t_s),
                   _fmt(trace.states[k, 0]), _fmt(trace.states[k, 1]),
                   _fmt(trace.states[k, 2]) if four else "",
                   _fmt(trace.states[k, 3]) if four else "",
                   _fmt(trace.applied_current[k]),
                   _fmt(y[k]) if y is not None else ""]
            writer.writerow(row)


def read_trace_csv(path):
    meta, header, rows = _read_rows(path)
    expected = ["k", "t_ms", "v_true", "n_true", "gE_true", "gI_true", "i_app", "y"]
    if header != expected:
        raise ValueError(f"unexpected trace header: {header}")
    if not rows:
        raise ValueError("trace file has no rows")
    four = rows[0][4] != ""
    dim = 4 if four else 2
    n = len(rows)
    states = np.empty((n, dim))
    i_app = np.empty(n)
    has_y = rows[0][7] != ""
    y = np.empty(n) if has_y else None
    for i, row in enumerate(rows):
        states[i, 0] = float(row[2])
        states[i, 1] = float(row[3])
        if four:
            states[i, 2] = float(row[4])
            states[i, 3] = float(row[5])
        i_app[i] = float(row[6])
        if has_y:
            y[i] = float(row[7])
    t_s = float(meta["t_s"]) if "t_s" in meta else float(rows[0][1]) / float(rows[0][0])
    x0 = np.array([float(v) for v in meta["x0"].split(",")]) if "x0" in meta else None
    sigma_y = float(meta["sigma_y"]) if "sigma_y" in meta else None
    seed = int(meta["seed"]) if "seed" in meta else None
    return Trace(t_s=t_s, states=states, applied_current=i_app, x0=x0,
                 observations=y, sigma_y=sigma_y, seed=seed)


def write_filter_csv(path, out: FilterOutput):
    four = out.estimates.shape[1] == 4
    meta = {"t_s": _fmt(out.t_s), "n_particles": str(out.n_particles)}
    with open(path, "w", newline="") as fh:
        fh.write(_meta_line(meta) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["k", "t_ms", "v_hat", "n_hat", "gE_hat", "gI_hat",
                         "ess", "log_pred"])
        for k in range(out.n_steps):
            writer.writerow([
                k + 1, _fmt((k + 1) * out.t_s),
                _fmt(out.estimates[k, 0]), _fmt(out.estimates[k, 1]),
                _fmt(out.estimates[k, 2]) if four else "",
                _fmt(out.estimates[k, 3]) if four else "",
                _fmt(out.ess[k]), _fmt(out.log_predictive[k])])


def read_filter_csv(path):
    meta, header, rows = _read_rows(path)
    expected = ["k", "t_ms", "v_hat", "n_hat", "gE_hat", "gI_hat", "ess", "log_pred"]
    if header != expected:
        raise ValueError(f"unexpected filter header: {header}")
    four = rows[0][4] != ""
    dim = 4 if four else 2
    n = len(rows)
    est = np.empty((n, dim))
    ess = np.empty(n)
    log_pred = np.empty(n)
    for i, row in enumerate(rows):
        est[i, 0] = float(row[2])
        est[i, 1] = float(row[3])
        if four:
            est[i, 2] = float(row[4])
            est[i, 3] = float(row[5])
        ess[i] = float(row[6])
        log_pred[i] = float(row[7])
    t_s = float(meta["t_s"]) if "t_s" in meta else float(rows[0][1]) / float(rows[0][0])
    n_particles = int(meta.get("n_particles", 0))
    return FilterOutput(t_s=t_s, estimates=est, ess=ess, log_predictive=log_pred,
                        n_particles=n_particles)


def write_chain_csv(path, chain: Chain):
    meta = {
        "burn_in": str(chain.burn_in),
        "theta0": "" if chain.theta0 is None else _fmt_list(chain.theta0),
        "energy0": _fmt(chain.energy0),
        "proposal_factor": _fmt_list(np.asarray(chain.proposal_factor).ravel()),
    }
    with open(path, "w", newline="") as fh:
        fh.write(_meta_line(meta) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["j", "accepted", "energy", *chain.names])
        for j in range(chain.n_iters):
            writer.writerow([j + 1, int(chain.accepted[j]), _fmt(chain.energies[j]),
                             *(_fmt(x) for x in chain.samples[j])])


def read_chain_csv(path):
    meta, header, rows = _read_rows(path)
    if header[:3] != ["j", "accepted", "energy"]:
        raise ValueError(f"unexpected chain header: {header}")
    names = tuple(header[3:])
    n = len(rows)
    samples = np.empty((n, len(names)))
    energies = np.empty(n)
    accepted = np.empty(n, dtype=bool)
    for i, row in enumerate(rows):
        accepted[i] = bool(int(row[1]))
        energies[i] = float(row[2])
        samples[i] = [float(v) for v in row[3:]]
    k = len(names)
    factor = None
    if "proposal_factor" in meta:
        factor = np.array([float(v) for v in meta["proposal_factor"].split(",")]).reshape(k, k)
    theta0 = np.array([float(v) for v in meta["theta0"].split(",")]) if "theta0" in meta else None
    return Chain(names=names, samples=samples, energies=energies, accepted=accepted,
                 proposal_factor=factor, burn_in=int(meta.get("burn_in", 0)),
                 theta0=theta0,
                 energy0=float(meta["energy0"]) if "energy0" in meta else None)


def write_pcrb_csv(path, series: PcrbSeries):
    meta = {"t_s": _fmt(series.t_s), "n_trajectories": str(series.n_trajectories)}
    with open(path, "w", newline="") as fh:
        fh.write(_meta_line(meta) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["k", "t_ms", "bound_v", "bound_n"])
        for k in range(series.n_steps):
            writer.writerow([k + 1, _fmt((k + 1) * series.t_s),
                             _fmt(series.bounds[k, 0]), _fmt(series.bounds[k, 1])])


def read_pcrb_csv(path):
    meta, header, rows = _read_rows(path)
    if header != ["k", "t_ms", "bound_v", "bound_n"]:
        raise ValueError(f"unexpected bound header: {header}")
    bounds = np.array([[float(r[2]), float(r[3])] for r in rows])
    t_s = float(meta["t_s"]) if "t_s" in meta else float(rows[0][1]) / float(rows[0][0])
    info = np.full((len(rows), 2, 2), np.nan)
    return PcrbSeries(t_s=t_s, info=info, bounds=bounds,
                      n_trajectories=int(meta.get("n_trajectories", 0)))


def write_manifest(path, payload):
    """JSON manifest; numpy scalars/arrays are converted to plain lists."""

    def default(obj):
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, (np.integer, np.floating, np.bool_)):
            return obj.item()
        raise TypeError(f"cannot serialize {type(obj)!r}")

    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=default)
        fh.write("\n")
