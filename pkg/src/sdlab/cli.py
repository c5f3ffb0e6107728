"""Batch experiment runner: subcommands, plain-text configs, CSV output.

Every run is determined bit-for-bit by (config, seed, build): replica r
derives its stream from the master seed through the documented splitmix
hash (see _accel.replica_seed), CSV reals carry 17 significant digits
so values round-trip exactly, and summaries are reduced in replica
order regardless of thread count.

Config files are UTF-8 text, one ``key = value`` per line, ``#`` starts
a comment; nested model parameters use dotted keys (``model.l = 1.0``).
Flags override environment (SDLAB_SEED, SDLAB_THREADS), which overrides
the config file.

Exit codes: 0 ok, 2 config error, 3 runtime cap exceeded, 4 acceptance
failure (the ``verify`` meta-command).
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import subprocess
import sys

import numpy as np

from . import constants as co
from . import induced as ind
from . import observables as ob
from . import stats as st
from .chain import build_algebraic_kernel, build_linear_kernel, chain_path
from .errors import ConfigError, IterationCapError, SdlabError
from .geometry import build_drivebelt, build_lorentz_rect, build_stadium

MODELS = ("stadium", "drivebelt", "lorentz_case1", "chain_linear",
          "chain_algebraic")

DEFAULTS = {
    "model": "stadium",
    "model.l": "1.0",
    "model.theta0": str(7.0 * math.pi / 6.0),
    "model.theta1": "0.6",
    "model.l1": "2.0",
    "model.l2": "2.0",
    "model.rho_c": "0.75",
    "model.rho_q": "0.6",
    "model.beta": "3.0",
    "model.m_max": "1000000",
    "observable": "constant",
    "observable.value": "1.0",
    "observable.periods": "1",
    "observable.angle_width": "0.2",
    "n": "1000",
    "replicas": "1",
    "seed": "1",
    "threads": "1",
    "t_grid": "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0",
    "out": ".",
    "cusp.a_bar": "1.0",
    "cusp.perimeter": "10.0",
    "burn_in": "10000",
    "tail.grid": "50,80,110,150,210,280,380,500",
}


def parse_config(path: str) -> dict:
    """Read ``key = value`` lines; later keys override earlier ones."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(
                        f"{path}:{lineno}: expected 'key = value', "
                        f"got {raw.strip()!r}")
                key, val = line.split("=", 1)
                out[key.strip()] = val.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return out


class Settings:
    """Merged configuration with typed accessors."""

    def __init__(self, cfg: dict):
        self.cfg = dict(DEFAULTS)
        self.cfg.update(cfg)

    def get(self, key: str) -> str:
        if key not in self.cfg:
            raise ConfigError(f"missing config key {key!r}")
        return self.cfg[key]

    def get_float(self, key: str) -> float:
        try:
            return float(self.get(key))
        except ValueError as exc:
            raise ConfigError(f"config key {key!r} is not a number: "
                              f"{self.get(key)!r}") from exc

    def get_int(self, key: str) -> int:
        try:
            return int(self.get(key))
        except ValueError as exc:
            raise ConfigError(f"config key {key!r} is not an integer: "
                              f"{self.get(key)!r}") from exc

    def get_floats(self, key: str):
        try:
            return [float(v) for v in self.get(key).split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"config key {key!r} is not a comma list: "
                              f"{self.get(key)!r}") from exc


def build_model(s: Settings):
    """The configured dynamics: a BilliardTable or a SpreadingKernel."""
    model = s.get("model")
    if model == "stadium":
        return build_stadium(s.get_float("model.l"))
    if model == "drivebelt":
        return build_drivebelt(s.get_float("model.theta0"),
                               s.get_float("model.theta1"),
                               s.get_float("model.l"))
    if model == "lorentz_case1":
        return build_lorentz_rect(s.get_float("model.l1"),
                                  s.get_float("model.l2"),
                                  s.get_float("model.rho_c"),
                                  s.get_float("model.rho_q"))
    if model == "chain_linear":
        return build_linear_kernel(s.get_float("model.beta"),
                                   m_max=s.get_int("model.m_max"))
    if model == "chain_algebraic":
        return build_algebraic_kernel(m_max=s.get_int("model.m_max"))
    raise ConfigError(
        f"config key 'model': unknown model {model!r}; "
        f"expected one of {', '.join(MODELS)}")


def build_observable(s: Settings, table):
    return ob.build_catalog_entry(
        s.get("observable"), table,
        value=s.get_float("observable.value"),
        periods=s.get_int("observable.periods"),
        angle_width=s.get_float("observable.angle_width"))


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return format(float(x), ".17g")


def _write_csv(path: str, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _is_chain(source) -> bool:
    return hasattr(source, "ps3")


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(s: Settings) -> int:
    source = build_model(s)
    n = s.get_int("n")
    replicas = s.get_int("replicas")
    seed = s.get_int("seed")
    rows = []
    if _is_chain(source):
        for r in range(replicas):
            cells = chain_path(source, n, int(st.replica_seed(seed, r)))
            rows.extend((r, i, int(m), 0, float(m))
                        for i, m in enumerate(cells))
    else:
        f = build_observable(s, source)
        for r in range(replicas):
            rec = ind.simulate_returns(source, n,
                                       int(st.replica_seed(seed, r)), f=f)
            rows.extend(
                (r, i, int(rec["R"][i]), int(rec["k"][i]),
                 float(rec["f_tilde"][i])) for i in range(n))
    path = _write_csv(os.path.join(s.get("out"), "returns.csv"),
                      ("replica", "step", "m", "k", "f_tilde"), rows)
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_tail(s: Settings) -> int:
    source = build_model(s)
    n = s.get_int("n")
    seed = s.get_int("seed")
    grid = np.array([int(v) for v in s.get_floats("tail.grid")],
                    dtype=np.int64)
    if _is_chain(source):
        cells = chain_path(source, n, seed)
        est = st.tail_constant(cells.astype(np.float64), grid=grid)
    else:
        stats = ind.collect_return_stats(source, n, seed, tail_grid=grid)
        est = st.tail_constant_from_counts(stats.tail_grid,
                                           stats.tail_counts, n)
    rows = [(int(g), int(c), c / est.n_samples, v)
            for g, c, v in zip(est.grid, est.counts, est.n2p)]
    path = _write_csv(os.path.join(s.get("out"), "tail.csv"),
                      ("n", "count", "prob", "n2prob"), rows)
    print(f"wrote {path}")
    print(f"plateau c_hat = {_fmt(est.c_hat)} "
          f"ci = [{_fmt(est.ci[0])}, {_fmt(est.ci[1])}] "
          f"from grid index {est.plateau_start}")
    return 0


def cmd_transition(s: Settings) -> int:
    source = build_model(s)
    n = s.get_int("n")
    seed = s.get_int("seed")
    if _is_chain(source):
        cells = chain_path(source, n + 1, seed)
        m, k = cells[:-1], cells[1:]
    else:
        rec = ind.simulate_returns(source, n + 1, seed)
        m, k = rec["R"][:-1], rec["R"][1:]
    est = st.transition_estimate(m, k)
    rows = []
    for i in range(est.m_edges.size - 1):
        if est.totals[i] == 0:
            continue
        for j in range(est.n_edges.size - 1):
            if est.counts[i, j] == 0:
                continue
            rows.append((est.m_edges[i], int(est.n_edges[j]),
                         est.p_hat[i, j], est.stderr[i, j],
                         est.model_p[i, j]))
    path = _write_csv(os.path.join(s.get("out"), "transition.csv"),
                      ("m_bin", "n", "p_hat", "stderr", "model_p"), rows)
    print(f"wrote {path} ({len(rows)} cells; "
          f"{est.empty_m_bins.size} empty m-bins)")
    return 0


def cmd_clt(s: Settings) -> int:
    source = build_model(s)
    res = st.clt_experiment(source, s.get_int("n"), s.get_int("replicas"),
                            s.get_int("seed"),
                            normalizer=s.cfg.get("normalizer", "empirical"),
                            burn_in=s.get_int("burn_in"),
                            threads=s.get_int("threads"))
    out = s.get("out")
    _write_csv(os.path.join(out, "clt_values.csv"), ("replica", "value"),
               list(enumerate(res.values)))
    mo = res.moments
    path = _write_csv(
        os.path.join(out, "clt_summary.csv"),
        ("D", "mean", "var", "skew", "kurt", "normalizer"),
        [(res.D, mo["mean"], mo["var"], mo["skew"], mo["kurt"],
          res.meta["normalizer"])])
    print(f"wrote {path}")
    print(f"D = {_fmt(res.D)}  normalizer ratio empirical/closed-form = "
          f"{_fmt(res.meta.get('normalizer_ratio'))}")
    return 0


def cmd_ip(s: Settings) -> int:
    source = build_model(s)
    sample, diag = st.path_experiment(
        source, s.get_int("n"), s.get_int("replicas"), s.get_floats("t_grid"),
        s.get_int("seed"), burn_in=s.get_int("burn_in"),
        threads=s.get_int("threads"))
    rows = [(r, sample.t_grid[j], sample.W[r, j])
            for r in range(sample.W.shape[0])
            for j in range(sample.t_grid.size)]
    path = _write_csv(os.path.join(s.get("out"), "ip.csv"),
                      ("replica", "t", "W"), rows)
    print(f"wrote {path}")
    print(f"var slope / var(W(1)) = {_fmt(diag['slope_over_var1'])}  "
          f"max |increment corr| = {_fmt(diag['max_abs_increment_corr'])}")
    return 0


def cmd_constants(s: Settings) -> int:
    f_one = ob.constant(1.0)
    records = [
        co.stadium_sigma2(f_one, s.get_float("model.l")),
        co.drivebelt_sigma2(f_one, s.get_float("model.theta0"),
                            s.get_float("model.theta1"),
                            s.get_float("model.l")),
        co.cusp_sigma2(lambda phi: 2.0, s.get_float("cusp.a_bar"),
                       s.get_float("cusp.perimeter")),
    ]
    rows = [(d.model, d.theta, d.c_M_f, d.mu_M_M, d.sigma2_induced,
             d.sigma2_original, d.provenance) for d in records]
    ker3 = build_linear_kernel(3.0, m_max=10 ** 5)
    c3 = st._chain_tail_constant(ker3)
    rows.append(("chain_linear_beta3", ker3.theta, c3, None,
                 co.variance_ratio(ker3.theta) * c3, None, "surrogate"))
    path = _write_csv(
        os.path.join(s.get("out"), "constants.csv"),
        ("model", "theta", "c_M", "mu_M_M", "sigma2_induced",
         "sigma2_original", "provenance"), rows)
    print(f"wrote {path}")
    return 0


def cmd_verify(s: Settings) -> int:
    """Run the acceptance suite; exit 4 on any failure."""
    target = os.path.join("tests", "test_acceptance.py")
    if not os.path.exists(target):
        raise ConfigError(
            f"{target} not found; run verify from the repository root")
    proc = subprocess.run([sys.executable, "-m", "pytest", target, "-v"])
    return 0 if proc.returncode == 0 else 4


COMMANDS = {
    "simulate": cmd_simulate,
    "tail": cmd_tail,
    "transition": cmd_transition,
    "clt": cmd_clt,
    "ip": cmd_ip,
    "constants": cmd_constants,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sdlab",
        description="Experiments on abnormal CLTs in slowly mixing "
                    "billiards and their chain surrogates.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument("--seed", type=int, help="master seed (64-bit)")
    parser.add_argument("--threads", type=int, help="worker thread count")
    parser.add_argument("--out", help="output directory")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config) if args.config else {}
        if "SDLAB_SEED" in os.environ:
            cfg["seed"] = os.environ["SDLAB_SEED"]
        if "SDLAB_THREADS" in os.environ:
            cfg["threads"] = os.environ["SDLAB_THREADS"]
        if args.seed is not None:
            cfg["seed"] = str(args.seed)
        if args.threads is not None:
            cfg["threads"] = str(args.threads)
        if args.out is not None:
            cfg["out"] = args.out
        s = Settings(cfg)
        os.makedirs(s.get("out"), exist_ok=True)
        return COMMANDS[args.command](s)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except IterationCapError as exc:
        print(f"runtime cap exceeded: {exc}", file=sys.stderr)
        return 3
    except SdlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
