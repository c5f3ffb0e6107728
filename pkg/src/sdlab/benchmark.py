"""Timing comparison of the compiled kernels against the numpy fallback.

Run as ``python3 -m sdlab.benchmark``.  The same workloads execute twice,
once in-process (compiled path if numba imported cleanly) and once in a
subprocess with SDLAB_DISABLE_NUMBA=1, and the wall times are printed
side by side.  Outputs are also compared: both paths consume the same
counter-based random streams, so trajectories must agree exactly.
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
import time

import numpy as np

from . import HAVE_NUMBA
from .chain import build_linear_kernel, chain_clt_run
from .geometry import build_stadium
from .induced import replica_return_sums

CHAIN_STEPS = 2 * 10 ** 6
CHAIN_REPLICAS = 16
BILLIARD_RETURNS = 2 * 10 ** 4
BILLIARD_REPLICAS = 8
SEED = 20260815


def run_workloads() -> dict:
    """Execute both benchmark workloads and return times plus digests."""
    kernel = build_linear_kernel(3.0, m_max=10 ** 5)
    t0 = time.perf_counter()
    out = chain_clt_run(kernel, CHAIN_STEPS, CHAIN_REPLICAS, SEED,
                        burn_in=10 ** 3)
    t_chain = time.perf_counter() - t0

    table = build_stadium(1.0)
    t0 = time.perf_counter()
    sums, singular = replica_return_sums(table, BILLIARD_RETURNS,
                                         BILLIARD_REPLICAS, SEED)
    t_billiard = time.perf_counter() - t0

    return {
        "compiled": HAVE_NUMBA,
        "chain_seconds": t_chain,
        "chain_digest": [int(v) for v in out["sums"]],
        "billiard_seconds": t_billiard,
        "billiard_digest": [int(v) for v in sums],
        "billiard_singular": int(singular),
    }


def main() -> int:
    if os.environ.get("SDLAB_BENCH_CHILD"):
        print(json.dumps(run_workloads()))
        return 0

    here = run_workloads()
    mode = "numba" if here["compiled"] else "numpy fallback"
    print(f"in-process path: {mode}")
    print(f"  chain    {CHAIN_REPLICAS} x {CHAIN_STEPS} steps: "
          f"{here['chain_seconds']:.2f}s")
    print(f"  billiard {BILLIARD_REPLICAS} x {BILLIARD_RETURNS} returns: "
          f"{here['billiard_seconds']:.2f}s")

    env = dict(os.environ, SDLAB_DISABLE_NUMBA="1", SDLAB_BENCH_CHILD="1")
    proc = subprocess.run([sys.executable, "-m", "sdlab.benchmark"],
                          env=env, capture_output=True, text=True)
    if proc.returncode != 0:
        print(proc.stderr, file=sys.stderr)
        return 1
    there = json.loads(proc.stdout.strip().splitlines()[-1])
    print("numpy fallback (subprocess):")
    print(f"  chain    {there['chain_seconds']:.2f}s  "
          f"({there['chain_seconds'] / max(here['chain_seconds'], 1e-9):.1f}x)")
    print(f"  billiard {there['billiard_seconds']:.2f}s  "
          f"({there['billiard_seconds'] / max(here['billiard_seconds'], 1e-9):.1f}x)")

    same = (here["chain_digest"] == there["chain_digest"]
            and here["billiard_digest"] == there["billiard_digest"])
    print("outputs identical across paths:", "yes" if same else "NO")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
