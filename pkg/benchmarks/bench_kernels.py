"""Time the compiled kernels against the pure-Python fallback.

Each backend runs in its own interpreter because the choice is fixed at
import time by HARVESTSIM_NO_JIT. The first run in each process is a warm-up
(numba compiles or loads its cache there) and is reported separately.

    python3 benchmarks/bench_kernels.py [--seconds 5] [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time
from harvestsim._jit import BACKEND
from harvestsim.engine import Scenario, run
from harvestsim.icu import IcuConfig
from harvestsim.source import SourceModel
from harvestsim.storage import ArrayConfig, StorageCap

seconds, repeat = float(sys.argv[1]), int(sys.argv[2])

def workload(duration):
    srcs = (SourceModel.constant("solar", 3e-3), SourceModel.constant("teg", 4e-3))
    caps = (StorageCap("C1", 15e-3, 3.0, "to-supply"), StorageCap("C2", 33e-3, 0.0, "to-combiner"))
    return Scenario(sources=srcs, storage=ArrayConfig(caps=caps), icu=IcuConfig(enabled=False),
                    duration=duration, report_period=0.1)

t0 = time.perf_counter()
run(workload(0.01))
warm = time.perf_counter() - t0
times = []
for _ in range(repeat):
    t0 = time.perf_counter()
    r = run(workload(seconds))
    times.append(time.perf_counter() - t0)
print(json.dumps({"backend": BACKEND, "warmup_s": warm, "best_s": min(times),
                  "steps": round(seconds / 100e-6), "pulses": r.metrics["pulses"]}))
"""


def measure(no_jit: bool, seconds: float, repeat: int) -> dict:
    env = dict(os.environ, HARVESTSIM_NO_JIT="1" if no_jit else "0")
    out = subprocess.run([sys.executable, "-c", CHILD, str(seconds), str(repeat)],
                         env=env, check=True, capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seconds", type=float, default=5.0, help="simulated time per run")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    rows = [measure(flag, args.seconds, args.repeat) for flag in (False, True)]
    if rows[0]["pulses"] != rows[1]["pulses"]:
        print("backends disagree on the pulse count", file=sys.stderr)
        return 1
    print(f"{'backend':8s} {'warm-up s':>10s} {'best s':>9s} {'steps/s':>12s}")
    for r in rows:
        print(f"{r['backend']:8s} {r['warmup_s']:10.3f} {r['best_s']:9.3f} {r['steps'] / r['best_s']:12.0f}")
    print(f"speed-up {rows[1]['best_s'] / rows[0]['best_s']:.1f}x over {rows[0]['steps']} steps")
    return 0


if __name__ == "__main__":
    sys.exit(main())
