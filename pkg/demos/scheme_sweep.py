"""Compare the three sharding schemes and the effect of scheduling on one workload.

Run: python demos/scheme_sweep.py [zones] [global_ratio]
"""

import sys

from hiershard import ExperimentConfig, ProtocolConfig, Scheme, WorkloadConfig, run_experiment
from hiershard.core import SECOND


def config(zones: int, g: float, scheme: Scheme, scheduling: bool) -> ExperimentConfig:
    work = WorkloadConfig(zones=zones, accounts_per_zone=500, global_ratio=g, send_rate=300,
                          duration_s=2.0, hot_accounts=50, hot_prob=0.3)
    proto = ProtocolConfig(delta_gst=SECOND, scheme=scheme, scheduling=scheduling)
    return ExperimentConfig(zones=zones, protocol=proto, workload=work)


def main() -> None:
    zones = int(sys.argv[1]) if len(sys.argv) > 1 else 4
    g = float(sys.argv[2]) if len(sys.argv) > 2 else 0.3
    print(f"{'scheme':<13}{'sched':<7}{'tps':>8}{'p50 ms':>9}{'aborts':>9}{'proc ms':>9}{'storage MB':>12}")
    for scheme in Scheme:
        for scheduling in (True, False) if scheme is not Scheme.PERFORMANCE else (True,):
            rep = run_experiment(config(zones, g, scheme, scheduling)).report
            p50 = rep.latency_ms.get("p50") or 0.0
            label = "-" if scheme is Scheme.PERFORMANCE else ("on" if scheduling else "off")
            proc = rep.mean_processing_ms or 0.0  # no main chain under performance sharding
            print(f"{scheme.value:<13}{label:<7}{rep.throughput_tps:>8.1f}{p50:>9.1f}"
                  f"{rep.abort_ratio:>9.3f}{proc:>9.2f}{rep.storage_total / 1e6:>12.1f}")


if __name__ == "__main__":
    main()
