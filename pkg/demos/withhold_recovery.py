"""Zone 1's full member withholds its local blocks; audit deposes it.

Run: python demos/withhold_recovery.py
"""

from pathlib import Path

from hiershard import load_config, run_experiment
from hiershard.core import MS

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "withhold.toml"


def main() -> None:
    run = run_experiment(load_config(CONFIG))
    for vc in run.env.obs.view_changes:
        print(f"zone {vc['zone']}: {vc['old']} -> {vc['new']} at {vc['time'] / MS:.0f} ms "
              f"(effective round {vc['effective_round']})")
    bad = {k: v for k, v in run.violations.items() if v}
    rep = run.report
    print(f"committed {rep.committed}/{rep.submitted}, unresolved {rep.unresolved}, violations {bad or 'none'}")


if __name__ == "__main__":
    main()
