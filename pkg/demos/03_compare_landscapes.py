"""End to end through the command line: two runs, their landscapes, and a comparison.

Run with ``python demos/03_compare_landscapes.py [output-root]``.  The
default root is ``demo-runs`` in the current directory; about a minute.
Rerunning is cheap to check: identical artifacts are left untouched.
"""

import json
import sys
from pathlib import Path

from critic_landscape.cli import main

root = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-runs")
root.mkdir(parents=True, exist_ok=True)

runs = {}
for system in ("cartpole", "spacecraft"):
    cfg = root / f"{system}.json"
    cfg.write_text(json.dumps({"system": system, "seed": 0}, indent=2) + "\n")
    out = root / system
    for argv in (["train", str(cfg), "-o", str(out), "-q"],
                 ["landscape", str(out)],
                 ["indices", str(out)],
                 ["perf", str(out)],
                 ["plot", str(out)]):
        print("$ critic-landscape", " ".join(argv))
        code = main(argv)
        if code != 0:
            sys.exit(code)
    runs[system] = out

print("$ critic-landscape compare", runs["cartpole"], runs["spacecraft"])
code = main(["compare", str(runs["cartpole"]), str(runs["spacecraft"])])
print(f"\nplot scripts: {runs['cartpole']}/landscape/pca_final/plot_contour.py (needs matplotlib)")
sys.exit(code)
