"""How feedback strength sets trainability of the delay-loop classifier.

At low beta the free-running loop relaxes to a limit cycle and barely reacts
to its inputs; near beta ~ 3 the transient dynamics are rich enough for the
controls to shape class-dependent trajectories.  Sweep beta at reduced scale
and watch the test accuracy jump.

Run:  python3 demos/feedback_strength_sweep.py  (several minutes)
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from dynlearn.analysis import run_sweep
from dynlearn.config import TrainConfig

base = TrainConfig(kind="oeo_spiral", seed=0, epochs=50, m_tau=460,
                   train_per_class=250, test_per_class=250)

rows = run_sweep(base, [("beta", ["1.0", "2.0", "3.0"])])

print("beta   test_acc  final_loss")
for beta, _, acc, loss, diverged in rows:
    print(f"{beta:>4}   {float(acc):8.3f}  {float(loss):10.4f}"
          + ("  (diverged samples!)" if diverged else ""))

accs = {r[0]: float(r[2]) for r in rows}
print(f"\naccuracy gap beta=3 vs beta=1: "
      f"{accs['3.0'] - accs['1.0']:+.3f}")
print("Below beta ~ 2 the loop settles into a stable oscillation that washes "
      "out the input; stronger feedback keeps the transient alive long "
      "enough to be steered.")
