"""
Checking gradients against finite differences
=============================================

Every backward rule is compared with a central difference. A healthy core
reports relative errors many orders below the tolerance. Breaking one rule
on purpose shows what a failure looks like.
"""

from gnnplus import tensor as T
from gnnplus.gradcheck import TOLERANCE, check_model, check_ops
from gnnplus.layers import TechniqueFlags

worst = max(check_ops(), key=lambda r: r.error)
print(f"worst primitive: {worst.name}  error {worst.error:.2e}  (tolerance {TOLERANCE:g})")

everything = TechniqueFlags(True, True, 0.2, True, True, True)
for backbone in ("gcn", "gin", "gatedgcn"):
    r = check_model(backbone, everything, seed=0)
    print(f"{r.name:40s} error {r.error:.2e}")

# Scale the ReLU gradient by 1.5 and watch the check catch it.
good = T.BACKWARD_RULES["relu"]
T.BACKWARD_RULES["relu"] = lambda ctx, g, inputs, needs: (g * (inputs[0].data > 0) * 1.5,)
try:
    bad = [r for r in check_ops() if r.error > TOLERANCE]
    print("failing after sabotage:", [r.name for r in bad])
finally:
    T.BACKWARD_RULES["relu"] = good
