# %% [markdown]
# # General unitary attacks
#
# Eve entangles a probe with B. The SIFT mismatch is |beta|^2. The CTRL
# error has the closed form 1 - (|gamma|^2 + |gamma'|^2)/4, which holds
# only when the probe states attached to |00> and |11> are orthogonal.

# %%
import math
import warnings

from sqkd import (exact_ctrl_error, extract_ctrl_coeffs, predict_ctrl_error_orthogonal,
                  predict_sift_error, UnitaryAttackParams)
from sqkd.analysis import ctrl_state
from sqkd.attacks import params_from_mapping

for theta in (0, math.pi / 12, math.pi / 8, math.pi / 6, math.pi / 4):
    p = UnitaryAttackParams.from_angle(theta)
    print(f"theta={theta:.3f}  predicted SIFT error {predict_sift_error(p).value:.4f}")

# %% [markdown]
# Backward-stage attack after an untouched forward leg. With orthogonal
# probes the formula and the exact Born-rule value agree; with identical
# probes the exact error drops to zero while the formula still says 0.5.

# %%
identity = UnitaryAttackParams.from_angle(0, probes="identical")
for probes in ("orthogonal", "identical"):
    bwd = params_from_mapping({"alpha": 1, "beta": 0, "beta_p": 0, "alpha_p": 1, "probes": probes})
    g, a, b = ctrl_state(identity, bwd)
    coeffs = extract_ctrl_coeffs(g, a, b)
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        formula = predict_ctrl_error_orthogonal(coeffs)
    print(probes, "exact", round(exact_ctrl_error(g, a, b), 6), "formula", formula)
