# %% [markdown]
# # Reconciliation and privacy amplification
#
# Parity blocks with mismatched parity are dropped. Blocks with an even
# number of errors slip through, which the residual rate below quantifies.

# %%
import numpy as np

from sqkd.postproc import (KeyMaterial, Origin, parity_block_reconcile, privacy_amplify,
                           recommend_output_length)

rng = np.random.default_rng(0)
e, k, n = 0.03, 8, 40_000
q = 1 - 2 * e
residuals = []
for _ in range(20):
    alice = rng.integers(0, 2, n).astype(np.uint8)
    bob = alice ^ (rng.random(n) < e).astype(np.uint8)
    a2, b2 = parity_block_reconcile(KeyMaterial(alice, Origin.RAW_ALICE),
                                    KeyMaterial(bob, Origin.RAW_BOB), k, rng)
    residuals.append(np.mean(a2.bits != b2.bits))
print("kept", len(a2), "leaked", a2.leaked_bits)
print("residual", np.mean(residuals), "expected", e * (1 - q ** (k - 1)) / (1 + q ** k))

# %%
m = recommend_output_length(len(a2), a2.leaked_bits)
seed = rng.integers(0, 2, len(a2) + m - 1)
final = privacy_amplify(a2, m, seed)
print(len(final), final.hex()[:32])
