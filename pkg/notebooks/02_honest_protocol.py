# %% [markdown]
# # An honest run
#
# Alice sends one half of each Bell pair to Bob. Bob either measures it
# (SIFT) or reflects it (CTRL), and in the randomization variant returns
# everything in a secret order. With no eavesdropper both checks see zero
# errors and the final keys agree.

# %%
from sqkd import ProtocolConfig, Variant, run_protocol

for variant in Variant:
    r = run_protocol(ProtocolConfig(400, variant, seed=5))
    s = r.summary()
    print(variant.value, {k: s[k] for k in ("ctrl_error_rate", "sift_check_error_rate",
                                            "raw_key_length", "final_key_length",
                                            "final_keys_equal")})

# %% [markdown]
# The trace records every step. Here are the first few events of a tiny run.

# %%
trace = []
run_protocol(ProtocolConfig(3, seed=1), trace=trace)
for event in trace[:8]:
    print(event)
