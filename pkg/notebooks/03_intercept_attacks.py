# %% [markdown]
# # Intercepting the forward particle
#
# Measuring B in Z (or copying it with a CNOT) tells Eve Bob's future SIFT
# bit, but it destroys the entanglement Alice tests on CTRL pairs: half of
# her Bell measurements come out phi-.

# %%
from sqkd import ExperimentConfig, run_experiment

for name in ("intercept_resend_z", "cnot_ancilla"):
    cfg = ExperimentConfig(protocol={"n_pairs": 300}, attack={"name": name, "params": {}},
                           trials=10, master_seed=2)
    report = run_experiment(cfg)
    print(name)
    print(report.theory.to_table())
    print()
