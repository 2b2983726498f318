"""Train with only a fraction of the (unlabeled) target set and evaluate on
all of it. Takes about a minute."""
# %%
from tsa_lab import runner
from tsa_lab.dataset import two_moons_task

source, target = two_moons_task()
rows = runner.rho_sweep(source, target, runner.TrainConfig(), seeds=range(5),
                        path="sweep.csv")
for rho, mean_acc, *per_seed in rows:
    print(f"rho={rho:.1f}  mean target accuracy {mean_acc:.3f}  seeds {per_seed}")
