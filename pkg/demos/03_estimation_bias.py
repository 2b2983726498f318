"""How far do cached and accumulated statistics drift from a fresh pass?

The memory module keeps the latest feature of each sample; the iterative
estimator merges every batch ever seen. Both are compared, once per epoch,
with statistics recomputed from the whole dataset under the current model.
"""
# %%
import numpy as np

from tsa_lab import runner
from tsa_lab.dataset import two_moons_task

source, target = two_moons_task()
res = runner.bias_experiment(source, target, runner.TrainConfig(seed=0), "bias.csv")
rows = np.array(res.bias)

# %% Every 20th epoch: mean-difference bias and covariance bias for both.
print("epoch   mu(mem)  mu(iter)  sigma(mem)  sigma(iter)")
for e, m_mu, m_sig, i_mu, i_sig in rows[::20]:
    print(f"{int(e):5d}  {m_mu:8.4f}  {i_mu:8.4f}  {m_sig:10.4f}  {i_sig:11.4f}")

post = rows[rows[:, 0] > 3]
print("memory <= iterative after epoch 3:",
      f"{np.mean((post[:, 1] <= post[:, 3]) & (post[:, 2] <= post[:, 4])):.2%} of epochs")
