"""
Run the published trained parameters (bundled as a checkpoint) forward
over 2007-2015 and compare against the published fitted values.

Two things were never stated alongside those parameters: which years set
the min-max ranges, and whether kernels are applied flipped. Trying all
four combinations shows only one of them reproduces the fitted row.
"""

from emufleet.cnn import table4_params
from emufleet.data import load_bundled_dataset
from emufleet.pipeline import PUBLISHED_CNN_FITTED, replay_all

records = load_bundled_dataset()
params = table4_params()
print("kernel 1:\n", params.kernels[0])
print("dense weights:", params.dense_weights, "bias:", params.dense_bias)

results, best = replay_all(params, records)
print("\npublished fitted:", list(PUBLISHED_CNN_FITTED))
for res in results:
    fitted = [row.fitted for row in res.rows]
    print(f"{res.policy.value:11s} {res.convention:11s} sum|dev| {res.total_abs_deviation:5d}  {fitted}")
print("\nbetter-matching normalization:", best.value)

match = next(r for r in results if r.policy is best and r.convention == "correlation")
print("its 2016-2020 forecasts:", [t for _, t in match.forecast])
