"""
Train the 3x3 convolutional network (per-sample SGD) and the 9-8-1
fully connected baseline (batch gradient descent) on 2007-2015, then
forecast 2016-2020.
"""

import numpy as np

from emufleet import bpnn, cnn
from emufleet.data import fit_normalization, forecast_records, load_bundled_dataset

records = load_bundled_dataset()
spec = fit_normalization(records)
config = cnn.TrainConfig(learning_rate=0.5, epochs=100, seed=0)

cnn_params, cnn_trace = cnn.train_cnn(cnn.make_samples(records, spec), config)
mlp_params, mlp_trace = bpnn.train_bpnn(bpnn.make_mlp_samples(records, spec), config)

# Per-sample updates do not promise a monotone epoch MSE, though this seed falls steadily
print("CNN  MSE, epochs 1-5:", np.round(cnn_trace[:5], 4), " final:", f"{cnn_trace[-1]:.5f}")
print("BPNN MSE, epochs 1-5:", np.round(mlp_trace[:5], 4), " final:", f"{mlp_trace[-1]:.5f}")

future = forecast_records(records)
print("\nyear   CNN  BPNN")
for (year, c), (_, b) in zip(cnn.cnn_predict(cnn_params, future, spec),
                             bpnn.mlp_predict(mlp_params, future, spec)):
    print(f"{year}  {c:4d}  {b:4d}")
print("actual 2016 fleet: 2586 trains")

# Seed sensitivity: the initialization is random, so look at a small sweep
finals = [cnn.train_cnn(cnn.make_samples(records, spec), cnn.TrainConfig(seed=s))[1][-1] for s in range(10)]
print("\nCNN final MSE over 10 seeds:", np.round(finals, 4))
