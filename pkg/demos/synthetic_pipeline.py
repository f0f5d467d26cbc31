"""Fit and evaluate the spatio-temporal model on a synthetic network.

The synthetic field has a known truth, so the script reports both the error
against noisy held-out observations and against the noise-free field.
Run with ``python3 demos/synthetic_pipeline.py``.
"""
import numpy as np

from stwind import data, st_model, synth

m, truth = synth.generate(S=125, T=2000, seed=0)
split = data.split_network(m.shape[0], 0.8, seed=0)
train, test = m.subset(split.train_indices), m.subset(split.test_indices)

# station coordinates double as the input features here
cfg = st_model.StModelConfig(seed=0, n_members=10)
model = st_model.fit(train, train.coords, cfg)
vm = st_model.fit_variance_model(model, train, train.coords, cfg)
pred = st_model.predict_all(model, vm, test.coords)

print(f"components retained: {model.n_components}")
print("held-out metrics:", st_model.evaluate(model, test, test.coords, pred))
print(f"coverage of +-1.96 sd: {st_model.coverage_fraction(test.values, pred.mean, pred.var_pred):.3f}")
err = pred.mean - truth.field(test.coords)
print(f"RMSE against the noise-free field: {np.sqrt(np.mean(err ** 2)):.3f}")
