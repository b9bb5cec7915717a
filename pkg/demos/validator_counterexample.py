"""Data that pass the asymptotic and positivity checks but are not spectral data of any problem."""
from msl import model_spectral_data, validate, OmegaClass
from msl.validator import sine_counterexample_data

bad = validate(sine_counterexample_data(N=40))
print("counterexample:", {k: bad.to_dict()[k] for k in ("condition1", "condition2", "condition3", "accepted")})
print("witness:", bad.condition3.details["witness"]["form"])
print("coefficients:", bad.condition3.details["witness"]["coefficients"].ravel())

good = validate(model_spectral_data(OmegaClass([0.0, 0.3]), 40))
print("model data accepted:", good.accepted)
