"""
Load the bundled fleet dataset and look at how one year's nine indices
become a 3x3 "image" for the convolutional network.
"""

import numpy as np

from emufleet.data import (
    INDEX_NAMES,
    assemble_feature_map,
    fit_normalization,
    load_bundled_dataset,
    training_records,
)

records = load_bundled_dataset()
train = training_records(records)
print(f"{len(records)} years on file, {len(train)} with a known fleet size")

# Min-max ranges come from the training years; the target range is 105..2206 trains
spec = fit_normalization(records, "train-years")
print("fleet size range:", spec.bounds("fleet_size"))

# Row-major layout: (hsr_km, rail_km, hsr_pass / hsr_pkm, rail_pass, rail_pkm / gdp, income, coaches)
print("layout:")
print(np.array(INDEX_NAMES).reshape(3, 3))

for year in (2007, 2011, 2015):
    rec = next(r for r in records if r.year == year)
    print(f"\n{year} (fleet {rec.fleet_size}):")
    print(np.round(assemble_feature_map(rec, spec), 3))

# Forecast years can leave the [0, 1] box because their values exceed the training range
future = records[-1]
print(f"\n{future.year} (no fleet size yet):")
print(np.round(assemble_feature_map(future, spec), 3))
