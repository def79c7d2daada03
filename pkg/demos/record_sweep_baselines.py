"""Score the persistence and AR(1) forecasters on the sweep benchmark.

The learned model has to beat these numbers, so they are written once to
``tests/data/sweep_baselines.json`` and re-checked by the acceptance tests.

    python3 demos/record_sweep_baselines.py
"""

import json
from pathlib import Path

from tsb.model import ModelConfig
from tsb.pipeline import baseline_scores
from tsb.specgen import ScenarioConfig, generate_frame
from tsb.training import TrainConfig

OUT = Path(__file__).resolve().parent.parent / "tests" / "data" / "sweep_baselines.json"

scenario = ScenarioConfig(
    channels=32, slots=4000, period=20, mu_power_dbm=(-35.0, -35.0), noise_floor_dbm=-90.0, seed=0
)
model = ModelConfig(channels=32)
train = TrainConfig()
scores = baseline_scores(generate_frame(scenario).power, model, train, 0, scenario.threshold_dbm)
payload = {
    "scenario": scenario.to_dict(),
    "input_len": model.input_len,
    "horizon": model.horizon,
    "fold": 0,
    **scores,
}
OUT.write_text(json.dumps(payload, indent=2) + "\n")
for name, s in scores.items():
    print(f"{name:12s} rmse {s['rmse']:.3f} dB  availability {s['availability_accuracy']:.4f}")
print(f"target rmse <= {0.7 * scores['persistence']['rmse']:.3f} dB")
