"""Generate a small jammed spectrum, train a compact model and forecast it.

Runs in about half a minute on one core:

    python3 demos/quickstart.py
"""

import numpy as np

from tsb import ModelConfig, ScenarioConfig, TrainConfig, generate_frame, train
from tsb.model import hard_decision
from tsb.pipeline import evaluate_model
from tsb.training import denormalize, zscore_normalize

scenario = ScenarioConfig(channels=8, slots=1200, period=10, seed=1)
frame = generate_frame(scenario)
print(f"{frame.channels} channels x {frame.slots} slots, occupancy {frame.occupancy.mean():.1%}")

model_cfg = ModelConfig(
    channels=8, input_len=32, horizon=8, d_model=16, encoder_layers=1, decoder_layers=1, heads=2, lstm_layers=1
)
train_cfg = TrainConfig(epochs=40, batch_size=32, valid_max_windows=32)
result = train(
    frame.power,
    model_cfg,
    train_cfg,
    on_epoch=lambda r: print(f"epoch {r.epoch}: train {r.train_loss:.4f}  valid {r.valid_loss:.4f}"),
)

report, _, _ = evaluate_model(
    result.model, result.norm_stats, frame.power, train_cfg, 0, scenario.threshold_dbm, stride=4
)
print(f"test RMSE {report.rmse:.2f} dB, availability accuracy {report.availability_accuracy:.3f}")
for name, scores in report.baselines.items():
    print(f"  {name}: RMSE {scores['rmse']:.2f} dB")

# forecast the slots after the end of the recording
recent = zscore_normalize(frame.power[:, -model_cfg.input_len :].T, result.norm_stats)
forecast = denormalize(result.model.predict(recent), result.norm_stats)
busy = hard_decision(forecast, scenario.threshold_dbm)
np.set_printoptions(linewidth=120)
print("predicted busy map (rows = future slots, columns = channels):")
print(busy)
