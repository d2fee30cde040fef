#!/usr/bin/env python3
"""Train the two-branch detector and evaluate it with biometric metrics.

The dataset hides the class signal in the frozen feature stacks only, so
the raw-image branch alone is chance and the adapter carries the result.

Run: python3 demos/04_training_and_metrics.py  (about a minute on CPU)
"""

from gatpad.detector import ModelConfig
from gatpad.metrics import evaluate, roc
from gatpad.providers import SynthSpec, generate_synthetic
from gatpad.trainer import TrainConfig, predict_scores, train

train_set = generate_synthetic(SynthSpec(count_per_class=200,
                                         signal_target="features_only", seed=0))
test_set = generate_synthetic(SynthSpec(count_per_class=100,
                                        signal_target="features_only", seed=1))

for name, model in (("baseline (adapter off)", ModelConfig(adapter_enabled=False)),
                    ("with graph adapter", ModelConfig())):
    config = TrainConfig(model=model, epochs=6, seed=0)
    params, log = train(config, train_set)
    scores = predict_scores(params, test_set, model)
    report = evaluate(scores)
    curve = roc(scores)
    print(f"{name}:")
    print(f"  final train loss {log.final_loss():.4f}")
    print(f"  test AUC  {report['auc']:.3f}")
    print(f"  test HTER {report['hter']:.3f} at threshold {report['eer_threshold']:.3f}")
    print(f"  BPCER at APCER=1%: {report['bpcer_at_apcer']['value']:.3f}")
    print(f"  ROC sweep has {len(curve.points)} operating points")
