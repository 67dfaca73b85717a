"""Segment held-out recordings and score the onsets against truth.

Trains a small model on the spot, then runs the whole-recording path:
sliding windows, probability averaging, cyclic Viterbi, onset export, and
the tolerance-window metrics.
"""

from heartseg import (
    ModelConfig,
    TrainConfig,
    Tensor,
    aggregate,
    build_level_corpus,
    count_matches,
    segment_recording,
    train_fold,
)

corpus = build_level_corpus((20, 0, 0), seed=29)
items = corpus["LEVEL_I"]
pairs = [(it.recording, it.annotation) for it in items]
train_pairs, val_pairs, held_out = pairs[:14], pairs[14:18], items[18:]

small = ModelConfig(encoder_channels=(8, 8, 16, 16), decoder_channels=(16, 32), lstm_hidden=16)
train_cfg = TrainConfig(learning_rate=0.003, max_epochs=40, patience=20, seed=3)
result = train_fold(train_pairs, val_pairs, small, train_cfg=train_cfg)
params = {name: Tensor(w) for name, w in result.best_params.items()}
print(f"trained to val accuracy {result.best_val_accuracy:.4f} "
      f"in {result.epochs_run} epochs\n")

countings = []
for item in held_out:
    predicted = segment_recording(params, small, item.recording)
    print(f"decoded {len(predicted.onsets)} onsets "
          f"(truth has {len(item.annotation.onsets)})")
    countings.append(
        count_matches(item.annotation, predicted, sigma_s=0.1, end_s=item.config.duration_s)
    )

report = aggregate(countings)
overall = report.pooled.overall
print()
print("pooled over held-out recordings, tolerance 100 ms:")
print(f"  sensitivity            {overall.sensitivity:.2f}%")
print(f"  positive predictivity  {overall.positive_predictivity:.2f}%")
print(f"  F1                     {overall.f1:.2f}%")
print(f"  per recording mean F1  {report.mean['f1']:.2f}%"
      f" +/- {report.stderr['f1']:.2f} (n={report.n_recordings})")
