"""Generate a small graded synthetic corpus and inspect what came out.

Each recording is drawn for a target difficulty level, measured, and only
kept once its indicators actually land in that level's region, so the
manifest labels can be trusted downstream.
"""

from pathlib import Path

from heartseg import build_level_corpus, compute_indicators, write_corpus

out_dir = Path(__file__).parent / "output" / "corpus"

corpus = build_level_corpus(n_per_level=3, seed=7)
manifest = write_corpus(corpus, out_dir)
print(f"wrote {manifest}")
print()

print(f"{'recording':<14} {'hr_bpm':>7} {'jitter':>7} {'snr_db':>7} {'murmur':>7} "
      f"{'d_nm':>6} {'d_rhythm':>9} {'f_s2':>6}")
for level, items in corpus.items():
    for j, item in enumerate(items):
        cfg = item.config
        ind = compute_indicators(item.recording, item.annotation)
        name = f"{level.lower()}_{j:03d}"
        print(f"{name:<14} {cfg.heart_rate_bpm:>7.1f} {cfg.rhythm_jitter_s:>7.3f} "
              f"{cfg.noise_snr_db:>7.1f} {cfg.murmur_level:>7.2f} "
              f"{ind.d_noise_murmur:>6.2f} {ind.d_rhythm:>9.3f} {ind.f_s2:>6.2f}")

# The indicator regions behind the labels: LEVEL_III needs both a heavy
# murmur/noise ratio (> 0.8) and an unsettled rhythm or rate (> 0.2 s);
# LEVEL_I needs both comfortably low; everything else is LEVEL_II.
