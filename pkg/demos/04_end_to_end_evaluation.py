"""Evaluate the router against its baselines on a synthetic 7-language corpus."""
from selective_asr import evaluation as ev
from selective_asr.engine import EngineConfig
from selective_asr.synthetic import make_corpus

# %%
synth = make_corpus(seed=0)
corpus = synth.evaluation_corpus()
truth = ev.ground_truth(corpus)
print(len(corpus), "utterances")

# %%
config = EngineConfig()
sima = ev.evaluate_system(corpus, config, "sima", truth)
reports = [
    ev.base_system(corpus, truth),
    ev.random_invocation_baseline(corpus, sima.invocation_rate, seed=0, truth=truth),
    sima,
    ev.lid_top_system(corpus, truth),
]
print(ev.render_table(reports, per_language=False))

# %%
# Per-language breakdown for the router alone.
print(ev.render_table([sima]))

# %%
# How much of the gap could a perfect chooser close at the same rate?
oracle = ev.oracle_baseline(corpus, sima.invocation_rate, truth)
print(f"oracle WER at {oracle.invocation_rate:.1f}% invocation: {oracle.wer:.2f}")

# %%
# Tightening the probability floor sends more utterances out.
for row in ev.sweep(corpus, config, [0.90, 0.94, 0.98], [0.0015]):
    print(row)
