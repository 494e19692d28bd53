"""From base-model transcripts to a balanced training manifest."""
from collections import Counter

from selective_asr.labeling import IntervalPolicy, assign_label, balance_manifest, build_records
from selective_asr.synthetic import SyntheticSpec, make_corpus

# %%
# Interval labels. The default policy is language-agnostic.
policy = IntervalPolicy()
for w in [0, 2.0, 2.01, 10.0, 10.01]:
    print(f"WER {w:5.2f} -> {assign_label(w, 'fr', policy).value}")

# %%
# The language-specific policy centers the uncertain band on the best
# backend's WER for that language, here 5.45 for French.
fr = IntervalPolicy(mode="specific", centers={"fr": 5.45})
print("fr band:", fr.bounds("fr"))
for w in [2.95, 3.0, 7.95, 8.0]:
    print(f"WER {w:4.2f} -> {assign_label(w, 'fr', fr).value}")

# %%
# Label a synthetic corpus. Each record keeps the pseudo language, the WER
# and a fluency grade.
synth = make_corpus(seed=1, spec=SyntheticSpec(n_utterances=600))
outputs = {o.utterance_id: o for o in synth.outputs}
records = build_records(synth.utterances, outputs)
print(Counter(r.label.value for r in records))
print(records[0].to_dict())

# %%
# Balance to 1 : 1.5 : 1.5 by subsampling, then look at one example of each
# training format.
manifest = balance_manifest(records, seed=0)
print(manifest.counts)
seen = set()
for ex in manifest.examples:
    if ex.task_format not in seen:
        seen.add(ex.task_format)
        print(ex.task_format, ex.to_dict())
