"""Picking the best backend per language and billing invocations."""
from selective_asr.backends import InvocationLedger, SyntheticBackend, build_lid_top
from selective_asr.corpus import Utterance
from selective_asr.synthetic import mls_descriptors
from selective_asr.text_metrics import word_errors

# %%
descs = mls_descriptors(cost_per_audio_second=0.002)
reg = build_lid_top(descs, "mls")
for lang in reg.languages:
    print(f"{lang}: {reg.lookup(lang):9s} {reg.wers[lang]:.2f}")
print(f"average {reg.average_wer():.2f}")

# %%
# Synthetic backends corrupt the reference to hit their fixture WER. The
# seed depends only on (backend, utterance), so reruns are identical.
ref = " ".join(f"wort{i}" for i in range(200))
utt = Utterance("demo-de-1", "de", ref, duration=10.0)
backend = SyntheticBackend(next(d for d in descs if d.backend_id == "assembly"), "mls")
hyp = backend.transcribe(utt)
print("target 3.91, measured", word_errors(ref.split(), hyp).wer)

# %%
# The ledger bills audio seconds and refuses to bill a pair twice.
ledger = InvocationLedger.for_backends(descs)
print(ledger.record(utt, "assembly"))
print(ledger.record(utt, "assembly"))
ledger.record(Utterance("demo-es-1", "es", "hola", duration=5.0), reg.lookup("es"))
print(ledger.totals(), ledger.total_cost())
