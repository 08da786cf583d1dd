import csv
import json
import math

import numpy as np
import pytest

from sdccrn.data import save_wav
from sdccrn.evaluate import evaluate_pairs, log_spectral_distance, pair_metrics, read_pairs


def tone_and_noise(seed=0, n=16000):
    rng = np.random.default_rng(seed)
    t = np.arange(n) / 32000
    clean = 0.1 * np.sin(2 * np.pi * 440 * t) + 0.05 * np.sin(2 * np.pi * 1234 * t)
    noisy = clean + 0.03 * rng.standard_normal(n)
    return noisy.astype(np.float32), clean.astype(np.float32)


def test_perfect_estimate():
    noisy, clean = tone_and_noise()
    m = pair_metrics(clean, noisy, clean)
    assert m["si_snr_db"] >= 80
    assert m["lsd_db"] <= 1e-3


def test_identity_model_has_zero_improvement():
    noisy, clean = tone_and_noise()
    assert pair_metrics(noisy, noisy, clean)["si_snri_db"] == 0.0


def test_lsd_of_doubled_signal():
    x = np.random.default_rng(2).standard_normal(8000)
    assert log_spectral_distance(2 * x, x) == pytest.approx(20 * math.log10(2), abs=1e-6)
    assert 20 * math.log10(2) == pytest.approx(6.02, abs=1e-2)


def test_length_mismatch():
    with pytest.raises(ValueError, match="length mismatch"):
        pair_metrics(np.zeros(1000), np.zeros(1000), np.zeros(999))


def test_evaluate_pairs_with_error_row(tmp_path):
    lines = []
    for i in range(2):
        noisy, clean = tone_and_noise(i)
        save_wav(tmp_path / f"n{i}.wav", noisy)
        save_wav(tmp_path / f"c{i}.wav", clean)
        lines.append({"id": f"utt{i}", "noisy": str(tmp_path / f"n{i}.wav"), "clean": str(tmp_path / f"c{i}.wav")})
    save_wav(tmp_path / "short.wav", np.zeros(100, dtype=np.float32))
    lines.append({"noisy": str(tmp_path / "n0.wav"), "clean": str(tmp_path / "short.wav")})
    lines.append({"noisy": str(tmp_path / "missing.wav"), "clean": str(tmp_path / "c0.wav")})
    (tmp_path / "pairs.jsonl").write_text("\n".join(json.dumps(d) for d in lines) + "\n")

    pairs = read_pairs(tmp_path / "pairs.jsonl")
    assert [p.id for p in pairs] == ["utt0", "utt1", "2", "3"]
    rows = evaluate_pairs(lambda w: w, pairs, tmp_path / "m.csv")
    assert len(rows) == 5
    assert not rows[0]["error"] and not rows[1]["error"]
    assert "length mismatch" in rows[2]["error"]
    assert rows[3]["error"]
    mean = rows[-1]
    assert mean["id"] == "mean"
    assert mean["si_snri_db"] == 0.0
    assert mean["si_snr_db"] == pytest.approx((rows[0]["si_snr_db"] + rows[1]["si_snr_db"]) / 2)

    with open(tmp_path / "m.csv") as fh:
        written = list(csv.DictReader(fh))
    assert [r["id"] for r in written] == ["utt0", "utt1", "2", "3", "mean"]
    assert list(written[0]) == ["id", "noisy", "clean", "si_snr_db", "si_snr_noisy_db", "si_snri_db", "lsd_db", "error"]
