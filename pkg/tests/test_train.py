import json

import numpy as np
import pytest
import torch

import sdccrn.train as train_mod
from gradient_cases import TINY_ANALYSIS, tiny_model_spec
from sdccrn.data import write_manifest, write_synthetic_corpus
from sdccrn.model import build_model
from sdccrn.objectives import total_loss
from sdccrn.train import RunConfig, TrainingDiverged, epoch_lr, plateau_update, read_log, train


@pytest.fixture(scope="module")
def manifests(tmp_path_factory):
    root = tmp_path_factory.mktemp("mini")
    entries = write_synthetic_corpus(root, n_speech=6, n_noise=2, duration=0.2, noise_duration=0.5, seed=1)
    speech = [e for e in entries if e.kind == "speech"]
    noise = [e for e in entries if e.kind == "noise"]
    write_manifest(speech[:4] + noise, root / "train.jsonl")
    write_manifest(speech[4:] + noise, root / "val.jsonl")
    return str(root / "train.jsonl"), str(root / "val.jsonl")


def mini_config(manifests, out, **kw) -> RunConfig:
    base = dict(
        model=tiny_model_spec(),
        analysis=TINY_ANALYSIS,
        train_manifest=manifests[0],
        val_manifest=manifests[1],
        chunk_len=0.2,
        batch_size=2,
        epochs=2,
        main_lr=1e-3,
        checkpoint_dir=str(out),
    )
    base.update(kw)
    return RunConfig(**base)


def test_warmup_schedule_values():
    cfg = RunConfig()
    assert epoch_lr(cfg, 10, 0.0) == 2.5e-5
    assert epoch_lr(cfg, 11, 0.0) == 1e-3


def test_plateau_update():
    assert plateau_update(1e-3, 5.0, 4.0) == (1e-3, 4.0, 0)
    assert plateau_update(1e-3, 5.0, 5.0) == (5e-4, 5.0, 0)
    assert plateau_update(1e-3, 5.0, 6.0) == (5e-4, 5.0, 0)
    # with patience the rate holds until the stall has lasted long enough
    assert plateau_update(1e-3, 5.0, 6.0, 0, patience=3) == (1e-3, 5.0, 1)
    assert plateau_update(1e-3, 5.0, 6.0, 2, patience=3) == (5e-4, 5.0, 0)
    assert plateau_update(1e-3, 5.0, 4.0, 2, patience=3) == (1e-3, 4.0, 0)


def test_logged_warmup_schedule(manifests, tmp_path):
    train(mini_config(manifests, tmp_path, epochs=11))
    lr_by_epoch = {int(r["epoch"]): float(r["lr"]) for r in read_log(tmp_path / "val_log.csv")}
    assert lr_by_epoch[10] == 2.5e-5
    assert lr_by_epoch[11] == 1e-3
    steps = read_log(tmp_path / "train_log.csv")
    assert len(steps) == 11 * 2
    assert list(steps[0]) == ["step", "si_snr_db", "cmse", "kl", "total", "lr"]
    assert {float(r["lr"]) for r in steps[:20]} == {2.5e-5}


def test_logged_plateau_schedule(manifests, tmp_path):
    train(mini_config(manifests, tmp_path, epochs=6, schedule="plateau-halving", main_lr=0.05,
                      plateau_patience=2))
    rows = read_log(tmp_path / "val_log.csv")
    lr, best, stale = 0.05, float("inf"), 0
    for r in rows:
        assert float(r["lr"]) == lr
        lr, best, stale = plateau_update(lr, best, float(r["val_total"]), stale, patience=2)


def test_first_steps_are_deterministic(manifests, tmp_path):
    for name in ("a", "b"):
        train(mini_config(manifests, tmp_path / name, max_steps=10, epochs=10))
    a = (tmp_path / "a" / "train_log.csv").read_text().splitlines()[:11]
    b = (tmp_path / "b" / "train_log.csv").read_text().splitlines()[:11]
    assert len(a) == 11 and a == b


def test_resume_continues_the_same_trajectory(manifests, tmp_path):
    full = mini_config(manifests, tmp_path / "full", epochs=3, schedule="plateau-halving")
    train(full)
    part = mini_config(manifests, tmp_path / "part", epochs=1, schedule="plateau-halving")
    train(part)
    part.epochs, part.resume = 3, True
    train(part)
    ra, rb = read_log(tmp_path / "full" / "train_log.csv"), read_log(tmp_path / "part" / "train_log.csv")
    assert [r["step"] for r in ra] == [r["step"] for r in rb]
    for x, y in zip(ra, rb):
        for k in ("total", "lr"):
            assert float(y[k]) == pytest.approx(float(x[k]), rel=1e-5, abs=1e-7)
    assert [r["lr"] for r in read_log(tmp_path / "full" / "val_log.csv")] == \
        [r["lr"] for r in read_log(tmp_path / "part" / "val_log.csv")]


def test_checkpoints_written(manifests, tmp_path):
    summary = train(mini_config(manifests, tmp_path, epochs=1))
    assert summary["epoch"] == 1
    for sub in ("last", "best"):
        assert (tmp_path / sub / "params.bin").exists()
    assert RunConfig.from_json(tmp_path / "run.json").to_dict() == mini_config(manifests, tmp_path, epochs=1).to_dict()


def test_nan_loss_aborts(manifests, tmp_path, monkeypatch):
    calls = {"n": 0}

    def poisoned(est, ref, cfg):
        calls["n"] += torch.is_grad_enabled()  # validation passes do not count
        loss, rep = total_loss(est, ref, cfg)
        if calls["n"] == 3:
            loss = loss * float("nan")
            rep.total = float("nan")
        return loss, rep

    monkeypatch.setattr(train_mod, "total_loss", poisoned)
    with pytest.raises(TrainingDiverged, match="step 3"):
        train(mini_config(manifests, tmp_path, epochs=3))


def test_config_validation(tmp_path):
    with pytest.raises(ValueError, match="unknown"):
        RunConfig.from_dict({"learning_rate": 1.0})
    with pytest.raises(ValueError):
        RunConfig(schedule="cosine")
    with pytest.raises(ValueError):
        RunConfig(batch_size=0)
    with pytest.raises(ValueError):
        RunConfig(train_crop=9.0)
    with pytest.raises(ValueError):
        RunConfig(plateau_patience=0)
    cfg = RunConfig(main_lr=3e-4, model=tiny_model_spec())
    (tmp_path / "c.json").write_text(json.dumps(cfg.to_dict()))
    assert RunConfig.from_json(tmp_path / "c.json").to_dict() == cfg.to_dict()


def _overfit(steps, lr, seed=0):
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    from sdccrn.data import noise_like, speech_like, synthesize_mixture

    noisy, clean = synthesize_mixture(speech_like(1.0, rng), noise_like(1.0, "white", rng), 5.0)
    noisy, clean = torch.from_numpy(noisy)[None], torch.from_numpy(clean)[None]
    model = build_model(tiny_model_spec(n_freq=256)).train()
    opt = torch.optim.Adam(model.parameters(), lr)
    losses = []
    for _ in range(steps):
        loss, _ = total_loss(model(noisy), clean)
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(loss.item())
    return losses


def test_overfit_single_pair():
    losses = _overfit(200, 1e-3)
    assert losses[-1] < losses[9]


def test_overfit_loss_decreases_monotonically():
    losses = _overfit(50, 1e-4)
    assert all(b < a for a, b in zip(losses, losses[1:]))
