"""
Acceptance suite. Each test covers one numbered criterion and records a
one-line summary; the terminal summary prints a PASS/FAIL line per
criterion (see ``conftest.py``).
"""

import csv
import json
import time

import numpy as np
import pytest
from scipy import stats

from gradcheck import check_gradients
from oracles import correlator_time_domain
from prach_sentinel.channel import ChannelConfig, add_awgn, draw_fading
from prach_sentinel.cli import main
from prach_sentinel.cnn import PrachCNN
from prach_sentinel.dataset import load_dataset
from prach_sentinel.metrics import REPORT_SCHEMA, ConfusionMatrix, derive
from prach_sentinel.receiver import correlate, detect, front_end
from prach_sentinel.scenario import ScenarioConfig, simulate_observation
from prach_sentinel.waveform import PrachNumerology, apply_delay, modulate
from prach_sentinel.zc import preamble_from_index, zc_root

SINGLE_TAP = dict(tap_delays_ns=(0.0,), tap_powers_db=(0.0,), n_rx=1, mimo_correlation="low")


def record(request, passed_text):
    request.node.user_properties.append(("detail", passed_text))
    print(passed_text)


def _cyclic_autocorr(x):
    f = np.fft.fft(x)
    return np.fft.ifft(f * np.conj(f)) / len(x)


# --- criterion 1 ---------------------------------------------------------

@pytest.mark.criterion(1, "CAZAC properties of the root sequences")
def test_criterion_01_cazac(request):
    t0 = time.perf_counter()
    roots = {u: zc_root(u, 839).data for u in (3, 22, 129)}
    mod_err = max(np.max(np.abs(np.abs(x) - 1.0)) for x in roots.values())
    auto = max(np.max(np.abs(_cyclic_autocorr(x)[1:])) for x in roots.values())
    cross_err = 0.0
    for a in roots:
        for b in roots:
            if a < b:
                xc = np.fft.ifft(np.fft.fft(roots[a]) * np.conj(np.fft.fft(roots[b]))) / 839
                cross_err = max(cross_err, np.max(np.abs(np.abs(xc) - 1 / np.sqrt(839))))
    elapsed = time.perf_counter() - t0
    record(request, f"|x|-1 {mod_err:.1e}, autocorr {auto:.1e}, cross-1/sqrt(N) {cross_err:.1e}, "
                    f"{elapsed:.2f} s")
    assert mod_err <= 1e-12
    assert auto <= 1e-9
    assert cross_err <= 1e-9
    assert elapsed < 5


# --- criterion 2 ---------------------------------------------------------

@pytest.mark.criterion(2, "exhaustive loopback and delay scaling")
def test_criterion_02_loopback(request):
    t0 = time.perf_counter()
    num, root = PrachNumerology(), zc_root(22)
    ok = 0
    for v in range(64):
        r = detect(correlate(front_end(modulate(preamble_from_index(22, v)).samples, num), root))
        ok += (r.detected, r.rapid_v, r.timing_offset_samples) == (True, v, 0)
    delays_ok = 0
    burst = modulate(preamble_from_index(22, 32))
    for d in range(1, 9):
        r = detect(correlate(front_end(apply_delay(burst, d).samples, num), root))
        delays_ok += (r.detected, r.rapid_v, r.timing_offset_samples) == (True, 32, round(d * 839 / 1024))
    elapsed = time.perf_counter() - t0
    record(request, f"loopback {ok}/64, delays {delays_ok}/8, {elapsed:.1f} s")
    assert ok == 64
    assert delays_ok == 8
    assert elapsed < 30


# --- criterion 3 ---------------------------------------------------------

@pytest.mark.criterion(3, "frequency-domain correlator equals time-domain oracle")
def test_criterion_03_correlator_oracle(request):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for i in range(100):
        root = zc_root(int(rng.integers(1, 839)))
        bins = rng.standard_normal(839) + 1j * rng.standard_normal(839)
        ref = correlator_time_domain(bins, root.data)
        got = correlate(bins, root)
        worst = max(worst, np.max(np.abs(got - ref)) / np.max(ref))
    elapsed = time.perf_counter() - t0
    record(request, f"max relative error {worst:.1e} over 100 inputs, {elapsed:.1f} s")
    assert worst <= 1e-9
    assert elapsed < 10


# --- criterion 4 ---------------------------------------------------------

@pytest.mark.criterion(4, "false-alarm and detection calibration")
def test_criterion_04_false_alarm_and_detection(request):
    t0 = time.perf_counter()
    cfg = ScenarioConfig()
    num, root = cfg.numerology, zc_root(cfg.signal.seq_idx)
    n_rx = cfg.channel.n_rx
    false_alarms = 0
    for trial in range(1000):
        rng = np.random.default_rng([4, trial])
        noise = rng.standard_normal((n_rx, num.burst_len)) + 1j * rng.standard_normal((n_rx, num.burst_len))
        false_alarms += detect(correlate(front_end(noise, num), root), threshold_factor=13.0).detected
    hits = 0
    for trial in range(500):
        obs = simulate_observation(cfg, -6.0, None, seed=10_000 + trial)
        r = detect(correlate(front_end(obs, num), root), threshold_factor=13.0)
        hits += r.detected and r.rapid_v == 32
    elapsed = time.perf_counter() - t0
    record(request, f"false alarms {false_alarms}/1000, detections {hits}/500 at -6 dB ETU, "
                    f"{elapsed:.1f} s")
    assert false_alarms / 1000 <= 0.01
    assert hits / 500 >= 0.95
    assert elapsed < 180


# --- criterion 5 ---------------------------------------------------------

@pytest.mark.criterion(5, "channel statistics")
def test_criterion_05_channel_statistics(request):
    t0 = time.perf_counter()
    amp = np.concatenate([np.abs(draw_fading(ChannelConfig(seed=s, **SINGLE_TAP), 1).gains.ravel())
                          for s in range(10_000)])
    ks = stats.kstest(amp, "rayleigh", args=(0, np.sqrt(0.5)))
    gains = np.array([(np.abs(draw_fading(ChannelConfig(seed=s), 1).gains[..., 0]) ** 2).sum(axis=1)
                      for s in range(2_000)])
    mean_gain = gains.mean()
    rng = np.random.default_rng(5)
    sig = np.exp(2j * np.pi * rng.random(100_000))[None, :]
    noise = add_awgn(sig, -12.0, seed=55) - sig
    snr = 10 * np.log10(np.mean(np.abs(sig) ** 2) / np.mean(np.abs(noise) ** 2))
    elapsed = time.perf_counter() - t0
    record(request, f"KS p={ks.pvalue:.3f} on {amp.size} draws, mean gain {mean_gain:.4f}, "
                    f"measured SNR {snr:.3f} dB, {elapsed:.1f} s")
    assert amp.size == 10_000
    assert ks.pvalue > 0.01
    assert abs(mean_gain - 1.0) <= 0.02
    assert abs(snr + 12.0) <= 0.1
    assert elapsed < 60


# --- criterion 6 ---------------------------------------------------------

@pytest.mark.criterion(6, "gradient correctness at 64-bit precision")
def test_criterion_06_gradients(request):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    tiny = PrachCNN(input_shape=(8, 9, 2), filters=3, dtype=np.float64, seed=6)
    errs_tiny = check_gradients(tiny, rng.standard_normal((4, 8, 9, 2)), np.array([0, 1, 1, 0]),
                                n_per_tensor=20)
    full = PrachCNN(dtype=np.float64, seed=7)
    errs_full = check_gradients(full, rng.standard_normal((2, 24, 35, 4)), np.array([1, 0]),
                                n_per_tensor=8)
    worst = max(max(errs_tiny.values()), max(errs_full.values()))
    elapsed = time.perf_counter() - t0
    layers = sorted(errs_full)
    record(request, f"max relative error {worst:.1e} over {', '.join(layers)} "
                    f"(tiny and full-size models), {elapsed:.1f} s")
    # conv_2 and conv_3 gradients reach relu_1 through both the skip and conv paths
    assert {"conv_1.W", "conv_2.W", "conv_3.W", "fc.W", "input"} <= set(errs_full)
    assert worst < 1e-4
    assert elapsed < 60


# --- criterion 8 ---------------------------------------------------------

@pytest.mark.criterion(8, "reported metric triples are self-consistent")
@pytest.mark.parametrize("precision, recall, f1", [(0.756, 0.805, 0.780), (0.847, 0.925, 0.884)])
def test_criterion_08_metric_identities(request, precision, recall, f1):
    tp = 1_000_000
    cm = ConfusionMatrix(tp=tp, fp=round(tp / precision - tp), tn=tp, fn=round(tp / recall - tp))
    m = derive(cm)
    record(request, f"({precision}, {recall}) -> precision {m.precision:.4f}, recall {m.recall:.4f}, "
                    f"F1 {m.f1:.4f} vs {f1}")
    assert abs(m.precision - precision) <= 0.001
    assert abs(m.recall - recall) <= 0.001
    assert abs(m.f1 - f1) <= 0.001


# --- criterion 10 --------------------------------------------------------

def _pipeline(root):
    root.mkdir()
    args = ["--seed", "10", "--epochs", "3"]
    assert main(["gen", *args, "--n-per-cell", "2", "--out", str(root / "ds.prds")]) == 0
    assert main(["train", *args, "--dataset", str(root / "ds.prds"), "--out", str(root / "m.prnn")]) == 0
    assert main(["eval", *args, "--model", str(root / "m.prnn"), "--dataset", str(root / "ds.prds"),
                 "--out", str(root / "ev")]) == 0
    report = json.loads((root / "ev.json").read_text())["cnn"]
    return ((root / "ds.prds").read_bytes(), (root / "m.prnn.history.csv").read_text(),
            report["confusion"], [{k: c[k] for k in ("tp", "fp", "tn", "fn")} for c in report["cells"]])


@pytest.mark.criterion(10, "deterministic gen -> train -> eval")
def test_criterion_10_determinism(request, tmp_path):
    a = _pipeline(tmp_path / "a")
    b = _pipeline(tmp_path / "b")
    same = [a[i] == b[i] for i in range(4)]
    record(request, f"dataset identical {same[0]}, history identical {same[1]}, "
                    f"confusion identical {same[2] and same[3]} ({a[2]})")
    assert all(same)


# --- criteria 7 and 9: the flagship run ----------------------------------

@pytest.fixture(scope="session")
def flagship(tmp_path_factory):
    """``gen`` + ``train`` through the CLI at the default (flagship) settings."""
    root = tmp_path_factory.mktemp("flagship")
    t0 = time.perf_counter()
    assert main(["gen", "--seed", "1", "--out", str(root / "ds.prds")]) == 0
    assert main(["train", "--seed", "1", "--dataset", str(root / "ds.prds"),
                 "--out", str(root / "model.prnn")]) == 0
    elapsed = time.perf_counter() - t0
    with open(root / "model.prnn.history.csv", newline="") as fh:
        history = [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
    return root, history, elapsed


@pytest.mark.slow
@pytest.mark.criterion(7, "flagship desk-scale training run")
def test_criterion_07_flagship(request, flagship):
    root, history, elapsed = flagship
    side = json.loads((root / "model.prnn.json").read_text())
    ds = load_dataset(root / "ds.prds")
    by_epoch = {int(r["epoch"]): r for r in history}
    last, e20 = by_epoch[30], by_epoch[20]
    gap = last["train_acc"] - last["val_acc"]
    best_late_val_loss = min(by_epoch[e]["val_loss"] for e in range(21, 31))
    val_loss_gain = (e20["val_loss"] - best_late_val_loss) / e20["val_loss"]
    for subset in ("train", "val"):
        assert main(["eval", "--model", str(root / "model.prnn"), "--dataset", str(root / "ds.prds"),
                     "--subset", subset, "--out", str(root / f"eval_{subset}")]) == 0
    acc = {s: json.loads((root / f"eval_{s}.json").read_text())["cnn"]["accuracy"]
           for s in ("train", "val")}
    record(request, f"{len(ds)} samples ({side['n_train']}/{side['n_val']}), val_acc {last['val_acc']:.4f}, "
                    f"train_acc {last['train_acc']:.4f}, gap {100 * gap:.1f} pts, "
                    f"train_loss {e20['train_loss']:.4f}->{last['train_loss']:.4f}, "
                    f"val_loss {e20['val_loss']:.3f}->{last['val_loss']:.3f} "
                    f"(best late gain {100 * val_loss_gain:.1f}%), {elapsed / 60:.1f} min")
    assert len(ds) == 2400 and (side["n_train"], side["n_val"]) == (2000, 400)
    assert len(history) == 30
    assert last["val_acc"] >= 0.65
    assert gap >= 0.05
    assert last["train_loss"] < e20["train_loss"]
    assert val_loss_gain < 0.05
    assert acc["train"] >= acc["val"]
    assert acc["val"] == pytest.approx(last["val_acc"])
    assert elapsed < 20 * 60


@pytest.mark.slow
@pytest.mark.criterion(9, "interferer root transfer experiment")
def test_criterion_09_xfer(request, flagship):
    import jsonschema

    root, _, _ = flagship
    out = root / "xfer.json"
    assert main(["xfer", "--model", str(root / "model.prnn"), "--out", str(out)]) == 0
    result = json.loads(out.read_text())
    assert set(result) == {"seqidx_22", "seqidx_3"}
    for key, idx in (("seqidx_22", 22), ("seqidx_3", 3)):
        jsonschema.validate(result[key], REPORT_SCHEMA)
        assert result[key]["config"]["interferer_seq_idx"] == idx
    a, b = result["seqidx_22"], result["seqidx_3"]
    assert sum(a["confusion"].values()) == sum(b["confusion"].values()) == 2400
    record(request, "; ".join(
        f"{k}: acc {r['accuracy']:.3f} P {r['precision']:.3f} R {r['recall']:.3f} F1 {r['f1']:.3f}"
        for k, r in result.items()))
