import csv
import json

import numpy as np
import pytest

from hybridattn import cli
from hybridattn.harness import (ExperimentSpec, HarnessError, gen_workload, hybrid_reference,
                                load_workload_spec, run_experiment, sweep, write_workload)
from hybridattn.hwconfig import DEFAULT_CONFIG
from hybridattn.qtensor import qmat_bytes, quantize
from oracles import hybrid_oracle, random_codes

SMALL = {"seq_len": 64, "d_k": 64, "heads": 2}


def test_zero_sigma_gives_zero_workload():
    w = gen_workload("gaussian", {**SMALL, "sigma": 0.0}, seed=123)
    assert all(not m.codes.any() for m in w.q + w.k + w.v)


@pytest.mark.parametrize("kind", ["gaussian", "uniform", "heavy_tailed"])
def test_same_seed_same_workload(kind):
    a, b = gen_workload(kind, SMALL, seed=5), gen_workload(kind, SMALL, seed=5)
    assert all(x == y for x, y in zip(a.q + a.k + a.v, b.q + b.k + b.v))
    c = gen_workload(kind, SMALL, seed=6)
    assert a.q[0] != c.q[0]


def test_unknown_kind():
    with pytest.raises(HarnessError):
        gen_workload("cauchy", SMALL)


def test_workload_file_round_trip(tmp_path):
    w = gen_workload("heavy_tailed", SMALL, seed=2)
    spec = write_workload(w, tmp_path)
    params = load_workload_spec(spec)
    again = gen_workload("file", params)
    for name in "qkv":
        assert all(x == y for x, y in zip(getattr(w, name), getattr(again, name)))


def test_workload_file_errors(tmp_path):
    (tmp_path / "w.cfg").write_text("seq_len = 8\ncolour = red\n")
    with pytest.raises(HarnessError, match=r"w.cfg:2: unknown workload key 'colour'"):
        load_workload_spec(tmp_path / "w.cfg")
    q = quantize(np.ones((8, 8)))
    (tmp_path / "q.qmat").write_bytes(qmat_bytes(q) + b"QMAX" + b"\0" * 12)
    with pytest.raises(HarnessError, match=f"byte {len(qmat_bytes(q))}"):
        gen_workload("file", {"seq_len": 8, "d_k": 8, "q_path": tmp_path / "q.qmat",
                              "k_path": tmp_path / "q.qmat", "v_path": tmp_path / "q.qmat"})
    with pytest.raises(HarnessError, match="missing.qmat"):
        gen_workload("file", {"seq_len": 8, "d_k": 8, "q_path": tmp_path / "missing.qmat",
                              "k_path": "x", "v_path": "x"})


def test_text_matrix_workload(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("\n".join(" ".join(str(i * 4 + j - 7) for j in range(4)) for i in range(4)))
    w = gen_workload("file", {"seq_len": 4, "d_k": 4, "q_path": p, "k_path": p, "v_path": p})
    assert w.q[0].codes[3, 3] == 7


def test_reference_helpers_agree():
    rng = np.random.default_rng(0)
    a, b = random_codes(rng, (50, 150)), random_codes(rng, (150, 40))
    assert np.array_equal(hybrid_reference(a, b, 64, 1.0, 7), hybrid_oracle(a, b))


def _spec(tmp_path, mode, **kw):
    return ExperimentSpec(name=mode, mode=mode, workload={**SMALL, "kind": "heavy_tailed"},
                          seed=3, out_dir=tmp_path / mode, **kw)


@pytest.mark.parametrize("mode", ["fidelity", "histogram", "cost", "compare", "sweep"])
def test_reports_are_byte_identical(tmp_path, mode):
    kw = {"sweep_values": (64, 128)} if mode == "sweep" else {}
    r1 = run_experiment(_spec(tmp_path / "a", mode, **kw))
    r2 = run_experiment(_spec(tmp_path / "b", mode, **kw))
    assert r1.to_json() == r2.to_json()
    for name in r1.files:
        assert (tmp_path / "a" / mode / name).read_bytes() == (tmp_path / "b" / mode / name).read_bytes()
    meta = json.loads(r1.to_json())["metadata"]
    assert meta["config_hash"] == DEFAULT_CONFIG.config_hash() and meta["seed"] == 3


def test_fidelity_on_zero_workload(tmp_path):
    spec = ExperimentSpec("z", "fidelity", {**SMALL, "sigma": 0.0}, out_dir=tmp_path)
    rep = run_experiment(spec)
    assert rep.passed and rep.results["output_abs_max"] == 0.0


def test_histogram_csv(tmp_path):
    rep = run_experiment(_spec(tmp_path, "histogram"))
    with open(tmp_path / "histogram" / "histogram.csv") as fh:
        rows = list(csv.DictReader(fh))
    fr = [float(r["fraction_within"]) for r in rows]
    assert [int(r["bits"]) for r in rows] == [2, 4, 8]
    assert fr == sorted(fr) and rep.passed


def test_compare_replays_from_dumped_trace(tmp_path):
    rep = run_experiment(_spec(tmp_path, "compare"))
    res = rep.results
    assert res["replay_match"] is True
    assert set(res["ratios"]) == {"speedup_per_area", "energy_eff_per_area"}
    slots = res["conversion_slots_per_op"]
    assert slots["baseline"] / slots["hybrid"] == 32


def test_overrides_apply(tmp_path):
    rep = run_experiment(_spec(tmp_path, "cost", tiles=8, noise=0.2, serialize_transfers=True))
    hw = DEFAULT_CONFIG.replace(tiles=8, serialize_transfers=True).with_component("dptc", noise_sigma=0.2)
    assert rep.metadata["config_hash"] == hw.config_hash()


def test_sweep_keeps_order_with_threads():
    w = gen_workload("uniform", SMALL, seed=0)
    pts = [(w, DEFAULT_CONFIG.replace(tiles=t), 0) for t in (8, 16, 32, 64)]
    assert sweep(pts, workers=4) == sweep(pts)
    with pytest.raises(HarnessError):
        sweep([])


def test_bad_mode_and_paths(tmp_path):
    with pytest.raises(HarnessError):
        ExperimentSpec("x", "dance")
    with pytest.raises(HarnessError):
        ExperimentSpec("x", "cost", workload=tmp_path / "none.cfg")


# -- CLI -------------------------------------------------------------------------

def test_cli_cost_and_error(tmp_path, capsys):
    wl = tmp_path / "w.cfg"
    wl.write_text("seq_len = 64\nd_k = 64\nkind = uniform\n")
    assert cli.main(["cost", "--workload", str(wl), "--out", str(tmp_path / "o"), "--seed", "1"]) == 0
    assert (tmp_path / "o" / "report.json").exists() and (tmp_path / "o" / "cost.csv").exists()
    bad = tmp_path / "bad.cfg"
    bad.write_text("[adc]\ncount = -1\n")
    code = cli.main(["cost", "--config", str(bad), "--workload", str(wl), "--out", str(tmp_path / "x")])
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert code != 0 and err["error"] == "config" and "bad.cfg:2" in err["message"]


def test_cli_validate_and_lut(tmp_path, capsys):
    from hybridattn.hwconfig import DEFAULT_CONFIG_PATH
    assert cli.main(["validate", str(DEFAULT_CONFIG_PATH)]) == 0
    assert "[adc]" in capsys.readouterr().out
    assert cli.main(["lut", "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "softmax_lut.hex").read_text().split()) == 512


def test_cli_bits_flag(tmp_path):
    wl = tmp_path / "w.cfg"
    wl.write_text("seq_len = 64\nd_k = 64\n")
    assert cli.main(["histogram", "--workload", str(wl), "--out", str(tmp_path / "h"),
                     "--bits", "3,5"]) == 0
    rep = json.loads((tmp_path / "h" / "report.json").read_text())
    assert [r["bits"] for r in rep["results"]["histogram"]] == [3, 5]
