import csv
import io
import math

import numpy as np
import pytest

from pic_shuffle.amplification import PopulationPolicy, invert_amplify
from pic_shuffle.harness import cli
from pic_shuffle.harness import experiments as ex
from pic_shuffle.harness.config import ConfigError, build_config, read_config_file
from pic_shuffle.harness.data import (
    Clusters,
    DataError,
    Uniform,
    load_locations_csv,
    locations_csv,
    synth_locations,
    write_locations_csv,
)
from pic_shuffle.geometry import normalize_locations


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


# ---------------------------------------------------------------- config


def test_config_file_then_flags(tmp_path, capsys):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("# sweep\nmechanism = laplace\neps = 1,2\ntrials = 50\nseed = 3\n")
    cfg = cli.parse_config(["randomize", "--config", str(cfg_file), "--eps", "5", "--seed", "9"])
    assert cfg.mechanism == ("laplace",)
    assert cfg.eps == (5.0,)
    assert cfg.trials == 50 and cfg.seed == 9


def test_config_values_parse():
    cfg = build_config("rates", {}, {"eps_central": (1.0,), "n": (2**10, 2**11)})
    assert cfg.privacy_mode == "pic" and cfg.n == (1024, 2048)
    cfg = cli.parse_config(["randomize", "--eps", "inf", "--mechanism", "all", "--n", "2^12", "--policy", "fraction=0.9"])
    assert cfg.eps == (math.inf,) and len(cfg.mechanism) == 5
    assert cfg.n == (4096,) and cfg.policy == PopulationPolicy("fraction", 0.9)


@pytest.mark.parametrize(
    "argv",
    [
        ["randomize"],
        ["randomize", "--eps", "1", "--eps-central", "1"],
        ["randomize", "--eps", "-1"],
        ["randomize", "--eps", "1", "--mechanism", "gaussian"],
        ["randomize", "--eps", "1", "--trials", "0"],
        ["randomize", "--eps", "abc"],
        ["randomize", "--eps", "1", "--policy", "half"],
        ["amplify", "--eps", "1"],
        ["rates", "--eps", "1"],
        ["social", "--eps", "1", "--delta", "2"],
        ["crowdsourcing", "--eps", "1", "--n", "10,10,10"],
        ["randomize", "--eps", "1", "--bogus", "3"],
        ["nonsense"],
    ],
)
def test_config_errors_exit_2(capsys, argv):
    code, _, err = run_cli(capsys, *argv)
    assert code == 2
    assert err


def test_config_file_errors(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    with pytest.raises(ConfigError):
        read_config_file(bad)
    assert run_cli(capsys, "randomize", "--config", str(bad))[0] == 2
    assert run_cli(capsys, "randomize", "--config", str(tmp_path / "missing.cfg"))[0] == 2


def test_amplify_cli_forward_and_inverse(capsys):
    code, out, _ = run_cli(capsys, "amplify", "--eps", "2", "--delta", "1e-6", "--n", "10000")
    assert code == 0
    [row] = rows_of(out)
    assert float(row["value"]) == pytest.approx(0.501, abs=1e-3)
    code, out, _ = run_cli(capsys, "amplify", "--eps-central", "1", "--delta", "1e-6", "--n", "1000000")
    [row] = rows_of(out)
    assert float(row["value"]) == pytest.approx(invert_amplify(1.0, 1e-6, 10**6).epsilon)
    assert row["status"] == "ok"


def test_amplify_infeasible_exit_3(capsys):
    code, _, err = run_cli(capsys, "amplify", "--eps", "1", "--n", "100")
    assert code == 3
    assert "need n >=" in err


def test_csv_header():
    assert ex.CSV_HEADER[:10] == ("scenario", "mechanism", "privacy_mode", "eps", "eps_local", "metric", "value", "stddev", "trials", "seed")


def test_output_files_byte_identical(tmp_path, capsys):
    outs = []
    for k in range(2):
        path = tmp_path / f"run{k}.csv"
        args = ["crowdsourcing", "--eps", "1,2", "--mechanism", "minkowski,laplace", "--trials", "2", "--n", "60,50", "--seed", "4", "--out", str(path)]
        assert cli.main(args) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    assert len(rows_of(outs[0].decode())) == 2 * 2 * 3


# ---------------------------------------------------------------- data


def test_load_and_normalize(tmp_path):
    path = tmp_path / "pts.csv"
    path.write_text("id,x,y\n1,2.5,2.5\n2,5,0\n")
    pts = load_locations_csv(path)
    norm, scale = normalize_locations(pts, ((0.0, 0.0), (5.0, 5.0)))
    assert norm.tolist() == [[0.0, 0.0], [1.0, -1.0]]


def test_load_empty_data(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("id,x,y\n")
    assert load_locations_csv(path).shape == (0, 2)


@pytest.mark.parametrize(
    "text, line",
    [
        ("id,x,y\n1,0,0\n2,abc,1\n", 3),
        ("id,x,y\n1,0\n", 2),
        ("id,x,y\n1,0,0\n\n3,nan,0\n", 4),
        ("x,y\n1,2\n", 1),
    ],
)
def test_load_errors_carry_line(tmp_path, text, line):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(DataError) as info:
        load_locations_csv(path)
    assert info.value.line == line


def test_dataset_file_drives_crowdsourcing(tmp_path, capsys):
    rng = np.random.default_rng(0)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_locations_csv(a, rng.uniform(0, 5, (30, 2)))
    write_locations_csv(b, rng.uniform(0, 5, (20, 2)))
    code, out, _ = run_cli(capsys, "crowdsourcing", "--eps", "inf", "--trials", "1", "--dataset", f"{a},{b}", "--box", "0,5,0,5")
    assert code == 0
    assert {r["n"] for r in rows_of(out)} == {"30;20"}
    bad = tmp_path / "bad.csv"
    bad.write_text("id,x,y\n1,x,2\n")
    assert run_cli(capsys, "crowdsourcing", "--eps", "1", "--dataset", f"{a},{bad}")[0] == 2


def test_synth_uniform_in_box(rng):
    pts = synth_locations(713, ((0, 0), (5, 5)), Uniform(), rng)
    assert pts.shape == (713, 2)
    assert np.all((pts >= 0) & (pts <= 5))


def test_synth_cluster_spread():
    rng = np.random.default_rng(8)
    box = ((0, 0), (5, 5))
    pts = synth_locations(30_000, box, Clusters(3, 0.1), rng)
    assert np.all((pts >= 0) & (pts <= 5))
    # Recover the clusters by nearest centre of the fitted means.
    from scipy.cluster.vq import kmeans2

    centers, labels = kmeans2(pts, 3, seed=1, minit="++")
    within = np.concatenate([pts[labels == k] - centers[k] for k in range(3)])
    assert within.std(axis=0) == pytest.approx([0.1, 0.1], rel=0.05)


def test_synth_csv_deterministic():
    a = locations_csv(synth_locations(100, ((0, 0), (1, 1)), Clusters(2, 0.05), np.random.default_rng(3)))
    b = locations_csv(synth_locations(100, ((0, 0), (1, 1)), Clusters(2, 0.05), np.random.default_rng(3)))
    assert a == b
    assert a.splitlines()[0] == "id,x,y"


def test_synth_rejects_empty(rng):
    with pytest.raises(ValueError):
        synth_locations(0, ((0, 0), (1, 1)), Uniform(), rng)


# ---------------------------------------------------------------- scenarios


def _metrics(rows):
    return {(r.mechanism, r.privacy_mode, r.eps, r.metric): r for r in rows}


def test_zero_noise_crowdsourcing():
    cfg = build_config("crowdsourcing", {}, {"eps": (math.inf,), "trials": 2, "mechanism": ("minkowski", "laplace")})
    rows = _metrics(ex.run_crowdsourcing(cfg))
    for mech in ("minkowski", "laplace"):
        assert rows[(mech, "ldp", math.inf, "success_ratio")].value == 1.0
        assert rows[(mech, "ldp", math.inf, "l2_error")].value == 0.0
    # Travel cost equals the clear-data optimum.
    a, b = ex._synthetic_groups((713, 532), np.random.default_rng([0, 0, 0]))
    clear = ex.crowdsourcing_metrics(a, b, a, b, 0.4)
    first = ex.run_crowdsourcing(build_config("crowdsourcing", {}, {"eps": (math.inf,), "trials": 1}))
    assert _metrics(first)[("minkowski", "ldp", math.inf, "travel_cost")].value == pytest.approx(clear["travel_cost"], rel=1e-12)


def test_zero_noise_social():
    cfg = build_config("social", {}, {"eps": (math.inf,), "trials": 1, "n": (2000,)})
    rows = _metrics(ex.run_social(cfg))
    assert rows[("minkowski", "ldp", math.inf, "f1")].value == 1.0


def test_zero_noise_incentive():
    cfg = build_config("incentive", {}, {"eps": (math.inf,), "trials": 2})
    rows = _metrics(ex.run_incentive(cfg))
    assert rows[("minkowski", "ldp", math.inf, "gradient_l2_error")].value == 0.0
    assert rows[("minkowski", "ldp", math.inf, "shapley_l2_error")].value == 0.0


def test_social_policy():
    assert ex.social_policy(0.2) == PopulationPolicy("fraction", 0.90)
    assert ex.social_policy(0.1) == PopulationPolicy("fraction", 0.98)
    assert ex.social_policy(0.3) == PopulationPolicy("full")


def test_single_report_pic_beats_ldp():
    for mech in ("minkowski", "laplace", "planar_laplace", "square_wave", "staircase"):
        pic = ex.run_single_report(build_config("randomize", {}, {"eps_central": (1.0,), "mechanism": (mech,), "trials": 2000}))
        ldp = ex.run_single_report(build_config("randomize", {}, {"eps": (1.0,), "mechanism": (mech,), "trials": 2000}))
        assert pic[0].eps_local[0] > 1.0
        assert pic[0].value < ldp[0].value


def test_incentive_pic_beats_ldp():
    common = {"n": (1000,), "trials": 2}
    pic = _metrics(ex.run_incentive(build_config("incentive", {}, dict(common, eps_central=(1.0,)))))
    ldp = _metrics(ex.run_incentive(build_config("incentive", {}, dict(common, eps=(1.0,)))))
    assert pic[("minkowski", "pic", 1.0, "gradient_l2_error")].value < ldp[("minkowski", "ldp", 1.0, "gradient_l2_error")].value


def test_rows_carry_local_budget():
    rows = ex.run_single_report(build_config("randomize", {}, {"eps_central": (1.0,), "trials": 100, "n": (50_000,)}))
    expected = invert_amplify(1.0, 2e-7, 50_000).epsilon
    assert rows[0].eps_local == (pytest.approx(expected),)
    record = rows[0].record()
    assert float(record[4]) == pytest.approx(expected)


def test_pic_infeasible_population_flagged():
    rows = ex.run_single_report(build_config("randomize", {}, {"eps_central": (1.0,), "trials": 10, "n": (100,)}))
    assert rows[0].status == "infeasible"
    assert rows[0].eps_local == (1.0,)


# ---------------------------------------------------------------- rates


def test_upper_curve_power_law():
    for d in (1, 2, 3):
        a = ex.upper_curve(d, 1.0, 1e-6, 10_000)
        b = ex.upper_curve(d, 1.0, 1e-6, 20_000)
        assert b / a == pytest.approx(2 ** (-2 / (d + 2)), rel=1e-12)
    pts = ex.theoretical_rates(2, 1.0, 1e-6, ex.RATE_GRID)
    assert ex.loglog_slope([p.n for p in pts], [p.upper for p in pts]) == pytest.approx(-0.5, abs=1e-12)
    assert ex.loglog_slope([p.n for p in pts], [p.lower for p in pts]) == pytest.approx(-0.5, abs=1e-12)


def test_rate_feasibility_threshold():
    log_inv = math.log(1e6)
    n_star = 2**9 * log_inv / math.expm1(1.0) ** 2
    assert not ex.rate_feasible(2, 1.0, 1e-6, math.floor(n_star))
    assert ex.rate_feasible(2, 1.0, 1e-6, math.floor(n_star) + 1)


def test_empirical_error_below_upper_curve():
    rng = np.random.default_rng(0)
    for n in (2**14, 2**17):
        err, eps_local = ex.empirical_pic_sq_error(2, 1.0, 1e-6, n, 3000, rng)
        assert eps_local > 1.0
        assert err <= ex.upper_curve(2, 1.0, 1e-6, n)


def test_rates_cli(capsys):
    code, out, _ = run_cli(capsys, "rates", "--eps-central", "1", "--n", "2^10,2^16")
    rows = rows_of(out)
    assert code == 0
    assert [r["status"] for r in rows if r["metric"] == "upper_bound"] == ["infeasible", "ok"]


# ---------------------------------------------------------------- protocol demo


def test_protocol_demo(capsys):
    code, out, _ = run_cli(capsys, "protocol-demo", "--eps", "2", "--n", "20,15", "--deterministic-keys", "1")
    assert code == 0
    assert "event=publish group=1 count=15" in out
    row = [r for r in rows_of(out[out.index("scenario,"):])][0]
    assert row["metric"] == "delivery_rate" and float(row["value"]) == 1.0


def test_protocol_demo_bad_task(capsys):
    assert run_cli(capsys, "protocol-demo", "--eps", "2", "--groups", "1", "--n", "5", "--task", "max_matching")[0] == 2
