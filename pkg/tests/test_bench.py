import pytest

from edgesched.bench import BenchSpec, ConfigError, bench, config_for, export_figures, fig5_csv, rebuild_spline
from edgesched.simulator import run
from edgesched.workload import ProfileSpec, generate

SMALL = ProfileSpec(n_docs=120)


@pytest.mark.parametrize(
    "key, slots, proc, up",
    [
        ("0,r", 0, "none", "random"),
        ("1,s", 1, "splines", "inverse"),
        ("3,s", 3, "splines", "inverse"),
        ("2,r", 2, "random", "random"),
    ],
)
def test_key_mapping(key, slots, proc, up):
    cfg = config_for(key)
    assert (cfg.num_cpu_slots, cfg.process_policy, cfg.upload_policy) == (slots, proc, up)
    assert not cfg.offline_preprocessed


def test_ffill_and_fixed_upload():
    assert config_for("ffill,0").offline_preprocessed
    assert config_for("2,r", random_upload=False).upload_policy == "inverse"


@pytest.mark.parametrize("key", ["0,s", "x", "1,q", "ffill,1", "-1,r"])
def test_bad_keys(key):
    with pytest.raises(ConfigError):
        config_for(key)


def test_spec_errors_before_running():
    with pytest.raises(ConfigError):
        bench(BenchSpec(configs=("1,s", "1,s")))
    with pytest.raises(ConfigError):
        bench(BenchSpec(repeats=0))
    with pytest.raises(ConfigError):
        bench(BenchSpec(configs=("1,s", "bogus")))


def test_repeats_one_deterministic_zero_spread():
    res = bench(BenchSpec(configs=("1,s",), repeats=1, workload=SMALL))
    s = res.summaries["1,s"]
    assert s.min == s.q1 == s.median == s.q3 == s.max


def test_paired_workloads_and_control_ordering():
    res = bench(BenchSpec(configs=("0,r", "ffill,0", "1,s"), repeats=3, workload=SMALL))
    by_repeat = {}
    for r in res.runs:
        by_repeat.setdefault(r.repeat, set()).add(r.seed)
    assert all(len(seeds) == 1 for seeds in by_repeat.values())
    assert res.summaries["ffill,0"].median < res.summaries["0,r"].median
    assert len(res.summary_csv().splitlines()) == 4
    assert "median" in res.table()


def test_parallel_matches_serial():
    spec = BenchSpec(configs=("1,s", "2,r"), repeats=2, workload=SMALL, keep_traces=False)
    a, b = bench(spec), bench(spec, workers=2)
    assert a.summary_csv() == b.summary_csv()


def test_export_figures(tmp_path):
    wl = generate(SMALL)
    res = run(config_for("1,s"), wl)
    files = export_figures(wl, res.trace, tmp_path, spline=res.spline, gnuplot=True)
    assert set(files) == {"fig5", "fig6", "knots", "estimates", "gnuplot"}
    assert fig5_csv(wl, rebuild_spline(res.trace, wl)) == files["fig5"].read_text()
