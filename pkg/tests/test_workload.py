import numpy as np
import pytest

from edgesched.workload import (
    Bump,
    InvalidSpec,
    InvariantViolation,
    ParseError,
    ProfileSpec,
    generate,
    load_manifest,
    parse_manifest,
)

FLAT = dict(n_docs=50, size_jitter=0.0, noise=0.0)


def test_no_bumps_no_reduction():
    wl = generate(ProfileSpec(bumps=(), **FLAT))
    assert all(it.processed_size == it.original_size for it in wl)
    assert all(it.true_ratio == 0 for it in wl)


def test_peak_reduction_at_bump_center():
    wl = generate(ProfileSpec(bumps=(Bump(center=20, width=10, peak=0.4),), **FLAT))
    it = wl[20]
    assert it.original_size == 1_000_000
    assert it.processed_size == 600_000
    assert wl[5].processed_size == wl[5].original_size


def test_same_seed_same_workload():
    a, b = generate(ProfileSpec(seed=9)), generate(ProfileSpec(seed=9))
    assert a.items == b.items
    assert generate(ProfileSpec(seed=10)).items != a.items


def test_default_invariants():
    wl = generate(ProfileSpec(seed=3))
    assert len(wl) == 759
    assert [it.index for it in wl] == list(range(759))
    arr = [it.arrival_time for it in wl]
    assert arr == sorted(arr) and arr[0] == 0.0
    assert all(0 < it.processed_size <= it.original_size for it in wl)
    frac = np.array([1 - it.processed_size / it.original_size for it in wl])
    assert frac.max() <= 0.4 + 1e-6


def test_ground_truth_matches_sizes():
    wl = generate(ProfileSpec(seed=4))
    sizes = np.array([it.original_size for it in wl])
    assert np.array_equal(
        np.array([it.processed_size for it in wl]),
        np.clip(np.rint(sizes * (1 - wl.reduction)), 1, sizes).astype(np.int64),
    )
    rows = wl.to_csv().splitlines()
    assert rows[0].endswith(",ratio")
    for line, it in zip(rows[1:], wl):
        assert float(line.split(",")[-1]) == it.true_ratio


def _autocorr(x, lag):
    x = x - x.mean()
    return float(np.dot(x[:-lag], x[lag:]) / np.dot(x, x))


@pytest.mark.parametrize("seed", range(10))
def test_local_correlation(seed):
    wl = generate(ProfileSpec(seed=seed))
    frac = np.array([1 - it.processed_size / it.original_size for it in wl])
    assert _autocorr(frac, 1) > _autocorr(frac, 50)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(bump_peak=(0.1, 0.5)),
        dict(bumps=(Bump(1, 5, 0.45),)),
        dict(size_jitter=1.0),
        dict(arrival_jitter=-0.1),
        dict(n_docs=0),
    ],
)
def test_invalid_spec(kwargs):
    with pytest.raises(InvalidSpec):
        generate(ProfileSpec(**kwargs))


HEADER = "index,path,original_size,processed_size,cpu_cost,arrival_time\n"


def test_manifest_round_trip(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text(HEADER + "0,a.png,100,80,0.5,0.0\n1,b.png,200,200,0.7,0.4\n2,c.png,50,10,0.1,0.9\n")
    wl = load_manifest(p)
    assert len(wl) == 3
    assert wl[2].path == "c.png" and wl[2].processed_size == 10
    again = parse_manifest(generate(ProfileSpec(n_docs=20, seed=1)).to_csv())
    assert again.items == generate(ProfileSpec(n_docs=20, seed=1)).items


def test_manifest_processed_larger_than_original():
    with pytest.raises(InvariantViolation) as exc:
        parse_manifest(HEADER + "0,a.png,100,80,0.5,0.0\n1,b.png,100,120,0.5,0.1\n")
    assert exc.value.field == "processed_size"
    assert exc.value.line == 3


def test_manifest_missing_column():
    with pytest.raises(ParseError):
        parse_manifest("index,path,original_size,cpu_cost,arrival_time\n0,a,1,1,0\n")


def test_manifest_bad_number_reports_line():
    with pytest.raises(ParseError) as exc:
        parse_manifest(HEADER + "0,a.png,100,80,0.5,0.0\n1,b.png,lots,80,0.5,0.1\n")
    assert exc.value.line == 3
