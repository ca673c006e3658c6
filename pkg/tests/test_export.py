import numpy as np
import pytest

from illiquid.errors import ConfigError
from illiquid.export import (
    CURVE_HEADER,
    read_curve_policy,
    read_curve_table,
    write_curve,
    write_labelled_table,
    write_merton,
    write_policy,
    write_simulation,
    write_surface,
)


def header_and_rows(path):
    lines = path.read_text().strip().splitlines()
    return lines[0], lines[1:]


def test_curve_round_trip(tmp_path, curve):
    path = write_curve(tmp_path / "out" / "curve.csv", curve)
    header, rows = header_and_rows(path)
    assert header == "z,v,vz,vzz,pi_over_l,c_over_l"
    assert len(rows) == curve.grid.size
    table = read_curve_table(path, CURVE_HEADER)
    np.testing.assert_allclose(table["v"], curve.v, rtol=1e-10, atol=1e-9)
    policy = read_curve_policy(path)
    pi_over_l, _ = curve.policy_ratios()
    z = curve.grid.nodes[50]
    pi, _ = policy.evaluate(0.0, np.array([z]), np.array([1.0]))
    assert pi[0] == pytest.approx(pi_over_l[50] * z, rel=1e-9)


def test_surface_and_policy(tmp_path, surface, weibull_law):
    path = write_surface(tmp_path / "surface.csv", surface, time_stride=7)
    header, rows = header_and_rows(path)
    assert header == "t,z,W,Wz,Wzz"
    n_times = len(range(0, surface.tgrid.n_steps + 1, 7))
    if surface.tgrid.n_steps % 7:
        n_times += 1
    assert len(rows) == n_times * surface.zgrid.size
    assert float(rows[-1].split(",")[0]) == pytest.approx(surface.tgrid.t_max)

    header, rows = header_and_rows(write_policy(tmp_path / "policy.csv", surface, weibull_law))
    assert header == "z,pi_over_l,c_over_l,k,lambda"
    assert rows[0].split(",")[3:] == ["2", "2"]


def test_surface_stride_must_be_positive(tmp_path, surface):
    with pytest.raises(ValueError):
        write_surface(tmp_path / "surface.csv", surface, time_stride=0)


def test_merton_and_simulation(tmp_path, market):
    z = np.array([0.5, 1.0, 2.0])
    header, rows = header_and_rows(write_merton(tmp_path / "merton.csv", z, market, 0.5))
    assert header == "z,pi_over_l,c_over_l,value"
    assert [float(x) for x in rows[1].split(",")[:3]] == pytest.approx([1.0, 0.2, 0.5])

    header, rows = header_and_rows(write_simulation(tmp_path / "simulate.csv", -3.1, 0.01, 0.0, float("nan")))
    assert header == "mean,std_error,absorbed_fraction,solver_value"
    assert rows == ["-3.1,0.01,0,nan"]


def test_labelled_table(tmp_path):
    blocks = {"merton": [np.array([1.0, 2.0]), np.array([0.2, 0.2]), np.array([0.5, 0.5])], "weibull_k2": [np.array([1.0]), np.array([0.1]), np.array([0.6])]}
    header, rows = header_and_rows(write_labelled_table(tmp_path / "all.csv", ("curve", "z", "pi_over_l", "c_over_l"), blocks))
    assert header == "curve,z,pi_over_l,c_over_l"
    assert rows == ["merton,1,0.2,0.5", "merton,2,0.2,0.5", "weibull_k2,1,0.1,0.6"]


def test_reading_requires_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("z,v\n1,2\n3,4\n")
    with pytest.raises(ConfigError):
        read_curve_policy(path)
    with pytest.raises(ConfigError):
        read_curve_policy(tmp_path / "absent.csv")
