import json

import numpy as np
import pytest

from bdris import experiment
from bdris.errors import ContractError, ExperimentError, OptimizationError
from bdris.experiment import (
    ArchSpec,
    ExperimentConfig,
    ResultTable,
    emit,
    read_csv,
    read_json,
    render,
    run_experiment,
    scaling_curves,
    scaling_figures,
    scaling_grid,
    validate_scaling,
)
from bdris.scaling import GAIN_LOC_LIMIT

SMALL = """
scenario = localized
sweep_var = N
values = 4, 8
architectures = tridiagonal/lossless, fully/half_wave_lossy@0.05
trials = 10
seed = 7
"""


class TestConfig:
    def test_from_text(self):
        cfg = ExperimentConfig.from_text(SMALL)
        assert cfg.values == (4.0, 8.0)
        assert [a.label for a in cfg.architectures] == ["tridiagonal/lossless", "fully/half_wave_lossy@0.05"]
        assert cfg.p_t == 10.0 and cfg.a == 4.0 and cfg.c0_db == -30.0

    @pytest.mark.parametrize("text", ["bogus = 1", "trials = many", "scenario = moon",
                                      "architectures = tridiagonal", "values = "])
    def test_rejects(self, text):
        with pytest.raises(ContractError):
            ExperimentConfig.from_text(text)

    def test_arch_parse(self):
        spec = ArchSpec.parse(" fully / half_wave_lossy @ 0.1 ")
        assert spec.alpha_db_per_m == 0.1
        with pytest.raises(ContractError):
            ArchSpec.parse("custom/lossless")

    def test_overrides_skip_none(self):
        cfg = ExperimentConfig().with_overrides(seed=None, trials=3)
        assert cfg.trials == 3 and cfg.seed == 0


class TestTables:
    TABLE = ResultTable(["name", "value", "count", "flag"], [["x", 1.0 / 3.0, 4, True]])

    def test_one_row_csv(self):
        text = emit(self.TABLE, "csv", "-")
        assert text.splitlines() == ["name,value,count,flag", "x,0.333333333,4,true"]

    def test_csv_round_trip(self):
        back = read_csv(render(self.TABLE, "csv"))
        assert back.columns == self.TABLE.columns
        assert back.rows == [["x", 0.333333333, 4, True]]

    def test_json_matches_csv(self):
        a = read_csv(render(self.TABLE, "csv"))
        b = read_json(render(self.TABLE, "json"))
        assert a.rows == b.rows

    def test_file_output(self, tmp_path):
        path = tmp_path / "out.csv"
        emit(self.TABLE, "csv", str(path))
        assert path.read_text() == render(self.TABLE, "csv")

    def test_unwritable(self, tmp_path):
        with pytest.raises(OSError):
            emit(self.TABLE, "csv", str(tmp_path / "missing" / "out.csv"))

    def test_empty(self):
        with pytest.raises(ContractError):
            emit(ResultTable(["a"]), "csv", "-")

    def test_nan_survives_json(self):
        t = ResultTable(["v"], [[float("nan")]])
        assert json.loads(render(t, "json"))["rows"][0]["v"] == "nan"


class TestSweep:
    def test_four_rows_bit_exact(self):
        cfg = ExperimentConfig.from_text(SMALL)
        a = render(run_experiment(cfg), "csv")
        assert a == render(run_experiment(cfg), "csv")
        table = read_csv(a)
        assert len(table) == 4
        assert table.columns[:3] == ["sweep_var", "sweep_value", "architecture"]
        assert set(table.column("trials")) == {10}
        assert set(table.column("seed")) == {7}

    def test_seed_changes_output(self):
        cfg = ExperimentConfig.from_text(SMALL)
        assert render(run_experiment(cfg), "csv") != render(run_experiment(cfg.with_overrides(seed=8)), "csv")

    def test_worker_pool_matches_serial(self, monkeypatch):
        cfg = ExperimentConfig.from_text(SMALL).with_overrides(values=(4.0,), trials=6)
        serial = render(run_experiment(cfg), "csv")
        monkeypatch.setenv("BDRIS_WORKERS", "2")
        assert render(run_experiment(cfg), "csv") == serial

    def test_bad_worker_env(self, monkeypatch):
        monkeypatch.setenv("BDRIS_WORKERS", "lots")
        with pytest.raises(ContractError):
            run_experiment(ExperimentConfig.from_text(SMALL))

    def test_paired_gain_never_below_one(self):
        cfg = ExperimentConfig.from_text(SMALL).with_overrides(values=(8.0,))
        for t in range(5):
            base, bd, _ = experiment._run_trial((cfg, 8.0, t))
            assert bd >= base * (1 - 1e-9)

    def test_failures_are_counted(self, monkeypatch):
        real = experiment.optimize
        calls = {"n": 0}

        def flaky(channels, model, *a, **kw):
            if model.topology.n_edges:
                calls["n"] += 1
                if calls["n"] == 3:
                    raise OptimizationError("boom")
            return real(channels, model, *a, **kw)

        monkeypatch.setattr(experiment, "optimize", flaky)
        cfg = ExperimentConfig.from_text(SMALL).with_overrides(
            values=(4.0,), trials=20, architectures=(ArchSpec.parse("tridiagonal/lossless"),))
        row = run_experiment(cfg).where(architecture="tridiagonal/lossless")[0]
        assert row["failures"] == 1 and row["trials"] == 19

    def test_too_many_failures(self, monkeypatch):
        def broken(channels, model, *a, **kw):
            raise OptimizationError("boom")

        monkeypatch.setattr(experiment, "optimize", broken)
        with pytest.raises(ExperimentError):
            run_experiment(ExperimentConfig.from_text(SMALL))

    def test_alpha_sweep_decreases_power(self):
        cfg = ExperimentConfig.from_text(
            "sweep_var = alpha_db_per_m\nvalues = 0, 0.1, 1\nn = 8\ntrials = 8\n"
            "architectures = tridiagonal/half_wave_lossy\nscenario = distributed")
        p = run_experiment(cfg).column("p_r_dbw")
        assert p[0] >= p[1] >= p[2]

    def test_receiver_grid_is_closed_form_only(self):
        with pytest.raises(ContractError):
            run_experiment(ExperimentConfig(scenario="receiver-grid"))


class TestClosedForm:
    def test_localized_curve_approaches_limit(self):
        cfg = ExperimentConfig(metrics=("loc",), n_values=(4.0, 64.0, 4096.0), a_values=(4.0,))
        gains = 10 ** (np.array(scaling_curves(cfg).column("gain_db")) / 10)
        assert np.all(np.diff(gains) > 0)
        assert GAIN_LOC_LIMIT - gains[-1] < 1e-3

    def test_grid_shape(self):
        cfg = ExperimentConfig(metrics=("loc", "sc"), n=8, x_min=0, x_max=4, y_min=-2, y_max=2, step=2)
        table = scaling_grid(cfg)
        assert len(table) == 9
        assert set(table.column("metric")) == {"sc"}

    def test_figures_bundle(self):
        cfg = ExperimentConfig(metrics=("fc",), n=4, n_values=(4.0,), a_values=(4.0,),
                               x_min=0, x_max=0, y_min=0, y_max=0)
        figs = scaling_figures(cfg)
        assert len(figs["curves"]) == 1 and len(figs["grid"]) == 1

    def test_validate_columns(self):
        table = validate_scaling(ExperimentConfig(mc_trials=200), n_values=(4,))
        assert len(table) == 4
        assert all(abs(r) < 0.5 for r in table.column("rel_err"))
