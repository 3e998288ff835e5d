import json
import xml.etree.ElementTree as ET

import pandas as pd
import pytest

from config import cargar_preset, preset_para_n
from main import main
from src.bench import (RunConfig, cargar_curvas, cmd_bench, cmd_eval, cmd_gen, construir_run, hash_checkpoint,
                       parsear_semillas, verificar_hashes)
from src.errors import ConfigurationError, ValidationError


def _run_kpv(salida, **extra):
    campos = {"benchmark": "noisy-proxy-1", "estimadores": ["KPV"], "N": [30, 40], "semillas": [0, 1],
              "n_grilla": 10, "salida": str(salida)}
    campos.update(extra)
    return RunConfig(**campos)


class TestSemillas:

    def test_rango(self):
        assert parsear_semillas("0..3") == [0, 1, 2, 3]

    def test_lista_y_entero(self):
        assert parsear_semillas("1,3, 5") == [1, 3, 5]
        assert parsear_semillas("4") == [4]

    def test_invalidas(self):
        with pytest.raises(ValidationError):
            parsear_semillas("a..b")
        with pytest.raises(ValidationError):
            parsear_semillas("5..2")


class TestRunConfig:

    def test_objetivo_por_defecto_del_benchmark(self):
        assert RunConfig(benchmark="att").objetivo == "ATT"
        assert RunConfig(benchmark="cate-broken-z").objetivo == "CATE"

    @pytest.mark.parametrize("campos", [
        {"benchmark": "dsprites"},
        {"benchmark": "lowdim-ate", "objetivo": "CATE"},
        {"estimadores": ["PMMR"]},
        {"estimadores": ["CEVAE"]},
        {"benchmark": "highdim-ate", "estimadores": ["KAP"]},
        {"benchmark": "cate", "estimadores": ["KPV"]},
        {"N": [5]},
        {"semillas": []},
        {"benchmark": "cate", "ratio": "kliep"},
        {"perturbar": "ambos"},
        {"sigma": -1.0},
        {"perdidas": ["cuantil"]},
        {"estimadores": ["KPV"], "perturbar": "outcome"},
    ])
    def test_combinaciones_invalidas(self, campos):
        with pytest.raises(ValidationError):
            RunConfig(**campos).validar()

    def test_celdas_con_barrido_de_perdidas(self):
        run = RunConfig(estimadores=["DRPCLNET-V1", "KPV"], perdidas=["huber", "mse-cf"])
        etiquetas = [e for _, _, e in run.celdas()]
        assert etiquetas == ["DRPCLNET-V1@huber", "DRPCLNET-V1@mse_cf", "KPV"]

    def test_celdas_con_perturbacion(self):
        run = RunConfig(estimadores=["OUTCOMENET"], perturbar="treatment", sigma=0.5)
        assert run.celdas()[0][2] == "OUTCOMENET+pert-treatment(0.5)"

    def test_hash_ignora_la_salida(self, tmp_path):
        assert _run_kpv(tmp_path / "a").hash == _run_kpv(tmp_path / "b").hash
        assert _run_kpv(tmp_path / "a").hash != _run_kpv(tmp_path / "a", n_grilla=11).hash

    def test_perdida_pisa_el_preset(self):
        preset = RunConfig(benchmark="lowdim-ate").resolver_preset("huber")
        assert preset["outcome"]["loss"] == "huber"
        assert preset["treatment"]["loss"] == "huber"


class TestPresetPorN:

    @pytest.mark.parametrize("N, lr", [(2000, 1e-3), (4999, 1e-3), (5000, 5e-4), (20000, 5e-4)])
    def test_tercera_etapa_lowdim(self, N, lr):
        preset = RunConfig(benchmark="lowdim-ate", N=[N]).resolver_preset(N=N)
        assert preset["third_stage"]["lr"] == pytest.approx(lr)
        assert "por_n" not in preset

    def test_att_hereda_los_umbrales(self):
        preset = RunConfig(benchmark="att").resolver_preset(N=5000)
        assert preset["third_stage"]["lr"] == pytest.approx(5e-4)

    def test_highdim_hasta_10000(self):
        preset = RunConfig(benchmark="highdim-ate").resolver_preset(N=10000)
        assert preset["outcome"]["lr_stage1"] == pytest.approx(1e-4)
        assert preset["outcome"]["lambda2"] == [10.0, 250.0]
        assert preset["treatment"]["lambda2"] == [10.0, 150.0]

    @pytest.mark.parametrize("N", [15000, 20000])
    def test_highdim_desde_15000(self, N):
        preset = RunConfig(benchmark="highdim-ate").resolver_preset(N=N)
        assert preset["outcome"]["lr_stage1"] == pytest.approx(5e-5)
        assert preset["outcome"]["lr_stage2"] == pytest.approx(5e-5)
        assert preset["outcome"]["lambda2"] == [50.0, 500.0]
        assert preset["treatment"]["lr_stage1"] == pytest.approx(5e-5)
        assert preset["treatment"]["lr_stage2"] == pytest.approx(1e-4)
        assert preset["treatment"]["lambda2"] == [50.0, 500.0]
        assert preset["third_stage"]["lr"] == pytest.approx(1e-4)

    def test_sin_n_descarta_las_tablas(self):
        preset = cargar_preset("highdim-ate")
        assert "por_n" not in preset
        assert preset["outcome"]["lambda2"] == [10.0, 250.0]

    def test_hiper_explicito_gana(self):
        run = RunConfig(benchmark="lowdim-ate", hiper={"third_stage": {"lr": 2e-3}})
        assert run.resolver_preset(N=5000)["third_stage"]["lr"] == pytest.approx(2e-3)

    def test_tablas_del_archivo_de_corrida(self, tmp_path):
        ruta = tmp_path / "corrida.toml"
        ruta.write_text('[run]\nbenchmark = "lowdim-ate"\n\n[por_n."3000".third_stage]\nlr = 7e-4\n',
                        encoding="utf-8")
        run = construir_run(ruta)
        assert run.resolver_preset(N=2000)["third_stage"]["lr"] == pytest.approx(1e-3)
        assert run.resolver_preset(N=3000)["third_stage"]["lr"] == pytest.approx(7e-4)

    def test_umbral_invalido(self):
        with pytest.raises(ConfigurationError):
            preset_para_n({"por_n": {"mucho": {"third_stage": {"lr": 1.0}}}}, 100)


class TestConstruirRun:

    def test_toml_y_flags(self, tmp_path):
        ruta = tmp_path / "corrida.toml"
        ruta.write_text(
            '[run]\nbenchmark = "noisy-proxy-3"\nestimadores = ["KPV", "KAP"]\nN = [100]\nsemillas = "0..2"\n'
            '\n[kernel]\nlambda1 = 0.01\n',
            encoding="utf-8",
        )
        run = construir_run(ruta, N="50,60", estimadores=None)
        assert run.benchmark == "noisy-proxy-3"
        assert run.estimadores == ["KPV", "KAP"]
        assert run.N == [50, 60]
        assert run.semillas == [0, 1, 2]
        assert run.resolver_preset()["kernel"]["lambda1"] == 0.01

    def test_campo_desconocido(self):
        with pytest.raises(ConfigurationError):
            construir_run(epocas=3)

    def test_archivo_inexistente(self, tmp_path):
        with pytest.raises(ConfigurationError):
            construir_run(tmp_path / "no.toml")


class TestComandos:

    def test_gen_escribe_csv_y_sidecar(self, tmp_path):
        rutas = cmd_gen(_run_kpv(tmp_path, N=[20], semillas=[0, 1]))
        assert len(rutas) == 2
        for ruta in rutas:
            assert ruta.exists()
            assert ruta.with_suffix(".json").exists()

    @pytest.mark.slow
    def test_bench_reproducible(self, tmp_path):
        primero = cmd_bench(_run_kpv(tmp_path / "a"), n_jobs=2)
        segundo = cmd_bench(_run_kpv(tmp_path / "b"), n_jobs=1)
        assert primero.codigo_salida == segundo.codigo_salida == 0
        for nombre in ("resultados.csv", "resumen.csv", "curvas.csv", "mse_vs_n.svg"):
            assert (tmp_path / "a" / nombre).read_bytes() == (tmp_path / "b" / nombre).read_bytes()
        relativa = "checkpoints/KPV/noisy-proxy-1/N30/semilla1/kpv"
        assert hash_checkpoint(tmp_path / "a" / relativa) == hash_checkpoint(tmp_path / "b" / relativa)

    @pytest.mark.slow
    def test_artefactos_del_bench(self, tmp_path):
        run = _run_kpv(tmp_path)
        resultado = cmd_bench(run, n_jobs=1)
        assert len(resultado.filas) == 4
        assert (resultado.filas["estado"] == "ok").all()
        assert verificar_hashes(tmp_path)
        with open(tmp_path / "config.json", encoding="utf-8") as f:
            assert json.load(f)["hash"] == run.hash
        assert ET.parse(tmp_path / "mse_vs_n.svg").getroot().tag.endswith("svg")

        curvas = cargar_curvas(run, "KPV", 40, 0)
        assert len(curvas) == 1
        assert curvas[0].valores.shape == (10,)

        evaluado = cmd_eval(run)
        pd.testing.assert_frame_equal(evaluado.resumen, resultado.resumen)

    def test_un_solo_n_no_genera_svg(self, tmp_path):
        cmd_bench(_run_kpv(tmp_path, N=[30], semillas=[0]), n_jobs=1)
        assert not (tmp_path / "mse_vs_n.svg").exists()

    def test_falla_total_devuelve_codigo_1(self, tmp_path):
        run = _run_kpv(tmp_path, N=[30], semillas=[0, 1], hiper={"kernel": {"lambda1": -1.0}})
        resultado = cmd_bench(run, n_jobs=1)
        assert resultado.codigo_salida == 1
        assert resultado.filas["estado"].str.startswith("error:ConfigurationError").all()
        assert resultado.filas["mse"].isna().all()


class TestMain:

    def test_error_de_configuracion_devuelve_2(self, tmp_path):
        assert main(["gen", "--benchmark", "dsprites", "--out", str(tmp_path)]) == 2

    def test_plot_sin_salida(self):
        assert main(["plot"]) == 2

    def test_gen(self, tmp_path):
        codigo = main(["gen", "--benchmark", "noisy-proxy-2", "--n", "20", "--seeds", "0,1", "--out", str(tmp_path)])
        assert codigo == 0
        assert (tmp_path / "datos" / "noisy-proxy-2" / "N20" / "semilla1.csv").exists()
