import numpy as np
import pytest

from src.dgp import (gen_cate, gen_cate_broken, gen_highdim_ate, gen_lowdim_ate, gen_noisy_proxy, generar,
                     link_logistico, m_lowdim, mc_att, mc_lowdim_ate, oracle_att, oracle_cate,
                     oracle_highdim_ate, oracle_lowdim_ate, oracle_noisy_proxy, oraculo, posterior_att)
from src.errors import ConfigurationError


class TestGeneradores:

    @pytest.mark.parametrize("benchmark", ["lowdim-ate", "att", "highdim-ate", "cate", "cate-broken-w",
                                           "noisy-proxy-1", "noisy-proxy-6"])
    def test_deterministas_y_validos(self, benchmark):
        a = generar(benchmark, 50, semilla=4)
        b = generar(benchmark, 50, semilla=4)
        assert a.df.equals(b.df)
        assert a.validar_datos()
        assert a.meta["benchmark"] == benchmark
        assert not generar(benchmark, 50, semilla=5).df.equals(a.df)

    def test_columnas_lowdim(self):
        datos = gen_lowdim_ate(10)
        assert list(datos.df.columns) == ["a", "y", "z1", "z2", "w1", "w2"]

    def test_dimensiones_highdim(self):
        datos = gen_highdim_ate(20, dx=7, dz=3, dw=2)
        assert datos.meta["dims"]["x"] == 7
        assert datos.meta["dims"]["z"] == 3
        assert datos.meta["dims"]["w"] == 2

    def test_cate_tratamiento_binario(self):
        datos = gen_cate(200)
        assert set(np.unique(datos.bloque("a"))) <= {0.0, 1.0}
        assert datos.tiene("v")

    def test_proxy_relevante_en_lowdim(self):
        df = gen_lowdim_ate(10_000, semilla=1).df
        assert np.corrcoef(df["a"], df["z2"])[0, 1] > 0.3

    def test_n_invalido(self):
        with pytest.raises(ConfigurationError):
            gen_lowdim_ate(0)

    def test_setting_invalido(self):
        with pytest.raises(ConfigurationError):
            gen_noisy_proxy(7, 10)

    def test_benchmark_desconocido(self):
        with pytest.raises(ConfigurationError):
            generar("dsprites", 10)

    def test_link_logistico_acotado(self):
        valores = link_logistico(np.linspace(-20.0, 20.0, 101))
        assert np.all((valores > 0.1) & (valores < 0.9))


class TestEnlacesRotos:

    def test_variante_w_no_toca_z(self):
        base = gen_cate(300, semilla=2)
        rota = gen_cate_broken("W", 300, semilla=2)
        z = base.columnas_rol("z")
        assert np.array_equal(base.df[z].to_numpy(), rota.df[z].to_numpy())
        assert rota.meta["benchmark"] == "cate-broken-w"

    def test_desvio_del_ruido(self):
        rota = gen_cate_broken("both", 10_000, semilla=0)
        for col in rota.columnas_rol("w") + rota.columnas_rol("z"):
            assert rota.df[col].std() == pytest.approx(100.0, abs=5.0)

    def test_variante_desconocida(self):
        with pytest.raises(ConfigurationError):
            gen_cate_broken("X", 10)


class TestOraculos:

    def test_highdim_analitico(self):
        curva = oracle_highdim_ate(np.array([0.5, 0.0, -0.6]))
        assert curva.valores.tolist() == pytest.approx([0.85, 0.0, -0.36], abs=1e-15)
        assert curva.metodo == "analytic"

    def test_cate_analitico(self):
        curva = oracle_cate(np.array([[1.0, 1.0], [1.0, 0.0], [1.0, 2.0]]))
        assert curva.valores.tolist() == [0.0, 0.0, 50.0]

    def test_lowdim_acotado_y_periodico(self):
        grilla = np.linspace(-2.0, 3.0, 9)
        curva = oracle_lowdim_ate(grilla)
        desplazada = oracle_lowdim_ate(grilla + 4.0 * np.pi / 3.0)
        assert np.all(np.abs(curva.valores) <= 3.0)
        assert np.allclose(curva.valores, desplazada.valores, atol=1e-8)

    @pytest.mark.slow
    def test_lowdim_cuadratura_contra_monte_carlo(self):
        media, se = mc_lowdim_ate(0.0, M=1_000_000, semilla=0)
        assert abs(oracle_lowdim_ate([0.0]).valores[0] - media) <= 3.0 * se

    @pytest.mark.slow
    def test_att_cuadratura_contra_monte_carlo(self):
        media, se = mc_att(0.0, 0.0, M=1_000_000, semilla=0)
        assert abs(oracle_att([0.0], 0.0).valores[0] - media) <= 3.0 * se

    def test_att_posterior_normalizada(self):
        posterior = posterior_att(0.3)
        assert posterior.cdf(2.0) - posterior.cdf(-1.0) == pytest.approx(1.0, abs=1e-8)

    def test_att_ancla_lejana_colapsa_en_el_borde(self):
        grilla = np.array([-0.5, 0.5])
        curva = oracle_att(grilla, 50.0)
        assert np.allclose(curva.valores, m_lowdim(grilla, 2.0), atol=0.05)
        assert curva.ancla == 50.0

    def test_noisy_setting_1(self):
        curva = oracle_noisy_proxy(1, np.array([0.0]))
        assert curva.valores[0] == pytest.approx(1.0 / 9.0 + 1.0, abs=2e-3)

    @pytest.mark.slow
    def test_noisy_settings_5_y_6_contra_monte_carlo(self):
        from src.dgp import _muestras_noisy
        for setting, k, pendiente in ((5, 0.5, 0.1), (6, 10.0, 2.0)):
            m = _muestras_noisy(setting, 200_000, 7)
            a = 0.3
            directo = np.mean(3.0 * m["w"] - pendiente * a - np.cos(k * a + 5.0 * m["u"]))
            assert oracle_noisy_proxy(setting, np.array([a])).valores[0] == pytest.approx(directo, abs=0.05)

    def test_att_requiere_ancla(self):
        with pytest.raises(ConfigurationError):
            oraculo("att", np.zeros(3))

    def test_cate_roto_usa_oraculo_cate(self):
        grilla = np.array([[1.0, 0.25]])
        assert oraculo("cate-broken-z", grilla).valores[0] == oracle_cate(grilla).valores[0]
