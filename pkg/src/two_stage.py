"""
Entrenamiento en dos etapas de puentes neuronales con regularización proximal

Base común de OutcomeNet y TreatmentNet. La primera etapa aprende un embedding
condicional del proxy a predecir; la segunda ajusta una cabeza lineal sobre el
producto de Kronecker de las features de tratamiento/covariables con el
embedding predicho.
"""

import sys
from collections import OrderedDict
from pathlib import Path

import numpy as np
import torch

sys.path.append(str(Path(__file__).parent.parent))
from config import ENTRENAMIENTO, REPORTES, fusionar_config

from .errors import ConfigurationError, DataError, ShapeError, StateError
from .linalg_ad import DTYPE, como_tensor, kron_filas
from .nets import (AdamWState, Cronograma, Featurizer, LossKind, MLPConfig, adamw_step,
                   anneal, exportar_featurizer, lbfgs_minimize, loss, restaurar_featurizer)
from .proximal import (ProxRidgeProblem, aux_first_stage, prox_head_solve, prox_ridge_solve,
                       residuo_normal)


class TwoStageBridge:
    """
    Puente bilineal entrenado en dos etapas

    Subclases definen los roles de cada etapa y el objetivo de segunda etapa.

    Args:
        preset: sección del preset (`outcome` o `treatment`)
        objetivo: 'ATE', 'CATE' o 'ATT'
        semilla: semilla de inicialización, lotes y dropout
        verbose: imprimir progreso por época
    """

    lado = None
    rol_proxy = None
    roles_etapa1 = ()

    def __init__(self, preset=None, objetivo="ATE", semilla=0, verbose=None):
        self.preset = fusionar_config(ENTRENAMIENTO, preset)
        if objetivo not in ("ATE", "CATE", "ATT"):
            raise ConfigurationError(f"Objetivo desconocido: {objetivo}")
        self.objetivo = objetivo
        self.semilla = int(semilla)
        self.verbose = REPORTES["verbose"] if verbose is None else verbose

        p = self.preset
        self.perdida = LossKind(p["loss"])
        self.cron_lambda1 = Cronograma.desde_preset(p["lambda1"], p["anneal"])
        self.cron_lambda_aux = Cronograma.desde_preset(p["lambda_aux"], p["anneal"])
        self.cron_lambda2 = Cronograma.desde_preset(p["lambda2"], p["anneal"])
        for clave in ("epochs", "batch_size", "t1", "t2", "k"):
            if int(p[clave]) < 0 or (clave == "batch_size" and int(p[clave]) < 1):
                raise ConfigurationError(f"{clave} inválido: {p[clave]}")

        self.ajustado = False
        self.construido = False
        self.errores = []
        self.warnings = []
        self.historial = []
        self.fallos_busqueda = 0
        self.residuo_max_etapa1 = 0.0

    # ==============================================
    # ESQUEMA (lo definen las subclases)
    # ==============================================

    def definir_bloques(self, datos):
        """OrderedDict nombre -> roles de los bloques de segunda etapa"""
        raise NotImplementedError

    def objetivo_etapa2(self, datos_d2, objetivos):
        """Vector de objetivos de segunda etapa (en escala de entrenamiento)"""
        raise NotImplementedError

    @property
    def escala_salida(self):
        return 1.0

    @property
    def desplazamiento_salida(self):
        return 0.0

    def a_escala_original(self, valores):
        """Lleva salidas de la cabeza a la escala de Y"""
        return valores * self.escala_salida + self.desplazamiento_salida

    # ==============================================
    # CONSTRUCCIÓN
    # ==============================================

    def _spec(self, clave):
        spec = self.preset.get(clave)
        if spec is None and clave not in ("stage1", self.rol_proxy):
            spec = self.preset.get("a")
        return spec

    def _nueva_red(self, clave, entrada, indice):
        return Featurizer(MLPConfig.desde_preset(entrada, self._spec(clave), self.semilla * 7919 + indice))

    def construir(self, datos_d1):
        """
        Fija el esquema, los estandarizadores (estadísticas de D1) y las redes

        Args:
            datos_d1: ProxyDataset del fold de primera etapa
        """
        self.bloques = self.definir_bloques(datos_d1)
        roles = set(self.roles_etapa1) | {self.rol_proxy} | {r for rs in self.bloques.values() for r in rs}
        self.dims = {rol: datos_d1.bloque(rol).shape[1] for rol in roles}
        for rol in (self.rol_proxy, "a"):
            if self.dims[rol] == 0:
                raise DataError(f"Falta el rol '{rol}' en los datos")

        self.estandar = {}
        for rol in sorted(roles):
            X = datos_d1.bloque(rol)
            if X.shape[1] == 0:
                continue
            media = X.mean(axis=0)
            desvio = X.std(axis=0)
            desvio = np.where(desvio > 0, desvio, 1.0)
            if not self.preset["standardize"]:
                media, desvio = np.zeros_like(media), np.ones_like(desvio)
            self.estandar[rol] = (media, desvio)

        entrada1 = sum(self.dims[r] for r in self.roles_etapa1)
        self.f1 = self._nueva_red("stage1", entrada1, 0)
        self.f_proxy = self._nueva_red(self.rol_proxy, self.dims[self.rol_proxy], 1)
        self._construir_etapa2()
        self.V = torch.zeros(self.f1.salida, self.f_proxy.salida, dtype=DTYPE)
        self.construido = True

    def _construir_etapa2(self):
        self.redes2 = OrderedDict()
        for i, (nombre, roles) in enumerate(self.bloques.items()):
            entrada = sum(self.dims[r] for r in roles)
            self.redes2[nombre] = self._nueva_red(nombre, entrada, 2 + i)
        dim = self.f_proxy.salida
        for red in self.redes2.values():
            dim *= red.salida
        self.head = torch.zeros(dim, dtype=DTYPE)

    @property
    def dim_cabeza(self):
        return int(self.head.numel())

    # ==============================================
    # FEATURES
    # ==============================================

    def _estandarizar(self, rol, X):
        X = np.asarray(X, dtype=np.float64)
        X = X.reshape(len(X), -1)
        if X.shape[1] != self.dims[rol]:
            raise ShapeError(f"El rol '{rol}' tiene {X.shape[1]} columnas, se esperaban {self.dims[rol]}")
        media, desvio = self.estandar[rol]
        return como_tensor((X - media) / desvio)

    def tensores(self, datos):
        """Tensores estandarizados por rol de un ProxyDataset"""
        salida = {}
        roles = set(self.roles_etapa1) | {self.rol_proxy} | {r for rs in self.bloques.values() for r in rs}
        for rol in roles:
            if self.dims[rol] > 0:
                salida[rol] = self._estandarizar(rol, datos.bloque(rol))
        return salida

    def _concatenar(self, t, roles):
        partes = [t[r] for r in roles if self.dims.get(r, 0) > 0]
        return torch.cat(partes, dim=1)

    def features_bloques(self, t, modo="eval"):
        """Kronecker fila a fila de los bloques de segunda etapa (sin el proxy)"""
        feats = None
        for nombre, roles in self.bloques.items():
            f = self.redes2[nombre](self._concatenar(t, roles), modo)
            feats = f if feats is None else kron_filas(feats, f)
        return feats

    def _psi(self, t, embedding, modo):
        bloques = self.features_bloques(t, modo)
        return kron_filas(bloques, embedding) if bloques is not None else embedding

    def _parametros_etapa2(self):
        pares = [(f"{self.rol_proxy}.{n}", p) for n, p in self.f_proxy.named_parameters()]
        for nombre, red in self.redes2.items():
            pares += [(f"{nombre}.{n}", p) for n, p in red.named_parameters()]
        return pares

    # ==============================================
    # ENTRENAMIENTO
    # ==============================================

    def entrenar(self, datos, plan, objetivos=None, entrenar_etapa1=True):
        """
        Entrena ambas etapas sobre los folds del plan

        Args:
            datos: ProxyDataset completo
            plan: SplitPlan (D1 primera etapa, D2 segunda etapa)
            objetivos: objetivos externos de segunda etapa alineados con plan.d2
            entrenar_etapa1: False para reutilizar la primera etapa ya entrenada

        Returns:
            self
        """
        plan.validar(len(datos))
        d1, d2 = datos.subconjunto(plan.d1), datos.subconjunto(plan.d2)
        if not self.construido:
            self.construir(d1)
        self._datos, self._plan, self._objetivos = datos, plan, objetivos

        t1 = self.tensores(d1)
        t2 = self.tensores(d2)
        y2 = como_tensor(self.objetivo_etapa2(d2, objetivos))
        x1 = self._concatenar(t1, self.roles_etapa1)
        x2 = self._concatenar(t2, self.roles_etapa1)

        p = self.preset
        epocas, tam = int(p["epochs"]), int(p["batch_size"])
        opt1 = AdamWState(self.f1.named_parameters(), p["lr_stage1"], p["weight_decay"])
        opt2 = AdamWState(self._parametros_etapa2(), p["lr_stage2"], p["weight_decay"])
        rng = np.random.default_rng(self.semilla)
        n1, n2 = len(d1), len(d2)
        lotes = max(1, int(np.ceil(max(n1, n2) / tam)))

        for epoca in range(epocas):
            lam1 = anneal(self.cron_lambda1, epoca, epocas)
            lam_aux = anneal(self.cron_lambda_aux, epoca, epocas)
            lam2 = anneal(self.cron_lambda2, epoca, epocas)
            posiciones = np.array_split(np.arange(max(n1, n2)), lotes)
            perm1, perm2 = rng.permutation(n1), rng.permutation(n2)
            perdidas1, perdidas2 = [], []

            for b, pos in enumerate(posiciones):
                idx1, idx2 = perm1[pos % n1], perm2[pos % n2]
                if entrenar_etapa1:
                    for _ in range(int(p["t1"])):
                        perdidas1.append(self._paso_etapa1(
                            x1[idx1], t1[self.rol_proxy][idx1], lam1, opt1, epoca, b))
                lote2 = {rol: t[idx2] for rol, t in t2.items()}
                for _ in range(int(p["t2"])):
                    perdidas2.append(self._paso_etapa2(
                        x2[idx2], lote2, y2[idx2], lam_aux, lam2, opt2, epoca, b))

            self.historial.append({
                "epoca": epoca,
                "perdida_etapa1": float(np.mean(perdidas1)) if perdidas1 else float("nan"),
                "perdida_etapa2": float(np.mean(perdidas2)) if perdidas2 else float("nan"),
                "lambda1": lam1, "lambda_aux": lam_aux, "lambda2": lam2,
            })
            if self.verbose and (epoca + 1) % REPORTES["cada_epocas"] == 0:
                h = self.historial[-1]
                print(f"  {self.lado} | época {epoca + 1}/{epocas} | etapa1 {h['perdida_etapa1']:.5f}"
                      f" | etapa2 {h['perdida_etapa2']:.5f}")

        if self.fallos_busqueda:
            self.warnings.append(f"{self.fallos_busqueda} búsquedas lineales sin Armijo")
        self.ajustado = True
        return self

    def _paso_etapa1(self, x, proxy, lam1, opt, epoca, lote):
        with torch.no_grad():
            T = self.f_proxy(proxy, "eval")
        Phi = self.f1(x, "train")
        problema = ProxRidgeProblem(Phi, T, lam1, self.V)
        V = prox_ridge_solve(problema)
        perdida = problema.objetivo(V)
        if not torch.isfinite(perdida):
            raise DataError(f"Pérdida de primera etapa no finita (época {epoca}, lote {lote})")
        opt.zero_grad()
        perdida.backward()
        adamw_step(opt)

        with torch.no_grad():
            Phi = self.f1(x, "eval")
            problema = ProxRidgeProblem(Phi, T, lam1, self.V)
            self.V = prox_ridge_solve(problema)
            self.residuo_max_etapa1 = max(self.residuo_max_etapa1, residuo_normal(problema, self.V))
        return float(perdida)

    def _paso_etapa2(self, x, lote, y, lam_aux, lam2, opt, epoca, indice):
        with torch.no_grad():
            Phi1 = self.f1(x, "eval")
        T = self.f_proxy(lote[self.rol_proxy], "train")
        V_aux = aux_first_stage(Phi1, T, lam_aux, self.V)
        Psi = self._psi(lote, Phi1 @ V_aux, "train")
        perdida = loss(self.perdida, y, Psi @ self.head)
        if not torch.isfinite(perdida):
            raise DataError(f"Pérdida de segunda etapa no finita (época {epoca}, lote {indice})")
        opt.zero_grad()
        perdida.backward()
        adamw_step(opt)

        with torch.no_grad():
            T = self.f_proxy(lote[self.rol_proxy], "eval")
            V_aux = aux_first_stage(Phi1, T, lam_aux, self.V)
            Psi = self._psi(lote, Phi1 @ V_aux, "eval")
        self.head = self._actualizar_cabeza(Psi, y, lam2)
        return float(perdida)

    def _actualizar_cabeza(self, Psi, y, lam2):
        previa = self.head.detach()
        if self.perdida.forma_cerrada:
            with torch.no_grad():
                return prox_head_solve(Psi, y, lam2, previa)

        def objetivo(h):
            return loss(self.perdida, y, Psi @ h) + lam2 * ((h - previa) ** 2).sum()

        resultado = lbfgs_minimize(objetivo, previa, int(self.preset["k"]), self.preset["lbfgs_lr"])
        if resultado.fallo_busqueda:
            self.fallos_busqueda += 1
        return resultado.theta

    # ==============================================
    # EVALUACIÓN
    # ==============================================

    def _exigir_ajustado(self):
        if not self.ajustado:
            raise StateError(f"El puente {self.lado} no fue ajustado")

    def evaluar_tensores(self, t):
        """Puente evaluado en tensores ya estandarizados (modo eval)"""
        with torch.no_grad():
            feats = self._psi(t, self.f_proxy(t[self.rol_proxy], "eval"), "eval")
            return self.a_escala_original(feats @ self.head)

    def evaluar(self, **bloques):
        """
        Puente en la escala original

        Args:
            **bloques: arrays por rol (a, x, v, s y el proxy)

        Returns:
            ndarray (n,)
        """
        self._exigir_ajustado()
        t = {rol: self._estandarizar(rol, X) for rol, X in bloques.items() if self.dims.get(rol, 0) > 0}
        faltan = {self.rol_proxy} | {r for rs in self.bloques.values() for r in rs if self.dims[r] > 0}
        faltan -= set(t)
        if faltan:
            raise ShapeError(f"Faltan roles para evaluar el puente: {sorted(faltan)}")
        return self.evaluar_tensores(t).numpy()

    def evaluar_dataset(self, datos):
        self._exigir_ajustado()
        return self.evaluar_tensores(self.tensores(datos)).numpy()

    def embedding_proxy(self, datos, roles_extra=()):
        """
        Features conjuntas φ(roles_extra) ⊗ φ(proxy) por fila, en modo eval

        Se usa como objetivo de las regresiones de embeddings (CATE / ATT).
        """
        self._exigir_ajustado()
        t = self.tensores(datos)
        with torch.no_grad():
            feats = self.f_proxy(t[self.rol_proxy], "eval")
            for nombre in reversed(list(roles_extra)):
                if nombre in self.redes2:
                    red = self.redes2[nombre]
                    feats = kron_filas(red(self._concatenar(t, self.bloques[nombre]), "eval"), feats)
        return feats.numpy()

    def reiniciar_etapa2(self, semilla):
        """
        Nuevo puente que comparte la primera etapa (solo lectura) y reinicializa
        las redes de segunda etapa y la cabeza
        """
        if not self.construido:
            raise StateError("El puente no fue construido")
        nuevo = self.__class__(self.preset, self.objetivo, semilla, self.verbose)
        nuevo.bloques = OrderedDict(self.bloques)
        nuevo.dims = dict(self.dims)
        nuevo.estandar = dict(self.estandar)
        nuevo._restaurar_extra(self._meta_extra())
        nuevo.f1 = self.f1
        nuevo.V = self.V.clone()
        nuevo.f_proxy = nuevo._nueva_red(nuevo.rol_proxy, nuevo.dims[nuevo.rol_proxy], 1)
        nuevo._construir_etapa2()
        nuevo.construido = True
        return nuevo

    def clonar(self):
        """Copia independiente vía exportar / desde_estado"""
        return self.__class__.desde_estado(*self.exportar())

    # ==============================================
    # PERSISTENCIA
    # ==============================================

    def exportar(self):
        """(tensores, meta) para un checkpoint"""
        self._exigir_ajustado()
        tensores, redes = {}, {}
        for nombre, red in [("stage1", self.f1), (self.rol_proxy, self.f_proxy)] + list(self.redes2.items()):
            t, redes[nombre] = exportar_featurizer(red, f"red.{nombre}")
            tensores.update(t)
        tensores["V"] = self.V.numpy()
        tensores["head"] = self.head.numpy()
        for rol, (media, desvio) in self.estandar.items():
            tensores[f"estandar.{rol}.media"] = media
            tensores[f"estandar.{rol}.desvio"] = desvio
        meta = {
            "lado": self.lado, "objetivo": self.objetivo, "semilla": self.semilla,
            "preset": self.preset, "bloques": self.bloques, "dims": self.dims, "redes": redes,
            "extra": self._meta_extra(),
        }
        return tensores, meta

    def _meta_extra(self):
        return {}

    def _restaurar_extra(self, extra):
        pass

    @classmethod
    def desde_estado(cls, tensores, meta):
        modelo = cls(meta["preset"], meta["objetivo"], meta["semilla"], verbose=False)
        modelo.bloques = OrderedDict((k, list(v)) for k, v in meta["bloques"].items())
        modelo.dims = dict(meta["dims"])
        modelo.estandar = {}
        for clave in tensores:
            if clave.startswith("estandar.") and clave.endswith(".media"):
                rol = clave.split(".")[1]
                modelo.estandar[rol] = (np.asarray(tensores[clave]),
                                        np.asarray(tensores[f"estandar.{rol}.desvio"]))
        redes = meta["redes"]
        modelo.f1 = restaurar_featurizer(redes["stage1"], tensores, "red.stage1")
        modelo.f_proxy = restaurar_featurizer(redes[cls.rol_proxy], tensores, f"red.{cls.rol_proxy}")
        modelo.redes2 = OrderedDict(
            (n, restaurar_featurizer(redes[n], tensores, f"red.{n}")) for n in modelo.bloques
        )
        modelo.V = como_tensor(tensores["V"])
        modelo.head = como_tensor(tensores["head"]).reshape(-1)
        modelo._restaurar_extra(meta.get("extra", {}))
        modelo.construido = modelo.ajustado = True
        return modelo

    def mostrar_resumen(self):
        print("\n" + "=" * 60)
        print(f"RESUMEN DEL PUENTE ({self.lado.upper()}, {self.objetivo})")
        print("=" * 60)
        if not self.construido:
            print("⚠ Modelo sin construir")
            print("=" * 60 + "\n")
            return
        print("Bloques: " + " ⊗ ".join(f"{n}[{self.redes2[n].salida}]" for n in self.bloques)
              + f" ⊗ {self.rol_proxy}[{self.f_proxy.salida}]")
        print(f"Dimensión de la cabeza: {self.dim_cabeza}")
        print(f"Pérdida: {self.perdida.tipo}")
        if self.historial:
            print(f"Pérdida etapa 2 final: {self.historial[-1]['perdida_etapa2']:.5f}")
        print(f"Residuo máximo ecuación normal etapa 1: {self.residuo_max_etapa1:.2e}")
        if self.warnings:
            print(f"\n⚠ WARNINGS ({len(self.warnings)}):")
            for w in self.warnings:
                print(f"  - {w}")
        print("=" * 60 + "\n")
