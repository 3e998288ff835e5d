"""
Punto de entrada de línea de comandos

    python main.py gen   --benchmark lowdim-ate --n 2000 --seeds 0..9
    python main.py fit   --benchmark noisy-proxy-1 --estimator KPV,KAP --n 5000
    python main.py eval  --benchmark noisy-proxy-1 --estimator KPV,KAP --n 5000
    python main.py bench --config run.toml --out outputs/corrida
    python main.py plot  --out outputs/corrida
"""

import argparse
import sys

from src.bench import cmd_bench, cmd_eval, cmd_fit, cmd_gen, cmd_plot, construir_run
from src.errors import ProxyCausalError


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description="Benchmarks de aprendizaje causal con proxies")
    parser.add_argument("comando", choices=["gen", "fit", "eval", "bench", "plot"])
    parser.add_argument("--config", help="archivo TOML de corrida ([run] + tablas de preset)")
    parser.add_argument("--out", help="carpeta de salida")
    parser.add_argument("--seeds", help="semillas: a..b, lista separada por comas o un entero")
    parser.add_argument("--estimator", help="estimador o lista separada por comas")
    parser.add_argument("--benchmark", help="lowdim-ate, att, highdim-ate, cate, cate-broken-*, noisy-proxy-k")
    parser.add_argument("--n", help="tamaño de muestra o lista separada por comas")
    parser.add_argument("--target", choices=["ATE", "CATE", "ATT"], type=str.upper)
    parser.add_argument("--anchor", action="append", type=float, help="ancla a′ para ATT (repetible)")
    parser.add_argument("--loss", help="pérdida de segunda etapa o lista para barrer")
    parser.add_argument("--ratio", choices=["kde", "kliep"])
    parser.add_argument("--preset", help="nombre de preset o ruta a un .toml")
    parser.add_argument("--perturb", choices=["outcome", "treatment"])
    parser.add_argument("--sigma", type=float)
    parser.add_argument("--workers", type=int, help="workers del barrido (default DRPCL_WORKERS)")
    parser.add_argument("--verbose", action="store_true", default=None)
    return parser.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    try:
        if args.comando == "plot":
            if not args.out:
                raise ProxyCausalError("plot requiere --out")
            rutas = cmd_plot(args.out)
            print(f"✓ {len(rutas)} figura(s) generada(s)")
            return 0

        run = construir_run(
            args.config,
            benchmark=args.benchmark, estimadores=args.estimator, objetivo=args.target, N=args.n,
            semillas=args.seeds, perdidas=args.loss, preset=args.preset, ratio=args.ratio,
            anclas=args.anchor, perturbar=args.perturb, sigma=args.sigma, salida=args.out,
            verbose=args.verbose,
        )
        if args.comando == "gen":
            cmd_gen(run)
        elif args.comando == "fit":
            cmd_fit(run)
        elif args.comando == "eval":
            resultado = cmd_eval(run)
            print(resultado.resumen.to_string(index=False))
        else:
            return cmd_bench(run, args.workers).codigo_salida
    except ProxyCausalError as e:
        print(f"✗ {type(e).__name__}: {e}")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
