"""
Checkpoints: manifiesto JSON + blob binario little-endian float64

Cada checkpoint son dos archivos, `<nombre>.json` y `<nombre>.bin`. El blob
concatena los tensores en el orden declarado en el manifiesto. El hash SHA-256
cubre el blob y el manifiesto canónico (sin el propio hash).
"""

import hashlib
import json
from pathlib import Path

import numpy as np
import torch

from .errors import DataError

FORMATO = "drpcl-checkpoint/1"


def _serializable(valor):
    if isinstance(valor, np.generic):
        return valor.item()
    if isinstance(valor, np.ndarray):
        return valor.tolist()
    if isinstance(valor, tuple):
        return list(valor)
    raise TypeError(f"No serializable: {type(valor).__name__}")


def _canonico(datos):
    return json.dumps(datos, sort_keys=True, default=_serializable, separators=(",", ":"), ensure_ascii=False)


def _a_numpy(valor):
    if isinstance(valor, torch.Tensor):
        valor = valor.detach().cpu().numpy()
    return np.ascontiguousarray(np.asarray(valor, dtype="<f8"))


def _rutas(ruta):
    ruta = Path(ruta)
    base = ruta.with_suffix("") if ruta.suffix in (".json", ".bin") else ruta
    return base.parent / f"{base.name}.json", base.parent / f"{base.name}.bin"


def hash_contenido(blob, manifiesto):
    sin_hash = {k: v for k, v in manifiesto.items() if k != "hash"}
    h = hashlib.sha256()
    h.update(blob)
    h.update(_canonico(sin_hash).encode("utf-8"))
    return h.hexdigest()


def guardar_checkpoint(ruta, componente, tensores, meta=None, config=None, referencias=None):
    """
    Escribe un checkpoint

    Args:
        ruta: ruta base (sin extensión)
        componente: 'outcome', 'treatment', 'correccion', 'kpv', 'kap', ...
        tensores: dict nombre -> array (se guardan en float64)
        meta: metadatos JSON del componente
        config: configuración efectiva de la corrida
        referencias: hashes de otros checkpoints de los que depende

    Returns:
        str: hash SHA-256 del contenido
    """
    ruta_json, ruta_bin = _rutas(ruta)
    ruta_json.parent.mkdir(parents=True, exist_ok=True)

    declarados, partes, offset = [], [], 0
    for nombre, valor in tensores.items():
        arr = _a_numpy(valor)
        declarados.append({"nombre": nombre, "forma": list(arr.shape), "offset": offset})
        partes.append(arr.tobytes(order="C"))
        offset += arr.size
    blob = b"".join(partes)

    manifiesto = {
        "formato": FORMATO,
        "componente": componente,
        "tensores": declarados,
        "meta": json.loads(_canonico(meta or {})),
        "config": json.loads(_canonico(config or {})),
        "referencias": dict(referencias or {}),
    }
    manifiesto["hash"] = hash_contenido(blob, manifiesto)

    ruta_bin.write_bytes(blob)
    with open(ruta_json, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(manifiesto, sort_keys=True, indent=2, ensure_ascii=False) + "\n")
    return manifiesto["hash"]


def leer_manifiesto(ruta):
    ruta_json, _ = _rutas(ruta)
    if not ruta_json.exists():
        raise DataError(f"Checkpoint no encontrado: {ruta_json}")
    with open(ruta_json, encoding="utf-8") as f:
        return json.load(f)


def cargar_checkpoint(ruta, verificar=True):
    """
    Lee un checkpoint

    Returns:
        (tensores dict nombre -> ndarray, manifiesto)

    Raises:
        DataError: archivo faltante, blob truncado o hash que no coincide
    """
    manifiesto = leer_manifiesto(ruta)
    _, ruta_bin = _rutas(ruta)
    if not ruta_bin.exists():
        raise DataError(f"Falta el blob del checkpoint: {ruta_bin}")
    blob = ruta_bin.read_bytes()
    if verificar and hash_contenido(blob, manifiesto) != manifiesto.get("hash"):
        raise DataError(f"Hash inválido en el checkpoint {ruta_bin.name}")

    plano = np.frombuffer(blob, dtype="<f8")
    tensores = {}
    for t in manifiesto["tensores"]:
        tamano = int(np.prod(t["forma"], dtype=np.int64))
        if t["offset"] + tamano > plano.size:
            raise DataError(f"Blob truncado en el tensor {t['nombre']}")
        tensores[t["nombre"]] = plano[t["offset"]:t["offset"] + tamano].reshape(t["forma"]).astype(np.float64)
    return tensores, manifiesto
