"""Flat key/value configuration files.

Recognized keys: epsilon, R, T1, A, N, K_tr, seed, psi.  psi takes one of
gaussian | rational | table:<path>.  Unknown keys and out-of-range values
raise ConfigError with the offending key named.
"""

from __future__ import annotations

from .lattice import ConfigError, PSI_PROFILES, SimConfig, psi_from_table

_KEYS = {"epsilon", "R", "T1", "A", "N", "K_tr", "seed", "psi"}


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, val = line.split("=", 1)
        else:
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ConfigError("line %d: expected 'key = value'" % lineno)
            key, val = parts
        key = key.strip()
        val = val.strip()
        if key not in _KEYS:
            raise ConfigError("unknown key '%s'" % key)
        out[key] = val
    return out


def config_from_dict(kv: dict) -> SimConfig:
    kwargs = {}
    try:
        if "epsilon" in kv:
            kwargs["epsilon"] = float(kv["epsilon"])
        if "R" in kv:
            kwargs["R"] = int(kv["R"])
        if "T1" in kv:
            kwargs["T1"] = float(kv["T1"])
        if "A" in kv:
            kwargs["A"] = int(kv["A"])
        if "N" in kv:
            kwargs["N"] = int(kv["N"])
        if "K_tr" in kv:
            kwargs["K_tr"] = int(kv["K_tr"])
        if "seed" in kv:
            kwargs["seed"] = int(kv["seed"])
    except ValueError as exc:
        raise ConfigError("bad value: %s" % exc)
    if "psi" in kv:
        name = kv["psi"]
        if name.startswith("table:"):
            kwargs["psi"] = psi_from_table(name.split(":", 1)[1])
            kwargs["psi_name"] = name
        elif name in PSI_PROFILES:
            kwargs["psi"] = PSI_PROFILES[name]
            kwargs["psi_name"] = name
        else:
            raise ConfigError("unknown psi profile '%s'" % name)
    return SimConfig(**kwargs)


def load_config(path: str | None) -> SimConfig:
    """SimConfig from a file; defaults when path is None."""
    if path is None:
        return SimConfig()
    with open(path) as fh:
        return config_from_dict(parse_config_text(fh.read()))
