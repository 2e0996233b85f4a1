"""Flat ``key=value`` experiment configuration."""

from ..errors import ConfigError

_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _bool(text):
    try:
        return _BOOL[text.lower()]
    except KeyError:
        raise ValueError(f"not a boolean: {text!r}") from None


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


# key -> parser; order here is the serialization order
SCHEMA = {
    "family": _choice("sparse", "rpca", "lsparcom"),
    "model": _choice("lista", "liht", "lsparcom", "uadmm"),
    "depth": int,
    "tied": _bool,
    "n": int,
    "m": int,
    "k": int,
    "t_train": int,
    "t_test": int,
    "noise_sigma": float,
    "lambda_sup": float,
    "seed": int,
    "epochs": int,
    "batch": int,
    "lr": float,
    "optimizer": _choice("adam", "sgd"),
    "momentum": float,
    "loss": _choice("mse", "masked"),
    "loss_lambda": float,
    "out_dir": str,
    "rows": int,
    "cols": int,
    "rank": int,
    "density": float,
    "amplitude": float,
    "lambda1": float,
    "lambda2": float,
    "grid_n": int,
    "grid_m": int,
    "emitters": int,
    "max_iters": int,
    "mu_scale": float,
    "rho": float,
    "eta": float,
    "modl_lambda": float,
    "denoiser": _choice("identity", "soft", "median3"),
    "cg_tol": float,
}

DEFAULTS = {
    "family": "sparse", "model": "lista", "depth": 10, "tied": False, "k": 3,
    "t_test": 0, "noise_sigma": 0.0, "lambda_sup": 0.1, "seed": 1, "epochs": 10,
    "batch": 32, "lr": 1e-3, "optimizer": "adam", "momentum": 0.9, "loss": "mse",
    "loss_lambda": 0.01, "out_dir": ".", "max_iters": 500, "mu_scale": 1.01,
    "rho": 1.0, "eta": 1.0, "modl_lambda": 0.5, "denoiser": "soft", "cg_tol": 1e-10,
}


class Config:
    """Typed view over the keys present in a config file, with defaults."""

    def __init__(self, values):
        self.values = dict(values)

    def __getitem__(self, key):
        if key in self.values:
            return self.values[key]
        if key in DEFAULTS:
            return DEFAULTS[key]
        raise ConfigError(f"missing required key {key!r}")

    def __contains__(self, key):
        return key in self.values

    def __eq__(self, other):
        return isinstance(other, Config) and self.values == other.values

    def __repr__(self):
        return f"Config({self.values!r})"

    def require(self, *keys):
        missing = [k for k in keys if k not in self.values and k not in DEFAULTS]
        if missing:
            raise ConfigError(f"missing required key(s): {', '.join(missing)}")


def parse_config(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {raw.strip()!r}", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", line=lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", line=lineno)
        try:
            values[key] = SCHEMA[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", line=lineno) from None
    return Config(values)


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(config):
    return "".join(f"{k}={_format(config.values[k])}\n" for k in SCHEMA if k in config.values)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
