"""Experiment configuration: INI files with unit-suffixed keys.

Every key carries its unit in the name (t_final_ms, d_lattice_um, ...).
Unknown sections or keys are rejected, and each run can echo the resolved
configuration (defaults filled in) for provenance.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math

from .constants import M_RB87
from .lattice1d import Grid1D, TrapParameters


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending section/key."""


def _boolean(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _float_list(raw: str):
    items = [s.strip() for s in raw.split(",") if s.strip()]
    return tuple(float(s) for s in items)


def _str_list(raw: str):
    return tuple(s.strip() for s in raw.split(",") if s.strip())


# schema: section -> key -> (parser, default); default None means required
# when the section is used by a command
SCHEMA = {
    "trap": {
        "mass_kg": (float, M_RB87),
        "d_lattice_um": (float, 5.18),
        "dx_offset_nm": (float, 200.0),
    },
    "grid": {
        "x_min_um": (float, -15.0),
        "x_max_um": (float, 15.0),
        "n_points": (int, 2048),
    },
    "protocol": {
        "kind": (str, "invariant"),
        "omega0_2pi_hz": (float, 78.0),
        "lambda_f_per_s": (float, 190.0),
        "lambda_dot0_per_s2": (float, 190.0),
        "t_final_ms": (float, 55.0),
        "n_samples": (int, 4001),
    },
    "mapping": {
        "n_slices": (int, 551),
        "residual_max": (float, 1e-6),
        "v0_max_hbar_omega0": (float, 40.0),
        "delta_floor_fraction": (float, 1e-3),
    },
    "tdse": {
        "dt_us": (float, 1.0),
        "g1n_j_m": (float, 0.0),
        "stop_early_ms": (float, 2.0),
        "population_records": (int, 111),
        "compare_linear": (_boolean, True),
    },
    "ffsplit": {
        "design": (str, "two_bump"),
        "omega_rad_s": (float, 780.0),
        "x_f_um": (float, 4.0),
        "t_final_ms": (float, 320.0),
        "g1n_hat": (float, 0.0),
        "lambda_hbar_omega": (float, 0.02),
        "n_time_slices": (int, 2001),
        "n_basis_slices": (int, 200),
        "dt_us": (float, 2.0),
    },
    "scan": {
        "kind": (str, "tf"),
        "tf_list_ms": (_float_list, ()),
        "lambda_list_hbar_omega": (_float_list, ()),
        "g1n_hat_list": (_float_list, ()),
        "start_states": (_str_list, ("ground", "excited")),
    },
}

_CHOICES = {
    ("protocol", "kind"): ("invariant", "faquad", "linear_reference"),
    ("ffsplit", "design"): ("two_bump", "interpolated_gpe"),
    ("scan", "kind"): ("tf", "lambda", "g1n"),
}


class ExperimentConfig:
    """Parsed and validated configuration with defaults resolved."""

    def __init__(self, values: dict):
        self.values = values

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        with open(path) as fh:
            try:
                parser.read_file(fh)
            except configparser.Error as exc:
                raise ConfigError(f"cannot parse config: {exc}") from exc
        values = {}
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            values[section] = {}
            for key, raw in parser[section].items():
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown key '{key}' in section [{section}]")
                parse, _ = SCHEMA[section][key]
                try:
                    values[section][key] = parse(raw)
                except ValueError as exc:
                    raise ConfigError(
                        f"bad value for '{key}' in [{section}]: {exc}"
                    ) from exc
        for section, keys in SCHEMA.items():
            sec = values.setdefault(section, {})
            for key, (_, default) in keys.items():
                sec.setdefault(key, default)
        cfg = cls(values)
        cfg._check_choices()
        return cfg

    def _check_choices(self):
        for (section, key), allowed in _CHOICES.items():
            val = self.values[section][key]
            if val not in allowed:
                raise ConfigError(
                    f"'{key}' in [{section}] must be one of {allowed}, got {val!r}"
                )

    # -- derived physical objects ----------------------------------------
    def grid(self) -> Grid1D:
        g = self.values["grid"]
        return Grid1D(g["x_min_um"] * 1e-6, g["x_max_um"] * 1e-6, g["n_points"])

    def trap(self, v0: float = 0.0, omega: float | None = None) -> TrapParameters:
        t = self.values["trap"]
        if omega is None:
            omega = self.omega0()
        return TrapParameters(
            v0=v0,
            omega=omega,
            dx_offset=t["dx_offset_nm"] * 1e-9,
            d_lattice=t["d_lattice_um"] * 1e-6,
            mass=t["mass_kg"],
        )

    def omega0(self) -> float:
        return 2.0 * math.pi * self.values["protocol"]["omega0_2pi_hz"]

    def resolved_text(self, sections=None) -> str:
        out = io.StringIO()
        for section in sections or SCHEMA:
            out.write(f"[{section}]\n")
            for key in SCHEMA[section]:
                val = self.values[section][key]
                if isinstance(val, tuple):
                    val = ", ".join(str(v) for v in val)
                out.write(f"{key} = {val}\n")
            out.write("\n")
        return out.getvalue()

    def trap_hash(self) -> str:
        """Fingerprint of the trap and grid sections for pipeline integrity."""
        text = self.resolved_text(sections=("trap", "grid"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]
