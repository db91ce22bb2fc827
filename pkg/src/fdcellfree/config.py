"""System configuration: dataclasses, defaults, validation and INI round-trip."""
from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


def db_to_lin(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def dbm_to_watt(p_dbm: float) -> float:
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


@dataclass
class GeometryConfig:
    D: float = 1.0  # km
    M: int = 8
    K_d: int = 4
    K_u: int = 4

    def validate(self):
        if not self.D > 0:
            raise ConfigError("geometry.D must be positive")
        if self.M < 1:
            raise ConfigError("geometry.M must be >= 1")
        if self.K_d < 0 or self.K_u < 0:
            raise ConfigError("geometry.K_d and geometry.K_u must be >= 0")
        if self.K_d + self.K_u < 1:
            raise ConfigError("geometry needs at least one UE (K_d + K_u >= 1)")


@dataclass
class PathLossParams:
    d0: float = 10.0  # m
    d1: float = 50.0  # m
    L: float | None = None  # dB; None -> derived from the COST231 constants below
    h_ap: float = 15.0  # m
    h_ue: float = 1.65  # m
    freq_mhz: float = 1900.0
    sigma_sd: float = 2.0  # dB
    delta: float = 0.5
    d_decorr: float = 100.0  # m

    def validate(self):
        if not (0 < self.d0 < self.d1):
            raise ConfigError("pathloss: need 0 < d0 < d1")
        if self.sigma_sd < 0:
            raise ConfigError("pathloss.sigma_sd must be >= 0")
        if not (0.0 <= self.delta <= 1.0):
            raise ConfigError("pathloss.delta must lie in [0, 1]")
        if self.d_decorr <= 0:
            raise ConfigError("pathloss.d_decorr must be positive")

    def attenuation_db(self) -> float:
        """Fixed attenuation constant; COST231-Hata form unless overridden."""
        if self.L is not None:
            return float(self.L)
        lf = math.log10(self.freq_mhz)
        return (46.3 + 33.9 * lf - 13.82 * math.log10(self.h_ap)
                - (1.1 * lf - 0.7) * self.h_ue + (1.56 * lf - 0.8))


@dataclass
class PowerModelParams:
    P_0: float = 0.825  # W per AP
    P_tc: float = 0.2  # W per AP antenna
    P_ft: float = 10.0  # W traffic-dependent fronthaul power
    P_tc_dl: float = 0.2  # W per DL UE
    P_tc_ul: float = 0.2  # W per UL UE
    alpha_ap: float = 0.4
    alpha_ue: float = 0.4
    bandwidth: float = 20e6  # Hz
    weights_dl: tuple | None = None  # None -> uniform 1/K
    weights_ul: tuple | None = None

    def validate(self):
        for name in ("P_0", "P_tc", "P_ft", "P_tc_dl", "P_tc_ul"):
            if getattr(self, name) < 0:
                raise ConfigError(f"power.{name} must be >= 0")
        for name in ("alpha_ap", "alpha_ue"):
            a = getattr(self, name)
            if not (0 < a <= 1):
                raise ConfigError(f"power.{name} must lie in (0, 1]")
        if self.bandwidth <= 0:
            raise ConfigError("power.bandwidth must be positive")
        for name in ("weights_dl", "weights_ul"):
            w = getattr(self, name)
            if w is not None and any(x < 0 for x in w):
                raise ConfigError(f"power.{name} entries must be >= 0")


@dataclass
class SystemConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    pathloss: PathLossParams = field(default_factory=PathLossParams)
    power: PowerModelParams = field(default_factory=PowerModelParams)
    tau_c: int = 200
    tau_t_dl: int = 10
    tau_t_ul: int = 10
    T_c: float = 1e-3  # s
    p_d: float = 1.0  # W per AP
    p_u: float = 1.0  # W per UE
    p_t: float = 0.2  # W pilot
    N0_dbw: float = -121.4
    N_t: int = 2
    N_r: int = 2
    nu: int = 2
    C_fh: float = 100e6  # bits/s
    perfect_fronthaul: bool = False
    gamma_ri_db: float = -20.0
    pl_ri_db: float = -81.1846
    qos_dl: float = 0.1  # bits/s/Hz
    qos_ul: float = 0.1
    eps_sca: float = 1e-3
    sca_max_iter: int = 100
    eps_margin: float = 1e-4
    mc_trials: int = 2000
    drops: int = 10
    seed: int = 0
    unity_fading: bool = False

    # derived quantities
    @property
    def N0(self) -> float:
        return db_to_lin(self.N0_dbw)

    @property
    def rho_d(self) -> float:
        return self.p_d / self.N0

    @property
    def rho_u(self) -> float:
        return self.p_u / self.N0

    @property
    def rho_t(self) -> float:
        return self.p_t / self.N0

    @property
    def tau_t(self) -> int:
        # DL and UL pilots are sent in separate sub-phases
        return self.tau_t_dl + self.tau_t_ul

    @property
    def tau_f(self) -> float:
        return (self.tau_c - self.tau_t) / self.tau_c

    @property
    def gamma_ri(self) -> float:
        return db_to_lin(self.gamma_ri_db)

    @property
    def K(self) -> int:
        return self.geometry.K_d + self.geometry.K_u

    def weights(self):
        """Per-UE WSEE weights (w_dl, w_ul); uniform 1/K unless configured."""
        import numpy as np
        K_d, K_u = self.geometry.K_d, self.geometry.K_u
        w_dl = self.power.weights_dl
        w_ul = self.power.weights_ul
        w_dl = np.full(K_d, 1.0 / self.K) if w_dl is None else np.asarray(w_dl, float)
        w_ul = np.full(K_u, 1.0 / self.K) if w_ul is None else np.asarray(w_ul, float)
        if w_dl.shape != (K_d,) or w_ul.shape != (K_u,):
            raise ConfigError("weight vectors must have K_d and K_u entries")
        return w_dl, w_ul

    def validate(self) -> "SystemConfig":
        self.geometry.validate()
        self.pathloss.validate()
        self.power.validate()
        g = self.geometry
        if self.tau_t_dl < 1 or self.tau_t_ul < 1:
            raise ConfigError("tau_t_dl and tau_t_ul must be >= 1")
        if self.tau_t_dl < g.K_d:
            raise ConfigError(f"tau_t_dl={self.tau_t_dl} is smaller than K_d={g.K_d}")
        if self.tau_t_ul < g.K_u:
            raise ConfigError(f"tau_t_ul={self.tau_t_ul} is smaller than K_u={g.K_u}")
        if self.tau_c <= self.tau_t:
            raise ConfigError("tau_c must exceed tau_t_dl + tau_t_ul")
        if self.T_c <= 0:
            raise ConfigError("T_c must be positive")
        if self.p_d < 0 or self.p_u < 0:
            raise ConfigError("p_d and p_u must be >= 0")
        if self.p_t <= 0:
            raise ConfigError("p_t must be positive")
        if self.N_t < 1 or self.N_r < 1:
            raise ConfigError("N_t and N_r must be >= 1")
        if not (1 <= self.nu <= 8):
            raise ConfigError("nu must lie in 1..8")
        if self.C_fh <= 0:
            raise ConfigError("C_fh must be positive")
        if self.qos_dl < 0 or self.qos_ul < 0:
            raise ConfigError("QoS targets must be >= 0")
        if self.eps_sca <= 0 or self.sca_max_iter < 1:
            raise ConfigError("eps_sca must be positive and sca_max_iter >= 1")
        if not (0 < self.eps_margin < 1):
            raise ConfigError("eps_margin must lie in (0, 1)")
        if self.mc_trials < 1 or self.drops < 1:
            raise ConfigError("mc_trials and drops must be >= 1")
        self.weights()
        return self

    def replace(self, **changes) -> "SystemConfig":
        """Copy with top-level or dotted (``geometry.M``) overrides."""
        cfg = dataclasses.replace(
            self,
            geometry=dataclasses.replace(self.geometry),
            pathloss=dataclasses.replace(self.pathloss),
            power=dataclasses.replace(self.power),
        )
        for key, val in changes.items():
            if "." in key:
                sec, name = key.split(".", 1)
                setattr(getattr(cfg, sec), name, val)
            else:
                setattr(cfg, key, val)
        return cfg


_NESTED = {"geometry": GeometryConfig, "pathloss": PathLossParams, "power": PowerModelParams}


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ",".join(repr(float(x)) for x in v)
    return str(v)


def _parse(raw: str, default, name: str):
    s = raw.strip()
    if s.lower() == "none":
        return None
    kind = type(default)
    try:
        if isinstance(default, bool):
            if s.lower() in ("true", "yes", "1", "on"):
                return True
            if s.lower() in ("false", "no", "0", "off"):
                return False
            raise ValueError(s)
        if isinstance(default, int):
            return int(s)
        if isinstance(default, float):
            return float(s)
        if default is None or isinstance(default, tuple):
            # optional float (L) or optional weight vector
            if "," in s or name.startswith("weights"):
                return tuple(float(x) for x in s.split(",") if x.strip())
            return float(s)
        return kind(s)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {name}={raw!r}") from exc


def config_to_ini(cfg: SystemConfig) -> str:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    for sec in _NESTED:
        cp[sec] = {f.name: _fmt(getattr(getattr(cfg, sec), f.name)) for f in fields(_NESTED[sec])}
    cp["system"] = {f.name: _fmt(getattr(cfg, f.name)) for f in fields(SystemConfig) if f.name not in _NESTED}
    import io
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def config_from_ini(text: str) -> SystemConfig:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_string(text)
    cfg = SystemConfig()
    known = set(_NESTED) | {"system"}
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"unknown config section [{sec}]")
    for sec, cls in _NESTED.items():
        if sec not in cp:
            continue
        obj = getattr(cfg, sec)
        names = {f.name for f in fields(cls)}
        for key, raw in cp[sec].items():
            if key not in names:
                raise ConfigError(f"unknown key {sec}.{key}")
            setattr(obj, key, _parse(raw, getattr(obj, key), key))
    if "system" in cp:
        names = {f.name for f in fields(SystemConfig)} - set(_NESTED)
        for key, raw in cp["system"].items():
            if key not in names:
                raise ConfigError(f"unknown key system.{key}")
            setattr(cfg, key, _parse(raw, getattr(cfg, key), key))
    return cfg.validate()


def load_config(path) -> SystemConfig:
    text = Path(path).read_text()
    return config_from_ini(text)


def save_config(cfg: SystemConfig, path):
    Path(path).write_text(config_to_ini(cfg))
