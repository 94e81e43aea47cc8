import copy

import pytest

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from importlib import resources

from femtoq.scenario import parse_config


def shipped_dict(name: str) -> dict:
    text = resources.files("femtoq.configs").joinpath(f"{name}.toml").read_text()
    return tomllib.loads(text)


def explicit_channel(n_fbs, mm=5.0, fm=0.005, mf=0.005, uf=0.005, ff=0.005, s=0.05, k=2, noise=1.0):
    """Symmetric explicit channel section; scalar gains are repeated on every subchannel."""
    g = lambda v: list(v) if isinstance(v, (list, tuple)) else [v] * k
    links = [{"tx": "mbs", "rx": "mu", "gains": g(mm)}]
    for n in range(1, n_fbs + 1):
        links += [{"tx": f"fbs{n}", "rx": "mu", "gains": g(fm)},
                  {"tx": "mbs", "rx": f"fbs{n}", "gains": g(mf)},
                  {"tx": "mu", "rx": f"fbs{n}", "gains": g(uf)}]
        links += [{"tx": f"fbs{j}", "rx": f"fbs{n}", "gains": g(ff)}
                  for j in range(1, n_fbs + 1) if j != n]
    serving = [{"fbs": n, "gains": g(s)} for n in range(1, n_fbs + 1)]
    return {"subchannels": k, "noise_power": noise, "links": links, "serving": serving}


def make_config(n_fbs=2, joins=None, channel=None, **sections):
    """Config dict with defaults; ``sections`` maps section name -> overrides."""
    data = {"channel": channel or explicit_channel(n_fbs),
            "fbs": [{"index": n, "join_frame": (joins or {}).get(n, 0)} for n in range(1, n_fbs + 1)]}
    for name, values in sections.items():
        data[name] = dict(values)
    return parse_config(data)


@pytest.fixture
def two_fbs_dict():
    return copy.deepcopy(shipped_dict("two_fbs"))
