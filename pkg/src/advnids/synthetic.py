"""Synthetic stand-ins for the NSL-KDD and UNSW-NB15 CSV files.

The generators reproduce each dataset's column layout, value types (integer
counts, two-decimal rates, heavy-tailed byte volumes, symbolic protocol /
service / flag descriptors) and label vocabulary, so the loaders, schemas and
the full pipeline can run where the real files are not available. Class
structure is family-based: every attack family shifts a handful of flow
statistics away from normal traffic, and the test split carries a larger
share of stealthy families that mostly resemble normal flows.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .dataio import load_schema
from .numerics import RngStream

# distribution specs: ("const", v) ("lognormal", mu, sigma, p_zero)
# ("poisson", lam) ("rate", a, b) ("bernoulli", p) ("int", lo, hi)


def _draw(spec, n: int, rng: np.random.Generator) -> np.ndarray:
    kind = spec[0]
    if kind == "const":
        return np.full(n, float(spec[1]))
    if kind == "lognormal":
        _, mu, sigma, p_zero = spec
        v = np.round(rng.lognormal(mu, sigma, n))
        v[rng.random(n) < p_zero] = 0.0
        return v
    if kind == "poisson":
        return rng.poisson(spec[1], n).astype(np.float64)
    if kind == "rate":
        return np.round(rng.beta(spec[1], spec[2], n), 2)
    if kind == "bernoulli":
        return (rng.random(n) < spec[1]).astype(np.float64)
    if kind == "int":
        return rng.integers(spec[1], spec[2] + 1, n).astype(np.float64)
    if kind == "float":
        _, mu, sigma = spec
        return np.round(np.abs(rng.normal(mu, sigma, n)), 6)
    raise ValueError(f"unknown distribution {kind!r}")


def _cat(choices: dict[str, float], n: int, rng: np.random.Generator) -> np.ndarray:
    keys = list(choices)
    p = np.array([choices[k] for k in keys], dtype=np.float64)
    return np.array(keys, dtype=object)[rng.choice(len(keys), size=n, p=p / p.sum())]


# ---------------------------------------------------------------- NSL-KDD

_NSL_NORMAL = {
    "protocol_type": {"tcp": 0.82, "udp": 0.14, "icmp": 0.04},
    "service": {"http": 0.45, "smtp": 0.12, "domain_u": 0.12, "ftp_data": 0.12,
                "private": 0.05, "other": 0.06, "ftp": 0.04, "telnet": 0.04},
    "flag": {"SF": 0.9, "REJ": 0.04, "S0": 0.02, "RSTO": 0.02, "S1": 0.02},
    "duration": ("lognormal", 2.0, 2.0, 0.85),
    "src_bytes": ("lognormal", 5.6, 1.2, 0.02),
    "dst_bytes": ("lognormal", 7.5, 1.6, 0.15),
    "land": ("const", 0),
    "wrong_fragment": ("const", 0),
    "urgent": ("const", 0),
    "hot": ("poisson", 0.2),
    "num_failed_logins": ("const", 0),
    "logged_in": ("bernoulli", 0.72),
    "num_compromised": ("poisson", 0.02),
    "root_shell": ("bernoulli", 0.002),
    "su_attempted": ("const", 0),
    "num_root": ("poisson", 0.02),
    "num_file_creations": ("poisson", 0.02),
    "num_shells": ("const", 0),
    "num_access_files": ("poisson", 0.01),
    "num_outbound_cmds": ("const", 0),
    "is_host_login": ("const", 0),
    "is_guest_login": ("bernoulli", 0.01),
    "count": ("poisson", 8),
    "srv_count": ("poisson", 11),
    "serror_rate": ("rate", 0.3, 12),
    "srv_serror_rate": ("rate", 0.3, 12),
    "rerror_rate": ("rate", 0.3, 10),
    "srv_rerror_rate": ("rate", 0.3, 10),
    "same_srv_rate": ("rate", 12, 0.6),
    "diff_srv_rate": ("rate", 0.5, 10),
    "srv_diff_host_rate": ("rate", 0.8, 5),
    "dst_host_count": ("int", 1, 255),
    "dst_host_srv_count": ("int", 60, 255),
    "dst_host_same_srv_rate": ("rate", 8, 1.2),
    "dst_host_diff_srv_rate": ("rate", 0.5, 12),
    "dst_host_same_src_port_rate": ("rate", 0.8, 6),
    "dst_host_srv_diff_host_rate": ("rate", 0.6, 12),
    "dst_host_serror_rate": ("rate", 0.3, 15),
    "dst_host_srv_serror_rate": ("rate", 0.3, 15),
    "dst_host_rerror_rate": ("rate", 0.4, 10),
    "dst_host_srv_rerror_rate": ("rate", 0.4, 10),
}

_NSL_FAMILIES = {
    "dos": {
        "labels": {"neptune": 0.7, "smurf": 0.15, "back": 0.08, "teardrop": 0.05, "pod": 0.02},
        "protocol_type": {"tcp": 0.75, "icmp": 0.2, "udp": 0.05},
        "service": {"private": 0.45, "http": 0.15, "ecr_i": 0.15, "other": 0.1, "telnet": 0.05,
                    "smtp": 0.05, "ftp_data": 0.05},
        "flag": {"S0": 0.6, "SF": 0.25, "REJ": 0.12, "RSTO": 0.03},
        "duration": ("const", 0),
        "src_bytes": ("lognormal", 4.0, 2.0, 0.55),
        "dst_bytes": ("lognormal", 3.0, 1.0, 0.9),
        "logged_in": ("bernoulli", 0.08),
        "count": ("poisson", 160),
        "srv_count": ("poisson", 16),
        "serror_rate": ("rate", 6, 2),
        "srv_serror_rate": ("rate", 6, 2),
        "same_srv_rate": ("rate", 1, 10),
        "diff_srv_rate": ("rate", 1, 12),
        "dst_host_count": ("int", 200, 255),
        "dst_host_srv_count": ("int", 1, 40),
        "dst_host_same_srv_rate": ("rate", 1, 10),
        "dst_host_serror_rate": ("rate", 6, 2),
        "dst_host_srv_serror_rate": ("rate", 6, 2),
    },
    "probe": {
        "labels": {"satan": 0.35, "ipsweep": 0.25, "portsweep": 0.25, "nmap": 0.15},
        "protocol_type": {"tcp": 0.6, "icmp": 0.3, "udp": 0.1},
        "service": {"private": 0.35, "eco_i": 0.25, "other": 0.15, "http": 0.1, "ftp_data": 0.05,
                    "domain_u": 0.1},
        "flag": {"REJ": 0.35, "SF": 0.35, "S0": 0.15, "RSTR": 0.15},
        "duration": ("lognormal", 0.5, 1.0, 0.9),
        "src_bytes": ("lognormal", 2.5, 1.5, 0.4),
        "dst_bytes": ("lognormal", 2.0, 1.0, 0.85),
        "logged_in": ("bernoulli", 0.05),
        "count": ("poisson", 40),
        "srv_count": ("poisson", 5),
        "rerror_rate": ("rate", 3, 3),
        "srv_rerror_rate": ("rate", 3, 3),
        "same_srv_rate": ("rate", 2, 5),
        "diff_srv_rate": ("rate", 3, 4),
        "dst_host_count": ("int", 1, 255),
        "dst_host_srv_count": ("int", 1, 60),
        "dst_host_same_srv_rate": ("rate", 1.5, 5),
        "dst_host_diff_srv_rate": ("rate", 3, 4),
        "dst_host_same_src_port_rate": ("rate", 4, 2),
        "dst_host_rerror_rate": ("rate", 3, 3),
        "dst_host_srv_rerror_rate": ("rate", 3, 3),
    },
    # stealthy families: flow statistics close to normal traffic
    "r2l": {
        "labels": {"guess_passwd": 0.4, "warezmaster": 0.3, "warezclient": 0.2, "imap": 0.1},
        "protocol_type": {"tcp": 0.95, "udp": 0.05},
        "service": {"ftp": 0.3, "ftp_data": 0.25, "telnet": 0.25, "imap4": 0.1, "http": 0.1},
        "flag": {"SF": 0.85, "RSTO": 0.1, "S1": 0.05},
        "duration": ("lognormal", 3.0, 2.0, 0.6),
        "src_bytes": ("lognormal", 5.0, 1.8, 0.05),
        "dst_bytes": ("lognormal", 6.5, 2.0, 0.3),
        "hot": ("poisson", 1.5),
        "num_failed_logins": ("poisson", 0.3),
        "logged_in": ("bernoulli", 0.6),
        "is_guest_login": ("bernoulli", 0.15),
        "count": ("poisson", 3),
        "srv_count": ("poisson", 3),
        "dst_host_count": ("int", 1, 120),
        "dst_host_srv_count": ("int", 1, 120),
        "dst_host_same_src_port_rate": ("rate", 2, 4),
    },
    "u2r": {
        "labels": {"buffer_overflow": 0.6, "rootkit": 0.2, "loadmodule": 0.1, "perl": 0.1},
        "protocol_type": {"tcp": 1.0},
        "service": {"telnet": 0.7, "ftp_data": 0.2, "other": 0.1},
        "flag": {"SF": 1.0},
        "duration": ("lognormal", 4.0, 1.5, 0.3),
        "hot": ("poisson", 2.0),
        "logged_in": ("bernoulli", 0.95),
        "num_compromised": ("poisson", 1.0),
        "root_shell": ("bernoulli", 0.5),
        "num_root": ("poisson", 1.0),
        "num_file_creations": ("poisson", 0.8),
        "num_shells": ("poisson", 0.3),
        "count": ("poisson", 2),
        "srv_count": ("poisson", 2),
    },
}

# train / test family mix; the test split holds more stealthy traffic
_NSL_MIX = {
    "train": {"normal": 0.53, "dos": 0.30, "probe": 0.12, "r2l": 0.045, "u2r": 0.005},
    "test": {"normal": 0.43, "dos": 0.26, "probe": 0.12, "r2l": 0.17, "u2r": 0.02},
}


def _nsl_rows(family: str, n: int, rng: np.random.Generator, columns: list[str]) -> list[list[str]]:
    spec = dict(_NSL_NORMAL)
    labels = {"normal": 1.0}
    if family != "normal":
        spec.update(_NSL_FAMILIES[family])
        labels = _NSL_FAMILIES[family]["labels"]
    cols = {}
    for name in columns:
        s = spec[name]
        cols[name] = _cat(s, n, rng) if isinstance(s, dict) else _draw(s, n, rng)
    # keep count-derived statistics self-consistent
    cols["srv_count"] = np.minimum(cols["srv_count"], np.maximum(cols["count"], 1)) if family != "normal" \
        else cols["srv_count"]
    cols["dst_host_srv_count"] = np.minimum(cols["dst_host_srv_count"], 255)
    lab = _cat(labels, n, rng)
    diff = rng.integers(5, 22, n)
    out = []
    for i in range(n):
        row = []
        for name in columns:
            v = cols[name][i]
            row.append(v if isinstance(v, str) else _fmt(v))
        row.append(lab[i])
        row.append(str(int(diff[i])))
        out.append(row)
    return out


def _fmt(v: float) -> str:
    if float(v).is_integer():
        return str(int(v))
    return f"{v:.6g}"


def _write(path: Path, rows: list[list[str]], header: list[str] | None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(header)
        w.writerows(rows)


def _split_counts(mix: dict[str, float], n: int) -> dict[str, int]:
    keys = list(mix)
    raw = np.array([mix[k] for k in keys]) * n
    counts = np.floor(raw).astype(int)
    for j in np.argsort(-(raw - counts))[: n - counts.sum()]:
        counts[j] += 1
    return dict(zip(keys, counts.tolist()))


def generate_nsl_kdd(n: int, split: str, rng: RngStream) -> list[list[str]]:
    schema = load_schema("nsl_kdd")
    feats = schema.feature_names
    g = rng.generator
    rows: list[list[str]] = []
    for family, k in _split_counts(_NSL_MIX[split], n).items():
        if k:
            rows.extend(_nsl_rows(family, k, g, feats))
    order = g.permutation(len(rows))
    return [rows[i] for i in order]


def write_nsl_kdd(outdir, n_train: int, n_test: int, seed: int = 0) -> tuple[Path, Path]:
    """Write ``KDDTrain+.txt`` / ``KDDTest+.txt`` (headerless, 43 columns)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rng = RngStream(seed)
    train, test = outdir / "KDDTrain+.txt", outdir / "KDDTest+.txt"
    _write(train, generate_nsl_kdd(n_train, "train", rng.child(0)), None)
    _write(test, generate_nsl_kdd(n_test, "test", rng.child(1)), None)
    return train, test


# -------------------------------------------------------------- UNSW-NB15

_UNSW_NORMAL = {
    "dur": ("float", 0.6, 1.5),
    "proto": {"tcp": 0.6, "udp": 0.35, "arp": 0.03, "ospf": 0.02},
    "service": {"-": 0.45, "dns": 0.25, "http": 0.12, "ftp-data": 0.07, "smtp": 0.06, "ftp": 0.05},
    "state": {"FIN": 0.55, "CON": 0.3, "INT": 0.13, "REQ": 0.02},
    "spkts": ("lognormal", 2.5, 1.2, 0.0),
    "dpkts": ("lognormal", 2.5, 1.3, 0.05),
    "sbytes": ("lognormal", 7.0, 1.5, 0.0),
    "dbytes": ("lognormal", 8.0, 2.0, 0.05),
    "rate": ("lognormal", 4.0, 1.8, 0.02),
    "sttl": {"31": 0.8, "62": 0.15, "0": 0.05},
    "dttl": {"29": 0.8, "252": 0.15, "0": 0.05},
    "sload": ("lognormal", 11.0, 2.0, 0.0),
    "dload": ("lognormal", 11.0, 2.5, 0.1),
    "sloss": ("poisson", 1.0),
    "dloss": ("poisson", 1.5),
    "sinpkt": ("lognormal", 4.0, 2.0, 0.05),
    "dinpkt": ("lognormal", 3.5, 2.0, 0.1),
    "sjit": ("lognormal", 5.0, 3.0, 0.3),
    "djit": ("lognormal", 4.0, 3.0, 0.3),
    "swin": {"255": 0.65, "0": 0.35},
    "stcpb": ("int", 0, 4294967295),
    "dtcpb": ("int", 0, 4294967295),
    "dwin": {"255": 0.65, "0": 0.35},
    "tcprtt": ("float", 0.05, 0.05),
    "synack": ("float", 0.02, 0.03),
    "ackdat": ("float", 0.03, 0.03),
    "smean": ("int", 40, 600),
    "dmean": ("int", 0, 1200),
    "trans_depth": ("poisson", 0.2),
    "response_body_len": ("lognormal", 6.0, 2.0, 0.85),
    "ct_srv_src": ("poisson", 6),
    "ct_state_ttl": ("int", 0, 1),
    "ct_dst_ltm": ("poisson", 3),
    "ct_src_dport_ltm": ("poisson", 2),
    "ct_dst_sport_ltm": ("poisson", 1),
    "ct_dst_src_ltm": ("poisson", 5),
    "is_ftp_login": ("bernoulli", 0.03),
    "ct_ftp_cmd": ("poisson", 0.03),
    "ct_flw_http_mthd": ("poisson", 0.15),
    "ct_src_ltm": ("poisson", 4),
    "ct_srv_dst": ("poisson", 6),
    "is_sm_ips_ports": ("bernoulli", 0.01),
}

_UNSW_FAMILIES = {
    "Generic": {
        "proto": {"udp": 0.9, "tcp": 0.1},
        "service": {"dns": 0.85, "-": 0.1, "http": 0.05},
        "state": {"INT": 0.95, "FIN": 0.05},
        "dur": ("float", 0.0, 0.0001),
        "spkts": ("int", 2, 2),
        "dpkts": ("const", 0),
        "sbytes": ("lognormal", 4.7, 0.3, 0.0),
        "dbytes": ("const", 0),
        "rate": ("lognormal", 11.5, 0.8, 0.0),
        "sttl": {"254": 0.95, "62": 0.05},
        "dttl": {"0": 1.0},
        "sload": ("lognormal", 18.0, 1.0, 0.0),
        "dload": ("const", 0),
        "sinpkt": ("float", 0.005, 0.003),
        "smean": ("int", 50, 120),
        "dmean": ("const", 0),
        "ct_srv_src": ("poisson", 35),
        "ct_state_ttl": ("int", 2, 2),
        "ct_dst_ltm": ("poisson", 25),
        "ct_src_dport_ltm": ("poisson", 25),
        "ct_dst_sport_ltm": ("poisson", 20),
        "ct_dst_src_ltm": ("poisson", 35),
        "ct_src_ltm": ("poisson", 25),
        "ct_srv_dst": ("poisson", 35),
    },
    "Exploits": {
        "proto": {"tcp": 0.85, "udp": 0.15},
        "service": {"-": 0.4, "http": 0.35, "smtp": 0.1, "ftp": 0.1, "dns": 0.05},
        "state": {"FIN": 0.7, "INT": 0.25, "CON": 0.05},
        "spkts": ("lognormal", 3.0, 1.0, 0.0),
        "sbytes": ("lognormal", 7.5, 1.4, 0.0),
        "dbytes": ("lognormal", 7.0, 2.2, 0.15),
        "sttl": {"254": 0.6, "62": 0.3, "31": 0.1},
        "dttl": {"252": 0.7, "29": 0.3},
        "ct_state_ttl": ("int", 1, 2),
        "trans_depth": ("poisson", 0.6),
        "ct_flw_http_mthd": ("poisson", 0.4),
        "ct_srv_src": ("poisson", 9),
        "ct_dst_src_ltm": ("poisson", 8),
    },
    "Fuzzers": {
        "proto": {"tcp": 0.7, "udp": 0.3},
        "service": {"-": 0.7, "http": 0.15, "ftp-data": 0.1, "smtp": 0.05},
        "state": {"INT": 0.5, "FIN": 0.45, "CON": 0.05},
        "spkts": ("lognormal", 2.8, 1.5, 0.0),
        "sbytes": ("lognormal", 7.2, 2.0, 0.0),
        "dbytes": ("lognormal", 4.0, 2.5, 0.5),
        "sttl": {"254": 0.7, "62": 0.3},
        "dttl": {"252": 0.5, "0": 0.5},
        "ct_state_ttl": ("int", 1, 2),
        "sinpkt": ("lognormal", 6.0, 2.5, 0.0),
        "smean": ("int", 40, 1400),
    },
    "DoS": {
        "proto": {"tcp": 0.6, "udp": 0.4},
        "service": {"-": 0.6, "http": 0.25, "dns": 0.15},
        "state": {"INT": 0.6, "FIN": 0.4},
        "spkts": ("lognormal", 2.0, 1.5, 0.0),
        "rate": ("lognormal", 9.0, 2.0, 0.0),
        "sttl": {"254": 0.9, "62": 0.1},
        "dttl": {"252": 0.4, "0": 0.6},
        "ct_state_ttl": ("int", 1, 2),
        "ct_srv_src": ("poisson", 15),
        "ct_dst_src_ltm": ("poisson", 14),
    },
    # stealthy: near-normal flow statistics
    "Reconnaissance": {
        "proto": {"tcp": 0.6, "udp": 0.3, "ospf": 0.1},
        "service": {"-": 0.7, "http": 0.1, "dns": 0.2},
        "state": {"INT": 0.45, "FIN": 0.5, "REQ": 0.05},
        "spkts": ("lognormal", 1.5, 0.8, 0.0),
        "sbytes": ("lognormal", 5.5, 1.0, 0.0),
        "sttl": {"254": 0.5, "31": 0.3, "62": 0.2},
        "dttl": {"252": 0.4, "29": 0.4, "0": 0.2},
        "ct_state_ttl": ("int", 0, 2),
        "ct_src_dport_ltm": ("poisson", 4),
    },
    "Backdoor": {
        "proto": {"tcp": 0.8, "udp": 0.2},
        "service": {"-": 0.5, "http": 0.3, "ftp": 0.2},
        "state": {"FIN": 0.6, "INT": 0.4},
        "sttl": {"31": 0.5, "254": 0.5},
        "dttl": {"29": 0.6, "252": 0.4},
        "ct_state_ttl": ("int", 0, 2),
    },
}

_UNSW_ATTACK_CAT = {
    "Generic": "Generic", "Exploits": "Exploits", "Fuzzers": "Fuzzers", "DoS": "DoS",
    "Reconnaissance": "Reconnaissance", "Backdoor": "Backdoor",
}

_UNSW_MIX = {
    "train": {"Normal": 0.32, "Generic": 0.23, "Exploits": 0.19, "Fuzzers": 0.1, "DoS": 0.07,
              "Reconnaissance": 0.06, "Backdoor": 0.03},
    "test": {"Normal": 0.45, "Generic": 0.18, "Exploits": 0.13, "Fuzzers": 0.07, "DoS": 0.05,
             "Reconnaissance": 0.08, "Backdoor": 0.04},
}


def _unsw_rows(family: str, n: int, rng: np.random.Generator, start_id: int) -> list[list[str]]:
    schema = load_schema("unsw_nb15")
    spec = dict(_UNSW_NORMAL)
    if family != "Normal":
        spec.update(_UNSW_FAMILIES[family])
    cols = {}
    for name in schema.feature_names:
        s = spec[name]
        cols[name] = _cat(s, n, rng) if isinstance(s, dict) else _draw(s, n, rng)
    label = "0" if family == "Normal" else "1"
    cat = "Normal" if family == "Normal" else _UNSW_ATTACK_CAT[family]
    out = []
    for i in range(n):
        row = [str(start_id + i)]
        for name in schema.feature_names:
            v = cols[name][i]
            row.append(v if isinstance(v, str) else _fmt(v))
        row.extend([cat, label])
        out.append(row)
    return out


def generate_unsw_nb15(n: int, split: str, rng: RngStream) -> list[list[str]]:
    g = rng.generator
    rows: list[list[str]] = []
    for family, k in _split_counts(_UNSW_MIX[split], n).items():
        if k:
            rows.extend(_unsw_rows(family, k, g, 0))
    order = g.permutation(len(rows))
    rows = [rows[i] for i in order]
    for i, r in enumerate(rows, start=1):
        r[0] = str(i)
    return rows


def write_unsw_nb15(outdir, n_train: int, n_test: int, seed: int = 0) -> tuple[Path, Path]:
    """Write ``UNSW_NB15_training-set.csv`` / ``UNSW_NB15_testing-set.csv`` with headers."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rng = RngStream(seed)
    header = load_schema("unsw_nb15").names
    train = outdir / "UNSW_NB15_training-set.csv"
    test = outdir / "UNSW_NB15_testing-set.csv"
    _write(train, generate_unsw_nb15(n_train, "train", rng.child(0)), header)
    _write(test, generate_unsw_nb15(n_test, "test", rng.child(1)), header)
    return train, test


def write_dataset(name: str, outdir, n_train: int, n_test: int, seed: int = 0) -> tuple[Path, Path]:
    if name == "nsl_kdd":
        return write_nsl_kdd(outdir, n_train, n_test, seed)
    if name == "unsw_nb15":
        return write_unsw_nb15(outdir, n_train, n_test, seed)
    raise ValueError(f"no synthetic generator for dataset {name!r}")
