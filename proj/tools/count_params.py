#!/usr/bin/env python3
"""Count trainable parameters of a network config by layer algebra.

Independent of the C++ builder: reads the INI file and sums conv weights,
conv biases and batch-norm scale/shift per unit. Prints the total, or a
per-row breakdown with --rows.
"""

import argparse
import configparser
import sys


def conv(c_in, c_out, k):
    return k * k * c_in * c_out + c_out


def bn(c, enabled):
    return 2 * c if enabled else 0


def parse_res(text):
    h, w = text.lower().split("x")
    return int(h), int(w)


def parse_bool(text):
    return text.strip().lower() in ("1", "true", "yes", "on")


def role_of(name, explicit):
    if explicit:
        return explicit.strip().lower()
    low = name.lower()
    for prefix, role in (("down", "contracting"), ("across", "across"), ("up", "expanding"),
                         ("classifier", "classifier")):
        if low.startswith(prefix):
            return role
    raise ValueError(f"cannot infer path of row {name}")


def block_params(kind, c_in, c_out, use_bn, short):
    if kind == "simple":
        body = bn(c_in, use_bn) + conv(c_in, c_out, 3)
    elif kind == "basic":
        body = bn(c_in, use_bn) + conv(c_in, c_out, 3) + bn(c_out, use_bn) + conv(c_out, c_out, 3)
    elif kind == "bottleneck":
        inner = c_out // 4
        body = (bn(c_in, use_bn) + conv(c_in, inner, 1) + bn(inner, use_bn) + conv(inner, inner, 3)
                + bn(inner, use_bn) + conv(inner, c_out, 1))
    else:
        raise ValueError(kind)
    if short and c_in != c_out:
        body += conv(c_in, c_out, 1)
    return body


def count(path):
    ini = configparser.ConfigParser()
    with open(path) as f:
        ini.read_file(f)
    net = ini["network"]
    channels = int(net.get("input_channels", "1"))
    res = parse_res(net["input_resolution"])
    long_skips = parse_bool(net.get("long_skips", "true"))
    short_skips = parse_bool(net.get("short_skips", "true"))
    use_bn = parse_bool(net.get("batch_norm", "true"))

    rows = []
    contracting = []  # (resolution, width) of contracting row outputs
    total = 0
    for i, section in enumerate(s for s in ini.sections() if s.lower().startswith("row ")):
        body = ini[section]
        name = section[4:].strip()
        kind = body["block"].strip().lower()
        out_res = parse_res(body["resolution"])
        width = int(body["width"])
        reps = int(body.get("repetitions", "1"))
        role = role_of(name, body.get("path"))
        n = 0
        if long_skips and role == "expanding":
            src = [w for r, w in contracting if r == res]
            if src[-1] != channels:
                n += conv(src[-1], channels, 1)
        c_in = channels
        for rep in range(reps):
            if kind in ("conv3x3", "conv1x1"):
                k = 3 if kind == "conv3x3" else 1
                if not (i == 0 and rep == 0):
                    n += bn(c_in, use_bn)
                n += conv(c_in, width, k)
            else:
                n += block_params(kind, c_in, width, use_bn, short_skips)
            c_in = width
        if role == "contracting":
            contracting.append((out_res, width))
        rows.append((name, n))
        total += n
        channels, res = width, out_res
    return total, rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--rows", action="store_true", help="print per-row counts")
    args = ap.parse_args()
    try:
        total, rows = count(args.config)
    except (OSError, KeyError, ValueError, IndexError, configparser.Error) as e:
        print(f"count_params: {e}", file=sys.stderr)
        return 1
    if args.rows:
        for name, n in rows:
            print(f"{name}\t{n}")
    print(total)
    return 0


if __name__ == "__main__":
    sys.exit(main())
