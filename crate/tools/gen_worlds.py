#!/usr/bin/env python3
"""Generate the shipped world files and D1/D2 trace CSVs.

Device V/F tables interpolate busy power between a floor and the published
peak with a superlinear curve (P ~ V^2 f); NN MAC counts, payload sizes, and
accuracy tables are synthetic but keep the published layer compositions.
"""
import math
import os

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "autoscale", "worlds")


def fmt(x, nd=4):
    s = f"{x:.{nd}f}".rstrip("0").rstrip(".")
    if "." not in s and "e" not in s:
        s += ".0"
    return s


def vf_steps(f_mhz_list, p_min, p_max, exponent=2.5):
    f0, f1 = f_mhz_list[0], f_mhz_list[-1]
    steps = []
    prev = None
    for f in f_mhz_list:
        x = (f - f0) / (f1 - f0) if f1 > f0 else 1.0
        p = p_min + (p_max - p_min) * (x ** exponent)
        p = round(p, 3)
        if prev is not None and p < prev:
            p = prev
        prev = p
        steps.append((f, p))
    # publish the exact peak
    steps[-1] = (steps[-1][0], p_max)
    return steps


def emit_processor(lines, kind, core_count, idle, peak_gmacs, precisions, steps, dsp_power=None):
    lines.append("")
    lines.append("[[edge.processors]]" if emit_processor.device == "edge" else f"[[{emit_processor.device}.processors]]")
    lines.append(f'kind = "{kind}"')
    lines.append(f"core_count = {core_count}")
    lines.append(f"idle_power_w = {fmt(idle)}")
    if dsp_power is not None:
        lines.append(f"dsp_power_w = {fmt(dsp_power)}")
    lines.append(f"peak_gmacs = {fmt(peak_gmacs)}")
    lines.append("supported_precisions = [" + ", ".join(f'"{p}"' for p in precisions) + "]")
    for f_mhz, p in steps:
        lines.append("")
        lines.append(f"[[{emit_processor.device}.processors.vf_steps]]")
        lines.append(f"frequency_hz = {f_mhz}e6")
        lines.append(f"busy_power_w = {fmt(p)}")


emit_processor.device = "edge"


def emit_interface(lines, device, kind, tx, rx, rate):
    lines.append("")
    lines.append(f"[[{device}.interfaces]]")
    lines.append(f'kind = "{kind}"')
    lines.append("")
    lines.append(f"[{device}.interfaces.tx_power_w]")
    lines.append(f"regular = {fmt(tx[0])}")
    lines.append(f"weak = {fmt(tx[1])}")
    lines.append("")
    lines.append(f"[{device}.interfaces.rx_power_w]")
    lines.append(f"regular = {fmt(rx[0])}")
    lines.append(f"weak = {fmt(rx[1])}")
    lines.append("")
    lines.append(f"[{device}.interfaces.rate_bytes_per_s]")
    lines.append(f"regular = {rate[0]}")
    lines.append(f"weak = {rate[1]}")


# (name, conv, fc, rc, mac_M, in_bytes, out_bytes, qos_s, base_accuracy)
NNS = [
    ("inceptionv1",     49, 1,  0, 1430.0, 150528, 4004,  0.050, 0.745),
    ("inceptionv3",     94, 1,  0, 5710.0, 268203, 4004,  0.050, 0.772),
    ("mobilenetv1",     14, 1,  0,  569.0, 150528, 4004,  0.050, 0.712),
    ("mobilenetv2",     35, 1,  0,  300.0, 150528, 4004,  0.050, 0.718),
    ("mobilenetv3",     23, 20, 0,  220.0, 150528, 4004,  0.050, 0.752),
    ("resnet50",        53, 1,  0, 4100.0, 150528, 4004,  0.050, 0.760),
    ("ssd_mobilenetv1", 19, 1,  0, 1200.0, 270000, 16384, 0.0333, 0.720),
    ("ssd_mobilenetv2", 52, 1,  0,  800.0, 270000, 16384, 0.0333, 0.712),
    ("ssd_mobilenetv3", 28, 20, 0,  520.0, 270000, 16384, 0.0333, 0.700),
    ("mobilebert",      0,  1, 24, 2600.0, 65536,  2048,  0.100, 0.780),
]

# accuracy deltas per target; fp16 takes a larger hit on fc-heavy profiles
def accuracy_table(base, fc_layers, has_dsp):
    fp16_delta = 0.035 if fc_layers >= 10 else 0.008
    table = {
        "cpu/fp32": base,
        "cpu/int8": round(base - 0.025, 3),
        "gpu/fp32": base,
        "gpu/fp16": round(base - fp16_delta, 3),
        "connected-edge/fp32": base,
        "cloud/fp32": round(min(base + 0.012, 0.999), 3),
    }
    if has_dsp:
        dsp_delta = 0.045 if fc_layers >= 10 else 0.030
        table["dsp/int8"] = round(base - dsp_delta, 3)
    return table


def emit_nn(lines, nn, has_dsp):
    name, conv, fc, rc, mac, inb, outb, qos, base = nn
    lines.append("")
    lines.append("[[nns]]")
    lines.append(f'name = "{name}"')
    lines.append(f"conv_layers = {conv}")
    lines.append(f"fc_layers = {fc}")
    lines.append(f"rc_layers = {rc}")
    lines.append(f"mac_count_millions = {fmt(mac)}")
    lines.append(f"input_bytes = {inb}")
    lines.append(f"output_bytes = {outb}")
    lines.append(f"qos_target_s = {fmt(qos)}")
    lines.append("accuracy_requirement = 0.5")
    lines.append("")
    lines.append("[nns.accuracy]")
    for key, val in accuracy_table(base, fc, has_dsp).items():
        lines.append(f'"{key}" = {fmt(val, 3)}')


def emit_constant_scenario(lines, sid, co_cpu, co_mem, rw, rp):
    lines.append("")
    lines.append("[[scenarios]]")
    lines.append(f'id = "{sid}"')
    lines.append("")
    lines.append("[scenarios.generator]")
    lines.append('kind = "constant"')
    lines.append(f"co_cpu_util = {fmt(co_cpu)}")
    lines.append(f"co_mem_util = {fmt(co_mem)}")
    lines.append(f"rssi_wlan_dbm = {fmt(rw, 1)}")
    lines.append(f"rssi_p2p_dbm = {fmt(rp, 1)}")


def emit_scenarios(lines, with_traces):
    emit_constant_scenario(lines, "S1", 0.0, 0.0, -60.0, -60.0)
    emit_constant_scenario(lines, "S2", 1.0, 0.0, -60.0, -60.0)
    emit_constant_scenario(lines, "S3", 0.0, 1.0, -60.0, -60.0)
    emit_constant_scenario(lines, "S4", 0.0, 0.0, -85.0, -60.0)
    emit_constant_scenario(lines, "S5", 0.0, 0.0, -60.0, -85.0)
    if with_traces:
        for sid, fname in [("D1", "traces/d1.csv"), ("D2", "traces/d2.csv")]:
            lines.append("")
            lines.append("[[scenarios]]")
            lines.append(f'id = "{sid}"')
            lines.append("")
            lines.append("[scenarios.generator]")
            lines.append('kind = "trace"')
            lines.append("step_period = 1")
            lines.append(f'trace_file = "{fname}"')
        lines.append("")
        lines.append("[[scenarios]]")
        lines.append('id = "D3"')
        lines.append("")
        lines.append("[scenarios.generator]")
        lines.append('kind = "gaussian_rssi"')
        lines.append("mean_dbm = -75.0")
        lines.append("stddev_dbm = 10.0")
        lines.append('interface = "wlan"')
    lines.append("")
    lines.append("[[scenarios]]")
    lines.append('id = "GRID"')
    lines.append("")
    lines.append("[scenarios.generator]")
    lines.append('kind = "variance_grid"')


def emit_params(lines):
    lines.append("")
    lines.append("[params.interference]")
    lines.append("cpu_coef = 0.6")
    lines.append("mem_coef = 0.5")
    lines.append("")
    lines.append("[params.precision_speedup]")
    lines.append("fp16 = 1.5")
    lines.append("int8 = 2.0")
    lines.append("")
    lines.append("[params.affinity]")
    lines.append("gpu_fc = 0.02")
    lines.append("gpu_rc = 0.08")
    lines.append("dsp_fc = 0.12")
    lines.append("dsp_rc = 0.1")


def emit_remote_devices(lines):
    # Locally connected tablet; its own energy is never billed to the edge.
    lines.append("")
    lines.append("[connected_edge]")
    lines.append('name = "tab-s6"')
    lines.append("dram_bandwidth_gbs = 17.0")
    emit_processor.device = "connected_edge"
    emit_processor(lines, "cpu", 8, 0.35, 40.0, ["fp32", "int8"],
                   vf_steps([2000, 2200, 2400, 2600, 2840], 2.0, 6.2))
    emit_processor(lines, "gpu", 1, 0.15, 60.0, ["fp32", "fp16"],
                   vf_steps([250, 400, 550, 700], 0.9, 3.2))
    emit_processor(lines, "dsp", 1, 0.06, 30.0, ["int8"],
                   [(1000, 2.0)], dsp_power=2.0)

    # Cloud compute parameters are synthetic: no public power figures exist
    # for the server side, and its energy is free to the edge device anyway.
    lines.append("")
    lines.append("[cloud]")
    lines.append('name = "cloud-server"')
    lines.append("dram_bandwidth_gbs = 250.0")
    lines.append("free_compute_energy = true")
    emit_processor.device = "cloud"
    emit_processor(lines, "cpu", 40, 0.0, 2000.0, ["fp32"],
                   [(2400, 250.0)])
    emit_processor.device = "edge"


def world_header(name, seed):
    return [
        f"# Simulated edge/cloud execution world: {name}.",
        "# Device V/F tables follow the published step counts and peak powers;",
        "# busy power between the endpoints, MAC throughputs, payload sizes,",
        "# and per-target accuracy values are synthetic desk-scale stand-ins.",
        "schema_version = 1",
        f"seed = {seed}",
    ]


def mi8pro():
    lines = world_header("mi8pro", 42)
    lines.append("")
    lines.append("[edge]")
    lines.append('name = "mi8pro"')
    lines.append("dram_bandwidth_gbs = 14.9")
    emit_processor.device = "edge"
    # Cortex A75: 2.8 GHz, 23 V/F steps, 5.5 W peak
    emit_processor(lines, "cpu", 4, 0.25, 20.0, ["fp32", "int8"],
                   vf_steps([600 + 100 * i for i in range(23)], 1.2, 5.5))
    # Adreno 630: 0.7 GHz, 7 V/F steps, 2.8 W peak
    emit_processor(lines, "gpu", 1, 0.12, 22.0, ["fp32", "fp16"],
                   vf_steps([100 + 100 * i for i in range(7)], 0.9, 2.8))
    # Hexagon 685: 1.8 W, single step
    emit_processor(lines, "dsp", 1, 0.05, 25.0, ["int8"],
                   [(800, 1.8)], dsp_power=1.8)
    emit_interface(lines, "edge", "wlan", (1.9, 2.6), (1.0, 1.4), ("1.25e7", "1.25e6"))
    emit_interface(lines, "edge", "p2p", (1.4, 2.0), (0.8, 1.2), ("8.0e6", "8.0e5"))
    emit_remote_devices(lines)
    emit_params(lines)
    for nn in NNS:
        emit_nn(lines, nn, has_dsp=True)
    emit_scenarios(lines, with_traces=True)
    return "\n".join(lines) + "\n"


def s10e():
    lines = world_header("s10e", 42)
    lines.append("")
    lines.append("[edge]")
    lines.append('name = "s10e"')
    lines.append("dram_bandwidth_gbs = 24.9")
    emit_processor.device = "edge"
    # Mongoose: 2.7 GHz, 21 V/F steps, 5.6 W peak
    emit_processor(lines, "cpu", 4, 0.28, 19.0, ["fp32", "int8"],
                   vf_steps([700 + 100 * i for i in range(21)], 1.25, 5.6))
    # Mali-G76: 0.7 GHz, 9 V/F steps, 2.4 W peak
    emit_processor(lines, "gpu", 1, 0.12, 21.0, ["fp32", "fp16"],
                   vf_steps([300 + 50 * i for i in range(9)], 0.85, 2.4))
    emit_interface(lines, "edge", "wlan", (1.9, 2.6), (1.0, 1.4), ("1.25e7", "1.25e6"))
    emit_interface(lines, "edge", "p2p", (1.4, 2.0), (0.8, 1.2), ("8.0e6", "8.0e5"))
    emit_remote_devices(lines)
    emit_params(lines)
    for nn in NNS:
        emit_nn(lines, nn, has_dsp=False)
    emit_scenarios(lines, with_traces=True)
    return "\n".join(lines) + "\n"


def motox():
    lines = world_header("motox", 42)
    lines.append("")
    lines.append("[edge]")
    lines.append('name = "motox"')
    lines.append("dram_bandwidth_gbs = 12.8")
    emit_processor.device = "edge"
    # Cortex A57: 1.9 GHz, 15 V/F steps, 3.6 W peak
    emit_processor(lines, "cpu", 4, 0.22, 10.0, ["fp32", "int8"],
                   vf_steps([500 + 100 * i for i in range(15)], 0.9, 3.6))
    # Adreno 430: 0.6 GHz, 6 V/F steps, 2.0 W peak
    emit_processor(lines, "gpu", 1, 0.1, 12.0, ["fp32", "fp16"],
                   vf_steps([100 + 100 * i for i in range(6)], 0.7, 2.0))
    emit_interface(lines, "edge", "wlan", (1.9, 2.6), (1.0, 1.4), ("1.25e7", "1.25e6"))
    emit_interface(lines, "edge", "p2p", (1.4, 2.0), (0.8, 1.2), ("8.0e6", "8.0e5"))
    emit_remote_devices(lines)
    emit_params(lines)
    for nn in NNS:
        emit_nn(lines, nn, has_dsp=False)
    emit_scenarios(lines, with_traces=True)
    return "\n".join(lines) + "\n"


REDUCED_NNS = [
    ("lite",      14, 1,  0,  300.0, 150528, 4004, 0.050, 0.718),
    ("midvision", 49, 20, 0, 1430.0, 150528, 4004, 0.050, 0.745),
    ("textgen",   0,  1, 24, 2600.0, 65536,  2048, 0.100, 0.780),
]


def reduced():
    lines = world_header("reduced", 42)
    lines.append("")
    lines.append("[edge]")
    lines.append('name = "edge-mini"')
    lines.append("dram_bandwidth_gbs = 10.0")
    emit_processor.device = "edge"
    emit_processor(lines, "cpu", 4, 0.25, 20.0, ["fp32", "int8"],
                   [(1400, 2.2), (2800, 5.5)])
    emit_processor(lines, "gpu", 1, 0.12, 22.0, ["fp16"],
                   [(700, 2.8)])
    emit_interface(lines, "edge", "wlan", (1.9, 2.6), (1.0, 1.4), ("1.25e7", "1.25e6"))
    emit_interface(lines, "edge", "p2p", (1.4, 2.0), (0.8, 1.2), ("8.0e6", "8.0e5"))
    emit_remote_devices(lines)
    emit_params(lines)
    for nn in REDUCED_NNS:
        emit_nn(lines, nn, has_dsp=False)
    emit_scenarios(lines, with_traces=False)
    return "\n".join(lines) + "\n"


def traces():
    # D1, music player: gentle periodic load.
    d1 = ["step,co_cpu_util,co_mem_util"]
    for k in range(48):
        cpu = 0.22 + 0.18 * math.sin(2 * math.pi * k / 12.0)
        mem = 0.16 + 0.12 * math.sin(2 * math.pi * k / 16.0 + 1.0)
        d1.append(f"{k},{max(cpu, 0.0):.4f},{max(mem, 0.0):.4f}")
    # D2, web browser: idle baseline with page-load bursts.
    d2 = ["step,co_cpu_util,co_mem_util"]
    for k in range(48):
        if k % 8 in (0, 1):
            cpu, mem = 0.85, 0.55
        elif k % 8 == 2:
            cpu, mem = 0.45, 0.3
        else:
            cpu, mem = 0.06, 0.04
        d2.append(f"{k},{cpu:.4f},{mem:.4f}")
    return "\n".join(d1) + "\n", "\n".join(d2) + "\n"


def main():
    os.makedirs(os.path.join(OUT, "traces"), exist_ok=True)
    for name, text in [
        ("mi8pro.world", mi8pro()),
        ("s10e.world", s10e()),
        ("motox.world", motox()),
        ("reduced.world", reduced()),
    ]:
        with open(os.path.join(OUT, name), "w") as f:
            f.write(text)
        print(f"wrote {name} ({len(text)} bytes)")
    d1, d2 = traces()
    with open(os.path.join(OUT, "traces", "d1.csv"), "w") as f:
        f.write(d1)
    with open(os.path.join(OUT, "traces", "d2.csv"), "w") as f:
        f.write(d2)
    print("wrote traces/d1.csv traces/d2.csv")


if __name__ == "__main__":
    main()
