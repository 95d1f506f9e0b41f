"""Author the shipped replay fixtures.

Each scenario describes, per module, what a careful analyst model would
answer at every stage.  The real pipeline is run against a scripted backend
that answers from the scenario, wrapped in a recording backend, so the
fixture files carry the exact prompt hashes the pipeline produces.

    python3 fixtures/author.py aes128 fpu
"""

from __future__ import annotations

import argparse
import json
import re
import shutil
import sys
from pathlib import Path

from hwasset.config import RunConfig
from hwasset.llm.backends import RecordBackend, ScriptedBackend
from hwasset.pipeline import make_gateway, run
from hwasset.rtl.repo import load_design

HERE = Path(__file__).resolve().parent

_MODULE_RE = re.compile(r"^Module: (\S+)", re.M)
_OBJECTIVE_RE = re.compile(r"^Security objective: (\w+)", re.M)
_CWE_LINE_RE = re.compile(r"^CWE-(\d+):", re.M)


def _json_after(text: str, header: str):
    start = text.index(header) + len(header)
    value, _ = json.JSONDecoder().raw_decode(text, start)
    return value


class Responder:
    """Scripted answers for one scenario (see the scenario dicts below)."""

    def __init__(self, scenario, model):
        self.s = scenario
        self.model = model

    def __call__(self, req):
        text = req.messages[-1].content
        module = _MODULE_RE.search(text).group(1)
        handler = getattr(self, "on_" + req.template_id)
        return handler(module, text)

    def on_Prune(self, module, text):
        decision, why = self.s.get("prune", {}).get(module, ("retain", f"{module} handles design data"))
        return {"decision": decision, "rationale": why}

    def on_Summarize(self, module, text):
        return self.s["summaries"].get(module, f"{module} has no documented security role.")

    def on_LLMparse_ports(self, module, text):
        m = self.model[module]
        return {"ports": [{"name": p.name, "direction": p.direction, "width": p.width_bits} for p in m.ports]}

    def on_LLMparse_signals(self, module, text):
        m = self.model[module]
        return {"signals": [{"name": s.name, "kind": s.kind, "width": s.width_bits} for s in m.signals]}

    def on_LLMasset(self, module, text):
        rows = self.s["primaries"].get(module, [])
        return {
            "assets": [
                {"conceptual_name": name, "element": el, "objectives": objs, "justification": why}
                for name, el, objs, why in rows
            ]
        }

    def on_SecAsset(self, module, text):
        prims = {p["element"]: p["id"] for p in _json_after(text, "Primary assets:\n")}
        out = []
        for parent, mod, el, name, why in self.s["secondaries"].get(module, []):
            out.append({"parent_id": prims[parent], "conceptual_name": name, "module": mod, "element": el,
                        "justification": why})
        return {"secondaries": out}

    @staticmethod
    def _row_keys(rows):
        """Asset id -> (module, element, parent element or None)."""
        elements = {r["id"]: r["element"] for r in rows}
        return {r["id"]: (r["module"], r["element"], elements.get(r.get("parent_id"))) for r in rows}

    def on_LLMattack(self, module, text):
        rows = _json_after(text, "Assets:\n")
        out = []
        for r in rows:
            if r["classification"] != "primary":
                continue
            scen = self.s["attacks"].get((module, r["element"]), [])
            out.append({"id": r["id"], "attack_scenarios": [{"attack_class": c, "narrative": n} for c, n in scen]})
        return {"assets": out}

    def on_LLMcwe(self, module, text):
        rows = _json_after(text, "Assets:\n")
        view = {int(x) for x in _CWE_LINE_RE.findall(text)}
        objective = _OBJECTIVE_RE.search(text).group(1)
        out = []
        for aid, key in self._row_keys(rows).items():
            wanted = self.s["cwe"].get(key, [])
            ids = [c for c in wanted if c in view]
            ids += self.s.get("cwe_noise", {}).get((key, objective), [])
            if ids:
                out.append({"id": aid, "cwe_ids": ids})
        return {"mappings": out}

    def on_LLMref(self, module, text):
        rows = _json_after(text, "Asset list:\n")
        out = []
        for aid, key in self._row_keys(rows).items():
            verdict = self.s.get("critique", {}).get(key)
            if verdict is None:
                out.append({"id": aid, "verdict": "confirm"})
            elif verdict[0] == "remove":
                out.append({"id": aid, "verdict": "remove", "reason": verdict[1]})
            else:
                out.append({"id": aid, "verdict": "revise", "reason": verdict[1], "revision": verdict[2]})
        return {"verdicts": out}


# -- scenarios ---------------------------------------------------------------------

_KEY_WHY = "Secret cipher key; every round key is derived from it."
AES128 = {
    "repo": "aes128/rtl",
    "spec": "aes128/spec.md",
    "replay": "aes128/replay",
    "summaries": {
        "aes_128": (
            "aes_128 is the top level of a fully unrolled AES-128 encryption pipeline. It accepts a 128-bit "
            "plaintext on state and the secret 128-bit cipher key on key, whitens the state with the key, and "
            "drives ten key expansion stages and ten round stages. The ciphertext appears on out after 21 cycles. "
            "The key, derived round keys and intermediate state are secret; the ciphertext must be produced on "
            "schedule. There are no side-channel or fault countermeasures."
        ),
        "expand_key_128": (
            "expand_key_128 derives the next AES round key from the previous one on in and a round constant on "
            "rcon. out_1 feeds the next expansion stage, out_2 is the round key used by the matching round. Any "
            "expanded key word discloses the cipher key."
        ),
        "one_round": (
            "one_round performs one AES round: four table_lookup units implement SubBytes and MixColumns on the "
            "columns of state_in, and the result is mixed with the round key on key into the registered state_out."
        ),
        "final_round": (
            "final_round performs the last AES round without MixColumns. Its state_out is the ciphertext of the core."
        ),
        "table_lookup": (
            "table_lookup maps one 32-bit state column through combined S-box and MixColumns tables, producing "
            "p0 to p3. Its timing and power depend on the secret state."
        ),
    },
    "primaries": {
        "aes_128": [
            ("Cipher key", "key", ["Confidentiality"], _KEY_WHY),
            ("Ciphertext output", "out", ["Availability"], "Encryption service result; stalls deny service."),
            ("Cipher state", "state", ["Confidentiality"], "Plaintext and intermediate state reveal round keys."),
            # not an element of aes_128: the generation stage must drop it
            ("Round key register", "round_key", ["Confidentiality"], "Holds expanded round keys."),
        ],
    },
    "secondaries": {
        "aes_128": [
            ("key", "expand_key_128", "out_1", "Next round key", "Expanded key word forwarded to the next stage."),
            ("key", "expand_key_128", "out_2", "Round key", "Round key consumed by the round block."),
            ("key", "one_round", "key", "Round key input", "Round key mixed into the state."),
            ("key", "final_round", "key", "Last round key", "Final round key mixed into the ciphertext."),
            ("key", "aes_128", "out", "Ciphertext", "Ciphertext depends on the key."),
            ("key", "aes_128", "clk", "Core clock", "Clock glitches can disturb key registers."),
            ("out", "one_round", "state_out", "Round output", "Corrupting the round output corrupts the ciphertext."),
            ("out", "final_round", "state_out", "Final round output", "Drives the ciphertext directly."),
            ("out", "aes_128", "state", "Plaintext", "Ciphertext is computed from the state."),
            ("state", "one_round", "state_in", "Round input state", "Intermediate state entering a round."),
            ("state", "final_round", "state_in", "Final round input state", "State entering the last round."),
            ("state", "aes_128", "state", "Plaintext", "Plaintext block."),
            ("state", "table_lookup", "state", "Lookup column", "State column addressing the S-box tables."),
            ("state", "table_lookup", "{p0,p1,p2,p3}", "Lookup results", "Table outputs carry state-dependent values."),
        ],
    },
    "attacks": {
        ("aes_128", "key"): [
            ("side_channel", "Power analysis of the first round lookups recovers key bytes."),
            ("fault_injection", "Faults in the last rounds allow differential fault analysis of the key."),
            ("unauthorized_access", "Key material reachable from debug or scan logic leaks the key."),
        ],
        ("aes_128", "out"): [
            ("fault_injection", "Glitching the round pipeline corrupts or stalls the ciphertext."),
            ("denial_of_service", "A stuck pipeline register denies the encryption service."),
        ],
        ("aes_128", "state"): [
            ("side_channel", "State-dependent lookups leak intermediate values through power and timing."),
            ("hardware_trojan", "A trojan tapping the state registers exfiltrates plaintext."),
        ],
    },
    "cwe": {
        ("aes_128", "key", None): [1300, 1191, 1239, 1258, 1247, 1263],
        ("expand_key_128", "out_1", "key"): [1300, 1191, 1239, 1258],
        ("expand_key_128", "out_2", "key"): [1300, 1191, 1313],
        ("one_round", "key", "key"): [1300, 1247, 1191, 1239, 1258, 1263],
        ("final_round", "key", "key"): [1300, 1247, 1191, 1239, 1258, 1263],
        ("aes_128", "out", "key"): [1247, 1319, 1384],
        ("aes_128", "clk", "key"): [1247],
        ("aes_128", "out", None): [1247, 1261, 1313],
        ("one_round", "state_out", "out"): [1247, 1261, 1313],
        ("final_round", "state_out", "out"): [1247, 1261, 1313],
        ("aes_128", "state", "out"): [1300, 1191, 1258],
        ("aes_128", "state", None): [1300, 1247, 1191, 1258],
        ("one_round", "state_in", "state"): [1300, 1247, 1323, 1313, 1263],
        ("final_round", "state_in", "state"): [1300, 1247, 1323, 1313, 1263],
        ("aes_128", "state", "state"): [1300, 1191, 1258],
        ("table_lookup", "state", "state"): [1300, 1247, 1319],
        ("table_lookup", "{p0,p1,p2,p3}", "state"): [1300, 1247, 1319],
    },
    # an id outside the catalogue: dropped by the CWE stage with a warning
    "cwe_noise": {(("expand_key_128", "out_2", "key"), "Integrity"): [9999]},
    "critique": {
        ("aes_128", "clk", "key"): ("remove", "The clock carries no key material."),
    },
}

FPU = {
    "repo": "fpu/rtl",
    "spec": None,
    "replay": "fpu/replay",
    "summaries": {},
    "primaries": {
        "neorv32_cpu": [
            ("CSR read data", "csr_rdata", ["Confidentiality", "Integrity"],
             "Carries privileged control and status register contents to the core."),
        ],
    },
    "secondaries": {
        "neorv32_cpu": [
            ("csr_rdata", "neorv32_cpu_cp_fpu", "csr_we_i", "FPU CSR write enable",
             "Gates every update of the FPU flags and rounding mode read back through the CSRs."),
        ],
    },
    "attacks": {
        ("neorv32_cpu", "csr_rdata"): [
            ("fault_injection", "Glitching the read mux returns forged CSR values."),
            ("unauthorized_access", "Unprivileged code observing privileged CSR contents."),
            ("hardware_trojan", "A trojan in the FPU forges the flags returned on read."),
        ],
    },
    "cwe": {
        ("neorv32_cpu", "csr_rdata", None): [1262, 1247],
        ("neorv32_cpu_cp_fpu", "csr_we_i", "csr_rdata"): [1262],
    },
    "critique": {},
}

NEORV32 = {
    "repo": "neorv32/rtl",
    "spec": None,
    "replay": "neorv32/replay",
    "prune": {
        "neorv32_application_image": (
            "prune", "Constant program image behind a read port; holds no security state and enforces no policy."),
        "neorv32_cpu_pmp": (
            "retain", "Physical memory protection enforces privilege-based access control on memory."),
    },
    "summaries": {},
    "primaries": {
        "neorv32_cpu_pmp": [
            ("Region 0 configuration", "cfg0", ["Integrity"], "Permissions and lock bit of region 0."),
            ("Region 1 configuration", "cfg1", ["Integrity"], "Permissions and lock bit of region 1."),
            ("Region 0 bound", "addr0", ["Integrity"], "Upper bound of region 0."),
            ("Region 1 bound", "addr1", ["Integrity"], "Upper bound of region 1."),
            ("Access fault", "fault_o", ["Availability"], "Signals a blocked access."),
        ],
    },
    "secondaries": {
        "neorv32_cpu_pmp": [
            ("cfg0", "neorv32_cpu_pmp", "csr_wdata_i", "CSR write data", "Source of new configuration values."),
            ("cfg0", "neorv32_cpu_pmp", "csr_we_i", "CSR write enable", "Gates configuration updates."),
            ("fault_o", "neorv32_cpu_pmp", "hit0", "Region 0 match", "Selects which region rules apply."),
        ],
    },
    "attacks": {
        ("neorv32_cpu_pmp", "cfg0"): [
            ("privilege_escalation", "User code rewrites an unlocked region to gain machine-only access."),
            ("fault_injection", "A glitch during the lock check lets a locked configuration change."),
        ],
        ("neorv32_cpu_pmp", "cfg1"): [
            ("privilege_escalation", "User code rewrites an unlocked region to gain machine-only access."),
        ],
        ("neorv32_cpu_pmp", "addr0"): [
            ("unauthorized_access", "Moving the bound exposes protected memory to user mode."),
        ],
        ("neorv32_cpu_pmp", "addr1"): [
            ("unauthorized_access", "Moving the bound exposes protected memory to user mode."),
        ],
        # fault_o gets no scenario: it is removed together with its secondary
    },
    "cwe": {
        ("neorv32_cpu_pmp", "cfg0", None): [1233, 1231, 1262],
        ("neorv32_cpu_pmp", "cfg1", None): [1233, 1231],
        ("neorv32_cpu_pmp", "addr0", None): [1260, 1262],
        ("neorv32_cpu_pmp", "addr1", None): [1260],
        ("neorv32_cpu_pmp", "csr_wdata_i", "cfg0"): [1262],
        ("neorv32_cpu_pmp", "csr_we_i", "cfg0"): [1231],
    },
    "critique": {},
}

GPIO = {
    "repo": "simple_gpio/rtl",
    "spec": None,
    "replay": "simple_gpio/replay",
    "summaries": {},
    "primaries": {
        "simple_gpio": [
            ("Direction control", "ctrl", ["Integrity"], "Selects which pins are driven."),
            ("Output line data", "line", ["Confidentiality"], "Values driven onto output pins."),
            ("GPIO pins", "gpio", ["Availability"], "External pin interface."),
        ],
    },
    "secondaries": {
        "simple_gpio": [
            ("ctrl", "simple_gpio", "dat_i", "Bus write data", "Written into the control register."),
            ("line", "simple_gpio", "we_i", "Bus write enable", "Qualifies writes to the line register."),
        ],
    },
    "attacks": {
        ("simple_gpio", "ctrl"): [("unauthorized_access", "Unprivileged bus masters reconfigure pin directions.")],
        ("simple_gpio", "line"): [("fault_injection", "Glitches on the bus flip output values.")],
        ("simple_gpio", "gpio"): [("denial_of_service", "Driving pins against the board stalls attached devices.")],
    },
    "cwe": {
        ("simple_gpio", "ctrl", None): [1233, 1271],
        ("simple_gpio", "line", None): [1262],
        ("simple_gpio", "gpio", None): [1247],
        ("simple_gpio", "dat_i", "ctrl"): [1262],
        ("simple_gpio", "we_i", "line"): [1262],
    },
    "critique": {
        ("simple_gpio", "line", None): (
            "revise", "Output values are not secret; tampering with them is the concern.", {"objectives": ["Integrity"]}),
        ("simple_gpio", "we_i", "line"): ("remove", "The write enable is a bus strobe, not an asset carrier."),
    },
}

RC4 = {
    "repo": "rc4/rtl",
    "spec": None,
    "replay": "rc4/replay",
    "summaries": {},
    "primaries": {
        "rc4": [
            ("Secret key", "key", ["Confidentiality"], "Key bytes loaded through password_input."),
            ("Permutation state", "S", ["Confidentiality"], "Internal RC4 state derived from the key."),
            ("Keystream byte", "K", ["Confidentiality"], "Keystream output."),
        ],
    },
    "secondaries": {
        "rc4": [
            ("key", "rc4", "password_input", "Key input", "Key bytes enter here."),
            ("S", "rc4", "j", "Swap index", "Index into the permutation state."),
        ],
    },
    "attacks": {
        ("rc4", "key"): [("side_channel", "Power traces during key scheduling reveal key bytes.")],
        ("rc4", "S"): [("hardware_trojan", "A trojan dumps the permutation table.")],
        ("rc4", "K"): [("fault_injection", "Faults in the output stage bias the keystream.")],
    },
    "cwe": {
        ("rc4", "key", None): [1300, 1239],
        ("rc4", "S", None): [1300, 1239],
        ("rc4", "K", None): [1300, 1247],
        ("rc4", "password_input", "key"): [1300],
    },
    "critique": {
        ("rc4", "K", None): ("revise", "The keystream register is internal.", {"element": "keystream"}),
        ("rc4", "j", "S"): ("remove", "The index alone does not expose the state."),
    },
}

SHA3 = {
    "repo": "sha3/rtl",
    "spec": "sha3/spec.md",
    "replay": "sha3/replay",
    "summaries": {
        "keccak": "Top level of the hash core; message words may carry secrets and the digest must not be "
                  "released early or for a truncated message.",
        "padder": "Buffers message words into padded 576-bit blocks; the buffer holds message data until reset.",
        "f_permutation": "Holds the 1600-bit sponge state and runs the permutation rounds.",
    },
    "primaries": {
        "keccak": [
            ("Message input", "in", ["Confidentiality"], "Words may carry key material."),
            ("Digest", "out", ["Integrity"], "Result consumed by the integrator."),
            ("Padded block", "padder_out", ["Confidentiality"], "Contains message words."),
            ("Sponge state", "f_out", ["Confidentiality"], "Derived from every absorbed block."),
            ("Final word marker", "is_last", ["Integrity"], "Forcing it truncates the message."),
            ("Digest valid", "out_ready", ["Integrity"], "Early assertion releases a partial digest."),
            ("Input stall", "buffer_full", ["Availability"], "Held high it stalls the producer."),
        ],
    },
    "secondaries": {
        "keccak": [
            ("in", "padder", "v1", "Selected word", "Carries the current message word."),
            ("padder_out", "padder", "out", "Block buffer", "Register behind the padded block."),
            ("f_out", "f_permutation", "out", "State register", "Register behind the sponge state."),
            ("f_out", "f_permutation", "round_out", "Round output", "Next value of the sponge state."),
            ("is_last", "padder", "state", "Final block flag", "Latched copy of the final word marker."),
            ("buffer_full", "padder", "i", "Word counter", "Its top bit drives buffer_full."),
        ],
    },
    "attacks": {
        ("keccak", "in"): [("side_channel", "Power analysis while words are absorbed leaks key bytes.")],
        ("keccak", "out"): [("fault_injection", "A glitch during the last round corrupts the digest.")],
        ("keccak", "padder_out"): [("hardware_trojan", "A trojan copies the block buffer to a debug port.")],
        ("keccak", "f_out"): [("side_channel", "State-dependent switching leaks the sponge state.")],
        ("keccak", "is_last"): [("fault_injection", "Forcing the marker yields a digest of a truncated message.")],
        ("keccak", "out_ready"): [("fault_injection", "An early ready releases an intermediate state.")],
        ("keccak", "buffer_full"): [("denial_of_service", "Holding the stall high blocks all hashing.")],
    },
    "cwe": {
        ("keccak", "in", None): [1300],
        ("keccak", "out", None): [1247],
        ("keccak", "padder_out", None): [1239, 1258],
        ("keccak", "f_out", None): [1300, 1239],
        ("keccak", "is_last", None): [1247],
        ("keccak", "out_ready", None): [1247, 1245],
        ("keccak", "buffer_full", None): [1245],
        ("padder", "v1", "in"): [1300],
        ("padder", "out", "padder_out"): [1239],
        ("f_permutation", "out", "f_out"): [1239],
        ("f_permutation", "round_out", "f_out"): [1300],
        ("padder", "state", "is_last"): [1245],
        ("padder", "i", "buffer_full"): [1245],
    },
    "critique": {
        ("f_permutation", "round_out", "f_out"): (
            "remove", "Combinational next-state value; the state register already covers it."),
    },
}

SCENARIOS = {"aes128": AES128, "fpu": FPU, "neorv32": NEORV32, "simple_gpio": GPIO, "rc4": RC4, "sha3": SHA3}


def author(name: str) -> Path:
    s = SCENARIOS[name]
    out = HERE / s["replay"]
    if out.exists():
        shutil.rmtree(out)
    cfg = RunConfig(
        repo=str(HERE / s["repo"]),
        spec=str(HERE / s["spec"]) if s["spec"] else None,
        cwe=str(HERE / "cwe" / "hw_view.csv"),
        design=name,
        parallelism=1,
        backend="scripted",
    ).validate()
    model = load_design(cfg.repo)
    backend = RecordBackend(ScriptedBackend(responder=Responder(s, model)), out)
    bundle = run(cfg, gateway=make_gateway(cfg, backend))
    print(f"{name}: {len(backend.written)} fixtures, {len(bundle.primaries())} primaries, "
          f"{len(bundle.secondaries())} secondaries", file=sys.stderr)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", default=sorted(SCENARIOS))
    for n in ap.parse_args(argv).names:
        author(n)


if __name__ == "__main__":
    main()
