"""Independent oracles shared by the unit tests and the acceptance suite.

Nothing here calls into the code under test except to drive it.
"""

import hashlib
import random
from datetime import datetime, timedelta, timezone
from fractions import Fraction

from hypothesis import strategies as st

from appowersave import dps as D
from appowersave.power import PowerState
from appowersave.schedule import IntervalGroup, PowerSchedule
from appowersave.trace import TraceSample

# --- PHY rate table -------------------------------------------------------

# Data bits per OFDM symbol for one spatial stream, straight from the VHT
# rate tables. 20 MHz MCS 9 is integral only for 3 and 6 streams.
NDBPS_1SS = {
    20: [26, 52, 78, 104, 156, 208, 234, 260, 312, Fraction(1040, 3)],
    40: [54, 108, 162, 216, 324, 432, 486, 540, 648, 720],
    80: [117, 234, 351, 468, 702, 936, 1053, 1170, 1404, 1560],
    160: [234, 468, 702, 936, 1404, 1872, 2106, 2340, 2808, 3120],
}
UNDEFINED = {(20, 9, 1), (20, 9, 2), (20, 9, 4), (20, 9, 5), (20, 9, 7), (20, 9, 8),
             (80, 6, 3), (80, 6, 7), (80, 9, 6), (160, 9, 3)}


def oracle_rate(mcs, bw, nss, gi):
    if (bw, mcs, nss) in UNDEFINED:
        return None
    per_ss = NDBPS_1SS[bw][mcs]
    t_sym = Fraction(36 if gi == "short" else 40, 10) / 10**6
    return Fraction(per_ss) * nss / t_sym


# --- campus arithmetic ---------------------------------------------------

T0 = datetime(2021, 5, 4, tzinfo=timezone.utc)
R_LCM = 65e6 / 0.9  # 20 MHz, 1 SS, MCS7, short GI
R_HCM = 650e6
BEACON_US = 20 + 4 * -(-(16 + 8 * 200 + 6) // 24)


def oracle(sample, w, threshold=30e6, frac=0.5, beacons=True):
    """Per-sample energies (static, sdps) written out longhand."""
    T = 600.0
    bits = 8 * (sample.dl_bytes + sample.ul_bytes)
    rate = bits / T

    def fixed(mode, r):
        t_tx = sample.dl_bytes * 8 / r
        t_rx = sample.ul_bytes * 8 / r
        if t_tx + t_rx > T:
            k = T / (t_tx + t_rx)
            t_tx, t_rx = t_tx * k, t_rx * k
        return w[mode + ".tx"] * t_tx + w[mode + ".rx"] * t_rx + w[mode + ".idle"] * (T - t_tx - t_rx)

    static = fixed("hcm", R_HCM)
    key = f"{sample.ap_id}|{sample.t_start.strftime('%Y-%m-%dT%H:%M:%SZ')}".encode()
    u = int(hashlib.blake2b(key, digest_size=8).hexdigest(), 16) / 2 ** 64
    if bits == 0 and u < frac:
        sdps = w["doze"] * T
    elif rate > threshold:
        sdps = static
    else:
        sdps = fixed("lcm", R_LCM)
    if beacons:
        extra = T / 0.1024 * BEACON_US * 1e-6 * w["lcm.tx"]
        static, sdps = static + extra, sdps + extra
    return static, sdps


def random_samples(n, seed):
    rng = random.Random(seed)
    out = []
    for i in range(n):
        kind = rng.random()
        if kind < 0.2:
            dl = ul = 0
        elif kind < 0.3:
            dl, ul = rng.randint(0, 6 * 10 ** 10), rng.randint(0, 10 ** 10)  # beyond capacity
        else:
            scale = 10 ** rng.uniform(3, 9.5)
            dl, ul = int(scale * rng.random()), int(scale * rng.random() * 0.3)
        out.append(TraceSample(f"ap{rng.randint(0, 500)}", T0 + timedelta(minutes=10 * rng.randint(0, 143)), dl, ul))
    return out


# --- DPS driver ------------------------------------------------------------

HCM_CAPS = D.Capabilities(80, 2, 7)
LCM_CAPS = D.Capabilities(20, 1, 7)


def fresh(**kw):
    return D.ApModeState(max_caps=HCM_CAPS, lcm_caps=LCM_CAPS, **kw)


def icf(sta=1, ll=False, timeout=10_000, explicit=None, caps=HCM_CAPS, padding=0):
    if explicit is not None:
        timeout = None
    return D.IcfFrame(sta, caps, explicit, timeout, ll, padding)


CASES = 1000


class Driver:
    """Feeds a random ICF sequence through the state machine, honouring every timer."""

    def __init__(self, rng):
        self.rng = rng
        self.policy = rng.choice([D.DpsPolicy(), D.DpsPolicy(D.PolicyKind.DEFER, rng.randint(1, 4),
                                                              rng.choice([1_000, 20_000, 50_000]))])
        self.st = fresh(transition_delay_up=rng.choice([0, 50, 100, 400]),
                        transition_delay_down=rng.choice([0, 100, 300]))
        self.entries = []  # (time, triggered sta ids, stations that were waiting)
        self.exits = []  # (time, hcm_expiry, inactivity_timeout, last_exchange) at each step down
        self.waiting = set()
        self.decisions = []

    def _observe(self, before, now):
        st = self.st
        if before is D.Mode.LCM and st.mode is D.Mode.HCM:
            tfs = [tf.sta_id for tf in D.drain_pending(st, now)]
            self.entries.append((now, tfs, set(self.waiting)))
            self.waiting.clear()

    def advance(self, until):
        st = self.st
        while True:
            d = D.next_deadline(st, self.policy)
            if d is None or d > until:
                return
            before = st.mode
            expiry, timeout, last = st.hcm_expiry, st.inactivity_timeout, st.last_exchange
            change = D.tick(st, d, self.policy)
            self._observe(before, d)
            if change is not None and change.to is D.Mode.LCM:
                self.exits.append((d, expiry, timeout, last))

    def icf(self, now, frame):
        self.advance(now)
        before = self.st.mode
        dec = D.on_icf(self.st, frame, self.policy, now)
        self._observe(before, now)
        self.decisions.append((now, frame, dec))
        if isinstance(dec, D.Deferred):
            self.waiting.add(frame.sta_id)
        return dec

    def run(self, n=None):
        rng, now = self.rng, 0
        for _ in range(n or rng.randint(1, 12)):
            now += rng.choice([0, rng.randint(1, 500), rng.randint(500, 30_000)])
            explicit = rng.random() < 0.4
            frame = icf(sta=rng.randint(1, 5), ll=rng.random() < 0.3,
                        explicit=rng.randint(100, 20_000) if explicit else None,
                        timeout=rng.randint(500, 20_000))
            self.icf(now, frame)
        self.advance(10**12)
        return self


def drivers(n=CASES):
    for seed in range(n):
        yield Driver(random.Random(seed)).run()


# --- schedules ---------------------------------------------------------------

CAPABLE = (PowerState.REDUCED_CAPABILITIES, PowerState.FULL_CAPABILITIES)
states = st.sampled_from(list(PowerState))


@st.composite
def schedules(draw):
    n = draw(st.integers(0, 16))
    groups = []
    for _ in range(n):
        period = draw(st.integers(1, 2**32 - 1))
        state = draw(states)
        caps = (draw(st.sampled_from([20, 40, 80, 160])), draw(st.integers(1, 8))) if state in CAPABLE else None
        groups.append(IntervalGroup(draw(st.integers(0, 2**32 - 1)), draw(st.integers(1, period)), period,
                                    state, caps, draw(st.booleans())))
    return PowerSchedule(draw(st.integers(0, 2**64 - 1)), tuple(groups), draw(states), draw(st.integers(0, 0xFFFF)))
