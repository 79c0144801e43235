"""Shared builders for the test suite."""

import random
from functools import lru_cache
from math import gcd

import numpy as np


@lru_cache(maxsize=1)
def toy_primes(limit: int = 1 << 24) -> tuple[int, ...]:
    sieve = np.ones(limit, dtype=bool)
    sieve[:2] = False
    for i in range(2, int(limit**0.5) + 1):
        if sieve[i]:
            sieve[i * i :: i] = False
    return tuple(int(p) for p in np.flatnonzero(sieve) if p > 1 << 20)


def toy_moduli(seed: int, count: int = 200, planted: int = 5):
    """``count`` semiprimes in which ``planted`` primes are each shared by exactly one pair."""
    rng = random.Random(seed)
    primes = rng.sample(toy_primes(), 2 * count)
    shared, fresh = primes[:planted], iter(primes[planted:])
    moduli = []
    for p in shared:
        moduli += [p * next(fresh), p * next(fresh)]
    while len(moduli) < count:
        moduli.append(next(fresh) * next(fresh))
    rng.shuffle(moduli)
    return [(f"fp{seed}-{i:03d}", n) for i, n in enumerate(moduli)]


def brute_force_pairs(moduli):
    """All-pairs gcd, written without the library's helpers."""
    out = set()
    for i in range(len(moduli)):
        for j in range(i + 1, len(moduli)):
            (fa, na), (fb, nb) = moduli[i], moduli[j]
            g = gcd(na, nb)
            if g > 1 and na != nb:
                out.add((min(fa, fb), max(fa, fb), g))
    return out


# --- synthetic probe results ---------------------------------------------------

from uasurvey.addressspace import AccessLevel, AddressSpaceSnapshot, NodeRecord  # noqa: E402
from uasurvey.client import ChannelProbe, ProbeResult, SessionProbe  # noqa: E402
from uasurvey.mock.config import MODES, TOKENS  # noqa: E402
from uasurvey.policies import policy_by_name  # noqa: E402
from uasurvey.targets import Target  # noqa: E402
from uasurvey.wire.binary import NodeId  # noqa: E402
from uasurvey.wire.structs import EndpointDescription, NodeClass, UserTokenPolicy  # noqa: E402

HOST = Target("10.0.0.1", 4840)


def policy_uri(policy):
    try:
        return policy_by_name(policy).uri
    except KeyError:
        return policy  # foreign URI, passed through verbatim


def endpoint(mode="None", policy="None", tokens=("Anonymous",), url=None, cert=b"", target=HOST):
    return EndpointDescription(
        endpoint_url=url or f"opc.tcp://{target}",
        server_certificate=cert,
        security_mode=MODES[mode],
        security_policy_uri=policy_uri(policy),
        user_identity_tokens=[UserTokenPolicy(t.lower(), TOKENS[t]) for t in tokens],
    )


def snapshot(variables=(), methods=(), namespaces=("http://opcfoundation.org/UA/",), truncated=False):
    """``variables`` are access-level ints (None: unread); ``methods`` executable flags."""
    snap = AddressSpaceSnapshot(namespace_array=list(namespaces), truncated=truncated)
    for i, level in enumerate(variables):
        snap.add(NodeRecord(NodeId(f"v{i}", 1), f"v{i}", NodeClass.VARIABLE, None if level is None else AccessLevel(level)))
    for i, ex in enumerate(methods):
        snap.add(NodeRecord(NodeId(f"m{i}", 1), f"m{i}", NodeClass.METHOD, executable=ex))
    return snap


def probe_result(endpoints=(), target=HOST, session=SessionProbe.NOT_ATTEMPTED, channel=ChannelProbe.NOT_ATTEMPTED, **kw):
    return ProbeResult(
        target=target,
        reached=True,
        endpoints=tuple(endpoints),
        session_probe=session,
        channel_probe=channel,
        **kw,
    )
