"""
Tracking certificate renewals between snapshots
===============================================

Scan a fleet twice, renew one certificate with a weaker hash in between,
and diff the two snapshots.
"""

# %%
from uasurvey.budget import ScanBudget
from uasurvey.mock.config import CertSpec, EndpointSpec, FixtureConfig
from uasurvey.mock.server import fleet, stop_all
from uasurvey.orchestrator import diff_snapshots, run_campaign
from uasurvey.targets import Target


def fixture(hash_name, version, slot):
    return FixtureConfig(
        endpoints=[EndpointSpec("None", "None", ["Anonymous"]), EndpointSpec("Sign", "S2", ["Username"])],
        certificate=CertSpec(hash=hash_name, common_name="line-3-plc", key_slot=slot),
        software_version=version,
    )


def campaign(config, snapshot_id):
    servers = fleet([config])
    try:
        snap = run_campaign([Target(servers[0].host, servers[0].port)], budget=ScanBudget(inter_request_delay=0.0), snapshot_id=snapshot_id)
    finally:
        stop_all(servers)
    return snap, str(servers[0].address)


# %%
# Before: SHA-256 certificate, firmware 2.0.  After: a new SHA-1
# certificate shipped with firmware 2.1.
old, old_target = campaign(fixture("SHA256", "2.0", 1), "spring")
new, new_target = campaign(fixture("SHA1", "2.1", 2), "autumn")

# %%
# Ports may differ between the runs; an identity map ties them together.
identity = {old_target: "line-3-plc", new_target: "line-3-plc"}
for event in diff_snapshots(old, new, identity).to_dicts():
    print(event)
