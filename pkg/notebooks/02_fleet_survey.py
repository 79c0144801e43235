"""
Surveying a synthetic fleet
===========================

Forty mock servers with planted misconfigurations, one campaign, and the
aggregate tables a survey report is built from.
"""

# %%
import random

from uasurvey.mock.config import CertSpec, EndpointSpec, FixtureConfig

rng = random.Random(4)
configs = []
for i in range(40):
    kind = rng.choice(["none", "deprecated", "weak", "good"])
    tokens = ["Anonymous"] if rng.random() < 0.4 else ["Username"]
    if kind == "none":
        endpoints = [EndpointSpec("None", "None", tokens)]
    elif kind == "deprecated":
        endpoints = [EndpointSpec("Sign", "D2", tokens)]
    else:
        endpoints = [EndpointSpec("SignAndEncrypt", "S2", tokens)]
    cert = CertSpec(hash="SHA1" if kind in ("deprecated", "weak") else "SHA256", common_name=f"plc-{i}", key_slot=i % 3)
    configs.append(FixtureConfig(endpoints=endpoints, certificate=cert, application_uri=f"urn:{rng.choice(['siemens', 'wago', 'example'])}:{i}"))

# %%
# One campaign over the whole fleet.
from uasurvey.budget import ScanBudget
from uasurvey.mock.server import fleet, stop_all
from uasurvey.orchestrator import run_campaign
from uasurvey.targets import Target

servers = fleet(configs)
try:
    targets = [(Target(s.host, s.port), f"AS{64500 + i % 4}") for i, s in enumerate(servers)]
    snap = run_campaign(targets, budget=ScanBudget(inter_request_delay=0.0))
finally:
    stop_all(servers)
print(len(snap.records), "hosts probed")

# %%
# Aggregate and render.
from uasurvey.assessment import aggregate_fleet
from uasurvey.report import render_fleet_report

agg = aggregate_fleet(snap.assessments())
print("deficit rate: %.2f" % agg.deficit_rate)
print(render_fleet_report(agg))

# %%
# Anonymization replaces addresses, names and AS labels with stable
# pseudonyms.  The per-AS breakdown is then keyed by pseudonym, while the
# fleet-wide counts stay the same.
from uasurvey.report import AnonymizationMap, anonymize, fleet_report_for

mapping = AnonymizationMap()
records = anonymize(snap, mapping)
print(records[0]["target"], records[0]["as_label"])
anon = fleet_report_for(snap, mapping)
print(anon.deficits == agg.deficits, anon.deficit_rate == agg.deficit_rate)
print(sorted({label for _, label in anon.deficits_by_as}))
