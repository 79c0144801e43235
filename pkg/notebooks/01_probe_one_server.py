"""
Probing a single OPC UA server
==============================

Stand up an in-process mock server, look at what goes over the wire, and
run the scanner's probe against it.
"""

# %%
# The wire codec: every message type encodes to bytes and decodes back.
from uasurvey.wire.services import Service, decode_service_message, encode_service_request
from uasurvey.wire.structs import GetEndpointsRequest, RequestHeader

req = GetEndpointsRequest(RequestHeader(request_handle=1), "opc.tcp://127.0.0.1:4840")
data = encode_service_request(Service.GET_ENDPOINTS, req)
print(len(data), "bytes:", data[:24].hex(" "))
print(decode_service_message(data).body == req)

# %%
# A fixture: one unsecured endpoint plus a Basic256Sha256 one whose
# certificate is signed with SHA-1, a small address space, anonymous login.
from uasurvey.mock.config import CertSpec, EndpointSpec, FixtureConfig, NodeSpec

fixture = FixtureConfig(
    endpoints=[
        EndpointSpec("None", "None", ["Anonymous", "Username"]),
        EndpointSpec("SignAndEncrypt", "S2", ["Username"]),
    ],
    certificate=CertSpec(hash="SHA1", common_name="demo-plc"),
    namespaces=["http://PLCopen.org/OpcUa/IEC61131-3/"],
    address_space=[
        NodeSpec("ns=1;s=Pump", "Pump", "Object"),
        NodeSpec("ns=1;s=Flow", "Flow", parent="ns=1;s=Pump", access_level=1, value=12.5),
        NodeSpec("ns=1;s=Setpoint", "Setpoint", parent="ns=1;s=Pump", access_level=3, value=40),
        NodeSpec("ns=1;s=Start", "Start", "Method", parent="ns=1;s=Pump"),
    ],
    application_uri="urn:beckhoff:demo",
)

# %%
# Probe it.  The budget here is loopback-friendly; real scans keep the
# default 500 ms between requests.
from uasurvey.budget import ScanBudget
from uasurvey.client import probe
from uasurvey.mock.server import serve
from uasurvey.targets import Target

with serve(fixture) as server:
    result = probe(Target(server.host, server.port), ScanBudget(inter_request_delay=0.01))
    server.log.settle()
    services = server.log.services()

print("reached:", result.reached)
print("channel:", result.channel_probe.value, " session:", result.session_probe.value)
print("requests seen by the server:", services)

# %%
# Assess the host.
from uasurvey.assessment import assess_host

a = assess_host(result)
print("modes:", a.modes, " policies:", a.policies)
print("findings:", sorted(k.value for k in a.kinds))
print("certificate:", a.certificate.signature_hash, a.certificate.key_length_bits)
print("outcome:", a.outcome.value, " manufacturer:", a.manufacturer)
print("readable %.2f  writable %.2f" % (a.access.readable_fraction, a.access.writable_fraction))
