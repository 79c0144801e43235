"""Interoperability with the asyncua stack, in both directions."""

import socket
import subprocess
import sys
from pathlib import Path

import pytest

asyncua = pytest.importorskip("asyncua")

from asyncua.sync import Client, ThreadLoop  # noqa: E402
from cryptography.hazmat.primitives import serialization  # noqa: E402

from uasurvey.assessment import assess_host, summarize_access  # noqa: E402
from uasurvey.budget import ScanBudget  # noqa: E402
from uasurvey.client import ChannelProbe, ProbeConfig, SessionProbe, create_client_identity, probe  # noqa: E402
from uasurvey.mock.certgen import build_certificate, rsa_key  # noqa: E402
from uasurvey.mock.config import EndpointSpec, FixtureConfig, NodeSpec  # noqa: E402
from uasurvey.mock.server import serve  # noqa: E402
from uasurvey.targets import Target  # noqa: E402
from uasurvey.wire.structs import NodeClass  # noqa: E402

pytestmark = pytest.mark.interop

SERVER_SCRIPT = Path(__file__).parent / "interop" / "asyncua_server.py"
FAST = ScanBudget(inter_request_delay=0.0, max_duration_per_host=120)


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture(scope="module")
def reference_server(tmp_path_factory):
    d = tmp_path_factory.mktemp("asyncua")
    key = rsa_key(2048, slot=960)
    cert = d / "server.der"
    cert.write_bytes(build_certificate(key, "asyncua-ref", "SHA256", application_uri="urn:freeopcua:python:server", dns_names=("localhost",)))
    pem = d / "server.pem"
    pem.write_bytes(key.private_bytes(serialization.Encoding.PEM, serialization.PrivateFormat.PKCS8, serialization.NoEncryption()))
    port = _free_port()
    proc = subprocess.Popen(
        [sys.executable, str(SERVER_SCRIPT), str(port), str(cert), str(pem), "300"],
        stdout=subprocess.PIPE,
        stderr=subprocess.DEVNULL,
        text=True,
    )
    line = proc.stdout.readline()
    if line.strip() != "ready":
        proc.kill()
        pytest.skip("asyncua reference server did not start")
    yield Target("127.0.0.1", port)
    proc.kill()
    proc.wait()


@pytest.fixture(scope="module")
def reference_probe(reference_server):
    return probe(reference_server, FAST, ProbeConfig(identity=create_client_identity(), io_timeout=20))


class TestProbeAgainstAsyncua:
    def test_endpoints(self, reference_probe):
        assert reference_probe.reached
        policies = {e.security_policy_uri.rsplit("#", 1)[1] for e in reference_probe.endpoints}
        assert {"None", "Basic256Sha256", "Aes256_Sha256_RsaPss", "Aes128_Sha256_RsaOaep"} <= policies

    def test_certificate_channel(self, reference_probe):
        assert reference_probe.channel_probe is ChannelProbe.ACCEPTED

    def test_anonymous_session_and_traversal(self, reference_probe):
        r = reference_probe
        assert r.session_probe is SessionProbe.ANONYMOUS_ACCEPTED
        assert "http://example.org/plant" in r.address_space.namespace_array
        by_name = {n.browse_name: n for n in r.address_space.nodes.values()}
        assert by_name["m3InflowPerHour"].node_class is NodeClass.VARIABLE
        assert by_name["m3InflowPerHour"].access_level is not None
        assert int(by_name["rSetFillLevel"].access_level) & 0x02
        assert not int(by_name["m3InflowPerHour"].access_level) & 0x02
        assert summarize_access(r.address_space).node_count > 2

    def test_assessment(self, reference_probe):
        a = assess_host(reference_probe)
        assert a.certificate.signature_hash == "SHA256"
        assert "AnonymousAccess" in {k.value for k in a.kinds}


class TestAsyncuaAgainstMock:
    def test_browse_and_read(self):
        fx = FixtureConfig(
            endpoints=[EndpointSpec("None", "None", ["Anonymous"])],
            address_space=[NodeSpec("ns=1;s=Level", "Level", value=42)],
            namespaces=["http://example.org/mock"],
        )
        with serve(fx) as server, ThreadLoop() as tloop:
            client = Client(server.url, timeout=10, tloop=tloop)
            client.connect()
            try:
                names = [c.read_browse_name().Name for c in client.nodes.objects.get_children()]
                assert "Level" in names and "Server" in names
                assert client.get_node("ns=1;s=Level").read_value() == 42
                assert "http://example.org/mock" in client.get_namespace_array()
            finally:
                client.disconnect()

    def test_get_endpoints(self):
        fx = FixtureConfig(endpoints=[EndpointSpec("None", "None", ["Anonymous"]), EndpointSpec("SignAndEncrypt", "S2", ["Username"])])
        # an explicit loop: connect_and_get_server_endpoints never stops the client's own loop thread
        with serve(fx) as server, ThreadLoop() as tloop:
            client = Client(server.url, timeout=10, tloop=tloop)
            eps = client.connect_and_get_server_endpoints()
            assert [e.SecurityPolicyUri.rsplit("#", 1)[1] for e in eps] == ["None", "Basic256Sha256"]
            assert eps[1].ServerCertificate
