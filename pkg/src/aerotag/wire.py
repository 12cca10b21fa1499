"""Optional MQTT 3.1.1 wire mode for published messages.

The default pipeline delivers serialized messages over an in-process queue;
this adapter mirrors the same bytes to an external broker at QoS 1. paho-mqtt
is an optional dependency (`pip install aerotag[mqtt]`); a pre-built client
can be injected instead, which is also how the tests exercise this path.
"""

from __future__ import annotations

from urllib.parse import urlparse

from .errors import ConfigError

DEFAULT_MQTT_PORT = 1883
QOS_AT_LEAST_ONCE = 1


def parse_broker_uri(uri: str) -> tuple[str, int]:
    parsed = urlparse(uri)
    if parsed.scheme != "mqtt" or not parsed.hostname:
        raise ConfigError(f"broker URI must look like mqtt://host[:port], got {uri!r}")
    return parsed.hostname, parsed.port or DEFAULT_MQTT_PORT


class MqttPublisher:
    """Publishes payload bytes to topic at QoS 1 over MQTT 3.1.1."""

    def __init__(self, broker_uri: str, client=None, client_id: str = "aerotag-sim"):
        self.host, self.port = parse_broker_uri(broker_uri)
        if client is None:
            try:
                import paho.mqtt.client as mqtt
            except ImportError:
                raise ConfigError(
                    "wire mode needs paho-mqtt; install the [mqtt] extra or inject a client"
                ) from None
            client = mqtt.Client(client_id=client_id, protocol=mqtt.MQTTv311)
        self._client = client
        self._connected = False

    def publish(self, topic: str, payload: bytes) -> None:
        if not self._connected:
            self._client.connect(self.host, self.port)
            self._connected = True
        self._client.publish(topic, payload, qos=QOS_AT_LEAST_ONCE)

    def close(self) -> None:
        if self._connected:
            self._client.disconnect()
            self._connected = False
