import json
import logging
from datetime import datetime
from typing import Any, Optional

import redis
from redis.typing import EncodableT, FieldT

from .settings import HashBeamSettings

logger = logging.getLogger(__name__)


class RedisPublisher:
    """
    Pushes sweep progress onto a Redis stream so other systems can follow a run.

    Off unless PUBLISH_TO_REDIS is set. A missing URL, an unreachable server or a
    failed write only produces a warning; the simulation carries on either way.
    """

    def __init__(self, settings: HashBeamSettings | None = None, client: Any = None):
        self.settings = settings or HashBeamSettings()
        self._client: Optional[redis.Redis] = client
        if self._client is None and self.settings.publish_to_redis:
            self._client = self._connect()

    def _connect(self) -> Optional[redis.Redis]:
        url = self.settings.redis_url
        if not url:
            logger.warning("Warning: PUBLISH_TO_REDIS is set but REDIS_URL is empty")
            return None
        try:
            client = redis.from_url(url, decode_responses=True)
            client.ping()
        except Exception as e:
            logger.warning("Warning: could not connect to Redis at %s: %s", url, e)
            return None
        logger.info("Publishing sweep events to %s", url)
        return client

    def publish_event(
        self,
        event_type: str,
        payload: dict[str, Any],
        seed: int,
        stream_name: Optional[str] = None,
    ) -> None:
        """
        Append one event to the stream.

        Args:
            event_type: "sweep_point" or "sweep_complete"
            payload: JSON-serializable event data
            seed: master seed of the run the event belongs to
            stream_name: overrides REDIS_STREAM_NAME
        """
        stream = stream_name or self.settings.redis_stream_name
        fields: dict[FieldT, EncodableT] = {
            "event_type": event_type,
            "seed": str(seed),
            "published_at": datetime.now().isoformat(),
            "data": json.dumps(payload),
        }
        if self._client is None:
            logger.warning("Warning: dropping %s event, no Redis client", event_type)
            return
        try:
            entry_id = self._client.xadd(stream, fields)
        except Exception as e:
            logger.warning("Warning: failed to publish %s to '%s': %s", event_type, stream, e)
            return
        logger.debug("Published %s to '%s' as %s", event_type, stream, entry_id)

    def is_enabled(self) -> bool:
        return self._client is not None
