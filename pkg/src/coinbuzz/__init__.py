"""coinbuzz: social-media chatter volume vs. cryptocurrency market metrics.

Ingests tweet captures and IRC channel logs, normalizes them into a shared
message record, aggregates daily message counts per stream, flags likely
collection outages, and correlates the counts against Bitcoin price and
USD-exchange trading volume.
"""

__version__ = "0.1.0"

from coinbuzz.message import Message

__all__ = ["Message", "__version__"]
