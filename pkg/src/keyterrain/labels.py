"""Address sets: exact IPs and CIDR prefixes with containment tests."""

from __future__ import annotations

import ipaddress
from typing import Iterable, Sequence

import numpy as np


class AddressSet:
    """A set of IP addresses and/or CIDR prefixes.

    Membership covers both exact addresses and prefix containment. Lookups
    are cached per queried string, so repeated evaluation over the same
    vertex universe stays cheap.
    """

    def __init__(self, entries: Iterable[str]):
        self.addresses: set[str] = set()
        self.networks: list = []
        self._cache: dict[str, bool] = {}
        for raw in entries:
            entry = raw.strip()
            if not entry:
                continue
            try:
                self.addresses.add(str(ipaddress.ip_address(entry)))
            except ValueError:
                self.networks.append(ipaddress.ip_network(entry, strict=False))

    def __contains__(self, ip: str) -> bool:
        try:
            return self._cache[ip]
        except KeyError:
            pass
        addr = ipaddress.ip_address(ip)
        result = str(addr) in self.addresses or any(addr in net for net in self.networks)
        self._cache[ip] = result
        return result

    def __len__(self) -> int:
        return len(self.addresses) + len(self.networks)

    def __bool__(self) -> bool:
        return len(self) > 0

    def mask(self, ips: Sequence[str]) -> np.ndarray:
        """Boolean membership array aligned with ``ips``."""
        return np.fromiter((ip in self for ip in ips), dtype=bool, count=len(ips))

    @classmethod
    def from_file(cls, path) -> "AddressSet":
        """Load one IP or CIDR per line; ``#`` starts a comment."""
        entries = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                text = line.split("#", 1)[0].strip()
                if text:
                    entries.append(text)
        return cls(entries)
