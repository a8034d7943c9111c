from collections.abc import MutableMapping
from typing import Dict, Generic, Iterator, TypeVar

K = TypeVar("K")
V = TypeVar("V")


class InvertableDict(MutableMapping, Generic[K, V]):
    """A bijective mapping that behaves like a dict.

    Used for codes that must be looked up in both directions, e.g. layer kinds
    and their checkpoint tags.  Invert the dict using the `inv` property.
    """

    def __init__(self, *args, **kwargs):
        self._forward: Dict[K, V] = dict(*args, **kwargs)
        self._backward: Dict[V, K] = {}
        for key, value in self._forward.items():
            if value in self._backward:
                raise ValueError(f"Duplicate value found: {value}")
            self._backward[value] = key

    def __getitem__(self, key: K) -> V:
        return self._forward[key]

    def __setitem__(self, key: K, value: V) -> None:
        if value in self._backward and self._backward[value] != key:
            raise ValueError(f"Duplicate value found: {value}")
        if key in self._forward:
            del self._backward[self._forward[key]]
        self._forward[key] = value
        self._backward[value] = key

    def __delitem__(self, key: K) -> None:
        value = self._forward.pop(key)
        del self._backward[value]

    def __iter__(self) -> Iterator[K]:
        return iter(self._forward)

    def __len__(self) -> int:
        return len(self._forward)

    def __repr__(self) -> str:
        return repr(self._forward)

    def __contains__(self, key: object) -> bool:
        return key in self._forward

    @property
    def inv(self) -> Dict[V, K]:
        return self._backward

    def lookup(self, value: V) -> K:
        """Reverse lookup that raises KeyError naming the missing value."""
        try:
            return self._backward[value]
        except KeyError:
            raise KeyError(f"Unknown value: {value!r}") from None
