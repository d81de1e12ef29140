import re

_CHUNK = re.compile(r"[^\W_]+")
_PARTS = re.compile(r"[A-Z]+(?![a-z])|[A-Z]?[a-z]+|\d+|[^\W\dA-Za-z_]+")


def split_words(text: str) -> list[str]:
    """Lowercased words, splitting on non-alphanumerics and camelCase humps.

    >>> split_words("wifiSettings_2")
    ['wifi', 'settings', '2']
    """
    words = []
    for chunk in _CHUNK.findall(text or ""):
        parts = _PARTS.findall(chunk)
        words.extend(p.lower() for p in (parts or [chunk]))
    return words
