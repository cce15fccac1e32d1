"""Geographic user categories, in the canonical order used for arrays."""

CATEGORIES = ("urban", "suburban", "rural")
URBAN, SUBURBAN, RURAL = range(3)
CATEGORY_INDEX = {name: i for i, name in enumerate(CATEGORIES)}


def category_index(name: str) -> int:
    try:
        return CATEGORY_INDEX[name]
    except KeyError:
        raise ValueError(f"unknown category {name!r}") from None
