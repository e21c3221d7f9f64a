import typing


class OneOf(typing.NamedTuple):
    values: tuple[str, ...]


class ListOf(typing.NamedTuple):
    item: type
    length: int | None = None


FieldType = type | OneOf | ListOf
Schema = dict[str, FieldType]


def lint(
    document: typing.Any,
    schema: Schema,
    required: typing.Collection[str] = (),
) -> str | None:
    """Type-check a decoded YAML mapping; returns the first issue or None."""
    try:
        _lint(document, schema, required)
    except RuntimeError as e:
        return typing.cast(str, e.args[0])
    return None


def _name(value: typing.Any) -> str:
    return type(value).__name__


def _matches(value: typing.Any, expected: type) -> bool:
    if expected is float:  # type coercion
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if expected is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, expected)


def _lint(
    document: typing.Any, schema: Schema, required: typing.Collection[str]
) -> None:
    if not isinstance(document, dict):
        raise RuntimeError(f"document must be a mapping, not {_name(document)!r}")

    for key in required:
        if key not in document:
            raise RuntimeError(f"missing field: {key!r}")

    for key, value in document.items():
        if key not in schema:
            raise RuntimeError(f"unknown field: {key!r}")
        expected = schema[key]
        match expected:
            case OneOf(values):
                if value not in values:
                    raise RuntimeError(
                        f"field {key!r} has invalid value {value!r}, "
                        f"expected one of {values}"
                    )
            case ListOf(item, length):
                if not isinstance(value, list):
                    raise RuntimeError(
                        f"field {key!r} has incorrect type, got {_name(value)!r}, "
                        f"expected 'list'"
                    )
                if length is not None and len(value) != length:
                    raise RuntimeError(
                        f"field {key!r} has incorrect length, "
                        f"got {len(value)}, expected {length}"
                    )
                for entry in value:
                    if not _matches(entry, item):
                        raise RuntimeError(
                            f"field {key!r} has incorrect item type, "
                            f"got {_name(entry)!r}, expected {item.__name__!r}"
                        )
            case type():
                if not _matches(value, expected):
                    raise RuntimeError(
                        f"field {key!r} has incorrect type, got {_name(value)!r}, "
                        f"expected {expected.__name__!r}"
                    )
            case _:
                raise RuntimeError(f"unknown schema entry: {expected!r}")
