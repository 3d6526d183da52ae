"""
Reading order for layout-annotated pages.

Recursive XY-cut: split on vertical whitespace gutters (columns, left to right) first,
then on horizontal gaps (rows, top to bottom); leaves are sorted by top edge, then
left edge.
"""
import logging

logger = logging.getLogger(__name__)

DEFAULT_GUTTER_RATIO = 0.05


def _gaps(intervals, threshold):
    """Midpoints of the gaps wider than threshold between merged intervals."""
    intervals = sorted(intervals)
    merged = []
    for start, end in intervals:
        if merged and start < merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])

    cuts = []
    for (_, prev_end), (next_start, _) in zip(merged, merged[1:]):
        if next_start - prev_end > threshold:
            cuts.append((prev_end + next_start) / 2)
    return cuts


def _split(items, cuts, axis):
    groups = [[] for _ in range(len(cuts) + 1)]
    for item in items:
        x0, y0, x1, y1 = item[0]
        center = (x0 + x1) / 2 if axis == 0 else (y0 + y1) / 2
        index = sum(1 for cut in cuts if center >= cut)
        groups[index].append(item)
    return [g for g in groups if g]


def _leaf_key(item):
    (x0, y0, x1, y1), tie, _ = item
    return (y0, x0, y1, x1, tie)


def _x_cuts(items, threshold):
    return _gaps([(b[0], b[2]) for b, *_ in items], threshold)


def _xy_cut(items, x_threshold, y_threshold):
    if len(items) <= 1:
        return list(items)

    x_cuts = _x_cuts(items, x_threshold)
    if x_cuts:
        ordered = []
        for group in _split(items, x_cuts, axis=0):
            ordered.extend(_xy_cut(group, x_threshold, y_threshold))
        return ordered

    y_cuts = _gaps([(b[1], b[3]) for b, *_ in items], y_threshold)
    if not y_cuts:
        return sorted(items, key=_leaf_key)

    # Consecutive rows sharing a column gutter stay together, so a full-width
    # heading or footer does not slice the columns between them into rows.
    groups = []
    for band in _split(items, y_cuts, axis=1):
        if groups and _x_cuts(groups[-1] + band, x_threshold):
            groups[-1] = groups[-1] + band
        else:
            groups.append(band)

    ordered = []
    for group in groups:
        ordered.extend(_xy_cut(group, x_threshold, y_threshold))
    return ordered


def reading_order(boxes, page_width=None, gutter_ratio=DEFAULT_GUTTER_RATIO, tie_keys=None):
    """Return the indices of boxes in reading order.

    boxes are (x0, y0, x1, y1). tie_keys, one comparable per box, break ties between
    identical coordinates before falling back to input index, so the order does not
    depend on input order unless two elements are fully identical.
    """
    if not boxes:
        return []
    if page_width is None:
        page_width = max(b[2] for b in boxes)
    tie_keys = tie_keys or [()] * len(boxes)

    seen = set()
    for box in boxes:
        key = tuple(box)
        if key in seen:
            logger.warning("Identical layout boxes at %s, ordering by content", key)
        seen.add(key)

    items = [(tuple(box), tie_keys[i], i) for i, box in enumerate(boxes)]
    ordered = _xy_cut(items, x_threshold=page_width * gutter_ratio, y_threshold=0)
    return [index for _, _, index in ordered]
