"""Heatmap rendering of map records."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .records import KIND_RANGE_DOPPLER, MapRecordView, read_map_record


def render_figure(record: MapRecordView, db_floor=None, axis_units="auto"):
    """Build the heatmap figure; returns (fig, ax, image).

    Delay (ns) or frame time (s) runs vertically, Doppler (Hz) runs
    horizontally, color is power in dB.
    """
    values = record.values_db
    if db_floor is not None:
        values = np.maximum(values, db_floor)
    if record.kind == KIND_RANGE_DOPPLER:
        row_axis = record.row_axis * 1e9
        row_label = "Delay (ns)"
    else:
        row_axis = record.row_axis
        row_label = "Time (s)"
    fig, ax = plt.subplots(figsize=(6, 4.5), dpi=110)
    extent = [record.col_axis[0], record.col_axis[-1],
              row_axis[0], row_axis[-1]]
    im = ax.imshow(values, origin="lower", aspect="auto", extent=extent,
                   cmap="viridis", interpolation="nearest")
    ax.set_xlabel("Doppler (Hz)")
    ax.set_ylabel(row_label)
    fig.colorbar(im, ax=ax, label="Power (dB)")
    fig.tight_layout()
    return fig, ax, im


def render_map(source, out_png, db_floor=None, index=0):
    """Read the index-th record from a path or stream and write a PNG."""
    if hasattr(source, "read"):
        stream = source
        close = False
    else:
        stream = open(source, "rb")
        close = True
    try:
        record = None
        for _ in range(index + 1):
            record = read_map_record(stream)
            if record is None:
                raise ValueError(f"stream holds fewer than {index + 1} records")
    finally:
        if close:
            stream.close()
    fig, ax, _ = render_figure(record, db_floor=db_floor)
    fig.savefig(out_png)
    plt.close(fig)
    return record


def data_to_pixel(record: MapRecordView, fig, ax, row, col):
    """Display pixel (x, y from the top-left of the saved PNG) of a cell."""
    if record.kind == KIND_RANGE_DOPPLER:
        y_data = record.row_axis[row] * 1e9
    else:
        y_data = record.row_axis[row]
    x_data = record.col_axis[col]
    x_disp, y_disp = ax.transData.transform((x_data, y_data))
    height = fig.canvas.get_width_height()[1]
    return x_disp, height - y_disp
