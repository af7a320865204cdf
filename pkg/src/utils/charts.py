"""
Plotly charts for run reports, written as standalone HTML files.
"""

import logging
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
import pandas as pd
import plotly.express as px
import plotly.graph_objects as go

logger = logging.getLogger(__name__)


def apply_chart_formatting(fig: go.Figure, title: str):
    """Centered title, consistent font"""
    fig.update_layout(title=dict(text=title, x=0.5, xanchor='center', font=dict(size=16)))


def create_shape_sweep_chart(phis_deg: Sequence[float], betas: np.ndarray,
                             title: str = "Inferred shape over viewing direction") -> go.Figure:
    """One line per shape coefficient against azimuth in degrees"""
    betas = np.asarray(betas)
    df = pd.DataFrame(betas, columns=[f"beta_{i}" for i in range(betas.shape[1])])
    df['azimuth_deg'] = list(phis_deg)
    long = df.melt(id_vars='azimuth_deg', var_name='coefficient', value_name='value')
    fig = px.line(long, x='azimuth_deg', y='value', color='coefficient')
    apply_chart_formatting(fig, title)
    fig.update_layout(xaxis_title="Azimuth (deg)", yaxis_title="Coefficient value")
    return fig


def create_sigma_bar_chart(sigma: Sequence[float], title: str = "Per-coefficient spread") -> go.Figure:
    fig = px.bar(x=[f"beta_{i}" for i in range(len(sigma))], y=list(sigma))
    apply_chart_formatting(fig, title)
    fig.update_layout(xaxis_title="Coefficient", yaxis_title="Std over sweep")
    return fig


def create_bench_chart(rows: List[Dict], title: str = "Inference speed by rendering resolution") -> go.Figure:
    df = pd.DataFrame(rows)
    fig = px.bar(df, x=df['resolution'].astype(str), y='fps', text='fps')
    fig.update_traces(texttemplate='%{text:.1f}')
    apply_chart_formatting(fig, title)
    fig.update_layout(xaxis_title="Feature map resolution", yaxis_title="Frames per second")
    return fig


def create_ablation_chart(rows: List[Dict], metric: str, title: str = None) -> go.Figure:
    df = pd.DataFrame(rows)
    fig = px.bar(df, x='variant', y=metric)
    apply_chart_formatting(fig, title or f"{metric} by variant")
    return fig


def save_chart(fig: go.Figure, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.write_html(str(path), include_plotlyjs='cdn')
    logger.info(f"Chart written to {path}")
    return path
