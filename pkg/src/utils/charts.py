"""
Chart creation for repositories, simplified training sets and filter selection
"""
from typing import Dict, Optional, Sequence

import pandas as pd
import plotly.graph_objects as go
from plotly.subplots import make_subplots

from src.utils.selector import RhoRule


def create_defect_ratio_chart(summary: pd.DataFrame) -> go.Figure:
    """
    Bar chart of the defect percentage of every release

    Args:
        summary: Output of describe_repository

    Returns:
        Plotly figure object
    """
    fig = go.Figure()
    fig.add_trace(
        go.Bar(
            x=summary["Release"],
            y=summary["%Defects"],
            name="% defective",
            marker_color="indianred",
            customdata=summary[["#Instances", "#Defects"]],
            hovertemplate="%{x}<br>%{y:.1f}% defective<br>%{customdata[1]} of %{customdata[0]}<extra></extra>",
        )
    )
    fig.update_layout(
        title="Defective Instances per Release",
        xaxis_title="Release",
        yaxis_title="Defective (%)",
        template="plotly_white",
        height=450,
    )
    return fig


def create_tds_composition_chart(composition: pd.DataFrame,
                                 distances: Optional[pd.DataFrame] = None) -> go.Figure:
    """
    Instances contributed by each source release, stacked by label

    Args:
        composition: Output of SimplifiedTDS.composition
        distances: Optional release distances, drawn on a second panel

    Returns:
        Plotly figure object
    """
    names = composition["project"] + "-" + composition["version"]
    rows = 2 if distances is not None else 1
    fig = make_subplots(
        rows=rows, cols=1,
        vertical_spacing=0.15,
        subplot_titles=("Selected Instances", "Release Distance to Target")[:rows],
    )
    fig.add_trace(go.Bar(x=names, y=composition["instances"] - composition["buggy"],
                         name="Clean", marker_color="steelblue"), row=1, col=1)
    fig.add_trace(go.Bar(x=names, y=composition["buggy"],
                         name="Buggy", marker_color="indianred"), row=1, col=1)

    if distances is not None:
        fig.add_trace(
            go.Bar(
                x=distances["project"] + "-" + distances["version"],
                y=distances["distance"],
                name="Distance",
                marker_color="gray",
                opacity=0.7,
            ),
            row=2, col=1,
        )

    fig.update_layout(barmode="stack", template="plotly_white", height=400 * rows)
    return fig


def create_rho_curve_chart(curves: Dict[str, pd.DataFrame], rule: Optional[RhoRule] = None) -> go.Figure:
    """
    Recommendation accuracy against the DPR threshold

    Args:
        curves: Assumption name to rho_curve output
        rule: Fitted rule whose thresholds are marked

    Returns:
        Plotly figure object
    """
    fig = go.Figure()
    colors = {"rho_plus": "green", "rho_minus": "orange"}
    for name, curve in curves.items():
        fig.add_trace(
            go.Scatter(
                x=curve["rho"],
                y=curve["accuracy"],
                mode="lines",
                name=name,
                line=dict(color=colors.get(name, "purple"), width=2),
            )
        )
    if rule is not None:
        for value in (rule.rho_plus, rule.rho_minus):
            if value is not None:
                fig.add_vline(x=value, line_dash="dash", line_color="gray",
                              annotation_text=f"rho = {value:.2f}")
    fig.update_layout(
        title=f"Recommendation Accuracy{f' ({rule.classifier})' if rule and rule.classifier else ''}",
        xaxis_title="DPR threshold",
        yaxis_title="Accuracy",
        yaxis=dict(range=[0, 1]),
        template="plotly_white",
        height=400,
    )
    return fig


def create_measure_comparison_chart(summary: pd.DataFrame, measure: str = "mean_f_measure",
                                    strategies: Optional[Sequence[str]] = None) -> go.Figure:
    """
    Grouped bars of a mean measure per strategy and classifier

    Args:
        summary: The "summary" table of harness.summarize
        measure: Column to plot
        strategies: Strategies to include, all when None

    Returns:
        Plotly figure object
    """
    data = summary if strategies is None else summary[summary["strategy"].isin(strategies)]
    labels = data["strategy"] + data["r"].map(lambda r: f" r={r}" if r else "")
    fig = go.Figure()
    for classifier in data["classifier"].unique():
        mask = data["classifier"] == classifier
        fig.add_trace(go.Bar(x=labels[mask], y=data.loc[mask, measure], name=classifier))
    fig.update_layout(
        title=measure.replace("mean_", "Mean ").replace("_", "-"),
        barmode="group",
        template="plotly_white",
        height=450,
    )
    return fig
