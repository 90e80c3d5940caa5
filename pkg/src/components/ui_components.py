"""
Reusable Streamlit UI components
"""
import os
from typing import Any, Dict, List, Optional

import streamlit as st

from src.config import DATA_DIR_ENV, DEFAULT_K
from src.errors import TDSError
from src.utils.dataset import Repository, load_repository, load_schema
from src.utils.metrics import MeasureSet
from src.utils.simplify import Strategy


def render_repository_loader() -> Optional[Repository]:
    """
    Sidebar form that loads a release directory into session state

    Returns:
        The loaded repository, or None when nothing is loaded yet
    """
    st.sidebar.header("Repository")
    directory = st.sidebar.text_input(
        "Release directory",
        value=st.session_state.get("repo_dir", os.environ.get(DATA_DIR_ENV, "")),
        help="Folder of PROMISE-style CSV files, one per release",
    )
    clamp = st.sidebar.checkbox("Clamp negative metrics", value=False)

    if st.sidebar.button("Load", type="primary") and directory:
        with st.spinner(f"Loading releases from {directory}..."):
            try:
                st.session_state.repository = load_repository(directory, load_schema("builtin:promise20"),
                                                              clamp_negative=clamp)
                st.session_state.repo_dir = directory
            except TDSError as e:
                st.error(f"Could not load repository: {e.message}")
                if e.hint:
                    st.info(e.hint)
                return None
    return st.session_state.get("repository")


def render_simplification_controls(repo: Repository) -> Dict[str, Any]:
    """
    Sidebar controls for one simplification run

    Returns:
        Dictionary with target, strategy, r, k and run flag
    """
    st.sidebar.subheader("Simplification")
    names = [release.name for release in repo]
    target = st.sidebar.selectbox("Target release", names)
    choices: List[Strategy] = [s for s in Strategy if s is not Strategy.RITDS_RHO]
    strategy = st.sidebar.selectbox("Strategy", choices, index=choices.index(Strategy.RITDS2),
                                    format_func=lambda s: s.value)
    r = st.sidebar.slider("r (releases)", 1, 3, 1)
    k = st.sidebar.slider("k (neighbours)", 1, 30, DEFAULT_K)
    run = st.sidebar.button("Simplify", type="primary")
    return {"target": target, "strategy": strategy, "r": r, "k": k, "run": run}


def render_measure_panel(measures: MeasureSet) -> None:
    """Show the headline measures of one evaluation in columns"""
    values = measures.to_dict()
    shown = ["prec", "pd", "pf", "f_measure", "g_measure", "auc"]
    for col, name in zip(st.columns(len(shown)), shown):
        with col:
            value = values[name]
            st.metric(name.replace("_", "-"), "n/a" if value is None else f"{value:.3f}")


def render_welcome_screen() -> None:
    """Render the welcome screen when no repository is loaded"""
    st.info("Enter a release directory in the sidebar and click 'Load' to get started!")

    st.subheader("Expected Input:")
    st.markdown("""
    - **One CSV per release**, e.g. `ant-1.7.csv`
    - **20 code metrics** (WMC ... LOC) and a `bug` count column
    - Project and version from `name`/`version` columns or the file name
    """)
