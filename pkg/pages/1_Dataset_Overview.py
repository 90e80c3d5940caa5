"""
Dataset Overview Page - Releases, Instance Counts and Defect Ratios
"""
import os
from pathlib import Path

import streamlit as st

try:
    from src.utils.dataset import describe_repository
    from src.utils.charts import create_defect_ratio_chart
    from src.components.ui_components import render_repository_loader, render_welcome_screen
except ImportError as e:
    st.error(f"Import error: {e}")
    st.error(f"Current working directory: {os.getcwd()}")
    st.error(f"Files in current dir: {list(Path('.').glob('**/*.py'))}")
    st.stop()

st.set_page_config(page_title="Dataset Overview", layout="wide")


def main():
    st.title("Dataset Overview")
    st.markdown("Releases available as training and target data")
    st.markdown("---")

    repo = render_repository_loader()
    if repo is None:
        render_welcome_screen()
        return

    summary = describe_repository(repo)

    col1, col2, col3, col4 = st.columns(4)
    with col1:
        st.metric("Releases", len(repo))
    with col2:
        st.metric("Projects", len(repo.projects))
    with col3:
        st.metric("Instances", f"{repo.n_instances:,}")
    with col4:
        defects = int(summary["#Defects"].sum())
        st.metric("Defective", f"{100 * defects / repo.n_instances:.1f}%")

    if len(repo.projects) < 2:
        st.warning("Cross-project prediction needs releases from at least two projects.")

    tab1, tab2 = st.tabs(["Defect Ratios", "Release Table"])
    with tab1:
        st.plotly_chart(create_defect_ratio_chart(summary), use_container_width=True)
    with tab2:
        st.dataframe(summary, use_container_width=True, hide_index=True)
        st.download_button("Download CSV", summary.to_csv(index=False), file_name="releases.csv")


if __name__ == "__main__":
    main()
