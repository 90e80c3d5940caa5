"""
TDS Simplification Page - Release Distances and Simplified Training Sets
"""
import os
from pathlib import Path

import streamlit as st

try:
    from src.errors import TDSError
    from src.utils.classifiers import ModelKind, predict_scores, train
    from src.utils.dataset import candidate_pool
    from src.utils.metrics import evaluate
    from src.utils.simplify import release_distances, simplify
    from src.utils.charts import create_tds_composition_chart
    from src.components.ui_components import (
        render_measure_panel,
        render_repository_loader,
        render_simplification_controls,
        render_welcome_screen,
    )
except ImportError as e:
    st.error(f"Import error: {e}")
    st.error(f"Current working directory: {os.getcwd()}")
    st.error(f"Files in current dir: {list(Path('.').glob('**/*.py'))}")
    st.stop()

st.set_page_config(page_title="TDS Simplification", layout="wide")


def main():
    st.title("TDS Simplification")
    st.markdown("Build the simplified training set of one target release")
    st.markdown("---")

    repo = render_repository_loader()
    if repo is None:
        render_welcome_screen()
        return

    controls = render_simplification_controls(repo)
    classifier = st.sidebar.selectbox("Evaluate with", list(ModelKind), format_func=lambda c: c.value)

    if controls["run"]:
        target = next(release for release in repo if release.name == controls["target"])
        with st.spinner(f"Simplifying training data for {target.name}..."):
            try:
                pool = candidate_pool(repo, target)
                tds = simplify(pool, target, controls["strategy"], r=controls["r"], k=controls["k"])
                model = train(classifier, tds)
                _, measures = evaluate(predict_scores(model, target.metrics), target.labels, tds, target)
            except TDSError as e:
                st.error(f"Simplification failed: {e.message}")
                return
            st.session_state.simplification = {
                "target": target.name,
                "tds": tds,
                "distances": release_distances(pool, target),
                "measures": measures,
                "classifier": classifier.value,
            }

    if "simplification" not in st.session_state:
        st.info("Choose a target and strategy, then click 'Simplify'.")
        return

    result = st.session_state.simplification
    tds = result["tds"]
    st.success(f"{tds.strategy.value} for **{result['target']}**: {len(tds)} instances, "
               f"{100 * tds.defect_ratio:.1f}% defective")

    st.subheader(f"Prediction on the target ({result['classifier']})")
    render_measure_panel(result["measures"])

    tab1, tab2, tab3 = st.tabs(["Composition", "Release Distances", "Instances"])
    with tab1:
        st.plotly_chart(create_tds_composition_chart(tds.composition(), result["distances"]),
                        use_container_width=True)
    with tab2:
        st.dataframe(result["distances"], use_container_width=True, hide_index=True)
    with tab3:
        st.dataframe(tds.to_frame(), use_container_width=True, hide_index=True)


if __name__ == "__main__":
    main()
