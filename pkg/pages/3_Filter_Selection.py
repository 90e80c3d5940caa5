"""
Filter Selection Page - Experiment Summaries and the DPR Threshold
"""
import os
from pathlib import Path

import streamlit as st

try:
    from src.errors import TDSError
    from src.utils.harness import RHO_MEASURES, fit_rules, load_records, rho_pairs, summarize
    from src.utils.selector import Assumption, rho_curve
    from src.utils.charts import create_measure_comparison_chart, create_rho_curve_chart
except ImportError as e:
    st.error(f"Import error: {e}")
    st.error(f"Current working directory: {os.getcwd()}")
    st.error(f"Files in current dir: {list(Path('.').glob('**/*.py'))}")
    st.stop()

st.set_page_config(page_title="Filter Selection", layout="wide")


def main():
    st.title("Filter Selection")
    st.markdown("Experiment summaries and the DPR rule choosing between riTDS-1 and riTDS-2")
    st.markdown("---")

    st.sidebar.header("Experiment Output")
    records_path = st.sidebar.text_input("records.jsonl", value=st.session_state.get("records_path", ""))
    measure = st.sidebar.selectbox("Grouping measure", RHO_MEASURES)

    if st.sidebar.button("Load Records", type="primary") and records_path:
        try:
            st.session_state.records = load_records(records_path)
            st.session_state.records_path = records_path
        except TDSError as e:
            st.error(f"Could not read records: {e.message}")
            return

    if "records" not in st.session_state:
        st.warning("No experiment records loaded. Run `python cli.py experiment` and load its records.jsonl.")
        if st.button("Go to Homepage", use_container_width=True):
            st.switch_page("main.py")
        return

    records = st.session_state.records
    tables = summarize(records)
    summary = tables["summary"]

    tab1, tab2, tab3 = st.tabs(["Summary", "Threshold Sweep", "Significance"])

    with tab1:
        columns = [c for c in summary.columns if c.startswith("mean_")]
        column = st.selectbox("Measure", columns, index=columns.index("mean_f_measure"))
        st.plotly_chart(create_measure_comparison_chart(summary, column), use_container_width=True)
        st.dataframe(summary, use_container_width=True, hide_index=True)

    with tab2:
        rules = fit_rules(records, measure)
        if not rules:
            st.warning("No classifier has enough riTDS-1 / riTDS-2 pairs to fit a threshold.")
        for kind, rule in rules.items():
            pairs = rho_pairs(records, kind, measure)
            curves = {a.value: rho_curve(pairs, a) for a in Assumption}
            st.markdown(f"**{kind.value}**: riTDS-1 when {rule.describe()} "
                        f"(accuracy {rule.accuracy:.3f} over {rule.n_pairs} predictions)")
            st.plotly_chart(create_rho_curve_chart(curves, rule), use_container_width=True)
        if not tables["rules"].empty:
            st.dataframe(tables["rules"], use_container_width=True, hide_index=True)

    with tab3:
        if tables["wilcoxon"].empty:
            st.info("Significance tests need iTDS and riTDS records.")
        else:
            st.dataframe(tables["wilcoxon"], use_container_width=True, hide_index=True)


if __name__ == "__main__":
    main()
