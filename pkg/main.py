"""
Defect Prediction Workbench - Main Homepage
"""
import streamlit as st

# Page configuration
st.set_page_config(
    page_title="Defect Prediction Workbench",
    layout="wide",
    initial_sidebar_state="expanded"
)


def main():
    """Main homepage"""

    st.title("Defect Prediction Workbench")
    st.markdown("**Training Data Simplification for Cross-Project Defect Prediction**")
    st.markdown("---")

    col1, col2 = st.columns([2, 1])

    with col1:
        st.markdown("""
        ## Simplify Training Data Before You Predict

        Cross-project prediction trains on releases of other projects. This workbench
        shrinks that training data at two levels of granularity: first the releases
        closest to the target, then the instances closest to it.

        ### Pages:
        - **Dataset Overview**: Releases, instance counts and defect ratios
        - **TDS Simplification**: Release distances and the simplified training set of a target
        - **Filter Selection**: Experiment summaries and the DPR threshold between the two filters
        """)

        st.subheader("Quick Start")

        col_a, col_b, col_c = st.columns(3)
        with col_a:
            if st.button("Dataset Overview", use_container_width=True):
                st.switch_page("pages/1_Dataset_Overview.py")
        with col_b:
            if st.button("Simplify Training Data", use_container_width=True):
                st.switch_page("pages/2_TDS_Simplification.py")
        with col_c:
            if st.button("Filter Selection", use_container_width=True):
                st.switch_page("pages/3_Filter_Selection.py")

    with col2:
        st.subheader("Strategies")
        st.markdown("""
        - **none**: every release of the other projects
        - **rTDS**: the r nearest releases
        - **iTDS**: the k nearest instances of each target instance
        - **riTDS-1**: rTDS, then a test-set-driven filter
        - **riTDS-2**: rTDS, then a training-set-driven filter
        - **riTDS-rho**: riTDS-1 or riTDS-2, chosen by the DPR threshold
        """)
        st.markdown("---")
        st.caption("Run full experiments from the command line: `python cli.py experiment --help`")


if __name__ == "__main__":
    main()
