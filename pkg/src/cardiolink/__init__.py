"""Cardiogenomic risk stratification pipeline.

Cohort ingestion, variant QC, GWAS-driven SNP curation, three-tier
stratification, TF-IDF/ECG feature fusion, risk clustering with
pseudo-labels, chain-of-thought prompt datasets, and semantic evaluation of
model completions, all validated against a built-in cohort simulator.
"""

from .cohort import (Cohort, EcgFeatures, Participant, Tier, VariantCall,
                     join_cohort, load_cohort, parse_conditions_csv,
                     parse_participant_json, serialize_participant)
from .cluster import (ClusterAssignment, RiskClusterer, annotate_and_pseudo_label,
                      kmeans, select_k)
from .errors import (CardiolinkError, ConfigError, ParseError, QcError,
                     StatusError, TransportError, ValidationError)
from .evaluate import EvalReport, Metrics, Prediction, evaluate, read_completions, render_report
from .gwas import (ConditionSnpMap, GwasAssociation, build_condition_map,
                   fetch_catalog, filter_significant, parse_catalog_tsv)
from .pipeline import PipelineConfig, run_pipeline
from .prompts import PromptRecord, PromptTemplate, render_prompt, stratified_split
from .qc import AlleleStats, QcConfig, QcReport, allele_stats, apply_qc, hwe_chi_square
from .semantics import (Embedding, HashingEmbedder, SidecarEmbedder, best_label,
                        cosine, semantic_match)
from .simulate import (GroundTruth, PlantedEffect, PlantedGroup, SimConfig,
                       mendelian_child, simulate_cohort)
from .tiering import TierAssigner, TierLexicon, assign_tier, assign_tiers
from .vectorize import (CohortVectorizer, FeatureVector, SparseVector, Vocabulary,
                        build_vocabulary, fuse_features, tfidf_vector)

__version__ = "0.1.0"
